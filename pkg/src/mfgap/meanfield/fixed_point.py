"""
Self-consistent invariant measure

Phi(nu) = exp(-V - W * nu) / Z'. Its fixed point nu_inf is the stationary
state of the McKean-Vlasov flow; under gamma0 < 1 the map contracts in W1 with
factor at most gamma0.
"""

import logging
from typing import NamedTuple

import numpy as np

from mfgap.errors import NoConvergence
from mfgap.meanfield.functionals import interaction_convolution
from mfgap.meanfield.grid import LEAK_THRESHOLD, Grid, GridMeasure, boltzmann, reference_measure, tilted_measure
from mfgap.meanfield.transport import wasserstein1_1d
from mfgap.potentials.models import MeanFieldModel

logger = logging.getLogger(__name__)

FACTOR_FLOOR = 1e-12
DUPLICATE_W1 = 1e-6


class InvariantResult(NamedTuple):
    measure: GridMeasure
    iterations: int
    residual: float  # || Phi(nu) - nu ||_1
    factors: tuple[float, ...]  # W1(nu_{k+1}, nu_k) / W1(nu_k, nu_{k-1})
    steps: tuple[float, ...]  # W1(nu_{k+1}, nu_k)
    converged: bool
    certified: bool
    start: str = "reference"


def phi_map(model: MeanFieldModel, nu: GridMeasure, leak_threshold: float | None = LEAK_THRESHOLD) -> GridMeasure:
    """Boltzmann measure of the effective potential V + W * nu"""
    x = model.as_points(nu.centers)
    U = model.V(x) + interaction_convolution(model, nu).values
    return boltzmann(nu.grid, U, leak_threshold)


def l1_distance(nu1: GridMeasure, nu2: GridMeasure) -> float:
    return float(np.sum(np.abs(nu1.density - nu2.density)) * nu1.dx)


def solve_invariant(
    model: MeanFieldModel,
    grid: Grid,
    tol: float = 1e-10,
    max_iter: int = 500,
    initial: GridMeasure | None = None,
    gamma0: float | None = None,
    leak_threshold: float | None = LEAK_THRESHOLD,
    start: str = "reference",
) -> InvariantResult:
    """
    Iterate Phi from alpha (or `initial`) until || Phi(nu) - nu ||_1 < tol

    Args:
        model: d = 1 model
        grid: grid for all iterates
        tol: L1 residual tolerance
        max_iter: iteration limit
        initial: starting measure (default alpha)
        gamma0: Zegarlinski coefficient; the result is certified only when gamma0 < 1
        leak_threshold: boundary-mass limit for every iterate

    Returns:
        InvariantResult with the W1 step sizes and contraction factors; factors
        are recorded while the previous step exceeds 1e-12

    Raises:
        NoConvergence: after max_iter iterations, carrying the factor history
    """
    nu = initial if initial is not None else reference_measure(model, grid, leak_threshold)
    certified = gamma0 is not None and gamma0 < 1.0
    steps: list[float] = []
    factors: list[float] = []
    residual = float("inf")
    for iteration in range(1, max_iter + 1):
        nxt = phi_map(model, nu, leak_threshold)
        residual = l1_distance(nxt, nu)
        step = wasserstein1_1d(nxt, nu)
        if steps and steps[-1] > FACTOR_FLOOR:
            factors.append(step / steps[-1])
        steps.append(step)
        nu = nxt
        if residual < tol:
            logger.info("Fixed point reached in %d iteration(s), residual %.2e", iteration, residual)
            return InvariantResult(
                measure=nu,
                iterations=iteration,
                residual=residual,
                factors=tuple(factors),
                steps=tuple(steps),
                converged=True,
                certified=certified,
                start=start,
            )
    raise NoConvergence(
        f"Fixed-point iteration did not reach residual {tol:g} in {max_iter} iterations (last {residual:.3e})",
        history=tuple(factors),
    )


def find_fixed_points(
    model: MeanFieldModel,
    grid: Grid,
    tol: float = 1e-10,
    max_iter: int = 500,
    tilt: float = 2.0,
    gamma0: float | None = None,
    leak_threshold: float | None = LEAK_THRESHOLD,
) -> list[InvariantResult]:
    """Fixed points reached from alpha and from alpha tilted by exp(+-tilt x), without duplicates"""
    alpha = reference_measure(model, grid, leak_threshold)
    starts = {
        "reference": alpha,
        "tilt+": tilted_measure(alpha, tilt),
        "tilt-": tilted_measure(alpha, -tilt),
    }
    found: list[InvariantResult] = []
    for name, initial in starts.items():
        try:
            result = solve_invariant(model, grid, tol, max_iter, initial, gamma0, leak_threshold, start=name)
        except NoConvergence as exc:
            logger.warning("No fixed point from start '%s': %s", name, exc)
            continue
        if all(wasserstein1_1d(result.measure, other.measure) >= DUPLICATE_W1 for other in found):
            found.append(result)
    return found
