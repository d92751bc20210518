"""
Propagation of chaos

For each N, R = ceil(n_target / N) independent particle systems start from
nu0^N and run to time T. The pooled single-particle positions are binned on
the grid and compared in W2 with the PDE solution nu_T. Keeping N R roughly
fixed keeps the Monte-Carlo floor comparable across N.
"""

import logging
import math
from typing import NamedTuple

from mfgap.meanfield.grid import GridMeasure, empirical_measure
from mfgap.meanfield.pde import McKeanVlasovSolver, n_steps_for
from mfgap.meanfield.transport import wasserstein2_1d
from mfgap.particles.dynamics import initial_ensemble, simulate
from mfgap.potentials.models import MeanFieldModel

logger = logging.getLogger(__name__)


class ChaosRow(NamedTuple):
    n_particles: int
    replicas: int
    w2: float
    noise: float


class ChaosTable(NamedTuple):
    rows: tuple[ChaosRow, ...]
    T: float
    dt: float
    decreasing: bool

    @staticmethod
    def header() -> list[str]:
        return ["N", "replicas", "W2", "noise"]


def _pooled_distance(positions, grid, reference: GridMeasure) -> tuple[float, float]:
    """W2 of the pooled histogram to the reference, and a noise level from two halves of the replicas"""
    pooled = positions[..., 0]
    w2 = wasserstein2_1d(empirical_measure(grid, pooled), reference)
    if pooled.shape[0] < 2:
        return w2, 0.0
    even = empirical_measure(grid, pooled[0::2])
    odd = empirical_measure(grid, pooled[1::2])
    # each half carries twice the noise variance of the pooled sample
    return w2, 0.5 * wasserstein2_1d(even, odd)


def chaos_check(
    model: MeanFieldModel,
    nu0: GridMeasure,
    n_values: list[int],
    T: float,
    dt: float,
    seed: int,
    n_target: int = 200_000,
    pde_dt: float = 1e-3,
) -> ChaosTable:
    """
    Table of W2(mu_T^{N,1}, nu_T) over N

    Args:
        model: d = 1 model
        nu0: initial law on the PDE grid (particles sample it by inverse CDF)
        n_values: particle numbers, compared in increasing order
        T: final time
        dt: Euler-Maruyama step
        seed: master seed
        n_target: pooled sample size N R per row
        pde_dt: step of the reference PDE solve

    Returns:
        ChaosTable; `decreasing` allows two combined noise levels between rows
    """
    if model.dimension != 1:
        raise ValueError("chaos_check compares against the 1-D PDE; use a d = 1 model")
    nu_T = McKeanVlasovSolver(model, nu0.grid, pde_dt).solve(nu0, T)
    n_steps = n_steps_for(T, dt)

    rows = []
    for N in sorted(set(int(n) for n in n_values)):
        replicas = math.ceil(n_target / N)
        ensemble = initial_ensemble(N, 1, dt, seed, quantile=nu0.quantile, replicas=replicas)
        final = simulate(ensemble, model, n_steps).final
        w2, noise = _pooled_distance(final.positions, nu0.grid, nu_T)
        rows.append(ChaosRow(n_particles=N, replicas=replicas, w2=w2, noise=noise))
        logger.info("Chaos N=%d (R=%d): W2=%.4e, noise %.1e", N, replicas, w2, noise)

    decreasing = all(
        rows[k + 1].w2 <= rows[k].w2 + 2.0 * math.hypot(rows[k].noise, rows[k + 1].noise)
        for k in range(len(rows) - 1)
    )
    return ChaosTable(rows=tuple(rows), T=float(T), dt=float(dt), decreasing=decreasing)
