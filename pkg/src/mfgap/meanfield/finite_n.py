"""
Finite-N identities linking the particle system to the mean-field functionals

Entropy: (1/2) H(nu x nu | mu^(2)) = H(nu | alpha) + (1/2) int int W dnu dnu + (1/2) log Z2,
with Z2 = int int exp(-W) dalpha dalpha, checked by tensor quadrature at N = 2.

Fisher information: (1/N) I(nu^N | mu^(N)) = (1/4) E |s(x_1) + (1/(N-1)) sum_{j>1} grad_x W(x_1, x_j)|^2
with s = grad log(dnu/dalpha); it tends to I_W(nu) as N grows.
"""

import logging
import math
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from mfgap.errors import QuadratureError
from mfgap.meanfield.functionals import (
    effective_support,
    fisher_information,
    interaction_energy,
    relative_entropy,
)
from mfgap.meanfield.grid import GridMeasure, reference_measure
from mfgap.potentials.models import MeanFieldModel

logger = logging.getLogger(__name__)

_MC_CHUNK = 100_000


class EntropyIdentity(NamedTuple):
    lhs: float
    rhs: float
    difference: float


class FisherIdentity(NamedTuple):
    n_values: tuple[int, ...]
    lhs: tuple[float, ...]
    standard_errors: tuple[float, ...]
    rhs_limit: float
    gaps: tuple[float, ...]
    decreasing: bool


def _pair_matrix(model: MeanFieldModel, nu: GridMeasure, field) -> np.ndarray:
    x = model.as_points(nu.centers)
    return field(x[:, None, :], x[None, :, :])


def finite_n_entropy_check(model: MeanFieldModel, nu: GridMeasure, n_particles: int = 2) -> EntropyIdentity:
    """
    Both sides of the N = 2 entropy identity

    The left side is a tensor-grid sum of nu x nu against log(dnu x nu / dmu^(2));
    the right side is assembled from one-dimensional grid functionals.
    """
    if n_particles != 2:
        raise ValueError("The tensor-quadrature entropy check is implemented for N = 2")
    x = model.as_points(nu.centers)
    dx = nu.dx
    V = model.V(x)
    W = _pair_matrix(model, nu, model.W)
    f = nu.density
    charged = f > 0

    # mu^(2) density: exp(-V(x) - V(y) - W(x, y)) / Z2
    exponent = -(V[:, None] + V[None, :] + W)
    log_Z2 = float(logsumexp(exponent) + 2.0 * math.log(dx))
    log_mu = exponent - log_Z2
    log_f = np.full_like(f, -np.inf)
    log_f[charged] = np.log(f[charged])
    mask = charged[:, None] & charged[None, :]
    ff = np.outer(f, f)
    integrand = np.where(mask, ff * (log_f[:, None] + log_f[None, :] - log_mu), 0.0)
    lhs = 0.5 * float(np.sum(integrand)) * dx * dx
    if not math.isfinite(lhs):
        raise QuadratureError("Tensor quadrature of the N = 2 relative entropy is not finite")

    alpha = reference_measure(model, nu.grid, leak_threshold=None)
    a = alpha.weights
    log_Z2_tilde = float(logsumexp(-W, b=np.outer(a, a)))
    rhs = relative_entropy(nu, alpha) + 0.5 * interaction_energy(model, nu) + 0.5 * log_Z2_tilde
    return EntropyIdentity(lhs=lhs, rhs=rhs, difference=abs(lhs - rhs))


def _score(model: MeanFieldModel, nu: GridMeasure) -> tuple[np.ndarray, slice]:
    """grad log(dnu/dalpha) = grad log f + grad V on the support interior"""
    first, last = effective_support(nu)
    log_f = np.log(nu.density[first:last + 1])
    inner = slice(first + 1, last)
    x = model.as_points(nu.centers[inner])
    return (log_f[2:] - log_f[:-2]) / (2.0 * nu.dx) + model.grad_V(x)[:, 0], inner


def _fisher_pair_quadrature(model: MeanFieldModel, nu: GridMeasure) -> float:
    score, inner = _score(model, nu)
    w = nu.weights
    x = model.as_points(nu.centers)
    force = model.grad_x_W(x[inner][:, None, :], x[None, :, :])[..., 0]
    total = (score[:, None] + force) ** 2
    return 0.25 * float(w[inner] @ total @ w)


def _fisher_monte_carlo(model, nu, n_particles: int, n_samples: int, rng) -> tuple[float, float]:
    score, inner = _score(model, nu)
    centers = nu.centers[inner]
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        size = min(_MC_CHUNK, n_samples - done)
        draws = nu.quantile(rng.random((size, n_particles)))
        x1 = draws[:, :1]
        s = np.interp(x1[:, 0], centers, score)
        force = model.grad_x_W(x1[:, :, None], draws[:, 1:, None])[..., 0].mean(axis=1)
        values = 0.25 * (s + force) ** 2
        total += float(values.sum())
        total_sq += float(np.sum(values**2))
        done += size
    mean = total / n_samples
    variance = max(total_sq / n_samples - mean**2, 0.0)
    return mean, math.sqrt(variance / n_samples)


def finite_n_fisher_check(
    model: MeanFieldModel,
    nu: GridMeasure,
    n_values: tuple[int, ...] = (2, 3, 4),
    n_samples: int = 1_000_000,
    seed: int = 0,
) -> FisherIdentity:
    """
    Per-particle Fisher information of nu^N against mu^(N) for several N

    N = 2 uses tensor quadrature, larger N Monte-Carlo over nu^N. The gap to
    I_W(nu) should shrink as N grows; `decreasing` allows two combined
    standard errors between consecutive N.
    """
    if model.dimension != 1:
        raise ValueError("Finite-N checks need a d = 1 model")
    rng = np.random.default_rng(seed)
    limit = fisher_information(model, nu)
    lhs, errors = [], []
    for N in n_values:
        if N < 2:
            raise ValueError(f"Need N >= 2, got {N}")
        if N == 2:
            value, se = _fisher_pair_quadrature(model, nu), 0.0
        else:
            value, se = _fisher_monte_carlo(model, nu, N, n_samples, rng)
        if not math.isfinite(value):
            raise QuadratureError(f"Per-particle Fisher information is not finite at N={N}")
        lhs.append(value)
        errors.append(se)
    gaps = [value - limit for value in lhs]
    decreasing = all(
        gaps[k + 1] <= gaps[k] + 2.0 * math.hypot(errors[k], errors[k + 1]) for k in range(len(gaps) - 1)
    )
    logger.info("Fisher gaps over N=%s: %s", list(n_values), ", ".join(f"{g:.3e}" for g in gaps))
    return FisherIdentity(
        n_values=tuple(int(n) for n in n_values),
        lhs=tuple(lhs),
        standard_errors=tuple(errors),
        rhs_limit=limit,
        gaps=tuple(gaps),
        decreasing=decreasing,
    )
