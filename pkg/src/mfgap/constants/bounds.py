"""
Explicit constants and lower bounds

Uniform Poincare bound 1/c_Lip,m + h, Zegarlinski coefficient gamma_0,
log-Sobolev bound rho_LS,m (1 - gamma_0)^2 and the pair correlation bound,
together with the closed forms of the worked examples.
"""

import logging
import math
from typing import NamedTuple

import numpy as np
from scipy.special import erf

from mfgap.errors import NonDissipativeError, UnsupportedModelError, VacuousBound, ZegarlinskiFails
from mfgap.potentials.dissipativity import SamplingBudget
from mfgap.potentials.models import MeanFieldModel

logger = logging.getLogger(__name__)


class SpectralGapBound(NamedTuple):
    """Lower bound on lambda_1(mu^(N)); vacuous when it is <= 0"""
    value: float
    vacuous: bool


def c_lip_m_explicit(c_v: float, c1: float, c_w: float, c2: float, radius: float) -> float:
    """(1/(c_V + c_W)) exp((c1 + c2) R / 4), valid when c_V + c_W > 0"""
    slope = c_v + c_w
    if not slope > 0:
        raise NonDissipativeError(f"c_V + c_W = {slope:g} <= 0: explicit c_Lip,m estimate needs c_V + c_W > 0")
    if radius < 0:
        raise ValueError("R must be >= 0")
    return math.exp(0.25 * (c1 + c2) * radius) / slope


def offdiag_hessian_bound(
    model: MeanFieldModel, n_particles: int, sampling: SamplingBudget | None = None
) -> float:
    """
    Largest h with (1/(N-1)) (1_{i != j} grad^2_{x,y} W(x_i, x_j)) >= h I_{dN}

    Args:
        model: mean-field model
        n_particles: N >= 2
        sampling: budget for general models (sampled minimum eigenvalue)

    Returns:
        h (analytic for bilinear, radial and fourier structures)
    """
    N = int(n_particles)
    if N < 2:
        raise ValueError(f"N must be >= 2, got {n_particles}")
    tag = model.structure

    if tag.kind == "bilinear":
        # (1_{i != j}) has eigenvalues N-1 (uniform) and -1
        mu = np.linalg.eigvalsh(np.asarray(tag.coupling, dtype=float))
        return float(min(mu.min(), -mu.max() / (N - 1)))

    if tag.kind == "radial":
        c_minus = max(-float(tag.hessian_lower), 0.0)
        return -(c_minus * N / (N - 1) + float(tag.hessian_upper))

    if tag.kind == "fourier":
        c = float(tag.quadratic)
        lam_max = float(np.linalg.eigvalsh(tag.gamma_nu)[-1])
        return (min(c, -c * (N - 1)) - lam_max) / (N - 1)

    if sampling is None:
        raise UnsupportedModelError(
            f"Model '{model.name}' has no analytic off-diagonal Hessian bound; pass a sampling budget"
        )
    return _sampled_offdiag_bound(model, N, sampling)


def _sampled_offdiag_bound(model: MeanFieldModel, N: int, budget: SamplingBudget) -> float:
    d = model.dimension
    rng = np.random.default_rng(budget.seed)
    best = math.inf
    for _ in range(budget.n_samples):
        x = rng.uniform(-budget.box, budget.box, size=(N, d))
        blocks = model.cross_hess_W(x[:, None, :], x[None, :, :])  # (N, N, d, d)
        blocks = blocks * (1.0 - np.eye(N))[:, :, None, None] / (N - 1)
        matrix = blocks.transpose(0, 2, 1, 3).reshape(N * d, N * d)
        matrix = 0.5 * (matrix + matrix.T)
        best = min(best, float(np.linalg.eigvalsh(matrix)[0]))
    logger.warning("Off-diagonal Hessian bound for '%s' is sampled (approximate)", model.name)
    return best


def poincare_lower_bound(c_lip_m: float, h: float) -> SpectralGapBound:
    """lambda_1(mu^(N)) >= 1/c_Lip,m + h"""
    if not c_lip_m > 0:
        raise ValueError(f"c_Lip,m must be > 0, got {c_lip_m}")
    value = 1.0 / c_lip_m + h
    return SpectralGapBound(value=value, vacuous=value <= 0.0)


def cross_hessian_sup_norm(model: MeanFieldModel, sampling: SamplingBudget | None = None) -> float:
    """
    sup over x, y and unit z of |grad^2_{x,y} W(x, y) z|

    Exact for bilinear and radial structures (matrix operator norm of the
    Hessian envelope); sampled for fourier and general models.
    """
    tag = model.structure
    if tag.kind == "bilinear":
        return float(np.linalg.norm(np.asarray(tag.coupling, dtype=float), ord=2))
    if tag.kind == "radial":
        return max(abs(float(tag.hessian_lower)), abs(float(tag.hessian_upper)))

    budget = sampling or SamplingBudget()
    rng = np.random.default_rng(budget.seed)
    d = model.dimension
    x = rng.uniform(-budget.box, budget.box, size=(budget.n_samples, d))
    y = rng.uniform(-budget.box, budget.box, size=(budget.n_samples, d))
    y[0] = x[0]  # the diagonal x = y is where the oscillating part peaks
    norms = np.linalg.norm(model.cross_hess_W(x, y), ord=2, axis=(-2, -1))
    return float(np.max(norms))


def zegarlinski_gamma(c_lip_m: float, cross_norm: float) -> float:
    """gamma_0 = c_Lip,m ||grad^2_{x,y} W||_inf"""
    return c_lip_m * cross_norm


def lsi_lower_bound(rho_lsm: float, gamma0: float) -> float:
    """rho_LS(mu^(N)) >= rho_LS,m (1 - gamma_0)^2, only under gamma_0 < 1"""
    if not rho_lsm > 0:
        raise ValueError(f"rho_LS,m must be > 0, got {rho_lsm}")
    if gamma0 >= 1.0:
        raise ZegarlinskiFails(gamma0)
    return rho_lsm * (1.0 - gamma0) ** 2


def correlation_constant(c_lip_m: float, h: float) -> float:
    denominator = 1.0 + c_lip_m * h
    if not denominator > 0:
        raise VacuousBound(f"1 + c_Lip,m h = {denominator:g} <= 0: no correlation bound")
    return c_lip_m / denominator


def correlation_bound(c_lip_m: float, h: float, n_particles: int, lip_f: float, lip_g: float) -> float:
    """|Cov(f(x_i), g(x_j))| <= c_Lip,m / ((1 + c_Lip,m h)(N - 1)) (|f|_Lip^2 + |g|_Lip^2)"""
    if n_particles < 2:
        raise ValueError(f"N must be >= 2, got {n_particles}")
    return correlation_constant(c_lip_m, h) / (n_particles - 1) * (lip_f**2 + lip_g**2)


# ============================================================
# Worked examples
# ============================================================
def curie_weiss_c_lip_m(beta: float) -> float:
    """e^{beta/4} int_0^inf e^{-beta (1/2 - u)^2} du via the error function"""
    return math.exp(beta / 4.0) * math.sqrt(math.pi / beta) * 0.5 * (1.0 + erf(math.sqrt(beta) / 2.0))


def curie_weiss_c_lip_upper(beta: float) -> float:
    """sqrt(pi / beta) e^{beta/4}"""
    return math.sqrt(math.pi / beta) * math.exp(beta / 4.0)


def curie_weiss_gap_bound(beta: float, K: float, n_particles: int) -> float:
    """(sqrt(beta)/sqrt(pi)) e^{-beta/4} + beta K/(N-1) if K < 0, - beta K if K > 0"""
    base = math.sqrt(beta / math.pi) * math.exp(-beta / 4.0)
    return base + beta * K / (n_particles - 1) if K < 0 else base - beta * K


def double_well_radial_c_lip_bound(beta: float, K: float) -> float:
    """sqrt(pi / beta) e^{beta (1 + K)^2 / 4} for V = beta(x^4/4 - x^2/2), W0 = -beta K x^2/2"""
    return math.sqrt(math.pi / beta) * math.exp(beta * (1.0 + K) ** 2 / 4.0)


def bakry_emery_bound(c_v: float, c_w: float, n_particles: int) -> float:
    """lambda_1 >= rho_LS >= c_V - N/(N-1) c_W^- when Hess V >= c_V and Hess W0 >= c_W"""
    N = n_particles
    return c_v - N / (N - 1) * max(-c_w, 0.0)


def perturbed_marginal_lsi(k1: float, oscillation: float) -> float:
    """rho_LS,m >= K1 exp(-(sup V_b - inf V_b)) for V = V_c + V_b, Hess V_c >= (K1 + K0) I"""
    if not k1 > 0 or oscillation < 0:
        raise ValueError("Need K1 > 0 and a non-negative oscillation of the bounded part")
    return k1 * math.exp(-oscillation)
