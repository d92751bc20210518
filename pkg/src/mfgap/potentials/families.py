"""
Builtin model families

Each builder takes a parameter map, validates it and returns a fully analytic
MeanFieldModel with its structure tag and confinement constants filled in.
"""

import math
from typing import Callable, Mapping

import numpy as np

from mfgap.errors import InvalidModelParameters, UnknownModelError
from mfgap.potentials.models import ConfinementParams, MeanFieldModel, StructureTag


# ============================================================
# Confinement potentials
# ============================================================
def _quadratic_confinement(kappa: float, d: int):
    def V(x):
        return 0.5 * kappa * np.sum(np.square(x), axis=-1)

    def grad_V(x):
        return kappa * np.asarray(x, dtype=float)

    def hess_V(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(kappa * np.eye(d), x.shape[:-1] + (d, d))

    # x . grad V = kappa |x|^2 ; grad V is kappa-monotone
    confinement = ConfinementParams(c1=kappa, c2=0.0, c_v=kappa, c1_prime=0.0, radius=0.0)
    return V, grad_V, hess_V, confinement


def _double_well_confinement(beta: float):
    """V(x) = beta (x^4/4 - x^2/2) in d = 1"""
    def V(x):
        x = np.asarray(x, dtype=float)[..., 0]
        return beta * (0.25 * x**4 - 0.5 * x**2)

    def grad_V(x):
        x = np.asarray(x, dtype=float)
        return beta * (x**3 - x)

    def hess_V(x):
        x = np.asarray(x, dtype=float)
        return (beta * (3.0 * x**2 - 1.0))[..., None]

    # x V'(x) = beta (x^4 - x^2) >= beta x^2 - beta ;
    # (V'(x) - V'(y))(x - y) >= beta r^2 (r^2/4 - 1) >= beta r^2 - c1' r 1[r <= 2 sqrt 2]
    confinement = ConfinementParams(
        c1=beta,
        c2=beta,
        c_v=beta,
        c1_prime=beta * (4.0 / 3.0) * math.sqrt(8.0 / 3.0),
        radius=2.0 * math.sqrt(2.0),
    )
    return V, grad_V, hess_V, confinement


# ============================================================
# Interaction potentials
# ============================================================
def _bilinear_interaction(J: np.ndarray):
    d = J.shape[0]

    def W(x, y):
        return np.einsum("...i,ij,...j->...", x, J, y)

    def grad_x_W(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.einsum("ij,...j->...i", J, y)

    def cross_hess_W(x, y):
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))[:-1]
        return np.broadcast_to(J, shape + (d, d))

    return W, grad_x_W, cross_hess_W


def _radial_interaction(W0: Callable, grad_W0: Callable, hess_W0: Callable):
    """W(x, y) = W0(x - y) for an even W0"""
    def W(x, y):
        return W0(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))

    def grad_x_W(x, y):
        return grad_W0(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))

    def cross_hess_W(x, y):
        return -hess_W0(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))

    return W, grad_x_W, cross_hess_W


def _quadratic_kernel(c: float, d: int):
    def W0(u):
        return 0.5 * c * np.sum(np.square(u), axis=-1)

    def grad_W0(u):
        return c * u

    def hess_W0(u):
        return np.broadcast_to(c * np.eye(d), u.shape[:-1] + (d, d))

    return W0, grad_W0, hess_W0


def _fourier_kernel(c: float, frequencies: np.ndarray, weights: np.ndarray):
    """W0(u) = sum_k 2 w_k cos<u, y_k> + (c/2)|u|^2, i.e. nu = sum_k w_k (delta_{y_k} + delta_{-y_k})"""
    d = frequencies.shape[1]

    def W0(u):
        phase = u @ frequencies.T
        return 2.0 * np.cos(phase) @ weights + 0.5 * c * np.sum(np.square(u), axis=-1)

    def grad_W0(u):
        phase = u @ frequencies.T
        return -2.0 * (np.sin(phase) * weights) @ frequencies + c * u

    def hess_W0(u):
        phase = u @ frequencies.T
        oscillating = -2.0 * np.einsum("...k,kl,km->...lm", np.cos(phase) * weights, frequencies, frequencies)
        return oscillating + c * np.eye(d)

    return W0, grad_W0, hess_W0


# ============================================================
# Parameter handling
# ============================================================
REQUIRED = object()


def _read_params(name: str, params: Mapping | None, defaults: dict) -> dict:
    params = dict(params or {})
    unknown = sorted(set(params) - set(defaults))
    if unknown:
        raise InvalidModelParameters(
            f"Unknown parameter(s) {unknown} for model '{name}'; expected a subset of {sorted(defaults)}"
        )
    missing = sorted(key for key, value in defaults.items() if value is REQUIRED and key not in params)
    if missing:
        raise InvalidModelParameters(f"Missing parameter(s) {missing} for model '{name}'")
    return {**defaults, **params}


def _dimension(name: str, value) -> int:
    d = int(value)
    if d < 1 or d != value:
        raise InvalidModelParameters(f"'{name}': dimension must be a positive integer, got {value}")
    return d


def _positive(name: str, key: str, value: float) -> float:
    value = float(value)
    if not value > 0:
        raise InvalidModelParameters(f"'{name}': {key} must be > 0, got {value}")
    return value


# ============================================================
# Families
# ============================================================
def _free(params: Mapping | None) -> MeanFieldModel:
    p = _read_params("free", params, {"kappa": 1.0, "dimension": 1})
    d = _dimension("free", p["dimension"])
    kappa = _positive("free", "kappa", p["kappa"])
    return _bilinear_model("free", kappa, np.zeros((d, d)), p)


def _gaussian(params: Mapping | None) -> MeanFieldModel:
    p = _read_params("gaussian", params, {"beta": REQUIRED, "dimension": 1})
    d = _dimension("gaussian", p["dimension"])
    beta = float(p["beta"])
    return _bilinear_model("gaussian", 1.0, beta * np.eye(d), p)


def _bilinear(params: Mapping | None) -> MeanFieldModel:
    p = _read_params("bilinear", params, {"kappa": 1.0, "coupling": 0.0, "dimension": 1, "coupling_matrix": None})
    d = _dimension("bilinear", p["dimension"])
    kappa = _positive("bilinear", "kappa", p["kappa"])
    if p["coupling_matrix"] is not None:
        J = np.asarray(p["coupling_matrix"], dtype=float)
        if J.shape != (d, d):
            raise InvalidModelParameters(f"'bilinear': coupling_matrix must be {d}x{d}, got {J.shape}")
        if not np.allclose(J, J.T):
            raise InvalidModelParameters("'bilinear': coupling_matrix must be symmetric so that W(x,y) = W(y,x)")
    else:
        J = float(p["coupling"]) * np.eye(d)
    return _bilinear_model("bilinear", kappa, J, p)


def _bilinear_model(name: str, kappa: float, J: np.ndarray, params: dict) -> MeanFieldModel:
    d = J.shape[0]
    V, grad_V, hess_V, confinement = _quadratic_confinement(kappa, d)
    W, grad_x_W, cross_hess_W = _bilinear_interaction(J)
    return MeanFieldModel(
        name=name,
        dimension=d,
        V=V,
        grad_V=grad_V,
        hess_V=hess_V,
        W=W,
        grad_x_W=grad_x_W,
        cross_hess_W=cross_hess_W,
        structure=StructureTag(kind="bilinear", coupling=J),
        confinement=confinement,
        params=dict(params),
    )


def _curie_weiss(params: Mapping | None) -> MeanFieldModel:
    p = _read_params("curie_weiss", params, {"beta": REQUIRED, "K": REQUIRED})
    beta = _positive("curie_weiss", "beta", p["beta"])
    K = float(p["K"])
    if K == 0.0:
        raise InvalidModelParameters("'curie_weiss': K must be non-zero (use 'free' style models for K = 0)")
    V, grad_V, hess_V, confinement = _double_well_confinement(beta)
    J = np.array([[-beta * K]])
    W, grad_x_W, cross_hess_W = _bilinear_interaction(J)
    return MeanFieldModel(
        name="curie_weiss",
        dimension=1,
        V=V,
        grad_V=grad_V,
        hess_V=hess_V,
        W=W,
        grad_x_W=grad_x_W,
        cross_hess_W=cross_hess_W,
        structure=StructureTag(kind="bilinear", coupling=J),
        confinement=confinement,
        params=p,
    )


def _radial_quadratic(params: Mapping | None) -> MeanFieldModel:
    p = _read_params("radial_quadratic", params, {"kappa": 1.0, "c_w": REQUIRED, "dimension": 1})
    d = _dimension("radial_quadratic", p["dimension"])
    kappa = _positive("radial_quadratic", "kappa", p["kappa"])
    c_w = float(p["c_w"])
    V, grad_V, hess_V, confinement = _quadratic_confinement(kappa, d)
    W, grad_x_W, cross_hess_W = _radial_interaction(*_quadratic_kernel(c_w, d))
    return MeanFieldModel(
        name="radial_quadratic",
        dimension=d,
        V=V,
        grad_V=grad_V,
        hess_V=hess_V,
        W=W,
        grad_x_W=grad_x_W,
        cross_hess_W=cross_hess_W,
        structure=StructureTag(kind="radial", hessian_lower=c_w, hessian_upper=c_w),
        confinement=confinement,
        params=p,
    )


def _double_well_radial(params: Mapping | None) -> MeanFieldModel:
    p = _read_params("double_well_radial", params, {"beta": REQUIRED, "K": REQUIRED})
    beta = _positive("double_well_radial", "beta", p["beta"])
    K = float(p["K"])
    if K < 0:
        raise InvalidModelParameters("'double_well_radial': K must be >= 0")
    V, grad_V, hess_V, confinement = _double_well_confinement(beta)
    c_w = -beta * K
    W, grad_x_W, cross_hess_W = _radial_interaction(*_quadratic_kernel(c_w, 1))
    return MeanFieldModel(
        name="double_well_radial",
        dimension=1,
        V=V,
        grad_V=grad_V,
        hess_V=hess_V,
        W=W,
        grad_x_W=grad_x_W,
        cross_hess_W=cross_hess_W,
        structure=StructureTag(kind="radial", hessian_lower=c_w, hessian_upper=c_w),
        confinement=confinement,
        params=p,
    )


def _fourier(params: Mapping | None) -> MeanFieldModel:
    p = _read_params(
        "fourier", params, {"c": REQUIRED, "kappa": 1.0, "frequencies": REQUIRED, "weights": REQUIRED, "dimension": 1}
    )
    d = _dimension("fourier", p["dimension"])
    kappa = _positive("fourier", "kappa", p["kappa"])
    c = float(p["c"])
    frequencies = np.asarray(p["frequencies"], dtype=float).reshape(-1, d)
    weights = np.asarray(p["weights"], dtype=float).reshape(-1)
    if frequencies.shape[0] != weights.shape[0]:
        raise InvalidModelParameters("'fourier': need one weight per frequency")
    if np.any(weights <= 0):
        raise InvalidModelParameters("'fourier': weights of the symmetric measure nu must be > 0")
    gamma_nu = 2.0 * np.einsum("k,kl,km->lm", weights, frequencies, frequencies)
    V, grad_V, hess_V, confinement = _quadratic_confinement(kappa, d)
    W, grad_x_W, cross_hess_W = _radial_interaction(*_fourier_kernel(c, frequencies, weights))
    lam_max = float(np.linalg.eigvalsh(gamma_nu)[-1])
    lam_min = float(np.linalg.eigvalsh(gamma_nu)[0])
    return MeanFieldModel(
        name="fourier",
        dimension=d,
        V=V,
        grad_V=grad_V,
        hess_V=hess_V,
        W=W,
        grad_x_W=grad_x_W,
        cross_hess_W=cross_hess_W,
        structure=StructureTag(
            kind="fourier",
            hessian_lower=c - lam_max,
            hessian_upper=c + lam_max,
            quadratic=c,
            gamma_nu=gamma_nu,
        ),
        confinement=confinement,
        params={**p, "gamma_nu_min": lam_min, "gamma_nu_max": lam_max},
    )


FAMILIES: dict[str, Callable[[Mapping | None], MeanFieldModel]] = {
    "free": _free,
    "gaussian": _gaussian,
    "bilinear": _bilinear,
    "curie_weiss": _curie_weiss,
    "radial_quadratic": _radial_quadratic,
    "double_well_radial": _double_well_radial,
    "fourier": _fourier,
}


def builtin_model(name: str, params: Mapping | None = None) -> MeanFieldModel:
    """
    Build one of the builtin mean-field models

    Args:
        name: family name, one of FAMILIES
        params: parameter map for the family (e.g. {"beta": 1.0, "K": 0.2})

    Returns:
        MeanFieldModel with analytic derivatives and structure metadata
    """
    try:
        builder = FAMILIES[name]
    except KeyError:
        raise UnknownModelError(f"Unknown model family '{name}'; available: {sorted(FAMILIES)}") from None
    return builder(params)
