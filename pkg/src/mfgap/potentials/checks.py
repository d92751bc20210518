"""Finite-difference and structural checks of a model's derivatives"""

from typing import NamedTuple

import numpy as np

from mfgap.potentials.models import MeanFieldModel


class ModelCheck(NamedTuple):
    """Largest violations found at the sampled points"""
    symmetry_error: float
    grad_V_error: float
    hess_V_error: float
    cross_hessian_error: float
    growth_violation: float | None  # max of c1|x|^2 - c2 - x.grad V(x), None without constants
    passed: bool


def _step(x: np.ndarray) -> np.ndarray:
    # central-difference step h = 1e-5 max(1, |x|)
    return 1e-5 * np.maximum(1.0, np.linalg.norm(x, axis=-1, keepdims=True))


def _relative(error: np.ndarray, scale: np.ndarray) -> float:
    return float(np.max(error / np.maximum(1.0, scale)))


def numerical_gradient(f, x: np.ndarray) -> np.ndarray:
    """Central differences of a scalar field, coordinate by coordinate"""
    x = np.asarray(x, dtype=float)
    h = _step(x)
    grad = np.empty_like(x)
    for k in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[k] = 1.0
        grad[..., k] = (f(x + h * e) - f(x - h * e)) / (2.0 * h[..., 0])
    return grad


def numerical_jacobian(F, x: np.ndarray) -> np.ndarray:
    """Central differences of a vector field; entry [..., i, k] = dF_i / dx_k"""
    x = np.asarray(x, dtype=float)
    h = _step(x)
    d = x.shape[-1]
    jac = np.empty(x.shape + (d,))
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        jac[..., :, k] = (F(x + h * e) - F(x - h * e)) / (2.0 * h)
    return jac


def check_model(model: MeanFieldModel, n_points: int = 64, scale: float = 2.0, seed: int = 0) -> ModelCheck:
    """
    Verify the structural invariants of a model at random points

    Args:
        model: model to check
        n_points: number of random points (and pairs)
        scale: points are standard normal times this scale
        seed: RNG seed

    Returns:
        ModelCheck; passed requires gradient errors <= 1e-6 and cross-Hessian errors <= 1e-5
    """
    rng = np.random.default_rng(seed)
    d = model.dimension
    x = scale * rng.standard_normal((n_points, d))
    y = scale * rng.standard_normal((n_points, d))

    w_xy = model.W(x, y)
    symmetry = _relative(np.abs(w_xy - model.W(y, x)), np.abs(w_xy))

    grad_exact = model.grad_V(x)
    grad_fd = numerical_gradient(model.V, x)
    grad_error = _relative(np.linalg.norm(grad_fd - grad_exact, axis=-1), np.linalg.norm(grad_exact, axis=-1))

    hess_exact = model.hess_V(x)
    hess_fd = numerical_jacobian(model.grad_V, x)
    hess_error = _relative(
        np.linalg.norm(hess_fd - hess_exact, axis=(-2, -1)), np.linalg.norm(hess_exact, axis=(-2, -1))
    )

    # d/dy of grad_x W(x, y): entry [k, l] = d^2 W / dx_k dy_l
    cross_exact = model.cross_hess_W(x, y)
    cross_fd = numerical_jacobian(lambda yy: model.grad_x_W(x, yy), y)
    cross_error = _relative(
        np.linalg.norm(cross_fd - cross_exact, axis=(-2, -1)), np.linalg.norm(cross_exact, axis=(-2, -1))
    )

    growth = None
    if model.confinement is not None:
        c = model.confinement
        slack = c.c1 * np.sum(x**2, axis=-1) - c.c2 - np.sum(x * grad_exact, axis=-1)
        growth = float(np.max(slack))

    passed = (
        symmetry <= 1e-12
        and grad_error <= 1e-6
        and hess_error <= 1e-5
        and cross_error <= 1e-5
        and (growth is None or growth <= 1e-9)
    )
    return ModelCheck(
        symmetry_error=symmetry,
        grad_V_error=grad_error,
        hess_V_error=hess_error,
        cross_hessian_error=cross_error,
        growth_violation=growth,
        passed=passed,
    )
