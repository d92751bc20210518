"""
Functionals of grid measures

Free energy E_f(nu) = H(nu | alpha) + (1/2) int int W dnu dnu, the mean-field
entropy H_W(nu) = E_f(nu) - E_f(nu_inf) and the mean-field Fisher information
I_W(nu) = (1/4) int |grad log f + grad V + grad (W * nu)|^2 dnu.
"""

import logging
from typing import NamedTuple

import numpy as np
from scipy.signal import fftconvolve

from mfgap.errors import SupportTooRough, UnboundedEntropy
from mfgap.meanfield.grid import GridMeasure, reference_measure
from mfgap.potentials.models import MeanFieldModel

logger = logging.getLogger(__name__)

SUPPORT_LEVEL = 1e-12
EXCLUDED_MASS_LIMIT = 1e-6

# rows per block for direct O(n^2) summation
_ROW_CHUNK = 256


class Convolution(NamedTuple):
    """(W * nu)(x) = int W(x, y) dnu(y) and its x-derivative at the cell centres"""
    values: np.ndarray
    gradient: np.ndarray


def interaction_convolution(model: MeanFieldModel, nu: GridMeasure) -> Convolution:
    """
    W * nu on the grid of nu

    Bilinear W uses the mean of nu, radial W a discrete FFT convolution of W0
    sampled at the grid offsets, anything else direct summation.
    """
    x = nu.centers
    points = model.as_points(x)
    w = nu.weights
    tag = model.structure
    if tag.kind == "bilinear":
        J = float(np.asarray(tag.coupling)[0, 0])
        m = float(np.sum(w * x))
        return Convolution(values=J * m * x, gradient=np.full_like(x, J * m))

    n = x.size
    if tag.kind in ("radial", "fourier"):
        offsets = (np.arange(-(n - 1), n) * nu.dx)[:, None]
        zero = np.zeros_like(offsets)
        kernel = model.W(offsets, zero)
        kernel_grad = model.grad_x_W(offsets, zero)[:, 0]
        return Convolution(
            values=fftconvolve(kernel, w, mode="valid"),
            gradient=fftconvolve(kernel_grad, w, mode="valid"),
        )

    values = np.empty(n)
    gradient = np.empty(n)
    for start in range(0, n, _ROW_CHUNK):
        xi = points[start:start + _ROW_CHUNK, None, :]
        values[start:start + _ROW_CHUNK] = model.W(xi, points[None, :, :]) @ w
        gradient[start:start + _ROW_CHUNK] = model.grad_x_W(xi, points[None, :, :])[..., 0] @ w
    return Convolution(values=values, gradient=gradient)


def interaction_energy(model: MeanFieldModel, nu: GridMeasure, conv: Convolution | None = None) -> float:
    """int int W dnu dnu"""
    conv = conv or interaction_convolution(model, nu)
    return float(np.sum(nu.weights * conv.values))


def _log_density(nu: GridMeasure) -> np.ndarray:
    if nu.log_density is not None:
        return nu.log_density
    with np.errstate(divide="ignore"):
        return np.log(nu.density)


def relative_entropy(nu: GridMeasure, reference: GridMeasure) -> float:
    """
    H(nu | reference) = sum f (log f - log g) dx with 0 log 0 = 0

    Uses the exact log density of Boltzmann measures, so a reference whose
    tails underflow to 0.0 still has finite entropy against it.
    """
    f = nu.density
    charged = f > 0
    log_g = _log_density(reference)[charged]
    if not np.all(np.isfinite(log_g)):
        raise UnboundedEntropy("Measure charges cells where the reference density vanishes")
    log_f = _log_density(nu)[charged]
    return float(np.sum(f[charged] * (log_f - log_g)) * nu.dx)


def free_energy(model: MeanFieldModel, nu: GridMeasure, reference: GridMeasure | None = None) -> float:
    """E_f(nu) = H(nu | alpha) + (1/2) int int W dnu dnu"""
    reference = reference or reference_measure(model, nu.grid, leak_threshold=None)
    return relative_entropy(nu, reference) + 0.5 * interaction_energy(model, nu)


def mean_field_entropy(
    model: MeanFieldModel,
    nu: GridMeasure,
    nu_inf: GridMeasure,
    reference: GridMeasure | None = None,
) -> float:
    """H_W(nu) = E_f(nu) - E_f(nu_inf)"""
    reference = reference or reference_measure(model, nu.grid, leak_threshold=None)
    return free_energy(model, nu, reference) - free_energy(model, nu_inf, reference)


def effective_support(nu: GridMeasure) -> tuple[int, int]:
    """First and last cell of the effective support; raises if it has holes"""
    inside = np.flatnonzero(nu.density > SUPPORT_LEVEL * np.max(nu.density))
    first, last = int(inside[0]), int(inside[-1])
    if inside.size != last - first + 1:
        raise SupportTooRough(f"Effective support of the measure is disconnected ({inside.size} of {last - first + 1} cells)")
    return first, last


def fisher_information(model: MeanFieldModel, nu: GridMeasure, conv: Convolution | None = None) -> float:
    """
    I_W(nu) with central differences of log f on the interior of the support

    The two end cells of the support are left out; their mass is expected to
    be below 1e-6 and a warning is logged otherwise.
    """
    first, last = effective_support(nu)
    if last - first < 2:
        raise SupportTooRough("Effective support needs at least three cells")
    conv = conv or interaction_convolution(model, nu)
    f = nu.density
    log_f = np.log(f[first:last + 1])
    score = (log_f[2:] - log_f[:-2]) / (2.0 * nu.dx)
    inner = slice(first + 1, last)
    x = model.as_points(nu.centers[inner])
    residual = score + model.grad_V(x)[:, 0] + conv.gradient[inner]
    excluded = float(nu.weights[first] + nu.weights[last])
    if excluded >= EXCLUDED_MASS_LIMIT:
        logger.warning("Fisher information leaves out support end cells carrying mass %.2e", excluded)
    return 0.25 * float(np.sum(residual**2 * nu.weights[inner]))
