"""
Dissipativity rate b0(r) of the one-particle drift

b0(r) = sup_{|x-y| = r, z} -< (x-y)/|x-y| , grad V(x) - grad V(y) + grad_x W(x,z) - grad_x W(y,z) >

Builtin families have closed forms (or closed-form upper bounds). General
models get a Monte-Carlo estimate of the supremum, which can only
underestimate it and is therefore flagged approximate.
"""

import logging
from typing import Callable, NamedTuple

import numpy as np

from mfgap.errors import NonDissipativeError
from mfgap.potentials.models import MeanFieldModel

logger = logging.getLogger(__name__)


class DissipativityProfile(NamedTuple):
    """b0 as an analytic callable or as the piecewise bound -a r + c 1[r <= R]"""
    kind: str  # "analytic" or "piecewise"
    b0: Callable[[np.ndarray], np.ndarray] | None = None
    slope: float | None = None  # a = c_V + c_W
    jump: float | None = None  # c = c1' + c2
    radius: float | None = None  # R
    quality: str = "exact"  # "exact", "upper_bound" or "approximate"
    breakpoints: tuple[float, ...] = ()

    @property
    def approximate(self) -> bool:
        return self.quality == "approximate"

    def evaluate(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "piecewise":
            return -self.slope * r + self.jump * (r <= self.radius)
        return np.asarray(self.b0(r), dtype=float)


class SamplingBudget(NamedTuple):
    """Monte-Carlo budget for suprema that have no closed form"""
    n_samples: int = 2000
    n_directions: int = 16
    box: float = 5.0
    r_max: float = 20.0
    n_r: int = 200
    seed: int = 0


class ExplicitConstants(NamedTuple):
    """Constants (c_V, c1', c_W, c2, R) of the dissipativity-at-infinity conditions"""
    c_v: float
    c1: float
    c_w: float
    c2: float
    radius: float


def analytic_profile(b0: Callable, quality: str = "exact", breakpoints: tuple[float, ...] = ()) -> DissipativityProfile:
    return DissipativityProfile(kind="analytic", b0=b0, quality=quality, breakpoints=breakpoints)


def piecewise_profile(c_v: float, c1: float, c_w: float, c2: float, radius: float) -> DissipativityProfile:
    """The bound b0(r) <= -(c_V + c_W) r + (c1 + c2) 1[r <= R]"""
    slope = c_v + c_w
    if not slope > 0:
        raise NonDissipativeError(f"Piecewise profile needs c_V + c_W > 0, got {slope:g}")
    if radius < 0 or c1 + c2 < 0:
        raise ValueError("Piecewise profile needs R >= 0 and c1 + c2 >= 0")
    return DissipativityProfile(
        kind="piecewise",
        slope=slope,
        jump=c1 + c2,
        radius=radius,
        quality="upper_bound",
        breakpoints=(radius,) if radius > 0 else (),
    )


def explicit_constants(model: MeanFieldModel) -> ExplicitConstants:
    """(c_V, c1', c_W, c2, R) for builtin models with known confinement constants"""
    if model.confinement is None:
        raise NonDissipativeError(f"Model '{model.name}' carries no confinement constants")
    conf = model.confinement
    tag = model.structure
    if tag.kind == "bilinear":
        c_w = 0.0  # grad_x W(x, z) - grad_x W(y, z) = 0
    elif tag.kind in ("radial", "fourier"):
        c_w = float(tag.hessian_lower)
    else:
        raise NonDissipativeError(f"No interaction dissipativity constants for structure '{tag.kind}'")
    return ExplicitConstants(c_v=conf.c_v, c1=conf.c1_prime, c_w=c_w, c2=0.0, radius=conf.radius)


def _kappa(model: MeanFieldModel) -> float:
    return float(model.params.get("kappa", 1.0))


def _double_well_b0(beta: float, extra_slope: float = 0.0):
    # -2 V'(r/2) = -2 beta (r^3/8 - r/2)
    def b0(r):
        r = np.asarray(r, dtype=float)
        return -2.0 * beta * (r**3 / 8.0 - r / 2.0) - extra_slope * r
    return b0


def _linear_b0(slope: float):
    def b0(r):
        return -slope * np.asarray(r, dtype=float)
    return b0


def _fourier_bound(model: MeanFieldModel):
    kappa = _kappa(model)
    c = float(model.structure.quadratic)
    frequencies = np.asarray(model.params["frequencies"], dtype=float).reshape(-1, model.dimension)
    weights = np.asarray(model.params["weights"], dtype=float).reshape(-1)
    norms = np.linalg.norm(frequencies, axis=1)

    def b0(r):
        r = np.asarray(r, dtype=float)
        oscillation = np.sum(
            2.0 * weights * norms * np.minimum(2.0, norms * r[..., None]), axis=-1
        )
        return -(kappa + c) * r + oscillation

    return b0


def dissipativity_profile(model: MeanFieldModel, sampling: SamplingBudget | None = None) -> DissipativityProfile:
    """
    Dissipativity rate b0 of the drift of one particle

    Args:
        model: builtin or general model
        sampling: Monte-Carlo budget used only for models without a closed form

    Returns:
        DissipativityProfile; quality "approximate" for sampled profiles
    """
    name = model.name
    if name in ("free", "gaussian", "bilinear"):
        # bilinear W leaves b0 unchanged
        return analytic_profile(_linear_b0(_kappa(model)))
    if name == "curie_weiss":
        return analytic_profile(_double_well_b0(float(model.params["beta"])))
    if name == "double_well_radial":
        beta = float(model.params["beta"])
        return analytic_profile(_double_well_b0(beta, extra_slope=-beta * float(model.params["K"])))
    if name == "radial_quadratic":
        return analytic_profile(_linear_b0(_kappa(model) + float(model.params["c_w"])))
    if name == "fourier":
        breaks = tuple(float(2.0 / n) for n in np.linalg.norm(
            np.asarray(model.params["frequencies"], dtype=float).reshape(-1, model.dimension), axis=1
        ) if n > 0)
        return analytic_profile(_fourier_bound(model), quality="upper_bound", breakpoints=tuple(sorted(breaks)))
    return sampled_profile(model, sampling or SamplingBudget())


def sampled_profile(model: MeanFieldModel, budget: SamplingBudget) -> DissipativityProfile:
    """
    Monte-Carlo lower estimate of b0 on a grid of r values

    x and z are drawn uniformly from [-box, box]^d, x - y runs over a fixed set of
    random unit directions scaled to r. The profile is interpolated linearly on
    the r grid and continued linearly beyond r_max with the last slope.
    """
    d = model.dimension
    rng = np.random.default_rng(budget.seed)
    directions = rng.standard_normal((budget.n_directions, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    x = rng.uniform(-budget.box, budget.box, size=(budget.n_samples, d))
    z = rng.uniform(-budget.box, budget.box, size=(budget.n_samples, d))
    e = directions[np.arange(budget.n_samples) % budget.n_directions]

    r_grid = np.linspace(budget.r_max / budget.n_r, budget.r_max, budget.n_r)
    values = np.empty_like(r_grid)
    grad_x = model.grad_V(x) + model.grad_x_W(x, z)
    for k, r in enumerate(r_grid):
        y = x - r * e
        difference = grad_x - model.grad_V(y) - model.grad_x_W(y, z)
        values[k] = np.max(-np.sum(e * difference, axis=-1))

    logger.info("Sampled b0 for '%s' on %d radii with %d triples each", model.name, budget.n_r, budget.n_samples)

    nodes = np.concatenate([[0.0], r_grid])
    table = np.concatenate([[0.0], values])
    tail_slope = (table[-1] - table[-2]) / (nodes[-1] - nodes[-2])

    def b0(r):
        r = np.asarray(r, dtype=float)
        inside = np.interp(r, nodes, table)
        return np.where(r <= nodes[-1], inside, table[-1] + tail_slope * (r - nodes[-1]))

    return analytic_profile(b0, quality="approximate", breakpoints=tuple(float(v) for v in r_grid))
