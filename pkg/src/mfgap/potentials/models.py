"""
Mean-field model records

A model is a confinement potential V on R^d and a symmetric pair interaction
W on R^d x R^d, each with exact derivatives. Every callable is vectorised over
leading axes: points are arrays of shape (..., d).
"""

from typing import Callable, NamedTuple

import numpy as np


ScalarField = Callable[[np.ndarray], np.ndarray]
VectorField = Callable[[np.ndarray], np.ndarray]
PairField = Callable[[np.ndarray, np.ndarray], np.ndarray]

STRUCTURE_KINDS = ("general", "bilinear", "radial", "fourier")


class StructureTag(NamedTuple):
    """Structural metadata used by the analytic constant formulas"""
    kind: str  # one of STRUCTURE_KINDS
    coupling: np.ndarray | None = None  # bilinear: W(x, y) = x . J y
    hessian_lower: float | None = None  # radial: c_W I <= Hess W0
    hessian_upper: float | None = None  # radial: Hess W0 <= C_W I
    quadratic: float | None = None  # fourier: the c of (c/2)|x|^2
    gamma_nu: np.ndarray | None = None  # fourier: second-moment matrix of nu


class ConfinementParams(NamedTuple):
    """Growth (H1) and dissipativity-at-infinity constants of V"""
    c1: float  # x . grad V(x) >= c1 |x|^2 - c2
    c2: float
    c_v: float  # <grad V(x) - grad V(y), x - y> >= c_V |x-y|^2 - c1' |x-y| 1[|x-y| <= R]
    c1_prime: float
    radius: float


class MeanFieldModel(NamedTuple):
    """Confinement V and interaction W with exact first and second derivatives"""
    name: str
    dimension: int
    V: ScalarField
    grad_V: VectorField
    hess_V: Callable[[np.ndarray], np.ndarray]
    W: PairField
    grad_x_W: PairField
    cross_hess_W: PairField
    structure: StructureTag
    confinement: ConfinementParams | None = None
    params: dict[str, float] | None = None

    @property
    def has_interaction(self) -> bool:
        if self.structure.kind == "bilinear":
            return bool(np.any(self.structure.coupling != 0.0))
        return True

    def as_points(self, x: np.ndarray) -> np.ndarray:
        """Lift a 1-D array of scalars to points of shape (n, 1) for d = 1 models"""
        x = np.asarray(x, dtype=float)
        if self.dimension != 1:
            raise ValueError(f"Model '{self.name}' has dimension {self.dimension}, expected 1")
        return x[..., None]


def general_model(
    V: ScalarField,
    grad_V: VectorField,
    hess_V: Callable[[np.ndarray], np.ndarray],
    W: PairField,
    grad_x_W: PairField,
    cross_hess_W: PairField,
    dimension: int = 1,
    name: str = "general",
    confinement: ConfinementParams | None = None,
) -> MeanFieldModel:
    """Wrap user callables as a model with no analytic structure"""
    if dimension < 1:
        raise ValueError("dimension must be a positive integer")
    return MeanFieldModel(
        name=name,
        dimension=dimension,
        V=V,
        grad_V=grad_V,
        hess_V=hess_V,
        W=W,
        grad_x_W=grad_x_W,
        cross_hess_W=cross_hess_W,
        structure=StructureTag(kind="general"),
        confinement=confinement,
        params={},
    )
