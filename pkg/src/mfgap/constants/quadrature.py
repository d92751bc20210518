"""
c_Lip,m = (1/4) int_0^inf exp{ (1/4) int_0^s b0(u) du } s ds

The outer integral runs panel by panel with QUADPACK's adaptive Gauss-Kronrod
rule. The inner integral is carried cumulatively: its value at the left edge
of each panel is kept, and only the part inside the current panel is
evaluated, by fixed high-order Gauss-Legendre, at the outer rule's nodes.
"""

import logging
import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import integrate
from scipy.special import roots_legendre

from mfgap.errors import NonIntegrableError
from mfgap.potentials.dissipativity import DissipativityProfile

logger = logging.getLogger(__name__)


class QuadratureOptions(NamedTuple):
    abs_tol: float = 1e-10
    s_max: float = 1e3
    panel_width: float = 1.0
    inner_nodes: int = 32


@lru_cache(maxsize=8)
def _legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_legendre(n)
    return nodes, weights


def _panel_edges(breakpoints: tuple[float, ...], width: float, s_max: float):
    """Yield panel right edges: every `width`, plus every profile breakpoint"""
    pending = sorted(b for b in breakpoints if b > 0)
    edge = 0.0
    while edge < s_max:
        nxt = edge + width
        while pending and pending[0] <= edge:
            pending.pop(0)
        if pending and pending[0] < nxt:
            nxt = pending.pop(0)
        edge = nxt
        yield edge


def c_lip_m(profile: DissipativityProfile, quad: QuadratureOptions = QuadratureOptions()) -> float:
    """
    Lipschitzian spectral gap constant of one particle

    Args:
        profile: dissipativity rate b0
        quad: tolerance and truncation options

    Returns:
        c_Lip,m within quad.abs_tol

    Raises:
        NonIntegrableError: the integrand has not decayed below abs_tol * 1e-3 by s_max
    """
    nodes, weights = _legendre(quad.inner_nodes)
    b0 = profile.evaluate

    def inner(a: float, s: float) -> float:
        half = 0.5 * (s - a)
        return half * float(weights @ b0(a + half * (nodes + 1.0)))

    threshold = quad.abs_tol * 1e-3
    total = 0.0
    cumulative = 0.0  # int_0^a b0
    left = 0.0
    panels = 0
    for right in _panel_edges(profile.breakpoints, quad.panel_width, quad.s_max):
        base = cumulative

        def integrand(s, a=left, base=base):
            return 0.25 * s * math.exp(0.25 * (base + inner(a, s)))

        try:
            value, _ = integrate.quad(
                integrand, left, right, epsabs=threshold, epsrel=1e-12, limit=200
            )
        except OverflowError:
            raise NonIntegrableError(
                f"c_Lip,m integrand overflows on [{left:g}, {right:g}]; b0 is not dissipative enough"
            ) from None
        total += value
        cumulative += inner(left, right)
        if 0.25 * cumulative > 700.0:
            raise NonIntegrableError(f"c_Lip,m integrand overflows by s={right:g}; b0 is not dissipative enough")
        left = right
        panels += 1

        edge_value = 0.25 * right * math.exp(0.25 * cumulative)
        decreasing = float(b0(right)) * right / 4.0 + 1.0 < 0.0
        if edge_value < threshold and decreasing:
            logger.debug("c_lip_m truncated at s=%.3f after %d panels", right, panels)
            return total

    raise NonIntegrableError(
        f"c_Lip,m integrand still above {threshold:.1e} (or increasing) at s_max={quad.s_max:g}"
    )
