"""
Probability densities on a uniform 1-D grid

A GridMeasure stores cell-centred density values. Moments and functionals use
the midpoint rule (atoms f_i dx at the centres); the distribution function is
the piecewise-linear integral of the piecewise-constant density, which is what
quantiles and Wasserstein distances use.
"""

import logging
import math
from typing import NamedTuple

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from mfgap.errors import MassLeak
from mfgap.potentials.models import MeanFieldModel

logger = logging.getLogger(__name__)

LEAK_THRESHOLD = 1e-8


class Grid(NamedTuple):
    x_min: float
    x_max: float
    n_cells: int

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_cells + 1)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.x_min, self.x_max, self.n_cells * factor)


def make_grid(x_min: float, x_max: float, n_cells: int) -> Grid:
    if not x_max > x_min:
        raise ValueError(f"Grid needs x_max > x_min, got [{x_min}, {x_max}]")
    if n_cells < 3:
        raise ValueError(f"Grid needs at least 3 cells, got {n_cells}")
    return Grid(float(x_min), float(x_max), int(n_cells))


class GridMeasure(NamedTuple):
    grid: Grid
    density: np.ndarray
    # exact log of the density where it is known in closed form; density may underflow in the tails
    log_density: np.ndarray | None = None

    @property
    def dx(self) -> float:
        return self.grid.dx

    @property
    def centers(self) -> np.ndarray:
        return self.grid.centers

    @property
    def weights(self) -> np.ndarray:
        """Cell masses f_i dx"""
        return self.density * self.grid.dx

    def mass(self) -> float:
        return float(np.sum(self.weights))

    def moment(self, k: int) -> float:
        return float(np.sum(self.weights * self.centers**k))

    def mean(self) -> float:
        return self.moment(1)

    def variance(self) -> float:
        m = self.mean()
        return float(np.sum(self.weights * (self.centers - m) ** 2))

    def boundary_mass(self) -> float:
        return float(self.weights[0] + self.weights[-1])

    def cdf(self) -> np.ndarray:
        """Distribution function at the n + 1 cell edges"""
        return np.concatenate([[0.0], np.cumsum(self.weights)])

    def quantile(self, u) -> np.ndarray:
        """Inverse of the piecewise-linear distribution function"""
        u = np.asarray(u, dtype=float)
        cdf = self.cdf()
        cdf /= cdf[-1]
        cell = np.clip(np.searchsorted(cdf, u, side="left") - 1, 0, self.grid.n_cells - 1)
        mass = cdf[cell + 1] - cdf[cell]
        frac = np.divide(u - cdf[cell], mass, out=np.zeros_like(u, dtype=float), where=mass > 0)
        return self.grid.x_min + (cell + np.clip(frac, 0.0, 1.0)) * self.grid.dx

    def check_leak(self, threshold: float = LEAK_THRESHOLD) -> "GridMeasure":
        boundary = self.boundary_mass()
        if boundary >= threshold:
            raise MassLeak(boundary, threshold)
        return self

    def rows(self):
        """CSV rows (x_center, density)"""
        for x, f in zip(self.centers, self.density):
            yield [float(x), float(f)]


def normalized(grid: Grid, values: np.ndarray) -> GridMeasure:
    values = np.asarray(values, dtype=float)
    total = float(np.sum(values)) * grid.dx
    if not total > 0 or not np.isfinite(total):
        raise ValueError("Cannot normalise a density with non-positive or non-finite mass")
    return GridMeasure(grid, values / total)


def boltzmann(grid: Grid, potential: np.ndarray, leak_threshold: float | None = LEAK_THRESHOLD) -> GridMeasure:
    """Normalised exp(-U) sampled at the cell centres, with log density -U - log sum exp(-U) dx"""
    potential = np.asarray(potential, dtype=float)
    log_density = -potential - logsumexp(-potential + math.log(grid.dx))
    if not np.isfinite(log_density).any():
        raise ValueError("Cannot normalise a density with non-positive or non-finite mass")
    measure = GridMeasure(grid, np.exp(log_density), log_density)
    return measure if leak_threshold is None else measure.check_leak(leak_threshold)


def reference_measure(model: MeanFieldModel, grid: Grid, leak_threshold: float | None = LEAK_THRESHOLD) -> GridMeasure:
    """alpha = exp(-V) dx / C on the grid"""
    return boltzmann(grid, model.V(model.as_points(grid.centers)), leak_threshold)


def gaussian_measure(grid: Grid, mean: float, variance: float) -> GridMeasure:
    return normalized(grid, stats.norm.pdf(grid.centers, loc=mean, scale=np.sqrt(variance)))


def tilted_measure(base: GridMeasure, tilt: float) -> GridMeasure:
    """base * exp(tilt x), normalised"""
    x = base.centers
    return normalized(base.grid, base.density * np.exp(tilt * x - np.max(tilt * x)))


def point_mass(grid: Grid, a: float) -> GridMeasure:
    """All mass in the cell containing a"""
    cell = int(np.clip((a - grid.x_min) // grid.dx, 0, grid.n_cells - 1))
    density = np.zeros(grid.n_cells)
    density[cell] = 1.0 / grid.dx
    return GridMeasure(grid, density)


def empirical_measure(grid: Grid, samples: np.ndarray) -> GridMeasure:
    """Histogram of the samples with one bin per cell; samples off the grid go to the end cells"""
    samples = np.asarray(samples, dtype=float).ravel()
    outside = int(np.sum((samples < grid.x_min) | (samples > grid.x_max)))
    if outside:
        logger.warning("%d of %d samples fall outside [%g, %g]", outside, samples.size, grid.x_min, grid.x_max)
    clipped = np.clip(samples, grid.x_min, grid.x_max)
    counts, _ = np.histogram(clipped, bins=grid.edges)
    return normalized(grid, counts.astype(float))
