"""
Empirical estimators on particle samples and trajectories

Relaxation rates come from the stationary autocovariance of an observable
along ULA chains; covariances from pooled MALA samples with jackknife
standard errors over chains.
"""

import logging
import math
from typing import Callable, NamedTuple

import numpy as np

from mfgap.errors import InsufficientSignal
from mfgap.particles.dynamics import drift, initial_ensemble, simulate
from mfgap.particles.rng import LANE_NORMAL
from mfgap.particles.sampler import GibbsSampleSet
from mfgap.potentials.models import MeanFieldModel

logger = logging.getLogger(__name__)


# ============================================================
# Observables
# ============================================================
def magnetization(x: np.ndarray) -> np.ndarray:
    return x[..., :, 0].mean(axis=-1)


def contrast(x: np.ndarray) -> np.ndarray:
    return x[..., 0, 0] - x[..., 1, 0]


def first_coordinate(x: np.ndarray) -> np.ndarray:
    return x[..., 0, 0]


OBSERVABLES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "magnetization": magnetization,
    "contrast": contrast,
    "first_coordinate": first_coordinate,
}


def observable(name: str) -> Callable[[np.ndarray], np.ndarray]:
    try:
        return OBSERVABLES[name]
    except KeyError:
        raise ValueError(f"Unknown observable '{name}'; available: {sorted(OBSERVABLES)}") from None


# ============================================================
# Spectral gap
# ============================================================
class GapOptions(NamedTuple):
    dt: float = 0.1
    n_chains: int = 32
    n_steps: int = 20000
    burn_in: int = 500
    max_lag: int = 400
    min_fraction: float = 0.05  # lags stop once the autocovariance falls below this share of lag 0
    n_bootstrap: int = 200
    seed: int = 0
    extrapolate: bool = True


class GapEstimate(NamedTuple):
    observable: str
    rate: float
    ci_low: float
    ci_high: float
    rate_dt: float
    rate_half_dt: float | None
    lags_used: int
    dt: float

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)


def _series(model, n_particles, obs, options: GapOptions, dt: float, n_steps: int, burn_in: int) -> np.ndarray:
    """Observable along C stationary ULA chains, shape (C, n_steps)"""
    ensemble = initial_ensemble(n_particles, model.dimension, dt, options.seed, replicas=options.n_chains)
    ensemble = simulate(ensemble, model, burn_in).final
    x = ensemble.positions
    values = np.empty((options.n_chains, n_steps))
    draws = ensemble.streams.draws(LANE_NORMAL, ensemble.step, n_steps, x.shape[1:])
    noise_scale = math.sqrt(2.0 * dt)
    for k in range(n_steps):
        x = x + dt * drift(model, x) + noise_scale * next(draws)
        values[:, k] = obs(x)
    return values


def _chain_autocovariance(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Per-chain autocovariance at lags 0..max_lag about the pooled mean, shape (C, max_lag + 1)"""
    centred = series - series.mean()
    n = centred.shape[1]
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centred, size, axis=1)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size, axis=1)[:, : max_lag + 1]
    return acov / (n - np.arange(max_lag + 1))


def _window(acov: np.ndarray, min_fraction: float) -> int:
    """Number of leading lags (from lag 1) whose pooled autocovariance exceeds 5 standard errors"""
    mean = acov.mean(axis=0)
    se = acov.std(axis=0, ddof=1) / math.sqrt(acov.shape[0])
    count = 0
    for lag in range(1, acov.shape[1]):
        if mean[lag] <= 5.0 * se[lag] or mean[lag] <= min_fraction * mean[0]:
            break
        count += 1
    return count


def _fit_rate(acov_mean: np.ndarray, lags: int, dt: float) -> float:
    k = np.arange(1, lags + 1)
    slope = np.polyfit(k * dt, np.log(acov_mean[1:lags + 1]), 1)[0]
    return float(-slope)


def _rate_with_bootstrap(acov: np.ndarray, lags: int, dt: float, rng: np.random.Generator, n_bootstrap: int):
    rate = _fit_rate(acov.mean(axis=0), lags, dt)
    replicates = np.empty(n_bootstrap)
    C = acov.shape[0]
    for b in range(n_bootstrap):
        mean = acov[rng.integers(0, C, size=C)].mean(axis=0)
        if np.any(mean[1:lags + 1] <= 0):
            replicates[b] = np.nan
            continue
        replicates[b] = _fit_rate(mean, lags, dt)
    return rate, replicates


def estimate_spectral_gap(
    model: MeanFieldModel,
    n_particles: int,
    observable_name: str = "magnetization",
    options: GapOptions = GapOptions(),
) -> GapEstimate:
    """
    Relaxation rate of an observable from its stationary autocovariance

    The log autocovariance is fitted by least squares over the leading lags
    that stay above 5 standard errors; the confidence interval is a 95%
    bootstrap over chains. With `extrapolate`, a second run at dt/2 is
    Richardson-combined as 2 rate(dt/2) - rate(dt).

    Raises:
        InsufficientSignal: fewer than two lags qualify
    """
    obs = observable(observable_name)
    rng = np.random.default_rng(options.seed)

    def one_run(dt: float, scale: int):
        series = _series(model, n_particles, obs, options, dt, options.n_steps * scale, options.burn_in * scale)
        acov = _chain_autocovariance(series, options.max_lag * scale)
        lags = _window(acov, options.min_fraction)
        if lags < 2:
            raise InsufficientSignal(
                f"Observable '{observable_name}' has no autocovariance window above 5 standard errors at dt={dt:g}"
            )
        return _rate_with_bootstrap(acov, lags, dt, rng, options.n_bootstrap), lags

    (rate_dt, boot_dt), lags = one_run(options.dt, 1)
    rate_half = None
    rate, boot = rate_dt, boot_dt
    if options.extrapolate:
        (rate_half, boot_half), lags = one_run(options.dt / 2.0, 2)
        rate = 2.0 * rate_half - rate_dt
        boot = 2.0 * boot_half - boot_dt
    boot = boot[np.isfinite(boot)]
    if boot.size:
        ci_low, ci_high = (float(v) for v in np.percentile(boot, [2.5, 97.5]))
    else:
        ci_low = ci_high = rate
    logger.info("Relaxation rate of '%s': %.4f [%.4f, %.4f]", observable_name, rate, ci_low, ci_high)
    return GapEstimate(
        observable=observable_name,
        rate=float(rate),
        ci_low=min(ci_low, rate),
        ci_high=max(ci_high, rate),
        rate_dt=float(rate_dt),
        rate_half_dt=None if rate_half is None else float(rate_half),
        lags_used=int(lags),
        dt=float(options.dt),
    )


# ============================================================
# Covariances
# ============================================================
class CovarianceEstimate(NamedTuple):
    estimate: float
    standard_error: float
    n_samples: int


def _groups(samples: GibbsSampleSet, min_groups: int = 8, n_blocks: int = 32) -> np.ndarray:
    """Jackknife groups: chains when there are enough of them, else contiguous blocks"""
    ids = np.unique(samples.chain_ids, return_inverse=True)[1]
    if ids.max() + 1 >= min_groups:
        return ids
    return np.arange(samples.n_samples) * n_blocks // samples.n_samples


def _jackknife(statistic: Callable[[np.ndarray], float], sums: np.ndarray) -> tuple[float, float]:
    """sums has shape (G, k): per-group sufficient statistics; statistic maps totals to a value"""
    total = sums.sum(axis=0)
    estimate = statistic(total)
    G = sums.shape[0]
    leave_out = np.array([statistic(total - sums[g]) for g in range(G)])
    se = math.sqrt((G - 1) / G * np.sum((leave_out - leave_out.mean()) ** 2))
    return float(estimate), se


def estimate_pair_covariance(
    samples: GibbsSampleSet,
    f: Callable[[np.ndarray], np.ndarray] = np.tanh,
    g: Callable[[np.ndarray], np.ndarray] | None = None,
    coordinate: int = 0,
) -> CovarianceEstimate:
    """
    Cov(f(x_i), g(x_j)), i != j, pooled over all ordered pairs of particles

    Uses F = sum_i f(x_i), G = sum_i g(x_i) and D = sum_i f(x_i) g(x_i):
    the mean of f(x_i) g(x_j) over i != j is (F G - D) / (N (N - 1)).
    """
    g = g or f
    x = samples.samples[..., coordinate]
    N = x.shape[1]
    fx, gx = f(x), g(x)
    F, G, D = fx.sum(axis=1), gx.sum(axis=1), (fx * gx).sum(axis=1)
    per_sample = np.stack([np.ones_like(F), F / N, G / N, (F * G - D) / (N * (N - 1))], axis=1)
    groups = _groups(samples)
    sums = np.zeros((groups.max() + 1, 4))
    np.add.at(sums, groups, per_sample)

    def statistic(t):
        n = t[0]
        return t[3] / n - (t[1] / n) * (t[2] / n)

    estimate, se = _jackknife(statistic, sums)
    return CovarianceEstimate(estimate=estimate, standard_error=se, n_samples=samples.n_samples)


def estimate_covariance_matrix(samples: GibbsSampleSet, coordinate: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance of (x_1, ..., x_N) in one coordinate and its jackknife standard errors"""
    x = samples.samples[..., coordinate]
    M, N = x.shape
    groups = _groups(samples)
    G = groups.max() + 1
    counts = np.bincount(groups, minlength=G).astype(float)
    first = np.zeros((G, N))
    np.add.at(first, groups, x)
    second = np.zeros((G, N, N))
    np.add.at(second, groups, x[:, :, None] * x[:, None, :])

    def covariance(n, s1, s2):
        mean = s1 / n
        return s2 / n - np.outer(mean, mean)

    estimate = covariance(counts.sum(), first.sum(axis=0), second.sum(axis=0))
    leave_out = np.stack([
        covariance(counts.sum() - counts[k], first.sum(axis=0) - first[k], second.sum(axis=0) - second[k])
        for k in range(G)
    ])
    se = np.sqrt((G - 1) / G * np.sum((leave_out - leave_out.mean(axis=0)) ** 2, axis=0))
    return estimate, se
