"""
N-particle mean-field Langevin dynamics

dX_i = -grad V(X_i) dt - (1/(N-1)) sum_{j != i} grad_x W(X_i, X_j) dt + sqrt(2) dB_i

Positions are arrays of shape (R, N, d): R independent replicas of the
N-particle system, advanced together.
"""

import logging
import math
from typing import Callable, NamedTuple

import numpy as np
from scipy import stats

from mfgap.errors import BlowupError
from mfgap.particles.rng import LANE_INITIAL, LANE_NORMAL, StreamBank
from mfgap.potentials.models import MeanFieldModel

logger = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 1e8

# pair blocks are evaluated in chunks of rows so that chunk * N stays below this
_PAIR_CHUNK = 1 << 18


# ============================================================
# Drift and energy
# ============================================================
def _pair_sum(field: Callable, x: np.ndarray) -> np.ndarray:
    """sum_{j != i} field(x_i, x_j) for every i; x has shape (..., N, d)"""
    N = x.shape[-2]
    rows = max(1, _PAIR_CHUNK // max(N, 1))
    sample = field(x[..., :1, None, :], x[..., None, :1, :])
    total = np.empty(x.shape[:-1] + sample.shape[x.ndim:], dtype=float)
    lead = (slice(None),) * (x.ndim - 2)
    for start in range(0, N, rows):
        block = field(x[..., start:start + rows, None, :], x[..., None, :, :])
        total[lead + (slice(start, start + rows),)] = block.sum(axis=x.ndim - 1)
    return total - field(x, x)


def interaction_force(model: MeanFieldModel, positions: np.ndarray) -> np.ndarray:
    """(1/(N-1)) sum_{j != i} grad_x W(x_i, x_j), shape (..., N, d)"""
    x = np.asarray(positions, dtype=float)
    N = x.shape[-2]
    if N < 2:
        raise ValueError(f"Need N >= 2 particles, got {N}")
    if model.structure.kind == "bilinear":
        # grad_x W(x, y) = J y, so the pair sum only needs sum_j x_j
        others = x.sum(axis=-2, keepdims=True) - x
        return others @ model.structure.coupling.T / (N - 1)
    return _pair_sum(model.grad_x_W, x) / (N - 1)


def drift(model: MeanFieldModel, positions: np.ndarray) -> np.ndarray:
    """
    Mean-field drift -grad H_N

    Args:
        model: mean-field model
        positions: array of shape (N, d) or (R, N, d)

    Returns:
        array of the same shape; row i is -grad V(x_i) - (1/(N-1)) sum_{j != i} grad_x W(x_i, x_j)
    """
    x = np.asarray(positions, dtype=float)
    return -model.grad_V(x) - interaction_force(model, x)


def hamiltonian(model: MeanFieldModel, positions: np.ndarray) -> np.ndarray:
    """H_N = sum_i V(x_i) + (1/(N-1)) sum_{i<j} W(x_i, x_j), shape (...)"""
    x = np.asarray(positions, dtype=float)
    N = x.shape[-2]
    confinement = model.V(x).sum(axis=-1)
    if model.structure.kind == "bilinear":
        J = model.structure.coupling
        total = x.sum(axis=-2)
        pairs = 0.5 * (np.einsum("...i,ij,...j->...", total, J, total) - np.einsum("...ni,ij,...nj->...", x, J, x))
    else:
        pairs = 0.5 * _pair_sum(model.W, x).sum(axis=-1)
    return confinement + pairs / (N - 1)


# ============================================================
# Ensembles
# ============================================================
class ParticleEnsemble(NamedTuple):
    """R replicas of an N-particle system in R^d with their clock and random streams"""
    positions: np.ndarray  # (R, N, d)
    time: float
    step: int
    dt: float
    streams: StreamBank

    @property
    def n_particles(self) -> int:
        return self.positions.shape[1]

    @property
    def dimension(self) -> int:
        return self.positions.shape[2]

    @property
    def n_replicas(self) -> int:
        return self.positions.shape[0]


class Trajectory(NamedTuple):
    steps: np.ndarray  # (K,)
    times: np.ndarray  # (K,)
    positions: np.ndarray  # (K, R, N, d)
    final: ParticleEnsemble

    def rows(self, replica: int = 0):
        """CSV rows (step, time, particle, coord_0, ..., coord_{d-1}) of one replica"""
        for k, (step, time) in enumerate(zip(self.steps, self.times)):
            for i, point in enumerate(self.positions[k, replica]):
                yield [int(step), float(time), i, *(float(v) for v in point)]

    @staticmethod
    def header(dimension: int) -> list[str]:
        return ["step", "time", "particle", *(f"coord_{k}" for k in range(dimension))]


def initial_ensemble(
    n_particles: int,
    dimension: int,
    dt: float,
    seed: int,
    quantile: Callable[[np.ndarray], np.ndarray] | None = None,
    replicas: int = 1,
    first_replica: int = 0,
) -> ParticleEnsemble:
    """
    Ensemble drawn from a product law by inverse-CDF sampling

    Args:
        n_particles: N >= 2
        dimension: d
        dt: step size
        seed: master seed
        quantile: inverse CDF of the one-dimensional initial law applied to
            every coordinate (default standard normal; GridMeasure.quantile fits)
        replicas: R
        first_replica: stream index of the first replica

    Returns:
        ParticleEnsemble at time 0
    """
    if n_particles < 2:
        raise ValueError(f"Need N >= 2 particles, got {n_particles}")
    if not dt >= 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    bank = StreamBank.range(seed, replicas, first=first_replica)
    u = bank.draw(LANE_INITIAL, 0, (n_particles, dimension))
    u = np.clip(u, 1e-16, 1.0 - 1e-16)
    positions = (quantile or stats.norm.ppf)(u)
    return ParticleEnsemble(positions=np.asarray(positions, dtype=float), time=0.0, step=0, dt=float(dt), streams=bank)


def _check_finite(x: np.ndarray, step: int) -> None:
    max_abs = float(np.max(np.abs(x))) if x.size else 0.0
    if not math.isfinite(max_abs) or max_abs > BLOWUP_THRESHOLD:
        raise BlowupError(step, max_abs)


def _advance(model: MeanFieldModel, x: np.ndarray, dt: float, xi: np.ndarray | None) -> np.ndarray:
    x = x + dt * drift(model, x)
    if xi is not None:
        x = x + math.sqrt(2.0 * dt) * xi
    return x


def step_euler_maruyama(ensemble: ParticleEnsemble, model: MeanFieldModel, noise: bool = True) -> ParticleEnsemble:
    """x <- x + drift dt + sqrt(2 dt) xi with xi from each particle's stream at the current step"""
    if not ensemble.dt >= 0:
        raise ValueError("dt must be >= 0")
    xi = ensemble.streams.draw(LANE_NORMAL, ensemble.step, ensemble.positions.shape[1:]) if noise else None
    x = _advance(model, ensemble.positions, ensemble.dt, xi)
    _check_finite(x, ensemble.step + 1)
    return ensemble._replace(positions=x, time=ensemble.time + ensemble.dt, step=ensemble.step + 1)


def simulate(
    ensemble: ParticleEnsemble,
    model: MeanFieldModel,
    n_steps: int,
    record_every: int = 0,
    noise: bool = True,
) -> Trajectory:
    """
    Run n_steps Euler-Maruyama steps

    Identical to calling step_euler_maruyama n_steps times; draws are taken
    block-wise from the streams. With record_every = 0 only the final state
    is recorded.
    """
    x = ensemble.positions
    shape = x.shape[1:]
    dt = ensemble.dt
    steps, times, frames = [], [], []

    def record(step, time, positions):
        steps.append(step)
        times.append(time)
        frames.append(positions.copy())

    if record_every:
        record(ensemble.step, ensemble.time, x)

    draws = ensemble.streams.draws(LANE_NORMAL, ensemble.step, n_steps, shape) if noise else None
    for k in range(1, n_steps + 1):
        xi = next(draws) if noise else None
        x = _advance(model, x, dt, xi)
        _check_finite(x, ensemble.step + k)
        if record_every and k % record_every == 0:
            record(ensemble.step + k, ensemble.time + k * dt, x)

    final = ensemble._replace(positions=x, time=ensemble.time + n_steps * dt, step=ensemble.step + n_steps)
    if not record_every or n_steps % record_every:
        record(final.step, final.time, x)
    logger.debug("Simulated %d steps of %d x %d particles", n_steps, ensemble.n_replicas, ensemble.n_particles)
    return Trajectory(
        steps=np.asarray(steps),
        times=np.asarray(times),
        positions=np.stack(frames),
        final=final,
    )
