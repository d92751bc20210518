"""
Gibbs sampling of mu^(N) ~ exp(-H_N)

Chains are vectorised: all chains advance together as one (C, N, d) array,
chain c drawing from stream c. MALA corrects the Langevin proposal with a
Metropolis step that only needs H_N differences; ULA is the uncorrected chain.
"""

import logging
import math
from typing import NamedTuple

import numpy as np

from mfgap.errors import BlowupError, DegenerateAcceptance
from mfgap.particles.dynamics import BLOWUP_THRESHOLD, drift, hamiltonian, initial_ensemble
from mfgap.particles.rng import LANE_NORMAL, LANE_UNIFORM
from mfgap.potentials.models import MeanFieldModel

logger = logging.getLogger(__name__)

MIN_ACCEPTANCE = 0.01


class GibbsSampleSet(NamedTuple):
    samples: np.ndarray  # (M, N, d)
    chain_ids: np.ndarray  # (M,)
    sampler: str  # "MALA" or "ULA"
    acceptance_rate: float | None
    dt: float
    thin: int
    burn_in: int

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


def _log_proposal(y: np.ndarray, x: np.ndarray, drift_x: np.ndarray, dt: float) -> np.ndarray:
    """log q(y | x) up to a constant"""
    residual = y - x - dt * drift_x
    return -np.sum(residual**2, axis=(-2, -1)) / (4.0 * dt)


def _run_chains(
    model: MeanFieldModel,
    n_particles: int,
    n_samples: int,
    dt: float,
    burn_in: int,
    seed: int,
    thin: int,
    chains: int,
    metropolis: bool,
    first_chain: int,
) -> GibbsSampleSet:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    thin = max(1, int(thin))
    chains = max(1, min(int(chains), n_samples))
    per_chain = math.ceil(n_samples / chains)
    n_steps = burn_in + per_chain * thin

    ensemble = initial_ensemble(n_particles, model.dimension, dt, seed, replicas=chains, first_replica=first_chain)
    x = ensemble.positions
    shape = x.shape[1:]
    energy = hamiltonian(model, x)
    if not np.all(np.isfinite(energy)):
        raise BlowupError(0, float(np.max(np.abs(x))))
    b = drift(model, x)

    normals = ensemble.streams.draws(LANE_NORMAL, 0, n_steps, shape)
    uniforms = ensemble.streams.draws(LANE_UNIFORM, 0, n_steps, ()) if metropolis else None
    out = np.empty((chains, per_chain) + shape)
    accepted = 0
    proposals = 0
    noise_scale = math.sqrt(2.0 * dt)

    for step in range(n_steps):
        y = x + dt * b + noise_scale * next(normals)
        max_abs = float(np.max(np.abs(y)))
        if not math.isfinite(max_abs) or max_abs > BLOWUP_THRESHOLD:
            raise BlowupError(step + 1, max_abs)
        b_y = drift(model, y)
        if metropolis:
            energy_y = hamiltonian(model, y)
            log_ratio = energy - energy_y + _log_proposal(x, y, b_y, dt) - _log_proposal(y, x, b, dt)
            u = next(uniforms)
            accept = np.log(u) < log_ratio
            x = np.where(accept[:, None, None], y, x)
            b = np.where(accept[:, None, None], b_y, b)
            energy = np.where(accept, energy_y, energy)
            if step >= burn_in:
                accepted += int(accept.sum())
                proposals += chains
        else:
            x, b = y, b_y
        kept = step - burn_in + 1
        if kept > 0 and kept % thin == 0:
            out[:, kept // thin - 1] = x

    acceptance = None
    if metropolis:
        acceptance = accepted / proposals if proposals else 0.0
        if acceptance < MIN_ACCEPTANCE:
            raise DegenerateAcceptance(acceptance, dt)
        logger.info("MALA acceptance %.3f over %d chains at dt=%g", acceptance, chains, dt)

    chain_ids = np.repeat(np.asarray(ensemble.streams.ids), per_chain)
    return GibbsSampleSet(
        samples=out.reshape((chains * per_chain,) + shape)[:n_samples],
        chain_ids=chain_ids[:n_samples],
        sampler="MALA" if metropolis else "ULA",
        acceptance_rate=acceptance,
        dt=float(dt),
        thin=thin,
        burn_in=int(burn_in),
    )


def sample_mala(
    model: MeanFieldModel,
    n_particles: int,
    n_samples: int,
    dt: float,
    burn_in: int,
    seed: int,
    thin: int = 1,
    chains: int = 64,
    first_chain: int = 0,
) -> GibbsSampleSet:
    """
    Metropolis-adjusted Langevin samples of mu^(N)

    Args:
        model: mean-field model
        n_particles: N >= 2
        n_samples: M, total number of post-burn-in samples over all chains
        dt: Langevin step size
        burn_in: steps discarded at the start of every chain
        seed: master seed; chain c uses stream first_chain + c
        thin: keep every thin-th state
        chains: number of chains run side by side

    Returns:
        GibbsSampleSet with the acceptance rate over post-burn-in proposals

    Raises:
        DegenerateAcceptance: acceptance below 1%
        BlowupError: a proposal left the finite range
    """
    return _run_chains(model, n_particles, n_samples, dt, burn_in, seed, thin, chains, True, first_chain)


def sample_ula(
    model: MeanFieldModel,
    n_particles: int,
    n_samples: int,
    dt: float,
    burn_in: int,
    seed: int,
    thin: int = 1,
    chains: int = 64,
    first_chain: int = 0,
) -> GibbsSampleSet:
    """Unadjusted Langevin samples (biased by O(dt))"""
    return _run_chains(model, n_particles, n_samples, dt, burn_in, seed, thin, chains, False, first_chain)
