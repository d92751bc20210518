"""
Tests for random streams, Langevin dynamics, MALA and the statistical estimators

Run with: uv run pytest tests/test_particles.py -v -s
"""

import numpy as np
import pytest
from scipy import integrate, stats

from mfgap.errors import BlowupError, DegenerateAcceptance
from mfgap.particles.dynamics import (
    Trajectory,
    drift,
    hamiltonian,
    initial_ensemble,
    interaction_force,
    simulate,
    step_euler_maruyama,
)
from mfgap.particles.estimators import (
    GapOptions,
    estimate_covariance_matrix,
    estimate_pair_covariance,
    estimate_spectral_gap,
    observable,
)
from mfgap.particles.gaussian import gaussian_covariance, gaussian_precision, gaussian_rates
from mfgap.particles.rng import BLOCK_STEPS, LANE_NORMAL, LANE_UNIFORM, CounterStream, StreamBank
from mfgap.particles.sampler import GibbsSampleSet, sample_mala, sample_ula
from mfgap.potentials.families import builtin_model
from mfgap.potentials.models import general_model


def _general_gaussian(beta: float):
    """The Gaussian model without its bilinear structure tag, so pair sums take the generic path"""
    return general_model(
        V=lambda x: 0.5 * np.sum(x**2, axis=-1),
        grad_V=lambda x: np.asarray(x, dtype=float),
        hess_V=lambda x: np.broadcast_to(np.eye(1), x.shape + (1,)),
        W=lambda x, y: beta * np.sum(x * y, axis=-1),
        grad_x_W=lambda x, y: beta * np.broadcast_to(y, np.broadcast_shapes(x.shape, y.shape)),
        cross_hess_W=lambda x, y: beta * np.broadcast_to(np.eye(1), np.broadcast_shapes(x.shape, y.shape) + (1,)),
    )


# ============================================================
# Random streams
# ============================================================
def test_counter_stream_is_addressable():
    a = CounterStream(seed=11, stream=3)
    b = CounterStream(seed=11, stream=3)
    np.testing.assert_array_equal(a.block(LANE_NORMAL, 5, (4, 1)), b.block(LANE_NORMAL, 5, (4, 1)))
    assert not np.array_equal(a.block(LANE_NORMAL, 0, (4, 1)), a.block(LANE_NORMAL, 1, (4, 1)))
    assert not np.array_equal(a.block(LANE_NORMAL, 0, (4, 1)), CounterStream(11, 4).block(LANE_NORMAL, 0, (4, 1)))
    uniforms = a.block(LANE_UNIFORM, 0, ())
    assert uniforms.shape == (BLOCK_STEPS,)
    assert np.all((uniforms >= 0) & (uniforms < 1))
    with pytest.raises(ValueError):
        CounterStream(-1)


def test_stream_bank_draws_cross_block_boundaries():
    bank = StreamBank.range(seed=5, count=3)
    first = BLOCK_STEPS - 2
    together = list(bank.draws(LANE_NORMAL, first, 5, (2, 1)))
    assert len(together) == 5
    for k, draw in enumerate(together):
        assert draw.shape == (3, 2, 1)
        np.testing.assert_array_equal(draw, bank.draw(LANE_NORMAL, first + k, (2, 1)))


def test_stream_bank_rows_do_not_depend_on_the_split():
    whole = StreamBank.range(seed=5, count=4)
    tail = StreamBank.range(seed=5, count=2, first=2)
    assert tail.ids == (2, 3)
    np.testing.assert_array_equal(whole.draw(LANE_NORMAL, 7, (3, 1))[2:], tail.draw(LANE_NORMAL, 7, (3, 1)))


# ============================================================
# Dynamics
# ============================================================
def test_bilinear_fast_path_matches_pair_loop():
    beta = 0.7
    fast = builtin_model("gaussian", {"beta": beta})
    slow = _general_gaussian(beta)
    x = np.random.default_rng(0).standard_normal((3, 6, 1))
    np.testing.assert_allclose(interaction_force(fast, x), interaction_force(slow, x), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(hamiltonian(fast, x), hamiltonian(slow, x), rtol=1e-12, atol=1e-14)
    # drift = -A x for the Gaussian model
    A = gaussian_precision(beta, 6)
    np.testing.assert_allclose(drift(fast, x)[..., 0], -x[..., 0] @ A.T, rtol=1e-12, atol=1e-14)


def test_radial_drift_uses_pair_differences():
    model = builtin_model("radial_quadratic", {"c_w": 0.4})
    x = np.array([[[0.0], [1.0], [3.0]]])
    # grad_x W(x_i, x_j) = c_w (x_i - x_j), averaged over the other two particles
    expected_force = 0.4 * np.array([(0 - 1 + 0 - 3) / 2, (1 - 0 + 1 - 3) / 2, (3 - 0 + 3 - 1) / 2])
    np.testing.assert_allclose(interaction_force(model, x)[0, :, 0], expected_force)


def test_simulate_equals_repeated_steps():
    model = builtin_model("curie_weiss", {"beta": 1.0, "K": 0.2})
    ensemble = initial_ensemble(5, 1, dt=0.01, seed=3, replicas=2)
    stepped = ensemble
    for _ in range(37):
        stepped = step_euler_maruyama(stepped, model)
    trajectory = simulate(ensemble, model, 37, record_every=10)
    np.testing.assert_allclose(trajectory.final.positions, stepped.positions, rtol=1e-13, atol=1e-13)
    assert trajectory.final.step == 37
    assert list(trajectory.steps) == [0, 10, 20, 30, 37]
    assert trajectory.positions.shape == (5, 2, 5, 1)

    rows = list(trajectory.rows(replica=1))
    assert len(rows) == 5 * 5
    assert Trajectory.header(1) == ["step", "time", "particle", "coord_0"]


def test_replicas_are_independent_of_batching():
    model = builtin_model("gaussian", {"beta": 0.5})
    together = simulate(initial_ensemble(4, 1, 0.05, seed=9, replicas=4), model, 50).final.positions
    alone = simulate(initial_ensemble(4, 1, 0.05, seed=9, replicas=1, first_replica=2), model, 50).final.positions
    np.testing.assert_allclose(together[2], alone[0], rtol=1e-13, atol=1e-13)


def test_noiseless_dynamics_contracts():
    model = builtin_model("gaussian", {"beta": 0.5})
    ensemble = initial_ensemble(3, 1, dt=0.01, seed=1)
    final = simulate(ensemble, model, 1000, noise=False).final
    assert np.max(np.abs(final.positions)) < np.max(np.abs(ensemble.positions)) * 2.0 * np.exp(-0.7 * 10.0) + 1e-12


def test_blowup_is_reported_with_the_step():
    model = builtin_model("curie_weiss", {"beta": 1.0, "K": 0.2})
    ensemble = initial_ensemble(3, 1, dt=5.0, seed=1)._replace(positions=np.full((1, 3, 1), 10.0))
    with pytest.raises(BlowupError) as excinfo:
        simulate(ensemble, model, 10, noise=False)
    assert excinfo.value.step >= 1


def test_initial_ensemble_uses_the_quantile():
    ensemble = initial_ensemble(4, 1, 0.1, seed=0, quantile=lambda u: 2.0 + 0.0 * u, replicas=3)
    assert ensemble.positions.shape == (3, 4, 1)
    assert np.all(ensemble.positions == 2.0)
    with pytest.raises(ValueError):
        initial_ensemble(1, 1, 0.1, seed=0)


# ============================================================
# Gaussian oracles
# ============================================================
def test_gaussian_oracles():
    beta, N = 0.5, 3
    A = gaussian_precision(beta, N)
    np.testing.assert_allclose(gaussian_covariance(beta, N) @ A, np.eye(N), atol=1e-14)
    rates = gaussian_rates(beta, N)
    assert rates["uniform"] == 1.5
    assert rates["zero_sum"] == 0.75
    assert rates["gap"] == pytest.approx(0.75, abs=1e-12)
    with pytest.raises(ValueError):
        gaussian_covariance(-1.5, 2)


# ============================================================
# Sampling and estimators
# ============================================================
def test_mala_basic_properties():
    model = builtin_model("gaussian", {"beta": 0.5})
    samples = sample_mala(model, 3, 2000, dt=0.5, burn_in=100, seed=4, chains=16)
    assert samples.samples.shape == (2000, 3, 1)
    assert samples.sampler == "MALA"
    assert 0.3 < samples.acceptance_rate <= 1.0
    assert len(np.unique(samples.chain_ids)) == 16
    assert abs(samples.samples.mean()) < 0.2


def test_mala_chains_do_not_depend_on_batching():
    model = builtin_model("curie_weiss", {"beta": 1.0, "K": 0.2})
    together = sample_mala(model, 3, 400, dt=0.2, burn_in=20, seed=8, chains=4)
    tail = sample_mala(model, 3, 200, dt=0.2, burn_in=20, seed=8, chains=2, first_chain=2)
    np.testing.assert_allclose(together.samples[200:], tail.samples, rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(together.chain_ids[200:], tail.chain_ids)


def test_mala_rejects_degenerate_step():
    model = builtin_model("gaussian", {"beta": 0.5})
    with pytest.raises(DegenerateAcceptance):
        sample_mala(model, 3, 200, dt=50.0, burn_in=0, seed=0, chains=8)


def test_ula_has_no_acceptance_rate():
    samples = sample_ula(builtin_model("gaussian", {"beta": 0.5}), 3, 100, dt=0.1, burn_in=10, seed=0, chains=4)
    assert samples.sampler == "ULA"
    assert samples.acceptance_rate is None


def test_pair_covariance_matches_direct_formula():
    rng = np.random.default_rng(2)
    M, N = 400, 4
    x = rng.standard_normal((M, N, 1)) + 0.3 * rng.standard_normal((M, 1, 1))
    samples = GibbsSampleSet(x, np.repeat(np.arange(8), M // 8), "MALA", 1.0, 0.1, 1, 0)
    estimate = estimate_pair_covariance(samples, np.tanh)

    fx = np.tanh(x[..., 0])
    off_diagonal = [fx[:, i] * fx[:, j] for i in range(N) for j in range(N) if i != j]
    direct = np.mean(off_diagonal) - np.mean(fx) ** 2
    assert estimate.estimate == pytest.approx(direct, rel=1e-10)
    assert estimate.standard_error > 0
    assert estimate.n_samples == M

    cov, se = estimate_covariance_matrix(samples)
    np.testing.assert_allclose(cov, np.cov(x[..., 0], rowvar=False, bias=True), rtol=1e-10, atol=1e-12)
    assert se.shape == (N, N)


def test_observables():
    x = np.array([[[1.0], [3.0], [5.0]]])
    assert observable("magnetization")(x)[0] == 3.0
    assert observable("contrast")(x)[0] == -2.0
    assert observable("first_coordinate")(x)[0] == 1.0
    with pytest.raises(ValueError):
        observable("energy")


@pytest.mark.slow
def test_mala_covariance_matches_precision_inverse():
    """gaussian beta=0.5, N=4: every covariance entry within 4 standard errors"""
    beta, N = 0.5, 4
    samples = sample_mala(builtin_model("gaussian", {"beta": beta}), N, 256 * 4000, 0.5, 200, seed=1, chains=256)
    cov, se = estimate_covariance_matrix(samples)
    exact = gaussian_covariance(beta, N)
    z = np.abs(cov - exact) / se

    print("\n" + "=" * 60)
    print("MALA COVARIANCE (gaussian beta=0.5, N=4)")
    print("=" * 60)
    print(f"  acceptance: {samples.acceptance_rate:.3f}")
    print(f"  max |z|:    {z.max():.2f}")

    assert np.all(z <= 4.0)
    assert np.min(2.0 * np.diag(cov) ** 2 / np.diag(se) ** 2) >= 1e5


@pytest.mark.slow
def test_relaxation_rates_of_gaussian_modes():
    """contrast relaxes at 1 - beta/(N-1) = 0.75, magnetization at 1 + beta = 1.5"""
    model = builtin_model("gaussian", {"beta": 0.5})
    options = GapOptions(seed=2)
    contrast = estimate_spectral_gap(model, 3, "contrast", options)
    magnetization = estimate_spectral_gap(model, 3, "magnetization", options)

    print("\n" + "=" * 60)
    print("RELAXATION RATES (gaussian beta=0.5, N=3)")
    print("=" * 60)
    print(f"  contrast:      {contrast.rate:.4f} [{contrast.ci_low:.4f}, {contrast.ci_high:.4f}]")
    print(f"  magnetization: {magnetization.rate:.4f} [{magnetization.ci_low:.4f}, {magnetization.ci_high:.4f}]")

    assert contrast.rate == pytest.approx(0.75, rel=0.10)
    assert magnetization.rate == pytest.approx(1.5, rel=0.10)
    assert contrast.rate_half_dt is not None


@pytest.mark.slow
def test_euler_maruyama_weak_error_halves_with_dt():
    """gaussian beta=0.5, N=2: the stationary variance bias of the scheme is O(dt)"""
    beta, N, replicas = 0.5, 2, 4000
    model = builtin_model("gaussian", {"beta": beta})
    A = gaussian_precision(beta, N)
    exact = gaussian_covariance(beta, N)[0, 0]

    biases, scheme_biases = [], []
    for dt in (0.2, 0.1):
        every = int(round(1.0 / dt))
        ensemble = initial_ensemble(N, 1, dt, seed=21, replicas=replicas)
        trajectory = simulate(ensemble, model, int(round(220.0 / dt)), record_every=every)
        kept = trajectory.positions[trajectory.times >= 20.0][..., 0, 0]  # (K, R)
        per_replica = np.mean(kept**2, axis=0)
        estimate = float(per_replica.mean())
        se = float(per_replica.std(ddof=1) / np.sqrt(replicas))
        # stationary covariance of the discrete chain: A^{-1} (I - dt A / 2)^{-1}
        scheme = np.linalg.inv(A @ (np.eye(N) - 0.5 * dt * A))[0, 0]
        assert abs(estimate - scheme) <= 4.0 * se
        biases.append(estimate - exact)
        scheme_biases.append(scheme - exact)

    print("\n" + "=" * 60)
    print("EULER-MARUYAMA WEAK ERROR (gaussian beta=0.5, N=2)")
    print("=" * 60)
    print(f"  variance bias at dt=0.2: {biases[0]:.4f} (scheme {scheme_biases[0]:.4f})")
    print(f"  variance bias at dt=0.1: {biases[1]:.4f} (scheme {scheme_biases[1]:.4f})")

    assert scheme_biases[1] / scheme_biases[0] == pytest.approx(0.5, abs=0.05)
    assert 0.3 <= biases[1] / biases[0] <= 0.7


@pytest.mark.slow
def test_mala_marginal_matches_the_gibbs_measure():
    """curie_weiss beta=1, K=0.2, N=2: chi-square of one particle's coordinate over 50 equal-probability bins"""
    model = builtin_model("curie_weiss", {"beta": 1.0, "K": 0.2})
    bins = 50
    samples = sample_mala(model, 2, 100_000, dt=0.2, burn_in=200, seed=5, thin=50, chains=5000)
    x = samples.samples[:, 0, 0]

    # exact marginal of mu^(2) by quadrature of exp(-V(x) - V(y) - W(x, y)) over y
    nodes = np.linspace(-5.0, 5.0, 2001)
    points = model.as_points(nodes)
    V = model.V(points)
    H = V[:, None] + V[None, :] + model.W(points[:, None, :], points[None, :, :])
    marginal = integrate.trapezoid(np.exp(-(H - H.min())), nodes, axis=1)
    cdf = integrate.cumulative_trapezoid(marginal, nodes, initial=0.0)
    cdf /= cdf[-1]
    edges = np.interp(np.arange(1, bins) / bins, cdf, nodes)

    observed = np.bincount(np.searchsorted(edges, x), minlength=bins)
    expected = x.size / bins
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    critical = float(stats.chi2.ppf(0.99, bins - 1))

    print("\n" + "=" * 60)
    print("MALA STATIONARITY (curie_weiss beta=1, K=0.2, N=2)")
    print("=" * 60)
    print(f"  acceptance: {samples.acceptance_rate:.3f}")
    print(f"  chi2 = {chi2:.1f}, 1% critical value = {critical:.1f}")

    assert observed.sum() == 100_000
    assert chi2 <= critical
