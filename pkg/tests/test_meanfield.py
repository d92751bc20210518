"""
Tests for grid measures, mean-field functionals, the McKean-Vlasov solver and its checks

Run with: uv run pytest tests/test_meanfield.py -v -s
"""

import math

import numpy as np
import pytest
from scipy import stats

from mfgap.errors import MassLeak, NegativeDensity, NoConvergence, SchemeError, UnboundedEntropy
from mfgap.meanfield.chaos import chaos_check
from mfgap.meanfield.finite_n import finite_n_entropy_check, finite_n_fisher_check
from mfgap.meanfield.fixed_point import find_fixed_points, l1_distance, solve_invariant
from mfgap.meanfield.functionals import (
    fisher_information,
    free_energy,
    interaction_convolution,
    interaction_energy,
    mean_field_entropy,
    relative_entropy,
)
from mfgap.meanfield.grid import (
    GridMeasure,
    empirical_measure,
    gaussian_measure,
    make_grid,
    normalized,
    point_mass,
    reference_measure,
    tilted_measure,
)
from mfgap.meanfield.pde import McKeanVlasovSolver, mckv_step, n_steps_for
from mfgap.meanfield.trace import DecayTrace, evolve_and_trace
from mfgap.meanfield.transport import QUANTILE_NODES, wasserstein1_1d, wasserstein2_1d
from mfgap.potentials.families import builtin_model


# ============================================================
# Grid measures
# ============================================================
def test_grid_validation():
    with pytest.raises(ValueError):
        make_grid(1.0, 1.0, 100)
    with pytest.raises(ValueError):
        make_grid(-1.0, 1.0, 2)
    grid = make_grid(-1.0, 1.0, 4)
    np.testing.assert_allclose(grid.centers, [-0.75, -0.25, 0.25, 0.75])
    assert grid.refined().n_cells == 8


def test_gaussian_measure_moments_and_quantiles():
    grid = make_grid(-10.0, 10.0, 2000)
    nu = gaussian_measure(grid, 0.5, 2.0)
    assert nu.mass() == pytest.approx(1.0, abs=1e-12)
    assert nu.mean() == pytest.approx(0.5, abs=1e-8)
    assert nu.variance() == pytest.approx(2.0, rel=1e-4)
    assert float(nu.quantile(0.5)) == pytest.approx(0.5, abs=1e-3)
    assert nu.cdf()[-1] == pytest.approx(1.0, abs=1e-12)


def test_point_mass_and_leak():
    grid = make_grid(-5.0, 5.0, 100)
    delta = point_mass(grid, 1.23)
    assert delta.mass() == pytest.approx(1.0)
    assert delta.mean() == pytest.approx(1.25)
    with pytest.raises(MassLeak):
        point_mass(grid, 4.99).check_leak()


def test_empirical_measure_bins_samples():
    grid = make_grid(-4.0, 4.0, 8)
    nu = empirical_measure(grid, np.array([-3.5, 0.5, 0.5, 10.0]))
    np.testing.assert_allclose(nu.weights, [0.25, 0, 0, 0, 0.5, 0, 0, 0.25])


# ============================================================
# Functionals and transport
# ============================================================
def test_relative_entropy_of_shifted_gaussians():
    """H(N(m, 1) | N(0, 1)) = m^2 / 2"""
    grid = make_grid(-12.0, 12.0, 2400)
    reference = gaussian_measure(grid, 0.0, 1.0)
    assert relative_entropy(reference, reference) == 0.0
    assert relative_entropy(gaussian_measure(grid, 1.5, 1.0), reference) == pytest.approx(1.125, rel=1e-4)


def test_relative_entropy_against_underflowing_reference():
    grid = make_grid(-1.0, 1.0, 4)
    nu = GridMeasure(grid, np.full(4, 0.5))
    reference = GridMeasure(grid, np.array([0.0, 1.0, 1.0, 0.0]))
    with pytest.raises(UnboundedEntropy):
        relative_entropy(nu, reference)


def test_boltzmann_reference_keeps_its_log_density_in_the_tails():
    """Quartic V on [-10, 10]: exp(-V) underflows at the ends, log alpha does not"""
    model = builtin_model("curie_weiss", {"beta": 1.0, "K": 0.2})
    grid = make_grid(-10.0, 10.0, 2000)
    alpha = reference_measure(model, grid)
    assert alpha.density.min() == 0.0
    assert np.all(np.isfinite(alpha.log_density))
    np.testing.assert_allclose(np.exp(alpha.log_density), alpha.density, rtol=0, atol=0)

    nu = gaussian_measure(grid, 1.0, 0.5)
    assert nu.density.min() > 0.0
    entropy = relative_entropy(nu, alpha)
    assert math.isfinite(entropy) and entropy > 0.0
    assert math.isfinite(free_energy(model, nu))


def test_radial_convolution_matches_direct_sum():
    model = builtin_model("radial_quadratic", {"c_w": 0.4})
    grid = make_grid(-6.0, 6.0, 300)
    nu = gaussian_measure(grid, 0.7, 0.8)
    conv = interaction_convolution(model, nu)
    x = model.as_points(grid.centers)
    direct = model.W(x[:, None, :], x[None, :, :]) @ nu.weights
    direct_grad = model.grad_x_W(x[:, None, :], x[None, :, :])[..., 0] @ nu.weights
    np.testing.assert_allclose(conv.values, direct, rtol=1e-9, atol=1e-10)
    np.testing.assert_allclose(conv.gradient, direct_grad, rtol=1e-9, atol=1e-10)
    # int int c_w |x - y|^2 / 2 dnu dnu = c_w Var(nu)
    assert interaction_energy(model, nu) == pytest.approx(0.4 * nu.variance(), rel=1e-9)


def test_fisher_information_of_gaussians():
    """Free model: I_W(alpha) = 0 and I_W(N(0, s)) = (1/4) (1 - 1/s)^2 s"""
    free = builtin_model("free")
    grid = make_grid(-12.0, 12.0, 2400)
    alpha = reference_measure(free, grid)
    assert fisher_information(free, alpha) == pytest.approx(0.0, abs=1e-12)
    s = 2.0
    expected = 0.25 * (1.0 - 1.0 / s) ** 2 * s
    assert fisher_information(free, gaussian_measure(grid, 0.0, s)) == pytest.approx(expected, rel=1e-3)


def test_mean_field_entropy_of_gaussians():
    """gaussian beta: nu_inf = N(0, 1) and H_W(N(m, s)) = (s - 1 - log s + m^2) / 2 + beta m^2 / 2"""
    beta, m, s = 0.5, 1.0, 0.5
    model = builtin_model("gaussian", {"beta": beta})
    grid = make_grid(-10.0, 10.0, 2000)
    nu_inf = reference_measure(model, grid)
    nu = gaussian_measure(grid, m, s)
    expected = 0.5 * (s - 1.0 - math.log(s) + m**2) + 0.5 * beta * m**2
    assert mean_field_entropy(model, nu, nu_inf) == pytest.approx(expected, rel=1e-4)
    assert mean_field_entropy(model, nu_inf, nu_inf) == 0.0
    assert free_energy(model, nu_inf) == pytest.approx(0.0, abs=1e-12)


def test_wasserstein_distances_of_shifted_gaussians():
    grid = make_grid(-10.0, 10.0, 2000)
    nu1 = gaussian_measure(grid, -0.5, 1.0)
    nu2 = gaussian_measure(grid, 0.75, 1.0)
    assert wasserstein2_1d(nu1, nu2) == pytest.approx(1.25, rel=1e-3)
    assert wasserstein1_1d(nu1, nu2) == pytest.approx(1.25, rel=1e-6)
    assert wasserstein1_1d(nu1, nu1) == 0.0
    # across grids the quantile formula applies
    coarse = gaussian_measure(make_grid(-10.0, 10.0, 1000), 0.75, 1.0)
    assert wasserstein1_1d(nu1, coarse) == pytest.approx(1.25, rel=1e-3)


def _random_measure(rng, grid):
    bumps = sum(rng.random() * stats.norm.pdf(grid.centers, rng.uniform(-3, 3), rng.uniform(0.3, 1.5)) for _ in range(3))
    return normalized(grid, bumps + 1e-6 * rng.random(grid.n_cells))


def test_wasserstein_distances_are_metrics():
    """Symmetry and the triangle inequality on random triples, W2 across grids and W1 on a shared grid"""
    rng = np.random.default_rng(12)
    grids = [make_grid(-6.0, 6.0, n) for n in (150, 200, 300)]
    worst = 0.0
    for _ in range(100):
        a, b, c = (_random_measure(rng, grids[rng.integers(3)]) for _ in range(3))
        ab, bc, ac = wasserstein2_1d(a, b), wasserstein2_1d(b, c), wasserstein2_1d(a, c)
        assert ab == pytest.approx(wasserstein2_1d(b, a), abs=1e-10)
        worst = max(worst, ac - ab - bc)

        grid = grids[0]
        a, b, c = (_random_measure(rng, grid) for _ in range(3))
        ab, bc, ac = wasserstein1_1d(a, b), wasserstein1_1d(b, c), wasserstein1_1d(a, c)
        assert ab == pytest.approx(wasserstein1_1d(b, a), abs=1e-10)
        worst = max(worst, ac - ab - bc)

    print(f"\n  largest triangle excess: {worst:.2e}")
    assert worst <= 1e-10


def _second_order(errors, floor=1e-10):
    """Each halving of dx cuts the error by at least 3.5 (order >= 1.8) unless it is at rounding level"""
    return all(fine <= max(coarse / 3.5, floor) for coarse, fine in zip(errors, errors[1:]))


def test_grid_convergence_is_second_order():
    """gaussian beta=0.5 with nu = N(1, 1/2) against nu_inf = N(0, 1), dx halved three times"""
    beta, m, s = 0.5, 1.0, 0.5
    model = builtin_model("gaussian", {"beta": beta})
    exact_H = 0.5 * (s - 1.0 - math.log(s) + m**2) + 0.5 * beta * m**2
    exact_I = 0.25 * ((1.0 - 1.0 / s) ** 2 * s + (m + beta * m) ** 2)
    # W2 on the same quantile nodes as wasserstein2_1d, so only the grid error remains
    z = stats.norm.ppf((np.arange(QUANTILE_NODES) + 0.5) / QUANTILE_NODES)
    exact_W2 = float(np.sqrt(np.mean((m + (math.sqrt(s) - 1.0) * z) ** 2)))

    errors = {"H_W": [], "I_W": [], "W2": []}
    for n in (200, 400, 800, 1600):
        grid = make_grid(-10.0, 10.0, n)
        nu_inf = reference_measure(model, grid)
        nu = gaussian_measure(grid, m, s)
        errors["H_W"].append(abs(mean_field_entropy(model, nu, nu_inf) - exact_H))
        errors["I_W"].append(abs(fisher_information(model, nu) - exact_I))
        errors["W2"].append(abs(wasserstein2_1d(nu, nu_inf) - exact_W2))

    print("\n" + "=" * 60)
    print("GRID CONVERGENCE (dx = 0.1, 0.05, 0.025, 0.0125)")
    print("=" * 60)
    for name, values in errors.items():
        print(f"  {name}: {', '.join(f'{e:.2e}' for e in values)}")

    for name, values in errors.items():
        assert _second_order(values), name
    # the quantile error is algebraic, not spectral
    assert errors["W2"][0] > 1e-6
    assert math.log2(errors["W2"][0] / errors["W2"][-1]) / 3 >= 1.8


# ============================================================
# McKean-Vlasov solver
# ============================================================
def test_boltzmann_measure_is_stationary():
    free = builtin_model("free")
    grid = make_grid(-10.0, 10.0, 500)
    alpha = reference_measure(free, grid)
    after = mckv_step(free, alpha, 0.1)
    np.testing.assert_allclose(after.density, alpha.density, rtol=1e-10, atol=1e-14)
    solver = McKeanVlasovSolver(free, grid, 0.0)
    assert solver.step(alpha) is alpha
    assert n_steps_for(1.0, 0.0) == 0


def test_ornstein_uhlenbeck_variance_and_mass():
    """Free model from N(0, 4): variance 1 + 3 e^{-2t}"""
    free = builtin_model("free")
    grid = make_grid(-12.0, 12.0, 960)
    solver = McKeanVlasovSolver(free, grid, 1e-3)
    nu = solver.solve(gaussian_measure(grid, 0.0, 4.0), 0.5)
    assert nu.mass() == pytest.approx(1.0, abs=1e-12)
    assert solver.last_mass_correction <= 1e-12
    assert nu.variance() == pytest.approx(1.0 + 3.0 * math.exp(-1.0), rel=5e-3)


def test_leak_is_reported():
    free = builtin_model("free")
    grid = make_grid(-3.0, 3.0, 120)
    with pytest.raises(MassLeak):
        mckv_step(free, gaussian_measure(grid, 0.0, 4.0), 0.01)


class _LossySolver(McKeanVlasovSolver):
    """Diagonal nudged off unit column sums, so every step loses about 1e-6 of the mass"""

    def _banded(self, U):
        ab = super()._banded(U)
        ab[1] += 1e-6
        return ab


def test_mass_defect_above_rounding_is_an_error():
    free = builtin_model("free")
    grid = make_grid(-10.0, 10.0, 500)
    nu = gaussian_measure(grid, 0.5, 2.0)
    McKeanVlasovSolver(free, grid, 0.01).step(nu)
    with pytest.raises(SchemeError, match="changed the mass"):
        _LossySolver(free, grid, 0.01).step(nu)
    assert issubclass(NegativeDensity, SchemeError)


# ============================================================
# Invariant measures
# ============================================================
def test_gaussian_fixed_point_contracts_with_factor_beta():
    """Phi shifts the mean by -beta m, so W1 steps shrink by beta"""
    beta = 0.5
    model = builtin_model("gaussian", {"beta": beta})
    grid = make_grid(-10.0, 10.0, 1000)
    alpha = reference_measure(model, grid)
    result = solve_invariant(model, grid, initial=tilted_measure(alpha, 2.0), gamma0=beta, start="tilt+")

    print("\n" + "=" * 60)
    print("FIXED-POINT CONTRACTION (gaussian beta=0.5)")
    print("=" * 60)
    print(f"  iterations: {result.iterations}")
    print(f"  factors:    {', '.join(f'{f:.4f}' for f in result.factors[:6])}")

    assert result.converged and result.certified
    assert result.measure.mean() == pytest.approx(0.0, abs=1e-9)
    assert result.measure.variance() == pytest.approx(1.0, rel=1e-4)
    assert len(result.factors) >= 3
    assert max(result.factors) <= beta + 5e-3


def test_fixed_point_search_deduplicates():
    model = builtin_model("gaussian", {"beta": 0.5})
    found = find_fixed_points(model, make_grid(-10.0, 10.0, 800), gamma0=0.5)
    assert len(found) == 1
    assert found[0].start == "reference"


def test_fixed_point_iteration_limit():
    model = builtin_model("gaussian", {"beta": 0.9})
    grid = make_grid(-10.0, 10.0, 400)
    start = gaussian_measure(grid, 2.0, 1.0)
    with pytest.raises(NoConvergence) as excinfo:
        solve_invariant(model, grid, tol=1e-14, max_iter=3, initial=start)
    assert len(excinfo.value.history) == 2


def test_invariant_measure_is_stationary_under_refinement():
    """One PDE step from nu_inf moves it by rounding only, with dt and dx halved together"""
    model = builtin_model("curie_weiss", {"beta": 1.0, "K": 0.2})
    residuals, distances = [], []
    for n, dt in ((300, 0.04), (600, 0.02), (1200, 0.01)):
        grid = make_grid(-6.0, 6.0, n)
        nu_inf = solve_invariant(model, grid, initial=gaussian_measure(grid, 0.5, 1.0), gamma0=0.5).measure
        residuals.append(l1_distance(mckv_step(model, nu_inf, dt), nu_inf))
        distances.append(wasserstein1_1d(nu_inf, reference_measure(model, grid)))

    print("\n" + "=" * 60)
    print("STATIONARITY OF nu_inf (curie_weiss beta=1, K=0.2)")
    print("=" * 60)
    print(f"  L1 step residuals: {', '.join(f'{r:.2e}' for r in residuals)}")

    assert max(residuals) <= 1e-9
    # beta K < 1: the symmetric measure alpha is the only fixed point
    assert max(distances) <= 1e-8


# ============================================================
# Decay traces
# ============================================================
def test_trace_from_the_invariant_measure_stays_at_zero():
    model = builtin_model("gaussian", {"beta": 0.5})
    grid = make_grid(-10.0, 10.0, 800)
    nu_inf = solve_invariant(model, grid, gamma0=0.5).measure
    trace = evolve_and_trace(model, nu_inf, 0.2, 0.01, nu_inf, rho_ls=0.25, record_every=5)
    assert trace.times.size == 5
    np.testing.assert_allclose(trace.H_W, 0.0, atol=1e-10)
    np.testing.assert_allclose(trace.I_W, 0.0, atol=1e-10)
    assert trace.all_checks_pass
    assert trace.fitted_rate is None
    assert len(list(trace.rows())[0]) == len(DecayTrace.header())


def test_entropy_decays_for_gaussian_interaction():
    model = builtin_model("gaussian", {"beta": 0.5})
    grid = make_grid(-10.0, 10.0, 800)
    nu_inf = solve_invariant(model, grid, gamma0=0.5).measure
    trace = evolve_and_trace(model, gaussian_measure(grid, 1.0, 2.0), 2.0, 1e-3, nu_inf, rho_ls=0.25)

    print("\n" + "=" * 60)
    print("ENTROPY DECAY (gaussian beta=0.5, rho_ls=0.25)")
    print("=" * 60)
    print(f"  H_W(0) = {trace.H_W[0]:.4e}, H_W(T) = {trace.H_W[-1]:.4e}")
    print(f"  fitted rate: {trace.fitted_rate}")

    assert trace.H_W[0] > 0
    assert trace.H_W[-1] < 0.1 * trace.H_W[0]
    assert trace.all_checks_pass
    assert trace.certified
    assert trace.free_energy_monotone
    assert trace.max_energy_increase <= 1e-10


def test_double_well_trace_on_a_wide_grid():
    """Quartic V on [-10, 10]: alpha underflows in the tails and the trace still runs"""
    model = builtin_model("curie_weiss", {"beta": 1.0, "K": 0.2})
    grid = make_grid(-10.0, 10.0, 2000)
    assert reference_measure(model, grid).density.min() == 0.0
    nu_inf = solve_invariant(model, grid, gamma0=0.5).measure
    trace = evolve_and_trace(model, gaussian_measure(grid, 1.0, 0.5), 2.0, 1e-3, nu_inf, rho_ls=0.1)

    print("\n" + "=" * 60)
    print("ENTROPY DECAY (curie_weiss beta=1, K=0.2, grid [-10, 10])")
    print("=" * 60)
    print(f"  H_W(0) = {trace.H_W[0]:.4e}, H_W(T) = {trace.H_W[-1]:.4e}")
    print(f"  largest free-energy increase: {trace.max_energy_increase:.2e}")

    assert np.all(np.isfinite(trace.H_W))
    assert trace.H_W[0] > 0
    assert trace.H_W[-1] < trace.H_W[0]
    assert trace.free_energy_monotone
    assert trace.all_checks_pass


# ============================================================
# Finite-N identities and chaos
# ============================================================
def test_finite_n_entropy_identity_is_exact_on_the_grid():
    model = builtin_model("gaussian", {"beta": 0.5})
    grid = make_grid(-10.0, 10.0, 500)
    identity = finite_n_entropy_check(model, gaussian_measure(grid, 0.3, 1.2))
    assert identity.difference < 1e-10
    with pytest.raises(ValueError):
        finite_n_entropy_check(model, gaussian_measure(grid, 0.3, 1.2), n_particles=3)


def test_finite_n_fisher_gap_shrinks_like_one_over_n():
    """Bilinear W: the gap to I_W is beta^2 Var(nu) / (4 (N - 1))"""
    beta, variance = 0.5, 1.2
    model = builtin_model("gaussian", {"beta": beta})
    grid = make_grid(-10.0, 10.0, 1000)
    nu = gaussian_measure(grid, 0.3, variance)
    identity = finite_n_fisher_check(model, nu, n_samples=200_000, seed=1)
    assert identity.decreasing
    assert identity.standard_errors[0] == 0.0
    # the pair quadrature is exact on the grid, so the N = 2 gap is tight
    assert nu.variance() == pytest.approx(variance, rel=1e-10)
    assert identity.gaps[0] == pytest.approx(beta**2 * nu.variance() / 4.0, rel=1e-6)
    assert identity.gaps[2] == pytest.approx(beta**2 * variance / 12.0, rel=0.1)


def test_finite_n_fisher_pair_value_in_closed_form():
    """gaussian beta, nu = N(m, 1): score of nu against alpha is m, so (1/2) I(nu x nu | mu^(2)) = ((m + beta m)^2 + beta^2) / 4"""
    beta, m = 0.3, 0.5
    model = builtin_model("gaussian", {"beta": beta})
    grid = make_grid(-10.0, 10.0, 1000)
    identity = finite_n_fisher_check(model, gaussian_measure(grid, m, 1.0), n_values=(2,))
    assert identity.lhs[0] == pytest.approx(0.25 * ((m + beta * m) ** 2 + beta**2), rel=1e-6)
    assert identity.rhs_limit == pytest.approx(0.25 * (m + beta * m) ** 2, rel=1e-6)


@pytest.mark.slow
def test_propagation_of_chaos():
    model = builtin_model("gaussian", {"beta": 0.5})
    grid = make_grid(-8.0, 8.0, 400)
    table = chaos_check(model, gaussian_measure(grid, 1.0, 0.5), [4, 16, 64], T=1.0, dt=1e-2, seed=3)

    print("\n" + "=" * 60)
    print("PROPAGATION OF CHAOS")
    print("=" * 60)
    for row in table.rows:
        print(f"  N={row.n_particles:3d} R={row.replicas:6d} W2={row.w2:.4e} noise={row.noise:.1e}")

    assert [row.n_particles for row in table.rows] == [4, 16, 64]
    assert table.decreasing
