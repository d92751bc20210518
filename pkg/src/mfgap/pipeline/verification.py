"""
Acceptance suite

One function per check. Each builds its own model and grid, runs the relevant
services and returns a CheckResult; `quick` shrinks sample sizes for smoke runs.
"""

import logging
import math
from typing import Callable, NamedTuple

import numpy as np

from mfgap.constants.bounds import (
    c_lip_m_explicit,
    curie_weiss_c_lip_m,
    curie_weiss_c_lip_upper,
    offdiag_hessian_bound,
    poincare_lower_bound,
)
from mfgap.constants.quadrature import c_lip_m
from mfgap.constants.report import constants_report
from mfgap.meanfield.chaos import chaos_check
from mfgap.meanfield.finite_n import finite_n_entropy_check, finite_n_fisher_check
from mfgap.meanfield.fixed_point import solve_invariant
from mfgap.meanfield.grid import gaussian_measure, make_grid, reference_measure, tilted_measure
from mfgap.meanfield.pde import McKeanVlasovSolver
from mfgap.meanfield.trace import evolve_and_trace
from mfgap.particles.estimators import GapOptions, estimate_covariance_matrix, estimate_pair_covariance, estimate_spectral_gap
from mfgap.particles.gaussian import gaussian_covariance, gaussian_rates
from mfgap.particles.sampler import sample_mala
from mfgap.potentials.checks import check_model
from mfgap.potentials.dissipativity import analytic_profile, dissipativity_profile
from mfgap.potentials.families import builtin_model
from mfgap.potentials.models import MeanFieldModel

logger = logging.getLogger(__name__)

CONTRACTION_SLACK = 5e-3


class CheckResult(NamedTuple):
    name: str
    passed: bool
    details: dict


def _linear_profile(a: float):
    return analytic_profile(lambda r: -a * np.asarray(r, dtype=float))


# ============================================================
# Constants
# ============================================================
def check_quadrature(seed: int = 0, quick: bool = False) -> CheckResult:
    """c_Lip,m of b0(u) = -a u equals (1/4) int s e^{-a s^2/8} ds = 1/a"""
    values = {}
    passed = True
    for a in (1.0, 0.5, 2.0, 10.0):
        value = c_lip_m(_linear_profile(a))
        error = abs(value * a - 1.0)
        values[str(a)] = {"c_lip_m": value, "expected": 1.0 / a, "relative_error": error}
        passed &= error <= 1e-8
    return CheckResult("quadrature", passed, values)


def check_curie_weiss_constants(seed: int = 0, quick: bool = False) -> CheckResult:
    """Quadrature against the error-function closed form, and below sqrt(pi/beta) e^{beta/4}"""
    values = {}
    passed = True
    for beta in (0.5, 1.0, 2.0):
        model = builtin_model("curie_weiss", {"beta": beta, "K": 0.2})
        value = c_lip_m(dissipativity_profile(model))
        closed = curie_weiss_c_lip_m(beta)
        upper = curie_weiss_c_lip_upper(beta)
        values[str(beta)] = {"c_lip_m": value, "closed_form": closed, "upper": upper}
        passed &= abs(value - closed) <= 1e-8 and value <= upper
    return CheckResult("curie_weiss_constants", passed, values)


def check_gaussian_sharpness(seed: int = 0, quick: bool = False) -> CheckResult:
    """Poincare bound equals min{1+beta, 1-beta/(N-1)} and the dense spectral gap"""
    rows = []
    passed = True
    c_lip = c_lip_m_explicit(1.0, 0.0, 0.0, 0.0, 0.0)
    c_quad = c_lip_m(dissipativity_profile(builtin_model("gaussian", {"beta": 0.0})))
    for beta in (-0.5, 0.3, 0.9):
        model = builtin_model("gaussian", {"beta": beta})
        for N in (2, 3, 10, 50):
            bound = poincare_lower_bound(c_lip, offdiag_hessian_bound(model, N)).value
            expected = min(1.0 + beta, 1.0 - beta / (N - 1))
            exact = gaussian_rates(beta, N)["gap"]
            rows.append({"beta": beta, "N": N, "bound": bound, "expected": expected, "dense_gap": exact})
            passed &= bound == expected and abs(exact - expected) <= 1e-12
    passed &= abs(c_quad - 1.0) <= 1e-8
    return CheckResult("gaussian_sharpness", passed, {"rows": rows, "c_lip_m_quadrature": c_quad})


# ============================================================
# Particles
# ============================================================
def check_mala_covariance(seed: int = 0, quick: bool = False) -> CheckResult:
    """gaussian beta=0.5, N=4: covariance entries within 4 standard errors of A^{-1}"""
    beta, N = 0.5, 4
    model = builtin_model("gaussian", {"beta": beta})
    chains, per_chain = (64, 1000) if quick else (256, 4000)
    samples = sample_mala(model, N, chains * per_chain, dt=0.5, burn_in=200, seed=seed, chains=chains)
    estimate, se = estimate_covariance_matrix(samples)
    exact = gaussian_covariance(beta, N)
    upper = np.triu_indices(N)
    z = np.abs(estimate - exact)[upper] / se[upper]
    diagonal = np.diag(estimate)
    ess = float(np.min(2.0 * diagonal**2 / np.diag(se) ** 2))
    passed = bool(np.all(z <= 4.0)) and (quick or ess >= 1e5)
    return CheckResult(
        "mala_covariance",
        passed,
        {
            "acceptance_rate": samples.acceptance_rate,
            "max_z": float(np.max(z)),
            "effective_samples": ess,
            "estimate": estimate.tolist(),
            "exact": exact.tolist(),
        },
    )


def check_correlation_decay(seed: int = 0, quick: bool = False) -> CheckResult:
    """curie_weiss beta=1, K=0.2, f=g=tanh: covariance below the bound and decaying like 1/(N-1)"""
    model = builtin_model("curie_weiss", {"beta": 1.0, "K": 0.2})
    chains, per_chain = (32, 300) if quick else (128, 600)
    rows = []
    passed = True
    for N in (8, 16, 32):
        samples = sample_mala(model, N, chains * per_chain, dt=0.1, burn_in=500, seed=seed, thin=5, chains=chains)
        cov = estimate_pair_covariance(samples, np.tanh)
        bound = constants_report(model, N).correlation_bound
        ok = bound is not None and abs(cov.estimate) <= bound + 3.0 * cov.standard_error
        rows.append({"N": N, "covariance": cov.estimate, "standard_error": cov.standard_error, "bound": bound})
        passed &= ok
    ratio = rows[0]["covariance"] / rows[-1]["covariance"] if rows[-1]["covariance"] != 0 else math.inf
    expected = 31.0 / 7.0
    ratio_ok = expected / 2.0 <= ratio <= expected * 2.0
    return CheckResult(
        "correlation_decay",
        bool(passed and (quick or ratio_ok)),
        {"rows": rows, "ratio_8_32": ratio, "expected_ratio": expected},
    )


def check_gap_dynamics(seed: int = 0, quick: bool = False) -> CheckResult:
    """gaussian beta=0.5, N=3: contrast relaxes at 1 - beta/(N-1), magnetization at 1 + beta"""
    beta, N = 0.5, 3
    model = builtin_model("gaussian", {"beta": beta})
    rates = gaussian_rates(beta, N)
    options = GapOptions(seed=seed, n_steps=4000 if quick else 20000, n_chains=16 if quick else 32)
    results = {}
    passed = True
    for name, expected in (("contrast", rates["zero_sum"]), ("magnetization", rates["uniform"])):
        estimate = estimate_spectral_gap(model, N, name, options)
        error = abs(estimate.rate - expected) / expected
        results[name] = {**estimate._asdict(), "expected": expected, "relative_error": error}
        passed &= error <= (0.25 if quick else 0.10)
    results["gap"] = rates["gap"]
    return CheckResult("gap_dynamics", passed, results)


# ============================================================
# Mean field
# ============================================================
def contraction_verdict(results, gamma0: float, slack: float = CONTRACTION_SLACK) -> tuple[bool, float]:
    """Every run converged and every recorded W1 factor of every run is at most gamma0 + slack"""
    worst = max((factor for result in results for factor in result.factors), default=0.0)
    return all(result.converged for result in results) and worst <= gamma0 + slack, worst


def check_fixed_point_contraction(seed: int = 0, quick: bool = False) -> CheckResult:
    """curie_weiss beta=1, K=0.2: Phi converges and contracts in W1 by at most gamma0"""
    model = builtin_model("curie_weiss", {"beta": 1.0, "K": 0.2})
    gamma0 = constants_report(model, 2).gamma0
    grid = make_grid(-6.0, 6.0, 1200)
    plain = solve_invariant(model, grid, gamma0=gamma0)
    tilted = solve_invariant(model, grid, initial=tilted_measure(reference_measure(model, grid), 1.0), gamma0=gamma0)
    passed, worst = contraction_verdict([plain, tilted], gamma0)
    return CheckResult(
        "fixed_point_contraction",
        passed,
        {
            "gamma0": gamma0,
            "max_factor": worst,
            "plain_factors": list(plain.factors),
            "tilted_factors": list(tilted.factors),
            "iterations": {"plain": plain.iterations, "tilted": tilted.iterations},
        },
    )


def _variance_errors(n_cells: int, dt: float, T: float) -> tuple[float, float]:
    model = builtin_model("free")
    grid = make_grid(-15.0, 15.0, n_cells)
    solver = McKeanVlasovSolver(model, grid, dt)
    nu = gaussian_measure(grid, 0.0, 4.0)
    worst = 0.0
    worst_mass = 0.0
    for k, nu in enumerate(solver.evolve(nu, int(round(T / dt))), start=1):
        worst_mass = max(worst_mass, solver.last_mass_correction)
        exact = 1.0 + 3.0 * math.exp(-2.0 * k * dt)
        worst = max(worst, abs(nu.variance() - exact) / exact)
    return worst, worst_mass


def check_pde_exactness(seed: int = 0, quick: bool = False) -> CheckResult:
    """Ornstein-Uhlenbeck variance 1 + 3 e^{-2t}; error halves under (dt, dx) -> (dt/2, dx/2)"""
    T = 1.0 if quick else 2.0
    coarse, mass_coarse = _variance_errors(1500, 4e-3, T)
    fine, mass_fine = _variance_errors(3000, 2e-3, T)
    ratio = fine / coarse if coarse > 0 else 0.0
    passed = coarse < 1e-2 and 0.3 <= ratio <= 0.7 and max(mass_coarse, mass_fine) <= 1e-12
    return CheckResult(
        "pde_exactness",
        passed,
        {"max_relative_error": coarse, "refined_error": fine, "ratio": ratio, "max_mass_error": max(mass_coarse, mass_fine)},
    )


def check_entropy_decay(seed: int = 0, quick: bool = False, rho_lsm: float = 1.0) -> CheckResult:
    """OU decay rate 2; curie_weiss decay, transport and log-Sobolev checks along the trace"""
    free = builtin_model("free")
    grid = make_grid(-12.0, 12.0, 2400)
    alpha = reference_measure(free, grid)
    ou = evolve_and_trace(free, gaussian_measure(grid, 2.0, 1.0), 4.0 if quick else 10.0, 1e-3, alpha, 1.0)
    ou_ok = ou.fitted_rate is not None and abs(ou.fitted_rate - 2.0) <= 0.05 and ou.fitted_rate >= 0.5

    model = builtin_model("curie_weiss", {"beta": 1.0, "K": 0.2})
    report = constants_report(model, 2, rho_lsm=rho_lsm)
    cw_grid = make_grid(-6.0, 6.0, 1200)
    nu_inf = solve_invariant(model, cw_grid, gamma0=report.gamma0).measure
    cw = evolve_and_trace(
        model, gaussian_measure(cw_grid, 1.0, 0.5), 2.0 if quick else 5.0, 1e-3, nu_inf, report.lsi_bound
    )
    return CheckResult(
        "entropy_decay",
        bool(
            ou_ok
            and ou.all_checks_pass
            and cw.all_checks_pass
            and ou.free_energy_monotone
            and cw.free_energy_monotone
        ),
        {
            "ou_rate": ou.fitted_rate,
            "ou_checks": ou.all_checks_pass,
            "curie_weiss_rho_ls": report.lsi_bound,
            "curie_weiss_rate": cw.fitted_rate,
            "curie_weiss_checks": cw.all_checks_pass,
            "ou_free_energy_monotone": ou.free_energy_monotone,
            "ou_max_energy_increase": ou.max_energy_increase,
            "curie_weiss_free_energy_monotone": cw.free_energy_monotone,
            "curie_weiss_max_energy_increase": cw.max_energy_increase,
        },
    )


def check_finite_n(seed: int = 0, quick: bool = False) -> CheckResult:
    """Entropy identity at N=2 and shrinking Fisher gap over N = 2, 3, 4"""
    model = builtin_model("gaussian", {"beta": 0.3})
    grid = make_grid(-10.0, 10.0, 1000)
    nu = gaussian_measure(grid, 0.5, 1.0)
    entropy = finite_n_entropy_check(model, nu)
    fisher = finite_n_fisher_check(model, nu, n_samples=200_000 if quick else 1_000_000, seed=seed)
    return CheckResult(
        "finite_n",
        bool(entropy.difference < 1e-6 and fisher.decreasing),
        {"entropy": entropy._asdict(), "fisher": fisher._asdict()},
    )


def check_chaos(seed: int = 0, quick: bool = False) -> CheckResult:
    """gaussian beta=0.5, T=1: W2 to the PDE solution decreases over N = 4, 16, 64"""
    model = builtin_model("gaussian", {"beta": 0.5})
    grid = make_grid(-8.0, 8.0, 1600)
    nu0 = gaussian_measure(grid, 1.0, 0.5)
    table = chaos_check(model, nu0, [4, 16, 64], T=1.0, dt=1e-2, seed=seed, n_target=40_000 if quick else 200_000)
    return CheckResult("chaos", table.decreasing, {"rows": [row._asdict() for row in table.rows]})


def check_model_derivatives(model: MeanFieldModel) -> CheckResult:
    result = check_model(model)
    return CheckResult(f"model_derivatives[{model.name}]", result.passed, result._asdict())


CHECKS: dict[str, Callable[..., CheckResult]] = {
    "quadrature": check_quadrature,
    "curie_weiss_constants": check_curie_weiss_constants,
    "gaussian_sharpness": check_gaussian_sharpness,
    "mala_covariance": check_mala_covariance,
    "correlation_decay": check_correlation_decay,
    "gap_dynamics": check_gap_dynamics,
    "fixed_point_contraction": check_fixed_point_contraction,
    "pde_exactness": check_pde_exactness,
    "entropy_decay": check_entropy_decay,
    "finite_n": check_finite_n,
    "chaos": check_chaos,
}


def run_checks(names: list[str] | None, seed: int, quick: bool = False, progress: Callable[[str], None] | None = None):
    """Run the named checks (all when empty) in registry order"""
    selected = list(CHECKS) if not names else names
    unknown = [n for n in selected if n not in CHECKS]
    if unknown:
        raise ValueError(f"Unknown check(s) {unknown}; available: {list(CHECKS)}")
    results = []
    for name in CHECKS:
        if name not in selected:
            continue
        if progress:
            progress(name)
        result = CHECKS[name](seed=seed, quick=quick)
        logger.info("Check %s: %s", name, "pass" if result.passed else "FAIL")
        results.append(result)
    return results
