import logging
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from mfgap.config.experiment import ExperimentConfig, apply_overrides, sweep_points
from mfgap.constants.quadrature import QuadratureOptions
from mfgap.constants.report import ConstantsReport, constants_report, constants_sweep
from mfgap.errors import ConfigError
from mfgap.meanfield.chaos import ChaosTable, chaos_check
from mfgap.meanfield.finite_n import finite_n_entropy_check, finite_n_fisher_check
from mfgap.meanfield.fixed_point import InvariantResult, find_fixed_points, solve_invariant
from mfgap.meanfield.grid import gaussian_measure, reference_measure, tilted_measure
from mfgap.meanfield.trace import DecayTrace, evolve_and_trace
from mfgap.particles.estimators import (
    GapEstimate,
    GapOptions,
    estimate_covariance_matrix,
    estimate_pair_covariance,
    estimate_spectral_gap,
)
from mfgap.particles.gaussian import gaussian_covariance, gaussian_rates
from mfgap.particles.sampler import GibbsSampleSet, sample_mala
from mfgap.pipeline.verification import CHECKS, check_model_derivatives, contraction_verdict, run_checks
from mfgap.pipeline.writers import RunReport, Table

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("constants", "sample", "invariant", "evolve", "chaos", "verify", "sweep")
GAP_TOLERANCE = 0.10

TEST_FUNCTIONS = {"tanh": np.tanh, "identity": lambda x: x}


class ExperimentOrchestrator:
    """
    Runs one subcommand of an experiment config through the library services
    and collects the results into a RunReport
    """

    def __init__(self, config: ExperimentConfig, seed: int, workers: int = 1, verbose: bool = True):
        self.config = config
        self.seed = int(seed)
        self.workers = max(1, int(workers))
        self.verbose = verbose
        self.model = config.build_model()

    def run(self, subcommand: str) -> RunReport:
        if subcommand not in SUBCOMMANDS:
            raise ConfigError(f"Unknown subcommand '{subcommand}'; expected one of {SUBCOMMANDS}")
        self._say(f"🧮 {subcommand}: model '{self.model.name}' {self.config.model.params}, seed {self.seed}")
        report = getattr(self, f"run_{subcommand}")()
        if report.checks:
            verdict = "✅ all checks pass" if report.passed else "❌ some checks failed"
            self._say(f"  {verdict} ({sum(report.checks.values())}/{len(report.checks)})")
        else:
            self._say("  ✅ done")
        return report

    # ============================================================
    # Subcommands
    # ============================================================
    def run_constants(self) -> RunReport:
        cfg = self.config.constants
        self._say(f"  📐 Constants for N = {sorted(set(cfg.n_particles))}...")
        reports = constants_sweep(
            self.model,
            cfg.n_particles,
            rho_lsm=cfg.rho_lsm,
            quad=QuadratureOptions(abs_tol=cfg.abs_tol, s_max=cfg.s_max),
            lip_f=cfg.lip_f,
            lip_g=cfg.lip_g,
            lsi_k1=cfg.lsi_k1,
            lsi_oscillation=cfg.lsi_oscillation,
        )
        header = ["N", *(name for name in ConstantsReport._fields if name not in ("model", "n_particles", "approximate"))]
        rows = [[r.n_particles, *(getattr(r, name) for name in header[1:])] for r in reports]
        summary = {
            "model": self.model.name,
            "params": self.config.model.params,
            "headline": self._format_constants(reports[0]),
            "reports": [self._format_constants(r) for r in reports],
        }
        return RunReport("constants", summary, {"constants": Table(header, rows)}, {})

    def run_sample(self) -> RunReport:
        cfg = self.config.sample
        f = TEST_FUNCTIONS[cfg.test_function]
        checks: dict[str, bool] = {}
        per_n = []
        cov_rows, pair_rows = [], []
        samples: GibbsSampleSet | None = None
        for N in sorted(set(cfg.n_particles)):
            self._say(f"  🎲 MALA N={N}: {cfg.n_samples} samples over {cfg.chains} chains (dt={cfg.dt})...")
            samples = sample_mala(
                self.model, N, cfg.n_samples, cfg.dt, cfg.burn_in, self.seed, thin=cfg.thin, chains=cfg.chains
            )
            cov, se = estimate_covariance_matrix(samples)
            exact = self._gaussian_covariance(N)
            for i in range(N):
                for j in range(i, N):
                    cov_rows.append([N, i, j, cov[i, j], se[i, j], None if exact is None else exact[i, j]])
            if exact is not None:
                z = np.abs(cov - exact) / se
                checks[f"covariance_N{N}"] = bool(np.all(z <= 4.0))

            pair = estimate_pair_covariance(samples, f)
            bound = constants_report(self.model, N, lip_f=1.0, lip_g=1.0).correlation_bound
            pair_rows.append([N, pair.estimate, pair.standard_error, bound, samples.acceptance_rate])
            if bound is not None:
                checks[f"correlation_bound_N{N}"] = abs(pair.estimate) <= bound + 3.0 * pair.standard_error
            per_n.append(self._format_samples(N, samples, pair, bound))

        tables = {
            "covariance": Table(["N", "i", "j", "estimate", "standard_error", "exact"], cov_rows),
            "pair_covariance": Table(["N", "covariance", "standard_error", "bound", "acceptance_rate"], pair_rows),
            "samples": Table(self._sample_header(samples), list(self._sample_rows(samples))),
        }
        summary = {"model": self.model.name, "test_function": cfg.test_function, "runs": per_n}
        headline = {k: v for k, v in per_n[0].items() if not isinstance(v, (dict, list))}

        if self.config.gap.enabled:
            estimate, gap_checks, gap_summary = self._estimate_gap()
            checks.update(gap_checks)
            summary["gap"] = gap_summary
            headline["gap_rate"] = estimate.rate
        summary["headline"] = headline
        return RunReport("sample", summary, tables, checks)

    def run_invariant(self) -> RunReport:
        cfg = self.config.invariant
        grid = self.config.build_grid()
        gamma0 = self._constants(2).gamma0
        checks: dict[str, bool] = {}
        if gamma0 < 1.0:
            self._say(f"  🔁 Fixed-point iteration (gamma0 = {gamma0:.4f} < 1, unique invariant measure)...")
            result = solve_invariant(self.model, grid, cfg.tol, cfg.max_iter, gamma0=gamma0)
            alpha = reference_measure(self.model, grid)
            self._say(f"  🧭 Contraction run from alpha tilted by exp({cfg.tilt:g} x)...")
            tilted = solve_invariant(
                self.model, grid, cfg.tol, cfg.max_iter, tilted_measure(alpha, cfg.tilt), gamma0, start="tilted"
            )
            contracts, worst = contraction_verdict([result, tilted], gamma0)
            checks["converged"] = result.converged and tilted.converged
            checks["contraction"] = contracts
            results = [result, tilted]
        else:
            self._say(f"  🔀 gamma0 = {gamma0:.4f} >= 1: searching for fixed points from several starts...")
            results = find_fixed_points(self.model, grid, cfg.tol, cfg.max_iter, cfg.tilt, gamma0)
            checks["found_fixed_point"] = bool(results)
            worst = None
        tables = {
            "contraction": Table(
                ["start", "iteration", "w1_step", "factor"],
                [row for r in results for row in self._contraction_rows(r)],
            ),
        }
        if results:
            tables["density"] = Table(["x", "density"], list(results[0].measure.rows()))
        formatted = [self._format_invariant(r) for r in results]
        summary = {
            "model": self.model.name,
            "gamma0": gamma0,
            "unique": gamma0 < 1.0,
            "max_factor": worst,
            "results": formatted,
            "headline": {"gamma0": gamma0, "max_factor": worst, **(formatted[0] if formatted else {})},
        }
        return RunReport("invariant", summary, tables, checks)

    def run_evolve(self) -> RunReport:
        cfg = self.config.evolve
        grid = self.config.build_grid()
        report = self._constants(2)
        gamma0 = report.gamma0
        rho_ls = cfg.rho_ls if cfg.rho_ls is not None else report.lsi_bound
        if rho_ls is None:
            raise ConfigError(
                f"No log-Sobolev constant: gamma0 = {gamma0:.4f} >= 1 so the product bound does not apply; "
                "set evolve.rho_ls"
            )
        self._say("  🔁 Invariant measure for the free-energy reference...")
        nu_inf = self._invariant_measure(grid, gamma0)
        if cfg.initial == "invariant":
            nu0 = nu_inf
        else:
            nu0 = gaussian_measure(grid, cfg.initial_mean, cfg.initial_variance)
        self._say(f"  🌊 McKean-Vlasov evolution to T={cfg.T:g} (dt={cfg.dt:g}, rho_LS={rho_ls:.4g})...")
        trace = evolve_and_trace(
            self.model,
            nu0,
            cfg.T,
            cfg.dt,
            nu_inf,
            rho_ls,
            record_every=cfg.record_every,
            certified=gamma0 < 1.0,
            slack=cfg.slack,
        )
        checks = {
            "entropy_decay": bool(trace.decay_check.all()),
            "talagrand": bool(trace.t2_check.all()),
            "log_sobolev": bool(trace.lsi_check.all()),
            "free_energy_monotone": trace.free_energy_monotone,
        }
        tables = {"trace": Table(DecayTrace.header(), list(trace.rows()))}
        summary = {"model": self.model.name, "trace": self._format_trace(trace)}

        if self.config.finite_n.enabled:
            finite_checks, finite_summary = self._finite_n(grid)
            checks.update(finite_checks)
            summary["finite_n"] = finite_summary
        summary["headline"] = {
            k: v for k, v in summary["trace"].items() if not isinstance(v, (list, tuple, dict))
        }
        return RunReport("evolve", summary, tables, checks)

    def run_chaos(self) -> RunReport:
        cfg = self.config.chaos
        grid = self.config.build_grid()
        nu0 = gaussian_measure(grid, cfg.initial_mean, cfg.initial_variance)
        self._say(f"  🌐 Propagation of chaos over N = {sorted(set(cfg.n_values))} to T={cfg.T:g}...")
        table = chaos_check(
            self.model, nu0, cfg.n_values, cfg.T, cfg.dt, self.seed, n_target=cfg.n_target, pde_dt=cfg.pde_dt
        )
        rows = [[r.n_particles, r.replicas, r.w2, r.noise] for r in table.rows]
        summary = {
            "model": self.model.name,
            **self._format_chaos(table),
            "headline": {f"w2_N{r.n_particles}": r.w2 for r in table.rows},
        }
        return RunReport("chaos", summary, {"chaos": Table(ChaosTable.header(), rows)}, {"decreasing": table.decreasing})

    def run_verify(self) -> RunReport:
        cfg = self.config.verify
        self._say(f"  🔬 Acceptance suite ({len(cfg.checks) or len(CHECKS)} checks{', quick' if cfg.quick else ''})...")
        unknown = sorted(set(cfg.checks) - set(CHECKS))
        if unknown:
            raise ConfigError(f"verify.checks: unknown check(s) {unknown}; available: {list(CHECKS)}", unknown)
        results = run_checks(cfg.checks, self.seed, cfg.quick, progress=lambda name: self._say(f"    • {name}"))
        results.append(check_model_derivatives(self.model))
        for result in results:
            self._say(f"    {'✅' if result.passed else '❌'} {result.name}")
        checks = {r.name: bool(r.passed) for r in results}
        summary = {
            "model": self.model.name,
            "quick": cfg.quick,
            "details": {r.name: r.details for r in results},
            "headline": {"n_checks": len(results), "n_passed": sum(checks.values())},
        }
        table = Table(["check", "passed"], [[r.name, r.passed] for r in results])
        return RunReport("verify", summary, {"checks": table}, checks)

    def run_sweep(self) -> RunReport:
        cfg = self.config.sweep
        points = sweep_points(self.config)
        keys = list(cfg.parameters)
        self._say(f"  🗺️  Sweeping '{cfg.subcommand}' over {len(points)} point(s) with {self.workers} worker(s)...")
        jobs = [(index, self.config, point, cfg.subcommand, self.seed) for index, point in enumerate(points)]
        if self.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                outcomes = list(pool.map(_run_point, jobs))
        else:
            outcomes = [_run_point(job) for job in jobs]
        outcomes.sort(key=lambda outcome: outcome[0])

        metrics: list[str] = []
        for _, _, headline, _ in outcomes:
            metrics += [k for k in headline if k not in metrics]
        header = ["point", *keys, "passed", *metrics]
        rows = []
        checks = {}
        for index, point, headline, passed in outcomes:
            rows.append([index, *(point[k] for k in keys), passed, *(_scalar(headline.get(m)) for m in metrics)])
            checks[f"point_{index}"] = passed
        summary = {
            "subcommand": cfg.subcommand,
            "parameters": cfg.parameters,
            "n_points": len(points),
            "headline": {"n_points": len(points), "n_passed": sum(checks.values())},
        }
        return RunReport("sweep", summary, {"sweep": Table(header, rows)}, checks)

    # ============================================================
    # Helpers
    # ============================================================
    def _say(self, message: str) -> None:
        if self.verbose:
            print(message)

    def _constants(self, N: int) -> ConstantsReport:
        cfg = self.config.constants
        return constants_report(
            self.model,
            N,
            rho_lsm=cfg.rho_lsm,
            quad=QuadratureOptions(abs_tol=cfg.abs_tol, s_max=cfg.s_max),
            lip_f=cfg.lip_f,
            lip_g=cfg.lip_g,
            lsi_k1=cfg.lsi_k1,
            lsi_oscillation=cfg.lsi_oscillation,
        )

    def _invariant_measure(self, grid, gamma0: float):
        cfg = self.config.invariant
        if gamma0 < 1.0:
            return solve_invariant(self.model, grid, cfg.tol, cfg.max_iter, gamma0=gamma0).measure
        found = find_fixed_points(self.model, grid, cfg.tol, cfg.max_iter, cfg.tilt, gamma0)
        if not found:
            raise ConfigError("No invariant measure found from any start; raise invariant.max_iter")
        if len(found) > 1:
            logger.warning("%d invariant measures found; using the one reached from alpha", len(found))
        return found[0].measure

    def _gaussian_beta(self) -> float | None:
        if self.model.name != "gaussian":
            return None
        return float(self.model.params["beta"])

    def _gaussian_covariance(self, N: int) -> np.ndarray | None:
        beta = self._gaussian_beta()
        return None if beta is None else gaussian_covariance(beta, N)

    def _estimate_gap(self) -> tuple[GapEstimate, dict[str, bool], dict]:
        cfg = self.config.gap
        N = cfg.n_particles
        self._say(f"  ⏱️  Relaxation rate of '{cfg.observable}' at N={N} (dt={cfg.dt:g})...")
        options = GapOptions(
            dt=cfg.dt,
            n_chains=cfg.n_chains,
            n_steps=cfg.n_steps,
            burn_in=cfg.burn_in,
            max_lag=cfg.max_lag,
            n_bootstrap=cfg.n_bootstrap,
            seed=self.seed,
            extrapolate=cfg.extrapolate,
        )
        estimate = estimate_spectral_gap(self.model, N, cfg.observable, options)
        bound = self._constants(N).poincare_bound
        checks = {"gap_above_bound": estimate.rate + estimate.half_width >= bound}
        expected = None
        beta = self._gaussian_beta()
        if beta is not None and cfg.observable in ("contrast", "magnetization"):
            rates = gaussian_rates(beta, N)
            expected = rates["zero_sum"] if cfg.observable == "contrast" else rates["uniform"]
            checks["gap_matches_exact"] = abs(estimate.rate - expected) <= GAP_TOLERANCE * expected
        return estimate, checks, self._format_gap(estimate, bound, expected)

    def _finite_n(self, grid) -> tuple[dict[str, bool], dict]:
        cfg = self.config.finite_n
        nu = gaussian_measure(grid, cfg.mean, cfg.variance)
        self._say(f"  🧩 Finite-N identities at nu = N({cfg.mean:g}, {cfg.variance:g})...")
        entropy = finite_n_entropy_check(self.model, nu)
        fisher = finite_n_fisher_check(self.model, nu, tuple(cfg.n_values), cfg.n_samples, self.seed)
        checks = {"finite_n_entropy": entropy.difference < 1e-6, "finite_n_fisher": fisher.decreasing}
        return checks, {"entropy": entropy._asdict(), "fisher": fisher._asdict()}

    @staticmethod
    def _contraction_rows(result: InvariantResult):
        # factors[k - 1] = steps[k] / steps[k - 1] while the steps stay above the floor
        for k, step in enumerate(result.steps):
            factor = result.factors[k - 1] if 1 <= k <= len(result.factors) else None
            yield [result.start, k + 1, step, factor]

    @staticmethod
    def _sample_header(samples: GibbsSampleSet | None) -> list[str]:
        d = 1 if samples is None else samples.samples.shape[2]
        return ["sample", "chain", "particle", *(f"coord_{k}" for k in range(d))]

    @staticmethod
    def _sample_rows(samples: GibbsSampleSet | None):
        """Samples of the first chain of the last N"""
        if samples is None:
            return
        first = samples.chain_ids.min()
        for k in np.flatnonzero(samples.chain_ids == first):
            for i, point in enumerate(samples.samples[k]):
                yield [int(k), int(first), i, *(float(v) for v in point)]

    # ============================================================
    # Formatting
    # ============================================================
    def _format_constants(self, report: ConstantsReport) -> dict:
        data = report._asdict()
        data["approximate"] = list(report.approximate)
        data["zegarlinski_holds"] = report.gamma0 < 1.0
        return data

    def _format_samples(self, N: int, samples: GibbsSampleSet, pair, bound: float | None) -> dict:
        return {
            "N": N,
            "n_samples": samples.n_samples,
            "acceptance_rate": samples.acceptance_rate,
            "dt": samples.dt,
            "pair_covariance": pair.estimate,
            "pair_standard_error": pair.standard_error,
            "correlation_bound": bound,
        }

    def _format_gap(self, estimate: GapEstimate, bound: float, expected: float | None) -> dict:
        return {
            **estimate._asdict(),
            "half_width": estimate.half_width,
            "poincare_bound": bound,
            "exact_rate": expected,
        }

    def _format_invariant(self, result: InvariantResult) -> dict:
        return {
            "start": result.start,
            "iterations": result.iterations,
            "residual": result.residual,
            "converged": result.converged,
            "certified": result.certified,
            "mean": result.measure.mean(),
            "variance": result.measure.variance(),
            "boundary_mass": result.measure.boundary_mass(),
            "factors": list(result.factors),
        }

    def _format_trace(self, trace: DecayTrace) -> dict:
        return {
            "rho_ls": trace.rho_ls,
            "certified": trace.certified,
            "fitted_rate": trace.fitted_rate,
            "fit_window": None if trace.fit_window is None else list(trace.fit_window),
            "H_W_initial": float(trace.H_W[0]),
            "H_W_final": float(trace.H_W[-1]),
            "max_energy_increase": trace.max_energy_increase,
            "free_energy_monotone": trace.free_energy_monotone,
            "dissipation_ratio_median": (
                float(np.nanmedian(trace.dissipation_ratio)) if np.isfinite(trace.dissipation_ratio).any() else None
            ),
        }

    def _format_chaos(self, table: ChaosTable) -> dict:
        return {
            "T": table.T,
            "dt": table.dt,
            "decreasing": table.decreasing,
            "rows": [row._asdict() for row in table.rows],
        }


def _scalar(value):
    return value if value is None or np.isscalar(value) else str(value)


def _run_point(job) -> tuple[int, dict, dict, bool]:
    """Run one sweep point in a fresh orchestrator; module level so worker processes can unpickle it"""
    index, config, point, subcommand, seed = job
    point_config = apply_overrides(config, point)
    report = ExperimentOrchestrator(point_config, seed, workers=1, verbose=False).run(subcommand)
    logger.info("Sweep point %d %s: %s", index, point, "pass" if report.passed else "FAIL")
    return index, point, report.summary.get("headline", {}), report.passed
