"""
mfgap command line

    mfgap constants --config configs/gaussian.toml
    mfgap evolve --config configs/curie_weiss.toml --format csv --out results/
    mfgap verify --quiet
"""

import argparse
import logging
import sys

from mfgap.config.experiment import ExperimentConfig, load_experiment
from mfgap.config.settings import Settings, settings
from mfgap.errors import ConfigError, MeanFieldError
from mfgap.pipeline.orchestrator import SUBCOMMANDS, ExperimentOrchestrator
from mfgap.pipeline.writers import write_report

HELP = {
    "constants": "c_Lip,m, h, Poincare / log-Sobolev bounds, gamma0 and correlation bounds per N",
    "sample": "MALA sampling of the Gibbs measure, covariance and relaxation-rate estimates",
    "invariant": "invariant measure of the McKean-Vlasov equation and its contraction history",
    "evolve": "McKean-Vlasov evolution with entropy, Talagrand and log-Sobolev checks",
    "chaos": "propagation of chaos: W2 of one particle's law to the PDE solution over N",
    "verify": "acceptance suite",
    "sweep": "one subcommand over the Cartesian product of [sweep] parameters",
}

CSV_COLUMNS = """\
CSV files (--format csv), one per table, <prefix>_<subcommand>_<table>.csv:
  constants_constants      N, c_lip_m, lambda_1m_bound, h, poincare_bound, poincare_vacuous,
                           cross_hessian_norm, gamma0, rho_lsm, lsi_bound, correlation_constant,
                           correlation_bound, profile_quality, c_lip_m_explicit,
                           c_lip_m_closed_form, gap_closed_form, bakry_emery_bound, rho_lsm_source
  sample_covariance        N, i, j, estimate, standard_error, exact
  sample_pair_covariance   N, covariance, standard_error, bound, acceptance_rate
  sample_samples           sample, chain, particle, coord_0..coord_{d-1}
  invariant_contraction    start, iteration, w1_step, factor
  invariant_density        x, density
  evolve_trace             t, H_W, I_W, W2, E_f, lsi_check, t2_check
  chaos_chaos              N, replicas, W2, noise
  verify_checks            check, passed
  sweep_sweep              point, <swept parameters>, passed, <headline metrics>
Floats carry 17 significant digits. A <prefix>_<subcommand>.json summary
(schema_version 1) is written alongside. Exit status is 0 iff every check passes.
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfgap",
        description="Mean-field particle systems: uniform functional-inequality constants and their checks",
        epilog=CSV_COLUMNS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(
            name, help=HELP[name], epilog=CSV_COLUMNS, formatter_class=argparse.RawDescriptionHelpFormatter
        )
        sub.add_argument("--config", help="TOML experiment file (defaults apply when omitted)")
        sub.add_argument("--seed", type=int, help="master seed (env MFGAP_SEED)")
        sub.add_argument("--workers", type=int, help="worker processes for sweep (env MFGAP_WORKERS)")
        sub.add_argument("--out", help="output directory (env MFGAP_OUT_DIR)")
        sub.add_argument("--format", choices=["json", "csv"], help="report format (env MFGAP_OUTPUT_FORMAT)")
        sub.add_argument("--quiet", action="store_true", help="no progress lines")
        sub.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    return parser


def resolve_runtime(args: argparse.Namespace, config: ExperimentConfig, env: Settings) -> dict:
    """Flag > explicitly set environment > config file > settings default, for seed and workers"""
    explicit = env.model_fields_set

    def pick(flag, name: str, from_config):
        if flag is not None:
            return flag
        if name in explicit:
            return getattr(env, name)
        if from_config is not None:
            return from_config
        return getattr(env, name)

    return {
        "seed": pick(args.seed, "seed", config.seed),
        "workers": pick(args.workers, "workers", config.workers),
        "out_dir": args.out or config.output.directory or env.out_dir,
        "output_format": args.format or config.output.format or env.output_format,
    }


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")

    try:
        config = load_experiment(args.config)
        runtime = resolve_runtime(args, config, settings)
        if runtime["seed"] < 0 or runtime["workers"] < 1:
            raise ConfigError("seed must be >= 0 and workers >= 1")
        orchestrator = ExperimentOrchestrator(config, runtime["seed"], runtime["workers"], verbose=not args.quiet)
        report = orchestrator.run(args.subcommand)
    except ConfigError as exc:
        print(f"❌ Configuration error: {exc}", file=sys.stderr)
        return 2
    except (MeanFieldError, ValueError) as exc:
        print(f"❌ {args.subcommand} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

    paths = write_report(report, runtime["out_dir"], runtime["output_format"], config.output.prefix)
    if not args.quiet:
        for path in paths:
            print(f"📁 {path}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
