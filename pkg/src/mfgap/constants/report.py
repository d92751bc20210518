"""
Constants report

Collects every derived constant for one (model, N) pair. Verdict-type
failures (gamma_0 >= 1, 1 + c_Lip,m h <= 0) become empty fields, not errors.
"""

import logging
from typing import NamedTuple

from mfgap.constants.bounds import (
    bakry_emery_bound,
    c_lip_m_explicit,
    correlation_bound,
    correlation_constant,
    cross_hessian_sup_norm,
    curie_weiss_c_lip_m,
    curie_weiss_gap_bound,
    double_well_radial_c_lip_bound,
    lsi_lower_bound,
    offdiag_hessian_bound,
    perturbed_marginal_lsi,
    poincare_lower_bound,
    zegarlinski_gamma,
)
from mfgap.constants.quadrature import QuadratureOptions, c_lip_m
from mfgap.errors import NonDissipativeError, VacuousBound, ZegarlinskiFails
from mfgap.potentials.dissipativity import SamplingBudget, dissipativity_profile, explicit_constants
from mfgap.potentials.models import MeanFieldModel

logger = logging.getLogger(__name__)


class ConstantsReport(NamedTuple):
    model: str
    n_particles: int
    c_lip_m: float
    lambda_1m_bound: float
    h: float
    poincare_bound: float
    poincare_vacuous: bool
    cross_hessian_norm: float
    gamma0: float
    rho_lsm: float
    lsi_bound: float | None
    correlation_constant: float | None
    correlation_bound: float | None
    profile_quality: str
    c_lip_m_explicit: float | None  # from the dissipativity-at-infinity constants
    c_lip_m_closed_form: float | None  # curie_weiss exact, double_well_radial upper bound
    gap_closed_form: float | None  # curie_weiss two-case spectral gap bound
    bakry_emery_bound: float | None  # convex V, radial W only
    rho_lsm_source: str  # "input" or "perturbed"
    approximate: tuple[str, ...]


def constants_report(
    model: MeanFieldModel,
    n_particles: int,
    rho_lsm: float = 1.0,
    quad: QuadratureOptions = QuadratureOptions(),
    lip_f: float = 1.0,
    lip_g: float = 1.0,
    sampling: SamplingBudget | None = None,
    lsi_k1: float | None = None,
    lsi_oscillation: float | None = None,
) -> ConstantsReport:
    """
    Evaluate c_Lip,m, h, the Poincare and log-Sobolev bounds, gamma_0 and the correlation bound

    Args:
        model: mean-field model
        n_particles: N >= 2
        rho_lsm: log-Sobolev constant of the conditional marginals (user input)
        quad: quadrature options for c_Lip,m
        lip_f, lip_g: Lipschitz constants of the test functions of the correlation bound
        sampling: budget for sampled quantities of non-analytic models
        lsi_k1, lsi_oscillation: convex/bounded split of V; when both are given
            rho_lsm is replaced by K1 exp(-osc(V_b))

    Returns:
        ConstantsReport
    """
    rho_lsm_source = "input"
    if (lsi_k1 is None) != (lsi_oscillation is None):
        raise ValueError("lsi_k1 and lsi_oscillation must be given together")
    if lsi_k1 is not None:
        rho_lsm = perturbed_marginal_lsi(lsi_k1, lsi_oscillation)
        rho_lsm_source = "perturbed"

    profile = dissipativity_profile(model, sampling)
    c_lip = c_lip_m(profile, quad)
    h = offdiag_hessian_bound(model, n_particles, sampling if sampling is not None else _default_budget(model))
    gap = poincare_lower_bound(c_lip, h)
    cross_norm = cross_hessian_sup_norm(model, sampling)
    gamma0 = zegarlinski_gamma(c_lip, cross_norm)

    approximate = []
    if profile.approximate:
        approximate += ["c_lip_m", "lambda_1m_bound", "poincare_bound", "gamma0"]
    if model.structure.kind == "general":
        approximate += ["h", "cross_hessian_norm"]
    elif model.structure.kind == "fourier":
        approximate += ["cross_hessian_norm"]

    try:
        lsi = lsi_lower_bound(rho_lsm, gamma0)
    except ZegarlinskiFails as exc:
        logger.info("%s (model '%s', N=%d)", exc, model.name, n_particles)
        lsi = None
    try:
        corr_const = correlation_constant(c_lip, h)
        corr = correlation_bound(c_lip, h, n_particles, lip_f, lip_g)
    except VacuousBound as exc:
        logger.info("%s (model '%s', N=%d)", exc, model.name, n_particles)
        corr_const = corr = None

    closed_c_lip, closed_gap = _closed_forms(model, n_particles)
    return ConstantsReport(
        model=model.name,
        n_particles=int(n_particles),
        c_lip_m=c_lip,
        lambda_1m_bound=1.0 / c_lip,
        h=h,
        poincare_bound=gap.value,
        poincare_vacuous=gap.vacuous,
        cross_hessian_norm=cross_norm,
        gamma0=gamma0,
        rho_lsm=float(rho_lsm),
        lsi_bound=lsi,
        correlation_constant=corr_const,
        correlation_bound=corr,
        profile_quality=profile.quality,
        c_lip_m_explicit=_explicit_c_lip_m(model),
        c_lip_m_closed_form=closed_c_lip,
        gap_closed_form=closed_gap,
        bakry_emery_bound=_bakry_emery(model, n_particles),
        rho_lsm_source=rho_lsm_source,
        approximate=tuple(sorted(set(approximate))),
    )


def _explicit_c_lip_m(model: MeanFieldModel) -> float | None:
    try:
        constants = explicit_constants(model)
        return c_lip_m_explicit(constants.c_v, constants.c1, constants.c_w, constants.c2, constants.radius)
    except NonDissipativeError:
        return None


def _closed_forms(model: MeanFieldModel, n_particles: int) -> tuple[float | None, float | None]:
    if model.name == "curie_weiss":
        beta, K = float(model.params["beta"]), float(model.params["K"])
        return curie_weiss_c_lip_m(beta), curie_weiss_gap_bound(beta, K, n_particles)
    if model.name == "double_well_radial":
        return double_well_radial_c_lip_bound(float(model.params["beta"]), float(model.params["K"])), None
    return None, None


def _bakry_emery(model: MeanFieldModel, n_particles: int) -> float | None:
    conf = model.confinement
    tag = model.structure
    if conf is None or tag.kind not in ("radial", "fourier"):
        return None
    if conf.c1_prime > 0 and conf.radius > 0:
        return None  # V not globally convex
    return bakry_emery_bound(conf.c_v, float(tag.hessian_lower), n_particles)


def _default_budget(model: MeanFieldModel) -> SamplingBudget | None:
    return SamplingBudget(n_samples=200) if model.structure.kind == "general" else None


def constants_sweep(
    model: MeanFieldModel,
    n_values: list[int],
    rho_lsm: float = 1.0,
    quad: QuadratureOptions = QuadratureOptions(),
    lip_f: float = 1.0,
    lip_g: float = 1.0,
    sampling: SamplingBudget | None = None,
    lsi_k1: float | None = None,
    lsi_oscillation: float | None = None,
) -> list[ConstantsReport]:
    """One report per N; c_Lip,m and the profile do not depend on N"""
    return [
        constants_report(
            model,
            n,
            rho_lsm=rho_lsm,
            quad=quad,
            lip_f=lip_f,
            lip_g=lip_g,
            sampling=sampling,
            lsi_k1=lsi_k1,
            lsi_oscillation=lsi_oscillation,
        )
        for n in sorted(set(int(n) for n in n_values))
    ]
