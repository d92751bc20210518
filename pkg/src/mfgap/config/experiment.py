"""
Experiment configuration files

TOML with one section per subcommand; every section is a pydantic model with
extra="forbid", so a misspelt key is an error rather than a silent default.

    [model]
    family = "curie_weiss"
    params = { beta = 1.0, K = 0.2 }

    [grid]
    x_min = -6.0
    x_max = 6.0
    n_cells = 1200

    [evolve]
    T = 5.0
    dt = 1e-3
"""

import copy
import itertools
import tomllib
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from mfgap.errors import ConfigError, MeanFieldError
from mfgap.meanfield.grid import make_grid, reference_measure
from mfgap.potentials.families import FAMILIES, builtin_model
from mfgap.potentials.models import MeanFieldModel


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(Section):
    family: str = "gaussian"
    params: dict[str, float | int | list[float] | list[list[float]]] = Field(default_factory=lambda: {"beta": 0.5})

    def build(self) -> MeanFieldModel:
        return builtin_model(self.family, self.params)


class GridSection(Section):
    x_min: float = -10.0
    x_max: float = 10.0
    n_cells: int = Field(2000, ge=3)


class ConstantsSection(Section):
    n_particles: list[int] = Field(default_factory=lambda: [2, 3, 10, 50])
    rho_lsm: float = Field(1.0, gt=0)
    lip_f: float = Field(1.0, ge=0)
    lip_g: float = Field(1.0, ge=0)
    abs_tol: float = Field(1e-10, gt=0)
    s_max: float = Field(1e3, gt=0)
    # convex/bounded split V = V_c + V_b: Hess V_c >= K1 + K0, oscillation of V_b
    lsi_k1: float | None = Field(None, gt=0)
    lsi_oscillation: float | None = Field(None, ge=0)

    @model_validator(mode="after")
    def _check_lsi_split(self) -> "ConstantsSection":
        if (self.lsi_k1 is None) != (self.lsi_oscillation is None):
            raise ValueError("constants.lsi_k1 and constants.lsi_oscillation must be set together")
        return self


class SampleSection(Section):
    n_particles: list[int] = Field(default_factory=lambda: [4])
    n_samples: int = Field(100_000, ge=1)
    dt: float = Field(0.5, gt=0)
    burn_in: int = Field(500, ge=0)
    thin: int = Field(1, ge=1)
    chains: int = Field(64, ge=1)
    test_function: Literal["tanh", "identity"] = "tanh"


class GapSection(Section):
    n_particles: int = Field(3, ge=2)
    observable: Literal["magnetization", "contrast", "first_coordinate"] = "contrast"
    dt: float = Field(0.1, gt=0)
    n_chains: int = Field(32, ge=2)
    n_steps: int = Field(20_000, ge=10)
    burn_in: int = Field(500, ge=0)
    max_lag: int = Field(400, ge=2)
    n_bootstrap: int = Field(200, ge=1)
    extrapolate: bool = True
    enabled: bool = True


class InvariantSection(Section):
    tol: float = Field(1e-10, gt=0)
    max_iter: int = Field(500, ge=1)
    tilt: float = 1.0


class EvolveSection(Section):
    T: float = Field(5.0, ge=0)
    dt: float = Field(1e-3, gt=0)
    record_every: int = Field(50, ge=1)
    initial: Literal["gaussian", "invariant"] = "gaussian"
    initial_mean: float = 1.0
    initial_variance: float = Field(0.5, gt=0)
    rho_ls: float | None = Field(None, gt=0)
    slack: float = Field(5e-2, gt=0)


class ChaosSection(Section):
    n_values: list[int] = Field(default_factory=lambda: [4, 16, 64])
    T: float = Field(1.0, ge=0)
    dt: float = Field(1e-2, gt=0)
    n_target: int = Field(200_000, ge=10)
    pde_dt: float = Field(1e-3, gt=0)
    initial_mean: float = 1.0
    initial_variance: float = Field(0.5, gt=0)


class FiniteNSection(Section):
    n_values: list[int] = Field(default_factory=lambda: [2, 3, 4])
    n_samples: int = Field(1_000_000, ge=100)
    mean: float = 0.5
    variance: float = Field(1.0, gt=0)
    enabled: bool = False  # run the finite-N identities alongside `evolve`


class VerifySection(Section):
    checks: list[str] = Field(default_factory=list)  # empty: every check
    quick: bool = False


class SweepSection(Section):
    subcommand: Literal["constants", "sample", "invariant", "evolve", "chaos"] = "constants"
    parameters: dict[str, list[float | int | str]] = Field(default_factory=dict)


class OutputSection(Section):
    directory: str | None = None
    format: Literal["json", "csv"] | None = None
    prefix: str = "mfgap"


class ExperimentConfig(Section):
    seed: int | None = Field(None, ge=0)
    workers: int | None = Field(None, ge=1)
    model: ModelSection = Field(default_factory=ModelSection)
    grid: GridSection = Field(default_factory=GridSection)
    constants: ConstantsSection = Field(default_factory=ConstantsSection)
    sample: SampleSection = Field(default_factory=SampleSection)
    gap: GapSection = Field(default_factory=GapSection)
    invariant: InvariantSection = Field(default_factory=InvariantSection)
    evolve: EvolveSection = Field(default_factory=EvolveSection)
    chaos: ChaosSection = Field(default_factory=ChaosSection)
    finite_n: FiniteNSection = Field(default_factory=FiniteNSection)
    verify: VerifySection = Field(default_factory=VerifySection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _check_model_and_grid(self) -> "ExperimentConfig":
        if self.model.family not in FAMILIES:
            raise ValueError(f"model.family '{self.model.family}' is not one of {sorted(FAMILIES)}")
        try:
            model = self.model.build()
        except MeanFieldError as exc:
            raise ValueError(f"model.params: {exc}") from None
        particle_numbers = (
            self.constants.n_particles + self.sample.n_particles + self.chaos.n_values + self.finite_n.n_values
        )
        if any(n < 2 for n in particle_numbers):
            raise ValueError("every particle number must be >= 2")
        if self.grid.x_max <= self.grid.x_min:
            raise ValueError("grid.x_max must exceed grid.x_min")
        if model.dimension == 1:
            alpha = reference_measure(model, make_grid(self.grid.x_min, self.grid.x_max, self.grid.n_cells), None)
            mean, sigma = alpha.mean(), alpha.variance() ** 0.5
            if self.grid.x_min > mean - 4.0 * sigma or self.grid.x_max < mean + 4.0 * sigma:
                raise ValueError(
                    f"grid [{self.grid.x_min}, {self.grid.x_max}] covers less than 8 standard deviations "
                    f"of the reference measure (mean {mean:.3g}, sd {sigma:.3g})"
                )
        return self

    def build_model(self) -> MeanFieldModel:
        return self.model.build()

    def build_grid(self):
        return make_grid(self.grid.x_min, self.grid.x_max, self.grid.n_cells)


def _diagnostics(exc: ValidationError) -> list[str]:
    return [f"{'.'.join(str(p) for p in error['loc']) or '<root>'}: {error['msg']}" for error in exc.errors()]


def validate_experiment(data: dict[str, Any], source: str = "<config>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        diagnostics = _diagnostics(exc)
        raise ConfigError(f"{source}: invalid configuration\n  " + "\n  ".join(diagnostics), diagnostics) from None


def parse_experiment(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}", [str(exc)]) from None
    return validate_experiment(data, source)


def load_experiment(path: str | Path | None) -> ExperimentConfig:
    """Read a TOML experiment file; None gives the defaults"""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config file {path}: {exc.strerror}", [str(path)]) from None
    return parse_experiment(text, str(path))


def apply_overrides(config: ExperimentConfig, overrides: dict[str, Any]) -> ExperimentConfig:
    """Set dotted keys such as 'model.params.beta' or 'constants.n_particles' and re-validate"""
    data = copy.deepcopy(config.model_dump())
    for dotted, value in overrides.items():
        target = data
        *parents, leaf = dotted.split(".")
        for key in parents:
            if not isinstance(target.get(key), dict):
                raise ConfigError(f"Sweep parameter '{dotted}' does not name a config field", [dotted])
            target = target[key]
        target[leaf] = [value] if isinstance(target.get(leaf), list) and not isinstance(value, list) else value
    return validate_experiment(data, source="sweep point")


def sweep_points(config: ExperimentConfig) -> list[dict[str, Any]]:
    """Cartesian product of the swept values, in key order then value order"""
    keys = list(config.sweep.parameters)
    if not keys:
        return [{}]
    values = [config.sweep.parameters[k] for k in keys]
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]
