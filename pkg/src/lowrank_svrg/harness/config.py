"""Experiment descriptions and their strict JSON form."""

import dataclasses
import json
from dataclasses import dataclass, field

from lowrank_svrg.datagen import MODELS, GenSpec
from lowrank_svrg.models import Link
from lowrank_svrg.solvers import GdConfig, InitConfig, SvrgConfig

__all__ = ["ConfigError", "ExperimentSpec", "GridSpec", "load_spec", "parse_spec", "default_spec"]

KINDS = ("convergence", "phase", "stat_error", "grid")
SOLVERS = ("svrg", "gd", "both")
ALPHA_RULES = ("inf_norm", "feasible", "none")
# Template fields of GenSpec; seed and b are filled in per trial.
GEN_KEYS = ("d1", "d2", "r", "N", "noise_nu", "link", "factor_dist", "scale_to_alpha", "stream_design")
SVRG_KEYS = ("eta", "step_coef", "m", "S", "snapshot_rule", "project", "memoize")


class ConfigError(ValueError):
    """Invalid or unknown configuration entries."""


@dataclass(frozen=True)
class GridSpec:
    """Cells swept by the ``grid`` subcommand."""

    svrg_step_coef: tuple = (0.02, 0.03, 0.05, 0.08)
    n_components: tuple = (50, 100)
    m_factor: tuple = (1.0, 2.0, 4.0)
    gd_step_coef: tuple = (0.6, 0.8, 1.0, 1.2, 1.4, 1.6)
    target: float = 1e-6
    # Every cell gets the same budget of effective data passes.
    max_passes: float = 60.0


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "convergence"
    model: str = "sensing"
    experiment: str | None = None
    gen: dict = field(default_factory=dict)
    solver: str = "svrg"
    svrg: SvrgConfig = field(default_factory=SvrgConfig)
    gd: GdConfig = field(default_factory=GdConfig)
    init: InitConfig = field(default_factory=InitConfig)
    trials: int = 30
    sweep: tuple = ()
    n_components: int = 50
    alpha_rule: str | None = None
    success_threshold: float = 1e-3
    base_seed: int = 0
    output: str | None = None
    jobs: int = 1
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.kind in ("phase", "stat_error") and not self.sweep:
            raise ConfigError(f"{self.kind} experiments need a non-empty sweep")
        if self.n_components < 1:
            raise ConfigError("n_components must be at least 1")
        if self.alpha_rule is not None and self.alpha_rule not in ALPHA_RULES:
            raise ConfigError(f"alpha_rule must be one of {ALPHA_RULES}")
        if not self.success_threshold > 0:
            raise ConfigError("success_threshold must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if not 0 <= self.base_seed < 2**64:
            raise ConfigError("base_seed must be an unsigned 64-bit integer")
        unknown = set(self.gen) - set(GEN_KEYS)
        if unknown:
            raise ConfigError(f"unknown gen keys: {sorted(unknown)}")
        try:
            self.gen_spec(0, self.n_components)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid gen template: {exc}") from exc
        object.__setattr__(self, "sweep", tuple(self.sweep))

    @property
    def name(self):
        return self.experiment or self.kind

    @property
    def solvers(self):
        return ("svrg", "gd") if self.solver == "both" else (self.solver,)

    @property
    def rule(self):
        """Spikiness rule; completion defaults to keeping ``Z*`` feasible."""
        if self.alpha_rule is not None:
            return self.alpha_rule
        return "feasible" if self.model == "completion" else "inf_norm"

    def gen_spec(self, seed, N=None):
        """Concrete :class:`GenSpec` for one trial with ``N`` observations."""
        g = dict(self.gen)
        if "link" in g and isinstance(g["link"], dict):
            g["link"] = Link(**g["link"])
        if N is None:
            N = g.get("N", self.n_components)
        g["N"] = int(N)
        n = min(self.n_components, g["N"]) or 1
        return GenSpec(model=self.model, b=max(1, g["N"] // n), seed=seed, **g)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["sweep"] = list(self.sweep)
        # The solver seed is derived per trial, never configured.
        del d["svrg"]["seed"]
        d["grid"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["grid"].items()}
        return d


def _strict(cls, data, where, allowed=None):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    names = allowed or [f.name for f in dataclasses.fields(cls)]
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def parse_spec(data):
    """Build an :class:`ExperimentSpec` from a decoded JSON object.

    Unknown keys at any level are rejected.
    """
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = dict(data)
    top = {f.name for f in dataclasses.fields(ExperimentSpec)}
    unknown = set(data) - top
    if unknown:
        raise ConfigError(f"unknown keys in config: {sorted(unknown)}")
    if "svrg" in data:
        data["svrg"] = _strict(SvrgConfig, data["svrg"], "svrg", SVRG_KEYS)
    if "gd" in data:
        data["gd"] = _strict(GdConfig, data["gd"], "gd")
    if "init" in data:
        data["init"] = _strict(InitConfig, data["init"], "init")
    if "grid" in data:
        grid = {k: tuple(v) if isinstance(v, list) else v for k, v in dict(data["grid"]).items()}
        data["grid"] = _strict(GridSpec, grid, "grid")
    if "gen" in data and not isinstance(data["gen"], dict):
        raise ConfigError("gen must be a JSON object")
    try:
        return ExperimentSpec(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_spec(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_spec(data)


# Desk-scale presets following the synthetic settings of the experiments.
_PRESET_GEN = {
    "sensing": {"d1": 100, "d2": 80, "r": 2, "N": 1000},
    "completion": {"d1": 100, "d2": 80, "r": 2, "N": 3700},
    "onebit": {
        "d1": 60,
        "d2": 60,
        "r": 1,
        "N": 2160,
        "factor_dist": "uniform_half",
        "scale_to_alpha": 1.0,
        "link": {"kind": "probit", "sigma": 0.5},
    },
}
_PRESET_TAU = {"sensing": 0.5, "completion": 1.0, "onebit": 0.3}
_PRESET_SWEEP = {
    "phase": (1.0, 2.0, 3.0, 4.0, 5.0),
    "stat_error": {"sensing": (2000, 4000, 8000), "completion": (1850, 3700, 7400), "onebit": (1080, 2160, 3240)},
}


def default_spec(kind, model="sensing"):
    """Preset experiment for ``kind`` on ``model``."""
    gen = dict(_PRESET_GEN[model])
    if kind == "stat_error":
        gen["noise_nu"] = 0.5 if model != "onebit" else 0.0
        if model == "sensing":
            gen.update(d1=60, d2=50)
        sweep = _PRESET_SWEEP["stat_error"][model]
    elif kind == "phase":
        sweep = _PRESET_SWEEP["phase"]
    else:
        sweep = ()
    return ExperimentSpec(
        kind=kind,
        model=model,
        gen=gen,
        init=InitConfig(tau=_PRESET_TAU[model], T=10),
        trials=30 if kind != "grid" else 3,
        sweep=sweep,
    )
