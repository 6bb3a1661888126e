"""Experiment configuration stored as TOML."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli
import tomli_w

from .errors import ConfigurationError, DomainError
from .model import DamageState, TowerConfig
from .updating import PriorSpec, TmcmcConfig

METHODS = ("cb", "dcb", "both")


@dataclass(frozen=True)
class ReductionConfig:
    method: str = "both"
    modes_lower: int = 10
    modes_upper: int = 10

    def __post_init__(self):
        method = str(self.method).lower()
        if method not in METHODS:
            raise ConfigurationError(f"reduction.method must be one of {METHODS}, got '{self.method}'")
        object.__setattr__(self, "method", method)
        if self.modes_lower < 1 or self.modes_upper < 1:
            raise ConfigurationError("retained mode counts must be >= 1")

    @property
    def methods(self):
        return ("CB", "DCB") if self.method == "both" else (self.method.upper(),)


@dataclass(frozen=True)
class ExperimentConfig:
    tower: TowerConfig = field(default_factory=TowerConfig)
    reduction: ReductionConfig = field(default_factory=ReductionConfig)
    damage_truth: tuple = (1.0, 0.75)
    n_modes: int = 10
    prior: PriorSpec = field(default_factory=PriorSpec)
    beta_error: float = 0.01
    noise: float = 0.0
    tmcmc: TmcmcConfig = field(default_factory=TmcmcConfig)
    bench_iterations: int = 50
    plots: bool = True
    output_dir: str = "results"
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "damage_truth", DamageState(self.damage_truth).theta)
        except DomainError as exc:
            raise ConfigurationError(f"damage.theta: {exc}") from None
        if self.n_modes < 1:
            raise ConfigurationError("modal.n_modes must be >= 1")
        if self.beta_error <= 0:
            raise ConfigurationError("likelihood.beta_error must be > 0")
        if self.noise < 0:
            raise ConfigurationError("likelihood.noise must be >= 0")
        if self.bench_iterations < 1:
            raise ConfigurationError("bench.iterations must be >= 1")
        if self.tmcmc.seed != self.seed:
            object.__setattr__(self, "tmcmc", replace(self.tmcmc, seed=self.seed))
        self.tower.validate()

    def with_overrides(self, seed=None, method=None, output_dir=None):
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed), tmcmc=replace(cfg.tmcmc, seed=int(seed)))
        if method is not None:
            cfg = replace(cfg, reduction=replace(cfg.reduction, method=method))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        return cfg


def _build(cls, table, section):
    if not isinstance(table, dict):
        raise ConfigurationError(f"[{section}] must be a table")
    names = {f.name for f in fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in table.items()}
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigurationError(f"[{section}]: {exc}") from None


def config_from_dict(data):
    data = dict(data)
    known = {"seed", "output_dir", "tower", "reduction", "damage", "modal", "prior",
             "likelihood", "tmcmc", "bench", "report"}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    seed = int(data.get("seed", 0))
    kwargs = {"seed": seed}
    if "output_dir" in data:
        kwargs["output_dir"] = str(data["output_dir"])
    if "tower" in data:
        kwargs["tower"] = _build(TowerConfig, data["tower"], "tower")
    if "reduction" in data:
        kwargs["reduction"] = _build(ReductionConfig, data["reduction"], "reduction")
    if "prior" in data:
        kwargs["prior"] = _build(PriorSpec, data["prior"], "prior")
    tm = dict(data.get("tmcmc", {}))
    tm.setdefault("seed", seed)
    kwargs["tmcmc"] = _build(TmcmcConfig, tm, "tmcmc")

    def section(name, mapping):
        table = data.get(name, {})
        unknown = set(table) - set(mapping)
        if unknown:
            raise ConfigurationError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
        for key, target in mapping.items():
            if key in table:
                value = table[key]
                kwargs[target] = tuple(value) if isinstance(value, list) else value

    section("damage", {"theta": "damage_truth"})
    section("modal", {"n_modes": "n_modes"})
    section("likelihood", {"beta_error": "beta_error", "noise": "noise"})
    section("bench", {"iterations": "bench_iterations"})
    section("report", {"plots": "plots"})
    return ExperimentConfig(**kwargs)


def config_to_dict(config):
    tm = asdict(config.tmcmc)
    tm.pop("seed")
    return {
        "seed": config.seed,
        "output_dir": config.output_dir,
        "tower": asdict(config.tower),
        "reduction": asdict(config.reduction),
        "damage": {"theta": list(config.damage_truth)},
        "modal": {"n_modes": config.n_modes},
        "prior": {"log_mean": list(config.prior.log_mean), "log_sigma": list(config.prior.log_sigma)},
        "likelihood": {"beta_error": config.beta_error, "noise": config.noise},
        "tmcmc": tm,
        "bench": {"iterations": config.bench_iterations},
        "report": {"plots": config.plots},
    }


def parse_config(text):
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid TOML: {exc}") from None
    return config_from_dict(data)


def serialize_config(config):
    return tomli_w.dumps(config_to_dict(config))


def load_config(path):
    return parse_config(Path(path).read_text())
