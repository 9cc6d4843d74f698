"""Experiment configuration: nested dataclasses read from and written to YAML.

Unknown keys are errors. Prior scales may be given as ``sd`` or ``variance``.
Numeric fields accept YAML strings such as ``3e-7`` (which YAML 1.1 leaves as
text).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import yaml

from .errors import ConfigError
from .histograms import SupportGrid
from .nkpc import MOMENT_NAMES, ModelVariant, NkpcParams
from .priors import PriorSpec, default_grid


@dataclass
class PriorEntry:
    name: str
    family: str
    mean: Optional[float] = None
    sd: Optional[float] = None
    variance: Optional[float] = None
    bounds: Optional[List[float]] = None
    support: Optional[List[float]] = None

    def spec(self) -> PriorSpec:
        if self.sd is not None and self.variance is not None:
            raise ConfigError(f"prior {self.name!r}: give sd or variance, not both")
        sd = self.sd if self.variance is None else float(np.sqrt(self.variance))
        bounds = tuple(self.bounds) if self.bounds is not None else None
        try:
            return PriorSpec(self.family, self.mean, sd, bounds)
        except ValueError as exc:
            raise ConfigError(f"prior {self.name!r}: {exc}") from exc


@dataclass
class NiwConfig:
    precision: float = 1e-12
    iw_scale: float = 1e-10
    iw_df: float = 5.0


@dataclass
class EmpiricalConfig:
    T: int = 300
    sim_length: int = 30000
    N: int = 5000
    hyper: NiwConfig = field(default_factory=NiwConfig)

    @property
    def burn_in(self):
        return self.sim_length - self.T


@dataclass
class GridConfig:
    K: int = 100
    param_K: Optional[int] = None
    moment_supports: dict = field(default_factory=lambda: {
        "a12": [0.0, 0.5],
        "a22": [0.0, 1.5],
        "sigma11_sq": [0.0, 3e-7],
        "sigma12": [0.0, 6e-7],
        "sigma22_sq": [0.0, 2.5e-6],
    })


@dataclass
class DeltaScheduleConfig:
    enabled: bool = False
    start: float = 100.0
    floor: float = 1.0
    increase: float = 100.0
    min_acceptance: float = 0.001
    decay: float = 0.1
    decay_mode: str = "multiply"
    decay_every: int = 1000


@dataclass
class SamplerConfig:
    Z: int = 1
    M_values: List[int] = field(default_factory=lambda: [1, 10, 50, 100, 300])
    iterations: int = 50000
    burn_in: int = 25000
    psi: Optional[float] = None
    adapt_psi: bool = True
    acceptance_band: List[float] = field(default_factory=lambda: [0.08, 0.12])
    window: int = 1000
    ess_fraction: float = 0.5
    proposal: str = "joint"
    resampling: str = "multinomial"
    delta: float = 1.0
    delta_schedule: DeltaScheduleConfig = field(default_factory=DeltaScheduleConfig)
    likelihood: str = "js"
    init: str = "pilot"
    pilot_iterations: int = 30000
    pilot_burn_in: int = 10000
    store_max: int = 5000


@dataclass
class EvaluationConfig:
    truncation_prob: float = 0.9
    units: str = "raw"


@dataclass
class OutputConfig:
    draws_csv_max: int = 500


@dataclass
class ExperimentConfig:
    name: str = "correct_informative"
    variant: str = "CorrectFullRank"
    truth: dict = field(default_factory=lambda: {
        "beta": 0.98, "mu_p": 0.8, "rho": 0.8, "sigma_eps": 0.001, "sigma_v": 0.00025})
    priors: List[PriorEntry] = field(default_factory=lambda: [
        PriorEntry("beta", "Beta", 0.98, 0.001),
        PriorEntry("mu_p", "Beta", 0.8, 0.0316),
        PriorEntry("rho", "Beta", 0.8, 0.0316),
        PriorEntry("sigma_eps", "TruncatedNormal", 0.001, 0.0001),
        PriorEntry("sigma_v", "TruncatedNormal", 0.00025, 0.0001),
    ])
    H: int = 5000
    grids: GridConfig = field(default_factory=GridConfig)
    empirical: EmpiricalConfig = field(default_factory=EmpiricalConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    replications: int = 3
    seed: int = 20240601

    @property
    def model_variant(self) -> ModelVariant:
        return ModelVariant(self.variant)

    @property
    def param_names(self):
        return [p.name for p in self.priors]

    def truth_params(self) -> NkpcParams:
        return NkpcParams(**self.truth)

    def prior_specs(self):
        return [p.spec() for p in self.priors]

    def moment_grids(self):
        sup = self.grids.moment_supports
        return [SupportGrid(float(sup[m][0]), float(sup[m][1]), self.grids.K) for m in MOMENT_NAMES]

    def param_grids(self):
        K = self.grids.param_K or self.grids.K
        grids = []
        for entry, spec in zip(self.priors, self.prior_specs()):
            if entry.support is not None:
                grids.append(SupportGrid(float(entry.support[0]), float(entry.support[1]), K))
            else:
                grids.append(default_grid(spec, K))
        return grids

    def validate(self):
        """Raise ConfigError on any inconsistency; returns self."""
        try:
            variant = self.model_variant
        except ValueError:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of "
                              f"{[v.value for v in ModelVariant]}") from None
        expected = list(variant.param_names)
        if self.param_names != expected:
            raise ConfigError(f"priors must be given for {expected} in that order, got {self.param_names}")
        missing = set(NkpcParams.__dataclass_fields__) - set(self.truth)
        extra = set(self.truth) - set(NkpcParams.__dataclass_fields__)
        if extra or missing:
            raise ConfigError(f"truth must set exactly {sorted(NkpcParams.__dataclass_fields__)}")
        extra = set(self.grids.moment_supports) - set(MOMENT_NAMES)
        missing = set(MOMENT_NAMES) - set(self.grids.moment_supports)
        if extra or missing:
            raise ConfigError(f"moment_supports must name exactly {list(MOMENT_NAMES)}")
        s, e = self.sampler, self.empirical
        checks = [
            (s.Z >= 1, "sampler.Z must be >= 1"),
            (len(s.M_values) > 0 and all(m >= 1 for m in s.M_values), "sampler.M_values must be positive"),
            (0 <= s.burn_in < s.iterations, "sampler.burn_in must lie in [0, iterations)"),
            (s.init in ("pilot", "prior"), "sampler.init must be 'pilot' or 'prior'"),
            (s.init == "prior" or 0 <= s.pilot_burn_in < s.pilot_iterations,
             "sampler.pilot_burn_in must lie in [0, pilot_iterations)"),
            (s.proposal in ("joint", "rowwise"), "sampler.proposal must be joint or rowwise"),
            (s.proposal == "joint" or s.likelihood == "js", "rowwise proposals require the js likelihood"),
            (s.likelihood in ("js", "polya", "kl"), "sampler.likelihood must be js, polya or kl"),
            (s.resampling in ("multinomial", "systematic"), "sampler.resampling must be multinomial or systematic"),
            (len(s.acceptance_band) == 2 and 0 < s.acceptance_band[0] < s.acceptance_band[1] < 1,
             "sampler.acceptance_band must be [low, high] inside (0, 1)"),
            (s.delta > 0, "sampler.delta must be positive"),
            (s.delta_schedule.decay_mode in ("multiply", "subtract"), "delta_schedule.decay_mode must be multiply or subtract"),
            (1 <= s.ess_fraction * s.Z <= s.Z or s.Z == 1, "sampler.ess_fraction * Z must lie in [1, Z]"),
            (e.T > 10 and e.sim_length > e.T, "empirical.T must exceed 10 and be below sim_length"),
            (e.N >= 1 and self.H >= 1, "N and H must be positive"),
            (self.replications >= 1, "replications must be >= 1"),
            (self.evaluation.units in ("prior_sd", "raw"), "evaluation.units must be prior_sd or raw"),
            (0 < self.evaluation.truncation_prob < 1, "evaluation.truncation_prob must lie in (0, 1)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        try:
            self.moment_grids()
            self.param_grids()
            self.truth_params().check()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self):
        return _to_plain(dataclasses.asdict(self))

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _to_plain(obj):
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _coerce(tp, value, path):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if value is None:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, path)
    if origin in (list, List):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return [_coerce(args[0], v, f"{path}[{i}]") for i, v in enumerate(value)] if args else list(value)
    if tp is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return {k: _numeric(v) for k, v in value.items()}
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp in (int, float):
        try:
            out = tp(float(value)) if tp is int else float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected a number, got {value!r}") from None
        if tp is int and float(value) != out:
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return out
    if tp is str:
        return str(value)
    return value


def _numeric(v):
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return v
    if isinstance(v, list):
        return [_numeric(x) for x in v]
    return v


def from_dict(cls, data, path="config"):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    kwargs = {k: _coerce(hints[k], v, f"{path}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return from_dict(ExperimentConfig, data).validate()


def load(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
