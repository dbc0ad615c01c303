"""Experiment configuration: TOML parsing, validation, and serialization.

A config file fully determines a run set. Validation errors name the
offending field by its dotted path so a failing config is fixable without
reading code.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import tomli

from .noise import NOISE_FAMILIES
from .objective import TUKEY_C
from .optim import METHODS
from .topology import GRAPH_KINDS, WEIGHTINGS

OBJECTIVE_KINDS = ("tukey-regression", "quadratic-scalar")
SCHEDULES = ("", "theorem1", "theorem2")


class ConfigError(ValueError):
    """Invalid experiment configuration; message starts with the field path."""


@dataclass(frozen=True)
class TopologyConfig:
    kind: str = "ring"
    n: int = 20
    weighting: str = "metropolis"
    file: str = ""


@dataclass(frozen=True)
class NoiseConfig:
    family: str = "none"
    variance: float = 3.0
    dof: float = 1.5
    scale: float = 1.0
    alpha: float = 1.5
    skew: float = 0.5
    multiplier: float = 1.0


@dataclass(frozen=True)
class ObjectiveConfig:
    kind: str = "tukey-regression"
    n_samples: int = 1000
    dim: int = 20
    c: float = TUKEY_C
    dataset_seed: int = 0
    batch: int = 0
    offsets: tuple[float, ...] = ()
    init: tuple[float, ...] = ()


@dataclass(frozen=True)
class HyperConfig:
    alpha: float = 0.1
    beta: float = 0.0
    tau: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    cap: float = 1e8
    eps: float = 1e-8
    eta: float = 0.1
    mu: float = 0.9
    c_phi: float = 1.0
    schedule: str = ""
    p: float = 2.0
    delta0: float = 1.0
    smoothness: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    rounds: int = 1000
    probe_every: int = 10
    repeats: int = 5
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    method: str = "gt-nsgdm"
    hyper: HyperConfig = field(default_factory=HyperConfig)


def _build_section(cls, data: dict, path: str):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown field")
        target = known[key].type
        try:
            if target == "int":
                if isinstance(value, bool) or not isinstance(value, int):
                    raise TypeError
                kwargs[key] = int(value)
            elif target == "float":
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise TypeError
                kwargs[key] = float(value)
            elif target == "str":
                if not isinstance(value, str):
                    raise TypeError
                kwargs[key] = value
            elif target.startswith("tuple"):
                if not isinstance(value, list):
                    raise TypeError
                kwargs[key] = tuple(float(v) for v in value)
            else:
                raise ConfigError(f"{path}.{key}: unhandled field type {target}")
        except (TypeError, ValueError):
            raise ConfigError(f"{path}.{key}: expected {target}, got {value!r}") from None
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    sections = {"topology": TopologyConfig, "noise": NoiseConfig, "objective": ObjectiveConfig}
    kwargs: dict = {}
    for key, value in data.items():
        if key in sections:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected a section")
            kwargs[key] = _build_section(sections[key], value, key)
        elif key == "hyper":
            if not isinstance(value, dict):
                raise ConfigError("hyper: expected a section")
            kwargs[key] = _build_section(HyperConfig, value, "hyper")
        elif key == "method":
            if isinstance(value, dict):
                if set(value) != {"name"}:
                    raise ConfigError("method: expected `name = ...`")
                value = value["name"]
            if not isinstance(value, str):
                raise ConfigError(f"method: expected a string, got {value!r}")
            kwargs[key] = value
        elif key in ("seed", "rounds", "probe_every", "repeats"):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{key}: expected an integer, got {value!r}")
            kwargs[key] = value
        else:
            raise ConfigError(f"{key}: unknown field")
    cfg = ExperimentConfig(**kwargs)
    validate_config(cfg)
    return cfg


def parse_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.rounds < 0:
        raise ConfigError(f"rounds: must be >= 0, got {cfg.rounds}")
    if cfg.probe_every < 1:
        raise ConfigError(f"probe_every: must be >= 1, got {cfg.probe_every}")
    if cfg.repeats < 1:
        raise ConfigError(f"repeats: must be >= 1, got {cfg.repeats}")
    if not (0 <= cfg.seed < 2**64):
        raise ConfigError(f"seed: must fit in 64 bits, got {cfg.seed}")

    top = cfg.topology
    if top.kind not in GRAPH_KINDS:
        raise ConfigError(f"topology.kind: unknown kind {top.kind!r}; expected one of {GRAPH_KINDS}")
    if top.n < 1:
        raise ConfigError(f"topology.n: must be >= 1, got {top.n}")
    if top.weighting not in WEIGHTINGS:
        raise ConfigError(
            f"topology.weighting: unknown weighting {top.weighting!r}; expected one of {WEIGHTINGS}"
        )
    if top.kind == "custom" and not top.file:
        raise ConfigError("topology.file: required for custom topologies")

    noi = cfg.noise
    if noi.family not in NOISE_FAMILIES:
        raise ConfigError(
            f"noise.family: unknown family {noi.family!r}; expected one of {NOISE_FAMILIES}"
        )
    if noi.family == "gaussian" and noi.variance <= 0:
        raise ConfigError(f"noise.variance: must be positive, got {noi.variance}")
    if noi.family == "student-t":
        if noi.dof <= 1.0:
            raise ConfigError(f"noise.dof: must be > 1, got {noi.dof}")
        if noi.scale <= 0:
            raise ConfigError(f"noise.scale: must be positive, got {noi.scale}")
    if noi.family == "alpha-stable":
        if not (1.0 < noi.alpha <= 2.0):
            raise ConfigError(f"noise.alpha: must lie in (1, 2], got {noi.alpha}")
        if not (-1.0 <= noi.skew <= 1.0):
            raise ConfigError(f"noise.skew: must lie in [-1, 1], got {noi.skew}")
        if noi.scale <= 0:
            raise ConfigError(f"noise.scale: must be positive, got {noi.scale}")

    obj = cfg.objective
    if obj.kind not in OBJECTIVE_KINDS:
        raise ConfigError(
            f"objective.kind: unknown kind {obj.kind!r}; expected one of {OBJECTIVE_KINDS}"
        )
    if obj.kind == "tukey-regression":
        if obj.n_samples < 1 or obj.dim < 4:
            raise ConfigError(
                f"objective: need n_samples >= 1 and dim >= 4, got {obj.n_samples}, {obj.dim}"
            )
        if obj.n_samples < top.n:
            raise ConfigError(
                f"objective.n_samples: cannot shard {obj.n_samples} samples over {top.n} nodes"
            )
        if obj.c <= 0:
            raise ConfigError(f"objective.c: must be positive, got {obj.c}")
        if obj.batch < 0:
            raise ConfigError(f"objective.batch: must be >= 0, got {obj.batch}")
        if obj.init and len(obj.init) != obj.dim:
            raise ConfigError(
                f"objective.init: expected {obj.dim} coordinates, got {len(obj.init)}"
            )
    else:
        if len(obj.offsets) != top.n:
            raise ConfigError(
                f"objective.offsets: quadratic objective needs one offset per node "
                f"({top.n}), got {len(obj.offsets)}"
            )
        if obj.init and len(obj.init) != 1:
            raise ConfigError("objective.init: quadratic objective is scalar")

    if cfg.method not in METHODS:
        raise ConfigError(f"method: unknown method {cfg.method!r}; expected one of {METHODS}")

    hyp = cfg.hyper
    if hyp.schedule not in SCHEDULES:
        raise ConfigError(
            f"hyper.schedule: unknown schedule {hyp.schedule!r}; expected theorem1 or theorem2"
        )
    if hyp.schedule:
        if cfg.method != "gt-nsgdm":
            raise ConfigError("hyper.schedule: theorem schedules apply to gt-nsgdm only")
        if not (1.0 < hyp.p <= 2.0):
            raise ConfigError(f"hyper.p: must lie in (1, 2], got {hyp.p}")
        if hyp.delta0 <= 0 or hyp.smoothness <= 0:
            raise ConfigError("hyper.delta0 and hyper.smoothness must be positive")
    else:
        if hyp.alpha <= 0:
            raise ConfigError(f"hyper.alpha: must be positive, got {hyp.alpha}")
        if not (0.0 <= hyp.beta < 1.0):
            raise ConfigError(f"hyper.beta: must lie in [0, 1), got {hyp.beta}")


def _toml_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = format(value, ".17g")
        if not any(ch in text for ch in ".eE") and "inf" not in text and "nan" not in text:
            text += ".0"
        return text
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, tuple):
        return "[" + ", ".join(_toml_scalar(float(v)) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r}")


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key in ("seed", "rounds", "probe_every", "repeats"):
        lines.append(f"{key} = {_toml_scalar(getattr(cfg, key))}")
    lines.append(f"method = {_toml_scalar(cfg.method)}")
    for section in ("topology", "noise", "objective", "hyper"):
        lines.append("")
        lines.append(f"[{section}]")
        sub = getattr(cfg, section)
        for f in fields(sub):
            lines.append(f"{f.name} = {_toml_scalar(getattr(sub, f.name))}")
    return "\n".join(lines) + "\n"


def with_overrides(cfg: ExperimentConfig, **kwargs) -> ExperimentConfig:
    out = replace(cfg, **kwargs)
    validate_config(out)
    return out
