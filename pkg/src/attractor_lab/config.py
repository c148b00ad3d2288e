"""INI run configuration: parsing, validation and round-tripping."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from typing import Optional


class ConfigError(ValueError):
    """Malformed, inconsistent or unknown configuration entries."""


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


@dataclass
class DriftConfig:
    kind: str = "plaplace"
    alpha: float = 3.0
    eta: float = 0.0
    mu: float = 0.0
    sigma: float = 1.0
    lambda_sm: float = 0.0
    diffusion: float = 1.0
    source: float = 0.0
    reaction_slope: float = 0.0
    length: float = 1.0


@dataclass
class NoiseConfig:
    modes: int = 8
    gamma: float = 2.0
    scale: float = 1.0
    t_min: float = -40.0
    t_max: float = 4.0
    dt: float = 0.01
    burn_in: float = 20.0


@dataclass
class SolverConfig:
    n: int = 32
    dt: float = 0.01
    newton_tol: float = 1e-10
    newton_max: int = 50


@dataclass
class ExperimentConfig:
    pullback_tol: float = 1e-6
    t_eval: float = 0.0
    window: tuple = (-10.0, 0.0)
    starts: tuple = (-1.0, -2.0, -4.0, -8.0)
    shifts: tuple = (0.5, 1.0, 2.0)
    samples: int = 4
    paths: int = 20
    eps: float = 0.05
    t_grid: tuple = (10.0, 25.0, 50.0)
    delta_grid: tuple = (0.001, 0.003, 0.01, 0.03)
    bump_radius: float = 0.04
    bump_count: int = 8


SECTIONS = {"drift": DriftConfig, "noise": NoiseConfig, "solver": SolverConfig, "experiment": ExperimentConfig}


@dataclass
class RunConfig:
    drift: DriftConfig = field(default_factory=DriftConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        out = {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}
        for sec in out.values():
            for k, v in sec.items():
                if isinstance(v, tuple):
                    sec[k] = list(v)
        out["seed"] = self.seed
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        unknown = set(data) - set(SECTIONS) - {"seed"}
        if unknown:
            raise ConfigError(f"unknown sections: {sorted(unknown)}")
        parts = {}
        for name, klass in SECTIONS.items():
            parts[name] = _build(klass, name, {k: v for k, v in data.get(name, {}).items()})
        cfg = cls(**parts, seed=_as_int(data.get("seed", 0), "seed"))
        validate(cfg)
        return cfg


def _as_int(v, key):
    try:
        if isinstance(v, float) and not v.is_integer():
            raise ValueError
        return int(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected an integer, got {v!r}") from None


def _build(klass, section: str, raw: dict):
    known = {f.name: f for f in fields(klass)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {sorted(unknown)}")
    kwargs = {}
    defaults = klass()
    for key, value in raw.items():
        default = getattr(defaults, key)
        name = f"[{section}] {key}"
        try:
            if isinstance(default, tuple):
                kwargs[key] = _floats(value) if isinstance(value, str) else tuple(float(x) for x in value)
            elif isinstance(default, bool):
                kwargs[key] = str(value).lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                kwargs[key] = _as_int(float(value) if isinstance(value, str) else value, name)
            elif isinstance(default, float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = str(value).strip().lower()
        except ValueError:
            raise ConfigError(f"{name}: cannot parse {value!r}") from None
    return klass(**kwargs)


def validate(cfg: RunConfig) -> None:
    d, n, s, e = cfg.drift, cfg.noise, cfg.solver, cfg.experiment
    problems = []
    if d.kind not in ("plaplace", "pme", "rde"):
        problems.append(f"[drift] kind must be plaplace, pme or rde, got {d.kind!r}")
    if d.alpha < 2:
        problems.append("[drift] alpha must be >= 2")
    if d.kind == "rde" and d.alpha != 2:
        problems.append("[drift] rde needs alpha = 2")
    for key in ("sigma", "lambda_sm", "diffusion"):
        if getattr(d, key) < 0:
            problems.append(f"[drift] {key} must be nonnegative")
    if d.length <= 0:
        problems.append("[drift] length must be positive")
    if n.modes < 0:
        problems.append("[noise] modes must be nonnegative")
    if n.dt <= 0 or s.dt <= 0:
        problems.append("dt must be positive")
    if n.burn_in <= 0:
        problems.append("[noise] burn_in must be positive")
    if n.t_min >= n.t_max:
        problems.append("[noise] t_min must be below t_max")
    if n.t_min - n.burn_in >= 0:
        problems.append("[noise] t_min - burn_in must be negative")
    if n.dt > 0 and s.dt > 0:
        ratio = s.dt / n.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            problems.append("[solver] dt must be a positive multiple of [noise] dt")
    if s.n < 3:
        problems.append("[solver] n must be >= 3")
    if s.newton_tol <= 0 or s.newton_max < 1:
        problems.append("[solver] newton_tol and newton_max must be positive")
    if e.pullback_tol <= 0:
        problems.append("[experiment] pullback_tol must be positive")
    if len(e.window) != 2 or e.window[0] >= e.window[1]:
        problems.append("[experiment] window needs two increasing times")
    elif e.window[0] < n.t_min or e.window[1] > n.t_max:
        problems.append("[experiment] window must lie inside [t_min, t_max] of [noise]")
    if len(e.window) == 2 and not e.window[0] <= e.t_eval <= e.window[1]:
        problems.append("[experiment] t_eval must lie inside the window")
    if any(s_ > e.t_eval for s_ in e.starts):
        problems.append("[experiment] starts must not exceed t_eval")
    if e.samples < 1 or e.paths < 1:
        problems.append("[experiment] samples and paths must be positive")
    if e.eps <= 0 or any(x <= 0 for x in e.delta_grid) or e.bump_radius <= 0:
        problems.append("[experiment] eps, delta_grid and bump_radius must be positive")
    if any(t <= 0 for t in e.t_grid):
        problems.append("[experiment] t_grid must be positive")
    if not 1 <= e.bump_count <= 16:
        problems.append("[experiment] bump_count must lie in 1..16")
    if problems:
        raise ConfigError("; ".join(problems))


def parse_ini(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(str(err)) from None
    data: dict = {}
    for sec in parser.sections():
        if sec == "run":
            extra = set(parser[sec]) - {"seed"}
            if extra:
                raise ConfigError(f"[run] unknown keys: {sorted(extra)}")
            if "seed" in parser[sec]:
                data["seed"] = _as_int(float(parser[sec]["seed"]), "[run] seed")
            continue
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        data[sec] = dict(parser[sec])
    return RunConfig.from_dict(data)


def load(path: Optional[str]) -> RunConfig:
    if path is None:
        cfg = RunConfig()
        validate(cfg)
        return cfg
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    if path.endswith(".json"):
        import json

        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: {err}") from None
        return RunConfig.from_dict(data["config"] if "config" in data else data)
    return parse_ini(text)


def to_ini(cfg: RunConfig) -> str:
    lines = ["[run]", f"seed = {cfg.seed}", ""]
    for name in SECTIONS:
        lines.append(f"[{name}]")
        for k, v in dataclasses.asdict(getattr(cfg, name)).items():
            if isinstance(v, (tuple, list)):
                v = ", ".join(repr(float(x)) for x in v)
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
