"""Experiment configuration: YAML in, validated dataclasses out, and back.

Types may be given as ``(mu_g, mu_b)`` in 1/s or as ``(pi_b, mu_g_t)``; the
form used in the file is kept so that serializing reproduces it.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import yaml

from .channel import PathType
from .engine import Block


class ConfigError(ValueError):
    """Malformed or infeasible configuration."""


@dataclass(frozen=True)
class TypeSpec:
    count: int = 1
    mu_g: Optional[float] = None
    mu_b: Optional[float] = None
    pi_b: Optional[float] = None
    mu_g_t: Optional[float] = None
    max_rate_w: float = math.inf

    def __post_init__(self):
        rates = self.mu_g is not None and self.mu_b is not None
        stationary = self.pi_b is not None and self.mu_g_t is not None
        if rates == stationary:
            raise ConfigError("each type needs exactly one of (mu_g, mu_b) or (pi_b, mu_g_t)")
        if rates and (self.pi_b is not None or self.mu_g_t is not None):
            raise ConfigError("mixing (mu_g, mu_b) with pi_b or mu_g_t is ambiguous")
        if stationary and (self.mu_g is not None or self.mu_b is not None):
            raise ConfigError("mixing (pi_b, mu_g_t) with mu_g or mu_b is ambiguous")

    def path_type(self, t: float, count: Optional[int] = None) -> PathType:
        count = self.count if count is None else count
        try:
            if self.mu_g is not None:
                return PathType(self.mu_g, self.mu_b, self.max_rate_w, count)
            return PathType.from_pi_b(self.pi_b, self.mu_g_t, t, self.max_rate_w, count)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class TrialsPolicy:
    """``mode`` is ``fixed`` (exactly ``trials``), ``adaptive`` or ``none`` (no simulation)."""

    mode: str = "adaptive"
    trials: int = 1_000_000
    rel_halfwidth: float = 0.1
    max_trials: int = 100_000_000
    min_trials: int = 131_072
    # points whose exact loss probability is below this are not simulated
    min_pe: float = 0.0

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive", "none"):
            raise ConfigError(f"unknown trials mode {self.mode!r}")
        if self.trials < 1 or self.max_trials < 1 or self.min_trials < 1:
            raise ConfigError("trial counts must be positive")
        if not 0 < self.rel_halfwidth < 1:
            raise ConfigError("rel_halfwidth must lie in (0, 1)")


@dataclass(frozen=True)
class SweepSpec:
    """Axis values plus whatever that axis needs.

    ``mu_b_t``: every type's ``mu_b`` is set to ``value / t``.
    ``paths_l``: ``L = value``; type counts are ``gammas * L``, ``n = n0 * L`` and
    the loss budget is ``round(alpha * n)``, once per entry of ``alphas``.
    ``delta``: single-path types with ``pi_b = base_pi_b + offset * value / 2``.
    """

    axis: str
    values: tuple
    methods: tuple = ("equal",)
    alphas: tuple = ()
    gammas: tuple = ()
    n0: Optional[int] = None
    base_pi_b: Optional[float] = None
    offsets: tuple = ()
    mu_g_t: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "alphas", tuple(self.alphas))
        object.__setattr__(self, "gammas", tuple(self.gammas))
        object.__setattr__(self, "offsets", tuple(self.offsets))
        if self.axis not in ("mu_b_t", "paths_l", "delta"):
            raise ConfigError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if self.axis == "paths_l":
            if self.n0 is None or not self.alphas or not self.gammas:
                raise ConfigError("paths_l sweep needs n0, alphas and gammas")
            if any(not 0 < a < 1 for a in self.alphas):
                raise ConfigError("alphas must lie in (0, 1)")
            for v in self.values:
                for g in self.gammas:
                    if abs(g * v - round(g * v)) > 1e-9 or round(g * v) < 1:
                        raise ConfigError(f"gamma {g} times L={v} is not a positive integer")
        if self.axis == "delta":
            if self.base_pi_b is None or not self.offsets or self.mu_g_t is None:
                raise ConfigError("delta sweep needs base_pi_b, offsets and mu_g_t")
            for v in self.values:
                for o in self.offsets:
                    if not 0 < self.base_pi_b + o * v / 2 < 1:
                        raise ConfigError(f"delta {v} pushes pi_b outside (0, 1)")

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if v is None or v == ():
                continue
            out[k] = list(v) if isinstance(v, tuple) else v
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    scenario_id: str
    n: int
    k_info: int
    t_seconds: float
    types: tuple
    s_req: Optional[float] = None
    seed: int = 1
    trials: TrialsPolicy = field(default_factory=TrialsPolicy)
    alphas: tuple = ()
    sweep: Optional[SweepSpec] = None
    enumeration_limit: int = 10 ** 7

    @property
    def block(self) -> Block:
        return Block(self.n, self.k_info, self.t_seconds)

    def path_types(self) -> list[PathType]:
        return [ts.path_type(self.t_seconds) for ts in self.types]

    def validate(self) -> "ExperimentConfig":
        """Static checks, all done before any computation."""
        if self.n < 1 or not 0 <= self.k_info <= self.n:
            raise ConfigError(f"need n >= 1 and 0 <= k_info <= n (n={self.n}, k_info={self.k_info})")
        if not self.t_seconds > 0:
            raise ConfigError("t_seconds must be positive")
        if not self.types:
            raise ConfigError("at least one path type is required")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if any(not 0 < a < 1 for a in self.alphas):
            raise ConfigError("alphas must lie in (0, 1)")
        types = self.path_types()
        capacity = sum(pt.count * pt.max_rate_w for pt in types)
        if self.s_req is not None:
            if self.s_req > capacity * (1 + 1e-12):
                raise ConfigError(f"s_req {self.s_req} exceeds the total path capacity {capacity}")
            if abs(self.n - self.s_req * self.t_seconds) >= 1.0:
                raise ConfigError(f"n={self.n} does not match s_req * t = {self.s_req * self.t_seconds:g}")
        elif self.n > capacity * self.t_seconds + 1e-9:
            raise ConfigError(f"n={self.n} exceeds what the paths carry in t seconds")
        return self

    def to_dict(self) -> dict:
        out = {
            "scenario_id": self.scenario_id,
            "block": {"n": self.n, "k_info": self.k_info, "t_seconds": self.t_seconds},
            "types": [ts.to_dict() for ts in self.types],
            "seed": self.seed,
            "trials": asdict(self.trials),
            "enumeration_limit": self.enumeration_limit,
        }
        if self.s_req is not None:
            out["s_req"] = self.s_req
        if self.alphas:
            out["alphas"] = list(self.alphas)
        if self.sweep is not None:
            out["sweep"] = self.sweep.to_dict()
        return out


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    known = set(cls.__dataclass_fields__)
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    data = dict(data)
    allowed = {"scenario_id", "block", "types", "s_req", "seed", "trials", "alphas", "sweep",
               "enumeration_limit"}
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    block = data.get("block")
    if not isinstance(block, dict) or set(block) != {"n", "k_info", "t_seconds"}:
        raise ConfigError("block needs exactly n, k_info and t_seconds")
    raw_types = data.get("types")
    if not isinstance(raw_types, list):
        raise ConfigError("types must be a list")
    types = tuple(_build(TypeSpec, ts, f"types[{i}]") for i, ts in enumerate(raw_types))
    trials = _build(TrialsPolicy, data.get("trials", {}), "trials")
    sweep = _build(SweepSpec, data["sweep"], "sweep") if data.get("sweep") is not None else None
    try:
        cfg = ExperimentConfig(
            scenario_id=str(data.get("scenario_id", "scenario")),
            n=int(block["n"]), k_info=int(block["k_info"]), t_seconds=float(block["t_seconds"]),
            types=types, s_req=None if data.get("s_req") is None else float(data["s_req"]),
            seed=int(data.get("seed", 1)), trials=trials,
            alphas=tuple(float(a) for a in data.get("alphas", ())), sweep=sweep,
            enumeration_limit=int(data.get("enumeration_limit", 10 ** 7)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from exc
    return from_dict(data)


def load(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def dumps(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
