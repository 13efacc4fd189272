"""Continuous-time Gilbert-Elliot path model.

Rates are kept in 1/seconds. Dimensionless products such as ``mu_g * t`` are
formed at the call site and never stored on the path type.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GOOD, BAD = False, True


@dataclass(frozen=True)
class PathType:
    """One class of statistically identical paths.

    ``mu_g`` is the exit rate from Good, ``mu_b`` the exit rate from Bad,
    ``max_rate_w`` the per-path bandwidth cap in packets/second and
    ``count`` the number of paths of this type.
    """

    mu_g: float
    mu_b: float
    max_rate_w: float = math.inf
    count: int = 1

    def __post_init__(self):
        if not (self.mu_g > 0 and self.mu_b > 0):
            raise ValueError(f"rates must be positive, got mu_g={self.mu_g}, mu_b={self.mu_b}")
        if not self.max_rate_w > 0:
            raise ValueError(f"max_rate_w must be positive, got {self.max_rate_w}")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"count must be a positive integer, got {self.count}")
        if not math.isfinite(self.mu_g) or not math.isfinite(self.mu_b):
            raise ValueError("rates must be finite")

    @classmethod
    def from_pi_b(cls, pi_b: float, mu_g_t: float, t: float, max_rate_w: float = math.inf,
                  count: int = 1) -> "PathType":
        """Build from the stationary loss rate and ``mu_g * t``."""
        if not 0 < pi_b < 1:
            raise ValueError(f"pi_b must lie in (0, 1), got {pi_b}")
        if not (mu_g_t > 0 and t > 0):
            raise ValueError("mu_g_t and t must be positive")
        mu_g = mu_g_t / t
        return cls(mu_g=mu_g, mu_b=mu_g * (1 - pi_b) / pi_b, max_rate_w=max_rate_w, count=count)

    @property
    def pi_b(self) -> float:
        return self.mu_g / (self.mu_g + self.mu_b)

    @property
    def pi_g(self) -> float:
        return self.mu_b / (self.mu_g + self.mu_b)

    def cap(self, t: float) -> int:
        """Largest packet count the whole type can carry in a block of ``t`` seconds."""
        total = self.count * self.max_rate_w * t
        if math.isinf(total):
            return np.iinfo(np.int64).max
        # guard against 0.9999999 style products of exact caps
        return int(math.floor(total + 1e-9))


def steady_state(pt: PathType) -> tuple[float, float]:
    """Stationary ``(pi_g, pi_b)``."""
    return pt.pi_g, pt.pi_b


def packet_transition_probs(pt: PathType, s_l: float) -> np.ndarray:
    """State transition matrix between consecutive packets sent at ``s_l`` pkt/s.

    Row/column order is (Good, Bad); entry ``[a, b]`` is P(next = b | current = a).
    """
    if not s_l > 0:
        raise ValueError(f"packet rate must be positive, got {s_l}")
    pi_g, pi_b = steady_state(pt)
    decay = math.exp(-(pt.mu_g + pt.mu_b) / s_l)
    p_gg = pi_g + pi_b * decay
    p_bb = pi_b + pi_g * decay
    return np.array([[p_gg, 1.0 - p_gg], [1.0 - p_bb, p_bb]])


@dataclass(frozen=True)
class StatePath:
    """Alternating Good/Bad sojourns covering ``[0, horizon]``."""

    initial_bad: bool
    sojourns: tuple[float, ...]
    horizon: float

    def __post_init__(self):
        if not self.sojourns:
            raise ValueError("a state path needs at least one sojourn")
        if any(s <= 0 for s in self.sojourns):
            raise ValueError("sojourns must be strictly positive")
        if math.fsum(self.sojourns) < self.horizon:
            raise ValueError("sojourns do not cover the horizon")

    @property
    def boundaries(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.sojourns)))

    def states(self) -> list[bool]:
        return [bool(self.initial_bad) ^ bool(i % 2) for i in range(len(self.sojourns))]

    def bad_time(self) -> float:
        """Time spent Bad inside ``[0, horizon]``."""
        edges = np.minimum(self.boundaries, self.horizon)
        spans = np.diff(edges)
        return float(sum(s for s, bad in zip(spans, self.states()) if bad))


def sample_state_path(pt: PathType, t: float, rng: np.random.Generator) -> StatePath:
    """Draw one path: stationary initial state, then exponential sojourns until ``t`` is covered."""
    if not t > 0:
        raise ValueError("t must be positive")
    bad = bool(rng.random() < pt.pi_b)
    initial = bad
    sojourns = []
    elapsed = 0.0
    while elapsed < t:
        rate = pt.mu_b if bad else pt.mu_g
        d = rng.exponential(1.0 / rate)
        if d <= 0.0:
            continue
        sojourns.append(d)
        elapsed += d
        bad = not bad
    return StatePath(initial, tuple(sojourns), t)


def erasures_at_epochs(sp: StatePath, epochs) -> np.ndarray:
    """Loss bitmap: entry ``i`` is 1 iff the path is Bad at ``epochs[i]``.

    The state is taken as constant over each half-open sojourn ``[start, end)``.
    """
    epochs = np.asarray(epochs, dtype=float)
    if epochs.size and (epochs.min() < 0 or epochs.max() > sp.horizon):
        raise ValueError(f"epochs must lie within [0, {sp.horizon}]")
    if np.any(np.diff(epochs) < 0):
        raise ValueError("epochs must be sorted")
    idx = np.searchsorted(sp.boundaries, epochs, side="right") - 1
    idx = np.clip(idx, 0, len(sp.sojourns) - 1)
    bad = np.asarray(sp.states(), dtype=bool)[idx]
    return bad.astype(np.uint8)


def packet_epochs(n: int, t: float) -> np.ndarray:
    """Evenly spaced transmission instants ``i * t / n`` for ``i = 0 .. n-1``."""
    return np.arange(n) * (t / n) if n > 0 else np.empty(0)
