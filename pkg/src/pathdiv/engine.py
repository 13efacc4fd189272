"""Exact finite-block loss probabilities.

Loss-count PMFs are built by the per-path two-state recursion, convolved
across the paths of a type, and combined across types by the tail recursion
over the loss budget. Every table is a dense numpy array.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .channel import PathType, packet_transition_probs


class CapViolation(ValueError):
    """An allocation exceeds a type's bandwidth cap."""


@dataclass(frozen=True)
class Block:
    """Block geometry: ``n`` coded packets carrying ``k_info`` information packets over ``t`` seconds."""

    n: int
    k_info: int
    t: float

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.k_info <= self.n:
            raise ValueError(f"need n >= 1 and 0 <= k_info <= n, got n={self.n}, k_info={self.k_info}")
        if not self.t > 0:
            raise ValueError("t must be positive")

    @property
    def budget(self) -> int:
        """Tolerable losses ``n - k_info``."""
        return self.n - self.k_info

    @property
    def alpha(self) -> float:
        return self.budget / self.n

    def allocation(self, counts) -> "AllocationVector":
        return AllocationVector(tuple(counts), self.n, self.budget)


@dataclass(frozen=True)
class LossPmfTable:
    """``probs[k]`` = P(exactly k of ``n`` packets lost on the type)."""

    type_index: int
    n: int
    probs: np.ndarray

    def tail(self) -> np.ndarray:
        """``tail[k]`` = P(more than k losses), for k = 0..n."""
        return tail_sums(self.probs)


@dataclass(frozen=True)
class AllocationVector:
    """Packet counts per type for one block, with the tolerable loss budget."""

    counts: tuple[int, ...]
    block_n: int
    loss_budget_m: int

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if any(c < 0 for c in counts):
            raise ValueError("counts must be nonnegative")
        if sum(counts) != self.block_n:
            raise ValueError(f"counts sum to {sum(counts)}, expected {self.block_n}")
        if not 0 <= self.loss_budget_m <= self.block_n:
            raise ValueError("loss budget must lie in [0, N]")

    @classmethod
    def from_block(cls, counts: Sequence[int], k_info: int) -> "AllocationVector":
        n = int(sum(counts))
        return cls(tuple(counts), n, n - int(k_info))

    def check_caps(self, types: Sequence[PathType], t: float) -> None:
        for j, (c, pt) in enumerate(zip(self.counts, types)):
            if c > pt.cap(t):
                raise CapViolation(f"type {j} carries {c} packets but its cap is {pt.cap(t)}")


def tail_sums(probs: np.ndarray) -> np.ndarray:
    """``out[k] = sum(probs[k+1:])`` without the 1 - cdf cancellation."""
    rev = np.cumsum(probs[::-1])[::-1]
    return np.append(rev[1:], 0.0)


def per_path_pmf(pt: PathType, n: int, s_l: float) -> np.ndarray:
    """Loss-count PMF of ``n`` packets sent at ``s_l`` pkt/s on one path.

    The first packet sees the stationary state; later packets follow the
    packet-to-packet transition matrix.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return np.ones(1)
    trans = packet_transition_probs(pt, s_l)
    p_gg, p_gb = trans[0]
    p_bg, p_bb = trans[1]
    # pg[k], pb[k]: P(k losses among the remaining packets | next packet in Good / Bad)
    pg = np.zeros(n + 1)
    pb = np.zeros(n + 1)
    pg[0] = pb[0] = 1.0
    for m in range(1, n + 1):
        new_g = p_gb * pb + p_gg * pg
        carry = p_bb * pb + p_bg * pg
        new_b = np.zeros(n + 1)
        new_b[1:] = carry[:-1]
        pg, pb = new_g, new_b
    return pt.pi_g * pg + pt.pi_b * pb


def uniform_split(n: int, paths: int) -> list[int]:
    """Closest integer vector to an even split; the first ``n % paths`` paths get one more."""
    base, rem = divmod(n, paths)
    return [base + 1] * rem + [base] * (paths - rem)


@lru_cache(maxsize=65536)
def _type_pmf_cached(pt: PathType, n: int, t: float) -> np.ndarray:
    split = uniform_split(n, pt.count)
    acc = np.ones(1)
    per_size: dict[int, np.ndarray] = {}
    for n_l in split:
        if n_l == 0:
            continue
        if n_l not in per_size:
            per_size[n_l] = per_path_pmf(pt, n_l, n_l / t)
        acc = np.convolve(acc, per_size[n_l])
    acc = np.clip(acc, 0.0, None)
    acc.setflags(write=False)
    return acc


def type_pmf(pt: PathType, n: int, t: float, type_index: int = 0) -> LossPmfTable:
    """Loss-count PMF of ``n`` packets spread near-uniformly over the paths of one type."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return LossPmfTable(type_index, n, _type_pmf_cached(pt, int(n), float(t)))


def exceed_prob(pmfs: Sequence[np.ndarray], budget: int) -> float:
    """P(total losses > budget) for independent per-type loss counts.

    Walks the types in order keeping ``fail[m]`` = P(more than m losses so far)
    for m = 0..budget; negative budgets count as certain failure.
    """
    if budget < 0:
        return 1.0
    first = pmfs[0]
    fail = tail_sums(first)[: budget + 1]
    if fail.size < budget + 1:
        fail = np.append(fail, np.zeros(budget + 1 - fail.size))
    for q in pmfs[1:]:
        tails = tail_sums(q)
        new = np.empty(budget + 1)
        for m in range(budget + 1):
            top = min(m, q.size - 1)
            # i <= m: fail[m - i]; i > m: budget already blown
            new[m] = np.dot(q[: top + 1], fail[m - top: m + 1][::-1]) + (tails[m] if m < q.size else 0.0)
        fail = new
    return float(min(max(fail[budget], 0.0), 1.0))


def exact_pe(av: AllocationVector, types, t: float) -> float:
    """Probability that more than ``av.loss_budget_m`` packets of the block are lost.

    ``types`` is a sequence of ``PathType`` or anything with a ``types`` attribute.
    """
    types = list(getattr(types, "types", types))
    if len(types) != len(av.counts):
        raise ValueError("one count per type is required")
    av.check_caps(types, t)
    pmfs = [type_pmf(pt, c, t, j).probs for j, (pt, c) in enumerate(zip(types, av.counts))]
    return exceed_prob(pmfs, av.loss_budget_m)
