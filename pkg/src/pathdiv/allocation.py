"""Rate allocation across path types.

Every method returns an ``AllocationResult`` whose ``pe_exact`` comes from the
exact engine. Types are indexed from 0; the dynamic program treats type 0 as
the base level and type J-1 as the top.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .asymptotics import TypeEnsemble, theorem_ii_allocation, waterfill_allocation
from .burst import build_profile, mean_bad_fraction
from .channel import PathType
from .engine import AllocationVector, Block, CapViolation, exact_pe, tail_sums, type_pmf, uniform_split

DEFAULT_ENUMERATION_LIMIT = 10 ** 7
# marks infeasible cells (over a cap); any value above 1 means "cannot happen"
_INFEASIBLE = 1e30


class EnumerationLimitExceeded(RuntimeError):
    def __init__(self, count: int, limit: int):
        super().__init__(f"{count} cap-feasible compositions exceed the enumeration limit {limit}")
        self.count = count
        self.limit = limit


@dataclass
class AllocationResult:
    method: str
    allocation: AllocationVector
    pe_exact: float
    lowerbound_pe: Optional[float] = None
    typical_losses: Optional[tuple] = None  # K_j per type, None where the walk never visited it
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.pe_exact <= 1.0:
            raise ValueError(f"pe_exact {self.pe_exact} is not a probability")


def _types(te) -> list[PathType]:
    return list(getattr(te, "types", te))


def type_caps(types: Sequence[PathType], block: Block) -> list[int]:
    """Per-type packet caps clipped to the block length."""
    return [min(pt.cap(block.t), block.n) for pt in types]


def _finish(method: str, block: Block, types, counts, **kw) -> AllocationResult:
    av = block.allocation(counts)
    av.check_caps(types, block.t)
    return AllocationResult(method, av, exact_pe(av, types, block.t), **kw)


# ---------------------------------------------------------------- exhaustive


def count_compositions(n: int, caps: Sequence[int]) -> int:
    """Number of ways to write ``n`` as an ordered sum with part ``j`` in ``[0, caps[j]]``."""
    ways = [1] + [0] * n
    for c in caps:
        c = min(c, n)
        prefix = [0]
        for w in ways:
            prefix.append(prefix[-1] + w)
        # new[s] = sum of ways[s - c .. s]
        ways = [prefix[s + 1] - prefix[max(0, s - c)] for s in range(n + 1)]
    return ways[n]


def _symmetry_links(types: Sequence[PathType]) -> np.ndarray:
    """``link[j]`` = latest earlier index of an identical type, or -1."""
    link = np.full(len(types), -1, dtype=np.int64)
    for j, pt in enumerate(types):
        for i in range(j - 1, -1, -1):
            if types[i] == pt:
                link[j] = i
                break
    return link


def _pmf_tables(types, n: int, budget: int, t: float, caps) -> tuple[np.ndarray, np.ndarray]:
    """``q[j, c, i]`` = P(i losses | c packets on type j) and ``tail[j, c, i]`` = P(> i), for i <= budget."""
    jn = len(types)
    q = np.zeros((jn, n + 1, budget + 1))
    tail = np.zeros((jn, n + 1, budget + 1))
    for j, pt in enumerate(types):
        for c in range(min(caps[j], n) + 1):
            probs = type_pmf(pt, c, t, j).probs
            top = min(c, budget) + 1
            q[j, c, :top] = probs[:top]
            tail[j, c, :top] = tail_sums(probs)[:top]
    return q, tail


@njit(cache=True, nogil=True)
def _search(q, tail, caps, link, n_total, budget):
    jn = q.shape[0]
    counts = np.zeros(jn, np.int64)
    rem = np.zeros(jn, np.int64)
    fails = np.zeros((jn, budget + 1))
    best = 2.0
    best_counts = np.full(jn, -1, np.int64)
    # room[j] = packets types j+1.. can still absorb
    room = np.zeros(jn, np.int64)
    for j in range(jn - 2, -1, -1):
        room[j] = room[j + 1] + caps[j + 1]
    last = jn - 1
    j = 0
    rem[0] = n_total
    counts[0] = -1
    while j >= 0:
        counts[j] += 1
        lim = min(caps[j], rem[j])
        if counts[j] > lim:
            j -= 1
            continue
        if link[j] >= 0 and counts[j] < counts[link[j]]:
            continue
        left = rem[j] - counts[j]
        if left > room[j]:
            continue
        c = counts[j]
        if j == 0:
            for m in range(budget + 1):
                fails[0, m] = tail[0, c, m]
        else:
            for m in range(budget + 1):
                acc = tail[j, c, m]
                for i in range(min(m, c) + 1):
                    acc += q[j, c, i] * fails[j - 1, m - i]
                fails[j, m] = acc
        if j == last - 1:
            c_last = left
            if link[last] >= 0 and c_last < counts[link[last]]:
                continue
            acc = tail[last, c_last, budget]
            for i in range(min(budget, c_last) + 1):
                acc += q[last, c_last, i] * fails[j, budget - i]
            if acc < best:
                best = acc
                for s in range(last):
                    best_counts[s] = counts[s]
                best_counts[last] = c_last
            continue
        j += 1
        rem[j] = left
        counts[j] = -1
    return best, best_counts


def exhaustive_optimal(block: Block, te, caps: Optional[Sequence[int]] = None,
                       enumeration_limit: int = DEFAULT_ENUMERATION_LIMIT) -> AllocationResult:
    """Composition of ``block.n`` minimizing the exact loss probability.

    Permutations among identical types are visited once (counts kept
    nondecreasing along each group), and among equal minima the
    lexicographically smallest composition wins.
    """
    types = _types(te)
    caps = list(caps) if caps is not None else type_caps(types, block)
    caps = [min(int(c), block.n) for c in caps]
    total = count_compositions(block.n, caps)
    if total == 0:
        raise CapViolation(f"caps {caps} cannot carry {block.n} packets")
    if total > enumeration_limit:
        raise EnumerationLimitExceeded(total, enumeration_limit)
    if len(types) == 1:
        return _finish("optimal", block, types, [block.n])
    q, tail = _pmf_tables(types, block.n, block.budget, block.t, caps)
    _, best_counts = _search(q, tail, np.array(caps, dtype=np.int64), _symmetry_links(types),
                             block.n, block.budget)
    return _finish("optimal", block, types, [int(c) for c in best_counts],
                   extra={"compositions": total})


# ---------------------------------------------------------------- dynamic program


@dataclass
class LowerBoundTable:
    """``level(j)[n, m]`` = P̂(n, m, j) for levels below the top; the top keeps only ``(N, M)``."""

    tables: list  # arrays of shape (N + 1, M + 1), one per level 0 .. J-2 (or J-1 when full)
    top_value: float
    zero_budget: str

    def level(self, j: int) -> np.ndarray:
        return self.tables[j]

    def value(self, n: int, m: int, j: int) -> float:
        if m < 0 or (m == 0 and self.zero_budget == "literal"):
            return 1.0
        return float(self.tables[j][n, m])


def _level_pmfs(pt: PathType, n_max: int, cap: int, t: float) -> list[np.ndarray]:
    return [type_pmf(pt, c, t).probs for c in range(min(cap, n_max) + 1)]


def _combine(prev: np.ndarray, q: np.ndarray, n_rows: int, budget: int) -> np.ndarray:
    """``out[r, m] = sum_i q[i] * prev[r, m - i]`` with ``prev[., <0] = 1``."""
    out = np.zeros((n_rows, budget + 1))
    top = min(q.size - 1, budget)
    for i in range(top + 1):
        out[:, i:] += q[i] * prev[:n_rows, : budget + 1 - i]
    tails = tail_sums(q)
    k = min(tails.size, budget + 1)
    out[:, :k] += tails[:k]
    return out


def _base_table(pmfs, n: int, budget: int, literal: bool) -> np.ndarray:
    table = np.full((n + 1, budget + 1), _INFEASIBLE)
    for c, probs in enumerate(pmfs):
        tails = tail_sums(probs)
        k = min(tails.size, budget + 1)
        table[c, :] = 0.0
        table[c, :k] = tails[:k]
    if literal:
        table[:, 0] = np.where(table[:, 0] >= _INFEASIBLE, _INFEASIBLE, 1.0)
    return table


def _level_table(prev: np.ndarray, pmfs, n: int, budget: int, literal: bool) -> np.ndarray:
    table = np.full((n + 1, budget + 1), _INFEASIBLE)
    for c, probs in enumerate(pmfs):
        rows = n + 1 - c
        cand = _combine(prev, probs, rows, budget)
        np.minimum(table[c:], cand, out=table[c:])
    if literal:
        table[:, 0] = np.where(table[:, 0] >= 1.0, table[:, 0], 1.0)
    return np.minimum(table, _INFEASIBLE)


def _step_values(prev: np.ndarray, pmfs, n: int, m: int, literal_prev: bool):
    """Step-two objective for every candidate ``n_j``, plus the per-``i`` terms."""
    vals = np.full(len(pmfs), np.inf)
    terms = []
    for c, probs in enumerate(pmfs):
        if c > n:
            break
        row = n - c
        ks = m - np.arange(probs.size)
        hat = np.ones(probs.size)
        ok = ks > 0 if literal_prev else ks >= 0
        hat[ok] = prev[row, ks[ok]]
        contrib = probs * hat
        vals[c] = contrib.sum()
        terms.append(contrib)
    return vals, terms


def dp_lowerbound(block: Block, te, caps: Optional[Sequence[int]] = None,
                  zero_budget: str = "strict", full: bool = False) -> LowerBoundTable:
    """Tabulate P̂(n, m, j) bottom-up.

    ``zero_budget="strict"`` scores only negative budgets as certain failure,
    matching the exact recursion for a fixed allocation, and is a true lower
    bound on the optimum. ``"literal"`` also scores an exhausted budget (m = 0)
    as 1 at every level; that overestimates and can exceed the optimum even
    for m >= 1. With ``full`` the whole top table is kept, otherwise only the
    ``(N, M)`` cell is computed.
    """
    if zero_budget not in ("literal", "strict"):
        raise ValueError(f"unknown zero_budget mode {zero_budget!r}")
    literal = zero_budget == "literal"
    types = _types(te)
    caps = list(caps) if caps is not None else type_caps(types, block)
    n, budget = block.n, block.budget
    tables = [_base_table(_level_pmfs(types[0], n, caps[0], block.t), n, budget, literal)]
    jn = len(types)
    upper = jn if full else jn - 1
    for j in range(1, upper):
        pmfs = _level_pmfs(types[j], n, caps[j], block.t)
        tables.append(_level_table(tables[-1], pmfs, n, budget, literal))
    if full or jn == 1:
        top = tables[-1][n, budget]
    else:
        pmfs = _level_pmfs(types[-1], n, caps[-1], block.t)
        vals, _ = _step_values(tables[-1], pmfs, n, budget, literal)
        top = float(vals.min())
    if literal and budget == 0:
        top = 1.0
    return LowerBoundTable(tables, float(min(top, _INFEASIBLE)), zero_budget)


def dp_suboptimal(block: Block, te, caps: Optional[Sequence[int]] = None,
                  zero_budget: str = "strict", lb: Optional[LowerBoundTable] = None) -> AllocationResult:
    """Walk the lower-bound table from the top type down, fixing one type per step."""
    types = _types(te)
    caps = list(caps) if caps is not None else type_caps(types, block)
    if lb is None:
        lb = dp_lowerbound(block, types, caps, zero_budget)
    literal = lb.zero_budget == "literal"
    jn = len(types)
    counts = [0] * jn
    typical: list = [None] * jn
    n, m, j = block.n, block.budget, jn - 1
    while j >= 1:
        pmfs = _level_pmfs(types[j], n, caps[j], block.t)
        vals, terms = _step_values(lb.level(j - 1), pmfs, n, m, literal)
        pick = int(np.argmin(vals))  # first minimum = smallest n_j
        k_j = int(np.argmax(terms[pick]))
        counts[j] = pick
        typical[j] = k_j
        n -= pick
        m -= k_j
        j -= 1
        if m < 0:
            break
    # spread what is left over types 0..j, remainder to type j
    share, extra = divmod(n, j + 1)
    for i in range(j + 1):
        counts[i] = share
    counts[j] += extra
    return _finish("dp", block, types, counts, lowerbound_pe=lb.top_value,
                   typical_losses=tuple(typical))


# ---------------------------------------------------------------- baselines


def baseline_equal(block: Block, te) -> AllocationResult:
    """Near-uniform split over every physical path; earlier paths take the extra packets."""
    types = _types(te)
    per_path = uniform_split(block.n, sum(pt.count for pt in types))
    counts, start = [], 0
    for pt in types:
        counts.append(sum(per_path[start:start + pt.count]))
        start += pt.count
    return _finish("equal", block, types, counts)


def expected_bad_fraction(pt: PathType, t: float) -> float:
    """Mean bad-time fraction; falls back to ``pi_b`` outside the single-burst regime."""
    try:
        return mean_bad_fraction(build_profile(pt, t))
    except ValueError:
        return pt.pi_b


def baseline_best_path(block: Block, te) -> AllocationResult:
    """Whole block on the type with the smallest mean bad-time fraction (first on ties)."""
    types = _types(te)
    means = [expected_bad_fraction(pt, block.t) for pt in types]
    best = int(np.argmin(means))
    counts = [0] * len(types)
    counts[best] = block.n
    if block.n > types[best].cap(block.t):
        raise CapViolation(f"best path type {best} is capped at {types[best].cap(block.t)} "
                           f"packets, block needs {block.n}")
    return _finish("best-path", block, types, counts)


def largest_remainder(weights, n: int) -> list[int]:
    """Integer vector summing to ``n`` closest to ``weights * n``; ties go to the smaller index."""
    w = np.asarray(weights, dtype=float)
    raw = w / w.sum() * n
    base = np.floor(raw + 1e-12).astype(np.int64)
    base = np.minimum(base, n)
    short = n - int(base.sum())
    frac = raw - base
    # stable sort keeps the smaller index first among equal remainders
    order = np.argsort(-frac, kind="stable")
    for i in order[:short]:
        base[i] += 1
    return [int(b) for b in base]


def _ensemble(types, block: Block) -> TypeEnsemble:
    return TypeEnsemble.from_types(types, block.t)


def asymptotic_rounded(block: Block, te, alpha: Optional[float] = None) -> AllocationResult:
    """Asymptotically optimal fractions scaled to the block and rounded by largest remainder."""
    types = _types(te)
    ens = te if isinstance(te, TypeEnsemble) else _ensemble(types, block)
    alpha = block.alpha if alpha is None else alpha
    res = theorem_ii_allocation(ens, alpha)
    return _finish("asymptotic", block, types, largest_remainder(res.eta, block.n),
                   extra={"eta": res.eta, "exponent": res.exponent})


def waterfill_rounded(block: Block, te, alpha: Optional[float] = None) -> AllocationResult:
    """Cap-aware fractions for types sharing one law, rounded without breaking caps."""
    types = _types(te)
    ens = te if isinstance(te, TypeEnsemble) else _ensemble(types, block)
    alpha = block.alpha if alpha is None else alpha
    n0 = block.n / ens.total_paths
    eta = waterfill_allocation(ens, alpha, n0, block.t)
    counts = largest_remainder(eta, block.n)
    caps = type_caps(types, block)
    # rounding up can push a saturated type one over its cap; hand it to the roomiest type
    for j in range(len(counts)):
        while counts[j] > caps[j]:
            counts[j] -= 1
            room = [caps[i] - counts[i] if i != j else -1 for i in range(len(counts))]
            counts[int(np.argmax(room))] += 1
    return _finish("waterfill", block, types, counts, extra={"eta": eta})


METHODS = {
    "optimal": exhaustive_optimal,
    "dp": dp_suboptimal,
    "equal": baseline_equal,
    "best-path": baseline_best_path,
    "asymptotic": asymptotic_rounded,
    "waterfill": waterfill_rounded,
}
