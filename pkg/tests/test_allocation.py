import itertools
import math
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pathdiv.allocation import (METHODS, EnumerationLimitExceeded, asymptotic_rounded, baseline_best_path,
                                baseline_equal, count_compositions, dp_lowerbound, dp_suboptimal,
                                exhaustive_optimal, largest_remainder, type_caps, waterfill_rounded)
from pathdiv.asymptotics import TypeEnsemble
from pathdiv.channel import PathType
from pathdiv.config import load
from pathdiv.engine import Block, CapViolation, exact_pe, type_pmf

SMALL = os.path.join(os.path.dirname(__file__), "..", "configs", "small_two_types.yaml")


def compositions(n, caps):
    for head in itertools.product(*(range(min(c, n) + 1) for c in caps[:-1])):
        last = n - sum(head)
        if 0 <= last <= caps[-1]:
            yield head + (last,)


def brute_pe(types, counts, t, budget):
    """Full convolution of the per-type PMFs, independent of the tail recursion."""
    total = np.ones(1)
    for pt, c in zip(types, counts):
        total = np.convolve(total, type_pmf(pt, c, t).probs)
    return float(total[budget + 1:].sum())


def brute_optimum(types, n, t, budget, caps):
    best = None
    for comp in compositions(n, caps):
        pe = brute_pe(types, comp, t, budget)
        if best is None or pe < best[0] - 1e-15:
            best = (pe, comp)
    return best


def random_types(rng, j, max_paths=4):
    return [PathType.from_pi_b(float(rng.uniform(0.005, 0.06)), float(rng.uniform(0.05, 0.4)), 0.1,
                               count=int(rng.integers(1, max_paths + 1))) for _ in range(j)]


def test_count_compositions():
    assert count_compositions(5, [5]) == 1
    assert count_compositions(10, [10, 10]) == 11
    assert count_compositions(10, [3, 10, 4]) == sum(1 for _ in compositions(10, [3, 10, 4]))
    assert count_compositions(10, [2, 3]) == 0


def test_exhaustive_single_type():
    res = exhaustive_optimal(Block(9, 7, 0.1), [PathType(1.0, 50.0, count=2)])
    assert res.allocation.counts == (9,)


def test_exhaustive_matches_independent_enumeration():
    types = [PathType.from_pi_b(0.02, 0.2, 0.1), PathType(2.0, 40.0, count=2)]
    block = Block(12, 9, 0.1)
    res = exhaustive_optimal(block, types)
    pe, comp = brute_optimum(types, 12, 0.1, 3, [12, 12])
    assert res.allocation.counts == comp
    assert res.pe_exact == pytest.approx(pe, rel=1e-12)


def test_exhaustive_random_small_instances():
    rng = np.random.default_rng(31)
    for _ in range(25):
        j = int(rng.integers(2, 4))
        types = random_types(rng, j)
        n = int(rng.integers(4, 13))
        block = Block(n, n - int(rng.integers(1, n // 2 + 1)), 0.1)
        res = exhaustive_optimal(block, types)
        pe, comp = brute_optimum(types, n, 0.1, block.budget, [n] * j)
        assert res.pe_exact == pytest.approx(pe, rel=1e-10, abs=1e-16)


def test_exhaustive_identical_types_near_uniform_and_lexicographic():
    pt = PathType.from_pi_b(0.02, 0.2, 0.1)
    res = exhaustive_optimal(Block(20, 17, 0.1), [pt] * 4)
    assert max(res.allocation.counts) - min(res.allocation.counts) <= 1
    # among equal-value permutations the lexicographically smallest is returned
    assert list(res.allocation.counts) == sorted(res.allocation.counts)


def test_exhaustive_respects_caps_and_limit():
    types = [PathType.from_pi_b(0.01, 0.2, 0.1, max_rate_w=40.0), PathType.from_pi_b(0.03, 0.2, 0.1)]
    res = exhaustive_optimal(Block(10, 8, 0.1), types)
    assert res.allocation.counts[0] <= 4
    with pytest.raises(EnumerationLimitExceeded, match="36") as info:
        exhaustive_optimal(Block(7, 5, 0.1), [types[1]] * 3, enumeration_limit=10)
    assert info.value.count == 36


def test_lowerbound_single_type_is_exact():
    pt = PathType.from_pi_b(0.02, 0.2, 0.1, count=3)
    block = Block(15, 12, 0.1)
    lb = dp_lowerbound(block, [pt])
    assert lb.top_value == pytest.approx(exact_pe(block.allocation([15]), [pt], 0.1), rel=1e-13)


@pytest.mark.parametrize("seed", range(6))
def test_lowerbound_below_optimum_on_every_cell(seed):
    rng = np.random.default_rng(seed)
    j = int(rng.integers(2, 4))
    types = random_types(rng, j, max_paths=3)
    if seed % 2:
        types[0] = PathType(types[0].mu_g, types[0].mu_b, max_rate_w=50.0, count=types[0].count)
    n = int(rng.integers(6, 13))
    block = Block(n, n - int(rng.integers(2, n // 2 + 1)), 0.1)
    caps = type_caps(types, block)
    lb = dp_lowerbound(block, types, full=True)
    for level in range(j):
        table = lb.level(level)
        for rows in range(n + 1):
            for m in range(block.budget + 1):
                best = brute_optimum(types[:level + 1], rows, 0.1, m, caps[:level + 1])
                if best is None:
                    assert table[rows, m] > 1.0
                    continue
                assert table[rows, m] <= best[0] + 1e-12
    assert np.all(np.diff(lb.level(j - 1), axis=1) <= 1e-15)


def test_literal_zero_budget_is_not_a_lower_bound():
    # scoring an exhausted budget as certain loss overshoots the optimum
    cfg = load(SMALL)
    types = cfg.path_types()
    literal = dp_lowerbound(cfg.block, types, zero_budget="literal")
    strict = dp_lowerbound(cfg.block, types)
    best = exhaustive_optimal(cfg.block, types).pe_exact
    assert strict.top_value <= best + 1e-12
    assert literal.top_value > best
    with pytest.raises(ValueError):
        dp_lowerbound(cfg.block, types, zero_budget="other")


def test_dp_identical_types_near_uniform():
    pt = PathType.from_pi_b(0.02, 0.2, 0.1)
    block = Block(20, 17, 0.1)
    dp = dp_suboptimal(block, [pt] * 4)
    opt = exhaustive_optimal(block, [pt] * 4)
    assert np.all(np.abs(np.array(dp.allocation.counts) - 5) <= 1)
    assert np.all(np.abs(np.array(dp.allocation.counts) - np.array(opt.allocation.counts)) <= 1)
    assert dp.lowerbound_pe <= opt.pe_exact + 1e-12


def test_dp_reports_typical_losses_and_bound():
    cfg = load(SMALL)
    res = dp_suboptimal(cfg.block, cfg.path_types())
    assert res.method == "dp" and sum(res.allocation.counts) == cfg.n
    assert res.typical_losses[0] is None
    assert all(k >= 0 for k in res.typical_losses[1:] if k is not None)
    assert res.lowerbound_pe <= res.pe_exact + 1e-12


def test_dp_spreads_leftover_after_early_exit():
    # one lossy packet already blows a zero budget: the walk stops at the top type
    types = [PathType.from_pi_b(0.3, 0.5, 0.1)] * 3
    res = dp_suboptimal(Block(10, 10, 0.1), types)
    assert sum(res.allocation.counts) == 10


def test_dp_dominates_baselines_mostly():
    rng = np.random.default_rng(77)
    wins = close = 0
    for _ in range(50):
        j = int(rng.integers(2, 4))
        types = random_types(rng, j, max_paths=2)
        n = int(rng.integers(6, 16))
        block = Block(n, n - int(rng.integers(1, n // 3 + 1)), 0.1)
        dp = dp_suboptimal(block, types).pe_exact
        rivals = min(baseline_equal(block, types).pe_exact, baseline_best_path(block, types).pe_exact)
        if dp <= rivals * (1 + 1e-12):
            wins += 1
        elif dp <= 1.05 * rivals:
            close += 1
    assert wins >= 45 and wins + close == 50


def test_equal_is_optimal_for_identical_paths():
    pt = PathType.from_pi_b(0.015, 0.2, 0.2, count=4)
    block = Block(40, 36, 0.2)
    assert baseline_equal(block, [pt]).allocation.counts == (40,)
    split = [PathType.from_pi_b(0.015, 0.2, 0.2)] * 4
    assert baseline_equal(block, split).pe_exact == pytest.approx(
        exhaustive_optimal(block, split).pe_exact, rel=1e-12)


def test_equal_matches_optimal_at_zero_spread():
    pts = [PathType.from_pi_b(0.0175, 0.2, 0.1, max_rate_w=1000.0)] * 6
    block = Block(100, 90, 0.1)
    eq = baseline_equal(block, pts)
    opt = exhaustive_optimal(block, pts, enumeration_limit=10 ** 8)
    assert sorted(eq.allocation.counts) == sorted(opt.allocation.counts)
    assert eq.pe_exact == pytest.approx(opt.pe_exact, rel=1e-12)


def test_best_path():
    types = [PathType.from_pi_b(0.03, 0.2, 0.1), PathType.from_pi_b(0.01, 0.2, 0.1)]
    assert baseline_best_path(Block(10, 8, 0.1), types).allocation.counts == (0, 10)
    capped = [types[0], PathType.from_pi_b(0.01, 0.2, 0.1, max_rate_w=50.0)]
    with pytest.raises(CapViolation, match="type 1"):
        baseline_best_path(Block(10, 8, 0.1), capped)


def test_largest_remainder():
    assert largest_remainder([1 / 3, 2 / 3], 10) == [3, 7]
    assert largest_remainder([0.5, 0.5], 3) == [2, 1]
    assert largest_remainder([1.0, 0.0], 4) == [4, 0]


@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=8).filter(lambda w: sum(w) > 1e-3),
       st.integers(min_value=0, max_value=500))
def test_largest_remainder_properties(w, n):
    out = largest_remainder(w, n)
    raw = np.array(w) / sum(w) * n
    assert sum(out) == n and min(out) >= 0
    assert np.all(np.abs(np.array(out) - raw) < 1 + 1e-9)


def test_asymptotic_rounded():
    types = [PathType.from_pi_b(0.015, 0.2, 0.2), PathType.from_pi_b(0.025, 0.2, 0.2, count=2)]
    block = Block(60, 54, 0.2)
    res = asymptotic_rounded(block, types)
    eta = res.extra["eta"]
    assert sum(res.allocation.counts) == 60
    assert np.all(np.abs(np.array(res.allocation.counts) - eta * 60) < 1)
    te = TypeEnsemble.from_types(types, 0.2)
    assert asymptotic_rounded(block, te).allocation == res.allocation


def test_waterfill_rounded_respects_caps():
    types = [PathType.from_pi_b(0.015, 0.2, 0.2, max_rate_w=w) for w in (10.0, 20.0, 1000.0, 1000.0)]
    block = Block(80, 72, 0.2)
    res = waterfill_rounded(block, types)
    assert res.allocation.counts[:2] == (2, 4)
    assert sum(res.allocation.counts) == 80


def test_every_method_yields_valid_vector():
    cfg = load(SMALL)
    for name, fn in METHODS.items():
        if name == "waterfill":
            continue
        res = fn(cfg.block, cfg.path_types())
        av = res.allocation
        assert sum(av.counts) == cfg.n and min(av.counts) >= 0
        av.check_caps(cfg.path_types(), cfg.t_seconds)
        assert 0 <= res.pe_exact <= 1 and math.isfinite(res.pe_exact)
