"""Monte Carlo estimate of the block loss probability.

Each trial draws a full continuous-time state path per physical path (no
single-burst approximation) and counts the packets whose transmission instant
falls in a Bad sojourn. Trials are grouped into fixed-size chunks; chunk ``c``
of seed ``s`` always uses the Philox stream spawned from ``(s, c)``, so results
depend only on ``(seed, trials)`` and not on how chunks are scheduled.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit
from scipy import stats

from .channel import PathType
from .engine import AllocationVector, uniform_split

CHUNK_TRIALS = 1 << 17
EXACT_CI_BELOW = 30


@dataclass(frozen=True)
class McReport:
    trials: int
    failures: int
    pe_hat: float
    ci_low: float
    ci_high: float
    seed: int
    confidence: float = 0.95
    low_confidence: bool = False

    @property
    def rel_halfwidth(self) -> float:
        if self.failures == 0:
            return math.inf
        return 0.5 * (self.ci_high - self.ci_low) / self.pe_hat


def binomial_ci(failures: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wald interval, or Clopper-Pearson when fewer than 30 failures were seen."""
    p = failures / trials
    alpha = 1.0 - confidence
    if failures < EXACT_CI_BELOW or trials - failures < EXACT_CI_BELOW:
        lo = stats.beta.ppf(alpha / 2, failures, trials - failures + 1) if failures > 0 else 0.0
        hi = stats.beta.ppf(1 - alpha / 2, failures + 1, trials - failures) if failures < trials else 1.0
        return float(lo), float(hi)
    z = stats.norm.ppf(1 - alpha / 2)
    half = z * math.sqrt(p * (1 - p) / trials)
    return float(max(0.0, p - half)), float(min(1.0, p + half))


@dataclass(frozen=True)
class _Layout:
    """Flattened physical paths that carry at least one packet."""

    n: np.ndarray
    dt: np.ndarray
    mu_g: np.ndarray
    mu_b: np.ndarray
    pi_b: np.ndarray
    t: float
    budget: int


def _layout(av: AllocationVector, types: Sequence[PathType], t: float) -> _Layout:
    rows = []
    for pt, n_type in zip(types, av.counts):
        for n_l in uniform_split(n_type, pt.count):
            if n_l > 0:
                rows.append((n_l, t / n_l, pt.mu_g, pt.mu_b, pt.pi_b))
    if not rows:
        rows.append((0, 1.0, 1.0, 1.0, 0.0))
    cols = list(zip(*rows))
    return _Layout(np.array(cols[0], dtype=np.int64), *(np.array(c, dtype=float) for c in cols[1:]),
                   t=t, budget=av.loss_budget_m)


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(chunk,))
    return np.random.Generator(np.random.Philox(ss))


@njit(cache=True, nogil=True)
def _loss_kernel(rng, n, dt, mu_g, mu_b, pi_b, t, out):
    for trial in range(out.size):
        total = 0
        for p in range(n.size):
            bad = rng.random() < pi_b[p]
            now = 0.0
            while now < t:
                rate = mu_b[p] if bad else mu_g[p]
                end = now + rng.standard_exponential() / rate
                if bad:
                    # packets i * dt with now <= i * dt < end
                    hi = min(math.ceil(end / dt[p]), n[p])
                    lo = min(math.ceil(now / dt[p]), n[p])
                    total += hi - lo
                now = end
                bad = not bad
        out[trial] = total


def _losses_per_trial(lay: _Layout, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Total lost packets in each of ``trials`` independent blocks."""
    out = np.zeros(trials, dtype=np.int64)
    _loss_kernel(rng, lay.n, lay.dt, lay.mu_g, lay.mu_b, lay.pi_b, lay.t, out)
    return out


def _chunk_failures(lay: _Layout, seed: int, chunk: int, trials: int) -> int:
    if lay.budget >= lay.n.sum():
        return 0
    losses = _losses_per_trial(lay, trials, _chunk_rng(seed, chunk))
    return int(np.count_nonzero(losses > lay.budget))


def _chunk_sizes(trials: int, start_chunk: int = 0):
    first = start_chunk
    remaining = trials
    while remaining > 0:
        size = min(CHUNK_TRIALS, remaining)
        yield first, size
        first += 1
        remaining -= size


def _run_chunks(lay: _Layout, seed: int, chunks, workers: int) -> int:
    chunks = list(chunks)
    if workers <= 1 or len(chunks) == 1:
        return sum(_chunk_failures(lay, seed, c, n) for c, n in chunks)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return sum(pool.map(lambda cn: _chunk_failures(lay, seed, *cn), chunks))


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return seed


def estimate_pe(av: AllocationVector, types, t: float, trials: int, seed: int,
                confidence: float = 0.95, workers: int = 1) -> McReport:
    """Fraction of ``trials`` simulated blocks with more than ``av.loss_budget_m`` losses."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    seed = _check_seed(seed)
    types = list(getattr(types, "types", types))
    lay = _layout(av, types, t)
    failures = _run_chunks(lay, seed, _chunk_sizes(int(trials)), workers)
    lo, hi = binomial_ci(failures, trials, confidence)
    return McReport(int(trials), failures, failures / trials, lo, hi, seed, confidence)


def estimate_pe_adaptive(av: AllocationVector, types, t: float, seed: int,
                         rel_halfwidth: float = 0.1, max_trials: int = 10 ** 8,
                         min_trials: int = CHUNK_TRIALS, confidence: float = 0.95,
                         workers: int = 1) -> McReport:
    """Simulate whole chunks until the CI half-width is within ``rel_halfwidth`` of the estimate.

    Stops at ``max_trials`` and marks the report ``low_confidence`` if the
    target was not met. Chunk ``c`` is the same stream as in ``estimate_pe``.
    """
    seed = _check_seed(seed)
    types = list(getattr(types, "types", types))
    lay = _layout(av, types, t)
    z = stats.norm.ppf(0.5 + confidence / 2)
    # failures needed so that z / sqrt(f) <= rel_halfwidth
    need = math.ceil((z / rel_halfwidth) ** 2)
    trials = failures = 0
    chunk = 0
    batch = max(1, math.ceil(min_trials / CHUNK_TRIALS))
    while trials < max_trials:
        room = max_trials - trials
        todo = []
        for _ in range(batch):
            if room <= 0:
                break
            size = min(CHUNK_TRIALS, room)
            todo.append((chunk, size))
            chunk += 1
            room -= size
            trials += size
        failures += _run_chunks(lay, seed, todo, workers)
        if failures >= need and failures >= EXACT_CI_BELOW:
            break
        # aim straight at the remaining requirement once a rate estimate exists
        if failures > 0:
            want = need * trials / failures - trials
            batch = max(1, min(64, math.ceil(want / CHUNK_TRIALS)))
        else:
            batch = min(64, 2 * batch)
    lo, hi = binomial_ci(failures, trials, confidence)
    met = failures > 0 and 0.5 * (hi - lo) <= rel_halfwidth * failures / trials * (1 + 1e-9)
    return McReport(trials, failures, failures / trials, lo, hi, seed, confidence,
                    low_confidence=not met)


def fit_log_slope(points) -> float:
    """Magnitude of the least-squares slope of ``log(pe)`` against ``x``."""
    pts = [(float(x), float(p)) for x, p in points]
    if len(pts) < 3:
        raise ValueError("need at least three points")
    if any(p <= 0 for _, p in pts):
        raise ValueError("every pe must be positive")
    x = np.array([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    slope = np.polyfit(x, y, 1)[0]
    return float(abs(slope))
