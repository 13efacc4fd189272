"""Experiment driver shared by the command-line subcommands.

Everything returns plain row dicts in ``CSV_COLUMNS`` order; writing them is
the caller's business. Monte Carlo seeds for each (series, point, method) are
derived from the config seed, so rows do not depend on execution order.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from .allocation import METHODS, AllocationResult, exhaustive_optimal
from .asymptotics import (TypeEnsemble, allocation_exponent, rate_u, single_path_pe,
                          theorem_ii_allocation)
from .channel import PathType
from .config import ConfigError, ExperimentConfig, TrialsPolicy
from .engine import AllocationVector, Block, exact_pe
from .montecarlo import McReport, estimate_pe, estimate_pe_adaptive, fit_log_slope

SCHEMA_VERSION = 1
CSV_COLUMNS = ("scenario_id", "axis_value", "method", "allocation", "pe_exact", "pe_mc",
               "ci_low", "ci_high", "exponent_theory", "flags")
EXPONENT_COLUMNS = ("alpha", "mean_x", "u", "l", "eta_star", "exponent")
ALLOCATE_COLUMNS = ("scenario_id", "method", "allocation", "pe_exact", "lowerbound", "runtime_ms")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def join_counts(counts: Sequence) -> str:
    return ";".join(fmt(c) for c in counts)


def to_csv(rows: Sequence[dict], columns=CSV_COLUMNS, schema: bool = True) -> str:
    buf = io.StringIO()
    if schema:
        buf.write(f"# schema_version={SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def derive_seed(seed: int, *keys: int) -> int:
    """64-bit seed for one simulation, a pure function of the config seed and ``keys``."""
    words = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys)).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def run_method(method: str, block: Block, types: Sequence[PathType], cfg: ExperimentConfig) -> AllocationResult:
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    if method == "optimal":
        return exhaustive_optimal(block, types, enumeration_limit=cfg.enumeration_limit)
    return METHODS[method](block, types)


def theory_exponent(types: Sequence[PathType], counts: Sequence[int], block: Block) -> Optional[float]:
    """Decay rate in L predicted for the allocation fractions ``counts / n``; None outside the model."""
    if not 0 < block.alpha < 1:
        return None
    try:
        te = TypeEnsemble.from_types(types, block.t)
        eta = np.asarray(counts, dtype=float) / block.n
        return allocation_exponent(te, eta, block.alpha)
    except (ValueError, ArithmeticError):
        return None


def simulate(av: AllocationVector, types, t: float, policy: TrialsPolicy, seed: int,
             pe_exact: Optional[float] = None, trials: Optional[int] = None,
             workers: int = 1) -> tuple[Optional[McReport], list[str]]:
    if trials is not None:
        return estimate_pe(av, types, t, trials, seed, workers=workers), []
    if policy.mode == "none":
        return None, []
    if pe_exact is not None and pe_exact < policy.min_pe:
        return None, ["mc_skipped_rare"]
    if policy.mode == "fixed":
        return estimate_pe(av, types, t, policy.trials, seed, workers=workers), []
    rep = estimate_pe_adaptive(av, types, t, seed, rel_halfwidth=policy.rel_halfwidth,
                               max_trials=policy.max_trials, min_trials=policy.min_trials,
                               workers=workers)
    return rep, (["low_confidence"] if rep.low_confidence else [])


def point_row(scenario_id: str, axis_value, res: AllocationResult, rep: Optional[McReport],
              exponent, flags: list[str]) -> dict:
    row = {
        "scenario_id": scenario_id, "axis_value": axis_value, "method": res.method,
        "allocation": join_counts(res.allocation.counts), "pe_exact": res.pe_exact,
        "exponent_theory": exponent, "flags": ";".join(flags),
    }
    if rep is not None:
        row.update(pe_mc=rep.pe_hat, ci_low=rep.ci_low, ci_high=rep.ci_high)
    return row


def summary_rows(scenario_id: str, rows: Sequence[dict], theory: dict) -> list[dict]:
    """One slope row per method: fitted slopes of ln(pe_exact) and ln(pe_mc) against the axis.

    Monte Carlo points carrying any flag are left out of the fit.
    """
    out = []
    for method in dict.fromkeys(r["method"] for r in rows):
        mine = [r for r in rows if r["method"] == method]
        exact_pts = [(r["axis_value"], r["pe_exact"]) for r in mine if r["pe_exact"] > 0]
        mc_pts = [(r["axis_value"], r["pe_mc"]) for r in mine
                  if r.get("pe_mc") and not r["flags"]]
        flags = ["summary", f"mc_points={len(mc_pts)}"]
        row = {"scenario_id": scenario_id, "axis_value": "slope", "method": method,
               "exponent_theory": theory.get(method)}
        row["pe_exact"] = fit_log_slope(exact_pts) if len(exact_pts) >= 3 else None
        if len(mc_pts) >= 3:
            row["pe_mc"] = fit_log_slope(mc_pts)
        else:
            flags.append("mc_slope_unavailable")
        row["flags"] = ";".join(flags)
        out.append(row)
    return out


# ---------------------------------------------------------------- subcommands


def cmd_exponent(cfg: ExperimentConfig) -> list[dict]:
    types = cfg.path_types()
    te = TypeEnsemble.from_types(types, cfg.t_seconds)
    rows = []
    for alpha in cfg.alphas or (cfg.block.alpha,):
        if not 0 < alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
        res = theorem_ii_allocation(te, alpha)
        rows.append({
            "alpha": alpha,
            "mean_x": join_counts(te.means),
            "u": join_counts([rate_u(rf, alpha) for rf in te.rates]),
            "l": join_counts([float(l) if not math.isnan(l) else 0.0 for l in res.lambdas]),
            "eta_star": join_counts([0.0 if res.degenerate else float(e) for e in res.eta]),
            "exponent": res.exponent,
        })
    return rows


def cmd_allocate(cfg: ExperimentConfig, method: str, timing: bool = True) -> list[dict]:
    types = cfg.path_types()
    start = time.perf_counter()
    res = run_method(method, cfg.block, types, cfg)
    lower = res.lowerbound_pe
    elapsed = (time.perf_counter() - start) * 1e3
    return [{"scenario_id": cfg.scenario_id, "method": res.method,
             "allocation": join_counts(res.allocation.counts), "pe_exact": res.pe_exact,
             "lowerbound": lower, "runtime_ms": round(elapsed, 3) if timing else None}]


def _result_for(cfg: ExperimentConfig, types, method: str, allocation: Optional[Sequence[int]]):
    block = cfg.block
    if allocation is None:
        return run_method(method, block, types, cfg)
    av = block.allocation(allocation)
    if len(av.counts) != len(types):
        raise ConfigError(f"allocation has {len(av.counts)} entries for {len(types)} types")
    return AllocationResult("given", av, exact_pe(av, types, block.t))


def cmd_evaluate(cfg: ExperimentConfig, method: str = "equal",
                 allocation: Optional[Sequence[int]] = None) -> list[dict]:
    types = cfg.path_types()
    res = _result_for(cfg, types, method, allocation)
    exponent = theory_exponent(types, res.allocation.counts, cfg.block)
    return [point_row(cfg.scenario_id, "", res, None, exponent, [])]


def cmd_simulate(cfg: ExperimentConfig, method: str = "equal", allocation: Optional[Sequence[int]] = None,
                 trials: Optional[int] = None, workers: int = 1) -> list[dict]:
    types = cfg.path_types()
    res = _result_for(cfg, types, method, allocation)
    rep, flags = simulate(res.allocation, types, cfg.t_seconds, cfg.trials, cfg.seed,
                          pe_exact=None, trials=trials, workers=workers)
    if rep is None and not flags:
        rep, flags = simulate(res.allocation, types, cfg.t_seconds,
                              dataclasses.replace(cfg.trials, mode="fixed"), cfg.seed, workers=workers)
    exponent = theory_exponent(types, res.allocation.counts, cfg.block)
    return [point_row(cfg.scenario_id, "", res, rep, exponent, flags)]


def _sweep_points(cfg: ExperimentConfig):
    """Yield ``(series_id, series_index, point_index, axis_value, block, types)`` in output order."""
    sw = cfg.sweep
    t = cfg.t_seconds
    base = cfg.path_types()
    if sw.axis == "mu_b_t":
        for i, v in enumerate(sw.values):
            types = [dataclasses.replace(pt, mu_b=float(v) / t) for pt in base]
            yield cfg.scenario_id, 0, i, v, cfg.block, types
    elif sw.axis == "paths_l":
        for s, alpha in enumerate(sw.alphas):
            sid = f"{cfg.scenario_id}/alpha={alpha:g}"
            for i, v in enumerate(sw.values):
                counts = [int(round(g * v)) for g in sw.gammas]
                if len(counts) != len(base):
                    raise ConfigError("paths_l sweep needs one gamma per type")
                types = [dataclasses.replace(pt, count=c) for pt, c in zip(base, counts)]
                n = int(sw.n0) * int(v)
                block = Block(n, n - int(round(alpha * n)), t)
                yield sid, s, i, v, block, types
    else:
        w = base[0].max_rate_w
        for i, v in enumerate(sw.values):
            types = [PathType.from_pi_b(sw.base_pi_b + o * float(v) / 2, sw.mu_g_t, t, w)
                     for o in sw.offsets]
            yield cfg.scenario_id, 0, i, v, cfg.block, types


def _check_sweep_feasible(cfg: ExperimentConfig, points) -> None:
    for sid, _, _, v, block, types in points:
        cap = sum(pt.cap(block.t) if math.isfinite(pt.max_rate_w) else block.n for pt in types)
        if cap < block.n:
            raise ConfigError(f"{sid} at {v}: paths carry {cap} packets, block needs {block.n}")


def _run_point(cfg: ExperimentConfig, point, trials: Optional[int], workers: int) -> list[dict]:
    sid, s, i, v, block, types = point
    rows = []
    for mi, method in enumerate(cfg.sweep.methods):
        res = run_method(method, block, types, cfg)
        seed = derive_seed(cfg.seed, s, i, mi)
        rep, flags = simulate(res.allocation, types, block.t, cfg.trials, seed,
                              pe_exact=res.pe_exact, trials=trials, workers=workers)
        if cfg.sweep.axis == "mu_b_t":
            exponent = block.alpha if len(types) == 1 and types[0].count == 1 else None
        else:
            exponent = theory_exponent(types, res.allocation.counts, block)
        rows.append(point_row(sid, v, res, rep, exponent, flags))
    return rows


def _series_theory(cfg: ExperimentConfig, sid: str, rows: list[dict], points) -> dict:
    sw = cfg.sweep
    theory = {}
    if sw.axis == "mu_b_t":
        pts = [p for p in points if p[0] == sid]
        if len(pts) >= 3 and all(len(p[5]) == 1 and p[5][0].count == 1 for p in pts):
            # slope of the closed-form single-path curve over the same grid
            curve = [(p[3], single_path_pe(p[5][0], p[4].t, p[4].alpha)) for p in pts]
            for m in sw.methods:
                theory[m] = fit_log_slope(curve)
    elif sw.axis == "paths_l":
        pts = [p for p in points if p[0] == sid]
        _, _, _, v, block, types = pts[0]
        te = TypeEnsemble.from_types(types, block.t)
        for m in sw.methods:
            if m == "asymptotic" or len(types) == 1:
                theory[m] = theorem_ii_allocation(te, block.alpha).exponent
            elif m == "equal":
                theory[m] = allocation_exponent(te, te.gammas, block.alpha)
            else:
                vals = [r["exponent_theory"] for r in rows if r["method"] == m and r["exponent_theory"] is not None]
                theory[m] = float(np.mean(vals)) if vals else None
    return theory


def cmd_sweep(cfg: ExperimentConfig, axis: Optional[str] = None, trials: Optional[int] = None,
              workers: int = 1, mc_workers: int = 1) -> list[dict]:
    if cfg.sweep is None:
        raise ConfigError("config has no sweep section")
    if axis is not None and axis != cfg.sweep.axis:
        raise ConfigError(f"--axis {axis} does not match the config's sweep axis {cfg.sweep.axis}")
    for m in cfg.sweep.methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}")
    points = list(_sweep_points(cfg))
    _check_sweep_feasible(cfg, points)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_point = list(pool.map(lambda p: _run_point(cfg, p, trials, mc_workers), points))
    else:
        per_point = [_run_point(cfg, p, trials, mc_workers) for p in points]
    rows = []
    for sid in dict.fromkeys(p[0] for p in points):
        series = [r for p, rs in zip(points, per_point) if p[0] == sid for r in rs]
        rows.extend(series)
        rows.extend(summary_rows(sid, series, _series_theory(cfg, sid, series, points)))
    return rows
