"""Experiment drivers: grid cells × seeds -> :class:`ResultRow` lists.

Each (cell, seed) job is a pure function of its arguments, so jobs can run
in a process pool; rows are sorted by cell key on output, which makes the
merge order-independent. Error bars are batch means over seeds (component
statistics within one graph are dependent).

Resource guards: a per-cell wall-time budget (jobs that would start after
the deadline are skipped), an edge guard for graph sampling and a particle
cap for trees. A tripped guard never raises; the cell gets a ``partial``
row and the run summary is marked partial.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import analytics
from ..brw import TreeCaps, local_limit_batch
from ..coupling import coupled_realization
from ..graph import (ResourceError, components, log_susceptibility, sample_graph,
                     susceptibility, tail_counts, truncated_functionals, write_edge_list)
from ..model import ModelParams, resolve_beta
from ..rng import Stream
from ..stats import t_half_width, z_score
from .config import ExperimentConfig
from .output import ResultRow

DEFAULT_TAIL_GRID = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512)
DEFAULT_LOCAL_GRID = (1, 8, 64)
_BRW_STREAM = 0x4C4C


@dataclass
class RunResult:
    rows: list[ResultRow]
    partial: bool = False
    extra: dict = field(default_factory=dict)


# ------------------------------------------------------------------ plumbing

def _call(args):
    fn, a = args
    return fn(*a)


def _map(fn, jobs: list[tuple], threads: int) -> list:
    if threads <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(_call, [(fn, j) for j in jobs]))


def _guarded(fn):
    """Turn resource failures into a marker instead of an exception."""
    def run(deadline, *args):
        if deadline is not None and time.time() > deadline:
            return {"skipped": "wall_time"}
        try:
            return fn(*args)
        except (ResourceError, MemoryError) as exc:
            return {"skipped": f"{type(exc).__name__}: {exc}"}
    # keep the module-level name so process pools can pickle the wrapper
    run.__name__, run.__qualname__, run.__module__ = fn.__name__, fn.__qualname__, fn.__module__
    return run


def _deadline(config: ExperimentConfig):
    w = config.caps.wall_time
    return None if w is None else time.time() + w


def _cell_keys(p: ModelParams) -> dict:
    wp = resolve_beta(p)
    return {"gamma": p.gamma, "n": p.n, "alpha": wp.alpha, "beta": wp.beta}


def _agg(experiment, stat, values, keys, n_reps=None, **kw) -> ResultRow:
    values = np.asarray(values, dtype=float)
    hw = t_half_width(values) if values.size >= 2 else math.inf
    return ResultRow(experiment=experiment, statistic=stat,
                     estimate=float(values.mean()) if values.size else math.nan,
                     half_width=hw, n_reps=int(values.size if n_reps is None else n_reps),
                     **keys, **kw)


def _partial_row(experiment, keys, done, total, reasons, log: list) -> ResultRow:
    """Marker row: ``estimate`` = completed seeds out of ``n_reps``."""
    log.extend(reasons)
    return ResultRow(experiment=experiment, statistic="partial", estimate=float(done),
                     n_reps=int(total), flagged=True, **keys)


def _reasons(reasons: list[str]) -> dict:
    return {"partial_reasons": sorted(set(reasons))} if reasons else {}


def _split(results):
    ok = [(s, r) for s, r in results if "skipped" not in r]
    bad = [r["skipped"] for s, r in results if "skipped" in r]
    return ok, bad


# ------------------------------------------------------------------ window scan

@_guarded
def _window_job(params_list, seed, ceiling, max_edges):
    out = []
    for p in params_list:
        g = sample_graph(p, seed, beta_ceiling=ceiling, max_edges=max_edges)
        out.append(components(g).largest)
    return {"largest": out}


def run_window_scan(config: ExperimentConfig, threads: int = 1) -> RunResult:
    rows: list[ResultRow] = []
    partial = False
    reasons: list[str] = []
    E = "window_scan"
    for gamma in config.gamma:
        for n in config.n:
            plist = [config.params(gamma, n, k, v) for k, v in config.window_values()]
            plist.sort(key=lambda p: resolve_beta(p).beta)
            ceiling = max(resolve_beta(p).beta for p in plist)
            dl = _deadline(config)
            res = _map(_window_job, [(dl, plist, s, ceiling, config.caps.max_edges)
                                     for s in config.seeds], threads)
            ok, bad = _split(list(zip(config.seeds, res)))
            if bad:
                partial = True
                rows.append(_partial_row(E, {"gamma": gamma, "n": n}, len(ok),
                                         len(config.seeds), bad, reasons))
            viol = 0
            for s, r in ok:
                lg = r["largest"]
                viol += any(b < a for a, b in zip(lg, lg[1:]))
            rows.append(ResultRow(experiment=E, statistic="monotone_violations",
                                  estimate=float(viol), n_reps=len(ok), gamma=gamma, n=n))
            for idx, p in enumerate(plist):
                keys = _cell_keys(p)
                s_a = analytics.si(keys["alpha"])
                scale = math.log(n) * s_a / math.sqrt(n)
                norm = []
                for s, r in ok:
                    L = r["largest"][idx]
                    norm.append(L * scale)
                    rows.append(ResultRow(experiment=E, statistic="largest", estimate=float(L),
                                          seed=s, **keys))
                    rows.append(ResultRow(experiment=E, statistic="normalized",
                                          estimate=float(L * scale), seed=s, **keys))
                if norm:
                    q25, q50, q75 = np.percentile(norm, [25, 50, 75])
                    for stat, val in (("median_normalized", q50), ("q25_normalized", q25),
                                      ("q75_normalized", q75)):
                        rows.append(ResultRow(experiment=E, statistic=stat, estimate=float(val),
                                              n_reps=len(norm), half_width=0.0, **keys))
                    rows.append(_agg(E, "mean_normalized", norm, keys))
    return RunResult(rows, partial, _reasons(reasons))


# ------------------------------------------------------------------ tail

@_guarded
def _tail_job(p, seed, k_grid, max_edges):
    comp = components(sample_graph(p, seed, max_edges=max_edges))
    return {"tail": [f for _, f in tail_counts(comp, k_grid)]}


def run_tail(config: ExperimentConfig, threads: int = 1) -> RunResult:
    rows: list[ResultRow] = []
    partial = False
    reasons: list[str] = []
    E = "tail"
    k_grid = config.k_grid or DEFAULT_TAIL_GRID
    for p in config.cells():
        keys = _cell_keys(p)
        dl = _deadline(config)
        res = _map(_tail_job, [(dl, p, s, k_grid, config.caps.max_edges)
                               for s in config.seeds], threads)
        ok, bad = _split(list(zip(config.seeds, res)))
        if bad:
            partial = True
            rows.append(_partial_row(E, keys, len(ok), len(config.seeds), bad, reasons))
        if not ok:
            continue
        mat = np.array([r["tail"] for _, r in ok])
        for s, r in ok:
            for k, f in zip(k_grid, r["tail"]):
                rows.append(ResultRow(experiment=E, statistic="tail_prob", estimate=f,
                                      seed=s, k=k, **keys))
        for j, k in enumerate(k_grid):
            comp_f = k * math.log(k) ** 2
            row = _agg(E, "tail_prob", mat[:, j], keys, k=k)
            rows.append(row)
            rows.append(ResultRow(experiment=E, statistic="compensated_tail",
                                  estimate=comp_f * row.estimate,
                                  half_width=comp_f * row.half_width, n_reps=row.n_reps,
                                  k=k, **keys))
    return RunResult(rows, partial, _reasons(reasons))


# ------------------------------------------------------------------ susceptibility

@_guarded
def _sus_job(p, seed, max_edges):
    comp = components(sample_graph(p, seed, max_edges=max_edges))
    return {"susceptibility": susceptibility(comp), "log_susceptibility": log_susceptibility(comp),
            "largest": float(comp.largest)}


def run_susceptibility(config: ExperimentConfig, threads: int = 1) -> RunResult:
    rows: list[ResultRow] = []
    partial = False
    reasons: list[str] = []
    E = "susceptibility"
    for p in config.cells():
        keys = _cell_keys(p)
        dl = _deadline(config)
        res = _map(_sus_job, [(dl, p, s, config.caps.max_edges) for s in config.seeds], threads)
        ok, bad = _split(list(zip(config.seeds, res)))
        if bad:
            partial = True
            rows.append(_partial_row(E, keys, len(ok), len(config.seeds), bad, reasons))
        if not ok:
            continue
        for stat in ("susceptibility", "log_susceptibility", "largest"):
            for s, r in ok:
                rows.append(ResultRow(experiment=E, statistic=stat, estimate=float(r[stat]),
                                      seed=s, **keys))
            rows.append(_agg(E, stat, [r[stat] for _, r in ok], keys))
    return RunResult(rows, partial, _reasons(reasons))


# ------------------------------------------------------------------ local limit

_FUNCS = ("tail", "trunc_mean", "trunc_logmean")


@_guarded
def _ll_graph_job(p, seed, k_grid, max_edges):
    comp = components(sample_graph(p, seed, max_edges=max_edges))
    return {k: truncated_functionals(comp, k) for k in k_grid}


def brw_functionals(prog: np.ndarray, k: int) -> dict[str, np.ndarray]:
    """Per-draw values whose means are the local-limit truncated functionals."""
    t = prog.astype(float)
    small = t <= k
    return {"tail": (t >= k).astype(float),
            "trunc_mean": np.where(small, t, 0.0),
            "trunc_logmean": np.where(small, t * np.log(t), 0.0)}


@_guarded
def _ll_brw_job(gamma, seed, reps, cap, k_grid):
    _, prog, cens = local_limit_batch(gamma, reps, Stream(seed).spawn(_BRW_STREAM), cap=cap)
    out = {"censored": float(cens.mean()), "n": int(reps)}
    unc = prog[~cens]
    out["progeny_sum"] = float(unc.sum())
    out["progeny_sq"] = float((unc.astype(float) ** 2).sum())
    out["n_unc"] = int(unc.size)
    for k in k_grid:
        for name, vals in brw_functionals(prog, k).items():
            # censored draws have T >= cap > k, so their truncated values are exact
            out[(k, name)] = (float(vals.sum()), float((vals ** 2).sum()))
    return out


def run_local_limit(config: ExperimentConfig, threads: int = 1) -> RunResult:
    rows: list[ResultRow] = []
    partial = False
    reasons: list[str] = []
    E = "local_limit"
    k_grid = config.k_grid or DEFAULT_LOCAL_GRID
    cap = config.caps.max_particles
    if max(k_grid) >= cap:
        raise ValueError("k_grid must stay below the particle cap")
    brw_cache: dict[float, list] = {}
    for p in config.cells():
        keys = _cell_keys(p)
        dl = _deadline(config)
        gres = _map(_ll_graph_job, [(dl, p, s, k_grid, config.caps.max_edges)
                                    for s in config.seeds], threads)
        if p.gamma not in brw_cache:
            brw_cache[p.gamma] = list(zip(config.seeds, _map(
                _ll_brw_job, [(dl, p.gamma, s, config.reps, cap, k_grid)
                              for s in config.seeds], threads)))
        gok, gbad = _split(list(zip(config.seeds, gres)))
        bok, bbad = _split(brw_cache[p.gamma])
        if gbad or bbad:
            partial = True
            rows.append(_partial_row(E, keys, min(len(gok), len(bok)), len(config.seeds),
                                     gbad + bbad, reasons))
        if not gok or not bok:
            continue
        ntot = sum(r["n"] for _, r in bok)
        cens = sum(r["censored"] * r["n"] for _, r in bok) / ntot
        nunc = sum(r["n_unc"] for _, r in bok)
        s1 = sum(r["progeny_sum"] for _, r in bok)
        s2 = sum(r["progeny_sq"] for _, r in bok)
        mean = s1 / nunc
        se = math.sqrt(max(s2 / nunc - mean * mean, 0.0) / max(nunc - 1, 1))
        rows.append(ResultRow(experiment=E, statistic="brw_mean_progeny", estimate=mean,
                              half_width=1.96 * se, n_reps=nunc, censored_fraction=cens, **keys))
        rows.append(ResultRow(experiment=E, statistic="exact_mean_progeny",
                              estimate=analytics.local_limit_mean(p.gamma), **keys))
        for k in k_grid:
            for name in _FUNCS:
                gv = np.array([r[k][name] for _, r in gok])
                for s, r in gok:
                    rows.append(ResultRow(experiment=E, statistic=f"graph_{name}",
                                          estimate=float(r[k][name]), seed=s, k=k, **keys))
                g_row = _agg(E, f"graph_{name}", gv, keys, k=k)
                g_se = float(gv.std(ddof=1) / math.sqrt(gv.size)) if gv.size > 1 else math.inf
                b1 = sum(r[(k, name)][0] for _, r in bok)
                b2 = sum(r[(k, name)][1] for _, r in bok)
                bm = b1 / ntot
                b_se = math.sqrt(max(b2 / ntot - bm * bm, 0.0) / max(ntot - 1, 1))
                rows.append(g_row)
                rows.append(ResultRow(experiment=E, statistic=f"brw_{name}", estimate=bm,
                                      half_width=1.96 * b_se, n_reps=ntot,
                                      censored_fraction=cens, k=k, **keys))
                comb = math.hypot(g_se, b_se)
                rows.append(ResultRow(experiment=E, statistic=f"diff_{name}",
                                      estimate=g_row.estimate - bm, half_width=1.96 * comb,
                                      n_reps=len(gok), censored_fraction=cens, k=k, **keys))
                rows.append(ResultRow(experiment=E, statistic=f"z_{name}",
                                      estimate=z_score(g_row.estimate, g_se, bm, b_se),
                                      n_reps=len(gok), censored_fraction=cens, k=k, **keys))
    return RunResult(rows, partial, _reasons(reasons))


# ------------------------------------------------------------------ coupling audit

@_guarded
def _coupling_job(p, mode, vs, seed, reps, max_particles):
    root = Stream(seed)
    inc = kv = kc = cens = 0
    comp_sizes = 0.0
    proj_sizes = 0.0
    for r in range(reps):
        v = vs[r % len(vs)]
        try:
            cr = coupled_realization(p, v, (v, p.n), mode, root.spawn(r),
                                     caps=TreeCaps(max_particles=max_particles))
        except RuntimeError:
            cens += 1
            continue
        inc += cr.inclusion_violations
        kv += cr.kernel_violations
        kc += cr.kernel_checks
        comp_sizes += len(cr.component)
        proj_sizes += len(cr.projection)
    done = max(reps - cens, 1)
    return {"inclusion_violations": inc, "kernel_violations": kv, "kernel_checks": kc,
            "censored": cens, "reps": reps, "mean_component_size": comp_sizes / done,
            "mean_projection_size": proj_sizes / done}


def run_coupling_audit(config: ExperimentConfig, threads: int = 1) -> RunResult:
    rows: list[ResultRow] = []
    partial = False
    reasons: list[str] = []
    E = "coupling_audit"
    for p in config.cells():
        keys = _cell_keys(p)
        for mode in config.modes:
            dl = _deadline(config)
            res = _map(_coupling_job, [(dl, p, mode, tuple(config.v), s, config.reps,
                                        config.caps.max_particles) for s in config.seeds],
                       threads)
            ok, bad = _split(list(zip(config.seeds, res)))
            if bad:
                partial = True
                rows.append(_partial_row(E, dict(keys), len(ok), len(config.seeds), bad,
                                         reasons))
            if not ok:
                continue
            reps = sum(r["reps"] for _, r in ok)
            cens = sum(r["censored"] for _, r in ok) / reps
            for stat in ("inclusion_violations", "kernel_violations", "kernel_checks"):
                for s, r in ok:
                    rows.append(ResultRow(experiment=E, statistic=stat, estimate=float(r[stat]),
                                          seed=s, mode=mode, n_reps=r["reps"],
                                          censored_fraction=r["censored"] / r["reps"], **keys))
                rows.append(ResultRow(experiment=E, statistic=stat,
                                      estimate=float(sum(r[stat] for _, r in ok)), mode=mode,
                                      n_reps=reps, censored_fraction=cens, **keys))
            for stat in ("mean_component_size", "mean_projection_size"):
                rows.append(_agg(E, stat, [r[stat] for _, r in ok], keys, mode=mode,
                                 n_reps=reps, censored_fraction=cens))
    return RunResult(rows, partial, _reasons(reasons))


# ------------------------------------------------------------------ verify

def run_verify(config: ExperimentConfig, threads: int = 1) -> RunResult:
    from .verify import run_suite
    rows = []
    seed = config.seeds[0]
    checks = run_suite(seed, reps=config.reps if config.reps > 1000 else 200_000)
    for c in checks:
        rows.append(ResultRow(experiment="verify", statistic=c.name, estimate=c.value,
                              seed=seed, passed=c.passed))
    failed = sum(not r.passed for r in rows)
    table = [{"statistic": c.name, "estimate": c.value, "reference": c.reference,
              "passed": c.passed} for c in sorted(checks, key=lambda c: c.name)]
    return RunResult(rows, False, {"checks_failed": failed, "checks_total": len(rows),
                                   "checks": table})


# ------------------------------------------------------------------ gen

@_guarded
def _gen_job(p, seed, path, max_edges):
    g = sample_graph(p, seed, retain_edges=True, max_edges=max_edges)
    write_edge_list(g, path)
    comp = components(g)
    return {"n_edges": float(g.n_edges), "largest": float(comp.largest),
            "susceptibility": susceptibility(comp), "path": path}


def run_gen(config: ExperimentConfig, threads: int = 1, prefix: str | None = None) -> RunResult:
    rows: list[ResultRow] = []
    partial = False
    reasons: list[str] = []
    prefix = config.output if prefix is None else prefix
    files = []
    for p in config.cells():
        keys = _cell_keys(p)
        dl = _deadline(config)
        jobs = []
        for s in config.seeds:
            tag = f"g{p.gamma:g}_n{p.n}_b{keys['beta']:.6g}_s{s}"
            jobs.append((dl, p, s, f"{prefix}_{tag}.edges", config.caps.max_edges))
        res = _map(_gen_job, jobs, threads)
        ok, bad = _split(list(zip(config.seeds, res)))
        if bad:
            partial = True
            rows.append(_partial_row("gen", keys, len(ok), len(config.seeds), bad, reasons))
        for s, r in ok:
            files.append(r["path"])
            for stat in ("n_edges", "largest", "susceptibility"):
                rows.append(ResultRow(experiment="gen", statistic=stat, estimate=r[stat],
                                      seed=s, **keys))
    return RunResult(rows, partial, {"edge_files": sorted(files), **_reasons(reasons)})


RUNNERS = {
    "window_scan": run_window_scan, "tail": run_tail, "susceptibility": run_susceptibility,
    "local_limit": run_local_limit, "coupling_audit": run_coupling_audit,
    "verify": run_verify, "gen": run_gen,
}
