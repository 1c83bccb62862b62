"""Experiment runner: executes config cells and writes CSV tables plus a manifest."""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..doublewell import find_wells, local_cutoff_experiment
from ..errors import ConfigError, CutoffError
from ..fokker_planck import FPControls, evolve, general_distance_curve, tv_grid
from ..gaussian import GaussianLaw, profile, schedule, tv_normal
from ..linearized import law_at, profile_convergence
from ..monte_carlo import check_order_bounds, empirical_tv, simulate_coupled
from ..potentials import builtin, smooth_truncate
from ..semiflow import integrate_semiflow, limit_constants
from .config import ExperimentConfig

ANALYTIC_FP_TOL = 5e-3
MC_SE_FACTOR = 3.0
EXPERIMENTS = ("constants", "profile", "fp", "mc", "doublewell", "compare")


@dataclass
class RunManifest:
    config_hash: str
    version: str
    experiments: list
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.16e" % float(v)
    return str(v)


def write_csv(path, columns, rows, config_hash: str) -> None:
    """Comma-separated table; the first line names the producing config."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(format_value(v) for v in r) + "\n")


def _potential(cfg: ExperimentConfig):
    return builtin(cfg.potential, **cfg.params)


def _pmap(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# -- experiments ---------------------------------------------------------------

def exp_constants(cfg):
    r = limit_constants(_potential(cfg), cfg.x0)
    cols = ("x0", "v2", "c_tilde", "c", "c_tilde_extrapolated", "c_extrapolated",
            "disagreement", "variance_final", "variance_extrapolated",
            "variance_target")
    row = (r.x0, r.v2, r.c_tilde, r.c, r.c_tilde_extrapolated, r.c_extrapolated,
           r.disagreement, r.variance_final, r.variance_extrapolated,
           r.variance_target)
    return {"constants": (cols, [row])}, {"rel_disagreement": r.rel_disagreement}, []


def exp_profile(cfg):
    p = _potential(cfg)
    cols = ("mode", "epsilon", "b", "t", "distance", "G", "valid")
    rows, diag, warns = [], {}, []
    modes = ["first-order"] + (["linearized"] if cfg.y0 != 0 else [])
    for mode in modes:
        tab = profile_convergence(p, cfg.x0, cfg.y0 if mode == "linearized" else 0.0,
                                  cfg.gamma, cfg.epsilons, cfg.b_grid, mode=mode)
        rows += [(mode,) + tuple(r) for r in tab.rows]
        diag[mode] = {"constant": tab.constant,
                      "sup_error": {str(k): v for k, v in tab.sup_error.items()}}
        n_bad = sum(1 for r in tab.rows if not r[5])
        if n_bad:
            warns.append(f"{mode}: {n_bad} rows flagged (scheduled time not positive)")
    return {"profile": (cols, rows)}, diag, warns


def _fp_cell(args):
    cfg, eps = args
    p = _potential(cfg)
    a = p.eval(0.0, 2)
    sch = schedule(a, eps, cfg.gamma)
    b = np.sort(np.asarray(cfg.b_grid, dtype=float))
    ok = sch.t_star(b) > 0
    ct = limit_constants(p, cfg.x0).c_tilde
    G = profile(b, ct)
    ctl = FPControls(points_per_sigma=cfg.fp.points_per_sigma, dt=cfg.fp.dt)
    curve = general_distance_curve(p, eps, cfg.x0, sch, b[ok], ctl)
    vals = iter(curve.values)
    rows = []
    for bi, t, g, good in zip(b, sch.t_star(b), G, ok):
        rows.append((eps, bi, t, next(vals) if good else math.nan, g, bool(good)))
    sup = float(np.max(np.abs(curve.values - G[ok])))
    return rows, {"sup_error": sup, "nodes": curve.meta["nodes"],
                  "h": curve.meta["h"], "dt": curve.meta["dt"]}


def exp_fp(cfg):
    out = _pmap(_fp_cell, [(cfg, e) for e in cfg.epsilons], cfg.workers)
    rows, diag = [], {}
    for eps, (r, d) in zip(cfg.epsilons, out):
        rows += r
        diag[str(eps)] = d
    cols = ("epsilon", "b", "t_star", "distance", "G", "valid")
    return {"fp": (cols, rows)}, diag, []


def _mc_potential(cfg):
    p = _potential(cfg)
    if p.exact is not None and p.exact.smooth_coercive:
        return p
    return smooth_truncate(p, cfg.mc.truncate_M)


def _mc_cell(args):
    cfg, eps = args
    p = _mc_potential(cfg)
    e = simulate_coupled(p, eps, cfg.x0, cfg.mc.dt, cfg.mc.t_end, cfg.mc.n_paths,
                         cfg.mc.seed)
    rep = check_order_bounds(e, p.exact.kappa2, p.exact.kappa3)
    xt = e.x[:, -1]
    row = (eps, cfg.mc.n_paths, cfg.mc.dt, cfg.mc.t_end, rep.violations_zeroth,
           rep.violations_first, rep.min_margin_zeroth, rep.min_margin_first,
           rep.worst_residual_zeroth, rep.worst_residual_zeroth / math.sqrt(eps),
           rep.worst_residual_first, rep.max_slack, float(xt.mean()),
           float(xt.var(ddof=1)) if xt.size > 1 else 0.0)
    return row, rep.notes


def exp_mc(cfg):
    out = _pmap(_mc_cell, [(cfg, e) for e in cfg.epsilons], cfg.workers)
    cols = ("epsilon", "n_paths", "dt", "t_end", "violations_zeroth",
            "violations_first", "min_margin_zeroth", "min_margin_first",
            "worst_residual_zeroth", "worst_residual_zeroth_over_sqrt_eps",
            "worst_residual_first", "max_slack", "mean_x_end", "var_x_end")
    rows = [r for r, _ in out]
    notes = sorted({n for _, ns in out for n in ns})
    return {"mc": (cols, rows)}, {"potential": _mc_potential(cfg).name}, notes


def exp_doublewell(cfg):
    p = _potential(cfg)
    dw = cfg.doublewell
    wells = find_wells(p)
    well = min(wells, key=lambda w: abs(w.location - dw.well))
    tab = local_cutoff_experiment(
        p, well, dw.x0, cfg.gamma, cfg.epsilons, cfg.b_grid,
        center_modes=tuple(dw.center_modes),
        schedule_variants=tuple(dw.schedule_variants),
        constant_variants=tuple(dw.constant_variants),
        controls=FPControls(points_per_sigma=cfg.fp.points_per_sigma, dt=cfg.fp.dt),
        escape_paths=dw.escape_paths, escape_seed=cfg.mc.seed or 0,
        escape_dt=dw.escape_dt)
    diag = {"constants": tab.constants,
            "escape": {f"{k[0]}|{k[1]}": v for k, v in tab.escape.items()},
            "well": {"location": well.location, "curvature": well.curvature,
                     "barrier": well.barrier, "kind": well.kind}}
    warns = list(tab.warnings)
    warns.append("local distance reported for every (center, schedule, constant) "
                 "variant; none is singled out as canonical")
    return {"doublewell": (tab.columns, tab.rows)}, diag, warns


def _compare_cell(args):
    cfg, eps = args
    p = _potential(cfg)
    a = p.eval(0.0, 2)
    sch = schedule(a, eps, cfg.gamma)
    b = np.sort(np.asarray(cfg.b_grid, dtype=float))
    times = sch.t_star(b)
    keep = times > 0
    b, times = b[keep], times[keep]
    use_mc = "mc" in cfg.engines
    if use_mc:
        times = np.maximum(np.round(times / cfg.mc.dt), 1) * cfg.mc.dt
    out = {"b": b, "t": times}
    if "analytic" in cfg.engines:
        tr = integrate_semiflow(p, cfg.x0, float(times.max()) + 1.0, t_eval=times)
        lim = GaussianLaw(0.0, eps / (2 * a))
        out["analytic"] = np.array([
            tv_normal(law_at(tr, eps, 0.0, t, "first-order").gaussian(), lim)
            for t in times])
    snaps = None
    if "fp" in cfg.engines or use_mc:
        ctl = FPControls(points_per_sigma=cfg.fp.points_per_sigma, dt=cfg.fp.dt)
        res = evolve(p, eps, cfg.x0, times, ctl)
        snaps = res.snapshots
        out["fp"] = np.array([tv_grid(s, res.stationary) for s in snaps])
        coarse = evolve(p, eps, cfg.x0, times,
                        FPControls(points_per_sigma=cfg.fp.points_per_sigma / 2))
        out["fp_coarse"] = np.array([tv_grid(s, coarse.stationary)
                                     for s in coarse.snapshots])
    if use_mc:
        e = simulate_coupled(p, eps, cfg.x0, cfg.mc.dt, float(times.max()),
                             cfg.mc.tv_paths, cfg.mc.seed, record_times=times)
        est = [empirical_tv(e.at(t), s, seed=cfg.mc.seed) for t, s in zip(times, snaps)]
        out["mc_vs_fp"] = np.array([r.estimate for r in est])
        out["mc_stderr"] = np.array([r.stderr for r in est])
    return out


def compare_engines(cfg: ExperimentConfig):
    """Pairwise engine agreement on ``D^eps(t*_eps(b))``.

    analytic vs fp must agree to 5e-3; the mc sample must be within three
    bootstrap standard errors of the fp density.
    """
    if len(set(cfg.engines)) < 2:
        raise ConfigError(["compare needs at least two engines"])
    cells = _pmap(_compare_cell, [(cfg, e) for e in cfg.epsilons], cfg.workers)
    nan = [math.nan]
    cols = ("epsilon", "b", "t", "analytic", "fp", "fp_coarse", "mc_vs_fp",
            "mc_stderr")
    rows, report = [], {}
    for eps, c in zip(cfg.epsilons, cells):
        n = len(c["b"])
        get = lambda k: c.get(k, np.array(nan * n))
        for i in range(n):
            rows.append((eps, c["b"][i], c["t"][i], get("analytic")[i], get("fp")[i],
                         get("fp_coarse")[i], get("mc_vs_fp")[i], get("mc_stderr")[i]))
        rep = {}
        if "analytic" in c and "fp" in cfg.engines:
            dev = float(np.max(np.abs(c["analytic"] - c["fp"])))
            rep["analytic_fp"] = {"max_deviation": dev, "tolerance": ANALYTIC_FP_TOL,
                                  "pass": dev <= ANALYTIC_FP_TOL}
            if dev > ANALYTIC_FP_TOL:
                rep["analytic_fp"]["self_convergence"] = float(
                    np.max(np.abs(c["fp"] - c["fp_coarse"])))
        if "mc_vs_fp" in c:
            z = float(np.max(c["mc_vs_fp"] / c["mc_stderr"]))
            rep["fp_mc"] = {"max_estimate_over_stderr": z, "tolerance": MC_SE_FACTOR,
                            "pass": z <= MC_SE_FACTOR}
        report[str(eps)] = rep
    return (cols, rows), report


def exp_compare(cfg):
    table, report = compare_engines(cfg)
    warns = [f"eps={k}: {pair} failed" for k, r in report.items()
             for pair, v in r.items() if not v["pass"]]
    return {"compare": table}, report, warns


RUNNERS = {"constants": exp_constants, "profile": exp_profile, "fp": exp_fp,
           "mc": exp_mc, "doublewell": exp_doublewell, "compare": exp_compare}


def run(cfg: ExperimentConfig, experiments=("profile",), out: str | None = None,
        force: bool = False) -> RunManifest:
    """Run experiments and write ``<name>.csv`` tables plus a JSON manifest.

    An engine error aborts only the experiment that raised it; it is
    recorded in the manifest.

    Raises:
        ConfigError: unknown experiment, or outputs exist and ``force`` is off.
    """
    bad = [e for e in experiments if e not in RUNNERS]
    if bad:
        raise ConfigError([f"unknown experiment {e!r}" for e in bad])
    out = out or cfg.output
    os.makedirs(out, exist_ok=True)
    manifest = os.path.join(out, f"manifest_{'_'.join(experiments)}.json")
    names = [manifest] + [
        os.path.join(out, f"{e}.csv") for e in experiments]
    existing = [n for n in names if os.path.exists(n)]
    if existing and not force:
        raise ConfigError([f"{n} exists; pass --force to overwrite" for n in existing])

    h = cfg.hash()
    man = RunManifest(config_hash=h, version=__version__, experiments=list(experiments),
                      config=cfg.to_dict())
    for name in experiments:
        t0 = time.perf_counter()
        try:
            tables, diag, warns = RUNNERS[name](cfg)
        except CutoffError as exc:
            man.errors[name] = f"{type(exc).__name__}: {exc}"
            man.timings[name] = time.perf_counter() - t0
            continue
        # single serialized emitter
        for tname, (cols, rows) in tables.items():
            path = os.path.join(out, f"{tname}.csv")
            write_csv(path, cols, rows, h)
            man.outputs.append(path)
        man.diagnostics[name] = diag
        man.warnings += warns
        man.timings[name] = time.perf_counter() - t0
    with open(manifest, "w") as fh:
        json.dump(_jsonable(man.__dict__), fh, indent=2, sort_keys=True)
    return man


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
