"""Local cut-off near the minima of a multi-well potential.

A well at ``x*`` is studied through the shifted potential
``V~(u) = V(x* + u) - V(x*)``, which is regular near 0. The density engine
is confined to the well's basin by a reflecting wall at the saddle, a
surrogate for conditioning on not having escaped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import PotentialError, ScheduleError
from .fokker_planck import FPControls, evolve, tv_grid, _level_root, LEVEL
from .gaussian import GaussianLaw, profile, schedule
from .monte_carlo import exit_time_stats
from .potentials import PotentialSpec, shifted
from .semiflow import limit_constants


@dataclass(frozen=True)
class WellDescriptor:
    """A strict local minimum.

    ``saddles`` holds the neighbouring maxima (``None`` where V keeps rising
    to the edge of the search domain) and ``barrier`` the height of the
    lower one above the well.
    """

    location: float
    curvature: float
    depth: float
    barrier: float
    saddles: tuple
    kind: str = "single"

    def basin(self, domain):
        lo = self.saddles[0] if self.saddles[0] is not None else domain[0]
        hi = self.saddles[1] if self.saddles[1] is not None else domain[1]
        return lo, hi


def find_wells(p: PotentialSpec, domain=(-5.0, 5.0), tol: float = 1e-12,
               n_probes: int = 4001) -> list:
    """All strict local minima of ``p`` on ``domain``, by bracketing ``V'``.

    Raises:
        PotentialError: no minimum, or a degenerate critical point.
    """
    lo, hi = domain
    xs = np.linspace(lo, hi, n_probes)
    d1 = p.eval(xs, 1)
    roots = []
    for i in range(n_probes - 1):
        a, b = d1[i], d1[i + 1]
        if a == 0.0:
            roots.append(xs[i])
        elif a * b < 0:
            roots.append(brentq(lambda x: p.eval(x, 1), xs[i], xs[i + 1],
                                xtol=tol, rtol=4 * np.finfo(float).eps))
    if d1[-1] == 0.0:
        roots.append(xs[-1])
    crit = []
    for r in roots:
        v2 = p.eval(r, 2)
        if abs(v2) < 1e-9:
            raise PotentialError(f"degenerate critical point at x={r:.6g}")
        crit.append((r, v2))
    minima = [r for r, v2 in crit if v2 > 0]
    maxima = [r for r, v2 in crit if v2 < 0]
    if not minima:
        raise PotentialError(f"no local minimum of {p.name} on [{lo:g}, {hi:g}]")

    wells = []
    for m in minima:
        left = max((x for x in maxima if x < m), default=None)
        right = min((x for x in maxima if x > m), default=None)
        vm = p.eval(m, 0)
        heights = [p.eval(s, 0) - vm for s in (left, right) if s is not None]
        wells.append(dict(location=float(m), curvature=float(p.eval(m, 2)),
                          depth=float(vm), barrier=min(heights) if heights else math.inf,
                          saddles=(left, right)))
    if len(wells) == 2:
        d0, d1_ = wells[0]["depth"], wells[1]["depth"]
        if abs(d0 - d1_) <= 1e-12 * max(1.0, abs(d0)):
            kinds = ("equal", "equal")
        elif d0 < d1_:
            kinds = ("deep", "shallow")
        else:
            kinds = ("shallow", "deep")
    else:
        kinds = ("single",) * len(wells)
    return [WellDescriptor(kind=k, **w) for w, k in zip(wells, kinds)]


@dataclass
class LocalTable:
    """Rows of the local experiment plus the constants behind them."""

    rows: list
    constants: dict
    escape: dict
    warnings: list = field(default_factory=list)

    columns = ("epsilon", "b", "t", "tv", "G", "escape_fraction",
               "center_mode", "schedule_variant", "constant_variant", "valid")

    def sup_error(self, epsilon, b_range=None, **variant) -> float:
        errs = []
        for r in self.rows:
            rec = dict(zip(self.columns, r))
            if rec["epsilon"] != epsilon or not rec["valid"]:
                continue
            if any(rec[k] != v for k, v in variant.items()):
                continue
            if b_range is not None and not b_range[0] <= rec["b"] <= b_range[1]:
                continue
            errs.append(abs(rec["tv"] - rec["G"]))
        return max(errs) if errs else math.nan


def local_schedule(v2: float, epsilon: float, gamma: float, variant: str):
    """``"general"`` keeps the ``ln(2 V''(x*))`` term, ``"local"`` drops it."""
    mode = {"general": "general", "local": "local"}[variant]
    return schedule(v2, epsilon, gamma, mode)


def local_cutoff_experiment(p: PotentialSpec, well: WellDescriptor, x0: float,
                            gamma: float, eps_list, b_grid,
                            center_modes=("at_xstar",),
                            schedule_variants=("general",),
                            constant_variants=("c_tilde",),
                            domain=(-5.0, 5.0),
                            controls: FPControls | None = None,
                            escape_paths: int = 1000, escape_seed: int = 0,
                            escape_dt: float = 1e-3,
                            escape_b: float = 8.0,
                            conditioned: bool = True) -> LocalTable:
    """Local distance curves for every requested variant.

    For each noise level the density started at ``x0`` is evolved inside
    the basin (reflecting wall at the saddle) and compared with
    ``N(center, eps / (2 V''(x*)))`` at ``t_eps + b w_eps``. The profile uses the
    constant of the shifted potential started from ``x0 - x*``: ``c_tilde``
    (the flow constant) or ``c`` (the fundamental-solution constant).
    Rows are flagged invalid when more than 1% of simulated paths leave the
    basin before ``t*_eps(escape_b)``. With ``conditioned=False`` the density
    evolves on the whole line (all wells, no wall) instead.
    """
    xs = well.location
    a = well.curvature
    u0 = x0 - xs
    lo_b, hi_b = well.basin(domain)
    if not lo_b < x0 < hi_b:
        raise ValueError("x0 must lie inside the well's basin")
    tilde = shifted(p, xs)
    cons = limit_constants(tilde, u0)
    constants = {"c_tilde": cons.c_tilde, "c": cons.c, "curvature": a,
                 "location": xs}
    b_grid = np.sort(np.asarray(b_grid, dtype=float))
    radius = min(xs - lo_b, hi_b - xs)

    rows, escape, warns = [], {}, []
    base = controls or FPControls()
    for eps in eps_list:
        # the wall sits at the saddle; the far side is bounded by a level set
        h = math.sqrt(eps / (2 * a)) / base.points_per_sigma if base.h is None else base.h
        if well.saddles[1] is None:
            far = _level_root(p, x0 if x0 > xs else xs, 1.0, LEVEL * eps)
            dom = (lo_b, max(far, x0 + 40 * h))
        elif well.saddles[0] is None:
            far = _level_root(p, x0 if x0 < xs else xs, -1.0, LEVEL * eps)
            dom = (min(far, x0 - 40 * h), hi_b)
        else:
            dom = (lo_b, hi_b)
        if not conditioned:
            locs = [w.location for w in find_wells(p, domain)]
            dom = (min(_level_root(p, min(locs + [x0]), -1.0, LEVEL * eps), x0 - 40 * h),
                   max(_level_root(p, max(locs + [x0]), 1.0, LEVEL * eps), x0 + 40 * h))
        ctl = FPControls(points_per_sigma=base.points_per_sigma, h=h,
                         dt=base.dt, domain=dom, reflecting=conditioned,
                         max_nodes=base.max_nodes)
        for sv in schedule_variants:
            sch = local_schedule(a, eps, gamma, sv)
            horizon = float(sch.t_star(escape_b))
            key = (eps, sv)
            if escape_paths > 0:
                st = exit_time_stats(p, well, eps, radius, horizon, escape_paths,
                                     escape_seed, dt=escape_dt, x0=x0)
                escape[key] = st.escape_fraction
            else:
                escape[key] = math.nan
            ok_escape = not (escape[key] >= 0.01)
            if not ok_escape:
                warns.append(f"eps={eps:g} ({sv}): escape fraction "
                             f"{escape[key]:.3g} >= 1%; rows flagged invalid")
            times = np.asarray(sch.t(b_grid), dtype=float)
            valid_t = times > 0
            if not valid_t.any():
                raise ScheduleError(f"no positive scheduled time at eps={eps:g}")
            res = evolve(p, eps, x0, times[valid_t], ctl)
            snaps = iter(res.snapshots)
            target = GaussianLaw(0.0, eps / (2 * a))
            for b, t, ok in zip(b_grid, times, valid_t):
                snap = next(snaps) if ok else None
                for cm in center_modes:
                    center = xs if cm == "at_xstar" else 0.0
                    law = GaussianLaw(center, target.var)
                    tv = tv_grid(snap, law) if ok else math.nan
                    for cv in constant_variants:
                        G = float(profile(b, constants[cv]))
                        rows.append((eps, float(b), float(t), tv, G, escape[key],
                                     cm, sv, cv, bool(ok and ok_escape)))
    return LocalTable(rows=rows, constants=constants, escape=escape, warnings=warns)
