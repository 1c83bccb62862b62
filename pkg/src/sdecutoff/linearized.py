"""Exact Gaussian laws of the linearized process and their distance curves.

Two conventions are supported:

* ``"linearized"``: ``dy = -V''(psi_t) y dt + sqrt(eps) dW`` from ``y0 != 0``,
  so ``y_t ~ N(Phi_t y0, eps Phi_t^2 I_t)``. The profile constant is ``c``.
* ``"first-order"``: ``z_t = psi_t + sqrt(eps) y_t`` with ``y0 = 0``, so
  ``z_t ~ N(psi_t, eps Phi_t^2 I_t)``. The profile constant is ``c~``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ScheduleError
from .gaussian import GaussianLaw, profile, schedule, tv_normal
from .potentials import PotentialSpec
from .semiflow import SemiflowTrajectory, integrate_semiflow, limit_constants

MODES = ("linearized", "first-order")


@dataclass(frozen=True)
class LinearLaw:
    """Mean and variance of the linear process at time ``t``; ``var`` is 0 only at ``t = 0``."""

    t: float
    mean: float
    var: float
    epsilon: float
    y0: float
    mode: str

    def gaussian(self) -> GaussianLaw:
        return GaussianLaw(self.mean, self.var)


@dataclass
class DistanceSeries:
    """Distances of the time-``t`` law to the limit law.

    ``convention`` is ``"linearized"``, ``"first-order"`` or ``"general"``.
    """

    times: np.ndarray
    values: np.ndarray
    convention: str
    b: np.ndarray | None = None
    G: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def sup_error(self) -> float:
        if self.G is None:
            raise ValueError("no profile attached to this series")
        return float(np.max(np.abs(self.values - self.G)))


def _check_mode(mode, y0):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if mode == "linearized" and y0 == 0:
        raise ValueError("linearized mode needs y0 != 0 (use first-order mode)")


def law_at(traj: SemiflowTrajectory, epsilon: float, y0: float, t: float,
           mode: str = "linearized") -> LinearLaw:
    """Law of the linear process at time ``t``.

    Raises:
        TrajectoryRangeError: ``t`` outside the trajectory.
        ValueError: ``y0 == 0`` in linearized mode.
    """
    _check_mode(mode, y0)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    t = float(t)
    if t == 0:
        mean = traj.x0 if mode == "first-order" else y0
        return LinearLaw(0.0, float(mean), 0.0, epsilon, y0, mode)
    vf = float(traj.var_factor_at(t))
    if mode == "first-order":
        mean = float(traj.psi_at(t))
    else:
        mean = float(traj.phi_at(t)) * y0
    return LinearLaw(t, mean, epsilon * vf, epsilon, y0, mode)


def limit_law(v2: float, epsilon: float) -> GaussianLaw:
    return GaussianLaw(0.0, epsilon / (2.0 * v2))


def linearized_distance(traj: SemiflowTrajectory, epsilon: float, y0: float,
                        t: float, mode: str = "linearized") -> float:
    """TV between the time-``t`` law and ``N(0, eps / (2 V''(0)))``."""
    if not t > 0:
        raise ValueError("distance needs t > 0")
    law = law_at(traj, epsilon, y0, t, mode)
    return tv_normal(law.gaussian(), limit_law(traj.v2, epsilon))


@dataclass
class ProfileTable:
    """Rows ``(eps, b, t, d, G, valid)`` and the sup error per noise level."""

    rows: list
    sup_error: dict
    constant: float
    mode: str

    columns = ("epsilon", "b", "t", "distance", "G", "valid")

    def as_array(self) -> np.ndarray:
        return np.array([[r[0], r[1], r[2], r[3], r[4], float(r[5])]
                         for r in self.rows])


def profile_convergence(p: PotentialSpec, x0: float, y0: float, gamma: float,
                        eps_list, b_grid, mode: str = "linearized",
                        shifted_window: bool = False,
                        tol: float = 1e-11) -> ProfileTable:
    """``d^eps(t_eps(b))`` against ``G(b)`` over a grid of ``(eps, b)``.

    Rows whose scheduled time is not positive are flagged invalid and
    excluded from the sup error. ``shifted_window`` evaluates at
    ``t_eps + b (w_eps + eps^gamma)`` instead.
    """
    _check_mode(mode, y0)
    b_grid = np.asarray(b_grid, dtype=float)
    consts = limit_constants(p, x0, tol=max(tol, 1e-10))
    v2 = consts.v2
    constant = consts.c if mode == "linearized" else consts.c_tilde

    scheds = []
    for eps in eps_list:
        if mode == "linearized":
            s = schedule(v2, eps, gamma, "linearized", y0=y0)
        else:
            s = schedule(v2, eps, gamma, "first-order")
        times = s.t_star(b_grid) if shifted_window else s.t(b_grid)
        scheds.append((eps, s, np.asarray(times)))
    all_t = np.concatenate([t[t > 0] for _, _, t in scheds])
    if all_t.size == 0:
        raise ScheduleError("no scheduled time is positive")
    t_end = float(all_t.max()) + max(s.window + s.delta for _, s, _ in scheds)
    traj = integrate_semiflow(p, x0, t_end, tol=tol, t_eval=np.unique(all_t))

    G = profile(b_grid, constant)
    rows, sup = [], {}
    for eps, _, times in scheds:
        errs = []
        for b, t, g in zip(b_grid, times, G):
            if t <= 0:
                rows.append((eps, float(b), float(t), math.nan, float(g), False))
                continue
            d = linearized_distance(traj, eps, y0, t, mode)
            rows.append((eps, float(b), float(t), d, float(g), True))
            errs.append(abs(d - g))
        sup[eps] = max(errs) if errs else math.nan
    return ProfileTable(rows, sup, float(constant), mode)
