"""Deterministic gradient flow, its fundamental solution and limit constants.

The flow ``dpsi = -V'(psi) dt`` is integrated in the variable ``ln|psi|``
with an embedded Dormand-Prince 5(4) pair, so the relative accuracy of
``psi`` survives its exponential decay. The fundamental solution is read off
the quotient identity ``Phi_t = V'(psi_t) / V'(x0)`` and
``I_t = int_0^t Phi_s^-2 ds`` is accumulated step by step with compensated
summation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from .errors import IntegrationError, TrajectoryRangeError
from .gaussian import schedule as make_schedule
from .potentials import PotentialSpec, ensure_regular

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass(frozen=True)
class SemiflowTrajectory:
    """Samples of the flow started at ``x0``.

    ``var_factor`` is ``Phi_t^2 I_t``; the linear process started from a
    point has variance ``eps * var_factor``.
    """

    x0: float
    v2: float
    t: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    I: np.ndarray
    var_factor: np.ndarray
    dlog_psi: np.ndarray
    dlog_phi: np.ndarray
    dvar_factor: np.ndarray
    tol: float

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.t_end * (1 + 1e-12)):
            raise TrajectoryRangeError(
                f"t outside trajectory range [0, {self.t_end:g}]")
        return t

    def psi_at(self, t):
        t = self._check(t)
        spl = CubicHermiteSpline(self.t, np.log(np.abs(self.psi)), self.dlog_psi)
        return np.sign(self.x0) * np.exp(spl(t))

    def phi_at(self, t):
        t = self._check(t)
        spl = CubicHermiteSpline(self.t, np.log(self.phi), self.dlog_phi)
        return np.exp(spl(t))

    def var_factor_at(self, t):
        t = self._check(t)
        return CubicHermiteSpline(self.t, self.var_factor, self.dvar_factor)(t)


def _initial_step(f, y0, tol):
    f0 = f(y0)
    d0 = abs(y0) / (tol + tol * abs(y0)) + 1e-300
    d1 = abs(f0) / (tol + tol * abs(y0)) + 1e-300
    h0 = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
    return min(h0, 0.1)


def integrate_semiflow(p: PotentialSpec, x0: float, t_end: float,
                       tol: float = 1e-10, t_eval=None,
                       max_step: float = 0.25) -> SemiflowTrajectory:
    """Integrate ``dpsi = -V'(psi) dt`` from ``x0`` on ``[0, t_end]``.

    Every accepted step is recorded; times in ``t_eval`` are hit exactly.

    Raises:
        IntegrationError: step-size underflow.
        NotRegularError: ``V'`` vanishes between 0 and ``x0``.
    """
    if x0 == 0:
        raise ValueError("x0 must be nonzero")
    if not t_end > 0 or not tol > 0:
        raise ValueError("need t_end > 0 and tol > 0")
    ensure_regular(p, (0.0, x0))
    sgn = math.copysign(1.0, x0)
    dV = p.derivs[1]
    d2V = p.derivs[2]
    v2 = p.eval(0.0, 2)
    dv0 = p.eval(x0, 1)

    def rhs(u):
        psi = sgn * math.exp(u)
        return -float(dV(psi)) / psi

    def g_of(u):
        # Phi^-2 from the quotient identity
        return (dv0 / float(dV(sgn * math.exp(u)))) ** 2

    stops = np.unique(np.append(np.asarray(t_eval if t_eval is not None else [],
                                           dtype=float), t_end))
    stops = stops[(stops > 0) & (stops <= t_end)]
    # stops closer than rounding would force a sub-ulp step; keep the later one
    keep = np.append(np.diff(stops) > 1e-12 * np.maximum(1.0, stops[1:]), True)
    stops = stops[keep]

    t, u = 0.0, math.log(abs(x0))
    I, comp = 0.0, 0.0
    ts, us, Is = [t], [u], [I]
    h = _initial_step(rhs, u, tol)
    k = np.empty(7)
    gk = np.empty(7)
    si = 0
    while si < len(stops):
        target = stops[si]
        h = min(h, max_step, target - t)
        if h < 1e-14 * max(1.0, t):
            raise IntegrationError(f"step size underflow at t={t:g}")
        k[0] = rhs(u)
        gk[0] = g_of(u)
        for i in range(1, 7):
            ui = u + h * np.dot(_A[i], k[:i])
            k[i] = rhs(ui)
            gk[i] = g_of(ui)
        u_new = u + h * np.dot(_B5, k)
        dI = h * np.dot(_B5, gk)
        err_u = h * np.dot(_E, k) / (tol + tol * max(abs(u), abs(u_new)))
        err_I = h * np.dot(_E, gk) / (tol + tol * abs(I + dI))
        err = math.sqrt(0.5 * (err_u**2 + err_I**2))
        if not math.isfinite(err):
            h *= 0.2
            continue
        if err <= 1.0:
            t = target if abs(t + h - target) <= 1e-13 * max(1.0, target) else t + h
            u = u_new
            # Kahan summation: Phi^-2 grows like exp(2 V''(0) t)
            yk = dI - comp
            tmp = I + yk
            comp = (tmp - I) - yk
            I = tmp
            ts.append(t)
            us.append(u)
            Is.append(I)
            if t >= target:
                si += 1
            fac = 0.9 * err ** -0.2 if err > 0 else 5.0
            h *= min(5.0, max(0.2, fac))
        else:
            h *= max(0.2, 0.9 * err ** -0.2)

    t_arr = np.array(ts)
    psi = sgn * np.exp(np.array(us))
    dvp = p.eval(psi, 1)
    phi = dvp / dv0
    I_arr = np.array(Is)
    d2 = np.asarray(d2V(psi), dtype=float)
    vf = phi**2 * I_arr
    if np.any(np.abs(psi) > abs(x0) * (1 + 1e-8)):
        raise TrajectoryRangeError("flow left the interval between 0 and x0")
    return SemiflowTrajectory(
        x0=float(x0), v2=float(v2), t=t_arr, psi=psi, phi=phi, I=I_arr,
        var_factor=vf,
        dlog_psi=-dvp / psi,
        dlog_phi=-d2,
        dvar_factor=-2.0 * d2 * vf + 1.0,
        tol=tol,
    )


def _aitken(f0, f1, f2):
    d1, d2 = f1 - f0, f2 - f1
    den = d2 - d1
    if den == 0 or abs(den) < 1e-300 or abs(d2) >= abs(d1):
        return f2
    return f2 - d2 * d2 / den


def variance_limit(traj: SemiflowTrajectory, rel_threshold: float = 1e-4):
    """``Phi_t^2 I_t`` at the final time and its extrapolated limit.

    The limit is ``1 / (2 V''(0))``.

    Raises:
        TrajectoryRangeError: the flow has not reached the linear regime.
    """
    if abs(traj.psi[-1]) >= rel_threshold * abs(traj.x0):
        raise TrajectoryRangeError(
            "trajectory too short: |psi_end| not below 1e-4 |x0|")
    T = traj.t_end
    step = min(1.0 / traj.v2, T / 4)
    f = traj.var_factor_at(np.array([T - 2 * step, T - step, T]))
    return float(traj.var_factor[-1]), float(_aitken(*f))


@dataclass(frozen=True)
class ConstantsReport:
    x0: float
    v2: float
    c_tilde: float
    c: float
    c_tilde_extrapolated: float
    c_extrapolated: float
    disagreement: float
    rel_disagreement: float
    variance_final: float
    variance_extrapolated: float
    t_end: float
    methods: tuple[str, str] = ("quadrature", "extrapolation")

    @property
    def variance_target(self) -> float:
        return 1.0 / (2.0 * self.v2)


def _make_H(p: PotentialSpec, small: float = 1e-4):
    v2 = p.eval(0.0, 2)
    v3 = p.eval(0.0, 3)
    hfd = 1e-3
    v4 = (p.eval(hfd, 3) - p.eval(-hfd, 3)) / (2 * hfd)
    beta = v3 / (2.0 * v2)
    gam = v4 / (6.0 * v2)
    dV = p.derivs[1]

    def H(z):
        if abs(z) < small:
            # V'(z) ~ V''(0) z (1 + beta z + gam z^2)
            return -(beta + gam * z) / (1.0 + beta * z + gam * z * z)
        return v2 / float(dV(z)) - 1.0 / z

    return H


def h_transform(p: PotentialSpec, x: float, tol: float = 1e-10) -> float:
    """``h(x) = x exp(int_0^x H)`` with ``H(z) = V''(0)/V'(z) - 1/z``."""
    H = _make_H(p)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(H, 0.0, x, epsabs=tol * 1e-2, epsrel=tol,
                                      limit=400)
        except integrate.IntegrationWarning as exc:
            raise IntegrationError(f"quadrature of H did not converge: {exc}") from exc
    return x * math.exp(val)


def limit_constants(p: PotentialSpec, x0: float, tol: float = 1e-10,
                    t_end: float | None = None) -> ConstantsReport:
    """The constants ``c~ = lim e^{V''(0) t} psi_t`` and ``c = lim e^{V''(0) t} Phi_t``.

    ``c~`` comes from quadrature of ``H``; ``c = V''(0) c~ / V'(x0)``. Both are
    cross-checked against the integrated flow at large ``t``.

    Raises:
        IntegrationError: quadrature failure or a cross-check disagreement
            above ``100 * tol``.
    """
    if x0 == 0:
        raise ValueError("x0 must be nonzero")
    ensure_regular(p, (0.0, x0))
    v2 = p.eval(0.0, 2)
    c_tilde = h_transform(p, x0, tol)
    c = v2 * c_tilde / p.eval(x0, 1)

    if t_end is None:
        # stop near |psi| ~ 1e-5 |x0|: Aitken removes the O(psi) correction,
        # and going further loses digits to cancellation in shifted potentials
        t_end = max(math.log(abs(c_tilde) / (1e-5 * abs(x0))) / v2, 3.0 / v2)
    step = 1.0 / v2
    times = np.array([t_end - 2 * step, t_end - step, t_end])
    traj = integrate_semiflow(p, x0, t_end, tol=min(tol, 1e-10), t_eval=times)
    psi = traj.psi_at(times)
    phi = traj.phi_at(times)
    scale = np.exp(v2 * times)
    ct_ext = _aitken(*(scale * psi))
    c_ext = _aitken(*(scale * phi))
    dis = max(abs(ct_ext - c_tilde), abs(c_ext - c))
    rel = max(abs(ct_ext - c_tilde) / abs(c_tilde), abs(c_ext - c) / abs(c))
    if dis > 100 * tol and rel > 100 * tol:
        raise IntegrationError(
            f"limit constants disagree: quadrature c~={c_tilde!r}, "
            f"flow c~={ct_ext!r} (|diff|={dis:.3e})")
    vf, vx = variance_limit(traj)
    return ConstantsReport(
        x0=float(x0), v2=float(v2), c_tilde=float(c_tilde), c=float(c),
        c_tilde_extrapolated=float(ct_ext), c_extrapolated=float(c_ext),
        disagreement=float(dis), rel_disagreement=float(rel),
        variance_final=vf, variance_extrapolated=vx, t_end=float(t_end))


def psi_ratio(p: PotentialSpec, x0: float, epsilon: float, b: float,
              gamma: float = 0.5, traj: SemiflowTrajectory | None = None) -> float:
    """``sup |psi_t| / sqrt(eps)`` over ``t`` between ``t_eps(b)`` and ``t*_eps(b)``.

    ``|psi|`` is monotone, so the sup sits at the earlier endpoint.
    """
    sch = make_schedule(p.eval(0.0, 2), epsilon, gamma, "general")
    sch.check([b])
    sch.check([b], star=True)
    t0 = float(min(sch.t(b), sch.t_star(b)))
    if traj is None or traj.t_end < t0:
        traj = integrate_semiflow(p, x0, t0 + 1.0, tol=1e-11, t_eval=[t0])
    return float(abs(traj.psi_at(t0)) / math.sqrt(epsilon))
