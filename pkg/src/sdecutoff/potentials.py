"""One-dimensional potentials, their classification, and smooth truncation.

A :class:`PotentialSpec` bundles four evaluators ``V, V', V'', V'''``. All of
them accept scalars or numpy arrays. Builtins carry exact classification
metadata; user-defined potentials are classified by probing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import integrate

from .errors import NonFiniteResultError, NotCoerciveError, NotRegularError

Evaluator = Callable[[np.ndarray], np.ndarray]

ZERO_TOL = 1e-12


@dataclass(frozen=True)
class Classification:
    """Where a potential sits in the regular > coercive > smooth-coercive hierarchy.

    ``method`` is ``"exact"`` for builtin metadata, ``"construction"`` for
    truncated potentials and ``"probe"`` for probe-based checks. Probe-based
    records are only sound on the probed set.
    """

    regular: bool
    coercive: bool
    smooth_coercive: bool
    delta: float | None
    kappa2: float
    kappa3: float
    method: str
    interval: tuple[float, float] | None = None
    reasons: tuple[str, ...] = ()

    @property
    def strongest(self) -> str:
        if self.smooth_coercive:
            return "smooth-coercive"
        if self.coercive:
            return "coercive"
        if self.regular:
            return "regular"
        return "none"


@dataclass(frozen=True)
class PotentialSpec:
    name: str
    derivs: tuple[Evaluator, Evaluator, Evaluator, Evaluator]
    params: Mapping[str, float] = field(default_factory=dict)
    exact: Classification | None = None

    def eval(self, x, order: int = 0):
        """Evaluate the ``order``-th derivative at ``x`` (scalar or array)."""
        if order not in (0, 1, 2, 3):
            raise ValueError(f"derivative order must be 0..3, got {order!r}")
        scalar = np.ndim(x) == 0
        xa = np.asarray(x, dtype=float)
        out = np.asarray(self.derivs[order](xa), dtype=float)
        if out.shape != xa.shape:
            out = np.broadcast_to(out, xa.shape).copy()
        if not np.all(np.isfinite(out)):
            raise NonFiniteResultError(
                f"{self.name}: non-finite V^({order}) at x={x!r}")
        return float(out) if scalar else out

    def __call__(self, x):
        return self.eval(x, 0)

    def d1(self, x):
        return self.eval(x, 1)

    def d2(self, x):
        return self.eval(x, 2)

    def d3(self, x):
        return self.eval(x, 3)


def evaluate(p: PotentialSpec, x, order: int):
    return p.eval(x, order)


# -- builtins ---------------------------------------------------------------

def quadratic(alpha: float = 1.0) -> PotentialSpec:
    """``V(x) = alpha x^2 / 2``; the Ornstein-Uhlenbeck potential."""
    if not alpha > 0:
        raise ValueError("quadratic potential needs alpha > 0")
    a = float(alpha)
    cls = Classification(True, True, True, a, a, 0.0, "exact")
    return PotentialSpec(
        "quadratic",
        (lambda x: 0.5 * a * x * x,
         lambda x: a * x,
         lambda x: np.full_like(x, a),
         lambda x: np.zeros_like(x)),
        {"alpha": a},
        cls,
    )


def quartic() -> PotentialSpec:
    """``V(x) = x^2/2 + x^4/4``: coercive with delta = 1, unbounded V''."""
    cls = Classification(True, True, False, 1.0, math.inf, math.inf, "exact")
    return PotentialSpec(
        "quartic",
        (lambda x: 0.5 * x**2 + 0.25 * x**4,
         lambda x: x + x**3,
         lambda x: 1.0 + 3.0 * x**2,
         lambda x: 6.0 * x),
        {},
        cls,
    )


def double_well(a: float = 1.0, tilt: float = 0.0) -> PotentialSpec:
    """``V(x) = (x^2 - a^2)^2 / 4 + tilt * x``. Never regular."""
    a2 = float(a) ** 2
    s = float(tilt)
    cls = Classification(
        False, False, False, None, math.inf, math.inf, "exact",
        reasons=("V''(0) = -a^2 < 0", "V(0) != 0"))
    return PotentialSpec(
        "double-well",
        (lambda x: 0.25 * (x * x - a2) ** 2 + s * x,
         lambda x: x * (x * x - a2) + s,
         lambda x: 3.0 * x * x - a2,
         lambda x: 6.0 * x),
        {"a": float(a), "tilt": s},
        cls,
    )


def custom(name: str, v: Evaluator, dv: Evaluator, d2v: Evaluator,
           d3v: Evaluator, params: Mapping[str, float] | None = None) -> PotentialSpec:
    """User-defined potential; classification will be probe-based."""
    return PotentialSpec(name, (v, dv, d2v, d3v), dict(params or {}), None)


def shifted(p: PotentialSpec, x_star: float) -> PotentialSpec:
    """Recentre at ``x_star``: ``u -> V(x_star + u) - V(x_star)``."""
    xs = float(x_star)
    v0 = p.eval(xs, 0)
    f0, f1, f2, f3 = p.derivs
    return PotentialSpec(
        f"{p.name}@{xs:g}",
        (lambda u: f0(xs + u) - v0,
         lambda u: f1(xs + u),
         lambda u: f2(xs + u),
         lambda u: f3(xs + u)),
        {**p.params, "x_star": xs},
        None,
    )


# -- classification -----------------------------------------------------------

def classify(p: PotentialSpec, probe_interval: Sequence[float] = (-10.0, 10.0),
             n_probes: int = 1001) -> Classification:
    """Classify ``p`` from probes on ``probe_interval`` plus checks at 0.

    Builtins (``p.exact`` set) take their class from the metadata; the
    empirical ``delta``/``kappa`` values are still the probe extrema.
    Failing the regularity checks yields ``strongest == "none"`` with the
    reasons listed; use :func:`ensure_regular` to turn that into an error.
    """
    a, b = map(float, probe_interval)
    if not a < b:
        raise ValueError("probe interval needs a < b")
    if n_probes < 3:
        raise ValueError("need at least 3 probes")
    xs = np.linspace(a, b, int(n_probes))
    d1 = p.eval(xs, 1)
    d2 = p.eval(xs, 2)
    d3 = p.eval(xs, 3)
    delta_hat = float(d2.min())
    k2_hat = float(np.abs(d2).max())
    k3_hat = float(np.abs(d3).max())

    reasons = []
    if abs(p.eval(0.0, 0)) > ZERO_TOL:
        reasons.append("V(0) != 0")
    if abs(p.eval(0.0, 1)) > ZERO_TOL:
        reasons.append("V'(0) != 0")
    if not p.eval(0.0, 2) > 0:
        reasons.append("V''(0) <= 0")
    nz = np.abs(xs) > 1e-9
    if np.any(np.sign(d1[nz]) != np.sign(xs[nz])):
        reasons.append("V' vanishes or changes sign away from 0")

    if p.exact is not None:
        e = p.exact
        return Classification(
            e.regular, e.coercive, e.smooth_coercive,
            delta_hat if e.coercive else None, k2_hat, k3_hat,
            e.method, (a, b), e.reasons or tuple(reasons))

    regular = not reasons
    coercive = regular and delta_hat > 0
    return Classification(
        regular, coercive, coercive,
        delta_hat if coercive else None, k2_hat, k3_hat,
        "probe", (a, b), tuple(reasons))


def ensure_regular(p: PotentialSpec, interval: Sequence[float] | None = None,
                   n_probes: int = 401) -> None:
    """Raise :class:`NotRegularError` unless ``p`` is regular on ``interval``.

    With ``interval=None`` only the conditions at the origin are checked.
    """
    problems = []
    if abs(p.eval(0.0, 0)) > ZERO_TOL:
        problems.append("V(0) != 0")
    if abs(p.eval(0.0, 1)) > ZERO_TOL:
        problems.append("V'(0) != 0")
    if not p.eval(0.0, 2) > 0:
        problems.append("V''(0) <= 0")
    if interval is not None:
        lo, hi = min(interval), max(interval)
        xs = np.linspace(lo, hi, n_probes)
        xs = xs[np.abs(xs) > 1e-12]
        if xs.size and np.any(np.sign(p.eval(xs, 1)) != np.sign(xs)):
            problems.append(f"V' has a zero other than 0 on [{lo:g}, {hi:g}]")
    if problems:
        raise NotRegularError(f"{p.name} is not regular: " + ", ".join(problems))


def coercivity_constant(p: PotentialSpec) -> float:
    """The delta of a coercive potential, from exact or construction metadata."""
    if p.exact is None or not p.exact.coercive or p.exact.delta is None:
        raise NotCoerciveError(f"{p.name} has no known coercivity constant")
    return float(p.exact.delta)


# -- smooth truncation --------------------------------------------------------

def _bump(s):
    s = np.asarray(s, dtype=float)
    pos = s > 0
    return np.where(pos, np.exp(-1.0 / np.where(pos, s, 1.0)), 0.0)


def smooth_step(u):
    """C-infinity step: 0 for ``u <= 1/2``, 1 for ``u >= 1``, increasing between."""
    a = _bump(np.asarray(u, dtype=float) - 0.5)
    b = _bump(1.0 - np.asarray(u, dtype=float))
    return a / (a + b)


def smooth_step_deriv(u):
    u = np.asarray(u, dtype=float)
    sa, sb = u - 0.5, 1.0 - u
    a, b = _bump(sa), _bump(sb)
    # e'(s) = e(s) / s^2 for s > 0
    da = np.where(sa > 0, a / np.where(sa > 0, sa, 1.0) ** 2, 0.0)
    db = np.where(sb > 0, b / np.where(sb > 0, sb, 1.0) ** 2, 0.0)
    return (da * b + a * db) / (a + b) ** 2


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


class _Truncation:
    """Cumulative integrals of R_M over the transition band, per side."""

    def __init__(self, p: PotentialSpec, delta: float, M: float,
                 n_nodes: int = 64, tol: float = 1e-10):
        self.p, self.delta, self.M = p, delta, M
        self.r0, self.r1 = math.sqrt(2.0) * M, 2.0 * M
        self.step = (self.r1 - self.r0) / n_nodes
        self.sides = {}
        for side in (1.0, -1.0):
            xk = side * (self.r0 + self.step * np.arange(n_nodes + 1))
            S = np.empty(n_nodes + 1)
            W = np.empty(n_nodes + 1)
            S[0] = p.eval(xk[0], 1)
            W[0] = p.eval(xk[0], 0)
            for k in range(n_nodes):
                a, b = xk[k], xk[k + 1]
                r_int, _ = integrate.quad(self.R, a, b, epsabs=tol * 1e-3,
                                          epsrel=tol, limit=200)
                m_int, _ = integrate.quad(lambda y: (b - y) * self.R(y), a, b,
                                          epsabs=tol * 1e-3, epsrel=tol, limit=200)
                S[k + 1] = S[k] + r_int
                W[k + 1] = W[k] + S[k] * (b - a) + m_int
            self.sides[side] = (xk, S, W)

    def R(self, x):
        x = np.asarray(x, dtype=float)
        g = smooth_step(x * x / (4.0 * self.M**2))
        return g * self.delta + (1.0 - g) * self.p.derivs[2](x)

    def R_prime(self, x):
        x = np.asarray(x, dtype=float)
        u = x * x / (4.0 * self.M**2)
        g = smooth_step(u)
        dg = smooth_step_deriv(u) * x / (2.0 * self.M**2)
        return dg * (self.delta - self.p.derivs[2](x)) + (1.0 - g) * self.p.derivs[3](x)

    def band(self, x, side):
        """S_M and V_M at points ``x`` inside the band on one side."""
        xk, S, W = self.sides[side]
        k = np.clip(np.floor((np.abs(x) - self.r0) / self.step).astype(int),
                    0, len(xk) - 2)
        a = xk[k]
        half = 0.5 * (x - a)
        ys = a[:, None] + half[:, None] * (_GL_NODES[None, :] + 1.0)
        rv = self.R(ys) * _GL_WEIGHTS[None, :] * half[:, None]
        s_val = S[k] + rv.sum(axis=1)
        v_val = W[k] + S[k] * (x - a) + (rv * (x[:, None] - ys)).sum(axis=1)
        return s_val, v_val

    def values(self, x, order):
        x = np.asarray(x, dtype=float)
        shape = x.shape
        x = x.ravel()
        out = np.empty_like(x)
        ax = np.abs(x)
        inner = ax <= self.r0
        if order == 2:
            out[:] = self.R(x)
            out[inner] = self.p.derivs[2](x[inner])
            return out.reshape(shape)
        if order == 3:
            out[:] = self.R_prime(x)
            out[inner] = self.p.derivs[3](x[inner])
            out[ax >= self.r1] = 0.0
            return out.reshape(shape)
        out[inner] = self.p.derivs[order](x[inner])
        for side in (1.0, -1.0):
            on = (np.sign(x) == side) & ~inner
            mid = on & (ax < self.r1)
            outer = on & (ax >= self.r1)
            if mid.any():
                s_val, v_val = self.band(x[mid], side)
                out[mid] = v_val if order == 0 else s_val
            if outer.any():
                xk, S, W = self.sides[side]
                d = x[outer] - xk[-1]
                if order == 0:
                    out[outer] = W[-1] + S[-1] * d + 0.5 * self.delta * d * d
                else:
                    out[outer] = S[-1] + self.delta * d
        return out.reshape(shape)


def smooth_truncate(p: PotentialSpec, M: float, delta: float | None = None,
                    tol: float = 1e-10) -> PotentialSpec:
    """Smooth-coercive ``V_M`` equal to ``V`` on ``|x| <= sqrt(2) M``.

    ``V_M'' = g(x^2/4M^2) delta + (1 - g) V''`` and ``V_M(0) = V_M'(0) = 0``,
    so ``V_M'' = delta`` for ``|x| >= 2M``. ``delta`` defaults to the
    coercivity constant in ``p``'s metadata.
    """
    if not M >= 1.0:
        raise ValueError("truncation radius M must be >= 1")
    if delta is None:
        delta = coercivity_constant(p)
    if not delta > 0:
        raise NotCoerciveError("coercivity constant must be positive")
    ensure_regular(p)
    tr = _Truncation(p, float(delta), float(M), tol=tol)

    probe = np.linspace(-2.0 * M, 2.0 * M, 8001)
    k2 = float(np.abs(tr.values(probe, 2)).max())
    k3 = float(np.abs(tr.values(probe, 3)).max())
    k2 = max(k2, float(delta))
    cls = Classification(True, True, True, float(delta), k2, k3, "construction")
    return PotentialSpec(
        f"{p.name}|M={M:g}",
        (lambda x: tr.values(x, 0),
         lambda x: tr.values(x, 1),
         lambda x: tr.values(x, 2),
         lambda x: tr.values(x, 3)),
        {**p.params, "M": float(M), "delta": float(delta)},
        cls,
    )


BUILTINS = {
    "quadratic": (lambda alpha=1.0: quadratic(alpha)),
    "quartic": (lambda: quartic()),
    "double_well": (lambda a=1.0, tilt=0.0: double_well(a, tilt)),
}
_ALIASES = {"ou": "quadratic", "quartic-coercive": "quartic",
            "double-well": "double_well", "doublewell": "double_well"}


def builtin(name: str, **params) -> PotentialSpec:
    """Look up a builtin potential by config id.

    Raises:
        KeyError: unknown id.
        TypeError: parameters the builtin does not take.
    """
    key = _ALIASES.get(name.lower(), name.lower())
    if key not in BUILTINS:
        raise KeyError(f"unknown potential {name!r}")
    return BUILTINS[key](**params)
