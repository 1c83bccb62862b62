"""Density evolution for ``dx = -V'(x) dt + sqrt(eps) dW``.

The forward equation ``p_t = (V' p + (eps/2) p_x)_x`` is discretized by
vertex-centred finite volumes with Chang-Cooper (Scharfetter-Gummel)
fluxes, which make ``exp(-2V/eps)`` an exact discrete steady state and keep
densities positive, and Crank-Nicolson in time. The end cells are half
cells, so the discrete mass is the trapezoid sum and is conserved exactly
by zero-flux boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack
from scipy.optimize import brentq

from .errors import GridError, NotCoerciveError
from .gaussian import GaussianLaw
from .linearized import DistanceSeries
from .potentials import PotentialSpec, classify

LEVEL = 20.0  # domain edges sit where V rises LEVEL * eps above its anchor
NEG_TOL = 1e-12
MASS_TOL = 1e-10
TINY = 1e-250


@dataclass
class DensityGrid:
    """Density values on uniform nodes; ``mass`` is the trapezoid sum."""

    x: np.ndarray
    p: np.ndarray
    t: float = 0.0

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def mass(self) -> float:
        return trapezoid(self.p, self.h)

    def mean(self) -> float:
        return trapezoid(self.x * self.p, self.h) / self.mass


@dataclass
class StationaryDensity(DensityGrid):
    """``exp(-2V/eps) / M`` on a grid.

    ``log_normalizer`` is ``ln M``; ``normalizer`` may overflow for tiny eps.
    """

    log_normalizer: float = 0.0
    epsilon: float = 0.0

    @property
    def normalizer(self) -> float:
        return math.exp(self.log_normalizer)


def trapezoid(y, h: float) -> float:
    y = np.asarray(y, dtype=float)
    return float(h * (y.sum() - 0.5 * (y[0] + y[-1])))


def bernoulli(z):
    """``z / (exp(z) - 1)`` with the removable singularity at 0."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-8
    zs = z[~small]
    out[~small] = zs / np.expm1(zs)
    out[small] = 1.0 - 0.5 * z[small]
    return out


def _gibbs(V, epsilon, h):
    w = np.exp(-2.0 * (V - V.min()) / epsilon)
    total = trapezoid(w, h)
    return w / total, math.log(total) - 2.0 * V.min() / epsilon


def stationary_on(p: PotentialSpec, epsilon: float, x: np.ndarray,
                  check_tails: bool = True) -> StationaryDensity:
    x = np.asarray(x, dtype=float)
    h = float(x[1] - x[0])
    V = p.eval(x, 0)
    dens, logM = _gibbs(V, epsilon, h)
    if check_tails:
        # Laplace estimate of the mass beyond each edge
        Vmin = V.min()
        tails = 0.0
        for xe, s in ((x[0], -1.0), (x[-1], 1.0)):
            slope = s * p.eval(xe, 1)
            if slope <= 0:
                raise GridError(f"V not increasing outward at {xe:g}; widen the domain")
            tails += math.exp(-2.0 * (p.eval(xe, 0) - Vmin) / epsilon) * epsilon / (2 * slope)
        if tails / trapezoid(np.exp(-2.0 * (V - Vmin) / epsilon), h) > 1e-12:
            raise GridError("stationary tail mass beyond the grid exceeds 1e-12; enlarge L")
    return StationaryDensity(x=x, p=dens, t=math.inf, log_normalizer=logM,
                             epsilon=epsilon)


def _level_root(p, anchor, direction, rise, limit=1e6):
    """First point beyond ``anchor`` (moving in ``direction``) where V - V(anchor) = rise."""
    v0 = p.eval(anchor, 0)
    step = max(1e-3, 0.1 * abs(anchor))
    lo, hi = anchor, anchor + direction * step
    while p.eval(hi, 0) - v0 < rise:
        lo, hi = hi, anchor + 2 * (hi - anchor)
        if abs(hi) > limit:
            raise GridError("potential does not grow fast enough to bound the domain")
    return brentq(lambda x: p.eval(x, 0) - v0 - rise, min(lo, hi), max(lo, hi),
                  xtol=1e-14, rtol=1e-12)


def stationary_density(p: PotentialSpec, epsilon: float, L: float | None = None,
                       n: int | None = None) -> StationaryDensity:
    """Normalized Gibbs density on ``[-L, L]``.

    By default ``L`` reaches the level ``V = 40 eps`` on both sides and the
    spacing resolves ``sqrt(eps / (2 V''(0)))`` by 60 nodes.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if L is None:
        L = max(abs(_level_root(p, 0.0, s, 2 * LEVEL * epsilon)) for s in (-1, 1))
    if n is None:
        sigma = math.sqrt(epsilon / (2 * max(p.eval(0.0, 2), 1e-12)))
        n = int(min(max(2 * L / (sigma / 60) + 1, 1001), 200001))
    return stationary_on(p, epsilon, np.linspace(-L, L, n))


@dataclass
class FPControls:
    """Resolution knobs for :func:`evolve`.

    ``domain`` overrides the automatic ``[lo, hi]``; ``reflecting`` relaxes
    the boundary-leakage check (the basin edge is then a deliberate wall).
    """

    points_per_sigma: float = 160.0
    h: float | None = None
    dt: float | None = None
    domain: tuple[float, float] | None = None
    reflecting: bool = False
    max_nodes: int = 400001


@dataclass
class EvolveResult:
    snapshots: list
    stationary: StationaryDensity
    dt: float
    h: float
    mass_drift: float
    min_value: float
    diagnostics: dict = field(default_factory=dict)


def default_domain(p: PotentialSpec, epsilon: float, x0: float, h: float,
                   level: float = LEVEL):
    """``[lo, hi]`` bracketing both the start point and the stationary bulk."""
    rise = level * epsilon
    s = 1.0 if x0 >= 0 else -1.0
    far = _level_root(p, x0, s, rise) if x0 != 0 else _level_root(p, 0.0, s, rise)
    far = x0 + s * max(abs(far - x0), 40 * h)
    near = _level_root(p, 0.0, -s, rise)
    return (min(far, near), max(far, near))


def _operator(V, epsilon, h):
    """Diagonals ``(sub, main, sup)`` of the generator ``A`` with ``vol * dp/dt = A p``.

    Column sums vanish, so the trapezoid mass is conserved.
    """
    D = 0.5 * epsilon
    z = np.diff(V) / D
    k = D / h
    right = k * bernoulli(z)      # coefficient of p_i in the flux i -> i+1
    left = k * bernoulli(-z)      # coefficient of p_{i+1}
    main = np.zeros(V.size)
    main[:-1] -= right
    main[1:] -= left
    return right, main, left


class _CrankNicolson:
    """One factorized Crank-Nicolson step for a tridiagonal generator."""

    def __init__(self, diags, vol, dt):
        sub, main, sup = diags
        self.sub, self.main, self.sup = 0.5 * dt * sub, 0.5 * dt * main, 0.5 * dt * sup
        self.vol = vol
        dl, d, du, du2, ipiv, info = lapack.dgttrf(-self.sub, vol - self.main, -self.sup)
        if info != 0:
            raise GridError("Crank-Nicolson matrix is singular")
        self._lu = (dl, d, du, du2, ipiv)

    def __call__(self, p):
        r = (self.vol + self.main) * p
        r[:-1] += self.sup * p[1:]
        r[1:] += self.sub * p[:-1]
        out, info = lapack.dgttrs(*self._lu, r, overwrite_b=1)
        # subnormal tails slow the arithmetic by an order of magnitude
        out[np.abs(out) < TINY] = 0.0
        return out


def evolve(p: PotentialSpec, epsilon: float, x0: float, times,
           controls: FPControls | None = None, initial=None) -> EvolveResult:
    """Density of ``x^eps_t`` started near ``x0``, recorded at ``times``.

    Args:
        initial: optional callable mapping grid nodes to an initial density
            (normalized here); ``x0`` then only anchors the default domain.

    Raises:
        GridError: negativity below -1e-12, mass drift above 1e-10 per unit
            time, or density reaching the domain edge.
    """
    c = controls or FPControls()
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be non-negative and sorted")
    if c.h is not None:
        h = c.h
    else:
        sigma = math.sqrt(epsilon / (2 * p.eval(0.0, 2))) if p.eval(0.0, 2) > 0 else math.sqrt(epsilon)
        h = sigma / c.points_per_sigma
    lo, hi = c.domain if c.domain is not None else default_domain(p, epsilon, x0, h)
    if not lo < x0 < hi:
        raise GridError(f"x0={x0:g} outside the domain [{lo:g}, {hi:g}]")
    n = int(math.ceil((hi - lo) / h)) + 1
    if n > c.max_nodes:
        raise GridError(f"grid would need {n} nodes (> {c.max_nodes})")
    x = np.linspace(lo, hi, n)
    h = float(x[1] - x[0])

    V = p.eval(x, 0)
    dV = np.abs(p.eval(x, 1))
    dt_max = c.dt if c.dt is not None else 0.5 * min(h / max(dV.max(), 1e-300),
                                                     h * h / epsilon)
    A = _operator(V, epsilon, h)
    vol = np.full(n, h)
    vol[0] = vol[-1] = 0.5 * h

    if initial is None:
        # Dirac surrogate: Gaussian of width 2h
        dens = np.exp(-0.5 * ((x - x0) / (2.0 * h)) ** 2)
    else:
        dens = np.array(initial(x), dtype=float)
        if dens.shape != x.shape or np.any(dens < 0) or not np.all(np.isfinite(dens)):
            raise GridError("initial density must be finite and non-negative on the grid")
    dens[dens < TINY] = 0.0
    dens /= trapezoid(dens, h)
    mass0 = trapezoid(dens, h)

    snaps, t = [], 0.0
    cache = {}
    min_val = float(dens.min())
    for target in times:
        span = target - t
        if span > 0:
            nsteps = int(math.ceil(span / dt_max * (1 - 1e-12)))
            dt = span / nsteps
            key = round(dt / dt_max, 12)
            if key not in cache:
                cache = {key: _CrankNicolson(A, vol, dt)}
            step = cache[key]
            for _ in range(nsteps):
                dens = step(dens)
            t = float(target)
            mv = float(dens.min())
            min_val = min(min_val, mv)
            if mv < -NEG_TOL:
                raise GridError(f"negative density {mv:.3e} at t={t:g}")
            drift = abs(trapezoid(dens, h) - mass0)
            if drift > MASS_TOL * max(t, 1.0):
                raise GridError(f"mass drift {drift:.3e} by t={t:g}")
        if not c.reflecting and max(dens[0], dens[-1]) >= 1e-12:
            raise GridError(f"density reaches the domain edge at t={t:g}; "
                            "enlarge the domain")
        snaps.append(DensityGrid(x=x, p=dens.copy(), t=float(target)))

    stat = stationary_on(p, epsilon, x, check_tails=not c.reflecting)
    return EvolveResult(snapshots=snaps, stationary=stat, dt=dt_max, h=h,
                        mass_drift=abs(trapezoid(dens, h) - mass0),
                        min_value=min_val,
                        diagnostics={"nodes": n, "domain": (lo, hi)})


def tv_grid(a: DensityGrid, b) -> float:
    """Half the L1 distance between a gridded density and a reference.

    ``b`` may be another grid on identical nodes or a :class:`GaussianLaw`;
    for a Gaussian the exact mass outside the grid is added.
    """
    if isinstance(b, GaussianLaw):
        q = b.pdf(a.x)
        outside = 1.0 - b.mass(a.x[0], a.x[-1])
        tail_a = max(0.0, 1.0 - a.mass)
        val = 0.5 * trapezoid(np.abs(a.p - q), a.h) + 0.5 * (outside + tail_a)
        return float(min(1.0, max(0.0, val)))
    if a.x.shape != b.x.shape or not np.allclose(a.x, b.x, rtol=0, atol=1e-12 * a.h):
        raise GridError("tv_grid needs identical grids")
    val = 0.5 * trapezoid(np.abs(a.p - b.p), a.h) + 0.5 * abs(a.mass - b.mass)
    return float(min(1.0, max(0.0, val)))


def _require_coercive(p: PotentialSpec):
    cls = p.exact if p.exact is not None else classify(p)
    if not cls.coercive:
        raise NotCoerciveError(f"{p.name} is not coercive")


def invariantes_gap(p: PotentialSpec, epsilon: float, n0: int = 2001,
                    stable_to: float = 1e-5, max_refine: int = 8) -> float:
    """TV between the Gibbs law and ``N(0, eps / (2 V''(0)))``.

    The grid is doubled until successive values agree to ``stable_to``.

    Raises:
        NotCoerciveError: ``p`` is not coercive.
        GridError: refinement did not settle.
    """
    _require_coercive(p)
    a = p.eval(0.0, 2)
    gauss = GaussianLaw(0.0, epsilon / (2 * a))
    L = max(max(abs(_level_root(p, 0.0, s, 2 * LEVEL * epsilon)) for s in (-1, 1)),
            14 * gauss.std)
    prev, n = None, n0
    for _ in range(max_refine):
        stat = stationary_on(p, epsilon, np.linspace(-L, L, n))
        val = tv_grid(stat, gauss)
        if prev is not None and abs(val - prev) < stable_to:
            return val
        prev, n = val, 2 * n - 1
    raise GridError("invariant-law gap did not stabilize under refinement")


def general_distance_curve(p: PotentialSpec, epsilon: float, x0: float,
                           sched, b_grid, controls: FPControls | None = None
                           ) -> DistanceSeries:
    """``D^eps(t*_eps(b))``: TV between the law of ``x^eps`` and the Gibbs law."""
    _require_coercive(p)
    b = np.sort(np.asarray(b_grid, dtype=float))
    sched.check(b, star=True)
    times = np.asarray(sched.t_star(b), dtype=float)
    res = evolve(p, epsilon, x0, times, controls)
    vals = np.array([tv_grid(s, res.stationary) for s in res.snapshots])
    return DistanceSeries(times=times, values=vals, convention="general", b=b,
                          meta={"h": res.h, "dt": res.dt,
                                "mass_drift": res.mass_drift,
                                **res.diagnostics})

