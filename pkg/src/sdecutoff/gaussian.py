"""Closed-form total variation / KL between Gaussians, the profile G and cut-off schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, ndtr

from .errors import ScheduleError

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class GaussianLaw:
    mean: float
    var: float

    def __post_init__(self):
        if not (self.var > 0 and math.isfinite(self.var)):
            raise ValueError(f"Gaussian variance must be positive, got {self.var!r}")
        if not math.isfinite(self.mean):
            raise ValueError("Gaussian mean must be finite")

    @property
    def std(self) -> float:
        return math.sqrt(self.var)

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.std
        return np.exp(-0.5 * z * z) / (self.std * math.sqrt(2.0 * math.pi))

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mean) / self.std)

    def mass(self, a, b):
        """P(a < X < b), computed on the tail that avoids cancellation."""
        za = (a - self.mean) / self.std
        zb = (b - self.mean) / self.std
        if za > 0:
            return float(ndtr(-za) - ndtr(-zb))
        return float(ndtr(zb) - ndtr(za))


def tv_unit(mu):
    """TV distance between N(mu, 1) and N(0, 1): ``erf(|mu| / (2 sqrt 2))``."""
    m = np.asarray(mu, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("tv_unit needs a finite mean")
    out = erf(np.abs(m) / (2.0 * SQRT2))
    return float(out) if np.ndim(mu) == 0 else out


def _crossings(a: GaussianLaw, b: GaussianLaw):
    """Roots of ln f_a = ln f_b, returned sorted (exactly two when variances differ)."""
    A = 0.5 / b.var - 0.5 / a.var
    B = a.mean / a.var - b.mean / b.var
    C = 0.5 * b.mean**2 / b.var - 0.5 * a.mean**2 / a.var + 0.5 * math.log(b.var / a.var)
    disc = B * B - 4.0 * A * C
    if disc <= 1e-14 * max(B * B, abs(4.0 * A * C), 1e-300):
        return None
    sq = math.sqrt(disc)
    q = -0.5 * (B + math.copysign(sq, B))
    r1 = q / A
    r2 = C / q if q != 0 else -r1
    return sorted((r1, r2))


def tv_normal(a: GaussianLaw, b: GaussianLaw) -> float:
    """Exact total variation distance between two Gaussian laws."""
    rel = abs(a.var - b.var) / max(a.var, b.var)
    if rel <= 1e-14:
        return tv_unit(abs(a.mean - b.mean) / math.sqrt(0.5 * (a.var + b.var)))
    roots = _crossings(a, b)
    if roots is None:
        return tv_unit(abs(a.mean - b.mean) / math.sqrt(0.5 * (a.var + b.var)))
    r1, r2 = roots
    # the narrower law dominates between the crossings
    narrow, wide = (a, b) if a.var < b.var else (b, a)
    return max(0.0, min(1.0, narrow.mass(r1, r2) - wide.mass(r1, r2)))


def kl_normal(a: GaussianLaw, b: GaussianLaw) -> float:
    """Kullback-Leibler divergence H(a | b)."""
    # r - 1 - ln r with x = r - 1, kept apart from the mean term to avoid cancellation
    x = (a.var - b.var) / b.var
    if abs(x) < 1e-4:
        var_term = x * x * (0.5 - x / 3.0 + x * x / 4.0)
    else:
        var_term = x - math.log1p(x)
    return 0.5 * (var_term + (a.mean - b.mean) ** 2 / b.var)


def profile(b, constant: float):
    """The cut-off profile ``G(b) = TV(N(constant e^{-b}, 1), N(0, 1))``."""
    if constant == 0 or not math.isfinite(constant):
        raise ValueError("profile constant must be finite and nonzero "
                         "(a zero constant means the start point was 0)")
    return tv_unit(abs(constant) * np.exp(-np.asarray(b, dtype=float)))


@dataclass(frozen=True)
class CutoffSchedule:
    """Cut-off time ``t_eps``, window ``w_eps`` and ``delta_eps = eps^gamma``.

    ``mode`` is ``"general"`` (window includes delta), ``"linearized"``
    (window ``1/V''(0)``, time shifted by ``ln y0^2``) or ``"local"``
    (metastable-well variant with no ``ln(2 V'')`` term in the time).
    """

    curvature: float
    epsilon: float
    gamma: float
    mode: str
    t_cut: float
    window: float
    delta: float
    y0: float | None = None

    def t(self, b):
        """``t_eps(b) = t_eps + b w_eps``."""
        return self.t_cut + np.asarray(b, dtype=float) * self.window

    def t_star(self, b):
        """``t*_eps(b) = t_eps + b (w_eps + delta_eps)``."""
        return self.t_cut + np.asarray(b, dtype=float) * (self.window + self.delta)

    def check(self, b_values, star: bool = False) -> None:
        times = np.atleast_1d(self.t_star(b_values) if star else self.t(b_values))
        bad = np.atleast_1d(np.asarray(b_values, dtype=float))[times <= 0]
        if bad.size:
            raise ScheduleError(
                f"eps={self.epsilon:g} too large: cut-off time not positive for "
                f"b in {bad.tolist()}")


def schedule(v2_at_min: float, epsilon: float, gamma: float = 0.5,
             mode: str = "general", y0: float | None = None) -> CutoffSchedule:
    if not v2_at_min > 0:
        raise ValueError("curvature at the minimum must be positive")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    a = float(v2_at_min)
    delta = epsilon ** gamma
    log_inv = math.log(1.0 / epsilon)
    if mode == "general":
        t_cut = (log_inv + math.log(2.0 * a)) / (2.0 * a)
        window = 1.0 / a + delta
    elif mode == "linearized":
        if y0 is None or y0 == 0:
            raise ValueError("linearized schedule needs y0 != 0")
        t_cut = (log_inv + math.log(2.0 * a * y0 * y0)) / (2.0 * a)
        window = 1.0 / a
    elif mode == "first-order":
        t_cut = (log_inv + math.log(2.0 * a)) / (2.0 * a)
        window = 1.0 / a
    elif mode == "local":
        t_cut = log_inv / (2.0 * a)
        window = 1.0 / a + delta
    else:
        raise ValueError(f"unknown schedule mode {mode!r}")
    return CutoffSchedule(a, float(epsilon), float(gamma), mode, t_cut, window,
                          delta, y0)
