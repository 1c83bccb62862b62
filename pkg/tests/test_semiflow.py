import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdecutoff.errors import TrajectoryRangeError
from sdecutoff.potentials import double_well, quadratic, quartic, shifted
from sdecutoff.semiflow import (h_transform, integrate_semiflow, limit_constants,
                                psi_ratio, variance_limit)


def quartic_psi(t):
    # closed-form flow of psi' = -psi - psi^3 from 1
    return 1.0 / math.sqrt(2.0 * math.exp(2.0 * t) - 1.0)


# (t, Phi_t, I_t) frozen from a 30-digit quadrature of the closed-form flow
QUARTIC_ORACLE = [
    (1.0, 0.144478887322478324622, 15.9047974557349463783),
    (3.0, 0.0176351615651906836878, 1576.45773925046357969),
]


def test_quartic_flow_matches_closed_form():
    tr = integrate_semiflow(quartic(), 1.0, 12.0, t_eval=[0.5, 1.0, 3.0, 10.0])
    for t in (0.5, 1.0, 3.0, 10.0):
        assert tr.psi_at(t) == pytest.approx(quartic_psi(t), rel=1e-8)
    assert tr.psi_at(10.0) < 5e-5


@pytest.mark.parametrize("t, phi, I", QUARTIC_ORACLE)
def test_quartic_phi_and_variance_factor(t, phi, I):
    tr = integrate_semiflow(quartic(), 1.0, 5.0, t_eval=[t])
    assert tr.phi_at(t) == pytest.approx(phi, rel=1e-8)
    assert tr.var_factor_at(t) == pytest.approx(phi * phi * I, rel=1e-8)


def test_quadratic_flow_is_exponential():
    tr = integrate_semiflow(quadratic(2.0), 1.5, 4.0, t_eval=[1.0, 4.0])
    assert tr.psi_at(4.0) == pytest.approx(1.5 * math.exp(-8.0), rel=1e-9)
    assert tr.phi_at(1.0) == pytest.approx(math.exp(-2.0), rel=1e-9)
    assert tr.var_factor_at(1.0) == pytest.approx((1 - math.exp(-4.0)) / 4.0, rel=1e-9)


def test_out_of_range_query():
    tr = integrate_semiflow(quartic(), 1.0, 2.0)
    with pytest.raises(TrajectoryRangeError):
        tr.psi_at(3.0)


@settings(max_examples=30, deadline=None)
@given(x0=st.floats(-3.0, 3.0).filter(lambda x: abs(x) > 0.05))
def test_energy_decays_along_flow(x0):
    p = quartic()
    tr = integrate_semiflow(p, x0, 6.0)
    v = p.eval(tr.psi, 0)
    assert np.all(np.diff(v) <= 1e-15)
    assert np.all(np.sign(tr.psi) == np.sign(x0))


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(0.2, 5.0), x0=st.floats(-4.0, 4.0).filter(lambda x: abs(x) > 1e-3))
def test_quadratic_constants_exact(alpha, x0):
    r = limit_constants(quadratic(alpha), x0)
    assert r.c_tilde == pytest.approx(x0, rel=1e-10)
    assert r.c == pytest.approx(1.0, rel=1e-10)


def test_quartic_constants():
    r = limit_constants(quartic(), 1.0)
    assert r.c_tilde == pytest.approx(2 ** -0.5, abs=1e-10)
    assert r.rel_disagreement < 1e-6
    assert abs(r.variance_final - 0.5) < 1e-4
    assert h_transform(quartic(), 1.0) == pytest.approx(2 ** -0.5, abs=1e-10)


def test_shifted_double_well_constant():
    # V~(u) = u^2 + u^3 + u^4/4 about x* = 1; h(u0) has a closed form
    p = shifted(double_well(), 1.0)
    u0 = 0.3
    exact = u0 * (1 + u0 / 2) / (1 + u0) ** 2
    r = limit_constants(p, u0)
    assert r.c_tilde == pytest.approx(exact, rel=1e-10)
    assert limit_constants(p, -0.5).c_tilde == pytest.approx(-0.5 * 0.75 / 0.25, rel=1e-10)


def test_variance_limit_quartic():
    tr = integrate_semiflow(quartic(), 1.0, 20.0)
    final, extrap = variance_limit(tr)
    assert final == pytest.approx(0.5, abs=1e-8)
    assert extrap == pytest.approx(0.5, abs=1e-8)


def test_psi_ratio_tends_to_constant():
    r = psi_ratio(quartic(), 1.0, 1e-4, 0.0)
    assert r == pytest.approx(0.50000625, rel=1e-6)
    # ratio psi / sqrt(eps) at t_eps(b) approaches c~ e^{-b} / sqrt(2 a)
    small = psi_ratio(quartic(), 1.0, 1e-8, 0.0)
    assert small == pytest.approx(2 ** -0.5 / math.sqrt(2.0), rel=1e-4)
