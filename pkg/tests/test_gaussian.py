import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdecutoff.errors import ScheduleError
from sdecutoff.gaussian import (GaussianLaw, kl_normal, profile, schedule,
                                tv_normal, tv_unit)

means = st.floats(-20, 20, allow_nan=False)
variances = st.floats(1e-3, 1e3)


@pytest.mark.parametrize("mu, expected", [
    (2.0, 0.682689492137085897170),
    (1.0, 0.382924922548026207275),
    (0.1, 0.0398776116767449231926),
])
def test_tv_unit_oracle(mu, expected):
    assert tv_unit(mu) == pytest.approx(expected, abs=1e-14)


def test_tv_normal_unequal_variance_oracle():
    d = tv_normal(GaussianLaw(0.0, 1.0), GaussianLaw(0.3, 2.0))
    assert d == pytest.approx(0.186679732519340982553, abs=1e-12)


def test_kl_normal_closed_form():
    assert kl_normal(GaussianLaw(1.0, 1.0), GaussianLaw(0.0, 1.0)) == pytest.approx(0.5)
    assert kl_normal(GaussianLaw(0.0, 2.0), GaussianLaw(0.0, 2.0)) == 0.0


def test_kl_normal_nearly_identical_laws():
    assert kl_normal(GaussianLaw(0.0, 1.0), GaussianLaw(1e-8, 1.0)) == pytest.approx(5e-17)
    x = 1e-6
    expected = 0.5 * (x - math.log1p(x))
    assert kl_normal(GaussianLaw(0.0, 1.0 + x), GaussianLaw(0.0, 1.0)) == pytest.approx(
        expected, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(mu=means)
def test_tv_unit_bounded_by_linear_term(mu):
    assert 0.0 <= tv_unit(mu) <= abs(mu) / math.sqrt(2 * math.pi) + 1e-15
    assert tv_unit(mu) == tv_unit(-mu)


@settings(max_examples=200, deadline=None)
@given(m1=means, v1=variances, m2=means, v2=variances,
       shift=means, scale=st.floats(0.01, 100))
def test_tv_affine_invariance(m1, v1, m2, v2, shift, scale):
    a, b = GaussianLaw(m1, v1), GaussianLaw(m2, v2)
    ta = GaussianLaw(scale * m1 + shift, scale ** 2 * v1)
    tb = GaussianLaw(scale * m2 + shift, scale ** 2 * v2)
    assert tv_normal(ta, tb) == pytest.approx(tv_normal(a, b), abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(m1=means, v1=variances, m2=means, v2=variances, m3=means, v3=variances)
def test_tv_is_a_metric(m1, v1, m2, v2, m3, v3):
    a, b, c = GaussianLaw(m1, v1), GaussianLaw(m2, v2), GaussianLaw(m3, v3)
    assert tv_normal(a, a) == 0.0
    assert tv_normal(a, b) == pytest.approx(tv_normal(b, a), abs=1e-12)
    assert 0.0 <= tv_normal(a, b) <= 1.0
    assert tv_normal(a, c) <= tv_normal(a, b) + tv_normal(b, c) + 1e-10


@settings(max_examples=200, deadline=None)
@given(m1=means, v1=variances, m2=means, v2=variances)
def test_pinsker(m1, v1, m2, v2):
    a, b = GaussianLaw(m1, v1), GaussianLaw(m2, v2)
    assert tv_normal(a, b) <= math.sqrt(kl_normal(a, b) / 2) + 1e-10


@settings(max_examples=100, deadline=None)
@given(m=means, v=variances)
def test_tv_continuous_in_parameters(m, v):
    a = GaussianLaw(m, v)
    b = GaussianLaw(m + 1e-9 * math.sqrt(v), v * (1 + 1e-9))
    assert tv_normal(a, b) < 1e-8


def test_profile_shape():
    b = np.linspace(-8, 8, 161)
    g = profile(b, 0.7)
    assert np.all(np.diff(g) <= 0)
    assert np.all(np.diff(g[g < 1 - 1e-12]) < 0)
    assert g[0] > 1 - 1e-12 and g[-1] < 1e-3
    assert profile(0.0, -0.7) == profile(0.0, 0.7)
    with pytest.raises(ValueError):
        profile(0.0, 0.0)


def test_schedule_values():
    s = schedule(1.0, 1e-4)
    assert s.t_cut == pytest.approx(0.5 * (math.log(1e4) + math.log(2)), rel=1e-14)
    assert s.t_cut == pytest.approx(4.951744, abs=1e-6)
    assert s.window == pytest.approx(1.01)
    assert schedule(2.0, 1e-2).t_cut == pytest.approx(1.497866, abs=1e-6)
    assert float(s.t_star(1.0)) == pytest.approx(s.t_cut + 1.0 + 2 * s.delta)
    lin = schedule(1.0, 1e-2, mode="linearized", y0=2.0)
    assert lin.t_cut == pytest.approx(0.5 * math.log(800.0))
    assert lin.window == 1.0


def test_schedule_rejects_bad_inputs():
    with pytest.raises(ValueError):
        schedule(-1.0, 1e-2)
    with pytest.raises(ValueError):
        schedule(1.0, 1e-2, gamma=1.0)
    with pytest.raises(ValueError):
        schedule(1.0, 1e-2, mode="linearized")
    with pytest.raises(ScheduleError):
        schedule(1.0, 0.5).check([-5.0])
