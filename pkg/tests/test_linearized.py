import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdecutoff.gaussian import GaussianLaw, tv_normal
from sdecutoff.linearized import (law_at, limit_law, linearized_distance,
                                  profile_convergence)
from sdecutoff.potentials import quadratic, quartic
from sdecutoff.semiflow import integrate_semiflow


def ou_distance(alpha, eps, y0, t):
    law = GaussianLaw(y0 * math.exp(-alpha * t),
                      eps * (1 - math.exp(-2 * alpha * t)) / (2 * alpha))
    return tv_normal(law, GaussianLaw(0.0, eps / (2 * alpha)))


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(0.3, 3.0), t=st.floats(0.05, 8.0), y0=st.floats(-3, 3).filter(lambda y: abs(y) > 1e-6))
def test_quadratic_law_is_ou_marginal(alpha, t, y0):
    eps = 1e-2
    tr = integrate_semiflow(quadratic(alpha), 1.0, 8.0, t_eval=[t])
    law = law_at(tr, eps, y0, t)
    assert law.mean == pytest.approx(y0 * math.exp(-alpha * t), rel=1e-8, abs=1e-14)
    assert law.var == pytest.approx(eps * (1 - math.exp(-2 * alpha * t)) / (2 * alpha),
                                    rel=1e-8)
    assert linearized_distance(tr, eps, y0, t) == pytest.approx(
        ou_distance(alpha, eps, y0, t), abs=1e-8)


def test_first_order_mode_uses_flow_displacement():
    tr = integrate_semiflow(quartic(), 1.0, 4.0, t_eval=[1.0])
    law = law_at(tr, 1e-2, 0.0, 1.0, mode="first-order")
    assert law.mean == pytest.approx(tr.psi_at(1.0), rel=1e-12)
    assert law.var == pytest.approx(1e-2 * tr.var_factor_at(1.0), rel=1e-12)


def test_limit_law():
    g = limit_law(2.0, 1e-3)
    assert g.mean == 0.0 and g.var == pytest.approx(2.5e-4)


def test_quadratic_profile_error_small():
    tab = profile_convergence(quadratic(), 1.0, 1.0, 0.5, [1e-6], np.linspace(-6, 6, 121))
    assert tab.sup_error[1e-6] < 1e-3


def test_quartic_profile_errors_decrease():
    eps = [1e-2, 1e-3, 1e-4]
    for mode in ("linearized", "first-order"):
        tab = profile_convergence(quartic(), 1.0, 1.0, 0.5, eps,
                                  np.linspace(-3, 3, 25), mode=mode)
        errs = [tab.sup_error[e] for e in eps]
        assert errs[0] > errs[1] > errs[2]


def test_infeasible_rows_flagged():
    tab = profile_convergence(quartic(), 1.0, 1.0, 0.5, [1e-2], [-8.0, 0.0])
    valid = {r[1]: r[5] for r in tab.rows}
    assert not valid[-8.0] and valid[0.0]
