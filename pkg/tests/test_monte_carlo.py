import math

import numpy as np
import pytest

from sdecutoff.doublewell import find_wells
from sdecutoff.errors import SimulationError
from sdecutoff.gaussian import GaussianLaw, tv_unit
from sdecutoff.monte_carlo import (check_order_bounds, empirical_tv,
                                   exit_time_stats, histogram, path_rng,
                                   simulate_coupled)
from sdecutoff.potentials import double_well, quadratic, quartic


def test_path_rng_is_counter_based():
    a = path_rng(7, 3).standard_normal(5)
    assert np.array_equal(a, path_rng(7, 3).standard_normal(5))
    assert not np.array_equal(a, path_rng(7, 4).standard_normal(5))
    assert not np.array_equal(a, path_rng(8, 3).standard_normal(5))


def test_paths_do_not_depend_on_ensemble_size():
    small = simulate_coupled(quadratic(), 1e-2, 1.0, 1e-3, 1.0, 10, seed=3)
    large = simulate_coupled(quadratic(), 1e-2, 1.0, 1e-3, 1.0, 600, seed=3)
    assert np.array_equal(small.x, large.x[:10])


def test_substeps_share_brownian_paths():
    fine = simulate_coupled(quadratic(), 1e-2, 1.0, 1e-3, 1.0, 10, seed=3)
    coarse = simulate_coupled(quadratic(), 1e-2, 1.0, 2e-3, 1.0, 10, seed=3, substeps=2)
    assert np.allclose(coarse.W, fine.W[:, ::2], atol=1e-12)


def test_ensemble_moments_match_ou():
    eps, t = 1e-2, 1.0
    e = simulate_coupled(quadratic(), eps, 1.0, 1e-3, t, 4000, seed=11)
    x = e.at(t)
    var = eps * (1 - math.exp(-2 * t)) / 2
    assert abs(x.mean() - math.exp(-t)) < 4 * math.sqrt(var / x.size) + 1e-3
    assert x.var() == pytest.approx(var, rel=0.1)
    assert np.allclose(e.psi, np.exp(-e.times), rtol=1e-8)
    assert np.all(e.y[:, 0] == 0.0)


def test_step_size_guard():
    with pytest.raises(ValueError):
        simulate_coupled(quartic(), 1e-2, 1.0, 0.5, 1.0, 10, seed=1)


def test_domain_exit_is_an_error():
    with pytest.raises(SimulationError):
        simulate_coupled(quadratic(), 0.5, 1.0, 1e-2, 5.0, 200, seed=1, domain=1.05)


def test_quadratic_bounds_hold():
    e = simulate_coupled(quadratic(), 1e-2, 1.0, 1e-3, 2.0, 300, seed=5)
    rep = check_order_bounds(e, 1.0, 0.0)
    assert rep.violations_zeroth == 0 and rep.violations_first == 0
    assert rep.exponent == 3


def test_histogram_counts_everything():
    s = np.random.default_rng(0).normal(size=5000)
    h = histogram(s)
    assert h.counts.sum() == 5000 and h.n == 5000
    assert np.sum(h.heights * np.diff(h.edges)) == pytest.approx(1.0)


def test_empirical_tv_null_case_is_unbiased():
    s = np.random.default_rng(1).normal(size=20000)
    est = empirical_tv(s, GaussianLaw(0.0, 1.0))
    assert abs(est.estimate) < 3 * est.stderr
    assert est.raw > est.estimate


def test_empirical_tv_binning_bias_is_downward():
    s = np.random.default_rng(2).normal(0.5, 1.0, size=20000)
    est = empirical_tv(s, GaussianLaw(0.0, 1.0))
    assert est.estimate <= tv_unit(0.5) + 3 * est.stderr
    assert est.estimate == pytest.approx(tv_unit(0.5), abs=0.03)


def test_empirical_tv_needs_enough_samples():
    with pytest.raises(SimulationError):
        empirical_tv(np.zeros(10), GaussianLaw(0.0, 1.0))


def test_exit_times():
    p = double_well()
    well = find_wells(p)[1]
    calm = exit_time_stats(p, well, 0.02, 1.0, 5.0, 500, seed=1)
    assert calm.escape_fraction == 0.0
    assert calm.median_lower_bound == 5.0
    hot = exit_time_stats(p, well, 0.5, 1.0, 20.0, 500, seed=1)
    assert hot.escape_fraction > 0.5
    assert hot.quantiles[0.1] < hot.quantiles[0.5] < hot.quantiles[0.9]
