import math

import numpy as np
import pytest

from sdecutoff.doublewell import find_wells, local_cutoff_experiment, local_schedule
from sdecutoff.errors import PotentialError
from sdecutoff.fokker_planck import FPControls
from sdecutoff.potentials import double_well, quadratic, quartic


def test_symmetric_double_well():
    wells = find_wells(double_well())
    assert [w.location for w in wells] == pytest.approx([-1.0, 1.0], abs=1e-10)
    for w in wells:
        assert w.curvature == pytest.approx(2.0)
        assert w.barrier == pytest.approx(0.25)
        assert w.kind == "equal"
    assert wells[1].saddles[0] == pytest.approx(0.0, abs=1e-10)
    assert wells[1].saddles[1] is None
    assert wells[1].basin((-5, 5)) == pytest.approx((0.0, 5.0), abs=1e-10)


def test_tilted_double_well():
    deep, shallow = find_wells(double_well(1.0, 0.1))
    assert deep.kind == "deep" and shallow.kind == "shallow"
    assert deep.depth < shallow.depth
    for w in (deep, shallow):
        x = w.location
        assert x ** 3 - x + 0.1 == pytest.approx(0.0, abs=1e-10)
        assert w.curvature == pytest.approx(3 * x * x - 1, rel=1e-10)


def test_single_well():
    (w,) = find_wells(quartic())
    assert w.kind == "single" and w.location == pytest.approx(0.0, abs=1e-12)
    assert w.barrier == math.inf


def test_no_minimum():
    from sdecutoff.potentials import custom
    slope = custom("slope", lambda x: x, lambda x: 1.0 + 0 * x,
                   lambda x: 0 * x, lambda x: 0 * x)
    with pytest.raises(PotentialError):
        find_wells(slope)


def test_local_schedule_variants():
    g = local_schedule(2.0, 1e-3, 0.5, "general")
    loc = local_schedule(2.0, 1e-3, 0.5, "local")
    assert g.t_cut - loc.t_cut == pytest.approx(math.log(4.0) / 4.0)
    assert g.window == loc.window


def test_local_experiment_table():
    p = double_well()
    well = find_wells(p)[1]
    b = [-1.0, 0.0, 1.0]
    tab = local_cutoff_experiment(
        p, well, 1.3, 0.5, [1e-2], b,
        center_modes=("at_xstar", "at_zero"),
        schedule_variants=("general", "local"),
        constant_variants=("c_tilde", "c"),
        controls=FPControls(points_per_sigma=20), escape_paths=200)
    assert len(tab.rows) == 3 * 2 * 2 * 2
    assert tab.constants["c_tilde"] == pytest.approx(0.3 * 1.15 / 1.69, rel=1e-9)
    assert tab.escape[(1e-2, "general")] == 0.0
    rows = [dict(zip(tab.columns, r)) for r in tab.rows]
    star = [r for r in rows if r["center_mode"] == "at_xstar"
            and r["schedule_variant"] == "general" and r["constant_variant"] == "c_tilde"]
    assert np.all(np.diff([r["tv"] for r in star]) < 0)
    zero = [r for r in rows if r["center_mode"] == "at_zero"]
    assert all(r["tv"] > 0.99 for r in zero)
    err = tab.sup_error(1e-2, center_mode="at_xstar", schedule_variant="general",
                        constant_variant="c_tilde")
    assert 0.0 < err < 0.5


def test_start_outside_basin_rejected():
    p = double_well()
    well = find_wells(p)[1]
    with pytest.raises(ValueError):
        local_cutoff_experiment(p, well, -0.5, 0.5, [1e-2], [0.0], escape_paths=0)


def test_conditioning_surrogate_is_benign():
    p = double_well()
    well = find_wells(p)[1]
    kw = dict(controls=FPControls(points_per_sigma=20), escape_paths=0)
    b = [-1.0, 0.0, 1.0]
    cond = local_cutoff_experiment(p, well, 1.3, 0.5, [1e-2], b, **kw)
    free = local_cutoff_experiment(p, well, 1.3, 0.5, [1e-2], b, conditioned=False, **kw)
    diff = max(abs(r1[3] - r2[3]) for r1, r2 in zip(cond.rows, free.rows))
    assert diff < 2e-2
