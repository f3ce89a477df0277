import io
import math
from dataclasses import replace

import numpy as np
import pytest

import support
from parmod.constraints import admissible, closure_half_ok, interference_box
from parmod.errors import EmptyBoxError
from parmod.export import write_point_cloud
from parmod.geometry import JointLimitProfile, with_profiles
from parmod.kinematics import coupling_residual, max_tilt
from parmod.sweep import (
    Classification,
    SweepParams,
    alpha_grid,
    classify_z,
    estimate_slice_area,
    estimate_volume,
    oracle_membership,
    slice_at,
    sweep,
    validate_against_oracle,
)

FAST = SweepParams(alpha_steps=61, arc_samples=128, z_steps=15)


@pytest.fixture(scope="module")
def fast_sweep(g0_module):
    return sweep(g0_module, FAST)


@pytest.fixture(scope="module")
def g0_module():
    import parmod
    return parmod.load_machine_file(parmod.g0_config_path())


# ------------------------------ params ------------------------------

def test_params_validation():
    with pytest.raises(ValueError):
        SweepParams(alpha_steps=1)
    with pytest.raises(ValueError):
        SweepParams(d_pu=-0.1)


def test_alpha_grid_symmetric(g0_module):
    grid = alpha_grid(g0_module, 181)
    assert grid.size == 181
    assert np.array_equal(grid, -grid[::-1])
    assert grid[90] == 0.0
    assert grid.max() < max_tilt(g0_module)


# ------------------------------ classify ------------------------------

def test_classify_constant_interval_formula(g0_module):
    g = g0_module
    sin_am = math.sin(max_tilt(g) * (1 - 1e-6))
    lo_bound = max(
        g.rho_min[0] + g.L1 + g.R1 * sin_am,
        g.rho_min[1] + g.L2 + g.R2 * sin_am,
        g.rho_min[2] + g.L3 + g.R2 * sin_am,
    )
    hi_bound = min(
        g.rho_max[0] - g.R1 * sin_am,
        g.rho_max[1] - g.R2 * sin_am,
        g.rho_max[2] - g.R2 * sin_am,
    )
    assert lo_bound < hi_bound
    for z in np.linspace(lo_bound + 1e-9, hi_bound - 1e-9, 40):
        assert classify_z(g, float(z)) is Classification.CONSTANT
    assert classify_z(g, lo_bound - 1e-6) is not Classification.CONSTANT
    assert classify_z(g, hi_bound + 1e-6) is not Classification.CONSTANT


def test_classify_midpoint_constant(g0_module):
    g = g0_module
    z = 0.5 * (max(g.rho_min[i - 1] + g.rod_length(i, 1) for i in (1, 2, 3))
               + min(g.rho_max))
    assert classify_z(g, z) is Classification.CONSTANT


def test_classify_empty_above(g0_module):
    assert classify_z(g0_module, -0.5) is Classification.EMPTY


def test_classify_lower_transition(g0_module):
    z = min(g0_module.rho_max) + 0.01
    assert classify_z(g0_module, z) is Classification.LOWER_TRANSITION


def test_classify_upper_transition(g0_module):
    assert classify_z(g0_module, 1.0) is Classification.UPPER_TRANSITION


# ------------------------------ slices ------------------------------

def test_slice_zero_tilt_row_on_y0(g0_module):
    sl = slice_at(g0_module, 1.4, FAST)
    row = [a for a in sl.arcs if a.alpha == 0.0]
    assert len(row) == 1
    if row[0].points.size:
        assert np.abs(row[0].points[:, 1]).max() < 1e-12


def test_slice_points_all_admissible(g0_module):
    sl = slice_at(g0_module, 1.3, FAST)
    rows = sl.point_rows()
    assert rows.shape[0] > 0
    for r in rows[:: max(1, rows.shape[0] // 50)]:
        report = admissible(g0_module, r[:3], r[3], d_pu=FAST.d_pu)
        assert report.admissible


def test_slice_constancy(g0_module):
    za, zb = 1.25, 1.6
    assert classify_z(g0_module, za) is Classification.CONSTANT
    assert classify_z(g0_module, zb) is Classification.CONSTANT
    sa = slice_at(g0_module, za, FAST)
    sb = slice_at(g0_module, zb, FAST)
    t_step = math.pi / (FAST.arc_samples - 1)
    for arc_a, arc_b in zip(sa.arcs, sb.arcs):
        assert len(arc_a.t_intervals) == len(arc_b.t_intervals)
        for (lo_a, hi_a), (lo_b, hi_b) in zip(arc_a.t_intervals, arc_b.t_intervals):
            assert abs(lo_a - lo_b) <= t_step + 1e-12
            assert abs(hi_a - hi_b) <= t_step + 1e-12


def test_slice_profile_monotone(g0_module):
    small = JointLimitProfile(deltas=(-0.9, 0.0, 0.9), betas=(0.1, 0.35, 0.1))
    restrictive = with_profiles(g0_module, small)
    sl_narrow = slice_at(restrictive, 1.4, FAST)
    sl_wide = slice_at(g0_module, 1.4, FAST)
    t_step = math.pi / (FAST.arc_samples - 1)
    assert 0 < sl_narrow.n_points < sl_wide.n_points
    for arc_n, arc_w in zip(sl_narrow.arcs, sl_wide.arcs):
        for lo, hi in arc_n.t_intervals:
            assert any(lo >= wl - t_step and hi <= wh + t_step
                       for wl, wh in arc_w.t_intervals)


# ------------------------------ sweep ------------------------------

def test_sweep_rows_sorted_and_valid(g0_module, fast_sweep):
    cloud, _ = fast_sweep
    rows = cloud.rows
    assert rows.shape[0] > 0
    order = np.lexsort((rows[:, 3], rows[:, 2]))
    assert np.array_equal(order, np.sort(order)) or \
        np.all(np.diff(rows[np.argsort(order), 2]) >= 0)
    # stable sort by (z, alpha) leaves rows unchanged
    resorted = rows[np.lexsort((rows[:, 3], rows[:, 2]))]
    assert np.array_equal(resorted[:, 2:4], rows[:, 2:4])

    g = g0_module
    res = coupling_residual(g, rows[:, 0], rows[:, 1], rows[:, 3])
    assert np.abs(res).max() < 1e-10 * g.L1 ** 4
    assert np.all(closure_half_ok(rows[:, 3], rows[:, 1], y_tol=1e-12 * g.L1))
    assert np.abs(rows[:, 3]).max() < max_tilt(g)
    # IK branch signs
    s = np.sin(rows[:, 3])
    assert np.all(rows[:, 4] - rows[:, 2] < 0)
    assert np.all(rows[:, 5] - rows[:, 2] + g.R2 * s < 0)
    assert np.all(rows[:, 6] - rows[:, 2] - g.R2 * s < 0)


def test_sweep_matches_fresh_slices(g0_module, fast_sweep):
    # the constant-band cache must reproduce a fresh compute exactly
    _, sliceset = fast_sweep
    cached = [s for s in sliceset.slices if s.classification is Classification.CONSTANT]
    assert len(cached) >= 2
    probe = cached[-1]
    fresh = slice_at(g0_module, probe.z_p, FAST)
    assert fresh.n_points == probe.n_points
    assert np.allclose(fresh.point_rows(), probe.point_rows(), rtol=0, atol=1e-9)


def test_sweep_emitted_rows_pass_oracle(g0_module, fast_sweep, rng):
    cloud, _ = fast_sweep
    idx = rng.choice(len(cloud), size=400, replace=False)
    for i in idx:
        x, y, z = cloud.rows[i, :3]
        assert oracle_membership(g0_module, x, y, z, FAST.d_pu)


def test_sweep_empty_box_propagates(g0_module):
    with pytest.raises(EmptyBoxError):
        sweep(g0_module, replace(FAST, d_pu=2.0))


def test_sweep_deterministic(g0_module, fast_sweep):
    cloud, _ = fast_sweep
    again, _ = sweep(g0_module, FAST)
    assert np.array_equal(cloud.rows, again.rows)
    buf1, buf2 = io.BytesIO(), io.BytesIO()
    write_point_cloud(cloud, buf1)
    write_point_cloud(again, buf2)
    assert buf1.getvalue() == buf2.getvalue()


# ------------------------------ oracle ------------------------------

def test_oracle_rejects_wrong_half_alpha(g0_module, fast_sweep):
    cloud, _ = fast_sweep
    rows = cloud.rows[np.abs(cloud.rows[:, 3]) > 0.05]
    row = rows[len(rows) // 2]
    report = admissible(g0_module, (row[0], -row[1], row[2]), row[3], d_pu=FAST.d_pu)
    assert not report.closure_half_ok
    assert not report.admissible


def test_oracle_outside_box(g0_module):
    box = interference_box(g0_module, 0.0)
    assert not oracle_membership(g0_module, box.x_max + 0.01, 0.0, 1.4)


def test_oracle_huge_tool_is_false(g0_module):
    assert not oracle_membership(g0_module, 0.0, -0.1, 1.4, d_pu=5.0)


# ------------------------------ area / volume ------------------------------

def test_area_empty_slice(g0_module):
    from parmod.sweep import WorkspaceSlice
    empty = WorkspaceSlice(z_p=-2.0, arcs=[], classification=Classification.EMPTY, d_pu=0.0)
    assert estimate_slice_area(empty, g0_module, 16) == 0.0


def test_area_resolution_convergence(g0_module):
    sl = slice_at(g0_module, 1.4, FAST)
    a1 = estimate_slice_area(sl, g0_module, 48)
    a2 = estimate_slice_area(sl, g0_module, 96)
    assert a1 > 0 and a2 > 0
    assert abs(a1 - a2) / a2 < 0.05


def test_area_profile_monotone(g0_module):
    small = JointLimitProfile(deltas=(-0.9, 0.0, 0.9), betas=(0.1, 0.35, 0.1))
    restrictive = with_profiles(g0_module, small)
    sl_r = slice_at(restrictive, 1.4, FAST)
    sl_g = slice_at(g0_module, 1.4, FAST)
    assert estimate_slice_area(sl_r, restrictive, 48) <= estimate_slice_area(sl_g, g0_module, 48)


def test_area_resolution_precondition(g0_module):
    sl = slice_at(g0_module, 1.4, FAST)
    with pytest.raises(ValueError):
        estimate_slice_area(sl, g0_module, 8)


def test_volume_tool_monotone(g0_module):
    vols = []
    for tool in (0.0, 0.05, 0.10):
        params = replace(FAST, d_pu=g0_module.l_p1 + tool)
        _, ss = sweep(g0_module, params)
        vols.append(estimate_volume(ss, g0_module, 40))
    assert vols[0] > vols[1] > vols[2] > 0


def test_volume_all_empty_slices(g0_module):
    from parmod.sweep import SliceSet, WorkspaceSlice
    empties = [WorkspaceSlice(z_p=z, arcs=[], classification=Classification.EMPTY, d_pu=0.0)
               for z in (-2.0, -1.5)]
    ss = SliceSet(slices=empties, params=FAST, geom=g0_module)
    assert estimate_volume(ss, g0_module, 16) == 0.0


def test_volume_z_steps_convergence(g0_module):
    coarse = replace(FAST, z_steps=15)
    fine = replace(FAST, z_steps=30)
    _, ss_c = sweep(g0_module, coarse)
    _, ss_f = sweep(g0_module, fine)
    v_c = estimate_volume(ss_c, g0_module, 40)
    v_f = estimate_volume(ss_f, g0_module, 40)
    assert abs(v_c - v_f) / v_f < 0.05


def test_volume_needs_slices(g0_module, fast_sweep):
    from parmod.sweep import SliceSet
    _, ss = fast_sweep
    with pytest.raises(ValueError):
        estimate_volume(SliceSet(slices=ss.slices[:1], params=ss.params, geom=ss.geom),
                        g0_module, 32)


# ------------------------------ validation ------------------------------

def test_validation_smallgrid(g0_module):
    report = validate_against_oracle(g0_module, SweepParams(alpha_steps=121, arc_samples=256),
                                     nx=24, ny=24, nz=10)
    assert report.agreement >= 0.99
    assert report.n_compared > 4000
