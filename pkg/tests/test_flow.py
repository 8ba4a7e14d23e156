import dataclasses

import numpy as np
import pytest
from conftest import clifford_stereo, torus, torus_geometry

from miwf.errors import UmbilicDegeneracy
from miwf.flow import (
    FlowConfig,
    deturck_velocity,
    make_state,
    miwf_velocity,
    rk4_step,
    run_flow,
    stability_dt,
    symbol_bounds,
    velocity_function,
)
from miwf.geometry import BackgroundConnection, ImmersionGrid, from_grid, geometry_of, tangential, willmore_gradient

PIN_DT_TORUS21_64 = 1.2938135379489675e-06


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# --- velocities ---------------------------------------------------------------------

def test_miwf_velocity_vanishes_on_clifford_stereo():
    sup = [np.max(np.abs(miwf_velocity(clifford_stereo(n)))) for n in (32, 64, 128)]
    assert sup[0] / sup[1] >= 4 and sup[1] / sup[2] >= 4


def test_miwf_velocity_descends():
    c = torus_geometry(2, 1, 64)
    v = miwf_velocity(torus(2, 1, 64), c)
    G = willmore_gradient(c)
    assert np.all(np.einsum("ijn,ijn->ij", v, G) <= 0)
    i0 = v[0, 0] / np.linalg.norm(v[0, 0])
    assert abs(abs(i0[0]) - 1) < 1e-12  # along the normal (1, 0, 0) at u=0, v=0


@pytest.mark.parametrize("lam", [0.5, 2.0, 3.0])
def test_miwf_velocity_is_homogeneous_of_degree_one(lam):
    f = torus(2, 1, 32)
    v1 = miwf_velocity(f)
    v2 = miwf_velocity(ImmersionGrid(lam * f.points))
    np.testing.assert_allclose(v2, lam * v1, rtol=1e-10, atol=1e-12 * np.max(np.abs(v1)))


def test_umbilic_guard():
    with pytest.raises(UmbilicDegeneracy) as exc:
        miwf_velocity(torus(2, 1, 32), delta=0.3)
    assert exc.value.reason == "umbilic_degeneracy"
    assert exc.value.point[0] == 0  # |A0|^2 is smallest on the outer equator u = 0


def test_deturck_modification_is_tangential():
    for n in (32, 64):
        f = torus(2, 1, n)
        c = geometry_of(f)
        d = from_grid(deturck_velocity(f) - miwf_velocity(f))
        assert np.max(np.abs(d - tangential(c, d))) < 1e-12


def test_deturck_paths_converge():
    diffs = []
    for n in (32, 64):
        f = torus(2, 1, n)
        diffs.append(rel_l2(deturck_velocity(f, path="B"), deturck_velocity(f, path="A")))
    assert diffs[0] / diffs[1] >= 4


def test_deturck_zero_perturbation():
    f = torus(2, 1, 32)
    bg = BackgroundConnection.from_immersion(f)
    a = deturck_velocity(f, bg=bg)
    b = deturck_velocity(ImmersionGrid(f.points + 0.0 * f.points), bg=bg)
    assert np.array_equal(a, b)


def test_deturck_rejects_wrong_background():
    bg = BackgroundConnection.from_immersion(torus(2, 1, 16))
    with pytest.raises(ValueError):
        deturck_velocity(torus(2, 1, 32), bg=bg)


# --- step size and symbol -----------------------------------------------------------

def test_stability_dt_pin():
    assert stability_dt(torus_geometry(2, 1, 64)) == pytest.approx(PIN_DT_TORUS21_64, rel=1e-12)


def test_stability_dt_scaling():
    c64, c128 = torus_geometry(2, 1, 64), torus_geometry(2, 1, 128)
    assert stability_dt(c64) / stability_dt(c128) == pytest.approx(16.0, rel=1e-3)
    assert stability_dt(c64, 0.25) == pytest.approx(0.5 * stability_dt(c64, 0.5), rel=1e-14)


def test_symbol_bounds():
    c = torus_geometry(2, 1, 64)
    lo, hi = symbol_bounds(c)
    assert 0 < lo < hi and np.isfinite(hi)
    scaled = geometry_of(ImmersionGrid(2.5 * torus(2, 1, 64).points))
    np.testing.assert_allclose(symbol_bounds(scaled), (lo, hi), rtol=1e-10)
    big = dataclasses.replace(c, a0sq=100.0 * c.a0sq)
    assert symbol_bounds(big)[0] == pytest.approx(lo / 1e4, rel=1e-12)


# --- stepping -----------------------------------------------------------------------

def test_t_end_zero_keeps_initial_state():
    f = torus(2, 1, 32)
    traj = run_flow(f, FlowConfig(t_end=0.0))
    assert len(traj.states) == 1 and traj.halt is None
    s = traj.final
    assert s.t == 0.0 and s.step == 0 and s.f is f


def test_energy_decreases_on_torus21():
    traj = run_flow(torus(2, 1, 32), FlowConfig(t_end=np.inf, max_steps=30))
    e = np.array([s.energy for s in traj.states])
    assert len(e) == 31
    assert np.max(np.diff(e)) <= 1e-10
    assert e[-1] < e[0]


def test_run_reaches_t_end_exactly():
    f = torus(3, 1, 32)
    dt = stability_dt(geometry_of(f))
    traj = run_flow(f, FlowConfig(t_end=2.5 * dt))
    assert traj.final.step == 3 and traj.final.t == 2.5 * dt


def test_schedule_replay_is_deterministic():
    f = torus(2, 1, 32)
    cfg = FlowConfig(flow_kind="deturck", t_end=np.inf, max_steps=4)
    a = run_flow(f, cfg)
    b = run_flow(f, cfg, schedule=[s.last_dt for s in a.states[1:]])
    assert np.array_equal(a.final.f.points, b.final.f.points)


def test_halt_is_recorded_not_raised():
    traj = run_flow(torus(2, 1, 32), FlowConfig(t_end=1.0, min_a0sq_floor=0.3))
    assert traj.halt_reason == "umbilic_degeneracy" and traj.states == []


def test_snapshots_and_stages():
    cfg = FlowConfig(t_end=np.inf, max_steps=4, snapshot_every=2)
    traj = run_flow(torus(2, 1, 32), cfg, record_stages=True)
    assert [s[0] for s in traj.snapshots] == [0, 2, 4]
    assert len(traj.stages) == 4 and len(traj.stages[0]) == 4


def test_rk4_step_with_explicit_dt():
    f = torus(2, 1, 32)
    cfg = FlowConfig(t_end=1.0)
    vf = velocity_function(cfg, f)
    s0, _ = make_state(f, 0, 0.0, 0.0, vf)
    s1 = rk4_step(s0, cfg, vf, dt=1e-7)
    assert s1.t == 1e-7 and s1.last_dt == 1e-7
    # one tiny step moves points by about dt * velocity
    np.testing.assert_allclose((s1.f.points - f.points) / 1e-7, s0.velocity, rtol=1e-3, atol=1e-6)


@pytest.mark.parametrize("kwargs", [dict(flow_kind="heat"), dict(t_end=-1.0), dict(safety=0.0),
                                    dict(safety=1.5), dict(min_a0sq_floor=0.0), dict(snapshot_every=-1)])
def test_flow_config_validation(kwargs):
    with pytest.raises(ValueError):
        FlowConfig(**kwargs)


def test_energy_decreases_under_deturck_flow():
    traj = run_flow(torus(2, 1, 32), FlowConfig(flow_kind="deturck", t_end=np.inf, max_steps=20))
    e = np.array([s.energy for s in traj.states])
    assert traj.halt is None and np.max(np.diff(e)) <= 1e-10
