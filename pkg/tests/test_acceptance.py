"""End-to-end acceptance criteria, each at its stated tolerance and time budget.

Every criterion prints a single ``PASS``/``FAIL`` line (collected again in the
pytest terminal summary). The file also runs standalone:
``python tests/test_acceptance.py``.
"""

import filecmp
import os
import subprocess
import sys
import tempfile
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

import oracles  # noqa: E402
from miwf import hopf  # noqa: E402
from miwf.flow import FlowConfig, deturck_velocity, miwf_velocity, run_flow  # noqa: E402
from miwf.geometry import ImmersionGrid, area_weights, geometry_of, willmore_energy, willmore_gradient  # noqa: E402
from miwf.linearization import (  # noqa: E402
    adjoint_flow,
    fd_check,
    linear_flow,
    pairing,
    random_smooth_field,
    record_flow,
    richardson_study,
    symbol_probe,
)
from miwf.moebius import Dilation, MoebiusMap, SphereInversion, Translation, invariance_residual, rotation  # noqa: E402
from miwf.surfaces import build_clifford_stereo, build_clifford_torus, build_torus_of_revolution  # noqa: E402

RESULTS = []


def report(number, title, ok, detail, elapsed, budget):
    within = elapsed <= budget
    passed = bool(ok) and within
    line = (f"{'PASS' if passed else 'FAIL'}  criterion {number:2d}  {title}: {detail}"
            f"  [{elapsed:.1f}s / {budget:g}s]")
    RESULTS.append(line)
    print(line)
    return passed, line


def timed(fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    return ok, detail, time.perf_counter() - t0


def torus(R, r, n):
    return build_torus_of_revolution(R, r, n, n)


def orders(errors):
    """Observed convergence orders for successive grid doublings."""
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


# --- 1 ------------------------------------------------------------------------------

def energy_oracle():
    parts, ok = [], True
    for t, exact in sorted(oracles.TORUS_ENERGY.items()):
        e64 = abs(willmore_energy(geometry_of(torus(t, 1.0, 64))) - exact) / exact
        e128 = abs(willmore_energy(geometry_of(torus(t, 1.0, 128))) - exact) / exact
        ok &= e128 <= 5e-3 and e64 / e128 >= 4.0
        parts.append(f"t={t:.3f} rel128={e128:.1e} gain={e64 / e128:.1f}x")
    return ok, "; ".join(parts)


# --- 2 ------------------------------------------------------------------------------

def clifford_consistency():
    target = oracles.TWO_PI_SQ
    ws = willmore_energy(geometry_of(build_clifford_torus(128, 128)), "sphere")
    we = willmore_energy(geometry_of(build_clifford_stereo(128, 128)))
    rs, re = abs(ws - target) / target, abs(we - target) / target
    return rs <= 5e-3 and re <= 5e-3, f"W_S3={ws:.6f} (rel {rs:.1e}), W_R3={we:.6f} (rel {re:.1e})"


# --- 3 ------------------------------------------------------------------------------

def gradient_consistency():
    f = torus(2.0, 1.0, 128)
    c = geometry_of(f)
    G = willmore_gradient(c)
    w = area_weights(c)
    rng = np.random.default_rng(3)
    h = 1e-5
    rels = []
    for _ in range(3):
        psi = random_smooth_field(f.points.shape, rng)
        pair = float(np.sum(np.einsum("ijn,ijn->ij", G, psi) * w))
        fd = (willmore_energy(geometry_of(ImmersionGrid(f.points + h * psi)))
              - willmore_energy(geometry_of(ImmersionGrid(f.points - h * psi)))) / (2 * h)
        rels.append(abs(pair - fd) / abs(fd))
    tang = []
    for k in range(2):
        psi = np.moveaxis(c.J[k], 0, -1)
        norm = np.sqrt(np.sum(np.einsum("ijn,ijn->ij", psi, psi) * w))
        tang.append(abs(np.sum(np.einsum("ijn,ijn->ij", G, psi) * w)) / norm)
    ok = max(rels) <= 1e-2 and max(tang) <= 1e-8
    return ok, f"max FD rel={max(rels):.1e}, tangential pairing/|psi|={max(tang):.1e}"


# --- 4 ------------------------------------------------------------------------------

def deturck_equivalence():
    diffs = []
    for n in (32, 64, 128):
        f = torus(2.0, 1.0, n)
        a = deturck_velocity(f, path="A")
        b = deturck_velocity(f, path="B")
        diffs.append(np.linalg.norm(a - b) / np.linalg.norm(a))
    p = orders(diffs)
    return bool(np.all(p >= 2.0)), "rel L2 " + ", ".join(f"{d:.2e}" for d in diffs) + \
        " orders " + ", ".join(f"{q:.2f}" for q in p)


# --- 5 ------------------------------------------------------------------------------

def moebius_invariance():
    f = torus(2.0, 1.0, 32)
    sims = {
        "rigid": MoebiusMap((rotation([1.0, 2.0, -0.5], 0.7), Translation(np.array([0.4, -1.1, 0.25])))),
        "dilation2": MoebiusMap((Dilation(2.0),)),
        "dilation1.7": MoebiusMap((Dilation(1.7),)),
    }
    sim_res = {k: invariance_residual(phi, f, miwf_velocity) for k, phi in sims.items()}
    inv = MoebiusMap((SphereInversion(np.array([0.3, 0.2, 1.6]), 1.5),))
    res = [invariance_residual(inv, torus(2.0, 1.0, n), miwf_velocity) for n in (64, 128, 256)]
    p = orders(res)
    ok = max(sim_res.values()) <= 1e-10 and bool(np.all(p >= 2.0))
    sims_txt = ", ".join(f"{k}={v:.1e}" for k, v in sim_res.items())
    return ok, f"{sims_txt}; inversion {res[0]:.2e}->{res[2]:.2e} orders " + ", ".join(f"{q:.2f}" for q in p)


# --- 6 ------------------------------------------------------------------------------

def energy_monotonicity():
    delta = 1e-4
    traj = run_flow(torus(3.0, 1.0, 64), FlowConfig(t_end=np.inf, max_steps=200, min_a0sq_floor=delta))
    e = np.array([s.energy for s in traj.states])
    rise = float(np.max(np.diff(e)))
    lowest = min(s.min_a0sq for s in traj.states)
    ok = traj.halt is None and len(e) == 201 and rise <= 1e-10 and lowest > delta
    return ok, f"steps={len(e) - 1}, max dW={rise:.2e}, W {e[0]:.6f}->{e[-1]:.6f}, min|A0|^2={lowest:.3f}"


# --- 7 ------------------------------------------------------------------------------

def stationarity():
    disp = []
    for n in (64, 128):
        f0 = build_clifford_stereo(n, n)
        traj = run_flow(f0, FlowConfig(t_end=np.inf, max_steps=50))
        if traj.halt is not None or traj.final.step != 50:
            return False, f"run at {n}^2 stopped early: {traj.halt}"
        disp.append(float(np.max(np.linalg.norm(traj.final.f.points - f0.points, axis=-1))))
    return disp[1] <= 0.25 * disp[0], f"max displacement 64^2={disp[0]:.2e}, 128^2={disp[1]:.2e}"


# --- 8 ------------------------------------------------------------------------------

def linearization():
    f = torus(2.0, 1.0, 32)
    eta = random_smooth_field(f.points.shape, np.random.default_rng(8))
    errs = {h: fd_check(f, None, eta, h) for h in (1e-3, 1e-4, 1e-5)}
    slope = np.log10(errs[1e-3] / errs[1e-4])
    probe = symbol_probe(torus(2.0, 1.0, 64))
    ok = errs[1e-5] <= 1e-6 and slope >= 1.8 and probe <= 0.05
    return ok, f"FD rel err h=1e-5: {errs[1e-5]:.1e}, FD order {slope:.2f}, symbol deviation {probe:.1%}"


# --- 9 ------------------------------------------------------------------------------

def semigroup():
    f = torus(2.0, 1.0, 32)
    log, _ = record_flow(f, 10)
    xi = random_smooth_field(f.points.shape, np.random.default_rng(9))
    direct = linear_flow(log, 0, 10, xi)
    exact = all(np.array_equal(direct, linear_flow(log, m, 10, linear_flow(log, 0, m, xi))) for m in (1, 4, 7))
    t = log.times
    exact &= np.array_equal(direct, linear_flow(log, t[5], t[10], linear_flow(log, t[0], t[5], xi)))
    hs = (1e-3, 5e-4, 2.5e-4)
    errs = richardson_study(f, log, xi, hs)
    p = orders(errs)
    ok = exact and bool(np.all((p > 0.8) & (p < 1.3)))
    return ok, f"bit-exact composition={exact}; Richardson errors " + ", ".join(f"{e:.2e}" for e in errs) + \
        " orders " + ", ".join(f"{q:.2f}" for q in p)


# --- 10 -----------------------------------------------------------------------------

def adjoint_duality():
    f = torus(2.0, 1.0, 32)
    log, _ = record_flow(f, 20)
    w = log.weights
    rng = np.random.default_rng(10)
    gaps = []
    for _ in range(5):
        xi = random_smooth_field(f.points.shape, rng)
        eta = random_smooth_field(f.points.shape, rng)
        lhs = pairing(linear_flow(log, 0, 20, xi), eta, w)
        rhs = pairing(xi, adjoint_flow(log, 20, 0, eta), w)
        gaps.append(abs(lhs - rhs) / np.sqrt(pairing(xi, xi, w) * pairing(eta, eta, w)))
    return max(gaps) <= 1e-10, f"max relative gap over 5 pairs={max(gaps):.1e}"


# --- 11 -----------------------------------------------------------------------------

def hopf_reduction():
    still = float(np.max(np.abs(hopf.curve_flow_velocity(hopf.great_circle(512)))))
    speed = np.linalg.norm(hopf.curve_flow_velocity(hopf.latitude(np.pi / 4, 512)), axis=1)
    speed_err = float(np.max(np.abs(speed - 0.5)))
    _, energies = hopf.run_curve_flow(hopf.wavy(0.2, 3, 128), 200)
    rise = float(np.max(np.diff(energies)))
    rels = {
        "great_circle": hopf.willmore_elastic_check(hopf.great_circle(128), 64)[2],
        "latitude(pi/3)": hopf.willmore_elastic_check(hopf.latitude(np.pi / 3, 512), 256)[2],
        "wavy(0.2,3)": hopf.willmore_elastic_check(hopf.wavy(0.2, 3, 256), 64)[2],
    }
    ok = still <= 1e-12 and speed_err <= 1e-6 and rise <= 1e-10 and max(rels.values()) <= 1e-2
    rel_txt = ", ".join(f"{k} {v:.1e}" for k, v in rels.items())
    return ok, (f"|v| great circle={still:.1e}, latitude |v|-1/2={speed_err:.1e}, "
                f"max dW~={rise:.1e}; W vs pi*W~: {rel_txt}")


# --- 12 -----------------------------------------------------------------------------

def determinism():
    args = ["simulate", "--set", "grid.nu=32", "--set", "grid.nv=32", "--set", "flow.t_end=1",
            "--set", "flow.max_steps=5", "--set", "output.snapshot_every=2"]
    with tempfile.TemporaryDirectory() as tmp:
        dirs = [os.path.join(tmp, name) for name in ("a", "b")]
        for d in dirs:
            subprocess.run([sys.executable, "-m", "miwf.cli"] + args + ["--out", d], check=True,
                           capture_output=True)
        names = sorted(os.listdir(dirs[0]))
        same = names == sorted(os.listdir(dirs[1]))
        _, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
        ok = same and not mismatch and not errors and len(names) > 3
    return ok, f"{len(names)} files compared, mismatches={len(mismatch) + len(errors)}"


CRITERIA = [
    (1, "Willmore energy oracle", energy_oracle, 5),
    (2, "Clifford consistency", clifford_consistency, 5),
    (3, "gradient consistency", gradient_consistency, 10),
    (4, "DeTurck path equivalence", deturck_equivalence, 30),
    (5, "Moebius invariance", moebius_invariance, 60),
    (6, "energy monotonicity", energy_monotonicity, 60),
    (7, "stationarity of the Clifford torus", stationarity, 60),
    (8, "linearization vs FD and symbol", linearization, 30),
    (9, "semigroup and transported variation", semigroup, 60),
    (10, "adjoint duality", adjoint_duality, 30),
    (11, "Hopf reduction", hopf_reduction, 60),
    (12, "determinism", determinism, 10),
]


@pytest.mark.parametrize("number,title,check,budget", CRITERIA, ids=[f"c{c[0]:02d}" for c in CRITERIA])
def test_criterion(number, title, check, budget):
    ok, detail, elapsed = timed(check)
    passed, line = report(number, title, ok, detail, elapsed, budget)
    assert passed, line


if __name__ == "__main__":
    failures = 0
    for number, title, check, budget in CRITERIA:
        ok, detail, elapsed = timed(check)
        failures += not report(number, title, ok, detail, elapsed, budget)[0]
    sys.exit(1 if failures else 0)
