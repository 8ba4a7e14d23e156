"""Linearized DeTurck flow, its discrete adjoint, and propagation along a stored flow line.

The linear operator is the exact derivative of the discrete DeTurck velocity
(forward-mode :class:`~miwf.ad.Dual` evaluation); its transpose comes from the
reverse-mode tape in :mod:`miwf.ad`. Tangent fields are paired with the frozen
weights ``w = √det g(F0) du dv`` of the background immersion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ad
from .errors import ScheduleMismatch
from .flow import DEFAULT_DELTA, FlowConfig, deturck_field, run_flow
from .geometry import BackgroundConnection, ImmersionGrid, area_weights, metric_pack


def _velocity(x, du, dv, bg, delta):
    return deturck_field(x, du, dv, bg, delta)


def _bg(f, bg):
    return bg if bg is not None else BackgroundConnection.from_immersion(f)


def linearize_apply(f: ImmersionGrid, bg, eta, delta=DEFAULT_DELTA):
    """``D(Mill_F0)(f)·η``."""
    bg = _bg(f, bg)
    _, out = ad.jvp(lambda x: _velocity(x, f.du, f.dv, bg, delta), f.points, np.asarray(eta, float))
    return out


def pairing_weights(bg: BackgroundConnection):
    """Per-point weights ``√det g(F0) du dv`` with a trailing broadcast axis."""
    return area_weights(metric_pack(bg.f0))[..., None]


def pairing(a, b, w):
    return float(np.sum(a * b * w))


def transpose_apply(f: ImmersionGrid, bg, y, delta=DEFAULT_DELTA):
    """Euclidean transpose ``Jᵀ y`` of :func:`linearize_apply`."""
    bg = _bg(f, bg)
    _, out = ad.vjp(lambda x: _velocity(x, f.du, f.dv, bg, delta), f.points, np.asarray(y, float))
    return out


def adjoint_apply(f: ImmersionGrid, bg, y, delta=DEFAULT_DELTA, weights=None):
    """Adjoint of :func:`linearize_apply` for the weighted pairing ``<a, b>_w``."""
    bg = _bg(f, bg)
    w = pairing_weights(bg) if weights is None else weights
    return transpose_apply(f, bg, w * y, delta) / w


@dataclass(frozen=True)
class PropagatorLog:
    """A frozen DeTurck flow line: step sizes, times and RK4 stage base states."""

    f0: ImmersionGrid
    bg: BackgroundConnection
    dts: tuple
    times: tuple
    stages: tuple
    weights: np.ndarray
    delta: float = DEFAULT_DELTA

    @property
    def nsteps(self):
        return len(self.dts)

    def index(self, t):
        """Step index of the schedule time ``t`` (exact match required)."""
        if isinstance(t, (int, np.integer)) and not isinstance(t, bool):
            if 0 <= t <= self.nsteps:
                return int(t)
            raise ScheduleMismatch(f"step index {t} outside 0..{self.nsteps}")
        for i, ti in enumerate(self.times):
            if ti == t:
                return i
        raise ScheduleMismatch(f"time {t!r} is not on the stored schedule")

    def _jvp(self, x, u):
        return ad.jvp(lambda p: _velocity(p, self.f0.du, self.f0.dv, self.bg, self.delta), x, u)[1]

    def _vjp(self, x, y):
        return ad.vjp(lambda p: _velocity(p, self.f0.du, self.f0.dv, self.bg, self.delta), x, y)[1]

    def tangent_step(self, n, u):
        x1, x2, x3, x4 = self.stages[n]
        dt = self.dts[n]
        k1 = self._jvp(x1, u)
        k2 = self._jvp(x2, u + (0.5 * dt) * k1)
        k3 = self._jvp(x3, u + (0.5 * dt) * k2)
        k4 = self._jvp(x4, u + dt * k3)
        return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def transpose_step(self, n, ub):
        """Euclidean transpose of :meth:`tangent_step` (stages in reverse)."""
        x1, x2, x3, x4 = self.stages[n]
        dt = self.dts[n]
        a4 = self._vjp(x4, (dt / 6.0) * ub)
        a3 = self._vjp(x3, (dt / 3.0) * ub + dt * a4)
        a2 = self._vjp(x2, (dt / 3.0) * ub + (0.5 * dt) * a3)
        a1 = self._vjp(x1, (dt / 6.0) * ub + (0.5 * dt) * a2)
        return ub + a1 + a2 + a3 + a4

    def adjoint_step(self, n, ub):
        return self.transpose_step(n, self.weights * ub) / self.weights


def record_flow(f0: ImmersionGrid, steps: int, bg=None, safety=0.5, delta=DEFAULT_DELTA, schedule=None):
    """Run ``steps`` DeTurck steps from ``f0`` and freeze them into a :class:`PropagatorLog`."""
    bg = _bg(f0, bg)
    cfg = FlowConfig(flow_kind="deturck", t_end=np.inf, safety=safety, min_a0sq_floor=delta,
                     background=bg, max_steps=steps)
    traj = run_flow(f0, cfg, schedule=schedule, record_stages=True)
    if traj.halt is not None:
        raise traj.halt
    dts = tuple(s.last_dt for s in traj.states[1:])
    times = tuple(s.t for s in traj.states)
    log = PropagatorLog(f0=f0, bg=bg, dts=dts, times=times, stages=tuple(traj.stages),
                        weights=pairing_weights(bg), delta=delta)
    return log, traj


def linear_flow(log: PropagatorLog, s, t, xi):
    """``G(t, s) ξ``: the linearized flow from schedule time ``s`` to ``t``."""
    i, j = log.index(s), log.index(t)
    if j < i:
        raise ScheduleMismatch("linear_flow needs s <= t")
    u = np.array(xi, dtype=float)
    for n in range(i, j):
        u = log.tangent_step(n, u)
    return u


def adjoint_flow(log: PropagatorLog, t, s, xi_star):
    """``G*(t, s) ξ*``: the discrete adjoint propagated backwards from ``t`` to ``s``."""
    i, j = log.index(s), log.index(t)
    if j < i:
        raise ScheduleMismatch("adjoint_flow needs s <= t")
    u = np.array(xi_star, dtype=float)
    for n in range(j - 1, i - 1, -1):
        u = log.adjoint_step(n, u)
    return u


def random_smooth_field(shape, rng, modes=3, scale=1.0):
    """Random trigonometric polynomial field of degree ``modes`` in each direction."""
    nu, nv, n = shape
    u = np.arange(nu) * (2 * np.pi / nu)
    v = np.arange(nv) * (2 * np.pi / nv)
    U, V = np.meshgrid(u, v, indexing="ij")
    out = np.zeros(shape)
    for a in range(modes + 1):
        for b in range(-modes, modes + 1):
            coef = rng.standard_normal((2, n)) / (1.0 + a * a + b * b)
            phase = a * U + b * V
            out += np.cos(phase)[..., None] * coef[0] + np.sin(phase)[..., None] * coef[1]
    return scale * out / np.max(np.abs(out))


def fd_check(f: ImmersionGrid, bg, eta, h=1e-5, delta=DEFAULT_DELTA):
    """Relative error between the AD derivative and a centered difference with step ``h``."""
    bg = _bg(f, bg)
    exact = linearize_apply(f, bg, eta, delta)
    plus = _velocity(f.points + h * eta, f.du, f.dv, bg, delta)
    minus = _velocity(f.points - h * eta, f.du, f.dv, bg, delta)
    fd = (plus - minus) / (2.0 * h)
    return float(np.linalg.norm(fd - exact) / np.linalg.norm(exact))


def symbol_probe(f: ImmersionGrid, bg=None, delta=DEFAULT_DELTA):
    """High-frequency response to ``η = e1 cos(k u)``, ``k = nu/4``, against the principal symbol.

    The oracle is ``½|A0|^-4 (g^uu)² k_h⁴`` with the stencil's modified
    wavenumber ``k_h`` at ``k``; it is compared with ``|Lη|`` on the rows where
    ``|cos(k u)| = 1``. Returns the maximal relative deviation.
    """
    from .geometry import geometry_of, stencil_symbol

    k = f.nu // 4
    U, _ = f.params()
    eta = np.zeros(f.points.shape)
    eta[..., 0] = np.cos(k * U)
    resp = linearize_apply(f, bg, eta, delta)
    c = geometry_of(f)
    kh = stencil_symbol(k * f.du) / f.du
    oracle = 0.5 / c.a0sq**2 * c.ginv[0, 0] ** 2 * kh**4
    rows = np.arange(0, f.nu, 2)
    got = np.linalg.norm(resp[rows], axis=-1)
    return float(np.max(np.abs(got - oracle[rows]) / oracle[rows]))


def richardson_study(f0: ImmersionGrid, log: PropagatorLog, xi, hs=(1e-3, 5e-4, 2.5e-4)):
    """Errors ``‖(P(f0 + hξ) - P(f0))/h - G ξ‖ / ‖G ξ‖`` for each ``h`` on the log's schedule."""
    target = linear_flow(log, 0, log.nsteps, xi)
    cfg = FlowConfig(flow_kind="deturck", t_end=np.inf, min_a0sq_floor=log.delta, background=log.bg)
    ref = run_flow(f0, cfg, schedule=list(log.dts))
    if ref.halt is not None:
        raise ref.halt
    p0 = ref.final.f.points
    errs = []
    for h in hs:
        run = run_flow(ImmersionGrid(f0.points + h * xi), cfg, schedule=list(log.dts))
        if run.halt is not None:
            raise run.halt
        z = (run.final.f.points - p0) / h
        errs.append(float(np.linalg.norm(z - target) / np.linalg.norm(target)))
    return errs
