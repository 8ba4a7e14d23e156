"""MIWF and DeTurck velocities, explicit RK4 stepping, and run orchestration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import ad
from .errors import NonFinite, NumericalHalt, UmbilicDegeneracy
from .geometry import (
    STENCIL_MAX_WAVENUMBER,
    BackgroundConnection,
    GeometryCache,
    ImmersionGrid,
    _q_operator,
    _willmore_gradient,
    cov_derivative,
    covariant_derivatives,
    from_grid,
    geometry,
    geometry_of,
    gg_trace,
    sqnorm,
    tangential,
    to_grid,
    willmore_energy,
)

DEFAULT_DELTA = 1e-4


@dataclass
class FlowConfig:
    flow_kind: str = "miwf"
    t_end: float = 1.0
    safety: float = 0.5
    min_a0sq_floor: float = DEFAULT_DELTA
    snapshot_every: int = 0
    background: Optional[BackgroundConnection] = None
    max_steps: Optional[int] = None
    path: str = "A"

    def __post_init__(self):
        if self.flow_kind not in ("miwf", "deturck"):
            raise ValueError(f"unknown flow kind {self.flow_kind!r}")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")
        if not 0 < self.safety <= 1:
            raise ValueError("safety must lie in (0, 1]")
        if not self.min_a0sq_floor > 0:
            raise ValueError("min_a0sq_floor must be positive")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")


@dataclass
class FlowState:
    step: int
    t: float
    f: ImmersionGrid
    energy: float
    min_a0sq: float
    max_speed: float
    last_dt: float
    velocity: Optional[np.ndarray] = field(default=None, repr=False)

    def row(self):
        return (self.step, self.t, self.last_dt, self.energy, self.min_a0sq, self.max_speed)


@dataclass
class Trajectory:
    states: list
    snapshots: list
    halt: Optional[NumericalHalt] = None
    stages: Optional[list] = None

    @property
    def halt_reason(self):
        return None if self.halt is None else self.halt.reason

    @property
    def final(self):
        return self.states[-1]


def check_umbilic(c: GeometryCache, delta=DEFAULT_DELTA):
    a = ad.value(c.a0sq)
    if not np.all(np.isfinite(a)):
        raise NonFinite("non-finite |A0|^2")
    if delta is not None and np.min(a) <= delta:
        idx = tuple(int(i) for i in np.unravel_index(int(np.argmin(a)), a.shape))
        raise UmbilicDegeneracy(f"|A0|^2 = {a[idx]:.3e} <= {delta:g} at grid point {idx}", point=idx)


def _miwf(c, path="right"):
    return -(c.a0sq**-2)[None] * _willmore_gradient(c, path)


def tan_term(c: GeometryCache, bg: BackgroundConnection):
    """Tangential DeTurck term built from ``C = Γ(F0) - Γ(f)`` (component-first layout)."""
    C = bg.gamma - c.gamma
    T = ad.einsum("mkl...,mn...->kln...", C, c.J)
    nabla3 = cov_derivative(c.A, c.gamma, c.du, c.dv)
    nabla4 = cov_derivative(nabla3, c.gamma, c.du, c.dv)
    lead = tangential(c, gg_trace(c, nabla4))
    ddT = cov_derivative(cov_derivative(T, c.gamma, c.du, c.dv), c.gamma, c.du, c.dv)
    return lead - gg_trace(c, ddT)


def _deturck(c, bg, path="A"):
    w = -0.5 * (c.a0sq**-2)[None]
    if path == "A":
        return w * (2.0 * _willmore_gradient(c) + tan_term(c, bg))
    if path == "B":
        mixed = covariant_derivatives(c, bg)["mixed"]
        lead = gg_trace(c, mixed)
        H = c.H
        rest = 2.0 * _q_operator(c, c.A, H) - 0.5 * sqnorm(H)[None] * H
        return w * (lead + rest)
    raise ValueError(f"unknown path {path!r}")


def miwf_field(x, du, dv, delta=DEFAULT_DELTA):
    """MIWF velocity of raw ``(nu, nv, n)`` points ``x`` (array, Dual or Var)."""
    c = geometry(from_grid(x), du, dv)
    check_umbilic(c, delta)
    return to_grid(_miwf(c))


def deturck_field(x, du, dv, bg, delta=DEFAULT_DELTA, path="A"):
    c = geometry(from_grid(x), du, dv)
    check_umbilic(c, delta)
    return to_grid(_deturck(c, bg, path))


def miwf_velocity(f: ImmersionGrid, cache=None, delta=DEFAULT_DELTA):
    """``-|A0|^-4 ∇W(f)``."""
    c = cache if cache is not None else geometry_of(f)
    check_umbilic(c, delta)
    return to_grid(_miwf(c))


def deturck_velocity(f: ImmersionGrid, cache=None, bg=None, delta=DEFAULT_DELTA, path="A"):
    """DeTurck-modified velocity with background ``bg`` (defaults to ``f`` itself)."""
    c = cache if cache is not None else geometry_of(f)
    bg = bg if bg is not None else BackgroundConnection.from_immersion(f)
    bg.check_compatible(f.points.shape)
    check_umbilic(c, delta)
    return to_grid(_deturck(c, bg, path))


def _eig_ginv(c):
    gi = ad.value(c.ginv)
    a, b, d = gi[0, 0], gi[0, 1], gi[1, 1]
    mid = 0.5 * (a + d)
    rad = np.sqrt(0.25 * (a - d) ** 2 + b * b)
    return mid - rad, mid + rad


def symbol_bounds(c: GeometryCache):
    """Extremes of ``½|A0|^-4 (g^ij ξ_i ξ_j)²`` over the grid and Euclidean-unit ``ξ``."""
    lo, hi = _eig_ginv(c)
    w = 0.5 / ad.value(c.a0sq) ** 2
    return float(np.min(w * lo**2)), float(np.max(w * hi**2))


def stability_dt(c: GeometryCache, safety=0.5):
    """Explicit time step ``σ / (c_max k_max⁴)`` for the quartic principal part."""
    _, hi = _eig_ginv(c)
    c_max = float(np.max(0.5 / ad.value(c.a0sq) ** 2 * hi**2))
    k_max = STENCIL_MAX_WAVENUMBER / min(c.du, c.dv)
    return safety / (c_max * k_max**4)


def velocity_function(config: FlowConfig, f0: ImmersionGrid) -> Callable:
    """Velocity map ``points -> R^n field`` for the configured flow."""
    du, dv = f0.du, f0.dv
    delta = config.min_a0sq_floor
    if config.flow_kind == "miwf":
        return lambda x: miwf_field(x, du, dv, delta)
    bg = config.background if config.background is not None else BackgroundConnection.from_immersion(f0)
    bg.check_compatible(f0.points.shape)
    return lambda x: deturck_field(x, du, dv, bg, delta, config.path)


def _finite(x, what):
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"non-finite {what}")
    return x


def make_state(f: ImmersionGrid, step, t, last_dt, velocity_fn, delta=DEFAULT_DELTA):
    c = geometry_of(f)
    check_umbilic(c, delta)
    vel = _finite(velocity_fn(f.points), "velocity")
    energy = willmore_energy(c)
    _finite(energy, "energy")
    return FlowState(step=step, t=t, f=f, energy=energy, min_a0sq=float(np.min(c.a0sq)),
                     max_speed=float(np.max(np.linalg.norm(vel, axis=-1))), last_dt=last_dt,
                     velocity=vel), c


def rk4_step(state: FlowState, config: FlowConfig, velocity_fn=None, dt=None, stages=None):
    """One classical RK4 step; ``dt`` defaults to :func:`stability_dt` at ``state``.

    When ``stages`` is a list the four stage base states are appended to it.
    """
    f = state.f
    velocity_fn = velocity_fn or velocity_function(config, f)
    if dt is None:
        c = geometry_of(f)
        dt = min(stability_dt(c, config.safety), config.t_end - state.t)
    x = f.points
    k1 = state.velocity if state.velocity is not None else velocity_fn(x)
    x2 = x + (0.5 * dt) * k1
    k2 = _finite(velocity_fn(x2), "velocity")
    x3 = x + (0.5 * dt) * k2
    k3 = _finite(velocity_fn(x3), "velocity")
    x4 = x + dt * k3
    k4 = _finite(velocity_fn(x4), "velocity")
    xn = _finite(x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), "immersion")
    if stages is not None:
        stages.append((x, x2, x3, x4))
    new, _ = make_state(ImmersionGrid(xn), state.step + 1, state.t + dt, dt, velocity_fn,
                        config.min_a0sq_floor)
    return new


def run_flow(f0: ImmersionGrid, config: FlowConfig, schedule=None, record_stages=False,
             on_state=None) -> Trajectory:
    """Integrate from ``f0`` until ``t_end``, ``max_steps`` or a numerical halt.

    ``schedule`` replays a given list of time steps instead of the adaptive CFL
    choice; with ``record_stages`` the RK4 stage states of every step are kept.
    """
    velocity_fn = velocity_function(config, f0)
    stages = [] if record_stages else None
    traj = Trajectory(states=[], snapshots=[], stages=stages)
    try:
        state, _ = make_state(f0, 0, 0.0, 0.0, velocity_fn, config.min_a0sq_floor)
    except NumericalHalt as exc:
        traj.halt = exc
        return traj
    traj.states.append(state)
    if on_state:
        on_state(state)
    if config.snapshot_every:
        traj.snapshots.append((0, 0.0, f0))
    limit = len(schedule) if schedule is not None else config.max_steps
    while True:
        if limit is not None and state.step >= limit:
            break
        if schedule is None and state.t >= config.t_end:
            break
        dt = None if schedule is None else schedule[state.step]
        try:
            state = rk4_step(state, config, velocity_fn, dt=dt, stages=stages)
        except NumericalHalt as exc:
            traj.halt = exc
            break
        traj.states.append(state)
        if on_state:
            on_state(state)
        if config.snapshot_every and state.step % config.snapshot_every == 0:
            traj.snapshots.append((state.step, state.t, state.f))
    for s in traj.states[:-1]:
        s.velocity = None
    return traj
