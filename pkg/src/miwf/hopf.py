"""Closed curves on S², their elastic flow, and Hopf tori over them.

Curves are sampled at ``t_j = 2πj/N`` with arbitrary (nonvanishing) speed; all
derivatives use the same 4th-order periodic stencil as the surface code.
Points of S³ ⊂ C² ≅ R⁴ are stored as ``(Re z1, Im z1, Re z2, Im z2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IrregularCurve, NonFinite
from .geometry import STENCIL_MAX_WAVENUMBER, TWO_PI, ImmersionGrid, diff, geometry_of, willmore_energy

TOL_SPHERE = 1e-10
TOL_REGULAR = 1e-10


@dataclass(frozen=True)
class CurveGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"curve points must have shape (N, 3), got {pts.shape}")
        if pts.shape[0] < 8 or pts.shape[0] % 2:
            raise ValueError("N must be even and >= 8")
        if not np.all(np.isfinite(pts)):
            raise NonFinite("curve has non-finite coordinates")
        err = np.max(np.abs(np.linalg.norm(pts, axis=1) - 1.0))
        if err > TOL_SPHERE:
            raise ValueError(f"curve is off S² by {err:.3e}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def N(self):
        return self.points.shape[0]

    @property
    def h(self):
        return TWO_PI / self.N

    def params(self):
        return np.arange(self.N) * self.h


def _on_sphere(pts):
    return CurveGrid(pts / np.linalg.norm(pts, axis=1, keepdims=True))


def great_circle(N):
    t = np.arange(N) * (TWO_PI / N)
    return CurveGrid(np.stack([np.cos(t), np.sin(t), np.zeros(N)], axis=1))


def latitude(theta0, N):
    """Circle at polar angle ``theta0``."""
    t = np.arange(N) * (TWO_PI / N)
    s = np.sin(theta0)
    return CurveGrid(np.stack([s * np.cos(t), s * np.sin(t), np.full(N, np.cos(theta0))], axis=1))


def wavy(amplitude, mode, N):
    """Great circle with a normal ripple ``amplitude * sin(mode t)``, pushed back to S²."""
    t = np.arange(N) * (TWO_PI / N)
    return _on_sphere(np.stack([np.cos(t), np.sin(t), amplitude * np.sin(mode * t)], axis=1))


@dataclass
class CurveGeometry:
    speed: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    kappa_vec: np.ndarray
    kappa: np.ndarray


def curve_geometry(gamma: CurveGrid) -> CurveGeometry:
    """Arclength element, unit tangent, oriented normal ``γ × T`` and geodesic curvature."""
    x = gamma.points
    d1 = diff(x, 0, gamma.h)
    speed = np.linalg.norm(d1, axis=1)
    if np.min(speed) < TOL_REGULAR:
        raise IrregularCurve(f"|γ'| = {np.min(speed):.3e}", point=int(np.argmin(speed)))
    T = d1 / speed[:, None]
    Nrm = np.cross(x, T)
    acc = diff(T, 0, gamma.h) / speed[:, None]
    kappa = np.einsum("in,in->i", acc, Nrm)
    return CurveGeometry(speed=speed, tangent=T, normal=Nrm, kappa_vec=kappa[:, None] * Nrm, kappa=kappa)


def elastic_energy(gamma: CurveGrid, geo=None):
    """``∫ 1 + |κ|² ds`` by the trapezoid rule."""
    geo = geo or curve_geometry(gamma)
    return float(np.sum((1.0 + geo.kappa**2) * geo.speed) * gamma.h)


def _normal_derivative(gamma, geo, V):
    dV = diff(V, 0, gamma.h) / geo.speed[:, None]
    return np.einsum("in,in->i", dV, geo.normal)[:, None] * geo.normal


def curve_flow_velocity(gamma: CurveGrid, geo=None):
    """``-(κ²+1)^-2 (2(∇^⊥)²κ + |κ|²κ + κ)``, a field normal to γ in TS²."""
    geo = geo or curve_geometry(gamma)
    kv = geo.kappa_vec
    dd = _normal_derivative(gamma, geo, _normal_derivative(gamma, geo, kv))
    k2 = geo.kappa**2
    return -((k2 + 1.0) ** -2)[:, None] * (2.0 * dd + k2[:, None] * kv + kv)


def curve_dt(gamma: CurveGrid, geo=None, safety=0.5):
    """Explicit step for the leading ``2(κ²+1)^-2 ∂_s⁴`` part."""
    geo = geo or curve_geometry(gamma)
    c_max = np.max(2.0 / (geo.kappa**2 + 1.0) ** 2 / geo.speed**4)
    k_max = STENCIL_MAX_WAVENUMBER / gamma.h
    return safety / (c_max * k_max**4)


def curve_flow_step(gamma: CurveGrid, dt=None, safety=0.5):
    """One RK4 step followed by projection back to S²."""
    if dt is None:
        dt = curve_dt(gamma, safety=safety)

    def vel(p):
        return curve_flow_velocity(_on_sphere(p))

    x = gamma.points
    k1 = vel(x)
    k2 = vel(x + 0.5 * dt * k1)
    k3 = vel(x + 0.5 * dt * k2)
    k4 = vel(x + dt * k3)
    xn = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(xn)):
        raise NonFinite("curve flow produced non-finite values")
    return _on_sphere(xn), dt


def run_curve_flow(gamma: CurveGrid, steps, safety=0.5):
    """Return the list of curves (including the start) and their elastic energies."""
    curves, energies = [gamma], [elastic_energy(gamma)]
    for _ in range(steps):
        gamma, _ = curve_flow_step(gamma, safety=safety)
        curves.append(gamma)
        energies.append(elastic_energy(gamma))
    return curves, energies


# --- Hopf fibration -----------------------------------------------------------------

def hopf_map(z):
    """``π(z1, z2) = (2 Re z1 z̄2, 2 Im z1 z̄2, |z1|² - |z2|²)`` on ``(..., 4)`` arrays."""
    a, b, c, d = np.moveaxis(z, -1, 0)
    return np.stack([2 * (a * c + b * d), 2 * (b * c - a * d), a * a + b * b - c * c - d * d], axis=-1)


def _to_c2(z):
    return z[..., 0] + 1j * z[..., 1], z[..., 2] + 1j * z[..., 3]


def _from_c2(z1, z2):
    return np.stack([z1.real, z1.imag, z2.real, z2.imag], axis=-1)


def hopf_section(p):
    """A point of the fiber over ``p`` ∈ S², using whichever chart is better conditioned."""
    x, y, z = np.moveaxis(np.asarray(p, dtype=float), -1, 0)
    upper = z >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        a1 = np.sqrt(np.clip((1 + z) / 2, 0, None))
        u2 = (x - 1j * y) / (2 * a1)
        b2 = np.sqrt(np.clip((1 - z) / 2, 0, None))
        l1 = (x + 1j * y) / (2 * b2)
    z1 = np.where(upper, a1 + 0j, l1)
    z2 = np.where(upper, u2, b2 + 0j)
    return _from_c2(z1, z2)


def _hopf_jacobian_t(z, w):
    """``J(z)ᵀ w`` for the differential ``J`` of :func:`hopf_map`."""
    a, b, c, d = z
    M = np.array([[2 * c, 2 * d, 2 * a, 2 * b], [-2 * d, 2 * c, 2 * b, -2 * a], [2 * a, 2 * b, -2 * c, -2 * d]])
    return M.T @ w


def _spectral_derivative_and_mid(x):
    N = x.shape[0]
    X = np.fft.fft(x, axis=0)
    k = np.fft.fftfreq(N, 1.0 / N)
    if N % 2 == 0:
        k_d = k.copy()
        k_d[N // 2] = 0.0
    d = np.real(np.fft.ifft(1j * k_d[:, None] * X, axis=0))
    dmid = np.real(np.fft.ifft(1j * k_d[:, None] * X * np.exp(1j * k_d[:, None] * np.pi / N), axis=0))
    return d, dmid


def _snap(z, p):
    s = hopf_section(p)
    s1, s2 = _to_c2(s)
    z1, z2 = _to_c2(z)
    phase = np.angle(np.conj(s1) * z1 + np.conj(s2) * z2)
    e = np.exp(1j * phase)
    return _from_c2(s1 * e, s2 * e)


def horizontal_lift(gamma: CurveGrid):
    """Horizontal lift through ``σ(γ(0))`` and its holonomy angle ``α`` (``z(2π) = e^{iα} z(0)``)."""
    x = gamma.points
    N = gamma.N
    h = gamma.h
    dx, dmid = _spectral_derivative_and_mid(x)
    z = np.empty((N + 1, 4))
    z[0] = hopf_section(x[0])
    for j in range(N):
        zj = z[j]
        w0, wm, w1 = dx[j], dmid[j], dx[(j + 1) % N]
        k1 = 0.25 * _hopf_jacobian_t(zj, w0)
        k2 = 0.25 * _hopf_jacobian_t(zj + 0.5 * h * k1, wm)
        k3 = 0.25 * _hopf_jacobian_t(zj + 0.5 * h * k2, wm)
        k4 = 0.25 * _hopf_jacobian_t(zj + h * k3, w1)
        zn = zj + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        z[j + 1] = _snap(zn / np.linalg.norm(zn), x[(j + 1) % N])
    a1, a2 = _to_c2(z[0])
    b1, b2 = _to_c2(z[N])
    alpha = float(np.angle(np.conj(a1) * b1 + np.conj(a2) * b2))
    return z[:N], alpha


@dataclass(frozen=True)
class HopfLift:
    grid: ImmersionGrid
    holonomy: float


def hopf_torus(gamma: CurveGrid, n_theta) -> HopfLift:
    """The torus ``π⁻¹(γ)`` sampled as ``X(θ_i, s_j) = e^{iθ_i} z̃(s_j)``.

    ``z̃`` is the horizontal lift with its holonomy spread uniformly along the
    curve so that it closes up.
    """
    z, alpha = horizontal_lift(gamma)
    s = gamma.params()
    z1, z2 = _to_c2(z)
    rot = np.exp(-1j * alpha * s / TWO_PI)
    z1, z2 = z1 * rot, z2 * rot
    theta = np.arange(n_theta) * (TWO_PI / n_theta)
    e = np.exp(1j * theta)[:, None]
    pts = _from_c2(e * z1[None, :], e * z2[None, :])
    return HopfLift(grid=ImmersionGrid(pts), holonomy=alpha)


def hopf_project(lift: HopfLift) -> CurveGrid:
    pts = hopf_map(lift.grid.points[0])
    return CurveGrid(pts / np.linalg.norm(pts, axis=1, keepdims=True))


def willmore_elastic_check(gamma: CurveGrid, n_theta):
    """``(W(π⁻¹γ), π·W̃(γ), relative difference)`` with ``W`` computed inside S³."""
    lift = hopf_torus(gamma, n_theta)
    W = willmore_energy(geometry_of(lift.grid), ambient="sphere")
    Wt = np.pi * elastic_energy(gamma)
    return W, Wt, abs(W - Wt) / abs(Wt)
