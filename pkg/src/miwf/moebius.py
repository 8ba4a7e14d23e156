"""Möbius transformations of R^n, their differentials, and stereographic charts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InversionCenterOnSurface, PoleOnSurface
from .geometry import ImmersionGrid

TOL_CENTER = 1e-6


@dataclass(frozen=True)
class Translation:
    b: np.ndarray

    def apply(self, x):
        return x + np.asarray(self.b, dtype=float)

    def push(self, x, v):
        return v


@dataclass(frozen=True)
class Orthogonal:
    Q: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError("orthogonal map needs a square matrix")
        if np.max(np.abs(Q.T @ Q - np.eye(len(Q)))) > 1e-12:
            raise ValueError("matrix is not orthogonal")
        object.__setattr__(self, "Q", Q)

    def apply(self, x):
        return np.einsum("ij,...j->...i", self.Q, x)

    def push(self, x, v):
        return np.einsum("ij,...j->...i", self.Q, v)


@dataclass(frozen=True)
class Dilation:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("dilation factor must be positive")

    def apply(self, x):
        return self.lam * x

    def push(self, x, v):
        return self.lam * v


@dataclass(frozen=True)
class SphereInversion:
    """``x -> c + ρ² (x - c)/|x - c|²``."""

    center: np.ndarray
    rho: float = 1.0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("inversion radius must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def check(self, x, tol=TOL_CENTER):
        dist = np.linalg.norm(x - self.center, axis=-1)
        if np.min(dist) < tol:
            idx = tuple(int(i) for i in np.unravel_index(int(np.argmin(dist)), dist.shape))
            raise InversionCenterOnSurface(
                f"inversion center within {dist[idx]:.3e} of the surface at grid point {idx}")

    def apply(self, x):
        d = x - self.center
        r2 = np.einsum("...n,...n->...", d, d)
        return self.center + (self.rho**2 / r2)[..., None] * d

    def push(self, x, v):
        d = x - self.center
        r2 = np.einsum("...n,...n->...", d, d)
        dv = np.einsum("...n,...n->...", d, v)
        return (self.rho**2 / r2)[..., None] * (v - (2.0 * dv / r2)[..., None] * d)


def rotation(axis, angle):
    """Rotation of R³ about ``axis`` (Rodrigues)."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return Orthogonal(np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K)


@dataclass(frozen=True)
class MoebiusMap:
    """Composition of generators, applied left to right."""

    generators: tuple = field(default_factory=tuple)

    def then(self, other: "MoebiusMap") -> "MoebiusMap":
        """The map ``other ∘ self``."""
        return MoebiusMap(tuple(self.generators) + tuple(other.generators))

    def __matmul__(self, inner: "MoebiusMap") -> "MoebiusMap":
        return inner.then(self)

    def apply(self, x, tol_center=TOL_CENTER):
        x = np.asarray(x, dtype=float)
        for gen in self.generators:
            if isinstance(gen, SphereInversion):
                gen.check(x, tol_center)
            x = gen.apply(x)
        return x

    def push(self, x, v, tol_center=TOL_CENTER):
        """Differential ``DΦ_x v`` for point and vector arrays of equal shape."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        for gen in self.generators:
            if isinstance(gen, SphereInversion):
                gen.check(x, tol_center)
            v = gen.push(x, v)
            x = gen.apply(x)
        return v

    @property
    def is_similarity(self):
        return not any(isinstance(g, SphereInversion) for g in self.generators)


def compose(*maps):
    """``compose(a, b, c)`` is ``a ∘ b ∘ c``."""
    out = MoebiusMap()
    for m in reversed(maps):
        out = out.then(m)
    return out


def apply_to_immersion(phi: MoebiusMap, f: ImmersionGrid, tol_center=TOL_CENTER) -> ImmersionGrid:
    return ImmersionGrid(phi.apply(f.points, tol_center))


def invariance_residual(phi: MoebiusMap, f: ImmersionGrid, velocity, tol_center=TOL_CENTER):
    """``max |DΦ·V(f) - V(Φ∘f)| / (1 + |V(Φ∘f)|)`` over the grid."""
    g = apply_to_immersion(phi, f, tol_center)
    pushed = phi.push(f.points, velocity(f), tol_center)
    direct = velocity(g)
    err = np.linalg.norm(pushed - direct, axis=-1)
    return float(np.max(err / (1.0 + np.linalg.norm(direct, axis=-1))))


def _householder(pole):
    p = np.asarray(pole, dtype=float)
    if abs(np.linalg.norm(p) - 1.0) > 1e-12:
        raise ValueError("pole must be a unit vector")
    e = np.zeros_like(p)
    e[-1] = 1.0
    w = p - e
    nw = w @ w
    if nw < 1e-30:
        return np.eye(len(p))
    return np.eye(len(p)) - 2.0 * np.outer(w, w) / nw


def stereographic(x, pole=None, tol=TOL_CENTER):
    """Project points of the unit sphere S^{n-1} to R^{n-1} from ``pole``.

    Coordinates on the target come from an orthonormal basis of ``pole``'s
    complement; for ``pole = e_n`` this is just ``x[:-1] / (1 - x_n)``.
    """
    x = np.asarray(x, dtype=float)
    pole = np.eye(x.shape[-1])[-1] if pole is None else np.asarray(pole, dtype=float)
    dist = np.linalg.norm(x - pole, axis=-1)
    if np.min(dist) < tol:
        raise PoleOnSurface(f"projection pole within {np.min(dist):.3e} of the surface")
    Hx = np.einsum("ij,...j->...i", _householder(pole), x)
    return Hx[..., :-1] / (1.0 - Hx[..., -1:])


def inverse_stereographic(y, pole=None):
    y = np.asarray(y, dtype=float)
    n = y.shape[-1] + 1
    pole = np.eye(n)[-1] if pole is None else np.asarray(pole, dtype=float)
    r2 = np.einsum("...n,...n->...", y, y)[..., None]
    z = np.concatenate([2.0 * y, r2 - 1.0], axis=-1) / (r2 + 1.0)
    return np.einsum("ji,...j->...i", _householder(pole), z)


def apply_map(phi: MoebiusMap, f: ImmersionGrid, tol_center=TOL_CENTER) -> ImmersionGrid:
    return apply_to_immersion(phi, f, tol_center)


def differential(phi: MoebiusMap, x, tol_center=TOL_CENTER):
    """Jacobian matrix ``DΦ_x`` at a single point ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    cols = phi.push(np.broadcast_to(x, (n, n)), np.eye(n), tol_center)
    return cols.T


def conformal_energy_check(phi: MoebiusMap, f: ImmersionGrid, tol_center=TOL_CENTER):
    """``(W(f), W(Φ∘f), |difference|)`` in Euclidean space."""
    from .geometry import geometry_of, willmore_energy

    w0 = willmore_energy(geometry_of(f))
    w1 = willmore_energy(geometry_of(apply_to_immersion(phi, f, tol_center)))
    return w0, w1, abs(w0 - w1)
