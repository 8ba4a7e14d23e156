"""Pointwise differential geometry of sampled tori.

A surface is an ``(nu, nv, n)`` array of points ``F(u_i, v_j)`` on the uniform
periodic grid ``u_i = i*du``, ``v_j = j*dv`` with ``du = 2π/nu``, ``dv = 2π/nv``.
Coordinate index 0 is ``u``, index 1 is ``v``.

Internally every field is stored component-first with the two grid axes last:
a covariant 2-tensor with values in R^n has shape ``(2, 2, n, nu, nv)``, the
metric ``(2, 2, nu, nv)`` and the mean curvature vector ``(n, nu, nv)``. This is
the layout of all :class:`GeometryCache` fields (numpy's einsum is several times
faster with the long axes innermost). Functions taking or returning R^n fields
in the public ``(nu, nv, n)`` layout say so; :func:`to_grid` and
:func:`from_grid` convert.

Every kernel here is written against :mod:`miwf.ad` and therefore accepts plain
arrays, :class:`~miwf.ad.Dual` or :class:`~miwf.ad.Var` inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from . import ad
from .errors import AmbientMismatch, DegenerateMetric

TWO_PI = 2.0 * np.pi
TOL_IMMERSION = 1e-10

# max over θ of |8 sin θ - sin 2θ| / 6: the largest wavenumber (times h) the
# 4th-order first-derivative stencil can represent
_c = 1.0 - np.sqrt(6.0) / 2.0
STENCIL_MAX_WAVENUMBER = float(np.sqrt(1.0 - _c**2) * (8.0 - 2.0 * _c) / 6.0)
del _c


def stencil_symbol(theta):
    """Modified wavenumber ``k_eff*h`` of the first-derivative stencil at ``θ = k*h``."""
    return (8.0 * np.sin(theta) - np.sin(2.0 * theta)) / 6.0


@dataclass(frozen=True)
class ImmersionGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 3:
            raise ValueError(f"points must have shape (nu, nv, n), got {pts.shape}")
        nu, nv, n = pts.shape
        for name, count in (("nu", nu), ("nv", nv)):
            if count < 16 or count % 2:
                raise ValueError(f"{name} must be even and >= 16, got {count}")
        if n < 2:
            raise ValueError("ambient dimension must be at least 2")
        if not np.all(np.isfinite(pts)):
            raise ValueError("immersion has non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def nu(self):
        return self.points.shape[0]

    @property
    def nv(self):
        return self.points.shape[1]

    @property
    def n(self):
        return self.points.shape[2]

    @property
    def du(self):
        return TWO_PI / self.nu

    @property
    def dv(self):
        return TWO_PI / self.nv

    def params(self):
        """Coordinate arrays ``(u, v)`` of shape ``(nu, nv)``."""
        u = np.arange(self.nu) * self.du
        v = np.arange(self.nv) * self.dv
        return np.meshgrid(u, v, indexing="ij")


def from_grid(x):
    """``(nu, nv, n)`` -> ``(n, nu, nv)``."""
    return ad.moveaxis(x, -1, 0)


def to_grid(x):
    """``(n, nu, nv)`` -> ``(nu, nv, n)``."""
    return ad.moveaxis(x, 0, -1)


def diff(a, axis, h):
    """4th-order centered periodic first derivative along ``axis``."""
    return (ad.roll(a, 2, axis) - ad.roll(a, -2, axis)
            + 8.0 * (ad.roll(a, -1, axis) - ad.roll(a, 1, axis))) / (12.0 * h)


def partials(a, du, dv):
    """Stack ``(∂_u a, ∂_v a)`` as a new leading tensor index."""
    return ad.stack([diff(a, -2, du), diff(a, -1, dv)], axis=0)


def hessian(x, du, dv):
    xu = diff(x, -2, du)
    xv = diff(x, -1, dv)
    xuu = diff(xu, -2, du)
    xuv = diff(xv, -2, du)
    xvv = diff(xv, -1, dv)
    return ad.stack([ad.stack([xuu, xuv]), ad.stack([xuv, xvv])])


def inverse_metric(g):
    """Cofactor inverse of the 2x2 metric and its determinant."""
    g00, g01, g11 = g[0, 0], g[0, 1], g[1, 1]
    detg = g00 * g11 - g01 * g01
    adj = ad.stack([ad.stack([g11, -g01]), ad.stack([-g01, g00])])
    return adj / detg[None, None], detg


def christoffel(ginv, J, hess):
    """``Γ^m_kl = g^mj <∂_kl F, ∂_j F>``, shape ``(m, k, l, nu, nv)``."""
    return ad.einsum("mj...,klj...->mkl...", ginv, ad.einsum("kln...,jn...->klj...", hess, J))


def cov_derivative(zeta, gamma, du, dv):
    """Covariant derivative of an R^n-valued covariant tensor field.

    The new index is prepended, so for a rank-3 field ``ζ_jkl`` the result is
    ``∇_i ζ_jkl`` with index order ``ijkl``.
    """
    rank = zeta.ndim - 3
    d = partials(zeta, du, dv)
    if rank == 0:
        return d
    if rank == 1:
        return d - ad.einsum("mij...,mn...->ijn...", gamma, zeta)
    if rank == 2:
        return (d - ad.einsum("mij...,mkn...->ijkn...", gamma, zeta)
                - ad.einsum("mik...,jmn...->ijkn...", gamma, zeta))
    if rank == 3:
        return (d - ad.einsum("mij...,mkln...->ijkln...", gamma, zeta)
                - ad.einsum("mik...,jmln...->ijkln...", gamma, zeta)
                - ad.einsum("mil...,jkmn...->ijkln...", gamma, zeta))
    raise ValueError(f"unsupported tensor rank {rank}")


@dataclass
class GeometryCache:
    """Metric and curvature fields (component-first layout, see module docs)."""

    du: float
    dv: float
    points: Any
    J: Any
    hess: Any
    g: Any
    ginv: Any
    detg: Any
    gamma: Any
    A: Any = None
    A0: Any = None
    H: Any = None
    a0sq: Any = None


def _metric(x, du, dv, tol):
    J = partials(x, du, dv)
    hess = hessian(x, du, dv)
    g = ad.einsum("in...,jn...->ij...", J, J)
    ginv, detg = inverse_metric(g)
    dg = ad.value(detg)
    if tol is not None and not np.all(dg > tol):
        worst = int(np.argmin(np.where(np.isfinite(dg), dg, -np.inf)))
        idx = tuple(int(i) for i in np.unravel_index(worst, dg.shape))
        raise DegenerateMetric(f"det g = {dg[idx]:.3e} <= {tol:g} at grid point {idx}", point=idx)
    gamma = christoffel(ginv, J, hess)
    return GeometryCache(du=du, dv=dv, points=x, J=J, hess=hess, g=g, ginv=ginv, detg=detg, gamma=gamma)


def _curvature(c):
    A = normal_tensor(c, c.hess)
    H = ad.einsum("ij...,ijn...->n...", c.ginv, A)
    A0 = A - 0.5 * ad.einsum("ij...,n...->ijn...", c.g, H)
    X = ad.einsum("ik...,kln...->iln...", c.ginv, A0)
    c.A, c.H, c.A0 = A, H, A0
    c.a0sq = ad.einsum("iln...,lin...->...", X, X)
    return c


def geometry(x, du, dv, tol=TOL_IMMERSION):
    """Metric and curvature fields of the points ``x`` given component-first, ``(n, nu, nv)``."""
    return _curvature(_metric(x, du, dv, tol))


def metric_pack(f: ImmersionGrid, tol=TOL_IMMERSION) -> GeometryCache:
    return _metric(from_grid(f.points), f.du, f.dv, tol)


def curvature_pack(f: ImmersionGrid, cache: GeometryCache) -> GeometryCache:
    return _curvature(cache)


def geometry_of(f: ImmersionGrid, tol=TOL_IMMERSION) -> GeometryCache:
    return geometry(from_grid(f.points), f.du, f.dv, tol)


def gg_trace(c, T):
    """``g^ij g^kl T_ijkl`` for an R^n-valued rank-4 field."""
    half = ad.einsum("kl...,ijkln...->ijn...", c.ginv, T)
    return ad.einsum("ij...,ijn...->n...", c.ginv, half)


def tangential(c, V):
    """Orthogonal projection of the R^n field ``V`` onto the tangent planes."""
    coeff = ad.einsum("mj...,j...->m...", c.ginv, ad.einsum("jn...,n...->j...", c.J, V))
    return ad.einsum("m...,mn...->n...", coeff, c.J)


def normal(c, V):
    return V - tangential(c, V)


def normal_tensor(c, T):
    """Normal part of every entry of a rank-2 R^n-valued tensor."""
    coeff = ad.einsum("mj...,klj...->klm...", c.ginv, ad.einsum("jn...,kln...->klj...", c.J, T))
    return T - ad.einsum("klm...,mn...->kln...", coeff, c.J)


def laplacian(c, V):
    """Beltrami-Laplacian ``g^kl ∇_k ∇_l V`` of an R^n-valued function."""
    dd = cov_derivative(cov_derivative(V, c.gamma, c.du, c.dv), c.gamma, c.du, c.dv)
    return ad.einsum("kl...,kln...->n...", c.ginv, dd)


def _normal_laplacian(c, V):
    d = partials(V, c.du, c.dv)
    nV = ad.stack([normal(c, d[0]), normal(c, d[1])])
    dd = partials(nV, c.du, c.dv)
    first = normal(c, ad.einsum("kl...,kln...->n...", c.ginv, dd))
    contracted = ad.einsum("kl...,mkl...->m...", c.ginv, c.gamma)
    return first - ad.einsum("m...,mn...->n...", contracted, nV)


def _q_operator(c, T, phi):
    s = ad.einsum("jlp...,p...->jl...", T, phi)
    s = ad.einsum("ij...,jl...->il...", c.ginv, s)
    s = ad.einsum("kl...,il...->ik...", c.ginv, s)
    return ad.einsum("ik...,ikn...->n...", s, T)


def sqnorm(V):
    return ad.einsum("n...,n...->...", V, V)


def _willmore_gradient(c, path="right"):
    H = c.H
    if path == "left":
        return 0.5 * (_normal_laplacian(c, H) + _q_operator(c, c.A0, H))
    if path == "right":
        return 0.5 * (normal(c, laplacian(c, H)) + 2.0 * _q_operator(c, c.A, H)
                      - 0.5 * sqnorm(H)[None] * H)
    raise ValueError(f"unknown path {path!r}")


def normal_laplacian(c, V):
    """``Δ^⊥V = g^kl ∇^⊥_k ∇^⊥_l V`` with ``∇^⊥_i V = (∂_i V)^⊥``; ``V`` in ``(nu, nv, n)`` layout."""
    return to_grid(_normal_laplacian(c, from_grid(V)))


def q_operator(c, T, phi):
    """``Q(T)(φ) = g^ij g^kl T_ik <T_jl, φ>`` for ``T`` = ``c.A`` or ``c.A0``; ``φ`` in ``(nu, nv, n)`` layout."""
    return to_grid(_q_operator(c, T, from_grid(phi)))


def willmore_gradient(c, path="right"):
    """L² gradient ``½(Δ^⊥H + Q(A⁰)H)`` of the Willmore functional, ``(nu, nv, n)`` layout.

    ``path="right"`` assembles it as ``½((ΔH)^⊥ + 2Q(A)H - ½|H|²H)``;
    ``path="left"`` evaluates the normal Laplacian directly.
    """
    return to_grid(_willmore_gradient(c, path))


def area_weights(c):
    """Quadrature weights ``√det g · du · dv`` (product trapezoid rule), shape ``(nu, nv)``."""
    return np.sqrt(ad.value(c.detg)) * c.du * c.dv


def willmore_energy(c, ambient="euclidean"):
    """Trapezoid quadrature of ``∫ K^M + ¼|H|² dμ``.

    For ``ambient="sphere"`` the surface must lie on the unit sphere; the mean
    curvature is then taken inside the sphere, ``H - <H, x> x``, and ``K^M = 1``.
    """
    H = ad.value(c.H)
    w = area_weights(c)
    if ambient == "euclidean":
        density = 0.25 * np.einsum("n...,n...->...", H, H)
    elif ambient == "sphere":
        x = ad.value(c.points)
        radius_err = np.max(np.abs(np.sqrt(np.einsum("n...,n...->...", x, x)) - 1.0))
        if radius_err > 1e-8:
            raise AmbientMismatch(f"surface is off the unit sphere by {radius_err:.3e}")
        Hs = H - np.einsum("n...,n...->...", H, x)[None] * x
        density = 1.0 + 0.25 * np.einsum("n...,n...->...", Hs, Hs)
    else:
        raise ValueError(f"unknown ambient {ambient!r}")
    return float(np.sum(density * w))


def integrate(c, density):
    """``∫ density dμ`` for a scalar field of shape ``(nu, nv)``."""
    return float(np.sum(ad.value(density) * area_weights(c)))


@dataclass(frozen=True)
class BackgroundConnection:
    """Fixed reference immersion ``F0`` with its Christoffel symbols and partials."""

    f0: ImmersionGrid
    gamma: np.ndarray
    J: np.ndarray
    hess: np.ndarray
    third: np.ndarray

    @classmethod
    def from_immersion(cls, f0: ImmersionGrid):
        c = metric_pack(f0)
        third = partials(c.hess, f0.du, f0.dv)
        return cls(f0=f0, gamma=c.gamma, J=c.J, hess=c.hess, third=third)

    def check_compatible(self, shape):
        if tuple(shape) != self.f0.points.shape:
            raise ValueError(f"background grid {self.f0.points.shape} does not match {tuple(shape)}")


def covariant_derivatives(c, bg: BackgroundConnection):
    """Covariant derivatives of ``f`` w.r.t. the background and mixed connections.

    Keys ``"1".."4"`` hold ``∇^{F0}_{i..} f`` of that order and ``"mixed"`` holds
    ``∇^f_i ∇^f_j ∇^{F0}_k ∇^{F0}_l f``; all component-first.
    """
    g0 = bg.gamma
    if g0.shape[-2:] != ad.value(c.detg).shape:
        raise ValueError("background grid does not match")
    second = c.hess - ad.einsum("mkl...,mn...->kln...", g0, c.J)
    third = cov_derivative(second, g0, c.du, c.dv)
    fourth = cov_derivative(third, g0, c.du, c.dv)
    mixed = cov_derivative(cov_derivative(second, c.gamma, c.du, c.dv), c.gamma, c.du, c.dv)
    return {"1": c.J, "2": second, "3": third, "4": fourth, "mixed": mixed}
