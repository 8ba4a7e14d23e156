"""Reference immersions sampled on the periodic grid."""

import numpy as np

from .geometry import TWO_PI, ImmersionGrid
from .moebius import stereographic


def _params(nu, nv):
    u = np.arange(nu) * (TWO_PI / nu)
    v = np.arange(nv) * (TWO_PI / nv)
    return np.meshgrid(u, v, indexing="ij")


def build_torus_of_revolution(R, r, nu, nv):
    """Torus with tube radius ``r`` around a core circle of radius ``R`` (``u`` runs around the tube)."""
    if not (r > 0 and R > r):
        raise ValueError(f"need 0 < r < R, got R={R}, r={r}")
    u, v = _params(nu, nv)
    rho = R + r * np.cos(u)
    return ImmersionGrid(np.stack([rho * np.cos(v), rho * np.sin(v), r * np.sin(u)], axis=-1))


def build_clifford_torus(nu, nv):
    """Clifford torus ``(cos u, sin u, cos v, sin v)/√2`` in S³ ⊂ R⁴."""
    u, v = _params(nu, nv)
    return ImmersionGrid(np.stack([np.cos(u), np.sin(u), np.cos(v), np.sin(v)], axis=-1) / np.sqrt(2.0))


def build_clifford_stereo(nu, nv):
    """Stereographic image in R³ of the Clifford torus (pole ``e4``): a torus of revolution with ``R/r = √2``."""
    return ImmersionGrid(stereographic(build_clifford_torus(nu, nv).points))


def torus_energy(ratio):
    """Exact Willmore energy ``π² t² / √(t² - 1)`` of a torus of revolution with ``R/r = t``."""
    return np.pi**2 * ratio**2 / np.sqrt(ratio**2 - 1.0)
