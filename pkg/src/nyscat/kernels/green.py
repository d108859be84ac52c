"""Free-space Helmholtz kernel, exp(-i omega t) time convention."""

from __future__ import annotations

import numpy as np

__all__ = ["green", "green_gradient"]

_FOUR_PI = 4.0 * np.pi


def _pair_geometry(r, rp):
    d = np.asarray(r, dtype=float) - np.asarray(rp, dtype=float)
    return d, np.sqrt(np.einsum("...c,...c->...", d, d))


def green(r, rp, k: float):
    """exp(ik|r-r'|)/(4 pi |r-r'|), broadcasting over leading axes.

    r (..., 3) and rp (..., 3) broadcast against each other; callers pass
    shapes like (T, 1, 3) and (S, 3) for pairwise tables.  Coincident points
    are rejected, the kernel has no finite value there.
    """
    _, dist = _pair_geometry(r, rp)
    if np.any(dist < 1e-300):
        raise ValueError("green kernel evaluated at coincident points")
    return np.exp(1j * k * dist) / (_FOUR_PI * dist)


def green_gradient(r, rp, k: float):
    """Gradient of green with respect to r, shape (..., 3)."""
    d, dist = _pair_geometry(r, rp)
    if np.any(dist < 1e-300):
        raise ValueError("green kernel evaluated at coincident points")
    scale = np.exp(1j * k * dist) * (1j * k * dist - 1.0) / (_FOUR_PI * dist**3)
    return scale[..., None] * d
