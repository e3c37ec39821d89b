"""Spectral Neumann Poisson solver on the bin grid.

The density is sampled at bin centers ``x + 1/2`` (``x = 0..n-1``, in bin
units). Mirroring the grid about its edges and extending periodically makes
the cosine series

    rho(x, y) = sum_{u,v} a[u,v] cos(w_u (x+1/2)) cos(w_v (y+1/2)),  w_u = pi u / n

exact, with zero normal derivative on the grid boundary. Then

    psi = sum a/(w_u^2+w_v^2) cos cos
    E_x = sum a w_u/(w_u^2+w_v^2) sin cos,   E_y = sum a w_v/(w_u^2+w_v^2) cos sin

solve ``lap(psi) = -rho`` with ``E = -grad(psi)``; the (0, 0) mode of psi is
dropped so psi integrates to zero. All transforms are scipy type-II/III DCT and
type-III DST calls along one axis at a time, O(n^2 log n).

Arrays are indexed ``[ix, iy]``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy import fft

from .grid import Stencil


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("FFTPL_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class SpectralCoeffs:
    a: np.ndarray

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def w(self) -> np.ndarray:
        return np.pi * np.arange(self.n) / self.n


@dataclass
class FieldMaps:
    psi: np.ndarray
    ex: np.ndarray
    ey: np.ndarray
    coeffs: SpectralCoeffs
    w_b: float = 1.0
    h_b: float = 1.0

    @property
    def n(self) -> int:
        return self.psi.shape[0]


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def cosine_coefficients(rho: np.ndarray) -> np.ndarray:
    """a[u,v] such that the cosine series reproduces rho at bin centers."""
    n = rho.shape[0]
    # scipy's unnormalized DCT-II is 2 * sum(rho * cos), per axis
    a = fft.dctn(rho, type=2, workers=_workers()) / (n * n)
    a[0, :] *= 0.5
    a[:, 0] *= 0.5
    return a


def _cos_synth(c: np.ndarray, axis: int) -> np.ndarray:
    """sum_u c[u] cos(pi u (x+1/2) / n) along ``axis``."""
    c = np.array(c, copy=True)
    idx = [slice(None)] * c.ndim
    idx[axis] = slice(1, None)
    c[tuple(idx)] *= 0.5
    return fft.dct(c, type=3, axis=axis, workers=_workers())


def _sin_synth(c: np.ndarray, axis: int) -> np.ndarray:
    """sum_{u>=1} c[u] sin(pi u (x+1/2) / n) along ``axis``."""
    # DST-III with input z[j] = c[j+1]; z[n-1] would be the Nyquist term (absent)
    z = np.roll(c, -1, axis=axis)
    idx = [slice(None)] * c.ndim
    idx[axis] = -1
    z[tuple(idx)] = 0.0
    return 0.5 * fft.dst(z, type=3, axis=axis, workers=_workers())


def solve(rho, w_b: float = 1.0, h_b: float = 1.0) -> FieldMaps:
    """Potential and field (bin units) for a DC-removed density map.

    ``rho`` may be an ``n x n`` array or anything with ``.rho``, ``.w_b`` and
    ``.h_b`` attributes (a DensityGrid).
    """
    if hasattr(rho, "rho"):
        w_b, h_b, rho = rho.w_b, rho.h_b, rho.rho
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density must be a square n x n array")
    n = rho.shape[0]
    if not _is_pow2(n):
        raise ValueError(f"grid dimension must be a power of 2, got {n}")
    if not np.all(np.isfinite(rho)):
        raise ValueError("density contains non-finite values")

    a = cosine_coefficients(rho)
    w = np.pi * np.arange(n) / n
    wu = w[:, None]
    wv = w[None, :]
    denom = wu ** 2 + wv ** 2
    denom[0, 0] = 1.0
    b = a / denom
    b[0, 0] = 0.0

    psi = _cos_synth(_cos_synth(b, 0), 1)
    ex = _cos_synth(_sin_synth(b * wu, 0), 1)
    ey = _sin_synth(_cos_synth(b * wv, 0), 1)
    return FieldMaps(psi, ex, ey, SpectralCoeffs(a), float(w_b), float(h_b))


def evaluate(field: FieldMaps, x, y):
    """Evaluate the continuous series (psi, E_x, E_y) at bin-unit points.

    Direct O(n^2) per point; intended for probing the boundary, not hot paths.
    """
    n = field.n
    w = np.pi * np.arange(n) / n
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    denom = w[:, None] ** 2 + w[None, :] ** 2
    denom[0, 0] = 1.0
    b = field.coeffs.a / denom
    b[0, 0] = 0.0
    cx, sx = np.cos(np.outer(x, w)), np.sin(np.outer(x, w))
    cy, sy = np.cos(np.outer(y, w)), np.sin(np.outer(y, w))
    psi = np.einsum("pu,uv,pv->p", cx, b, cy)
    ex = np.einsum("pu,uv,pv->p", sx, b * w[:, None], cy)
    ey = np.einsum("pu,uv,pv->p", cx, b * w[None, :], sy)
    return psi, ex, ey


def sample(field: FieldMaps, grid, x, y, w, h):
    """Overlap-weighted (psi, E_x, E_y) for center-based rects, E in length units.

    Rects must lie inside the grid.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    w = np.broadcast_to(np.asarray(w, dtype=float), x.shape)
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    tol = 1e-9 * max(grid.w_b, grid.h_b)
    inside = ((x - w / 2 >= grid.xl - tol) & (x + w / 2 <= grid.xh + tol)
              & (y - h / 2 >= grid.yl - tol) & (y + h / 2 <= grid.yh + tol))
    if not np.all(inside):
        raise ValueError(f"{int((~inside).sum())} nodes extend outside the grid")
    psi, ex, ey = Stencil(grid, x, y, w, h).gather(field.psi, field.ex, field.ey)
    area = w * h
    return psi / area, ex / area / grid.w_b, ey / area / grid.h_b
