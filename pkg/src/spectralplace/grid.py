"""Bin geometry and exact rectangle/bin overlap splatting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# nodes spanning more bins than this go through the per-node path
_SMALL_SPAN = 256


@dataclass(frozen=True)
class GridSpec:
    n: int
    xl: float
    yl: float
    w_b: float
    h_b: float

    @classmethod
    def for_region(cls, region, n: int) -> "GridSpec":
        return cls(int(n), region.xl, region.yl, region.width / n, region.height / n)

    @property
    def bin_area(self) -> float:
        return self.w_b * self.h_b

    @property
    def xh(self) -> float:
        return self.xl + self.n * self.w_b

    @property
    def yh(self) -> float:
        return self.yl + self.n * self.h_b


def _axis_overlaps(lo, hi, origin, size, n):
    """Per-rect first bin, bin count and padded overlap lengths along one axis."""
    i0 = np.clip(np.floor((lo - origin) / size).astype(np.int64), 0, n - 1)
    i1 = np.clip(np.ceil((hi - origin) / size).astype(np.int64) - 1, 0, n - 1)
    i1 = np.maximum(i1, i0)
    return i0, i1 - i0 + 1


def _overlap_table(lo, hi, i0, k, origin, size, n):
    ks = np.arange(k)
    idx = i0[:, None] + ks[None, :]
    o = np.minimum(hi[:, None], origin + (idx + 1) * size) - np.maximum(lo[:, None], origin + idx * size)
    o = np.clip(o, 0.0, None)
    o[idx > n - 1] = 0.0
    return np.minimum(idx, n - 1), o


class Stencil:
    """Overlap areas between a set of center-based rectangles and grid bins.

    ``splat`` scatters per-rect weights onto the grid (weight * overlap);
    ``gather`` is its adjoint (sum over bins of overlap * map value).
    Rects are bucketed by bin span so overlap tables are not padded to the
    largest node.
    """

    def __init__(self, grid: GridSpec, x, y, w, h):
        self.grid = grid
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        w = np.broadcast_to(np.asarray(w, dtype=float), x.shape)
        h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
        self.size = x.size
        n = grid.n
        xlo, xhi = x - w / 2, x + w / 2
        ylo, yhi = y - h / 2, y + h / 2
        ix0, kx = _axis_overlaps(xlo, xhi, grid.xl, grid.w_b, n)
        iy0, ky = _axis_overlaps(ylo, yhi, grid.yl, grid.h_b, n)
        big = kx * ky > _SMALL_SPAN

        # (members, flat bin index, overlap area) per span bucket
        self.groups = []
        key = np.where(big, -1, kx * (_SMALL_SPAN + 1) + ky)
        for kk in np.unique(key[~big]):
            idx = np.flatnonzero(key == kk)
            Kx, Ky = int(kx[idx[0]]), int(ky[idx[0]])
            ix, ox = _overlap_table(xlo[idx], xhi[idx], ix0[idx], Kx, grid.xl, grid.w_b, n)
            iy, oy = _overlap_table(ylo[idx], yhi[idx], iy0[idx], Ky, grid.yl, grid.h_b, n)
            flat = (ix[:, :, None] * n + iy[:, None, :]).reshape(idx.size, -1)
            ov = (ox[:, :, None] * oy[:, None, :]).reshape(idx.size, -1)
            self.groups.append((idx, flat, ov))
        self.big = []
        for i in np.flatnonzero(big):
            ix, ox = _overlap_table(xlo[i:i + 1], xhi[i:i + 1], ix0[i:i + 1], int(kx[i]), grid.xl, grid.w_b, n)
            iy, oy = _overlap_table(ylo[i:i + 1], yhi[i:i + 1], iy0[i:i + 1], int(ky[i]), grid.yl, grid.h_b, n)
            self.big.append((int(i), int(ix0[i]), int(iy0[i]), np.outer(ox[0], oy[0])))

    def covered(self) -> np.ndarray:
        """Overlap area of each rect with the grid."""
        out = np.zeros(self.size)
        for idx, _, ov in self.groups:
            out[idx] = ov.sum(axis=1)
        for i, _, _, o in self.big:
            out[i] = o.sum()
        return out

    def splat(self, weights=1.0) -> np.ndarray:
        n = self.grid.n
        wts = np.broadcast_to(np.asarray(weights, dtype=float), (self.size,))
        out = np.zeros(n * n)
        for idx, flat, ov in self.groups:
            out += np.bincount(flat.ravel(), weights=(ov * wts[idx, None]).ravel(), minlength=n * n)
        out = out.reshape(n, n)
        for i, x0, y0, o in self.big:
            out[x0:x0 + o.shape[0], y0:y0 + o.shape[1]] += wts[i] * o
        return out

    def gather(self, *maps: np.ndarray):
        """Overlap-weighted sums of each map; one array per map (single map: the array)."""
        stacked = np.stack([m.ravel() for m in maps], axis=1)  # (n*n, k)
        out = np.zeros((self.size, len(maps)))
        for idx, flat, ov in self.groups:
            out[idx] = np.einsum("nk,nkc->nc", ov, stacked[flat])
        for i, x0, y0, o in self.big:
            for c, m in enumerate(maps):
                out[i, c] = np.sum(o * m[x0:x0 + o.shape[0], y0:y0 + o.shape[1]])
        if len(maps) == 1:
            return out[:, 0]
        return tuple(out[:, c] for c in range(len(maps)))
