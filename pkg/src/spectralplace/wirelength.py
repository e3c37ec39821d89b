"""Exact half-perimeter wirelength and the weighted-average smooth model.

Both operate on the CSR pin layout of :class:`~spectralplace.model.Netlist`.
Nets of equal low degree are stored contiguously so their reductions are
dense row operations; higher-degree nets use ``np.ufunc.reduceat``. Cost is
O(#pins) either way.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Netlist, PlacementState, pin_positions


@dataclass
class WirelengthResult:
    total: float
    per_net: Optional[np.ndarray] = None
    grad_x: Optional[np.ndarray] = None
    grad_y: Optional[np.ndarray] = None


# nets up to this degree are reduced as dense (nets, degree) blocks
_DENSE_DEGREE = 16


class _NetSegments:
    """Pin indices of nets with degree >= 2, grouped for fast reductions.

    ``nets`` lists the nets in storage order and ``pins`` their pins. The
    first part holds one contiguous block per degree up to ``_DENSE_DEGREE``
    as ``(pin start, pin stop, net start, net stop, degree)``, stored as a
    (degree, nets) array; the rest is a tail of larger nets with reduceat
    ``offsets`` relative to ``tail_pin``.
    """

    def __init__(self, netlist: Netlist):
        deg = netlist.net_degree
        multi = np.flatnonzero(deg >= 2)
        key = np.where(deg[multi] <= _DENSE_DEGREE, deg[multi], _DENSE_DEGREE + 1)
        self.nets = multi[np.argsort(key, kind="stable")]
        counts = deg[self.nets]
        starts = netlist.net_start[self.nets]
        pins = (np.repeat(starts - np.cumsum(counts) + counts, counts)
                + np.arange(int(counts.sum()))).astype(np.int64)
        pin_edge = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.blocks = []
        n0 = 0
        for d in range(2, _DENSE_DEGREE + 1):
            k = int(np.count_nonzero(counts == d)) if counts.size else 0
            if k:
                p0, p1 = int(pin_edge[n0]), int(pin_edge[n0 + k])
                # pin-major inside the block: row t holds pin t of every net
                pins[p0:p1] = pins[p0:p1].reshape(k, d).T.ravel()
                self.blocks.append((p0, p1, n0, n0 + k, d))
                n0 += k
        self.pins = pins
        self.tail_net = n0
        self.tail_pin = int(pin_edge[n0])
        self.offsets = pin_edge[n0:-1] - self.tail_pin
        self.tail_seg = np.repeat(np.arange(self.nets.size - n0), counts[n0:])

    def span(self, c: np.ndarray) -> np.ndarray:
        """max - min of ``c`` (in ``pins`` order) per net."""
        out = np.empty(self.nets.size)
        for p0, p1, n0, n1, d in self.blocks:
            b = c[p0:p1].reshape(d, -1)
            out[n0:n1] = b.max(axis=0) - b.min(axis=0)
        if self.tail_net < self.nets.size:
            t = c[self.tail_pin:]
            out[self.tail_net:] = np.maximum.reduceat(t, self.offsets) - np.minimum.reduceat(t, self.offsets)
        return out


_cache: dict = {}


def _segments(netlist: Netlist) -> _NetSegments:
    key = id(netlist)
    hit = _cache.get(key)
    if hit is None or hit[0] is not netlist:
        hit = (netlist, _NetSegments(netlist))
        _cache.clear()
        _cache[key] = hit
    return hit[1]


def _check_finite(px, py):
    if not (np.all(np.isfinite(px)) and np.all(np.isfinite(py))):
        raise ValueError("non-finite pin coordinates")


def hpwl(netlist: Netlist, placement: PlacementState, per_net: bool = False) -> WirelengthResult:
    px, py = pin_positions(netlist, placement)
    _check_finite(px, py)
    seg = _segments(netlist)
    values = np.zeros(netlist.num_nets)
    if seg.nets.size:
        values[seg.nets] = seg.span(px[seg.pins]) + seg.span(py[seg.pins])
    return WirelengthResult(float(np.sum(values)), values if per_net else None)


def _wa_dense(c: np.ndarray, gamma: float):
    """WA value and pin derivatives for a (degree, nets) block."""
    ep = np.exp((c - c.max(axis=0)) / gamma)
    em = np.exp((c.min(axis=0) - c) / gamma)
    sp = ep.sum(axis=0)
    sm = em.sum(axis=0)
    hi = (c * ep).sum(axis=0) / sp
    lo = (c * em).sum(axis=0) / sm
    d = ep / sp * (1.0 + (c - hi) / gamma) - em / sm * (1.0 - (c - lo) / gamma)
    return hi - lo, d


def _wa_ragged(coord, off, s, gamma: float):
    """Same as ``_wa_dense`` for variable-degree nets given reduceat offsets."""
    cmax = np.maximum.reduceat(coord, off)[s]
    cmin = np.minimum.reduceat(coord, off)[s]
    ep = np.exp((coord - cmax) / gamma)
    em = np.exp((cmin - coord) / gamma)
    sp = np.add.reduceat(ep, off)
    sm = np.add.reduceat(em, off)
    hi = np.add.reduceat(coord * ep, off) / sp
    lo = np.add.reduceat(coord * em, off) / sm
    dhi = ep / sp[s] * (1.0 + (coord - hi[s]) / gamma)
    dlo = em / sm[s] * (1.0 - (coord - lo[s]) / gamma)
    return hi - lo, dhi - dlo


def _wa_axis(coord, seg: _NetSegments, gamma: float):
    """WA value per net and d/d(pin coordinate) along one axis."""
    val = np.empty(seg.nets.size)
    der = np.empty(coord.size)
    for p0, p1, n0, n1, d in seg.blocks:
        v, g = _wa_dense(coord[p0:p1].reshape(d, -1), gamma)
        val[n0:n1] = v
        der[p0:p1] = g.ravel()
    if seg.tail_net < seg.nets.size:
        v, g = _wa_ragged(coord[seg.tail_pin:], seg.offsets, seg.tail_seg, gamma)
        val[seg.tail_net:] = v
        der[seg.tail_pin:] = g
    return val, der


def wa_wirelength(netlist: Netlist, placement: PlacementState, gamma: float,
                  per_net: bool = False, gradient: bool = True) -> WirelengthResult:
    """Weighted-average wirelength and its gradient w.r.t. movable centers.

    The gradient vectors have the placement's length (movable + fillers);
    filler entries are zero since fillers carry no pins.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    px, py = pin_positions(netlist, placement)
    _check_finite(px, py)
    seg = _segments(netlist)
    values = np.zeros(netlist.num_nets)
    n = placement.x.size
    gx = np.zeros(n)
    gy = np.zeros(n)
    if seg.nets.size:
        wx, dx = _wa_axis(px[seg.pins], seg, gamma)
        wy, dy = _wa_axis(py[seg.pins], seg, gamma)
        values[seg.nets] = wx + wy
        if gradient:
            owner = netlist.pin_node[seg.pins]
            mov = owner < netlist.num_movable
            m = netlist.num_movable
            gx[:m] = np.bincount(owner[mov], weights=dx[mov], minlength=m)
            gy[:m] = np.bincount(owner[mov], weights=dy[mov], minlength=m)
    return WirelengthResult(float(np.sum(values)), values if per_net else None,
                            gx if gradient else None, gy if gradient else None)
