"""Quadratic initial placement with the bound-to-bound (B2B) net model.

Each net of degree p is replaced by two-pin springs: the two extreme pins are
joined, and every inner pin is joined to both extremes, with weight
``2 / ((p - 1) * |distance|)``. At the linearization point the spring energy
equals twice the half-perimeter, so repeated solves track HPWL. Each axis is an
independent sparse SPD system solved by Jacobi-preconditioned CG.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import LinearOperator, cg

from .model import Netlist, PlacementState, Region
from .wirelength import hpwl

logger = logging.getLogger(__name__)


@dataclass
class QuadSystem:
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    var_of_node: np.ndarray  # -1 for nodes that are not variables


def anchored_cells(netlist: Netlist) -> np.ndarray:
    """Mask of movable cells connected (through nets) to at least one fixed node."""
    n = netlist.num_nodes
    m = netlist.num_movable
    if netlist.num_pins == 0:
        return np.zeros(m, dtype=bool)
    first = np.repeat(netlist.pin_node[netlist.net_start[:-1]], netlist.net_degree)
    g = sparse.coo_matrix((np.ones(netlist.num_pins), (first, netlist.pin_node)), shape=(n, n))
    _, label = csgraph.connected_components(g, directed=False)
    has_fixed = np.zeros(label.max() + 1, dtype=bool)
    has_fixed[label[m:]] = True
    return has_fixed[label[:m]]


def _b2b_edges(netlist: Netlist, coord: np.ndarray, offset: np.ndarray, eps: float,
               unit: bool = False):
    """B2B springs for one axis as (pin_a, pin_b, weight).

    ``unit`` uses distance 1 for every spring (no positions known yet).
    """
    deg = netlist.net_degree
    nets = np.flatnonzero(deg >= 2)
    if nets.size == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z, np.zeros(0)
    pc = coord[netlist.pin_node] + offset
    seg = np.repeat(np.arange(netlist.num_nets), deg)
    order = np.lexsort((pc, seg))  # pins sorted by coordinate within each net
    lo = order[netlist.net_start[nets]]
    hi = order[netlist.net_start[nets + 1] - 1]
    pin_seg = np.repeat(np.arange(nets.size), deg[nets])
    # pin ids of the kept nets, in net order
    first = np.cumsum(deg[nets]) - deg[nets]
    pins = netlist.net_start[nets][pin_seg] + np.arange(pin_seg.size) - first[pin_seg]
    lo_p, hi_p = lo[pin_seg], hi[pin_seg]
    inner = (pins != lo_p) & (pins != hi_p)

    a = np.concatenate([lo, pins[inner], pins[inner]])
    b = np.concatenate([hi, lo_p[inner], hi_p[inner]])
    p = np.concatenate([deg[nets], deg[nets][pin_seg[inner]], deg[nets][pin_seg[inner]]]).astype(float)
    dist = np.ones(a.size) if unit else np.maximum(np.abs(pc[a] - pc[b]), eps)
    return a, b, 2.0 / ((p - 1.0) * dist)


def build_system(netlist: Netlist, coord: np.ndarray, offset: np.ndarray,
                 var_of_node: np.ndarray, eps: float, unit: bool = False) -> QuadSystem:
    """Assemble the SPD system for one axis from the current coordinates."""
    a, b, w = _b2b_edges(netlist, coord, offset, eps, unit)
    na, nb = netlist.pin_node[a], netlist.pin_node[b]
    oa, ob = offset[a], offset[b]
    va, vb = var_of_node[na], var_of_node[nb]
    keep = (na != nb) & ((va >= 0) | (vb >= 0))
    na, nb, oa, ob, va, vb, w = na[keep], nb[keep], oa[keep], ob[keep], va[keep], vb[keep], w[keep]
    nv = int(var_of_node.max()) + 1 if var_of_node.size else 0

    both = (va >= 0) & (vb >= 0)
    only_a = (va >= 0) & (vb < 0)
    only_b = (va < 0) & (vb >= 0)
    rows = np.concatenate([va[both], vb[both], va[both], vb[both], va[only_a], vb[only_b]])
    cols = np.concatenate([va[both], vb[both], vb[both], va[both], va[only_a], vb[only_b]])
    vals = np.concatenate([w[both], w[both], -w[both], -w[both], w[only_a], w[only_b]])
    A = sparse.coo_matrix((vals, (rows, cols)), shape=(nv, nv)).tocsr()

    # spring w * (x_a + o_a - x_b - o_b)^2
    rhs = np.zeros(nv)
    d = oa - ob
    np.add.at(rhs, va[both], -w[both] * d[both])
    np.add.at(rhs, vb[both], w[both] * d[both])
    anchor_b = coord[nb] + ob  # fixed-side pin position
    np.add.at(rhs, va[only_a], w[only_a] * (anchor_b[only_a] - oa[only_a]))
    anchor_a = coord[na] + oa
    np.add.at(rhs, vb[only_b], w[only_b] * (anchor_a[only_b] - ob[only_b]))
    return QuadSystem(A, rhs, var_of_node)


def _spring_energy(netlist, coord, offset, eps, ref_coord, unit=False):
    """B2B energy at ``coord`` with springs linearized at ``ref_coord``."""
    a, b, w = _b2b_edges(netlist, ref_coord, offset, eps, unit)
    pa = coord[netlist.pin_node[a]] + offset[a]
    pb = coord[netlist.pin_node[b]] + offset[b]
    return float(np.sum(w * (pa - pb) ** 2))


def _solve(sys: QuadSystem, x0: np.ndarray, rtol: float) -> np.ndarray:
    diag = sys.matrix.diagonal()
    inv = 1.0 / np.where(diag > 0, diag, 1.0)
    M = LinearOperator(sys.matrix.shape, matvec=lambda v: inv * v)
    x, info = cg(sys.matrix, sys.rhs, x0=x0, rtol=rtol, maxiter=max(1000, 10 * x0.size), M=M)
    if info != 0:
        logger.warning("B2B CG did not reach rtol=%g (info=%d)", rtol, info)
    return x


def initial_place(netlist: Netlist, region: Region, seed: int = 0, rounds: int = 8,
                  rtol: float = 1e-5, history: Optional[List[dict]] = None) -> PlacementState:
    """B2B quadratic placement of the movable cells.

    Cells with no path to a fixed node are put at the region center with a
    +-0.5 site deterministic jitter. If ``history`` is a list, one record per
    round is appended (spring energy before/after and coordinate change).
    """
    m = netlist.num_movable
    rng = np.random.default_rng(seed)
    cx, cy = (region.xl + region.xh) / 2, (region.yl + region.yh) / 2
    site = region.site_width
    jx = rng.uniform(-0.5, 0.5, m) * site
    jy = rng.uniform(-0.5, 0.5, m) * site

    x = netlist.x.copy()
    y = netlist.y.copy()
    x[:m] = cx + jx
    y[:m] = cy + jy
    anchored = anchored_cells(netlist)
    var = np.full(netlist.num_nodes, -1, dtype=np.int64)
    var[np.flatnonzero(anchored)] = np.arange(int(anchored.sum()))
    eps = 1e-4 * max(region.width, region.height)
    span = max(region.width, region.height)

    if anchored.any():
        for k in range(rounds):
            change = 0.0
            rec = {"round": k}
            for axis, coord, off in (("x", x, netlist.pin_dx), ("y", y, netlist.pin_dy)):
                # round 0 has no meaningful positions: unit-distance springs
                unit = k == 0
                sys = build_system(netlist, coord, off, var, eps, unit)
                cells = np.flatnonzero(anchored)
                before = _spring_energy(netlist, coord, off, eps, coord, unit)
                sol = _solve(sys, coord[cells], rtol)
                new = coord.copy()
                new[cells] = sol
                rec[f"energy_{axis}_before"] = before
                rec[f"energy_{axis}_after"] = _spring_energy(netlist, new, off, eps, coord, unit)
                change = max(change, float(np.max(np.abs(sol - coord[cells]))))
                coord[cells] = sol
            rec["max_change"] = change
            if history is not None:
                m_ = netlist.num_movable
                rec["hpwl"] = hpwl(netlist, PlacementState(x[:m_], y[:m_], m_)).total
                history.append(rec)
            logger.debug("B2B round %d: max change %.4g", k, change)
            if change < 1e-3 * span:
                break
    else:
        logger.warning("no fixed pins reachable; cells left at region center")

    w = netlist.width[:m]
    h = netlist.height[:m]
    px = np.clip(x[:m], region.xl + w / 2, np.maximum(region.xh - w / 2, region.xl + w / 2))
    py = np.clip(y[:m], region.yl + h / 2, np.maximum(region.yh - h / 2, region.yl + h / 2))
    return PlacementState(px, py, m)
