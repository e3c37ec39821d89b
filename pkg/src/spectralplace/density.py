"""Bin density, fillers, potential energy and overflow.

Every node in the electrostatic system carries a charge equal to its area;
fixed macros and dark (non-placeable) rectangles are scaled by the target
density so that, at equilibrium, movable cells fill the remaining space at
exactly that density.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .grid import GridSpec, Stencil
from .model import Fillers, Netlist, Node, NodeKind, PlacementState, Region

logger = logging.getLogger(__name__)

MAX_GRID = 1024


def choose_grid_dim(m: int) -> int:
    """Smallest power of two n with n*n >= m, capped at 1024."""
    if m < 1:
        raise ValueError("need at least one movable cell")
    k = 0
    while 4 ** k < m:
        k += 1
    return min(MAX_GRID, 2 ** k)


@dataclass
class DensityGrid:
    n: int
    w_b: float
    h_b: float
    rho: np.ndarray  # DC removed
    origin: tuple
    pre_dc: Optional[np.ndarray] = None

    @property
    def bin_area(self) -> float:
        return self.w_b * self.h_b


@dataclass
class OverflowReport:
    tau: float
    overflowed_area: float


def remove_dc(rho: np.ndarray) -> np.ndarray:
    return rho - rho.mean()


class DensitySystem:
    """Static part of the density model for one run.

    Fixed and dark charges, bin capacities and filler sizes do not change
    during global placement; they are rasterized once here.
    """

    def __init__(self, netlist: Netlist, region: Region, grid: GridSpec,
                 fillers: Optional[Fillers] = None, target_density: float = 1.0):
        if not 0 < target_density <= 1:
            raise ValueError("target density must lie in (0, 1]")
        self.netlist = netlist
        self.region = region
        self.grid = grid
        self.fillers = fillers if fillers is not None else Fillers.empty()
        self.target_density = target_density
        m = netlist.num_movable

        blocking = np.flatnonzero(~netlist.non_blocking[m:]) + m
        dx, dy, dw, dh = region.dark_arrays()
        sx = np.concatenate([netlist.x[blocking], dx])
        sy = np.concatenate([netlist.y[blocking], dy])
        sw = np.concatenate([netlist.width[blocking], dw])
        sh = np.concatenate([netlist.height[blocking], dh])
        self.static_stencil = Stencil(grid, sx, sy, sw, sh)
        self.static_area = sw * sh
        # geometric occupancy of fixed + dark, in area units
        self.static_occupied = self.static_stencil.splat(1.0)
        self.static_charge = target_density * self.static_area
        self.capacity = np.clip(grid.bin_area - self.static_occupied, 0.0, None)

        self.mov_w = np.concatenate([netlist.width[:m], self.fillers.width])
        self.mov_h = np.concatenate([netlist.height[:m], self.fillers.height])
        self.mov_area = self.mov_w * self.mov_h

    @property
    def num_movable(self) -> int:
        return self.netlist.num_movable

    def check_inside(self, placement: PlacementState) -> None:
        x, y = placement.x, placement.y
        if x.size != self.mov_w.size:
            raise ValueError("placement length does not match movable + filler count")
        g = self.grid
        outside = ((x + self.mov_w / 2 <= g.xl) | (x - self.mov_w / 2 >= g.xh)
                   | (y + self.mov_h / 2 <= g.yl) | (y - self.mov_h / 2 >= g.yh))
        if np.any(outside):
            raise ValueError(f"{int(outside.sum())} nodes lie entirely outside the grid")

    def stencil(self, placement: PlacementState, check: bool = True) -> Stencil:
        if check:
            self.check_inside(placement)
        elif placement.x.size != self.mov_w.size:
            raise ValueError("placement length does not match movable + filler count")
        return Stencil(self.grid, placement.x, placement.y, self.mov_w, self.mov_h)

    def build(self, placement: PlacementState, stencil: Optional[Stencil] = None) -> DensityGrid:
        st = stencil or self.stencil(placement)
        area = st.splat(1.0) + self.target_density * self.static_occupied
        pre = area / self.grid.bin_area
        g = self.grid
        return DensityGrid(g.n, g.w_b, g.h_b, remove_dc(pre), (g.xl, g.yl), pre)

    def sample(self, field, stencil: Stencil):
        """Per movable/filler node: psi, and E in length units (overlap-weighted)."""
        psi, ex, ey = stencil.gather(field.psi, field.ex, field.ey)
        return (psi / self.mov_area, ex / self.mov_area / self.grid.w_b,
                ey / self.mov_area / self.grid.h_b)

    def energy(self, field, stencil: Stencil) -> float:
        """Sum of q_i * psi_i over movable, filler, fixed and dark nodes."""
        mov = np.sum(stencil.gather(field.psi))  # q_i / A_i == 1
        static = np.sum(self.static_stencil.gather(field.psi)) * self.target_density
        return float(mov + static)

    def movable_area_map(self, placement: PlacementState) -> np.ndarray:
        m = self.num_movable
        st = Stencil(self.grid, placement.x[:m], placement.y[:m],
                     self.netlist.width[:m], self.netlist.height[:m])
        return st.splat(1.0)

    def overflow(self, placement: PlacementState, stencil: Optional[Stencil] = None) -> OverflowReport:
        """Overflow of the movable cells; ``stencil`` may be a movable + filler
        stencil of the same placement, whose filler entries are then ignored."""
        m = self.num_movable
        total = float(np.sum(self.netlist.area[:m]))
        if total <= 0:
            raise ValueError("overflow undefined without movable area")
        if stencil is None:
            used = self.movable_area_map(placement)
        else:
            used = stencil.splat(np.arange(stencil.size) < m)
        over = np.clip(used - self.target_density * self.capacity, 0.0, None)
        ov = float(np.sum(over))
        return OverflowReport(ov / total, ov)


def build_density(netlist: Netlist, placement: PlacementState, grid: GridSpec,
                  region: Optional[Region] = None, fillers: Optional[Fillers] = None,
                  target_density: float = 1.0) -> DensityGrid:
    if region is None:
        region = Region(grid.xl, grid.yl, grid.xh, grid.yh)
    return DensitySystem(netlist, region, grid, fillers, target_density).build(placement)


def potential_energy(system: DensitySystem, placement: PlacementState, field) -> float:
    return system.energy(field, system.stencil(placement))


def overflow(netlist: Netlist, placement: PlacementState, grid: GridSpec,
             target_density: float = 1.0, region: Optional[Region] = None) -> OverflowReport:
    if region is None:
        region = Region(grid.xl, grid.yl, grid.xh, grid.yh)
    mov = placement.movable_only()
    return DensitySystem(netlist, region, grid, None, target_density).overflow(mov)


def filler_size(netlist: Netlist, fallback_area: float = 1.0) -> float:
    """Side of a square filler: mean movable area within the 5-95 percentile band."""
    a = netlist.area[: netlist.num_movable]
    if a.size == 0:
        return math.sqrt(fallback_area)
    lo, hi = np.percentile(a, [5, 95])
    band = a[(a >= lo) & (a <= hi)]
    mean = float(band.mean()) if band.size else float(a.mean())
    return math.sqrt(mean)


def whitespace_area(netlist: Netlist, region: Region) -> float:
    m = netlist.num_movable
    blocking = np.flatnonzero(~netlist.non_blocking[m:]) + m
    blocked = region.row_overlap_area(netlist.x[blocking], netlist.y[blocking],
                                      netlist.width[blocking], netlist.height[blocking])
    return region.row_area - blocked


def insert_fillers(netlist: Netlist, region: Region, target_density: float = 1.0,
                   seed: int = 0, fallback_area: float = 1.0) -> List[Node]:
    """Square filler nodes that bring the total charge up to target density."""
    a_ws = whitespace_area(netlist, region)
    a_fc = target_density * a_ws - netlist.movable_area
    if a_fc <= 0:
        logger.warning("no whitespace left for fillers (A_fc = %.6g)", a_fc)
        return []
    side = filler_size(netlist, fallback_area)
    count = int(math.floor(a_fc / (side * side) + 1e-9))
    if count == 0:
        return []
    rng = np.random.default_rng(seed)
    rows = region.rows
    if rows:
        areas = np.array([r.area for r in rows])
        pick = rng.choice(len(rows), size=count, p=areas / areas.sum())
        r_xlo = np.array([r.x_lo for r in rows])[pick]
        r_xhi = np.array([r.x_hi for r in rows])[pick]
        r_y = np.array([r.y for r in rows])[pick]
        r_h = np.array([r.height for r in rows])[pick]
    else:
        r_xlo = np.full(count, region.xl)
        r_xhi = np.full(count, region.xh)
        r_y = np.full(count, region.yl)
        r_h = np.full(count, region.height)
    half = side / 2
    fx = rng.uniform(r_xlo + half, np.maximum(r_xhi - half, r_xlo + half))
    fy = rng.uniform(r_y + np.minimum(half, r_h / 2), r_y + r_h - np.minimum(half, r_h / 2))
    fx = np.clip(fx, region.xl + half, region.xh - half)
    fy = np.clip(fy, region.yl + half, region.yh - half)
    base = netlist.num_nodes
    q = side * side
    return [Node(base + k, NodeKind.FILLER, side, side, float(fx[k]), float(fy[k]), q)
            for k in range(count)]


def fillers_from_nodes(nodes: List[Node]):
    """Split filler nodes into sizes and initial coordinates."""
    w = np.array([f.width for f in nodes], dtype=float)
    h = np.array([f.height for f in nodes], dtype=float)
    x = np.array([f.x for f in nodes], dtype=float)
    y = np.array([f.y for f in nodes], dtype=float)
    return Fillers(w, h), x, y
