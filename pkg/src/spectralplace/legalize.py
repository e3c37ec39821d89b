"""Row legalization (Tetris greedy), legality checking and greedy improvement.

This is a small, verifiable stand-in for a real detailed placer: cells are
snapped to site-aligned row slots without overlap, then adjacent swaps and
single-cell slides are applied when they strictly reduce HPWL.
"""

from __future__ import annotations

import logging
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .model import Netlist, PlacementState, Region, Row

logger = logging.getLogger(__name__)

_EPS = 1e-9


class LegalizationError(ValueError):
    """No legal placement could be produced."""


@dataclass
class Segment:
    row: int
    x_lo: float
    x_hi: float


@dataclass
class RowAssignment:
    """Legal placement of the movable cells.

    ``rows[r]`` lists ``(node, left x)`` of single-row cells in row ``r``,
    sorted by x. Cells taller than a row are kept in ``blocks`` as
    ``(node, left x, first row, last row)``.
    """

    rows: List[List[Tuple[int, float]]]
    x: np.ndarray  # centers, movable cells only
    y: np.ndarray
    gx: np.ndarray  # global-placement centers the cells came from
    gy: np.ndarray
    blocks: List[Tuple[int, float, int, int]] = field(default_factory=list)

    @property
    def displacement(self) -> np.ndarray:
        return np.hypot(self.x - self.gx, self.y - self.gy)

    @property
    def num_movable(self) -> int:
        return int(self.x.size)

    def placement(self) -> PlacementState:
        return PlacementState(self.x.copy(), self.y.copy(), self.x.size)

    def copy(self) -> "RowAssignment":
        return RowAssignment([list(r) for r in self.rows], self.x.copy(), self.y.copy(),
                             self.gx, self.gy, list(self.blocks))


def _align_up(v, origin, site):
    return origin + math.ceil((v - origin) / site - _EPS) * site


def _align_down(v, origin, site):
    return origin + math.floor((v - origin) / site + _EPS) * site


def _fixed_rects(netlist: Netlist):
    """Blocking fixed nodes as (x0, y0, x1, y1) rows of an array."""
    m = netlist.num_movable
    idx = np.flatnonzero(~netlist.non_blocking[m:]) + m
    w, h = netlist.width[idx], netlist.height[idx]
    x, y = netlist.x[idx], netlist.y[idx]
    return np.stack([x - w / 2, y - h / 2, x + w / 2, y + h / 2], axis=1) if idx.size else np.zeros((0, 4))


def row_segments(netlist: Netlist, region: Region) -> List[List[Segment]]:
    """Free, site-aligned intervals of every row after removing fixed obstacles."""
    if not region.rows:
        raise LegalizationError("region has no rows")
    rects = _fixed_rects(netlist)
    out: List[List[Segment]] = []
    for r, row in enumerate(region.rows):
        hit = rects[(rects[:, 1] < row.y + row.height - _EPS) & (rects[:, 3] > row.y + _EPS)
                    & (rects[:, 0] < row.x_hi) & (rects[:, 2] > row.x_lo)]
        hit = hit[np.argsort(hit[:, 0])] if hit.size else hit
        segs, cur = [], row.x_lo
        for x0, _, x1, _ in hit:
            if x0 > cur:
                segs.append((cur, x0))
            cur = max(cur, x1)
        if cur < row.x_hi:
            segs.append((cur, row.x_hi))
        aligned = []
        for a, b in segs:
            a2 = _align_up(a, row.x_lo, row.site_width)
            b2 = _align_down(b, row.x_lo, row.site_width)
            if b2 - a2 > _EPS:
                aligned.append(Segment(r, a2, b2))
        out.append(aligned)
    return out


def _place_blocks(netlist, region, segs, tall, tx, ty):
    """Place multi-row movable cells first; they become obstacles for the rest."""
    rows = region.rows
    ry = np.array([r.y for r in rows])
    rh = region.row_height
    placed = []
    for i in sorted(tall, key=lambda i: tx[i]):
        w, h = netlist.width[i], netlist.height[i]
        span = int(math.ceil(h / rh - _EPS))
        best = None
        for r0 in np.argsort(np.abs(ry - ty[i])):
            r0 = int(r0)
            if r0 + span > len(rows):
                continue
            if not all(abs(rows[r0 + k].y - (rows[r0].y + k * rh)) < _EPS for k in range(span)):
                continue
            dy2 = (rows[r0].y - ty[i]) ** 2
            if best is not None and dy2 >= best[0]:
                break
            # intersect free intervals of the spanned rows
            free = [(s.x_lo, s.x_hi) for s in segs[r0]]
            for k in range(1, span):
                nxt = [(s.x_lo, s.x_hi) for s in segs[r0 + k]]
                free = [(max(a, c), min(b, d)) for a, b in free for c, d in nxt if min(b, d) > max(a, c)]
            site, org = rows[r0].site_width, rows[r0].x_lo
            for a, b in free:
                if b - a < w - _EPS:
                    continue
                x = min(max(tx[i], a), b - w)
                x = _align_down(x, org, site)
                if x < a - _EPS:
                    x = _align_up(a, org, site)
                if x + w > b + _EPS:
                    continue
                cost = (x - tx[i]) ** 2 + dy2
                if best is None or cost < best[0]:
                    best = (cost, x, r0)
        if best is None:
            raise LegalizationError(f"no legal slot for multi-row cell {netlist.names[i]}")
        _, x, r0 = best
        for k in range(span):
            segs[r0 + k] = _carve(segs[r0 + k], x, x + w)
        placed.append((int(i), float(x), r0, r0 + span - 1))
    return placed


def _carve(seglist, a, b):
    out = []
    for s in seglist:
        if s.x_hi <= a + _EPS or s.x_lo >= b - _EPS:
            out.append(s)
            continue
        if s.x_lo < a - _EPS:
            out.append(Segment(s.row, s.x_lo, a))
        if s.x_hi > b + _EPS:
            out.append(Segment(s.row, b, s.x_hi))
    return out


def _push_left(cells, x_new, lo, w, tx, org, site):
    """Make room for a cell at ``x_new`` by shifting the segment's tail left.

    Returns (aligned x_new, added squared displacement, moved tail) or None.
    """
    x_new = max(_align_down(x_new, org, site), _align_up(lo, org, site))
    cur, extra, moved = x_new, 0.0, []
    for node, x in reversed(cells):
        if x + w[node] <= cur + _EPS:
            break
        nx = _align_down(cur - w[node], org, site)
        if nx < lo - _EPS:
            return None
        extra += (nx - tx[node]) ** 2 - (x - tx[node]) ** 2
        moved.append([node, nx])
        cur = nx
    return x_new, extra, moved[::-1]


def legalize(placement: PlacementState, netlist: Netlist, region: Region,
             row_window: int = 8) -> RowAssignment:
    """Tetris legalization minimizing squared displacement per cell.

    Fillers (entries past ``num_movable``) are dropped. Cells are visited by
    increasing left edge; each takes the row slot at or right of that
    segment's frontier with the smallest squared displacement, or is inserted
    behind the frontier with the segment's placed tail shifted left when that
    costs less (the shift's added squared displacement counts).
    """
    m = netlist.num_movable
    cx, cy = placement.x[:m], placement.y[:m]
    w, h = netlist.width[:m], netlist.height[:m]
    tx, ty = cx - w / 2, cy - h / 2
    segs = row_segments(netlist, region)
    rows = region.rows
    rh = region.row_height

    capacity = sum(s.x_hi - s.x_lo for sl in segs for s in sl)
    if float(np.sum(w * np.ceil(h / rh - _EPS))) > capacity + _EPS:
        raise LegalizationError("total cell width exceeds free row capacity")

    tall = np.flatnonzero(h > rh + _EPS)
    blocks = _place_blocks(netlist, region, segs, tall, tx, ty)

    flat = [s for sl in segs for s in sl]
    if not flat and m > len(tall):
        raise LegalizationError("no free row segments")
    seg_row = np.array([s.row for s in flat], dtype=np.int64)
    seg_end = np.array([s.x_hi for s in flat])
    front = np.array([s.x_lo for s in flat])
    seg_y = np.array([rows[r].y for r in seg_row])
    seg_org = np.array([rows[r].x_lo for r in seg_row])
    seg_site = np.array([rows[r].site_width for r in seg_row])
    by_y = np.argsort(seg_y, kind="stable")
    y_sorted = seg_y[by_y]

    out_x = np.empty(m)
    out_y = np.empty(m)
    assign: List[List[Tuple[int, float]]] = [[] for _ in rows]
    for i, x, r0, _ in blocks:
        out_x[i] = x + w[i] / 2
        out_y[i] = rows[r0].y + h[i] / 2

    small = np.setdiff1d(np.arange(m), tall)
    order = small[np.argsort(tx[small], kind="stable")]
    seg_lo = front.copy()
    used = np.zeros(len(flat))
    seg_cells: List[List[List]] = [[] for _ in flat]  # [node, left x] in x order
    win = row_window * rh
    for i in order:
        wi = w[i]
        lo, hi = np.searchsorted(y_sorted, [ty[i] - win, ty[i] + win])
        best = None
        for cand in (by_y[lo:hi], by_y):
            f, e, org, site = front[cand], seg_end[cand], seg_org[cand], seg_site[cand]
            x = np.clip(tx[i], f, e - wi)
            x = org + np.floor((x - org) / site + 0.5) * site
            x = np.where(x + wi > e + _EPS, x - site, x)
            ok = (x >= f - _EPS) & (x + wi <= e + _EPS)
            dy2 = (seg_y[cand] - ty[i]) ** 2
            cost = np.where(ok, (x - tx[i]) ** 2 + dy2, np.inf)
            k = int(np.argmin(cost)) if cost.size else 0
            if cost.size and np.isfinite(cost[k]):
                best = (float(cost[k]), int(cand[k]), float(x[k]), None)
            # behind a frontier with spare room: insert nearer the target and
            # push the segment's tail left
            room = (tx[i] < f - _EPS) & (seg_end[cand] - seg_lo[cand] - used[cand] >= wi - _EPS)
            for j in np.flatnonzero(room & (dy2 < (best[0] if best else np.inf))):
                s = int(cand[j])
                t = min(tx[i], seg_end[s] - wi)
                for want in {t, _align_down(0.5 * (t + min(f[j], seg_end[s] - wi)), seg_org[s], seg_site[s])}:
                    pushed = _push_left(seg_cells[s], want, seg_lo[s], w, tx,
                                        seg_org[s], seg_site[s])
                    if pushed is None:
                        continue
                    xe, extra, moved = pushed
                    c = (xe - tx[i]) ** 2 + dy2[j] + extra
                    if best is None or c < best[0]:
                        best = (c, s, xe, moved)
            # segments outside the window are at least ``win`` away in y
            if best is not None and (cand is by_y or best[0] <= win * win):
                break
        if best is None:
            raise LegalizationError(f"no free slot for cell {netlist.names[i]}")
        _, s, x, moved = best
        if moved is not None:
            seg_cells[s][len(seg_cells[s]) - len(moved):] = moved
        seg_cells[s].append([int(i), x])
        used[s] += wi
        front[s] = _align_up(x + wi, seg_org[s], seg_site[s])

    for s, cells in enumerate(seg_cells):
        for i, x in cells:
            out_x[i] = x + w[i] / 2
            out_y[i] = seg_y[s] + h[i] / 2
            assign[seg_row[s]].append((int(i), float(x)))

    for lst in assign:
        lst.sort(key=lambda t: t[1])
    return RowAssignment(assign, out_x, out_y, cx.copy(), cy.copy(), blocks)


def check_legal(netlist: Netlist, region: Region, placement: PlacementState,
                tol: float = 1e-6) -> List[str]:
    """Independent legality check; returns a list of violations (empty if legal).

    Every movable cell must sit on row boundaries, on the site grid, inside
    its rows, and must not overlap another movable cell or a blocking fixed
    node. Overlaps are found with a per-row sort-and-sweep.
    """
    m = netlist.num_movable
    problems: List[str] = []
    if placement.x.size != m:
        problems.append(f"placement has {placement.x.size} entries, expected {m} (fillers present?)")
        return problems
    rows = region.rows
    if not rows:
        return ["region has no rows"]
    ry = np.array([r.y for r in rows])
    rh = region.row_height
    # row key -> list of (x0, x1, node)
    occupancy: Dict[int, List[Tuple[float, float, int]]] = {}
    for i in range(m):
        w, h = netlist.width[i], netlist.height[i]
        x0, y0 = placement.x[i] - w / 2, placement.y[i] - h / 2
        r = int(np.searchsorted(ry, y0 - tol))
        if r >= len(rows) or abs(ry[r] - y0) > tol:
            problems.append(f"{netlist.names[i]}: bottom y={y0:g} not on a row")
            continue
        span = max(1, int(math.ceil(h / rh - tol)))
        for k in range(span):
            if r + k >= len(rows):
                problems.append(f"{netlist.names[i]}: extends above the last row")
                break
            row: Row = rows[r + k]
            if x0 < row.x_lo - tol or x0 + w > row.x_hi + tol:
                problems.append(f"{netlist.names[i]}: outside row {r + k} extents")
            occupancy.setdefault(r + k, []).append((x0, x0 + w, i))
        off = (x0 - rows[r].x_lo) / rows[r].site_width
        if abs(off - round(off)) > tol:
            problems.append(f"{netlist.names[i]}: not site aligned")
    for (x0, y0, x1, y1) in _fixed_rects(netlist):
        for r in np.flatnonzero((ry < y1 - tol) & (ry + rh > y0 + tol)):
            occupancy.setdefault(int(r), []).append((x0, x1, -1))
    for r, items in occupancy.items():
        items.sort()
        reach, who = -math.inf, None
        for a, b, i in items:
            if a < reach - tol and not (i < 0 and who is not None and who < 0):
                na = netlist.names[i] if i >= 0 else "fixed"
                nb = netlist.names[who] if who is not None and who >= 0 else "fixed"
                problems.append(f"row {r}: {na} overlaps {nb}")
            if b > reach:
                reach, who = b, i
    return problems


class _NetCache:
    """Per-net HPWL with incremental re-evaluation for a few moved cells."""

    def __init__(self, netlist: Netlist, x: np.ndarray, y: np.ndarray):
        self.nl = netlist
        self.cx, self.cy = netlist.x.copy(), netlist.y.copy()
        m = netlist.num_movable
        self.cx[:m], self.cy[:m] = x, y
        order, start = netlist.node_pins()
        pin_net = netlist.pin_net
        self.nets_of = [np.unique(pin_net[order[start[i]:start[i + 1]]]) for i in range(m)]
        self.value = np.array([self._net(j) for j in range(netlist.num_nets)])

    def _net(self, j, cx=None):
        s, e = self.nl.net_start[j], self.nl.net_start[j + 1]
        if e - s < 2:
            return 0.0
        cx = self.cx if cx is None else cx
        nodes = self.nl.pin_node[s:e]
        px = cx[nodes] + self.nl.pin_dx[s:e]
        py = self.cy[nodes] + self.nl.pin_dy[s:e]
        return float(px.max() - px.min() + py.max() - py.min())

    def total(self) -> float:
        return float(self.value.sum())

    def try_move(self, moves: Dict[int, float], tol: float) -> bool:
        """Apply x moves if HPWL drops by more than ``tol``."""
        nets = np.unique(np.concatenate([self.nets_of[i] for i in moves]))
        old = {i: self.cx[i] for i in moves}
        for i, nx in moves.items():
            self.cx[i] = nx
        new = [self._net(j) for j in nets]
        if sum(new) < float(self.value[nets].sum()) - tol:
            self.value[nets] = new
            return True
        for i, ox in old.items():
            self.cx[i] = ox
        return False

    def best_x(self, i: int) -> Optional[float]:
        """Center x minimizing this cell's nets' x-extent (median of breakpoints)."""
        pts = []
        for j in self.nets_of[i]:
            s, e = self.nl.net_start[j], self.nl.net_start[j + 1]
            nodes = self.nl.pin_node[s:e]
            mine = nodes == i
            if mine.all():
                continue
            px = self.cx[nodes[~mine]] + self.nl.pin_dx[s:e][~mine]
            for d in self.nl.pin_dx[s:e][mine]:
                pts += [px.min() - d, px.max() - d]
        return float(np.median(pts)) if pts else None


def greedy_improve(assignment: RowAssignment, netlist: Netlist, region: Region,
                   max_passes: Optional[int] = None) -> RowAssignment:
    """Adjacent swaps and gap slides, each kept only if HPWL strictly drops.

    With ``max_passes=None`` passes repeat until none moves a cell, so the
    result is a fixpoint. Every accepted move lowers HPWL by more than a fixed
    tolerance, which bounds the number of passes.
    """
    out = assignment.copy()
    cache = _NetCache(netlist, out.x, out.y)
    segs = row_segments(netlist, region)
    for i, x, r0, r1 in out.blocks:
        for r in range(r0, r1 + 1):
            segs[r] = _carve(segs[r], x, x + netlist.width[i])
    seg_lo = [[s.x_lo for s in sl] for sl in segs]
    w = netlist.width
    tol = 1e-9 * max(region.width, region.height)
    start = cache.total()

    p = 0
    while max_passes is None or p < max_passes:
        changed = 0
        for r, lst in enumerate(out.rows):
            if not lst:
                continue
            row = region.rows[r]
            site, org = row.site_width, row.x_lo
            bounds = [segs[r][max(0, bisect_right(seg_lo[r], x + _EPS) - 1)] for _, x in lst]
            # adjacent swaps
            for k in range(len(lst) - 1):
                (a, xa), (b, xb) = lst[k], lst[k + 1]
                if bounds[k] is not bounds[k + 1]:
                    continue
                nb = xa
                na = _align_down(xb + w[b] - w[a], org, site)
                if na < nb + w[b] - _EPS:
                    continue
                if cache.try_move({a: na + w[a] / 2, b: nb + w[b] / 2}, tol):
                    lst[k], lst[k + 1] = (b, nb), (a, na)
                    changed += 1
            # slides into the free gap toward the nets' optimum
            for k in range(len(lst)):
                i, xi = lst[k]
                seg = bounds[k]
                lo = seg.x_lo
                if k > 0 and bounds[k - 1] is seg:
                    lo = max(lo, _align_up(lst[k - 1][1] + w[lst[k - 1][0]], org, site))
                hi = seg.x_hi - w[i]
                if k + 1 < len(lst) and bounds[k + 1] is seg:
                    hi = min(hi, lst[k + 1][1] - w[i])
                hi = _align_down(hi, org, site)
                if hi - lo < site - _EPS:
                    continue
                target = cache.best_x(i)
                if target is None:
                    continue
                t = min(max(target - w[i] / 2, lo), hi)
                for cand in sorted({_align_down(t, org, site), _align_up(t, org, site)}):
                    cand = min(max(cand, lo), hi)
                    if abs(cand - xi) < _EPS:
                        continue
                    if cache.try_move({i: cand + w[i] / 2}, tol):
                        lst[k] = (i, cand)
                        xi = cand
                        changed += 1
        logger.debug("greedy pass %d: %d moves", p, changed)
        p += 1
        if changed == 0:
            break

    for lst in out.rows:
        for i, x in lst:
            out.x[i] = x + w[i] / 2
    end = cache.total()
    logger.info("greedy improvement: HPWL %.6g -> %.6g", start, end)
    return out


def random_legal_placement(netlist: Netlist, region: Region, seed: int = 0) -> RowAssignment:
    """Uniform random targets inside the region, then legalized."""
    rng = np.random.default_rng(seed)
    m = netlist.num_movable
    w, h = netlist.width[:m], netlist.height[:m]
    x = rng.uniform(region.xl + w / 2, np.maximum(region.xh - w / 2, region.xl + w / 2))
    y = rng.uniform(region.yl + h / 2, np.maximum(region.yh - h / 2, region.yl + h / 2))
    return legalize(PlacementState(x, y, m), netlist, region)
