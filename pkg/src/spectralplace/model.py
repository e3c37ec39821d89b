"""Netlist, region and placement containers.

Node arrays are flat numpy vectors (movable nodes first, then fixed nodes) so
that the numerical kernels can index them without Python loops. Pins are
stored sorted by net in CSR form: the pins of net ``j`` occupy
``net_start[j]:net_start[j + 1]``.

All coordinates are node *centers*; Bookshelf lower-left corners are converted
at the I/O boundary only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np


class NodeKind(enum.IntEnum):
    MOVABLE = 0
    FIXED = 1
    FILLER = 2
    DARK = 3


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    width: float
    height: float
    x: float
    y: float
    charge: float

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class Pin:
    node_id: int
    dx: float
    dy: float
    net_id: int


@dataclass(frozen=True)
class Net:
    id: int
    name: str
    pins: Tuple[Pin, ...]

    @property
    def degree(self) -> int:
        return len(self.pins)


@dataclass(frozen=True)
class Row:
    y: float  # bottom
    height: float
    x_lo: float
    x_hi: float
    site_width: float = 1.0

    @property
    def area(self) -> float:
        return self.height * (self.x_hi - self.x_lo)


def _dark_rects(bbox, rows: Sequence[Row]) -> List[Tuple[float, float, float, float]]:
    """Rectangulate ``bbox`` minus the union of ``rows`` into horizontal strips.

    Slabs between consecutive row y-breakpoints are swept bottom-up; vertically
    adjacent slabs with identical uncovered intervals are merged.
    """
    xl, yl, xh, yh = bbox
    ys = {yl, yh}
    for r in rows:
        ys.add(r.y)
        ys.add(r.y + r.height)
    ys = sorted(y for y in ys if yl <= y <= yh)

    strips: List[List[float]] = []  # [x0, y0, x1, y1], open for merging
    open_strips = {}
    for y0, y1 in zip(ys[:-1], ys[1:]):
        if y1 <= y0:
            continue
        covered = sorted(
            (max(r.x_lo, xl), min(r.x_hi, xh))
            for r in rows
            if r.y <= y0 and r.y + r.height >= y1
        )
        gaps = []
        cursor = xl
        for a, b in covered:
            if a > cursor:
                gaps.append((cursor, a))
            cursor = max(cursor, b)
        if cursor < xh:
            gaps.append((cursor, xh))

        next_open = {}
        for gap in gaps:
            s = open_strips.get(gap)
            if s is not None and s[3] == y0:
                s[3] = y1
            else:
                s = [gap[0], y0, gap[1], y1]
                strips.append(s)
            next_open[gap] = s
        open_strips = next_open
    return [tuple(s) for s in strips]


@dataclass
class Region:
    """Placement region: bounding box, rows and derived non-placeable rects."""

    xl: float
    yl: float
    xh: float
    yh: float
    rows: Tuple[Row, ...] = ()
    dark_rects: Tuple[Tuple[float, float, float, float], ...] = field(init=False)

    def __post_init__(self):
        if not (self.xh > self.xl and self.yh > self.yl):
            raise ValueError("region bounding box is empty")
        self.rows = tuple(sorted(self.rows, key=lambda r: (r.y, r.x_lo)))
        for r in self.rows:
            if (r.x_lo < self.xl - 1e-9 or r.x_hi > self.xh + 1e-9
                    or r.y < self.yl - 1e-9 or r.y + r.height > self.yh + 1e-9):
                raise ValueError(f"row at y={r.y} lies outside the region")
        if self.rows:
            self.dark_rects = tuple(_dark_rects(self.bbox, self.rows))
        else:
            self.dark_rects = ()

    @classmethod
    def from_rows(cls, rows: Sequence[Row]) -> "Region":
        return cls(
            min(r.x_lo for r in rows),
            min(r.y for r in rows),
            max(r.x_hi for r in rows),
            max(r.y + r.height for r in rows),
            tuple(rows),
        )

    @property
    def bbox(self) -> Tuple[float, float, float, float]:
        return (self.xl, self.yl, self.xh, self.yh)

    @property
    def width(self) -> float:
        return self.xh - self.xl

    @property
    def height(self) -> float:
        return self.yh - self.yl

    @property
    def row_area(self) -> float:
        if not self.rows:
            return self.width * self.height
        return sum(r.area for r in self.rows)

    @property
    def row_height(self) -> float:
        return self.rows[0].height if self.rows else 1.0

    @property
    def site_width(self) -> float:
        return self.rows[0].site_width if self.rows else 1.0

    def dark_arrays(self):
        """Dark rects as (x, y, w, h) center-based arrays."""
        if not self.dark_rects:
            z = np.zeros(0)
            return z, z, z, z
        d = np.asarray(self.dark_rects, dtype=float)
        w = d[:, 2] - d[:, 0]
        h = d[:, 3] - d[:, 1]
        return d[:, 0] + w / 2, d[:, 1] + h / 2, w, h

    def row_overlap_area(self, x, y, w, h) -> float:
        """Total overlap of center-based rects with the row union."""
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return 0.0
        if not self.rows:
            ox = np.clip(np.minimum(x + w / 2, self.xh) - np.maximum(x - w / 2, self.xl), 0, None)
            oy = np.clip(np.minimum(y + h / 2, self.yh) - np.maximum(y - h / 2, self.yl), 0, None)
            return float(np.sum(ox * oy))
        rr = np.array([(r.x_lo, r.y, r.x_hi, r.y + r.height) for r in self.rows])
        total = 0.0
        # chunk over nodes so large macro sets do not blow memory
        for s in range(0, x.size, 4096):
            xs, ys = x[s:s + 4096, None], np.asarray(y)[s:s + 4096, None]
            ws, hs = np.asarray(w)[s:s + 4096, None], np.asarray(h)[s:s + 4096, None]
            ox = np.clip(np.minimum(xs + ws / 2, rr[:, 2]) - np.maximum(xs - ws / 2, rr[:, 0]), 0, None)
            oy = np.clip(np.minimum(ys + hs / 2, rr[:, 3]) - np.maximum(ys - hs / 2, rr[:, 1]), 0, None)
            total += float(np.sum(ox * oy))
        return total


@dataclass
class Netlist:
    """Hyper-graph of nodes and nets.

    ``x``/``y`` hold centers for every node; only the fixed entries are
    authoritative, movable entries carry whatever the input file said.
    """

    names: List[str]
    width: np.ndarray
    height: np.ndarray
    num_movable: int
    x: np.ndarray
    y: np.ndarray
    pin_node: np.ndarray
    pin_dx: np.ndarray
    pin_dy: np.ndarray
    net_start: np.ndarray
    net_names: List[str] = field(default_factory=list)
    # fixed nodes that do not block placement (Bookshelf terminal_NI)
    non_blocking: Optional[np.ndarray] = None

    def __post_init__(self):
        self.width = np.asarray(self.width, dtype=float)
        self.height = np.asarray(self.height, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.pin_node = np.asarray(self.pin_node, dtype=np.int64)
        self.pin_dx = np.asarray(self.pin_dx, dtype=float)
        self.pin_dy = np.asarray(self.pin_dy, dtype=float)
        self.net_start = np.asarray(self.net_start, dtype=np.int64)
        n = len(self.names)
        if not (self.width.shape == self.height.shape == self.x.shape == self.y.shape == (n,)):
            raise ValueError("node arrays must all have one entry per node")
        if self.net_start.size == 0 or self.net_start[0] != 0 or self.net_start[-1] != self.pin_node.size:
            raise ValueError("net_start must be a CSR offset array over pins")
        if np.any(np.diff(self.net_start) < 0):
            raise ValueError("net_start must be non-decreasing")
        if self.pin_node.size and (self.pin_node.min() < 0 or self.pin_node.max() >= n):
            raise ValueError("pin references an unknown node")
        if not self.net_names:
            self.net_names = [f"n{j}" for j in range(self.num_nets)]
        if self.non_blocking is None:
            self.non_blocking = np.zeros(n, dtype=bool)
        self._name_index = None

    @property
    def num_nodes(self) -> int:
        return len(self.names)

    @property
    def num_fixed(self) -> int:
        return self.num_nodes - self.num_movable

    @property
    def num_nets(self) -> int:
        return self.net_start.size - 1

    @property
    def num_pins(self) -> int:
        return self.pin_node.size

    @property
    def net_degree(self) -> np.ndarray:
        return np.diff(self.net_start)

    @property
    def pin_net(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_nets), self.net_degree)

    @property
    def area(self) -> np.ndarray:
        return self.width * self.height

    @property
    def movable_area(self) -> float:
        return float(np.sum(self.area[: self.num_movable]))

    def index_of(self, name: str) -> int:
        if self._name_index is None:
            self._name_index = {nm: i for i, nm in enumerate(self.names)}
        return self._name_index[name]

    def is_fixed(self, i: int) -> bool:
        return i >= self.num_movable

    def node(self, i: int, target_density: float = 1.0) -> Node:
        kind = NodeKind.MOVABLE if i < self.num_movable else NodeKind.FIXED
        a = float(self.width[i] * self.height[i])
        q = a if kind == NodeKind.MOVABLE else target_density * a
        return Node(i, kind, float(self.width[i]), float(self.height[i]),
                    float(self.x[i]), float(self.y[i]), q)

    def net(self, j: int) -> Net:
        s, e = self.net_start[j], self.net_start[j + 1]
        pins = tuple(
            Pin(int(self.pin_node[p]), float(self.pin_dx[p]), float(self.pin_dy[p]), j)
            for p in range(s, e)
        )
        return Net(j, self.net_names[j], pins)

    def nets(self):
        for j in range(self.num_nets):
            yield self.net(j)

    def node_pins(self):
        """CSR map node -> pin indices, as (order, start)."""
        order = np.argsort(self.pin_node, kind="stable")
        counts = np.bincount(self.pin_node, minlength=self.num_nodes)
        start = np.concatenate([[0], np.cumsum(counts)])
        return order, start

    @classmethod
    def from_nets(cls, names, width, height, num_movable, x, y, nets, net_names=None):
        """Build from a list of nets, each a list of (node, dx, dy)."""
        pin_node, pin_dx, pin_dy, start = [], [], [], [0]
        for net in nets:
            for node, dx, dy in net:
                pin_node.append(node)
                pin_dx.append(dx)
                pin_dy.append(dy)
            start.append(len(pin_node))
        return cls(list(names), np.asarray(width, float), np.asarray(height, float),
                   num_movable, np.asarray(x, float), np.asarray(y, float),
                   np.asarray(pin_node, dtype=np.int64), np.asarray(pin_dx, float),
                   np.asarray(pin_dy, float), np.asarray(start, dtype=np.int64),
                   list(net_names) if net_names else [])


@dataclass
class Fillers:
    """Disconnected filler cells; positions live in the PlacementState."""

    width: np.ndarray
    height: np.ndarray

    @property
    def count(self) -> int:
        return int(self.width.size)

    @property
    def area(self) -> np.ndarray:
        return self.width * self.height

    @classmethod
    def empty(cls) -> "Fillers":
        return cls(np.zeros(0), np.zeros(0))


@dataclass
class PlacementState:
    """Centers of movable cells followed by filler cells."""

    x: np.ndarray
    y: np.ndarray
    num_movable: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("x and y must be 1-D vectors of equal length")
        if self.x.size < self.num_movable:
            raise ValueError("placement shorter than the movable node count")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("placement contains non-finite coordinates")

    @property
    def num_fillers(self) -> int:
        return self.x.size - self.num_movable

    def copy(self) -> "PlacementState":
        return PlacementState(self.x.copy(), self.y.copy(), self.num_movable)

    def movable_only(self) -> "PlacementState":
        m = self.num_movable
        return PlacementState(self.x[:m].copy(), self.y[:m].copy(), m)

    def with_fillers(self, fx, fy) -> "PlacementState":
        m = self.num_movable
        return PlacementState(np.concatenate([self.x[:m], fx]),
                              np.concatenate([self.y[:m], fy]), m)

    @classmethod
    def from_netlist(cls, netlist: Netlist) -> "PlacementState":
        m = netlist.num_movable
        return cls(netlist.x[:m].copy(), netlist.y[:m].copy(), m)


def node_centers(netlist: Netlist, placement: PlacementState):
    """Full-length center arrays with movable entries taken from ``placement``."""
    m = netlist.num_movable
    cx = netlist.x.copy()
    cy = netlist.y.copy()
    cx[:m] = placement.x[:m]
    cy[:m] = placement.y[:m]
    return cx, cy


def pin_positions(netlist: Netlist, placement: PlacementState):
    cx, cy = node_centers(netlist, placement)
    return cx[netlist.pin_node] + netlist.pin_dx, cy[netlist.pin_node] + netlist.pin_dy
