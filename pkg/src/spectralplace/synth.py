"""Deterministic synthetic placement instances for desk-scale runs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .model import Netlist, PlacementState, Region, Row


@dataclass
class SynthConfig:
    whitespace: float = 0.5
    row_height: float = 8.0
    site_width: float = 1.0
    # log-normal cell widths, in sites
    width_median: float = 4.0
    width_sigma: float = 0.5
    max_width: int = 32
    nets_per_cell: float = 1.0
    max_degree: int = 8
    rent_exponent: float = 2.5  # P(degree = d) ~ d**-exponent
    pads: int = -1  # -1: 2*sqrt(m)
    pad_size: float = 1.0


def synthesize_instance(m: int, seed: int = 0, params: SynthConfig | None = None):
    """Build a random but structured instance.

    Cells get a hidden random position on a sqrt(m) x sqrt(m) lattice and nets
    join lattice neighbours, so a good placement exists and can be found.
    Returns ``(netlist, region, placement)``; the placement puts every movable
    cell at the region center.
    """
    p = params or SynthConfig()
    if m < 2:
        raise ValueError("synthetic instance needs at least 2 cells")
    if not 0.0 <= p.whitespace < 1.0:
        raise ValueError("whitespace fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)

    widths = np.clip(np.round(np.exp(rng.normal(math.log(p.width_median), p.width_sigma, m))),
                     1, p.max_width) * p.site_width
    heights = np.full(m, p.row_height)
    cell_area = float(np.sum(widths * heights))

    total = cell_area / (1.0 - p.whitespace)
    num_rows = max(1, int(round(math.sqrt(total) / p.row_height)))
    sites = int(math.ceil(total / (num_rows * p.row_height) / p.site_width))
    sites = max(sites, int(np.max(widths) / p.site_width))
    row_w = sites * p.site_width
    if cell_area > num_rows * p.row_height * row_w:
        raise ValueError("infeasible configuration: cell area exceeds region area")
    rows = [Row(r * p.row_height, p.row_height, 0.0, row_w, p.site_width) for r in range(num_rows)]
    region = Region.from_rows(rows)
    W, H = region.width, region.height

    # hidden lattice for locality
    side = int(math.ceil(math.sqrt(m)))
    slots = rng.permutation(side * side)[:m]
    hidden = np.stack([slots % side, slots // side], axis=1).astype(float)
    hidden += rng.uniform(-0.25, 0.25, hidden.shape)
    tree = cKDTree(hidden)

    degrees = np.arange(2, p.max_degree + 1)
    prob = degrees.astype(float) ** -p.rent_exponent
    prob /= prob.sum()
    num_nets = max(1, int(round(p.nets_per_cell * m)))

    nets = []
    if m == 2:
        nets.append([0, 1])
    else:
        for _ in range(num_nets):
            d = int(min(rng.choice(degrees, p=prob), m))
            seed_cell = int(rng.integers(m))
            k = min(m, max(2 * d, 6))
            _, nbrs = tree.query(hidden[seed_cell], k=k)
            others = rng.choice(np.asarray(nbrs[1:]), size=d - 1, replace=False)
            nets.append([seed_cell] + [int(o) for o in others])
        # every cell on at least one net
        used = np.zeros(m, dtype=bool)
        for net in nets:
            used[net] = True
        for c in np.flatnonzero(~used):
            _, nb = tree.query(hidden[c], k=2)
            nets.append([int(c), int(nb[1])])

    # perimeter pads, evenly spaced, each tied to the nearest hidden cell
    num_pads = p.pads if p.pads >= 0 else int(round(2 * math.sqrt(m)))
    names = [f"c{i}" for i in range(m)]
    pw = np.full(num_pads, p.pad_size)
    px = np.zeros(num_pads)
    py = np.zeros(num_pads)
    half = p.pad_size / 2
    perim = 2 * (W + H)
    for k in range(num_pads):
        t = (k + 0.5) / num_pads * perim
        if t < W:
            px[k], py[k], hx, hy = t, half, t / W, 0.0
        elif t < W + H:
            px[k], py[k], hx, hy = W - half, t - W, 1.0, (t - W) / H
        elif t < 2 * W + H:
            px[k], py[k], hx, hy = W - (t - W - H), H - half, 1.0 - (t - W - H) / W, 1.0
        else:
            px[k], py[k], hx, hy = half, H - (t - 2 * W - H), 0.0, 1.0 - (t - 2 * W - H) / H
        px[k] = min(max(px[k], half), W - half)
        py[k] = min(max(py[k], half), H - half)
        _, c = tree.query([hx * (side - 1), hy * (side - 1)])
        nets.append([int(c), m + k])
        names.append(f"p{k}")

    n_all = m + num_pads
    width = np.concatenate([widths, pw])
    height = np.concatenate([heights, pw])
    x = np.concatenate([np.full(m, W / 2), px])
    y = np.concatenate([np.full(m, H / 2), py])
    # pin offsets inside the cell outline; pads connect at their center
    net_pins = []
    for net in nets:
        pins = []
        for node in net:
            if node < m:
                dx = float(rng.uniform(-0.4, 0.4) * widths[node])
                dy = float(rng.uniform(-0.4, 0.4) * heights[node])
                pins.append((node, dx, dy))
            else:
                pins.append((node, 0.0, 0.0))
        net_pins.append(pins)
    netlist = Netlist.from_nets(names, width, height, m, x, y, net_pins)
    assert netlist.num_nodes == n_all
    return netlist, region, PlacementState.from_netlist(netlist)
