import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_netlist, row_region
from oracles import naive_overlap_sum
from spectralplace.density import (DensitySystem, build_density, choose_grid_dim, filler_size,
                                   fillers_from_nodes, insert_fillers, overflow,
                                   potential_energy, remove_dc)
from spectralplace.grid import GridSpec
from spectralplace.model import NodeKind, PlacementState, Region, Row
from spectralplace.poisson import solve
from spectralplace.synth import synthesize_instance


@pytest.mark.parametrize("m,n", [(1, 1), (4, 2), (5, 4), (16, 4), (17, 8), (1000, 32),
                                 (211000, 512), (10 ** 9, 1024)])
def test_choose_grid_dim(m, n):
    assert choose_grid_dim(m) == n


def test_choose_grid_dim_rejects_zero():
    with pytest.raises(ValueError):
        choose_grid_dim(0)


def _unit_grid(n=4, size=1.0):
    return GridSpec(n, 0.0, 0.0, size, size)


def test_cell_covering_one_bin():
    nl = make_netlist([(2, 2)])
    g = _unit_grid(4, 2.0)
    d = build_density(nl, PlacementState([3.0], [3.0], 1), g)
    assert d.pre_dc[1, 1] == pytest.approx(1.0)
    assert d.pre_dc.sum() == pytest.approx(1.0)


def test_cell_shifted_half_bin():
    nl = make_netlist([(2, 2)])
    g = _unit_grid(4, 2.0)
    d = build_density(nl, PlacementState([4.0], [3.0], 1), g)
    assert d.pre_dc[1, 1] == pytest.approx(0.5) and d.pre_dc[2, 1] == pytest.approx(0.5)


def test_dc_removal():
    nl = make_netlist([(2, 2)])
    d = build_density(nl, PlacementState([4.0], [3.0], 1), _unit_grid(4, 2.0))
    assert abs(d.rho.sum()) <= 1e-9 * 16
    np.testing.assert_allclose(remove_dc(d.rho), d.rho, atol=1e-15)
    assert (d.pre_dc >= 0).all()


def test_rejects_node_outside_grid(small_synth):
    nl, region, _ = small_synth
    m = nl.num_movable
    x = np.full(m, region.width / 2)
    x[0] = region.xh + 100
    sys = DensitySystem(nl, region, GridSpec.for_region(region, 8))
    with pytest.raises(ValueError):
        sys.build(PlacementState(x, np.full(m, region.height / 2), m))


def _random_inside(nl, region, seed, extra_w=None, extra_h=None):
    rng = np.random.default_rng(seed)
    w = nl.width[:nl.num_movable] if extra_w is None else np.concatenate([nl.width[:nl.num_movable], extra_w])
    h = nl.height[:nl.num_movable] if extra_h is None else np.concatenate([nl.height[:nl.num_movable], extra_h])
    x = rng.uniform(region.xl + w / 2, region.xh - w / 2)
    y = rng.uniform(region.yl + h / 2, region.yh - h / 2)
    return PlacementState(x, y, nl.num_movable)


def conservation_error(system: DensitySystem, placement: PlacementState) -> float:
    """Relative error between grid total area and summed effective node areas."""
    d = system.build(placement)
    total = float(d.pre_dc.sum()) * system.grid.bin_area
    expect = float(system.mov_area.sum() + system.target_density * system.static_area.sum())
    return abs(total - expect) / expect


@pytest.mark.parametrize("rho_t", [1.0, 0.8])
def test_area_conservation_200_cells(rho_t):
    nl, region, _ = synthesize_instance(200, seed=2)
    fnodes = insert_fillers(nl, region, rho_t, seed=1)
    fillers, fx, fy = fillers_from_nodes(fnodes)
    sys = DensitySystem(nl, region, GridSpec.for_region(region, 16), fillers, rho_t)
    for seed in range(3):
        pl = _random_inside(nl, region, seed, fillers.width, fillers.height)
        assert conservation_error(sys, pl) < 1e-6


def test_conservation_with_dark_and_fixed():
    rows = [Row(0, 2, 0, 32), Row(2, 2, 8, 32), Row(4, 2, 0, 32), Row(6, 2, 0, 24)]
    region = Region(0, 0, 32, 8, tuple(rows))
    nl = make_netlist([(3, 2)] * 10, fixed=[(4, 4, 20, 4), (1, 1, 0.5, 7.5)], non_blocking=[False] * 11 + [True])
    sys = DensitySystem(nl, region, GridSpec.for_region(region, 8), target_density=0.9)
    assert sys.static_area.sum() == pytest.approx(16 + 16 + 16)  # macro + two dark strips
    pl = _random_inside(nl, region, 0)
    assert conservation_error(sys, pl) < 1e-6


def test_energy_zero_field_and_single_node():
    nl = make_netlist([(1, 1)])
    region = Region(0, 0, 4, 4)
    g = _unit_grid(4)
    sys = DensitySystem(nl, region, g)
    pl = PlacementState([1.5], [2.5], 1)
    f = solve(np.zeros((4, 4)))
    assert potential_energy(sys, pl, f) == 0
    rho = np.random.default_rng(0).normal(size=(4, 4))
    f = solve(rho - rho.mean())
    assert potential_energy(sys, pl, f) == pytest.approx(1.0 * f.psi[1, 2])


def test_energy_matches_naive_double_loop():
    nl, region, _ = synthesize_instance(60, seed=9)
    fnodes = insert_fillers(nl, region, 1.0, seed=0)
    fillers, fx, fy = fillers_from_nodes(fnodes)
    g = GridSpec.for_region(region, 8)
    sys = DensitySystem(nl, region, g, fillers)
    pl = _random_inside(nl, region, 4, fillers.width, fillers.height)
    f = solve(sys.build(pl))
    # naive: every node (movable, filler, blocking fixed, dark) x every bin
    w, h = sys.mov_w, sys.mov_h
    mov = naive_overlap_sum(g, f.psi, pl.x, pl.y, w, h)
    m = nl.num_movable
    fixed = np.flatnonzero(~nl.non_blocking[m:]) + m
    dx, dy, dw, dh = region.dark_arrays()
    sx = np.concatenate([nl.x[fixed], dx])
    sy = np.concatenate([nl.y[fixed], dy])
    sw = np.concatenate([nl.width[fixed], dw])
    sh = np.concatenate([nl.height[fixed], dh])
    stat = naive_overlap_sum(g, f.psi, sx, sy, sw, sh)
    expect = mov.sum() + sys.target_density * stat.sum()
    assert potential_energy(sys, pl, f) == pytest.approx(expect, rel=1e-12, abs=1e-12)


def test_overflow_zero_when_spread():
    nl = make_netlist([(1, 1)] * 4)
    g = _unit_grid(2, 2.0)
    pl = PlacementState([1.0, 3.0, 1.0, 3.0], [1.0, 1.0, 3.0, 3.0], 4)
    assert overflow(nl, pl, g).tau == 0


def test_overflow_single_bin_arithmetic():
    nl = make_netlist([(6.5, 10), (6.5, 10)])
    g = GridSpec(1, 0.0, 0.0, 10.0, 10.0)
    pl = PlacementState([5.0, 5.0], [5.0, 5.0], 2)
    rep = overflow(nl, pl, g, 1.0)
    assert rep.tau == pytest.approx(30 / 130) and rep.overflowed_area == pytest.approx(30)


def test_overflow_stacked_cells():
    nl = make_netlist([(1, 1)] * 10)
    g = _unit_grid(16, 1.0)  # 256 area, 10 movable: whitespace > 90%
    pl = PlacementState(np.full(10, 4.5), np.full(10, 4.5), 10)
    assert overflow(nl, pl, g).tau >= 0.9


def test_overflow_counts_fixed_capacity():
    nl = make_netlist([(2, 2)], fixed=[(2, 2, 1, 1)])
    g = GridSpec(1, 0.0, 0.0, 2.0, 2.0)
    rep = overflow(nl, PlacementState([1.0], [1.0], 1), g, 1.0, Region(0, 0, 2, 2))
    assert rep.tau == pytest.approx(1.0)


def test_overflow_rejects_no_movable_area():
    nl = make_netlist([], fixed=[(1, 1, 1, 1)])
    with pytest.raises(ValueError):
        overflow(nl, PlacementState([], [], 0), _unit_grid(2), 1.0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_overflow_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    m = 30
    sizes = [(int(rng.integers(1, 4)), 1) for _ in range(m)]
    nl = make_netlist(sizes)
    g = _unit_grid(8, 2.0)
    x = rng.uniform(2, 14, m)
    y = rng.uniform(1, 15, m)
    perm = rng.permutation(m)
    nl_p = make_netlist([sizes[i] for i in perm])
    a = overflow(nl, PlacementState(x, y, m), g).tau
    b = overflow(nl_p, PlacementState(x[perm], y[perm], m), g).tau
    assert a == pytest.approx(b, abs=1e-12)


def test_fillers_zero_when_full(caplog):
    nl = make_netlist([(10, 1)] * 4)
    region = row_region(10, 4)
    with caplog.at_level(logging.WARNING):
        assert insert_fillers(nl, region, 1.0) == []
    assert "fillers" in caplog.text


def test_filler_total_area_empty_region():
    nl = make_netlist([])
    region = row_region(100, 100)
    f = insert_fillers(nl, region, 1.0, seed=0, fallback_area=1.0)
    total = sum(n.width * n.height for n in f)
    assert abs(total - 10000) <= 1.0
    assert all(n.kind == NodeKind.FILLER for n in f)


def test_filler_area_and_determinism():
    nl, region, _ = synthesize_instance(300, seed=1)
    f1 = insert_fillers(nl, region, 0.9, seed=5)
    f2 = insert_fillers(nl, region, 0.9, seed=5)
    assert [(a.x, a.y) for a in f1] == [(b.x, b.y) for b in f2]
    side = filler_size(nl)
    m = nl.num_movable
    pads = np.flatnonzero(~nl.non_blocking[m:]) + m
    blocked = sum(nl.width[i] * nl.height[i] for i in pads)  # pads sit inside rows
    a_fc = 0.9 * (region.row_area - blocked) - nl.movable_area
    assert len(f1) == int(a_fc // (side * side))
    # every filler lies inside the region
    for n in f1:
        assert region.xl <= n.x - n.width / 2 and n.x + n.width / 2 <= region.xh + 1e-9


def test_filler_size_percentile_band():
    nl = make_netlist([(1, 1)] * 5 + [(2, 2)] * 90 + [(10, 10)] * 5)
    assert filler_size(nl) == pytest.approx(2.0)
