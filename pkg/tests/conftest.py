import numpy as np
import pytest

from spectralplace.model import Netlist, PlacementState, Region, Row


def make_netlist(movable, fixed=(), nets=(), non_blocking=None):
    """movable / fixed: sequences of (w, h) or (w, h, x, y); nets: lists of node ids
    or (node, dx, dy) triples."""
    names, w, h, x, y = [], [], [], [], []
    for i, spec in enumerate(list(movable) + list(fixed)):
        names.append(f"c{i}" if i < len(movable) else f"p{i}")
        w.append(spec[0])
        h.append(spec[1])
        x.append(spec[2] if len(spec) > 2 else 0.0)
        y.append(spec[3] if len(spec) > 3 else 0.0)
    norm = []
    for net in nets:
        norm.append([p if isinstance(p, tuple) else (p, 0.0, 0.0) for p in net])
    nl = Netlist.from_nets(names, w, h, len(movable), x, y, norm)
    if non_blocking is not None:
        nl.non_blocking = np.asarray(non_blocking, dtype=bool)
    return nl


def row_region(width, n_rows, row_height=1.0, site=1.0, x0=0.0, y0=0.0):
    rows = [Row(y0 + r * row_height, row_height, x0, x0 + width, site) for r in range(n_rows)]
    return Region.from_rows(rows)


@pytest.fixture
def small_synth():
    from spectralplace.synth import synthesize_instance

    return synthesize_instance(200, seed=3)


def placed(netlist, x, y):
    return PlacementState(np.asarray(x, float), np.asarray(y, float), netlist.num_movable)


# acceptance criteria register their verdicts here; printed after the run
ACCEPTANCE = []


def record_acceptance(criterion, ok, detail):
    """``ok`` is True, False, or None for a skipped criterion."""
    verdict = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"{criterion} {verdict}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
