"""ISPD-2005 Bookshelf reader and writer (.aux/.nodes/.nets/.wts/.pl/.scl)."""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Dict, Iterator, List, Tuple

import numpy as np

from .model import Netlist, PlacementState, Region, Row

logger = logging.getLogger(__name__)


class BookshelfError(ValueError):
    """Base class for Bookshelf diagnostics; carries file and line number."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        self.message = message
        where = f"{self.path}:{line}" if line else self.path
        super().__init__(f"{where}: {message}")


class MissingFileError(BookshelfError):
    pass


class HeaderError(BookshelfError):
    pass


class MalformedLineError(BookshelfError):
    pass


class UnknownNodeError(BookshelfError):
    pass


class CountMismatchError(BookshelfError):
    pass


def _lines(path: Path, kind: str) -> Iterator[Tuple[int, List[str]]]:
    """Yield (line number, tokens) with comments stripped, after checking the header."""
    if not path.is_file():
        raise MissingFileError(path, 0, f"missing .{kind} file")
    seen_header = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if not seen_header:
                toks = line.split()
                if len(toks) < 3 or toks[0] != "UCLA" or toks[1] != kind:
                    raise HeaderError(path, lineno, f"expected header 'UCLA {kind} 1.0', got {line!r}")
                seen_header = True
                continue
            yield lineno, line.replace(":", " : ").split()
    if not seen_header:
        raise HeaderError(path, 0, f"empty file, expected header 'UCLA {kind} 1.0'")


def _keyval(toks: List[str], path, lineno) -> Tuple[str, str]:
    if len(toks) != 3 or toks[1] != ":":
        raise MalformedLineError(path, lineno, f"expected 'Key : value', got {' '.join(toks)!r}")
    return toks[0], toks[2]


def _num(tok: str, path, lineno) -> float:
    try:
        return float(tok)
    except ValueError:
        raise MalformedLineError(path, lineno, f"expected a number, got {tok!r}") from None


def parse_aux(aux_path) -> Dict[str, Path]:
    aux_path = Path(aux_path)
    if not aux_path.is_file():
        raise MissingFileError(aux_path, 0, "missing .aux file")
    with open(aux_path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise MalformedLineError(aux_path, lineno, "expected 'RowBasedPlacement : files...'")
            files = line.split(":", 1)[1].split()
            out = {}
            for f in files:
                ext = f.rsplit(".", 1)[-1]
                out[ext] = aux_path.parent / f
            for ext in ("nodes", "nets", "pl", "scl"):
                if ext not in out:
                    raise MalformedLineError(aux_path, lineno, f"no .{ext} file listed")
            return out
    raise MalformedLineError(aux_path, 0, "empty .aux file")


def _parse_nodes(path: Path):
    num_nodes = num_terms = None
    names, w, h, terminal, ni = [], [], [], [], []
    for lineno, toks in _lines(path, "nodes"):
        if toks[0] in ("NumNodes", "NumTerminals"):
            key, val = _keyval(toks, path, lineno)
            if key == "NumNodes":
                num_nodes = int(_num(val, path, lineno))
            else:
                num_terms = int(_num(val, path, lineno))
            continue
        if len(toks) < 3:
            raise MalformedLineError(path, lineno, f"node entry needs 'name width height', got {' '.join(toks)!r}")
        names.append(toks[0])
        w.append(_num(toks[1], path, lineno))
        h.append(_num(toks[2], path, lineno))
        tag = toks[3] if len(toks) > 3 else ""
        terminal.append(tag in ("terminal", "terminal_NI"))
        ni.append(tag == "terminal_NI")
    if num_nodes is not None and num_nodes != len(names):
        raise CountMismatchError(path, 0, f"NumNodes declares {num_nodes}, file lists {len(names)}")
    if num_terms is not None and num_terms != sum(terminal):
        raise CountMismatchError(path, 0, f"NumTerminals declares {num_terms}, file lists {sum(terminal)}")
    return names, np.array(w), np.array(h), np.array(terminal, dtype=bool), np.array(ni, dtype=bool)


def _parse_nets(path: Path, index: Dict[str, int]):
    num_nets = num_pins = None
    net_names: List[str] = []
    pin_node: List[int] = []
    pin_dx: List[float] = []
    pin_dy: List[float] = []
    start = [0]
    expected = 0
    header_line = 0
    for lineno, toks in _lines(path, "nets"):
        if toks[0] in ("NumNets", "NumPins"):
            key, val = _keyval(toks, path, lineno)
            if key == "NumNets":
                num_nets = int(_num(val, path, lineno))
            else:
                num_pins = int(_num(val, path, lineno))
            continue
        if toks[0] == "NetDegree":
            if expected:
                raise CountMismatchError(path, header_line, f"net declares {len(pin_node) - start[-1] + expected} pins but lists fewer")
            if len(toks) < 3 or toks[1] != ":":
                raise MalformedLineError(path, lineno, "expected 'NetDegree : d [name]'")
            expected = int(_num(toks[2], path, lineno))
            net_names.append(toks[3] if len(toks) > 3 else f"net{len(net_names)}")
            header_line = lineno
            if expected == 0:
                start.append(len(pin_node))
            continue
        if not expected:
            raise CountMismatchError(path, lineno, "pin line outside a net (more pins than NetDegree)")
        name = toks[0]
        if name not in index:
            raise UnknownNodeError(path, lineno, f"pin references unknown node {name!r}")
        dx = dy = 0.0
        if ":" in toks:
            k = toks.index(":")
            if len(toks) < k + 3:
                raise MalformedLineError(path, lineno, "pin offset needs two numbers")
            dx = _num(toks[k + 1], path, lineno)
            dy = _num(toks[k + 2], path, lineno)
        pin_node.append(index[name])
        pin_dx.append(dx)
        pin_dy.append(dy)
        expected -= 1
        if expected == 0:
            start.append(len(pin_node))
    if expected:
        raise CountMismatchError(path, header_line, "last net lists fewer pins than its NetDegree")
    if num_nets is not None and num_nets != len(net_names):
        raise CountMismatchError(path, 0, f"NumNets declares {num_nets}, file lists {len(net_names)}")
    if num_pins is not None and num_pins != len(pin_node):
        raise CountMismatchError(path, 0, f"NumPins declares {num_pins}, file lists {len(pin_node)}")
    return net_names, pin_node, pin_dx, pin_dy, start


def _parse_pl(path: Path, index: Dict[str, int]):
    """Return {node index: (llx, lly)}."""
    out = {}
    for lineno, toks in _lines(path, "pl"):
        if len(toks) < 3:
            raise MalformedLineError(path, lineno, "expected 'name x y : orient'")
        if toks[0] not in index:
            raise UnknownNodeError(path, lineno, f"placement for unknown node {toks[0]!r}")
        out[index[toks[0]]] = (_num(toks[1], path, lineno), _num(toks[2], path, lineno))
    return out


def _parse_scl(path: Path) -> List[Row]:
    rows: List[Row] = []
    declared = None
    cur: Dict[str, float] = {}
    in_row = False
    row_line = 0
    for lineno, toks in _lines(path, "scl"):
        key = toks[0]
        if key == "NumRows":
            declared = int(_num(_keyval(toks, path, lineno)[1], path, lineno))
        elif key == "CoreRow":
            in_row, cur, row_line = True, {}, lineno
        elif key == "End":
            if not in_row:
                raise MalformedLineError(path, lineno, "'End' without 'CoreRow'")
            for need in ("Coordinate", "Height", "SubrowOrigin", "NumSites"):
                if need not in cur:
                    raise MalformedLineError(path, row_line, f"row missing {need}")
            sw = cur.get("Sitespacing", cur.get("Sitewidth", 1.0))
            x0 = cur["SubrowOrigin"]
            rows.append(Row(cur["Coordinate"], cur["Height"], x0, x0 + cur["NumSites"] * sw, sw))
            in_row = False
        elif in_row:
            # "SubrowOrigin : x NumSites : n" packs two pairs on one line
            i = 0
            while i < len(toks):
                if i + 2 >= len(toks) or toks[i + 1] != ":":
                    raise MalformedLineError(path, lineno, f"bad row attribute {' '.join(toks)!r}")
                if toks[i] not in ("Siteorient", "Sitesymmetry"):
                    cur[toks[i]] = _num(toks[i + 2], path, lineno)
                i += 3
        else:
            raise MalformedLineError(path, lineno, f"unexpected {key!r} outside a row")
    if in_row:
        raise MalformedLineError(path, row_line, "row not closed by 'End'")
    if declared is not None and declared != len(rows):
        raise CountMismatchError(path, 0, f"NumRows declares {declared}, file lists {len(rows)}")
    if not rows:
        raise MalformedLineError(path, 0, "no rows")
    return rows


def _parse_wts(path: Path):
    # weights are read for validation only; every net is optimized with weight 1
    if not path.is_file():
        raise MissingFileError(path, 0, "missing .wts file")
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if not line.startswith("UCLA"):
                raise HeaderError(path, lineno, "expected header 'UCLA wts 1.0'")
            return


def parse_bookshelf(aux_path):
    """Read a Bookshelf benchmark.

    Returns ``(netlist, region, placement)``. Movable nodes are renumbered to
    come first; ``placement`` holds the movable centers found in the .pl file.
    """
    files = parse_aux(aux_path)
    for ext in ("nodes", "nets", "pl", "scl"):
        if not files[ext].is_file():
            raise MissingFileError(files[ext], 0, f"missing .{ext} file")
    if "wts" in files:
        _parse_wts(files["wts"])

    names, w, h, terminal, ni = _parse_nodes(files["nodes"])
    order = np.concatenate([np.flatnonzero(~terminal), np.flatnonzero(terminal)])
    names = [names[i] for i in order]
    w, h, ni = w[order], h[order], ni[order]
    num_movable = int(np.sum(~terminal))
    index = {nm: i for i, nm in enumerate(names)}
    if len(index) != len(names):
        raise MalformedLineError(files["nodes"], 0, "duplicate node names")

    net_names, pin_node, pin_dx, pin_dy, start = _parse_nets(files["nets"], index)
    pl = _parse_pl(files["pl"], index)
    rows = _parse_scl(files["scl"])

    x = np.zeros(len(names))
    y = np.zeros(len(names))
    for i, (llx, lly) in pl.items():
        x[i] = llx + w[i] / 2
        y[i] = lly + h[i] / 2
    missing = [names[i] for i in range(num_movable, len(names)) if i not in pl]
    if missing:
        logger.warning("%d fixed nodes have no .pl entry; placed at origin", len(missing))

    netlist = Netlist(names, w, h, num_movable, x, y, pin_node, pin_dx, pin_dy, start,
                      net_names, non_blocking=ni)
    bad = (np.abs(netlist.pin_dx) > netlist.width[netlist.pin_node] / 2 + 1e-9) | \
          (np.abs(netlist.pin_dy) > netlist.height[netlist.pin_node] / 2 + 1e-9)
    if np.any(bad):
        logger.warning("%d pin offsets lie outside their node outline", int(bad.sum()))
    region = Region.from_rows(rows)
    return netlist, region, PlacementState.from_netlist(netlist)


def read_pl(path, netlist: Netlist) -> PlacementState:
    """Read movable centers from a .pl file against an existing netlist."""
    index = {nm: i for i, nm in enumerate(netlist.names)}
    pl = _parse_pl(Path(path), index)
    m = netlist.num_movable
    x = netlist.x[:m].copy()
    y = netlist.y[:m].copy()
    for i, (llx, lly) in pl.items():
        if i < m:
            x[i] = llx + netlist.width[i] / 2
            y[i] = lly + netlist.height[i] / 2
    return PlacementState(x, y, m)


def _fmt(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_pl(placement: PlacementState, netlist: Netlist, path) -> None:
    """Write lower-left corners; fixed nodes get ``/FIXED``, fillers are dropped."""
    if not (np.all(np.isfinite(placement.x)) and np.all(np.isfinite(placement.y))):
        raise ValueError("placement contains non-finite coordinates")
    m = netlist.num_movable
    with open(path, "w") as fh:
        fh.write("UCLA pl 1.0\n\n")
        for i in range(m):
            llx = placement.x[i] - netlist.width[i] / 2
            lly = placement.y[i] - netlist.height[i] / 2
            fh.write(f"{netlist.names[i]}\t{_fmt(llx)}\t{_fmt(lly)}\t: N\n")
        for i in range(m, netlist.num_nodes):
            llx = netlist.x[i] - netlist.width[i] / 2
            lly = netlist.y[i] - netlist.height[i] / 2
            tag = "/FIXED_NI" if netlist.non_blocking[i] else "/FIXED"
            fh.write(f"{netlist.names[i]}\t{_fmt(llx)}\t{_fmt(lly)}\t: N {tag}\n")


def write_bookshelf(netlist: Netlist, region: Region, placement: PlacementState,
                    directory, design: str) -> Path:
    """Write a full benchmark; returns the .aux path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    m = netlist.num_movable
    with open(d / f"{design}.nodes", "w") as fh:
        fh.write("UCLA nodes 1.0\n\n")
        fh.write(f"NumNodes : {netlist.num_nodes}\nNumTerminals : {netlist.num_fixed}\n")
        for i, nm in enumerate(netlist.names):
            tag = ""
            if i >= m:
                tag = "\tterminal_NI" if netlist.non_blocking[i] else "\tterminal"
            fh.write(f"\t{nm}\t{_fmt(netlist.width[i])}\t{_fmt(netlist.height[i])}{tag}\n")
    with open(d / f"{design}.nets", "w") as fh:
        fh.write("UCLA nets 1.0\n\n")
        fh.write(f"NumNets : {netlist.num_nets}\nNumPins : {netlist.num_pins}\n")
        for j in range(netlist.num_nets):
            s, e = netlist.net_start[j], netlist.net_start[j + 1]
            fh.write(f"NetDegree : {e - s}\t{netlist.net_names[j]}\n")
            for p in range(s, e):
                fh.write(f"\t{netlist.names[netlist.pin_node[p]]}\tB : "
                         f"{_fmt(netlist.pin_dx[p])}\t{_fmt(netlist.pin_dy[p])}\n")
    with open(d / f"{design}.wts", "w") as fh:
        fh.write("UCLA wts 1.0\n\n")
        for nm in netlist.net_names:
            fh.write(f"{nm}\t1\n")
    write_pl(placement, netlist, d / f"{design}.pl")
    with open(d / f"{design}.scl", "w") as fh:
        fh.write("UCLA scl 1.0\n\n")
        fh.write(f"NumRows : {len(region.rows)}\n\n")
        for r in region.rows:
            sites = int(round((r.x_hi - r.x_lo) / r.site_width))
            fh.write("CoreRow Horizontal\n")
            fh.write(f"  Coordinate    :   {_fmt(r.y)}\n  Height        :   {_fmt(r.height)}\n")
            fh.write(f"  Sitewidth     :   {_fmt(r.site_width)}\n  Sitespacing   :   {_fmt(r.site_width)}\n")
            fh.write("  Siteorient    :    1\n  Sitesymmetry  :    1\n")
            fh.write(f"  SubrowOrigin  :   {_fmt(r.x_lo)}\tNumSites  :  {sites}\nEnd\n")
    aux = d / f"{design}.aux"
    with open(aux, "w") as fh:
        fh.write(f"RowBasedPlacement :  {design}.nodes  {design}.nets  {design}.wts  "
                 f"{design}.pl  {design}.scl\n")
    return aux
