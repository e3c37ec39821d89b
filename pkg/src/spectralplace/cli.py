"""Command-line driver: parse or synthesize, place, legalize, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np

from .bookshelf import parse_bookshelf, write_pl
from .density import fillers_from_nodes, insert_fillers
from .engine import PlaceConfig, global_place
from .figures import emit_figures
from .initial import initial_place
from .legalize import greedy_improve, legalize
from .synth import SynthConfig, synthesize_instance
from .wirelength import hpwl

logger = logging.getLogger("spectralplace")

STAGES = ("init", "global", "legal")
WALL_TIME_KEYS = ("stage_seconds",)

_num = {"type": "number"}
_opt_num = {"type": ["number", "null"]}
METRICS_SCHEMA = {
    "type": "object",
    "required": ["design", "num_movable", "num_nets", "num_fillers", "grid", "hpwl",
                 "tau", "iterations", "converged", "stop_after", "stage_seconds", "error"],
    "properties": {
        "design": {"type": "string"},
        "num_movable": {"type": "integer", "minimum": 0},
        "num_nets": {"type": "integer", "minimum": 0},
        "num_fillers": {"type": "integer", "minimum": 0},
        "grid": {"type": ["integer", "null"]},
        "hpwl": {
            "type": "object",
            "required": ["initial", "global", "legal", "final"],
            "properties": {"initial": _opt_num, "global": _opt_num, "legal": _opt_num,
                           "final": _opt_num},
        },
        "tau": {
            "type": "object",
            "required": ["first", "final", "min", "max"],
            "properties": {"first": _opt_num, "final": _opt_num, "min": _opt_num, "max": _opt_num},
        },
        "iterations": {"type": "integer", "minimum": 0},
        "converged": {"type": ["boolean", "null"]},
        "stop_after": {"enum": list(STAGES)},
        "stage_seconds": {"type": "object", "additionalProperties": _num},
        "error": {
            "type": ["object", "null"],
            "required": ["stage", "type", "message"],
            "properties": {"stage": {"type": "string"}, "type": {"type": "string"},
                           "message": {"type": "string"}},
        },
    },
    "additionalProperties": False,
}


@dataclass
class RunConfig:
    aux: Optional[str] = None
    synth: Optional[Tuple[int, float]] = None  # (m, whitespace)
    target_density: float = 1.0
    max_iters: int = 1000
    grid: Optional[int] = None
    seed: int = 0
    out_pl: Optional[str] = None
    trace: Optional[str] = None
    metrics: Optional[str] = None
    svg_dir: Optional[str] = None
    snapshot_iters: Sequence[int] = (1, 25, 50, 100, 200, 400, 800)
    stop_after: str = "legal"

    def __post_init__(self):
        if (self.aux is None) == (self.synth is None):
            raise ValueError("exactly one of aux / synth is required")
        if not 0 < self.target_density <= 1:
            raise ValueError("target density must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.stop_after not in STAGES:
            raise ValueError(f"stop_after must be one of {STAGES}")


def parse_synth(spec: str) -> Tuple[int, float]:
    """``m=K,ws=F`` -> (K, F)."""
    vals: Dict[str, str] = {}
    for part in spec.split(","):
        key, sep, val = part.partition("=")
        if not sep:
            raise ValueError(f"bad synth spec component {part!r}")
        vals[key.strip()] = val.strip()
    unknown = set(vals) - {"m", "ws"}
    if unknown or "m" not in vals:
        raise ValueError(f"synth spec needs m=K[,ws=F], got {spec!r}")
    return int(vals["m"]), float(vals.get("ws", 0.5))


def validate_metrics(metrics: dict) -> None:
    jsonschema.validate(metrics, METRICS_SCHEMA)


def _round(v):
    return None if v is None else float(v)


def run(cfg: RunConfig) -> Tuple[int, dict]:
    """Execute the flow; returns (exit status, metrics)."""
    metrics = {
        "design": "", "num_movable": 0, "num_nets": 0, "num_fillers": 0, "grid": None,
        "hpwl": {"initial": None, "global": None, "legal": None, "final": None},
        "tau": {"first": None, "final": None, "min": None, "max": None},
        "iterations": 0, "converged": None, "stop_after": cfg.stop_after,
        "stage_seconds": {}, "error": None,
    }
    stage = "input"
    t0 = time.perf_counter()

    def lap(name):
        nonlocal t0
        now = time.perf_counter()
        metrics["stage_seconds"][name] = now - t0
        t0 = now

    try:
        if cfg.aux:
            netlist, region, _ = parse_bookshelf(cfg.aux)
            metrics["design"] = Path(cfg.aux).stem
        else:
            m, ws = cfg.synth
            netlist, region, _ = synthesize_instance(m, cfg.seed, SynthConfig(whitespace=ws))
            metrics["design"] = f"synth_m{m}_ws{ws:g}_s{cfg.seed}"
        metrics["num_movable"] = netlist.num_movable
        metrics["num_nets"] = netlist.num_nets
        lap("input")

        stage = "init"
        placement = initial_place(netlist, region, seed=cfg.seed)
        metrics["hpwl"]["initial"] = hpwl(netlist, placement).total
        metrics["hpwl"]["final"] = metrics["hpwl"]["initial"]
        lap("init")

        result = None
        if cfg.stop_after in ("global", "legal"):
            stage = "fillers"
            fnodes = insert_fillers(netlist, region, cfg.target_density, seed=cfg.seed)
            fillers, fx, fy = fillers_from_nodes(fnodes)
            metrics["num_fillers"] = fillers.count
            lap("fillers")

            stage = "global"
            pcfg = PlaceConfig(target_density=cfg.target_density, max_iters=cfg.max_iters,
                               grid=cfg.grid, trace_path=cfg.trace,
                               snapshot_iters=tuple(cfg.snapshot_iters) if cfg.svg_dir else ())
            result = global_place(netlist, region, placement.with_fillers(fx, fy), fillers, pcfg)
            placement = result.placement.movable_only()  # fillers removed
            taus = [t.tau for t in result.trace] + [result.tau]
            metrics["grid"] = result.grid.n
            metrics["iterations"] = result.iterations
            metrics["converged"] = result.converged
            metrics["tau"] = {"first": taus[0], "final": result.tau,
                              "min": min(taus), "max": max(taus)}
            metrics["hpwl"]["global"] = hpwl(netlist, placement).total
            metrics["hpwl"]["final"] = metrics["hpwl"]["global"]
            lap("global")

        if cfg.stop_after == "legal":
            stage = "legal"
            assignment = legalize(placement, netlist, region)
            metrics["hpwl"]["legal"] = hpwl(netlist, assignment.placement()).total
            lap("legal")
            stage = "detail"
            assignment = greedy_improve(assignment, netlist, region)
            placement = assignment.placement()
            metrics["hpwl"]["final"] = hpwl(netlist, placement).total
            lap("detail")

        if cfg.out_pl:
            stage = "output"
            write_pl(placement, netlist, cfg.out_pl)
        if cfg.svg_dir:
            stage = "figures"
            trace = result.trace if result is not None else []
            snaps = result.snapshots if result is not None else []
            emit_figures(trace, snaps, cfg.svg_dir)
            lap("figures")
        status = 0
    except Exception as exc:  # every stage failure is reported, not raised
        logger.error("%s stage failed: %s", stage, exc)
        metrics["error"] = {"stage": stage, "type": type(exc).__name__, "message": str(exc)}
        status = 1

    validate_metrics(metrics)
    if cfg.metrics:
        try:
            write_metrics(metrics, cfg.metrics)
        except OSError as exc:
            logger.error("cannot write metrics: %s", exc)
            status = status or 1
    return status, metrics


def write_metrics(metrics: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _int_list(s: str) -> List[int]:
    return [int(v) for v in s.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="spectralplace",
        description="Electrostatic global placement with a spectral Poisson solver.")
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--aux", metavar="PATH", help="Bookshelf .aux file")
    src.add_argument("--synth", metavar="m=K,ws=F",
                     help="synthetic instance with K cells and whitespace fraction F")
    ap.add_argument("--target-density", type=float, default=1.0)
    ap.add_argument("--max-iters", type=int, default=1000)
    ap.add_argument("--grid", type=int, default=None, help="bin grid dimension (power of 2)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-pl", metavar="PATH")
    ap.add_argument("--trace", metavar="PATH", help="per-iteration JSON-lines trace")
    ap.add_argument("--metrics", metavar="PATH", help="metrics JSON output")
    ap.add_argument("--svg-dir", metavar="PATH", help="directory for SVG figures")
    ap.add_argument("--snapshot-iters", type=_int_list, default=[1, 25, 50, 100, 200, 400, 800],
                    help="comma-separated iterations for heatmaps (default: %(default)s)")
    ap.add_argument("--stop-after", choices=STAGES, default="legal")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig(
            aux=args.aux,
            synth=parse_synth(args.synth) if args.synth else None,
            target_density=args.target_density, max_iters=args.max_iters, grid=args.grid,
            seed=args.seed, out_pl=args.out_pl, trace=args.trace, metrics=args.metrics,
            svg_dir=args.svg_dir, snapshot_iters=args.snapshot_iters, stop_after=args.stop_after)
    except ValueError as exc:
        err = {"error": {"stage": "config", "type": "ValueError", "message": str(exc)}}
        print(json.dumps(err), file=sys.stderr)
        return 2
    status, metrics = run(cfg)
    if metrics["error"] is not None:
        print(json.dumps({"error": metrics["error"]}), file=sys.stderr)
    else:
        h = metrics["hpwl"]
        glob = "n/a" if h["global"] is None else f"{h['global']:.6g}"
        print(f"{metrics['design']}: final HPWL {h['final']:.6g}"
              f" (global {glob}, iterations {metrics['iterations']})")
    return status


if __name__ == "__main__":
    sys.exit(main())
