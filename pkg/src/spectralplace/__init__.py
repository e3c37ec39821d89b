"""Electrostatic global placement with a spectral Poisson solver."""

from .bookshelf import parse_bookshelf, read_pl, write_bookshelf, write_pl
from .density import DensitySystem, build_density, choose_grid_dim, insert_fillers, overflow
from .engine import GlobalResult, PlaceConfig, ScheduleState, global_place, update_schedules
from .grid import GridSpec
from .initial import initial_place
from .legalize import RowAssignment, check_legal, greedy_improve, legalize
from .model import Netlist, PlacementState, Region, Row
from .poisson import FieldMaps, solve
from .synth import SynthConfig, synthesize_instance
from .wirelength import hpwl, wa_wirelength

__version__ = "0.1.0"

__all__ = [
    "DensitySystem", "FieldMaps", "GlobalResult", "GridSpec", "Netlist", "PlaceConfig",
    "PlacementState", "Region", "Row", "RowAssignment", "ScheduleState", "SynthConfig",
    "build_density", "check_legal", "choose_grid_dim", "global_place", "greedy_improve",
    "hpwl", "initial_place", "insert_fillers", "legalize", "overflow", "parse_bookshelf",
    "read_pl", "solve", "synthesize_instance", "update_schedules", "wa_wirelength",
    "write_bookshelf", "write_pl",
]
