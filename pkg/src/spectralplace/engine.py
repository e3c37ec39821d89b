"""Nonlinear global placement: penalized objective, CG steps and schedules.

The objective is ``f = W_wa + lam * N / 2`` where ``N = sum_i q_i psi_i`` is the
potential energy summed over every charge. Each pair of charges appears twice
in ``N``, so the half makes the movable-node gradient exactly
``grad W_wa - lam * q_i * E_i``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import poisson
from .density import DensitySystem, choose_grid_dim
from .grid import GridSpec
from .model import Fillers, Netlist, PlacementState, Region
from .wirelength import hpwl, wa_wirelength

logger = logging.getLogger(__name__)


@dataclass
class PlaceConfig:
    target_density: float = 1.0
    max_iters: int = 1000
    grid: Optional[int] = None
    tau_stop: float = 0.10
    alpha0_bins: float = 0.044
    # trust region for the frozen-field line search, in bin widths
    alpha_cap_bins: float = 1.0
    delta_w_ref: float = 3.5e5
    mu_min: float = 0.75
    mu_max: float = 1.1
    armijo_c1: float = 1e-4
    restart_every: int = 50
    snapshot_iters: Sequence[int] = ()
    trace_path: Optional[str] = None


@dataclass
class ScheduleState:
    lam: float
    alpha_max: float
    alpha_min: float
    gamma: float
    tau: float
    k: int
    alpha0: float
    w_b: float
    delta_w_ref: float = 3.5e5
    mu_bounds: Tuple[float, float] = (0.75, 1.1)
    mu: float = 1.0
    alpha_cap: float = math.inf


@dataclass
class TraceRecord:
    k: int
    hpwl: float
    wa: float
    energy: float
    tau: float
    lam: float
    gamma: float
    alpha: float


@dataclass
class Snapshot:
    k: int
    rho: np.ndarray
    psi: np.ndarray
    field_mag: np.ndarray


@dataclass
class GlobalResult:
    placement: PlacementState
    trace: List[TraceRecord]
    converged: bool
    tau: float
    iterations: int
    schedule: ScheduleState
    grid: GridSpec
    snapshots: List[Snapshot] = field(default_factory=list)


def penalty_scale(delta_w: float, delta_w_ref: float = 3.5e5,
                  bounds: Tuple[float, float] = (0.75, 1.1)) -> float:
    """mu = 1.1 ** (1 - dW / dW_ref), clamped to ``bounds``."""
    mu = 1.1 ** (-delta_w / delta_w_ref + 1.0)
    return min(max(mu, bounds[0]), bounds[1])


def smoothing_gamma(tau: float, w_b: float) -> float:
    return 8.0 * w_b * 10.0 ** (20.0 / 9.0 * (tau - 0.1) - 1.0)


def update_schedules(state: ScheduleState, w_k: float, w_prev: float, tau_k: float,
                     alpha_k: float) -> ScheduleState:
    amax = min(max(state.alpha0, 2.0 * alpha_k), max(state.alpha_cap, state.alpha0))
    mu = penalty_scale(w_k - w_prev, state.delta_w_ref, state.mu_bounds)
    return replace(state, lam=mu * state.lam, alpha_max=amax, alpha_min=0.01 * amax,
                   gamma=smoothing_gamma(tau_k, state.w_b), tau=tau_k, k=state.k + 1, mu=mu)


@dataclass
class Evaluation:
    f: float
    grad: np.ndarray  # [gx, gy] flattened
    wa: float
    energy: float
    wa_grad: np.ndarray
    density_grad: np.ndarray  # -q E (per unit lambda)
    field: poisson.FieldMaps
    density: object
    psi_nodes: np.ndarray


class Objective:
    """f and grad f for one netlist / density system pair."""

    def __init__(self, netlist: Netlist, system: DensitySystem, region: Region):
        self.netlist = netlist
        self.system = system
        self.region = region
        self.m = netlist.num_movable
        self.w = system.mov_w
        self.h = system.mov_h
        self.q = system.mov_area
        self.lo_x = region.xl + self.w / 2
        self.hi_x = np.maximum(region.xh - self.w / 2, self.lo_x)
        self.lo_y = region.yl + self.h / 2
        self.hi_y = np.maximum(region.yh - self.h / 2, self.lo_y)
        self._cached = None  # (z, stencil) of the last rasterized point

    @property
    def size(self) -> int:
        return self.w.size

    def stencil(self, z: np.ndarray, check: bool = True):
        """Stencil at ``z``; the accepted line-search probe's is reused."""
        pl = self.state(z)
        if check:
            self.system.check_inside(pl)
        c = self._cached
        if c is not None and np.array_equal(c[0], z):
            return c[1]
        st = self.system.stencil(pl, check=False)
        self._cached = (z.copy(), st)
        return st

    def state(self, z: np.ndarray) -> PlacementState:
        k = self.size
        return PlacementState(z[:k], z[k:], self.m)

    def clamp(self, z: np.ndarray) -> np.ndarray:
        k = self.size
        return np.concatenate([np.clip(z[:k], self.lo_x, self.hi_x),
                               np.clip(z[k:], self.lo_y, self.hi_y)])

    def evaluate(self, z: np.ndarray, lam: float, gamma: float) -> Evaluation:
        pl = self.state(z)
        st = self.stencil(z)
        dens = self.system.build(pl, st)
        fld = poisson.solve(dens)
        psi_i, ex_i, ey_i = self.system.sample(fld, st)
        energy = self.system.energy(fld, st)
        wl = wa_wirelength(self.netlist, pl, gamma)
        wg = np.concatenate([wl.grad_x, wl.grad_y])
        dg = -np.concatenate([self.q * ex_i, self.q * ey_i])
        f = wl.total + 0.5 * lam * energy
        return Evaluation(f, wg + lam * dg, wl.total, energy, wg, dg, fld, dens, psi_i)

    def frozen_probe(self, z0: np.ndarray, ev: Evaluation, lam: float,
                     gamma: float) -> Callable[[np.ndarray], float]:
        """Line-search objective with the potential frozen at ``z0``.

        Wirelength is exact; the density term is the movable charges' energy
        in the frozen potential, which has the same gradient at ``z0``.
        """
        base = float(np.sum(self.q * ev.psi_nodes))
        const = ev.f - ev.wa

        def probe(z):
            pl = self.state(z)
            st = self.stencil(z, check=False)
            p = float(np.sum(st.gather(ev.field.psi)))
            wl = wa_wirelength(self.netlist, pl, gamma, gradient=False).total
            return wl + const + lam * (p - base)

        return probe


def lambda_init(ev: Evaluation) -> float:
    """Balance L1 norms of wirelength and density gradients."""
    d = float(np.sum(np.abs(ev.density_grad)))
    w = float(np.sum(np.abs(ev.wa_grad)))
    if d <= 0.0:
        return 1.0
    if w <= 0.0:
        return 1.0 / d
    return w / d


def cg_direction(grad, prev_grad=None, prev_dir=None, restart=False):
    """Polak-Ribiere-plus direction, falling back to steepest descent."""
    if prev_grad is None or prev_dir is None or restart:
        return -grad
    denom = float(prev_grad @ prev_grad)
    beta = max(0.0, float(grad @ (grad - prev_grad)) / denom) if denom > 0 else 0.0
    d = -grad + beta * prev_dir
    if float(grad @ d) >= 0.0:
        return -grad
    return d


def cg_step(z, grad, direction, alpha_max, alpha_min, f0, probe, clamp=None, c1=1e-4):
    """Backtracking line search along ``direction`` scaled to unit max-norm.

    Halves from ``alpha_max`` until the Armijo condition holds; below
    ``alpha_min`` the minimum step is taken. Returns (new z, accepted alpha).
    """
    if not alpha_max > 0 or not alpha_min > 0:
        raise ValueError("step bounds must be positive")
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient")
    norm = float(np.max(np.abs(direction))) if direction.size else 0.0
    if norm == 0.0:
        return z.copy(), alpha_min
    d = direction / norm
    slope = float(grad @ d)
    clamp = clamp or (lambda v: v)
    alpha = alpha_max
    while alpha >= alpha_min:
        trial = clamp(z + alpha * d)
        if probe(trial) <= f0 + c1 * alpha * slope:
            return trial, alpha
        alpha *= 0.5
    return clamp(z + alpha_min * d), alpha_min


def _write_trace(path, trace):
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(asdict(rec)) + "\n")


def global_place(netlist: Netlist, region: Region, placement: PlacementState,
                 fillers: Optional[Fillers] = None, config: Optional[PlaceConfig] = None,
                 grid: Optional[GridSpec] = None,
                 callback: Optional[Callable[[int, ScheduleState], None]] = None) -> GlobalResult:
    """Run penalized nonlinear CG until overflow drops to ``tau_stop``.

    ``placement`` covers movable cells followed by ``fillers``. The returned
    placement still contains the fillers. Trace record ``k`` describes the
    iterate the k-th step started from, plus the step length it accepted.
    """
    cfg = config or PlaceConfig()
    fillers = fillers if fillers is not None else Fillers.empty()
    if placement.num_fillers != fillers.count:
        raise ValueError("placement filler count does not match fillers")
    m = netlist.num_movable
    if grid is None:
        grid = GridSpec.for_region(region, cfg.grid or choose_grid_dim(max(m, 1)))
    system = DensitySystem(netlist, region, grid, fillers, cfg.target_density)
    obj = Objective(netlist, system, region)
    snap_at = set(cfg.snapshot_iters)

    z = obj.clamp(np.concatenate([placement.x, placement.y]))
    tau = system.overflow(obj.state(z)).tau
    w_prev = hpwl(netlist, obj.state(z)).total
    alpha0 = cfg.alpha0_bins * grid.w_b
    sched = ScheduleState(lam=1.0, alpha_max=alpha0, alpha_min=0.01 * alpha0,
                          gamma=smoothing_gamma(tau, grid.w_b), tau=tau, k=0,
                          alpha0=alpha0, w_b=grid.w_b, delta_w_ref=cfg.delta_w_ref,
                          mu_bounds=(cfg.mu_min, cfg.mu_max),
                          alpha_cap=cfg.alpha_cap_bins * grid.w_b)
    ev = obj.evaluate(z, 0.0, sched.gamma)
    sched = replace(sched, lam=lambda_init(ev))
    ev = obj.evaluate(z, sched.lam, sched.gamma)

    trace: List[TraceRecord] = []
    snapshots: List[Snapshot] = []
    best = (tau, z.copy())
    converged = False
    prev_grad = prev_dir = None
    k = 0
    for k in range(1, cfg.max_iters + 1):
        if k > 1:
            ev = obj.evaluate(z, sched.lam, sched.gamma)
        if k in snap_at:
            snapshots.append(Snapshot(k, ev.density.rho.copy(), ev.field.psi.copy(),
                                      np.hypot(ev.field.ex, ev.field.ey)))
        restart = (k - 1) % cfg.restart_every == 0
        d = cg_direction(ev.grad, prev_grad, prev_dir, restart)
        probe = obj.frozen_probe(z, ev, sched.lam, sched.gamma)
        z_new, alpha = cg_step(z, ev.grad, d, sched.alpha_max, sched.alpha_min, ev.f,
                               probe, obj.clamp, cfg.armijo_c1)
        trace.append(TraceRecord(k, w_prev, ev.wa, ev.energy, sched.tau, sched.lam,
                                 sched.gamma, alpha))
        prev_grad, prev_dir = ev.grad, d
        z = z_new

        st = obj.state(z)
        w_k = hpwl(netlist, st).total
        tau_k = system.overflow(st, obj.stencil(z)).tau
        sched = update_schedules(sched, w_k, w_prev, tau_k, alpha)
        w_prev = w_k
        if tau_k < best[0]:
            best = (tau_k, z.copy())
        if callback is not None:
            callback(k, sched)
        if k % 50 == 0:
            logger.info("iter %4d  hpwl %.6g  tau %.4f  lam %.4g  gamma %.4g",
                        k, w_k, tau_k, sched.lam, sched.gamma)
        if tau_k <= cfg.tau_stop:
            converged = True
            break

    if not converged:
        logger.warning("overflow %.4f above %.2f after %d iterations; returning best iterate",
                       best[0], cfg.tau_stop, k)
        z = best[1]
    if cfg.trace_path:
        _write_trace(cfg.trace_path, trace)
    final_tau = sched.tau if converged else best[0]
    return GlobalResult(obj.state(z), trace, converged, final_tau, k, sched, grid, snapshots)
