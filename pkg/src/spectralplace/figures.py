"""SVG figures: density/potential/field heatmaps and per-iteration curves."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Sequence

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

# stable SVG output (no timestamp, deterministic element ids)
plt.rcParams["svg.hashsalt"] = "spectralplace"
_META = {"Date": None, "Creator": None}


def _heatmap(data: np.ndarray, title: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    lo, hi = float(np.min(data)), float(np.max(data))
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        hi = lo  # flat map: one color
    # arrays are [ix, iy]; show x to the right and y up
    im = ax.imshow(data.T, origin="lower", cmap="viridis", vmin=lo, vmax=hi,
                   interpolation="nearest")
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def _lines(k, a, b, la, lb, title, path: Path, log_b=False) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(k, a, color="tab:blue", label=la)
    ax.set_xlabel("iteration")
    ax.set_ylabel(la)
    ax2 = ax.twinx()
    ax2.plot(k, b, color="tab:red", label=lb)
    ax2.set_ylabel(lb)
    if log_b and np.all(np.asarray(b) > 0):
        ax2.set_yscale("log")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def emit_figures(trace: Sequence, snapshots: Sequence, out_dir) -> List[Path]:
    """Write heatmaps per snapshot plus (tau, N) and (W, W_wa) curves.

    Returns the written paths. An empty trace writes nothing.
    """
    if not trace:
        logger.warning("empty trace: no figures written")
        return []
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: List[Path] = []
    for s in snapshots:
        for name, data, title in (("rho", s.rho, "density"), ("psi", s.psi, "potential"),
                                  ("field", s.field_mag, "|E|")):
            p = out / f"{name}_{s.k:04d}.svg"
            _heatmap(np.asarray(data), f"{title}, iteration {s.k}", p)
            paths.append(p)
    k = [t.k for t in trace]
    p = out / "overflow_energy.svg"
    _lines(k, [t.tau for t in trace], [t.energy for t in trace], "overflow tau",
           "potential energy N", "overflow and energy", p)
    paths.append(p)
    p = out / "wirelength.svg"
    _lines(k, [t.hpwl for t in trace], [t.wa for t in trace], "HPWL", "WA wirelength",
           "wirelength", p)
    paths.append(p)
    return paths
