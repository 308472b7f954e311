"""Self-contained SVG plots of trajectory statistics (no display server)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "lptrack"

import io
import os
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

from .stats import DisplacementHist, GaussianReference, MsdCurve, VacfCurve


def _save(fig, path) -> None:
    # render to memory, then atomic temp + rename like every other writer
    buf = io.BytesIO()
    fig.savefig(buf, format="svg")
    plt.close(fig)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    os.replace(tmp, path)


def plot_msd(curves: dict[str, MsdCurve], path, unit: str = "nm") -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, curve in curves.items():
        ax.loglog(curve.taus, curve.msd, marker="o", markersize=2.5,
                  linewidth=1.0, label=label)
    ax.set_xlabel("lag time (s)")
    ax.set_ylabel(f"MSD ({unit}$^2$)")
    if len(curves) > 1:
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_vacf(curves: dict[str, VacfCurve], path) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, curve in curves.items():
        ax.plot(curve.taus, curve.c, marker="o", markersize=2.5,
                linewidth=1.0, label=label)
    ax.axhline(0.0, color="gray", linewidth=0.8)
    ax.set_xlabel("lag time (s)")
    ax.set_ylabel("velocity autocorrelation")
    if len(curves) > 1:
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_displacement_hist(hist: DisplacementHist, path, unit: str = "nm",
                           reference: GaussianReference | None = None) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    centers = 0.5 * (hist.bin_edges[:-1] + hist.bin_edges[1:])
    widths = np.diff(hist.bin_edges)
    ax.bar(centers, hist.density, width=widths, alpha=0.6, label="measured")
    if reference is not None:
        grid = np.linspace(hist.bin_edges[0], hist.bin_edges[-1], 400)
        ax.plot(grid, reference.pdf(grid), "k-", linewidth=1.2, label="Gaussian")
        ax.legend(fontsize=8)
    ax.set_xlabel(f"displacement ({unit}), lag {hist.tau:g} s, axis {hist.axis}")
    ax.set_ylabel(f"probability density (1/{unit})")
    fig.tight_layout()
    _save(fig, path)


def plot_trajectories(trajs, path, unit: str = "nm") -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    for traj in trajs:
        points = ax.scatter(traj.x, traj.y, c=traj.frames * traj.frame_interval,
                            s=4, cmap="viridis")
        ax.plot(traj.x, traj.y, linewidth=0.5, alpha=0.4, color="gray")
    if trajs:
        fig.colorbar(points, ax=ax, label="time (s)")
    ax.set_xlabel(f"x ({unit})")
    ax.set_ylabel(f"y ({unit})")
    ax.set_aspect("equal")
    ax.invert_yaxis()  # image convention: y grows downward
    fig.tight_layout()
    _save(fig, path)
