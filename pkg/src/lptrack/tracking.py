"""Mask-to-trajectory conversion: detection extraction and track linking.

Detections carry sub-pixel centroids, an orientation from second central
moments and the pixel area. Linking is a gated global min-cost assignment
between active tracks and the detections of each frame; a track survives up
to max_missed unmatched frames at its last known position (diffusive motion
has no persistent velocity worth extrapolating).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import label as cc_label
from scipy.optimize import linear_sum_assignment

from .errors import ParameterError
from .trajgen import Trajectory

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass
class Detection:
    """One segmented particle in one frame (pixel units, x = column, y = row)."""

    frame: int
    source_label: int
    x: float
    y: float
    theta: float
    area: int


@dataclass
class LinkConfig:
    gate: float = 50.0        # px; max matching distance
    max_missed: int = 5       # frames a track survives unmatched
    cost: str = "euclidean"

    def validate(self) -> None:
        if not (self.gate > 0):
            raise ParameterError(f"gate must be > 0, got {self.gate}")
        if self.max_missed < 0:
            raise ParameterError(f"max_missed must be >= 0, got {self.max_missed}")
        if self.cost != "euclidean":
            raise ParameterError(f"unsupported cost {self.cost!r}")


def _orientation(mu11: float, mu20: float, mu02: float) -> float:
    theta = 0.5 * math.atan2(2.0 * mu11, mu20 - mu02)
    if theta >= math.pi / 2:    # atan2 yields (-pi/2, pi/2]; fold the top edge
        theta -= math.pi
    return theta


def extract_detections(mask: np.ndarray, frame: int = 0, min_area: int = 4) -> list[Detection]:
    """Measure every labeled region of one mask frame.

    A mask whose values are only {0, 1} is treated as binary and split into
    8-connected components first; otherwise each distinct label is one
    particle. Regions smaller than min_area pixels are discarded (noise
    specks); pass min_area=1 to keep everything.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ParameterError(f"mask must be 2-D, got shape {mask.shape}")
    labels = np.unique(mask)
    labels = labels[labels > 0]
    if labels.size == 0:
        return []
    if labels.size == 1:
        # a single nonzero value carries no identity: treat as binary
        mask, n_found = cc_label(mask > 0, structure=EIGHT_CONNECTED)
        labels = np.arange(1, n_found + 1)

    detections = []
    for lab in labels:
        ys, xs = np.nonzero(mask == lab)
        area = xs.size
        if area < min_area:
            continue
        cx = xs.mean()
        cy = ys.mean()
        dx = xs - cx
        dy = ys - cy
        theta = _orientation(float(np.dot(dx, dy)), float(np.dot(dx, dx)), float(np.dot(dy, dy)))
        detections.append(Detection(frame=frame, source_label=int(lab),
                                    x=float(cx), y=float(cy), theta=theta, area=int(area)))
    return detections


def min_cost_assignment(cost) -> list[tuple[int, int]]:
    """Minimum-total-cost one-to-one matching of rows to columns.

    Entries must be finite or +inf (forbidden pair). When a full matching
    of min(rows, cols) size is infeasible, the maximal feasible matching
    with least cost is returned instead. Cost ties are broken
    deterministically: equal-cost column exchanges are resolved so earlier
    rows take smaller column indices.
    """
    cost = np.atleast_2d(np.asarray(cost, dtype=float))
    if cost.size == 0:
        return []
    if np.isnan(cost).any() or np.isneginf(cost).any():
        raise ParameterError("cost entries must be finite or +inf")
    feasible = np.isfinite(cost)
    if not feasible.any():
        return []
    # one forbidden edge must cost more than any full assignment of real edges
    penalty = np.abs(cost[feasible]).sum() + 1.0
    if not np.isfinite(penalty):
        raise ParameterError("finite costs overflow; rescale the cost matrix")
    rows, cols = linear_sum_assignment(np.where(feasible, cost, penalty))
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols) if feasible[r, c]]
    pairs.sort()

    changed = True
    while changed:
        changed = False
        for i in range(len(pairs)):
            r1, c1 = pairs[i]
            for j in range(i + 1, len(pairs)):
                r2, c2 = pairs[j]
                if c2 < c1 and feasible[r1, c2] and feasible[r2, c1] and \
                        cost[r1, c2] + cost[r2, c1] == cost[r1, c1] + cost[r2, c2]:
                    pairs[i] = (r1, c2)
                    pairs[j] = (r2, c1)
                    r1, c1 = pairs[i]
                    changed = True
    return pairs


class _Track:
    __slots__ = ("id", "last_x", "last_y", "misses", "frames", "xs", "ys", "thetas", "areas")

    def __init__(self, tid: int, det: Detection):
        self.id = tid
        self.frames = [det.frame]
        self.xs = [det.x]
        self.ys = [det.y]
        self.thetas = [det.theta]
        self.areas = [det.area]
        self.last_x = det.x
        self.last_y = det.y
        self.misses = 0

    def add(self, det: Detection) -> None:
        self.frames.append(det.frame)
        self.xs.append(det.x)
        self.ys.append(det.y)
        self.thetas.append(det.theta)
        self.areas.append(det.area)
        self.last_x = det.x
        self.last_y = det.y
        self.misses = 0


def link(detections_by_frame: list[list[Detection]], cfg: LinkConfig,
         frame_interval: float = 1.0, pixel_size: float | None = None) -> list[Trajectory]:
    """Link per-frame detections into identity-stable trajectories.

    Parameters
    ----------
    detections_by_frame : list of detection lists, one per video frame, in
        frame order (empty lists for frames without detections).
    cfg : LinkConfig with the gating distance and track memory.
    frame_interval : seconds per frame, copied onto the trajectories.
    pixel_size : nm/px; recorded in trajectory metadata so writers can emit
        physical units alongside pixels.

    Coordinates stay in pixels. Track ids are assigned in creation order
    starting at 1.
    """
    cfg.validate()
    active: list[_Track] = []
    done: list[_Track] = []
    next_id = 1
    for frame_idx, dets in enumerate(detections_by_frame):
        pairs = []
        if active and dets:
            tx = np.array([t.last_x for t in active])
            ty = np.array([t.last_y for t in active])
            dx = np.array([d.x for d in dets])
            dy = np.array([d.y for d in dets])
            dist = np.hypot(tx[:, None] - dx[None, :], ty[:, None] - dy[None, :])
            dist[dist > cfg.gate] = np.inf
            pairs = min_cost_assignment(dist)
        matched_tracks = {r for r, _ in pairs}
        matched_dets = {c for _, c in pairs}
        for r, c in pairs:
            active[r].add(dets[c])
        survivors = []
        for i, track in enumerate(active):
            if i in matched_tracks:
                survivors.append(track)
            else:
                track.misses += 1
                (survivors if track.misses <= cfg.max_missed else done).append(track)
        active = survivors
        for c, det in enumerate(dets):
            if c not in matched_dets:
                active.append(_Track(next_id, det))
                next_id += 1
    done.extend(active)
    done.sort(key=lambda t: t.id)

    meta = {"units": "px"}
    if pixel_size is not None:
        meta["pixel_size_nm"] = pixel_size
    return [
        Trajectory(
            id=t.id,
            frames=np.asarray(t.frames, dtype=np.int64),
            x=np.asarray(t.xs),
            y=np.asarray(t.ys),
            frame_interval=frame_interval,
            theta=np.asarray(t.thetas),
            area=np.asarray(t.areas, dtype=np.int64),
            meta=dict(meta),
        )
        for t in done
    ]


def px_to_nm(traj: Trajectory, pixel_size: float) -> Trajectory:
    """Convert a pixel-unit trajectory to nm (pixel center (j+0.5)*s)."""
    from dataclasses import replace

    return replace(traj, x=(traj.x + 0.5) * pixel_size, y=(traj.y + 0.5) * pixel_size,
                   meta={**traj.meta, "units": "nm"})


def identity_switch_count(pred: list[Trajectory], gt: list[Trajectory],
                          match_radius: float) -> int:
    """Count changes of ground-truth identity along predicted trajectories.

    Per frame each predicted point maps to the nearest ground-truth id
    within match_radius (ties to the lowest id); frames without a match are
    excluded. A switch is one change of mapped id between consecutive
    mapped frames of one predicted trajectory. Units of pred, gt and
    match_radius must agree.
    """
    gt_by_frame: dict[int, list[tuple[int, float, float]]] = {}
    for traj in gt:
        for f, x, y in zip(traj.frames, traj.x, traj.y):
            gt_by_frame.setdefault(int(f), []).append((traj.id, float(x), float(y)))

    switches = 0
    for traj in pred:
        prev = None
        for f, x, y in zip(traj.frames, traj.x, traj.y):
            best = None
            for gid, gx, gy in gt_by_frame.get(int(f), ()):
                d = math.hypot(gx - x, gy - y)
                if d <= match_radius and (best is None or (d, gid) < best):
                    best = (d, gid)
            if best is None:
                continue
            if prev is not None and best[1] != prev:
                switches += 1
            prev = best[1]
    return switches
