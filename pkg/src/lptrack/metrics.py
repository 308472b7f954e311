"""Segmentation scoring: region overlap (J), boundary quality (F) and their
per-frame mean, plus centroid-agreement summaries between two trajectory
sets.

Conventions, all recorded in the report: a frame where mask and ground
truth are both empty scores J = 1 and F = 1 (when scored at all — object
evaluation excludes such frames instead); a mask empty on exactly one side
scores 0. Boundary pixels are mask pixels with at least one four-neighbor
outside the mask, with the image border counting as outside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_erosion, distance_transform_edt

from .errors import InputError
from .tracking import min_cost_assignment
from .trajgen import Trajectory

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class BoundaryMatch:
    tolerance: float
    precision: float
    recall: float


def _as_binary(mask, other) -> tuple[np.ndarray, np.ndarray]:
    m = np.asarray(mask).astype(bool)
    g = np.asarray(other).astype(bool)
    if m.shape != g.shape:
        raise InputError(f"mask shapes differ: {m.shape} vs {g.shape}")
    return m, g


def jaccard(mask, gt) -> float:
    """Region similarity |M & G| / |M | G|; both-empty counts as 1."""
    m, g = _as_binary(mask, gt)
    union = int(np.logical_or(m, g).sum())
    if union == 0:
        return 1.0
    return float(np.logical_and(m, g).sum() / union)


def boundary_pixels(mask) -> np.ndarray:
    """Mask pixels with a four-neighbor outside the mask (border = outside)."""
    m = np.asarray(mask).astype(bool)
    return m & ~binary_erosion(m, structure=FOUR_CONNECTED, border_value=0)


def boundary_f(mask, gt, tolerance: float) -> tuple[float, BoundaryMatch]:
    """Boundary F-measure under a pixel-distance tolerance.

    Precision is the fraction of mask boundary pixels within `tolerance`
    (Euclidean, pixel centers) of some ground-truth boundary pixel, recall
    the symmetric fraction; F is their harmonic mean. An empty boundary
    makes its own fraction vacuously 1, so both-empty gives F = 1 and
    exactly-one-empty gives F = 0.
    """
    m, g = _as_binary(mask, gt)
    mb = boundary_pixels(m)
    gb = boundary_pixels(g)
    if not mb.any() and not gb.any():
        return 1.0, BoundaryMatch(tolerance=tolerance, precision=1.0, recall=1.0)
    if not mb.any():
        return 0.0, BoundaryMatch(tolerance=tolerance, precision=1.0, recall=0.0)
    if not gb.any():
        return 0.0, BoundaryMatch(tolerance=tolerance, precision=0.0, recall=1.0)
    dist_to_g = distance_transform_edt(~gb)
    dist_to_m = distance_transform_edt(~mb)
    precision = float((dist_to_g[mb] <= tolerance).mean())
    recall = float((dist_to_m[gb] <= tolerance).mean())
    f = 0.0 if precision + recall == 0 else 2.0 * precision * recall / (precision + recall)
    return f, BoundaryMatch(tolerance=tolerance, precision=precision, recall=recall)


def jf_frame(mask, gt, tolerance: float) -> float:
    """Per-frame J&F: the arithmetic mean of J and F."""
    f, _ = boundary_f(mask, gt, tolerance)
    return 0.5 * (jaccard(mask, gt) + f)


def default_tolerance(shape: tuple[int, int]) -> int:
    """Boundary tolerance default: ceil(0.8% of the image diagonal) in px."""
    return int(math.ceil(0.008 * math.hypot(shape[0], shape[1])))


@dataclass
class MetricReport:
    """Per-frame, per-object and video-level J/F scores."""

    tolerance: float
    # (frame, object_key, J, F, J&F); object_key is the gt id, or
    # "pred_<id>" for predictions never matched to a ground-truth object
    per_frame: list[tuple[int, str, float, float, float]]
    per_object: dict[str, dict[str, float]]
    video_mean_jf: float
    mean_of_object_means: float
    absent_in_both: int
    absent_in_pred_only: int
    absent_in_gt_only: int
    id_map: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tolerance_px": self.tolerance,
            "conventions": {
                "both_empty_jaccard": 1.0,
                "both_empty_boundary_f": 1.0,
                "absent_in_both": "frame excluded from object mean",
                "absent_in_one": "frame scores 0",
            },
            "per_frame": [
                {"frame": f, "object": k, "J": j, "F": b, "JF": jf}
                for f, k, j, b, jf in self.per_frame
            ],
            "per_object": self.per_object,
            "video_mean_jf": self.video_mean_jf,
            "mean_of_object_means": self.mean_of_object_means,
            "excluded_frames_absent_in_both": self.absent_in_both,
            "frames_absent_in_pred_only": self.absent_in_pred_only,
            "frames_absent_in_gt_only": self.absent_in_gt_only,
            "object_correspondence": self.id_map,
        }


def _match_ids(pred_seq, gt_seq) -> dict[int, int]:
    """Greedy max-IoU correspondence on the first frame where both sides
    have foreground; ties break toward the lowest ids."""
    for pred, gt in zip(pred_seq, gt_seq):
        pred_ids = np.unique(pred)
        gt_ids = np.unique(gt)
        pred_ids = pred_ids[pred_ids > 0]
        gt_ids = gt_ids[gt_ids > 0]
        if pred_ids.size == 0 or gt_ids.size == 0:
            continue
        scored = []
        for g in gt_ids:
            gm = gt == g
            for p in pred_ids:
                iou = jaccard(pred == p, gm)
                if iou > 0:
                    scored.append((-iou, int(g), int(p)))
        scored.sort()
        mapping: dict[int, int] = {}
        used_pred: set[int] = set()
        for neg_iou, g, p in scored:
            if g not in mapping and p not in used_pred:
                mapping[g] = p
                used_pred.add(p)
        return mapping
    return {}


def jf_video(pred_seq, gt_seq, tolerance: float | None = None,
             id_map: dict[int, int] | None = None) -> MetricReport:
    """Score a predicted label-mask sequence against ground truth.

    Objects are gt ids plus any never-matched predicted ids (scored against
    emptiness, so spurious objects are penalized). Frames where an object
    is absent on both sides are excluded from that object's mean; absent on
    exactly one side scores 0. The video mean pools the per-frame J&F
    values of all objects; the per-object means are also averaged
    separately since either aggregate may be wanted.
    """
    pred_seq = [np.asarray(p) for p in pred_seq]
    gt_seq = [np.asarray(g) for g in gt_seq]
    if len(pred_seq) != len(gt_seq):
        raise InputError(f"frame counts differ: {len(pred_seq)} vs {len(gt_seq)}")
    for i, (p, g) in enumerate(zip(pred_seq, gt_seq)):
        if p.shape != g.shape:
            raise InputError(f"frame {i}: mask shapes differ: {p.shape} vs {g.shape}")
    if tolerance is None:
        tolerance = default_tolerance(gt_seq[0].shape) if gt_seq else 0

    if id_map is None:
        id_map = _match_ids(pred_seq, gt_seq)
    gt_ids = sorted({int(v) for g in gt_seq for v in np.unique(g) if v > 0})
    pred_ids = sorted({int(v) for p in pred_seq for v in np.unique(p) if v > 0})
    matched_pred = set(id_map.values())
    objects = [(str(g), g, id_map.get(g)) for g in gt_ids]
    objects += [(f"pred_{p}", None, p) for p in pred_ids if p not in matched_pred]

    per_frame = []
    per_object: dict[str, dict[str, float]] = {}
    absent_both = absent_pred = absent_gt = 0
    for key, gid, pid in objects:
        j_scores, f_scores, jf_scores = [], [], []
        for f, (pred, gt) in enumerate(zip(pred_seq, gt_seq)):
            pm = (pred == pid) if pid is not None else np.zeros_like(pred, dtype=bool)
            gm = (gt == gid) if gid is not None else np.zeros_like(gt, dtype=bool)
            in_pred = bool(pm.any())
            in_gt = bool(gm.any())
            if not in_pred and not in_gt:
                absent_both += 1
                continue
            if not in_pred:
                absent_pred += 1
            elif not in_gt:
                absent_gt += 1
            j = jaccard(pm, gm)
            f_score, _ = boundary_f(pm, gm, tolerance)
            jf = 0.5 * (j + f_score)
            per_frame.append((f, key, j, f_score, jf))
            j_scores.append(j)
            f_scores.append(f_score)
            jf_scores.append(jf)
        if jf_scores:
            per_object[key] = {
                "mean_jf": float(np.mean(jf_scores)),
                "mean_j": float(np.mean(j_scores)),
                "mean_f": float(np.mean(f_scores)),
                "frames_scored": len(jf_scores),
            }
    all_jf = [r[4] for r in per_frame]
    return MetricReport(
        tolerance=tolerance,
        per_frame=per_frame,
        per_object=per_object,
        video_mean_jf=float(np.mean(all_jf)) if all_jf else 1.0,
        mean_of_object_means=float(np.mean([o["mean_jf"] for o in per_object.values()]))
        if per_object else 1.0,
        absent_in_both=absent_both,
        absent_in_pred_only=absent_pred,
        absent_in_gt_only=absent_gt,
        id_map={str(g): str(p) for g, p in id_map.items()},
    )


@dataclass
class CentroidAgreement:
    """Box-plot style summary of per-frame centroid distances (nm)."""

    distances: list[tuple[int, int, int, float]]   # frame, pred id, ref id, nm
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: list[float]

    def values(self) -> np.ndarray:
        return np.array([d[3] for d in self.distances])


def summarize_distances(values) -> dict[str, object]:
    values = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    return {
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_low": float(lo),
        "whisker_high": float(hi),
        "outliers": [float(v) for v in values[(values < lo) | (values > hi)]],
    }


def centroid_agreement(pred_trajs: list[Trajectory], ref_trajs: list[Trajectory],
                       pixel_size: float) -> CentroidAgreement:
    """Per-frame centroid distances between two trajectory sets.

    Identities are matched once, by minimum-cost assignment of centroid
    distances on the first frame shared by both sets, then distances are
    collected over every frame a matched pair shares. Input coordinates are
    pixels; distances come out in nm.
    """
    def by_frame(trajs):
        table: dict[int, dict[int, tuple[float, float]]] = {}
        for t in trajs:
            for f, x, y in zip(t.frames, t.x, t.y):
                table.setdefault(int(f), {})[t.id] = (float(x), float(y))
        return table

    pred_tab = by_frame(pred_trajs)
    ref_tab = by_frame(ref_trajs)
    shared = sorted(set(pred_tab) & set(ref_tab))
    if not shared:
        raise InputError("trajectory sets share no frames")

    f0 = shared[0]
    pred_ids = sorted(pred_tab[f0])
    ref_ids = sorted(ref_tab[f0])
    cost = np.array([[math.hypot(pred_tab[f0][p][0] - ref_tab[f0][r][0],
                                 pred_tab[f0][p][1] - ref_tab[f0][r][1])
                      for r in ref_ids] for p in pred_ids])
    pairs = [(pred_ids[i], ref_ids[j]) for i, j in min_cost_assignment(cost)]

    distances = []
    for f in shared:
        for pid, rid in pairs:
            if pid in pred_tab[f] and rid in ref_tab[f]:
                px, py = pred_tab[f][pid]
                rx, ry = ref_tab[f][rid]
                d_nm = math.hypot(px - rx, py - ry) * pixel_size
                distances.append((f, pid, rid, d_nm))
    if not distances:
        raise InputError("matched trajectories share no frames")
    summary = summarize_distances([d[3] for d in distances])
    return CentroidAgreement(distances=distances, **summary)
