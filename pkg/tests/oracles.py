"""Independent brute-force reference implementations used by the tests.

These deliberately avoid the library's own code paths (FFT correlation,
distance transforms, scipy assignment) so they can certify them.
"""

import itertools
import math

import numpy as np


def msd_by_pairs(frames, x, y, max_lag):
    """Double-loop gap-aware MSD: {lag: (mean squared displacement, n_pairs)}."""
    acc = {}
    for i in range(len(frames)):
        for j in range(i + 1, len(frames)):
            k = int(frames[j] - frames[i])
            if k <= max_lag:
                d2 = (x[j] - x[i]) ** 2 + (y[j] - y[i]) ** 2
                acc.setdefault(k, []).append(d2)
    return {k: (float(np.mean(v)), len(v)) for k, v in acc.items()}


def vacf_by_pairs(frames, x, y, dt, max_lag):
    """Double-loop VACF over velocities defined across adjacent frames."""
    vel = {}
    index = {int(f): i for i, f in enumerate(frames)}
    for f, i in index.items():
        j = index.get(f + 1)
        if j is not None:
            vel[f] = ((x[j] - x[i]) / dt, (y[j] - y[i]) / dt)
    num = {}
    for f, v in vel.items():
        for k in range(0, max_lag + 1):
            w = vel.get(f + k)
            if w is not None:
                num.setdefault(k, []).append(v[0] * w[0] + v[1] * w[1])
    denom = np.mean(num[0])
    return {k: float(np.mean(v) / denom) for k, v in num.items()}


def region_moments(mask):
    """Per-pixel accumulation of area, centroid and orientation of a binary blob."""
    n = 0
    sx = sy = 0.0
    for (r, c), v in np.ndenumerate(mask):
        if v:
            n += 1
            sx += c
            sy += r
    cx, cy = sx / n, sy / n
    mu20 = mu02 = mu11 = 0.0
    for (r, c), v in np.ndenumerate(mask):
        if v:
            mu20 += (c - cx) ** 2
            mu02 += (r - cy) ** 2
            mu11 += (c - cx) * (r - cy)
    theta = 0.5 * math.atan2(2.0 * mu11, mu20 - mu02)
    if theta >= math.pi / 2:
        theta -= math.pi
    return n, cx, cy, theta


def assignment_brute_force(cost):
    """Exhaustive minimum-cost matching of size min(rows, cols) avoiding inf.

    Returns the best achievable (cardinality, total cost): full matchings are
    searched first; if none is feasible, the search drops to smaller sizes.
    """
    cost = np.asarray(cost, dtype=float)
    n_rows, n_cols = cost.shape
    size = min(n_rows, n_cols)
    for want in range(size, 0, -1):
        best = None
        for rows in itertools.combinations(range(n_rows), want):
            for cols in itertools.permutations(range(n_cols), want):
                total = 0.0
                ok = True
                for r, c in zip(rows, cols):
                    if not np.isfinite(cost[r, c]):
                        ok = False
                        break
                    total += cost[r, c]
                if ok and (best is None or total < best):
                    best = total
        if best is not None:
            return want, best
    return 0, 0.0


def boundary_pixels_loops(mask):
    """Four-neighbor boundary with the image border counting as outside."""
    h, w = mask.shape
    out = np.zeros_like(mask, dtype=bool)
    for r in range(h):
        for c in range(w):
            if not mask[r, c]:
                continue
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if not (0 <= rr < h and 0 <= cc < w) or not mask[rr, cc]:
                    out[r, c] = True
                    break
    return out


def boundary_scores_all_pairs(mask, gt, tolerance):
    """Contour precision/recall from all-pairs pixel-center distances."""
    mb = np.argwhere(boundary_pixels_loops(mask.astype(bool)))
    gb = np.argwhere(boundary_pixels_loops(gt.astype(bool)))
    if len(mb) == 0 and len(gb) == 0:
        return 1.0, 1.0
    if len(mb) == 0:
        return 1.0, 0.0
    if len(gb) == 0:
        return 0.0, 1.0

    def frac_within(src, dst):
        hits = 0
        for p in src:
            best = min(math.hypot(p[0] - q[0], p[1] - q[1]) for q in dst)
            if best <= tolerance:
                hits += 1
        return hits / len(src)

    return frac_within(mb, gb), frac_within(gb, mb)


def boundary_pixels_shifts(mask):
    """Four-neighbor boundary via padded shifts (no scipy morphology)."""
    m = np.asarray(mask, dtype=bool)
    padded = np.pad(m, 1, constant_values=False)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1] &
                padded[1:-1, :-2] & padded[1:-1, 2:])
    return m & ~interior


def boundary_scores_all_pairs_fast(mask, gt, tolerance):
    """Vectorized all-pairs contour precision/recall (independent of any
    distance transform): explicit min over every boundary-pixel pair."""
    mb = np.argwhere(boundary_pixels_shifts(mask))
    gb = np.argwhere(boundary_pixels_shifts(gt))
    if len(mb) == 0 and len(gb) == 0:
        return 1.0, 1.0
    if len(mb) == 0:
        return 1.0, 0.0
    if len(gb) == 0:
        return 0.0, 1.0
    d2 = ((mb[:, None, :] - gb[None, :, :]).astype(np.float64) ** 2).sum(axis=2)
    dist = np.sqrt(d2)
    precision = float((dist.min(axis=1) <= tolerance).sum() / len(mb))
    recall = float((dist.min(axis=0) <= tolerance).sum() / len(gb))
    return precision, recall


def disc_mask_by_pixel_centers(cx, cy, radius, pixel_size, image_size):
    """Brute-force silhouette: pixel centers (j+0.5, i+0.5)*s inside the disc."""
    w, h = image_size
    out = np.zeros((h, w), dtype=bool)
    for i in range(h):
        for j in range(w):
            x = (j + 0.5) * pixel_size
            y = (i + 0.5) * pixel_size
            out[i, j] = (x - cx) ** 2 + (y - cy) ** 2 <= radius ** 2
    return out


def ellipse_mask_by_pixel_centers(cx, cy, a, b, theta, pixel_size, image_size):
    w, h = image_size
    out = np.zeros((h, w), dtype=bool)
    ca, sa = math.cos(theta), math.sin(theta)
    for i in range(h):
        for j in range(w):
            dx = (j + 0.5) * pixel_size - cx
            dy = (i + 0.5) * pixel_size - cy
            u = dx * ca + dy * sa
            v = -dx * sa + dy * ca
            out[i, j] = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    return out


def jaccard_by_counting(mask, gt):
    inter = union = 0
    for (r, c), v in np.ndenumerate(mask):
        a = bool(v)
        b = bool(gt[r, c])
        inter += a and b
        union += a or b
    return 1.0 if union == 0 else inter / union
