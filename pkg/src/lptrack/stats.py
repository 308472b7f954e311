"""Trajectory statistics: time-averaged MSD, velocity autocorrelation and
displacement distributions, plus diffusion-parameter fits.

All estimators are gap-aware: a lag-k average runs over the sample pairs
whose frame indices differ by exactly k, so missed frames shrink the pair
sets instead of biasing the averages. Dot-product sums are evaluated with
FFT correlations over the dense frame grid, which matches the naive
double-loop estimator to floating precision at O(n log n) cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FitError, InsufficientDataError, ParameterError
from .trajgen import Trajectory

AXIS_CHOICES = ("x", "y", "radial", "pooled")


@dataclass
class MsdCurve:
    """Mean-squared displacement vs lag time; n_pairs counts the averaged pairs."""

    taus: np.ndarray        # s, strictly increasing
    msd: np.ndarray         # squared length units (nm^2 for nm input)
    n_pairs: np.ndarray     # pairs contributing at each lag

    def __len__(self) -> int:
        return len(self.taus)


@dataclass
class VacfCurve:
    """Normalized velocity autocorrelation; c[0] == 1 whenever defined."""

    taus: np.ndarray
    c: np.ndarray

    def __len__(self) -> int:
        return len(self.taus)


@dataclass
class DisplacementHist:
    """Normalized displacement histogram at a fixed frame lag."""

    tau: float
    axis: str
    bin_edges: np.ndarray
    density: np.ndarray
    n_samples: int


def _dense_grid(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Positions on the dense frame grid plus an occupancy mask.

    Coordinates are centered to keep the FFT correlation sums well
    conditioned; differences are unaffected.
    """
    frames = np.asarray(traj.frames, dtype=np.int64)
    span = int(frames[-1] - frames[0]) + 1
    mask = np.zeros(span)
    xs = np.zeros(span)
    ys = np.zeros(span)
    idx = frames - frames[0]
    mask[idx] = 1.0
    xs[idx] = traj.x - np.mean(traj.x)
    ys[idx] = traj.y - np.mean(traj.y)
    return xs, ys, mask


def _corr(a: np.ndarray, b: np.ndarray, max_lag: int) -> np.ndarray:
    """sum_t a[t] * b[t+k] for k = 0..max_lag via rfft."""
    n = len(a)
    size = 1 << int(math.ceil(math.log2(2 * n)))
    fa = np.fft.rfft(a, size)
    fb = np.fft.rfft(b, size)
    full = np.fft.irfft(np.conj(fa) * fb, size)
    return full[: max_lag + 1]


def msd(traj: Trajectory, max_lag_fraction: float = 0.25) -> MsdCurve:
    """Time-averaged MSD of a single trajectory.

    MSD(k*dt) averages |r(t+k) - r(t)|^2 over all sample pairs exactly k
    frames apart; lags with no pairs are omitted. The largest lag is
    ceil(max_lag_fraction * span) where span is the dense frame count
    (equal to the sample count when there are no gaps).
    """
    if len(traj) < 2:
        raise InsufficientDataError("msd needs at least 2 samples")
    if not (0.0 < max_lag_fraction <= 1.0):
        raise ParameterError(f"max_lag_fraction must lie in (0, 1], got {max_lag_fraction}")
    xs, ys, mask = _dense_grid(traj)
    # the frame span equals the sample count for gap-free trajectories
    max_lag = min(int(math.ceil(max_lag_fraction * len(mask))), len(mask) - 1)

    counts = _corr(mask, mask, max_lag)
    x2 = xs * xs
    y2 = ys * ys
    sq_sum = (
        _corr(x2 + y2, mask, max_lag)      # |r(t)|^2 where both present
        + _corr(mask, x2 + y2, max_lag)    # |r(t+k)|^2 where both present
        - 2.0 * (_corr(xs, xs, max_lag) + _corr(ys, ys, max_lag))
    )
    lags = np.arange(1, max_lag + 1)
    n_pairs = np.rint(counts[1:]).astype(np.int64)
    keep = n_pairs > 0
    lags, n_pairs = lags[keep], n_pairs[keep]
    values = np.maximum(sq_sum[1:][keep], 0.0) / n_pairs
    return MsdCurve(taus=lags * traj.frame_interval, msd=values, n_pairs=n_pairs)


def ensemble_msd(trajs: list[Trajectory], max_lag_fraction: float = 0.25) -> MsdCurve:
    """Pool the pair sums of several trajectories into one MSD curve.

    Equivalent to averaging the squared displacements of every pair from
    every trajectory, so long trajectories weigh proportionally more.
    """
    if not trajs:
        raise InsufficientDataError("ensemble_msd needs at least one trajectory")
    dt = trajs[0].frame_interval
    if any(t.frame_interval != dt for t in trajs):
        raise ParameterError("trajectories must share frame_interval")
    acc_sum: dict[int, float] = {}
    acc_n: dict[int, int] = {}
    for traj in trajs:
        curve = msd(traj, max_lag_fraction)
        for tau, value, n in zip(curve.taus, curve.msd, curve.n_pairs):
            k = int(round(tau / dt))
            acc_sum[k] = acc_sum.get(k, 0.0) + value * n
            acc_n[k] = acc_n.get(k, 0) + int(n)
    lags = np.array(sorted(acc_sum), dtype=np.int64)
    n_pairs = np.array([acc_n[k] for k in lags], dtype=np.int64)
    values = np.array([acc_sum[k] / acc_n[k] for k in lags])
    return MsdCurve(taus=lags * dt, msd=values, n_pairs=n_pairs)


def _velocity_grid(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Velocities on the dense grid; defined only across adjacent present frames."""
    xs, ys, mask = _dense_grid(traj)
    ok = (mask[:-1] > 0) & (mask[1:] > 0)
    vx = np.where(ok, (xs[1:] - xs[:-1]) / traj.frame_interval, 0.0)
    vy = np.where(ok, (ys[1:] - ys[:-1]) / traj.frame_interval, 0.0)
    return vx, vy, ok.astype(float)


def vacf(traj: Trajectory, max_lag_fraction: float = 0.25) -> VacfCurve:
    """Normalized velocity autocorrelation c(tau) = <v(t).v(t+tau)> / <v.v>.

    Velocities exist only across adjacent present frames; gaps remove pairs
    rather than being interpolated. c(0) is 1 by construction.
    """
    if len(traj) < 2:
        raise InsufficientDataError("vacf needs at least 2 samples")
    vx, vy, vmask = _velocity_grid(traj)
    n_v = int(vmask.sum())
    if n_v == 0:
        raise InsufficientDataError("no adjacent-frame velocity pairs")
    max_lag = min(int(math.ceil(max_lag_fraction * (len(vmask) + 1))), len(vmask) - 1)
    max_lag = max(max_lag, 0)

    counts = _corr(vmask, vmask, max_lag)
    dots = _corr(vx, vx, max_lag) + _corr(vy, vy, max_lag)
    denom = dots[0] / counts[0]
    if denom == 0.0:
        # all velocities exactly zero: correlation is undefined
        raise InsufficientDataError("zero mean-squared velocity")
    lags = np.arange(max_lag + 1)
    keep = np.rint(counts).astype(np.int64) > 0
    lags = lags[keep]
    c = (dots[keep] / counts[keep]) / denom
    c[0] = 1.0
    return VacfCurve(taus=lags * traj.frame_interval, c=c)


def displacements(traj: Trajectory, lag_frames: int) -> tuple[np.ndarray, np.ndarray]:
    """(dx, dy) over all sample pairs exactly lag_frames apart."""
    if lag_frames < 1:
        raise ParameterError(f"lag_frames must be >= 1, got {lag_frames}")
    frames = np.asarray(traj.frames, dtype=np.int64)
    index = {int(f): i for i, f in enumerate(frames)}
    src, dst = [], []
    for i, f in enumerate(frames):
        j = index.get(int(f) + lag_frames)
        if j is not None:
            src.append(i)
            dst.append(j)
    if not src:
        raise InsufficientDataError(f"no sample pairs at lag {lag_frames}")
    src = np.asarray(src)
    dst = np.asarray(dst)
    return traj.x[dst] - traj.x[src], traj.y[dst] - traj.y[src]


def _select_axis(dx: np.ndarray, dy: np.ndarray, axis: str) -> np.ndarray:
    if axis == "x":
        return dx
    if axis == "y":
        return dy
    if axis == "radial":
        return np.hypot(dx, dy)
    return np.concatenate([dx, dy])


def _hist(data: np.ndarray, n_bins: int, tau: float, axis: str) -> DisplacementHist:
    # bin range: mean +- 5 sigma, clipped to the data extent
    mu, sd = float(np.mean(data)), float(np.std(data))
    if sd == 0.0:
        lo, hi = mu - 0.5, mu + 0.5
    else:
        lo = max(mu - 5.0 * sd, float(np.min(data)))
        hi = min(mu + 5.0 * sd, float(np.max(data)))
    density, edges = np.histogram(data, bins=n_bins, range=(lo, hi), density=True)
    inside = int(((data >= lo) & (data <= hi)).sum())
    return DisplacementHist(tau=tau, axis=axis, bin_edges=edges,
                            density=density, n_samples=inside)


def displacement_pdf(traj: Trajectory, lag_frames: int = 1, n_bins: int = 50,
                     axis: str = "pooled") -> DisplacementHist:
    """Normalized histogram of displacements at a fixed frame lag.

    axis selects dx ("x"), dy ("y"), the radial magnitude ("radial") or both
    axes pooled into one sample set ("pooled").
    """
    if axis not in AXIS_CHOICES:
        raise ParameterError(f"axis must be one of {AXIS_CHOICES}, got {axis!r}")
    if n_bins < 1:
        raise ParameterError(f"n_bins must be >= 1, got {n_bins}")
    dx, dy = displacements(traj, lag_frames)
    return _hist(_select_axis(dx, dy, axis), n_bins,
                 lag_frames * traj.frame_interval, axis)


def pooled_displacement_pdf(trajs: list[Trajectory], lag_frames: int = 1,
                            n_bins: int = 50, axis: str = "pooled") -> DisplacementHist:
    """Displacement histogram over the pooled pairs of several trajectories."""
    if axis not in AXIS_CHOICES:
        raise ParameterError(f"axis must be one of {AXIS_CHOICES}, got {axis!r}")
    xs, ys = [], []
    dt = None
    for traj in trajs:
        try:
            dx, dy = displacements(traj, lag_frames)
        except InsufficientDataError:
            continue
        xs.append(dx)
        ys.append(dy)
        dt = traj.frame_interval
    if not xs:
        raise InsufficientDataError(f"no sample pairs at lag {lag_frames} in any trajectory")
    data = _select_axis(np.concatenate(xs), np.concatenate(ys), axis)
    return _hist(data, n_bins, lag_frames * dt, axis)


class GaussianReference:
    """Zero-mean per-axis displacement density for pure diffusion."""

    def __init__(self, diffusion_coefficient: float, tau: float):
        if not (diffusion_coefficient > 0):
            raise ParameterError(f"diffusion_coefficient must be > 0, got {diffusion_coefficient}")
        if not (tau > 0):
            raise ParameterError(f"tau must be > 0, got {tau}")
        self.diffusion_coefficient = diffusion_coefficient
        self.tau = tau
        self.variance = 2.0 * diffusion_coefficient * tau

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.exp(-x * x / (2.0 * self.variance)) / math.sqrt(2.0 * math.pi * self.variance)

    __call__ = pdf


def gaussian_reference(diffusion_coefficient: float, tau: float) -> GaussianReference:
    """Analytic displacement PDF (variance 2*D*tau per axis) for overlays."""
    return GaussianReference(diffusion_coefficient, tau)


def fit_diffusion(curve: MsdCurve, fit_lags: int = 10) -> dict[str, float]:
    """Fit D and the anomalous exponent alpha to the short-lag MSD.

    D comes from an unweighted least-squares fit of MSD = 4*D*tau through
    the origin over the first fit_lags points; alpha is the slope of
    log MSD vs log tau over the same points (nonpositive MSD values are
    dropped from the log fit).
    """
    if len(curve) < fit_lags:
        raise InsufficientDataError(
            f"curve has {len(curve)} points, fit needs {fit_lags}")
    taus = curve.taus[:fit_lags]
    values = curve.msd[:fit_lags]
    d_hat = float(np.dot(values, taus) / (4.0 * np.dot(taus, taus)))

    ok = values > 0
    if int(ok.sum()) < 2:
        raise FitError("fewer than 2 positive MSD values in the log-log fit range")
    slope, _ = np.polyfit(np.log(taus[ok]), np.log(values[ok]), 1)
    return {"D": d_hat, "alpha": float(slope)}
