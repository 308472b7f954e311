"""Stochastic trajectory generators for simulated nanoparticle motion.

Two generators are provided: plain Brownian motion and fractional Brownian
motion (via fractional Gaussian noise increments). Both are pure functions
of (params, seed), built on numpy's counter-based Philox bit generator so
that datasets are bit-reproducible and per-stream keys can be derived
without statistical coupling between streams.

Key schema used throughout the package: Philox key = [seed, (tag << 32) | index],
with tag 1 reserved for trajectory streams, 2 for per-frame rendering
streams and 3 for scene-level draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import toeplitz

from .errors import ParameterError

BOUNDARY_MODES = ("reflect", "periodic", "open")

TAG_TRAJECTORY = 1
TAG_FRAME = 2
TAG_SCENE = 3

_MASK64 = (1 << 64) - 1


def substream(seed: int, tag: int, index: int = 0) -> np.random.Generator:
    """Independent generator keyed by (seed, tag, index).

    Philox streams with distinct keys are statistically independent, so the
    same master seed can drive many particles/frames without overlap.
    """
    key = np.array([seed & _MASK64, ((tag & 0xFFFFFFFF) << 32) | (index & 0xFFFFFFFF)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class DiffusionParams:
    """Parameters of a 2-D diffusion process inside a rectangular field of view.

    diffusion_coefficient is in nm^2/s, frame_interval in s, fov in nm.
    start is either an explicit (x, y) in nm or the string "uniform-random".
    """

    diffusion_coefficient: float
    frame_interval: float
    n_frames: int
    fov: tuple[float, float]
    hurst: float = 0.5
    boundary: str = "reflect"
    start: tuple[float, float] | str = "uniform-random"

    def validate(self) -> None:
        if not (self.diffusion_coefficient >= 0 and math.isfinite(self.diffusion_coefficient)):
            raise ParameterError(f"diffusion_coefficient must be >= 0, got {self.diffusion_coefficient}")
        if not (0.0 < self.hurst < 1.0):
            raise ParameterError(f"hurst must lie in (0, 1), got {self.hurst}")
        if not (self.frame_interval > 0 and math.isfinite(self.frame_interval)):
            raise ParameterError(f"frame_interval must be > 0, got {self.frame_interval}")
        if self.n_frames < 1:
            raise ParameterError(f"n_frames must be >= 1, got {self.n_frames}")
        if len(self.fov) != 2 or not all(v > 0 and math.isfinite(v) for v in self.fov):
            raise ParameterError(f"fov must be two positive lengths, got {self.fov}")
        if self.boundary not in BOUNDARY_MODES:
            raise ParameterError(f"boundary must be one of {BOUNDARY_MODES}, got {self.boundary!r}")
        if self.start != "uniform-random":
            x, y = self.start
            if not (0.0 <= x <= self.fov[0] and 0.0 <= y <= self.fov[1]):
                raise ParameterError(f"start {self.start} lies outside fov {self.fov}")


@dataclass
class Trajectory:
    """Ordered per-particle samples in physical units.

    frames must be strictly increasing; gaps (missed frames) are allowed.
    theta and area are optional per-sample columns (orientation in rad,
    mask area in px) filled by the tracking stage.
    """

    id: int
    frames: np.ndarray
    x: np.ndarray
    y: np.ndarray
    frame_interval: float
    theta: np.ndarray | None = None
    area: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)

    def validate(self) -> None:
        n = len(self.frames)
        if len(self.x) != n or len(self.y) != n:
            raise ParameterError("frames/x/y lengths differ")
        if n > 1 and not np.all(np.diff(self.frames) > 0):
            raise ParameterError("frame indices must be strictly increasing")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ParameterError("coordinates must be finite")
        for extra in (self.theta, self.area):
            if extra is not None and len(extra) != n:
                raise ParameterError("optional per-sample column has wrong length")


def _resolve_start(params: DiffusionParams, rng: np.random.Generator) -> np.ndarray:
    if params.start == "uniform-random":
        return rng.uniform([0.0, 0.0], list(params.fov))
    return np.asarray(params.start, dtype=float)


def gen_brownian(params: DiffusionParams, seed: int, stream: int = 0) -> Trajectory:
    """Sample a 2-D Brownian trajectory on the frame grid.

    Per-axis increments are i.i.d. N(0, 2*D*dt) before boundary handling.
    The start position (when "uniform-random") is drawn first, then the
    increment block, so the stream layout is stable. `stream` selects an
    independent substream of the same seed (one per particle).
    """
    params.validate()
    rng = substream(seed, TAG_TRAJECTORY, stream)
    start = _resolve_start(params, rng)
    n = params.n_frames
    sigma = math.sqrt(2.0 * params.diffusion_coefficient * params.frame_interval)
    steps = rng.normal(0.0, sigma, size=(n - 1, 2)) if n > 1 else np.empty((0, 2))
    pos = np.vstack([start, start + np.cumsum(steps, axis=0)]) if n > 1 else start[None, :]
    traj = Trajectory(
        id=0,
        frames=np.arange(n, dtype=np.int64),
        x=pos[:, 0].copy(),
        y=pos[:, 1].copy(),
        frame_interval=params.frame_interval,
        meta={"model": "brownian", "seed": int(seed), "boundary": params.boundary},
    )
    return apply_boundary(traj, params.boundary, params.fov)


def fgn_autocovariance(lags, hurst: float) -> np.ndarray:
    """Unit-variance fractional Gaussian noise autocovariance gamma(k)."""
    k = np.abs(np.asarray(lags, dtype=float))
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(k + 1.0) ** h2 - 2.0 * k ** h2 + np.abs(k - 1.0) ** h2)


def _fgn_davies_harte(n: int, hurst: float, rng: np.random.Generator) -> np.ndarray | None:
    """Exact circulant-embedding synthesis of unit-variance fGn.

    Returns None when the embedding spectrum has a meaningfully negative
    eigenvalue (small n with high hurst), in which case the caller falls
    back to the Cholesky route. See Dieker, "Simulation of fractional
    Brownian motion" (2004) for the construction.
    """
    m = 2 * n
    gamma = fgn_autocovariance(np.arange(n + 1), hurst)
    circ = np.concatenate([gamma, gamma[-2:0:-1]])  # gamma(0..n), gamma(n-1..1)
    lam = np.fft.fft(circ).real
    if lam.min() < -1e-10 * max(lam.max(), 1.0):
        return None
    lam = np.clip(lam, 0.0, None)

    z = np.empty(m, dtype=complex)
    z[0] = rng.standard_normal()
    z[n] = rng.standard_normal()
    if n > 1:
        uv = rng.standard_normal((n - 1, 2))
        z[1:n] = (uv[:, 0] + 1j * uv[:, 1]) / math.sqrt(2.0)
        z[n + 1:] = np.conj(z[n - 1:0:-1])
    return math.sqrt(m) * np.fft.ifft(np.sqrt(lam) * z).real[:n]


def _fgn_cholesky(n: int, hurst: float, rng: np.random.Generator) -> np.ndarray:
    """Exact O(n^3) synthesis from the Cholesky factor of the covariance."""
    cov = toeplitz(fgn_autocovariance(np.arange(n), hurst))
    chol = np.linalg.cholesky(cov)
    return chol @ rng.standard_normal(n)


def sample_fgn(n: int, hurst: float, rng: np.random.Generator,
               method: str = "auto") -> tuple[np.ndarray, str]:
    """Draw a unit-variance fGn series of length n; returns (series, method used)."""
    if n == 0:
        return np.empty(0), "none"
    if method in ("auto", "davies-harte"):
        series = _fgn_davies_harte(n, hurst, rng)
        if series is not None:
            return series, "davies-harte"
        if method == "davies-harte":
            raise ParameterError("circulant embedding is not nonnegative for these parameters")
    return _fgn_cholesky(n, hurst, rng), "cholesky"


def gen_fbm(params: DiffusionParams, seed: int, stream: int = 0,
            fgn_method: str = "auto") -> Trajectory:
    """Sample a 2-D fractional Brownian trajectory.

    Increments per axis are fractional Gaussian noise with
    gamma(k) = sigma^2/2 * (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}),
    sigma^2 = 2*D*dt, so hurst = 0.5 reduces to the Brownian generator's
    statistics. The synthesis route actually used ("davies-harte" or
    "cholesky") is recorded in the trajectory metadata.
    """
    params.validate()
    rng = substream(seed, TAG_TRAJECTORY, stream)
    start = _resolve_start(params, rng)
    n = params.n_frames
    sigma = math.sqrt(2.0 * params.diffusion_coefficient * params.frame_interval)
    if n > 1:
        gx, method = sample_fgn(n - 1, params.hurst, rng, fgn_method)
        gy, _ = sample_fgn(n - 1, params.hurst, rng, fgn_method)
        pos = np.empty((n, 2))
        pos[0] = start
        pos[1:, 0] = start[0] + sigma * np.cumsum(gx)
        pos[1:, 1] = start[1] + sigma * np.cumsum(gy)
    else:
        pos = start[None, :]
        method = "none"
    traj = Trajectory(
        id=0,
        frames=np.arange(n, dtype=np.int64),
        x=pos[:, 0].copy(),
        y=pos[:, 1].copy(),
        frame_interval=params.frame_interval,
        meta={"model": "fbm", "hurst": params.hurst, "seed": int(seed),
              "boundary": params.boundary, "fgn_method": method},
    )
    return apply_boundary(traj, params.boundary, params.fov)


def _fold_reflect(v: np.ndarray, length: float) -> np.ndarray:
    # triangle wave with period 2L maps any coordinate onto [0, L]
    p = np.mod(v, 2.0 * length)
    return length - np.abs(p - length)


def apply_boundary(traj: Trajectory, mode: str, fov) -> Trajectory:
    """Fold trajectory coordinates into the fov per the boundary mode.

    reflect mirrors at the walls, periodic wraps modulo the fov, open leaves
    the trajectory untouched (particles may exit the frame).
    """
    if mode == "open":
        return traj
    if mode not in BOUNDARY_MODES:
        raise ParameterError(f"unknown boundary mode {mode!r}")
    lx, ly = float(fov[0]), float(fov[1])
    if mode == "reflect":
        x, y = _fold_reflect(traj.x, lx), _fold_reflect(traj.y, ly)
    else:
        x, y = np.mod(traj.x, lx), np.mod(traj.y, ly)
    return replace(traj, x=x, y=y)


def translate(traj: Trajectory, dx: float, dy: float) -> Trajectory:
    """Rigidly shift a trajectory (used to place confined particles in a scene)."""
    return replace(traj, x=traj.x + dx, y=traj.y + dy)
