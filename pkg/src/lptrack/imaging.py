"""Synthetic liquid-cell TEM image formation.

The model is deliberately minimal but physically motivated: particles are
dark silhouettes on a bright background (mass-thickness contrast), the
contrast decays exponentially with liquid thickness, the ideal image is
blurred by a Gaussian PSF, and counts are drawn per pixel from a Poisson
law (shot noise) with optional additive Gaussian read noise. Expected
background counts default to dose_rate * pixel_area[A^2] * exposure.

Every knob lives in SceneConfig so no constant is hidden in code. Ground
truth label masks come from the unblurred silhouettes; contested pixels of
overlapping particles go to the lowest id so instance masks stay disjoint.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InputError, ParameterError
from .trajgen import TAG_FRAME, Trajectory, substream

U16_MAX = 65535


@dataclass(frozen=True)
class Disc:
    radius: float  # nm

    def bounding_radius(self) -> float:
        return self.radius

    def to_dict(self) -> dict:
        return {"kind": "disc", "radius_nm": self.radius}


@dataclass(frozen=True)
class Ellipse:
    a: float  # semi-axis along the orientation axis, nm
    b: float  # perpendicular semi-axis, nm

    def bounding_radius(self) -> float:
        return max(self.a, self.b)

    def to_dict(self) -> dict:
        return {"kind": "ellipse", "a_nm": self.a, "b_nm": self.b}


def shape_from_dict(d: dict) -> Disc | Ellipse:
    kind = d.get("kind")
    if kind == "disc":
        return Disc(radius=float(d["radius_nm"]))
    if kind == "ellipse":
        return Ellipse(a=float(d["a_nm"]), b=float(d["b_nm"]))
    raise ParameterError(f"unknown particle shape kind {kind!r}")


@dataclass
class SceneConfig:
    """Acquisition and contrast parameters of one simulated video."""

    image_size: tuple[int, int] = (1024, 1024)   # (width, height) px
    pixel_size: float = 0.25                     # nm/px
    thickness: float = 50.0                      # nm of liquid
    dose_rate: float = 35.0                      # e-/A^2/s
    exposure: float = 0.0125                     # s/frame
    particle_shape: Disc | Ellipse = field(default_factory=lambda: Disc(radius=10.0))
    base_contrast: float = 0.8                   # c0 in (0, 1]
    attenuation_length: float = 67.0             # nm; contrast ~ exp(-thickness/length)
    psf_sigma: float = 2.0                       # px
    read_noise_sigma: float = 0.0                # counts
    background_level: float | None = None        # counts/px; None -> from dose

    def validate(self) -> None:
        w, h = self.image_size
        if w < 1 or h < 1:
            raise ParameterError(f"image_size must be positive, got {self.image_size}")
        if not (self.pixel_size > 0):
            raise ParameterError(f"pixel_size must be > 0, got {self.pixel_size}")
        if self.thickness < 0:
            raise ParameterError(f"thickness must be >= 0, got {self.thickness}")
        if not (0.0 < self.base_contrast <= 1.0):
            raise ParameterError(f"base_contrast must lie in (0, 1], got {self.base_contrast}")
        if not (self.attenuation_length > 0):
            raise ParameterError(f"attenuation_length must be > 0, got {self.attenuation_length}")
        if self.psf_sigma < 0 or self.read_noise_sigma < 0:
            raise ParameterError("psf_sigma and read_noise_sigma must be >= 0")
        if self.dose_rate < 0 or self.exposure <= 0:
            raise ParameterError("dose_rate must be >= 0 and exposure > 0")
        if self.background_level is not None and self.background_level < 0:
            raise ParameterError("background_level must be >= 0")
        fov = self.fov()
        r = self.particle_shape.bounding_radius()
        if isinstance(self.particle_shape, Ellipse) and min(self.particle_shape.a, self.particle_shape.b) <= 0:
            raise ParameterError("ellipse semi-axes must be > 0")
        if not (0 < r < min(fov) / 2):
            raise ParameterError(
                f"particle dimension {r} nm must lie in (0, {min(fov) / 2}) nm")

    def fov(self) -> tuple[float, float]:
        return (self.image_size[0] * self.pixel_size, self.image_size[1] * self.pixel_size)

    def background_counts(self) -> float:
        """Expected background counts per pixel."""
        if self.background_level is not None:
            return float(self.background_level)
        pixel_area_a2 = (self.pixel_size * 10.0) ** 2  # nm -> Angstrom
        return self.dose_rate * pixel_area_a2 * self.exposure

    def contrast(self) -> float:
        """Effective particle contrast after thickness attenuation."""
        return self.base_contrast * math.exp(-self.thickness / self.attenuation_length)

    def to_dict(self) -> dict:
        return {
            "image_size": list(self.image_size),
            "pixel_size_nm": self.pixel_size,
            "thickness_nm": self.thickness,
            "dose_rate_e_per_a2_s": self.dose_rate,
            "exposure_s": self.exposure,
            "particle_shape": self.particle_shape.to_dict(),
            "base_contrast": self.base_contrast,
            "attenuation_length_nm": self.attenuation_length,
            "psf_sigma_px": self.psf_sigma,
            "read_noise_sigma": self.read_noise_sigma,
            "background_level": self.background_level,
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


@dataclass
class FrameStack:
    """A rendered video: (n, h, w) uint16 counts plus acquisition metadata."""

    frames: np.ndarray
    meta: dict

    def __len__(self) -> int:
        return len(self.frames)


def _silhouette(shape, x: float, y: float, theta: float | None,
                cfg: SceneConfig) -> tuple[slice, slice, np.ndarray] | None:
    """Boolean stamp of the particle silhouette over its bounding box.

    Pixel (row i, col j) covers [j*s, (j+1)*s) x [i*s, (i+1)*s) in nm; a
    pixel belongs to the silhouette when its center lies inside the shape.
    """
    w, h = cfg.image_size
    s = cfg.pixel_size
    r = shape.bounding_radius()
    j0 = max(int(math.floor((x - r) / s)) - 1, 0)
    j1 = min(int(math.ceil((x + r) / s)) + 1, w - 1)
    i0 = max(int(math.floor((y - r) / s)) - 1, 0)
    i1 = min(int(math.ceil((y + r) / s)) + 1, h - 1)
    if j0 > j1 or i0 > i1:
        return None
    jj = (np.arange(j0, j1 + 1) + 0.5) * s - x
    ii = (np.arange(i0, i1 + 1) + 0.5) * s - y
    dx = jj[None, :]
    dy = ii[:, None]
    if isinstance(shape, Disc):
        inside = dx * dx + dy * dy <= shape.radius ** 2
    else:
        ang = 0.0 if theta is None else theta
        ca, sa = math.cos(ang), math.sin(ang)
        u = dx * ca + dy * sa
        v = -dx * sa + dy * ca
        inside = (u / shape.a) ** 2 + (v / shape.b) ** 2 <= 1.0
    if not inside.any():
        return None
    return slice(i0, i1 + 1), slice(j0, j1 + 1), inside


def label_frame(positions, cfg: SceneConfig) -> np.ndarray:
    """Rasterize ground-truth labels; overlaps resolved in favor of the lowest id."""
    w, h = cfg.image_size
    mask = np.zeros((h, w), dtype=np.uint16)
    for pid, x, y, theta in sorted(positions, key=lambda p: p[0]):
        stamp = _silhouette(cfg.particle_shape, x, y, theta, cfg)
        if stamp is None:
            continue
        rows, cols, inside = stamp
        region = mask[rows, cols]
        claim = inside & (region == 0)
        region[claim] = pid
        mask[rows, cols] = region
    return mask


def render_frame(positions, cfg: SceneConfig,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Render one frame and its label mask.

    Parameters
    ----------
    positions : iterable of (id, x_nm, y_nm, theta_rad or None)
        Continuous particle positions; ids must be >= 1. Particles fully
        outside the field of view are simply absent from image and mask.
    cfg : SceneConfig
    rng : numpy Generator
        Consumed for shot noise and (when configured) read noise.

    Returns
    -------
    (image uint16, mask uint16)
    """
    cfg.validate()
    positions = list(positions)
    for pid, *_ in positions:
        if pid < 1:
            raise ParameterError(f"particle ids must be >= 1, got {pid}")
    mask = label_frame(positions, cfg)
    bg = cfg.background_counts()
    ideal = bg * (1.0 - cfg.contrast() * (mask > 0))
    if cfg.psf_sigma > 0:
        ideal = gaussian_filter(ideal, sigma=cfg.psf_sigma, mode="nearest")
    counts = rng.poisson(ideal).astype(np.float64)
    if cfg.read_noise_sigma > 0:
        counts += rng.normal(0.0, cfg.read_noise_sigma, size=counts.shape)
    image = np.clip(np.rint(counts), 0, U16_MAX).astype(np.uint16)
    return image, mask


def _positions_by_frame(trajs: list[Trajectory]) -> tuple[np.ndarray, dict[int, list]]:
    if not trajs:
        raise InputError("simulate_video needs at least one trajectory")
    first = {int(t.frames[0]) for t in trajs}
    last = {int(t.frames[-1]) for t in trajs}
    if len(first) != 1 or len(last) != 1:
        raise InputError(f"trajectories must share a frame range, got starts {sorted(first)} ends {sorted(last)}")
    ids = [t.id for t in trajs]
    if len(set(ids)) != len(ids):
        raise InputError(f"duplicate trajectory ids: {sorted(ids)}")
    frames = np.arange(first.pop(), last.pop() + 1, dtype=np.int64)
    table: dict[int, list] = {int(f): [] for f in frames}
    for t in trajs:
        thetas = t.theta if t.theta is not None else [None] * len(t)
        for f, x, y, th in zip(t.frames, t.x, t.y, thetas):
            table[int(f)].append((t.id, float(x), float(y), None if th is None else float(th)))
    return frames, table


def render_video_frames(trajs: list[Trajectory], cfg: SceneConfig,
                        seed: int) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield (frame_index, image, mask) one frame at a time.

    Each frame consumes an independent Philox substream keyed by
    (seed, frame index), so frames can be rendered in any order — or in
    parallel — with bit-identical results.
    """
    cfg.validate()
    frames, table = _positions_by_frame(trajs)
    for f in frames:
        yield int(f), *render_frame(table[int(f)], cfg, frame_rng(seed, int(f)))


def frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    return substream(seed, TAG_FRAME, frame_index)


def simulate_video(trajs: list[Trajectory], cfg: SceneConfig,
                   seed: int) -> tuple[FrameStack, np.ndarray, list[tuple]]:
    """Render a whole video in memory.

    Returns the frame stack, the (n, h, w) label-mask stack and the
    ground-truth rows (frame, id, x_nm, y_nm, theta_rad) holding the
    continuous pre-rasterization centroids. For long high-resolution videos
    prefer render_video_frames, which streams.
    """
    frames, table = _positions_by_frame(trajs)
    w, h = cfg.image_size
    stack = np.empty((len(frames), h, w), dtype=np.uint16)
    masks = np.empty((len(frames), h, w), dtype=np.uint16)
    for i, (f, image, mask) in enumerate(render_video_frames(trajs, cfg, seed)):
        stack[i] = image
        masks[i] = mask
    gt_rows = [
        (f, pid, x, y, th)
        for f in frames
        for pid, x, y, th in sorted(table[int(f)], key=lambda p: p[0])
    ]
    meta = {
        "pixel_size_nm": cfg.pixel_size,
        "exposure_s": cfg.exposure,
        "seed": int(seed),
        "thickness_nm": cfg.thickness,
        "config_hash": cfg.digest(),
    }
    return FrameStack(frames=stack, meta=meta), masks, gt_rows


def measure_snr(image: np.ndarray, mask: np.ndarray) -> float:
    """Contrast-to-noise estimate of one frame.

    SNR = |mean(background) - mean(particle)| / std(background). A zero
    background spread (noiseless render) returns inf as a sentinel rather
    than dividing by zero.
    """
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask)
    if image.shape != mask.shape:
        raise InputError(f"image {image.shape} and mask {mask.shape} differ in shape")
    fg = mask > 0
    if not fg.any():
        raise InputError("mask has no foreground pixels; SNR is undefined")
    if fg.all():
        raise InputError("mask has no background pixels; SNR is undefined")
    diff = abs(image[~fg].mean() - image[fg].mean())
    noise = image[~fg].std()
    if noise < 1e-12:
        return math.inf if diff > 0 else 0.0
    return float(diff / noise)


def to_uint8(image: np.ndarray) -> np.ndarray:
    """8-bit export with fixed linear scaling round(v * 255 / 65535)."""
    return np.rint(np.asarray(image, dtype=np.float64) * (255.0 / U16_MAX)).astype(np.uint8)
