"""File formats: 16-bit binary PGM sequences, trajectory CSVs, dataset
layout with a meta.json sidecar. All writes are atomic (temp + rename) and
all formats round-trip bit-exactly.
"""

from __future__ import annotations

import csv
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, InputError
from .trajgen import Trajectory

FORMAT_VERSION = "1"
FRAME_PATTERN = "frame_{:05d}.pgm"
MASK_PATTERN = "mask_{:05d}.pgm"


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(Path(path), text.encode())


def write_pgm(path, image: np.ndarray) -> None:
    """Write a 2-D array as binary PGM (P5), 16-bit big-endian, maxval 65535."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise InputError(f"PGM image must be 2-D, got shape {image.shape}")
    if image.dtype != np.uint16:
        if image.min() < 0 or image.max() > 65535:
            raise InputError("PGM values must fit in uint16")
        image = image.astype(np.uint16)
    h, w = image.shape
    header = f"P5\n{w} {h}\n65535\n".encode()
    _atomic_write_bytes(Path(path), header + image.astype(">u2").tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM (P5), returning uint16 regardless of stored depth."""
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read PGM file: {path}") from exc

    # header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed, then one whitespace byte before the raster
    pos = 0
    tokens = []
    while len(tokens) < 4:
        match = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)").match(payload, pos)
        if match is None:
            raise DataError(f"truncated PGM header: {path}")
        tokens.append(match.group(2))
        pos = match.end()
    if tokens[0] != b"P5":
        raise DataError(f"not a binary PGM (P5) file: {path}")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise DataError(f"malformed PGM header: {path}") from exc
    if not (0 < maxval < 65536):
        raise DataError(f"PGM maxval out of range: {path}")
    pos += 1  # single whitespace after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = w * h * dtype.itemsize
    raster = payload[pos:pos + expected]
    if len(raster) != expected:
        raise DataError(f"PGM raster truncated: {path}")
    return np.frombuffer(raster, dtype=dtype).reshape(h, w).astype(np.uint16)


def format_float(v: float) -> str:
    return repr(float(v))


def write_trajectory_csv(path, trajs: list[Trajectory]) -> None:
    """Ground-truth trajectory CSV: frame,id,x_nm,y_nm,theta_rad (theta may be blank)."""
    rows = []
    for t in sorted(trajs, key=lambda t: t.id):
        thetas = t.theta if t.theta is not None else [None] * len(t)
        for f, x, y, th in zip(t.frames, t.x, t.y, thetas):
            rows.append((int(f), t.id, x, y, th))
    rows.sort(key=lambda r: (r[0], r[1]))
    lines = ["frame,id,x_nm,y_nm,theta_rad"]
    for f, pid, x, y, th in rows:
        lines.append(f"{f},{pid},{format_float(x)},{format_float(y)},"
                     f"{'' if th is None else format_float(th)}")
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def write_tracked_csv(path, trajs: list[Trajectory], pixel_size: float | None = None) -> None:
    """Tracking-output CSV: frame,id,x_px,y_px,x_nm,y_nm,theta_rad,area_px.

    nm columns are filled only when pixel_size is known (argument or
    trajectory metadata); pixel center (j+0.5)*s defines the conversion.
    """
    lines = ["frame,id,x_px,y_px,x_nm,y_nm,theta_rad,area_px"]
    rows = []
    for t in sorted(trajs, key=lambda t: t.id):
        s = pixel_size if pixel_size is not None else t.meta.get("pixel_size_nm")
        thetas = t.theta if t.theta is not None else [None] * len(t)
        areas = t.area if t.area is not None else [None] * len(t)
        for f, x, y, th, ar in zip(t.frames, t.x, t.y, thetas, areas):
            x_nm = "" if s is None else format_float((x + 0.5) * s)
            y_nm = "" if s is None else format_float((y + 0.5) * s)
            rows.append((int(f), t.id, format_float(x), format_float(y), x_nm, y_nm,
                         "" if th is None else format_float(th),
                         "" if ar is None else str(int(ar))))
    rows.sort(key=lambda r: (r[0], r[1]))
    lines += [",".join(str(v) for v in row) for row in rows]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def read_trajectory_csv(path, frame_interval: float = 1.0,
                        pixel_size: float | None = None,
                        prefer: str = "nm") -> list[Trajectory]:
    """Read either trajectory CSV schema back into Trajectory objects.

    prefer="nm" takes the x_nm/y_nm columns when present and falls back to
    pixels (converted with pixel_size when given); prefer="px" does the
    opposite. The unit actually loaded lands in traj.meta["units"].
    """
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise DataError(f"empty trajectory CSV: {path}")
            fields = set(reader.fieldnames)
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read trajectory CSV: {path}") from exc

    has_nm = {"x_nm", "y_nm"} <= fields
    has_px = {"x_px", "y_px"} <= fields
    if not ({"frame", "id"} <= fields and (has_nm or has_px)):
        raise DataError(f"unrecognized trajectory CSV columns in {path}: {sorted(fields)}")
    if has_nm and rows and rows[0]["x_nm"] == "":
        has_nm = False  # nm columns present but blank (no pixel size at track time)

    use_nm = has_nm if prefer == "nm" else not has_px
    if use_nm and not has_nm:
        raise DataError(f"no usable coordinate columns in {path}")
    cols = ("x_nm", "y_nm") if use_nm else ("x_px", "y_px")
    units = "nm" if use_nm else "px"

    grouped: dict[int, list] = {}
    for line_no, row in enumerate(rows, start=2):
        try:
            pid = int(row["id"])
            frame = int(row["frame"])
            x = float(row[cols[0]])
            y = float(row[cols[1]])
            theta = row.get("theta_rad", "")
            theta = None if theta in ("", None) else float(theta)
            area = row.get("area_px", "")
            area = None if area in ("", None) else int(area)
        except (KeyError, ValueError) as exc:
            raise DataError(f"bad row {line_no} in trajectory CSV {path}") from exc
        grouped.setdefault(pid, []).append((frame, x, y, theta, area))

    trajs = []
    for pid in sorted(grouped):
        samples = sorted(grouped[pid])
        frames = np.array([s[0] for s in samples], dtype=np.int64)
        x = np.array([s[1] for s in samples])
        y = np.array([s[2] for s in samples])
        if units == "px" and pixel_size is not None:
            x = (x + 0.5) * pixel_size
            y = (y + 0.5) * pixel_size
            final_units = "nm"
        else:
            final_units = units
        thetas = [s[3] for s in samples]
        areas = [s[4] for s in samples]
        trajs.append(Trajectory(
            id=pid, frames=frames, x=x, y=y, frame_interval=frame_interval,
            theta=None if all(t is None for t in thetas) else np.array(
                [np.nan if t is None else t for t in thetas]),
            area=None if all(a is None for a in areas) else np.array(
                [0 if a is None else a for a in areas], dtype=np.int64),
            meta={"units": final_units, "source": str(path)},
        ))
    return trajs


@dataclass
class DatasetLayout:
    """On-disk dataset: frames/, masks/, meta.json, gt_trajectories.csv."""

    root: Path

    @property
    def frames_dir(self) -> Path:
        return self.root / "frames"

    @property
    def masks_dir(self) -> Path:
        return self.root / "masks"

    @property
    def meta_path(self) -> Path:
        return self.root / "meta.json"

    @property
    def gt_path(self) -> Path:
        return self.root / "gt_trajectories.csv"

    def frame_files(self) -> list[Path]:
        return sorted(self.frames_dir.glob("frame_*.pgm"))

    def mask_files(self) -> list[Path]:
        return sorted(self.masks_dir.glob("mask_*.pgm"))

    def read_meta(self) -> dict:
        try:
            meta = json.loads(self.meta_path.read_text())
        except OSError as exc:
            raise DataError(f"cannot read dataset meta: {self.meta_path}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed dataset meta: {self.meta_path}") from exc
        if "format_version" not in meta:
            raise DataError(f"dataset meta lacks format_version: {self.meta_path}")
        return meta

    def validate(self) -> None:
        for d in (self.root, self.frames_dir, self.masks_dir):
            if not d.is_dir():
                raise DataError(f"missing dataset directory: {d}")
        n_frames = len(self.frame_files())
        n_masks = len(self.mask_files())
        if n_frames != n_masks:
            raise InputError(
                f"{self.root}: frame count {n_frames} != mask count {n_masks}")
        self.read_meta()


def write_meta(path, meta: dict) -> None:
    payload = dict(meta)
    payload.setdefault("format_version", FORMAT_VERSION)
    atomic_write_text(Path(path), json.dumps(payload, sort_keys=True, indent=2) + "\n")


def resolve_mask_dir(path) -> Path:
    """Accept either a dataset root or a bare directory of mask PGMs."""
    path = Path(path)
    if (path / "masks").is_dir():
        return path / "masks"
    return path


def read_mask_sequence(mask_dir) -> tuple[list[int], list[np.ndarray]]:
    """Load every mask_*.pgm in a directory, sorted by frame index."""
    mask_dir = Path(mask_dir)
    files = sorted(mask_dir.glob("mask_*.pgm"))
    if not files:
        raise DataError(f"no mask_*.pgm files in {mask_dir}")
    indices, masks = [], []
    for f in files:
        m = re.fullmatch(r"mask_(\d+)\.pgm", f.name)
        indices.append(int(m.group(1)))
        masks.append(read_pgm(f))
    return indices, masks
