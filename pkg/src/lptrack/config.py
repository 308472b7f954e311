"""Declarative run configuration: defaults, validation, normalization and
named presets.

The config is a single JSON document; every knob has a recorded default and
unknown keys are rejected by full path so typos cannot silently fall back
to defaults. parse_config(normalize(cfg)) is the identity.
"""

from __future__ import annotations

import json
from copy import deepcopy

from .errors import ConfigError
from .imaging import SceneConfig, shape_from_dict
from .trajgen import TAG_SCENE, DiffusionParams, substream

THICKNESS_GRID_NM = (5, 10, 25, 50, 75, 100, 125, 150, 160)

DEFAULTS: dict = {
    "seed": 0,
    "simulate": {
        "n_frames": 50,
        "n_particles": "random",
        "n_particles_range": [1, 8],
        "diffusion": {
            "model": "brownian",
            "diffusion_coefficient_nm2_s": 1.0,
            "hurst": 0.5,
            "frame_interval_s": 0.0125,
            "boundary": "reflect",
            "start": "uniform-random",
        },
        "scene": {
            "image_size": [1024, 1024],
            "pixel_size_nm": 0.25,
            "thickness_nm": 50.0,
            "dose_rate_e_per_a2_s": 35.0,
            "exposure_s": 0.0125,
            "particle_shape": {"kind": "disc", "radius_nm": 10.0},
            "base_contrast": 0.8,
            "attenuation_length_nm": 67.0,
            "psf_sigma_px": 2.0,
            "read_noise_sigma": 0.0,
            "background_level": None,
        },
    },
    "track": {
        "gate_px": 50.0,
        "max_missed": 5,
        "cost": "euclidean",
        "min_area_px": 4,
    },
    "stats": {
        "max_lag_fraction": 0.25,
        "fit_lags": 10,
        "n_bins": 50,
        "lag_frames": 1,
    },
    "eval": {
        "tolerance_px": None,
    },
}

# Test-video presets: a 300-frame three-particle scene (with a two-particle
# variant, since both particle counts are of interest), a low-resolution
# single-particle scene, a long five-particle scene for tracking stability,
# and a 1000-frame single-particle scene for diffusion-recovery checks.
PRESETS: dict[str, dict] = {
    "demo-3p": {
        "simulate": {"n_frames": 300, "n_particles": 3,
                     "scene": {"image_size": [1024, 1024]}},
    },
    "demo-2p": {
        "simulate": {"n_frames": 300, "n_particles": 2,
                     "scene": {"image_size": [1024, 1024]}},
    },
    "lowres-1p": {
        "simulate": {"n_frames": 275, "n_particles": 1,
                     "scene": {"image_size": [512, 512]}},
    },
    "longrun-5p": {
        "simulate": {"n_frames": 600, "n_particles": 5,
                     "scene": {"image_size": [1024, 1024]}},
    },
    "roundtrip-1p": {
        "simulate": {
            "n_frames": 1000,
            "n_particles": 1,
            "diffusion": {"diffusion_coefficient_nm2_s": 0.5, "frame_interval_s": 1.0,
                          "start": [64.0, 64.0]},
            "scene": {"image_size": [512, 512],
                      "particle_shape": {"kind": "disc", "radius_nm": 5.0}},
        },
    },
}

_SHAPE_KEYS = {"disc": {"kind", "radius_nm"}, "ellipse": {"kind", "a_nm", "b_nm"}}


def _check_keys(user: dict, defaults: dict, path: str) -> None:
    for key, value in user.items():
        here = f"{path}.{key}" if path else key
        if key == "particle_shape":
            kind = value.get("kind") if isinstance(value, dict) else None
            if kind not in _SHAPE_KEYS:
                raise ConfigError(f"{here}.kind must be 'disc' or 'ellipse', got {kind!r}")
            extra = set(value) - _SHAPE_KEYS[kind]
            if extra:
                raise ConfigError(f"unknown config key: {here}.{sorted(extra)[0]}")
            continue
        if key not in defaults:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(defaults[key], dict) and defaults[key] and key != "particle_shape":
            if not isinstance(value, dict):
                raise ConfigError(f"{here} must be a mapping")
            _check_keys(value, defaults[key], here)


def _merge(user: dict, defaults: dict) -> dict:
    out = deepcopy(defaults)
    for key, value in user.items():
        if key == "particle_shape":
            out[key] = deepcopy(value)
        elif isinstance(defaults.get(key), dict) and isinstance(value, dict) and defaults[key]:
            out[key] = _merge(value, defaults[key])
        else:
            out[key] = deepcopy(value)
    return out


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _validate_values(cfg: dict) -> None:
    _require(isinstance(cfg["seed"], int) and cfg["seed"] >= 0,
             "seed must be a non-negative integer")
    sim = cfg["simulate"]
    _require(isinstance(sim["n_frames"], int) and sim["n_frames"] >= 1,
             "simulate.n_frames must be an integer >= 1")
    npart = sim["n_particles"]
    _require(npart == "random" or (isinstance(npart, int) and npart >= 1),
             "simulate.n_particles must be an integer >= 1 or 'random'")
    rng_lo, rng_hi = sim["n_particles_range"]
    _require(isinstance(rng_lo, int) and isinstance(rng_hi, int) and 1 <= rng_lo <= rng_hi,
             "simulate.n_particles_range must be [lo, hi] with 1 <= lo <= hi")
    if isinstance(npart, int):
        _require(rng_lo <= npart <= rng_hi,
                 f"simulate.n_particles = {npart} outside n_particles_range "
                 f"[{rng_lo}, {rng_hi}]; widen the range to override")
    diff = sim["diffusion"]
    _require(diff["model"] in ("brownian", "fbm"),
             "simulate.diffusion.model must be 'brownian' or 'fbm'")
    _require(diff["diffusion_coefficient_nm2_s"] >= 0,
             "simulate.diffusion.diffusion_coefficient_nm2_s must be >= 0")
    _require(0 < diff["hurst"] < 1, "simulate.diffusion.hurst must lie in (0, 1)")
    _require(diff["frame_interval_s"] > 0, "simulate.diffusion.frame_interval_s must be > 0")
    _require(diff["boundary"] in ("reflect", "periodic", "open"),
             "simulate.diffusion.boundary must be reflect|periodic|open")
    start = diff["start"]
    _require(start == "uniform-random" or (isinstance(start, list) and len(start) == 2),
             "simulate.diffusion.start must be 'uniform-random' or [x_nm, y_nm]")
    scene = sim["scene"]
    thick = scene["thickness_nm"]
    _require(thick == "random" or (isinstance(thick, (int, float)) and thick >= 0),
             "simulate.scene.thickness_nm must be a number >= 0 or 'random'")
    size = scene["image_size"]
    _require(isinstance(size, list) and len(size) == 2
             and all(isinstance(v, int) and v >= 1 for v in size),
             "simulate.scene.image_size must be [width_px, height_px]")
    trk = cfg["track"]
    _require(trk["gate_px"] > 0, "track.gate_px must be > 0")
    _require(isinstance(trk["max_missed"], int) and trk["max_missed"] >= 0,
             "track.max_missed must be an integer >= 0")
    _require(trk["cost"] == "euclidean", "track.cost must be 'euclidean'")
    _require(isinstance(trk["min_area_px"], int) and trk["min_area_px"] >= 1,
             "track.min_area_px must be an integer >= 1")
    st = cfg["stats"]
    _require(0 < st["max_lag_fraction"] <= 1, "stats.max_lag_fraction must lie in (0, 1]")
    _require(isinstance(st["fit_lags"], int) and st["fit_lags"] >= 2,
             "stats.fit_lags must be an integer >= 2")
    _require(isinstance(st["n_bins"], int) and st["n_bins"] >= 1,
             "stats.n_bins must be an integer >= 1")
    _require(isinstance(st["lag_frames"], int) and st["lag_frames"] >= 1,
             "stats.lag_frames must be an integer >= 1")
    tol = cfg["eval"]["tolerance_px"]
    _require(tol is None or tol >= 0, "eval.tolerance_px must be >= 0 or null")


def normalize(user: dict) -> dict:
    """Merge a partial config onto the defaults, validate, and return the
    complete document. Raises ConfigError naming the first offending key."""
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(user, DEFAULTS, "")
    cfg = _merge(user, DEFAULTS)
    # normalize numeric leaves so that round-trips compare equal
    diff = cfg["simulate"]["diffusion"]
    for key in ("diffusion_coefficient_nm2_s", "hurst", "frame_interval_s"):
        diff[key] = float(diff[key])
    if isinstance(diff["start"], list):
        diff["start"] = [float(v) for v in diff["start"]]
    scene = cfg["simulate"]["scene"]
    for key in ("pixel_size_nm", "dose_rate_e_per_a2_s", "exposure_s",
                "base_contrast", "attenuation_length_nm", "psf_sigma_px",
                "read_noise_sigma"):
        scene[key] = float(scene[key])
    if scene["thickness_nm"] != "random":
        scene["thickness_nm"] = float(scene["thickness_nm"])
    if scene["background_level"] is not None:
        scene["background_level"] = float(scene["background_level"])
    shape = scene["particle_shape"]
    for key in _SHAPE_KEYS[shape["kind"]] - {"kind"}:
        shape[key] = float(shape[key])
    cfg["track"]["gate_px"] = float(cfg["track"]["gate_px"])
    cfg["stats"]["max_lag_fraction"] = float(cfg["stats"]["max_lag_fraction"])
    if cfg["eval"]["tolerance_px"] is not None:
        cfg["eval"]["tolerance_px"] = float(cfg["eval"]["tolerance_px"])
    _validate_values(cfg)
    return cfg


def parse_config(text: str) -> dict:
    """Parse and normalize a JSON config document."""
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return normalize(user)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


def preset_config(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return normalize(deepcopy(PRESETS[name]))


def resolve_scene(cfg: dict) -> tuple[SceneConfig, int]:
    """Build the SceneConfig from a normalized config, drawing any 'random'
    fields from the scene-level substream of the master seed.

    Draw order is fixed: n_particles first, then thickness.
    """
    sim = cfg["simulate"]
    rng = substream(cfg["seed"], TAG_SCENE, 0)
    npart = sim["n_particles"]
    if npart == "random":
        lo, hi = sim["n_particles_range"]
        npart = int(rng.integers(lo, hi + 1))
    scene = sim["scene"]
    thickness = scene["thickness_nm"]
    if thickness == "random":
        thickness = float(THICKNESS_GRID_NM[rng.integers(0, len(THICKNESS_GRID_NM))])
    sc = SceneConfig(
        image_size=tuple(scene["image_size"]),
        pixel_size=scene["pixel_size_nm"],
        thickness=thickness,
        dose_rate=scene["dose_rate_e_per_a2_s"],
        exposure=scene["exposure_s"],
        particle_shape=shape_from_dict(scene["particle_shape"]),
        base_contrast=scene["base_contrast"],
        attenuation_length=scene["attenuation_length_nm"],
        psf_sigma=scene["psf_sigma_px"],
        read_noise_sigma=scene["read_noise_sigma"],
        background_level=scene["background_level"],
    )
    sc.validate()
    return sc, npart


def resolve_diffusion(cfg: dict, fov: tuple[float, float]) -> DiffusionParams:
    sim = cfg["simulate"]
    diff = sim["diffusion"]
    start = diff["start"]
    params = DiffusionParams(
        diffusion_coefficient=diff["diffusion_coefficient_nm2_s"],
        hurst=diff["hurst"],
        frame_interval=diff["frame_interval_s"],
        n_frames=sim["n_frames"],
        fov=fov,
        boundary=diff["boundary"],
        start="uniform-random" if start == "uniform-random" else (start[0], start[1]),
    )
    params.validate()
    return params
