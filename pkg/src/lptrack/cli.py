"""Command-line pipeline: simulate -> track -> stats -> eval.

Subcommands:
    simulate        render a synthetic video dataset from a config or preset
    track           link a mask sequence into trajectories (CSV)
    stats           MSD / VACF / displacement statistics of a trajectory CSV
    eval            J, F and J&F of predicted masks against ground truth
    centroid-agree  centroid-distance summary between two trajectory CSVs
    print-config    dump the fully-defaulted configuration document

Exit codes: 0 success, 2 usage or configuration error, 3 I/O or data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import io, metrics, plots, stats, tracking, trajgen
from .errors import (ConfigError, DataError, InputError, InsufficientDataError,
                     LptrackError)
from .imaging import frame_rng, render_frame

THREADS_ENV = "LPTRACK_THREADS"


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _build_trajectories(cfg: dict, scene, n_particles: int) -> list[trajgen.Trajectory]:
    params = cfgmod.resolve_diffusion(cfg, scene.fov())
    model = cfg["simulate"]["diffusion"]["model"]
    seed = cfg["seed"]
    trajs = []
    for i in range(n_particles):
        if model == "fbm":
            traj = trajgen.gen_fbm(params, seed, stream=i)
        else:
            traj = trajgen.gen_brownian(params, seed, stream=i)
        traj.id = i + 1
        trajs.append(traj)
    return trajs


def cmd_simulate(args) -> int:
    if args.preset:
        cfg = cfgmod.preset_config(args.preset)
    elif args.config:
        cfg = cfgmod.load_config(args.config)
    else:
        raise ConfigError("simulate needs --config or --preset")
    if args.seed is not None:
        cfg["seed"] = args.seed
        cfg = cfgmod.normalize(cfg)

    scene, n_particles = cfgmod.resolve_scene(cfg)
    trajs = _build_trajectories(cfg, scene, n_particles)
    layout = io.DatasetLayout(Path(args.out))
    layout.frames_dir.mkdir(parents=True, exist_ok=True)
    layout.masks_dir.mkdir(parents=True, exist_ok=True)

    first, last = int(trajs[0].frames[0]), int(trajs[0].frames[-1])
    frame_table = {f: [] for f in range(first, last + 1)}
    for t in trajs:
        thetas = t.theta if t.theta is not None else [None] * len(t)
        for f, x, y, th in zip(t.frames, t.x, t.y, thetas):
            frame_table[int(f)].append(
                (t.id, float(x), float(y), None if th is None else float(th)))
    indices = sorted(frame_table)

    def render_one(f: int):
        return f, *render_frame(frame_table[f], scene, frame_rng(cfg["seed"], f))

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            rendered = pool.map(render_one, indices)
            for f, image, mask in rendered:
                io.write_pgm(layout.frames_dir / io.FRAME_PATTERN.format(f), image)
                io.write_pgm(layout.masks_dir / io.MASK_PATTERN.format(f), mask)
    else:
        for f in indices:
            _, image, mask = render_one(f)
            io.write_pgm(layout.frames_dir / io.FRAME_PATTERN.format(f), image)
            io.write_pgm(layout.masks_dir / io.MASK_PATTERN.format(f), mask)

    io.write_trajectory_csv(layout.gt_path, trajs)
    resolved = json.loads(json.dumps(cfg))  # deep copy via JSON
    resolved["simulate"]["n_particles"] = n_particles
    resolved["simulate"]["scene"]["thickness_nm"] = scene.thickness
    io.write_meta(layout.meta_path, {
        "config": resolved,
        "seed": cfg["seed"],
        "scene": scene.to_dict(),
        "config_hash": scene.digest(),
        "n_frames": len(indices),
        "n_particles": n_particles,
        "pixel_size_nm": scene.pixel_size,
        "frame_interval_s": cfg["simulate"]["diffusion"]["frame_interval_s"],
        "fov_nm": list(scene.fov()),
        "trajectory_models": [t.meta.get("model") for t in trajs],
    })
    print(f"wrote {len(indices)} frames, {n_particles} particles to {layout.root}")
    return 0


def cmd_track(args) -> int:
    mask_dir = io.resolve_mask_dir(args.masks)
    pixel_size = args.pixel_size
    frame_interval = args.dt
    meta_path = mask_dir.parent / "meta.json"
    if meta_path.is_file():
        meta = io.DatasetLayout(mask_dir.parent).read_meta()
        if pixel_size is None:
            pixel_size = meta.get("pixel_size_nm")
        if frame_interval is None:
            frame_interval = meta.get("frame_interval_s")
    frame_interval = 1.0 if frame_interval is None else frame_interval

    indices, masks = io.read_mask_sequence(mask_dir)
    detections = [tracking.extract_detections(m, frame=f, min_area=args.min_area)
                  for f, m in zip(indices, masks)]
    link_cfg = tracking.LinkConfig(gate=args.gate, max_missed=args.max_missed)
    trajs = tracking.link(detections, link_cfg, frame_interval=frame_interval,
                          pixel_size=pixel_size)
    # link() numbers frames by list position; restore the file indices
    for t in trajs:
        t.frames = np.asarray([indices[i] for i in t.frames], dtype=np.int64)
    io.write_tracked_csv(args.out, trajs, pixel_size=pixel_size)

    n_frames = len(masks)
    late_births = sum(1 for t in trajs if len(t) and t.frames[0] != indices[0])
    gap_frames = sum(int(t.frames[-1] - t.frames[0] + 1 - len(t)) for t in trajs)
    print(f"tracks: {len(trajs)}; frames: {n_frames}; "
          f"tracks born after start: {late_births}; gap frames: {gap_frames}")
    return 0


def _stat_outputs(out_dir: Path, name: str, traj_list, fit_lags, n_bins, lag_frames,
                  max_lag_fraction, unit) -> dict:
    """Write msd/vacf/disp_hist CSVs for one trajectory or a pool."""
    # compute everything before touching the filesystem so a skipped
    # trajectory leaves no partial directory behind
    if len(traj_list) == 1:
        curve = stats.msd(traj_list[0], max_lag_fraction)
        vc = stats.vacf(traj_list[0], max_lag_fraction)
        hist = stats.displacement_pdf(traj_list[0], lag_frames, n_bins)
    else:
        curve = stats.ensemble_msd(traj_list, max_lag_fraction)
        vc = None
        hist = stats.pooled_displacement_pdf(traj_list, lag_frames, n_bins)
    out = out_dir / name
    out.mkdir(parents=True, exist_ok=True)
    result = {}
    lines = ["tau_s,msd_nm2,n_pairs" if unit == "nm" else "tau_s,msd_px2,n_pairs"]
    lines += [f"{io.format_float(t)},{io.format_float(m)},{n}"
              for t, m, n in zip(curve.taus, curve.msd, curve.n_pairs)]
    io.atomic_write_text(out / "msd.csv", "\n".join(lines) + "\n")
    if vc is not None:
        lines = ["tau_s,vacf"]
        lines += [f"{io.format_float(t)},{io.format_float(c)}"
                  for t, c in zip(vc.taus, vc.c)]
        io.atomic_write_text(out / "vacf.csv", "\n".join(lines) + "\n")
    lines = [f"bin_lo_{unit},bin_hi_{unit},density_per_{unit}"]
    lines += [f"{io.format_float(lo)},{io.format_float(hi)},{io.format_float(d)}"
              for lo, hi, d in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.density)]
    io.atomic_write_text(out / "disp_hist.csv", "\n".join(lines) + "\n")
    result["msd"] = curve
    result["vacf"] = vc
    result["hist"] = hist
    try:
        result["fit"] = stats.fit_diffusion(curve, fit_lags)
    except LptrackError:
        result["fit"] = None
    return result


def cmd_stats(args) -> int:
    trajs = io.read_trajectory_csv(args.trajectories, frame_interval=args.dt or 1.0,
                                   pixel_size=args.pixel_size)
    unit = trajs[0].meta.get("units", "nm") if trajs else "nm"
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    skipped = 0
    kept = []
    per_id = {}
    for traj in trajs:
        try:
            per_id[traj.id] = _stat_outputs(
                out_dir, f"traj_{traj.id:04d}", [traj], args.fit_lags, args.bins,
                args.lag_frames, args.max_lag_fraction, unit)
            kept.append(traj)
        except InsufficientDataError as exc:
            print(f"warning: trajectory {traj.id} skipped ({exc})", file=sys.stderr)
            skipped += 1
    if not kept:
        raise InsufficientDataError("no trajectory had enough samples for statistics")
    pooled = _stat_outputs(out_dir, "pooled", kept, args.fit_lags, args.bins,
                           args.lag_frames, args.max_lag_fraction, unit)

    plots.plot_msd({f"id {t.id}": per_id[t.id]["msd"] for t in kept} |
                   {"pooled": pooled["msd"]}, out_dir / "msd.svg", unit=unit)
    plots.plot_vacf({f"id {t.id}": per_id[t.id]["vacf"] for t in kept},
                    out_dir / "vacf.svg")
    reference = None
    fit = pooled["fit"]
    if fit is not None and fit["D"] > 0:
        reference = stats.gaussian_reference(fit["D"], pooled["hist"].tau)
    plots.plot_displacement_hist(pooled["hist"], out_dir / "disp_hist.svg",
                                 unit=unit, reference=reference)
    plots.plot_trajectories(kept, out_dir / "trajectories.svg", unit=unit)

    for t in kept:
        fit = per_id[t.id]["fit"]
        if fit is not None:
            print(f"trajectory {t.id}: D = {fit['D']:.4g} {unit}^2/s, "
                  f"alpha = {fit['alpha']:.3f}")
    if pooled["fit"] is not None:
        print(f"pooled: D = {pooled['fit']['D']:.4g} {unit}^2/s, "
              f"alpha = {pooled['fit']['alpha']:.3f}")
    print(f"skipped trajectories: {skipped}")
    return 0


def _load_eval_masks(path) -> list[np.ndarray]:
    return io.read_mask_sequence(io.resolve_mask_dir(path))[1]


def cmd_eval(args) -> int:
    pred = _load_eval_masks(args.pred)
    gt = _load_eval_masks(args.gt)
    if len(pred) != len(gt):
        raise InputError(f"frame counts differ: pred {len(pred)} vs gt {len(gt)}")
    report = metrics.jf_video(pred, gt, tolerance=args.tolerance)
    out = Path(args.out) if args.out else Path("report.json")
    io.atomic_write_text(out, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"video mean J&F: {report.video_mean_jf:.6f}")
    return 0


def cmd_centroid_agree(args) -> int:
    def load_px(path):
        trajs = io.read_trajectory_csv(path, prefer="px")
        for t in trajs:
            if t.meta.get("units") == "nm":  # CSV had no pixel columns
                t.x = t.x / args.pixel_size - 0.5
                t.y = t.y / args.pixel_size - 0.5
        return trajs

    agreement = metrics.centroid_agreement(load_px(args.pred), load_px(args.ref),
                                           pixel_size=args.pixel_size)
    if args.out:
        lines = ["frame,pred_id,ref_id,distance_nm"]
        lines += [f"{f},{p},{r},{io.format_float(d)}"
                  for f, p, r, d in agreement.distances]
        io.atomic_write_text(Path(args.out), "\n".join(lines) + "\n")
    print(f"centroid distance (nm): median {agreement.median:.4g}, "
          f"q1 {agreement.q1:.4g}, q3 {agreement.q3:.4g}, "
          f"outliers {len(agreement.outliers)}")
    return 0


def cmd_print_config(args) -> int:
    cfg = cfgmod.preset_config(args.preset) if args.preset else cfgmod.normalize({})
    sys.stdout.write(cfgmod.dump_config(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lptrack", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic video dataset")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", help="named preset (see print-config --preset)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--threads", type=int, default=_default_threads())
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="link a mask sequence into trajectories")
    p.add_argument("masks", help="dataset directory or directory of mask_*.pgm")
    p.add_argument("--out", required=True, help="output trajectory CSV")
    p.add_argument("--gate", type=float, default=50.0, help="max match distance (px)")
    p.add_argument("--max-missed", type=int, default=5)
    p.add_argument("--min-area", type=int, default=4)
    p.add_argument("--pixel-size", type=float, help="nm per px (default: dataset meta)")
    p.add_argument("--dt", type=float, help="seconds per frame (default: dataset meta)")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("stats", help="trajectory statistics and plots")
    p.add_argument("trajectories", help="trajectory CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dt", type=float, help="seconds per frame (default 1)")
    p.add_argument("--pixel-size", type=float,
                   help="nm per px, to convert pixel-only CSVs")
    p.add_argument("--fit-lags", type=int, default=10)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--lag-frames", type=int, default=1)
    p.add_argument("--max-lag-fraction", type=float, default=0.25)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    p.add_argument("pred", help="predicted dataset or mask directory")
    p.add_argument("gt", help="ground-truth dataset or mask directory")
    p.add_argument("--tolerance", type=float,
                   help="boundary tolerance px (default: 0.8%% of diagonal)")
    p.add_argument("--out", help="report path (default report.json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("centroid-agree", help="centroid distances between two CSVs")
    p.add_argument("pred", help="predicted trajectory CSV")
    p.add_argument("ref", help="reference trajectory CSV")
    p.add_argument("--pixel-size", type=float, required=True, help="nm per px")
    p.add_argument("--out", help="distances CSV")
    p.set_defaults(func=cmd_centroid_agree)

    p = sub.add_parser("print-config", help="dump the defaulted config")
    p.add_argument("--preset", help="dump a named preset instead")
    p.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputError, InsufficientDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except LptrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
