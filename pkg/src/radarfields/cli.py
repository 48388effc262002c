"""Command line: simulate -> train -> eval -> export, plus the grid-mapping baseline.

Every subcommand writes a JSON manifest next to its main output recording the
argv, the inline configs, seeds, package versions and input file hashes;
``replay`` re-executes a run from its manifest alone.
"""
from __future__ import annotations

import argparse
import logging
import platform
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from . import io as rio
from .errors import ConfigError, RadarFieldsError
from .evaluation import extract_bev, extract_voxels, synthesize_frame
from .pipeline import DEMO_FILES, RunConfig, demo_json, evaluate, fit, grid_mapping_baseline, split
from .scene import SyntheticScene, simulate_sequence

log = logging.getLogger("radarfields")

MANIFEST_VERSION = 1


def _versions():
    import numba
    import scipy
    return {"radarfields": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def _manifest_path(out) -> Path:
    p = Path(out)
    return p / "manifest.json" if p.is_dir() else Path(str(p) + ".manifest.json")


def _write_manifest(command, argv, out, configs, seed, inputs):
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "command": command,
        "argv": list(argv),
        "seed": seed,
        "configs": configs,
        "inputs": {str(k): rio.file_sha256(v) for k, v in inputs.items()},
        "versions": _versions(),
    }
    rio.write_json(manifest, _manifest_path(out))


def _run_config(path) -> RunConfig:
    return RunConfig.from_dict(rio.load_json(path))


def _scene_for(args, extra):
    if getattr(args, "scene", None):
        return rio.load_scene(args.scene)
    if extra.get("scene") is not None:
        return SyntheticScene.from_dict(extra["scene"])
    return None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args, argv):
    scene = rio.load_scene(args.scene)
    traj = rio.load_trajectory(args.trajectory)
    radar = rio.load_radar_config(args.radar)
    frames = simulate_sequence(scene, traj, radar, args.supersamples, args.seed)
    extra = {"scene": scene.to_dict(), "trajectory": traj.to_dict(), "seed": args.seed,
             "supersamples": args.supersamples}
    rio.write_sequence(frames, args.out, radar, extra)
    _write_manifest("simulate", argv, args.out,
                    {"scene": scene.to_dict(), "trajectory": traj.to_dict(), "radar": radar.to_dict()},
                    args.seed, {})
    print(f"wrote {len(frames)} frames to {args.out}")


def cmd_train(args, argv):
    frames, radar, _ = rio.read_sequence(args.data)
    if radar is None:
        raise ConfigError("sequence file carries no radar config")
    run = _run_config(args.config)
    if args.seed is not None:
        run = run.with_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, history, train_idx, test_idx = fit(frames, radar, run)
    rio.save_checkpoint(model, out / "model.rfck",
                        {"run": run.to_dict(), "radar": radar.to_dict(),
                         "train_indices": train_idx, "test_indices": test_idx})
    rio.write_history_csv(history, out / "history.csv")
    _write_manifest("train", argv, out, {"run": run.to_dict()}, run.train.seed, {"data": args.data})
    print(f"trained {run.train.epochs} epochs; checkpoint {out / 'model.rfck'}")


def cmd_eval(args, argv):
    model, extra = rio.load_checkpoint(args.model)
    frames, radar, seq_extra = rio.read_sequence(args.data)
    run = RunConfig.from_dict(extra["run"])
    if radar is None:
        radar = rio.radar_config_from(extra["radar"])
    scene = _scene_for(args, seq_extra)
    report = evaluate(model, frames, radar, run, extra["train_indices"], extra["test_indices"], scene)
    rio.write_json(report, args.report)
    inputs = {"model": args.model, "data": args.data}
    if args.scene:
        inputs["scene"] = args.scene
    _write_manifest("eval", argv, args.report, {"run": run.to_dict()}, run.train.seed, inputs)
    gm = report["baseline"].get("grid_mapping", {})
    print(f"cd={report['cd']} rcd={report['rcd']} psnr={report['psnr']:.3f} rmse={report['rmse']:.4g}"
          f" | grid-mapping cd={gm.get('cd')} | nearest-frame psnr={report['baseline']['nearest_frame']['psnr']:.3f}")


def _pose_arg(value, data):
    """A frame index into --data, or a JSON file holding a 4x4 pose."""
    if value is None:
        raise ConfigError("--pose is required for this export")
    if value.lstrip("-").isdigit():
        if data is None:
            raise ConfigError("--pose as an index needs --data")
        frames, _, _ = rio.read_sequence(data)
        i = int(value)
        if not -len(frames) <= i < len(frames):
            raise ConfigError(f"pose index {i} outside 0..{len(frames) - 1}")
        return frames[i].pose
    pose = np.asarray(rio.load_json(value), dtype=float)
    if pose.shape != (4, 4):
        raise ConfigError("pose file must hold a 4x4 matrix")
    return pose


def cmd_export(args, argv):
    model, extra = rio.load_checkpoint(args.model)
    run = RunConfig.from_dict(extra["run"])
    radar = rio.radar_config_from(extra["radar"])
    inputs = {"model": args.model}
    if args.data:
        inputs["data"] = args.data
    bounds = None
    if args.data:
        _, _, seq_extra = rio.read_sequence(args.data)
        if seq_extra.get("scene") is not None:
            bounds = SyntheticScene.from_dict(seq_extra["scene"]).bounds
    if args.format == "bev":
        res = args.resolution or run.eval.bev_resolution
        pts = extract_bev(model, res, run.eval.height_band, run.eval.bev_threshold, bounds=bounds,
                          n_heights=run.eval.n_heights)
        rio.write_points_csv(pts, args.out)
        msg = f"{len(pts)} BEV points"
    elif args.format == "voxels":
        res = args.resolution or 0.5
        grid, origin = extract_voxels(model, res, bounds=bounds)
        rio.write_voxels(grid, origin, res, args.out)
        msg = f"voxel grid {grid.shape}"
    else:
        pose = _pose_arg(args.pose, args.data)
        if args.pose and not args.pose.lstrip("-").isdigit():
            inputs["pose"] = args.pose
        frame = synthesize_frame(model, pose, radar, S=run.eval.synth_supersamples, seed=run.eval.synth_seed,
                                 joint_sigma=run.train.joint_sigma, min_bin=run.train.min_bin)
        rio.write_sequence([frame], args.out, radar, {"synthesized": True})
        msg = "synthesized frame"
    _write_manifest("export", argv, args.out, {"run": run.to_dict()}, run.train.seed, inputs)
    print(f"wrote {msg} to {args.out}")


def cmd_baseline(args, argv):
    frames, radar, seq_extra = rio.read_sequence(args.data)
    if radar is None:
        raise ConfigError("sequence file carries no radar config")
    run = _run_config(args.config) if args.config else RunConfig()
    if args.resolution:
        d = run.to_dict()
        d["eval"]["bev_resolution"] = args.resolution
        run = RunConfig.from_dict(d)
    idx = list(range(len(frames)))
    if not args.all_frames:
        _, _, idx, _ = split(frames, run.train)
    scene = SyntheticScene.from_dict(seq_extra["scene"]) if seq_extra.get("scene") is not None else None
    gmap, pts = grid_mapping_baseline(frames, idx, radar, run, scene.bounds if scene else None)
    out = Path(args.out)
    rio.write_points_csv(pts, Path(str(out) + ".csv"))
    rio.write_voxels(gmap.log_odds[:, :, None], (*gmap.grid.origin, 0.0), gmap.resolution,
                     Path(str(out) + ".logodds.f32"))
    inputs = {"data": args.data}
    if args.config:
        inputs["config"] = args.config
    _write_manifest("baseline", argv, Path(str(out) + ".csv"), {"run": run.to_dict()}, None, inputs)
    print(f"grid map {gmap.grid.shape}, {len(pts)} occupied cells -> {out}.csv")


def cmd_init_demo(args, argv):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in DEMO_FILES:
        rio.write_json(demo_json(name), out / f"{name}.json")
    print(f"wrote demo configs ({', '.join(n + '.json' for n in DEMO_FILES)}) to {out}")


_CONFIG_FLAGS = {"simulate": {"--scene": "scene", "--trajectory": "trajectory", "--radar": "radar"},
                 "train": {"--config": "run"}, "baseline": {"--config": "run"}}


def cmd_replay(args, argv):
    """Re-run the manifest's argv with its inline configs materialised to temporary files."""
    manifest = rio.load_json(args.manifest)
    if manifest.get("manifest_version") != MANIFEST_VERSION:
        raise ConfigError("unsupported manifest version")
    old = list(manifest["argv"])
    command = old[0]
    with tempfile.TemporaryDirectory() as tmp:
        new = [command]
        i = 1
        flags = _CONFIG_FLAGS.get(command, {})
        configs = manifest["configs"]
        while i < len(old):
            tok = old[i]
            if tok in flags and i + 1 < len(old):
                p = Path(tmp) / f"{flags[tok]}.json"
                rio.write_json(configs[flags[tok]], p)
                new += [tok, str(p)]
                i += 2
                continue
            new.append(tok)
            i += 1
        for key, digest in manifest.get("inputs", {}).items():
            flag = "--" + key
            if flag in new:
                path = new[new.index(flag) + 1]
                if rio.file_sha256(path) != digest:
                    raise ConfigError(f"input {path} changed since the manifest was written")
        return main(new)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="radarfields", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a frame sequence from a synthetic scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--radar", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--supersamples", type=int, default=64)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit the fields to the training split of a sequence")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True, help="run config JSON (train/field/eval sections)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--seed", type=int, default=None, help="override the config's training seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics report for a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--scene", default=None, help="scene JSON (default: the one embedded in --data)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="BEV points, voxel grid or a synthesized frame")
    p.add_argument("--model", required=True)
    p.add_argument("--format", required=True, choices=("bev", "voxels", "frame"))
    p.add_argument("--out", required=True)
    p.add_argument("--pose", default=None, help="frame index into --data, or a JSON 4x4 pose file")
    p.add_argument("--data", default=None)
    p.add_argument("--resolution", type=float, default=None)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("baseline", help="log-odds grid mapping over the training split")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output prefix (<out>.csv, <out>.logodds.f32)")
    p.add_argument("--config", default=None, help="run config JSON (split and occupancy settings)")
    p.add_argument("--resolution", type=float, default=None)
    p.add_argument("--all-frames", action="store_true", help="map every frame instead of the training split")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("init-demo", help="write the bundled demo configs to a directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init_demo)

    p = sub.add_parser("replay", help="re-execute a run from its manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cmd_argv = [a for a in argv if a not in ("-v", "--verbose")]
    try:
        rc = args.func(args, cmd_argv)
    except (RadarFieldsError, OSError, KeyError) as exc:
        print(f"radarfields {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return int(rc or 0)


if __name__ == "__main__":
    sys.exit(main())
