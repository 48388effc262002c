"""End-to-end composition: simulate -> split -> train -> evaluate against the oracle and baselines.

Shared by the command line and the acceptance tests so both run exactly the
same protocol.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from dataclasses import field as dc_field
from importlib import resources
from typing import Any

import numpy as np

from .errors import ConfigError, EmptySet
from .evaluation import chamfer, extract_bev, frame_metrics, nearest_frame_baseline, observed_mask, synthesize_frame
from .fields import FieldConfig, FieldModel
from .occupancy import grid_map_accumulate, grid_map_to_points
from .radar import RadarConfig
from .scene import SyntheticScene, Trajectory, ground_truth_bev, simulate_sequence
from .training import TrainConfig, split_frames, train

log = logging.getLogger(__name__)


@dataclass
class EvalConfig:
    bev_resolution: float = 0.25
    height_band: tuple = (0.25, 2.0)
    bev_threshold: float = 0.5
    n_heights: int = 3
    synth_supersamples: int = 64
    synth_seed: int = 0
    observed_only: bool = True  # compare BEV sets only where a training beam reached

    def __post_init__(self):
        self.height_band = tuple(float(v) for v in self.height_band)
        if not self.bev_resolution > 0:
            raise ConfigError("bev_resolution must be positive")
        if len(self.height_band) != 2 or not self.height_band[0] < self.height_band[1]:
            raise ConfigError("height_band must be (low, high) with low < high")
        if self.n_heights < 1 or self.synth_supersamples < 1:
            raise ConfigError("n_heights and synth_supersamples must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["height_band"] = list(self.height_band)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class RunConfig:
    """Everything a training + evaluation run needs besides the data."""

    train: TrainConfig = dc_field(default_factory=TrainConfig)
    field: FieldConfig = dc_field(default_factory=FieldConfig)
    eval: EvalConfig = dc_field(default_factory=EvalConfig)

    def to_dict(self) -> dict[str, Any]:
        return {"train": self.train.to_dict(), "field": self.field.to_dict(), "eval": self.eval.to_dict()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("run config must be a JSON object")
        unknown = set(d) - {"train", "field", "eval"}
        if unknown:
            raise ConfigError(f"unknown run config sections: {sorted(unknown)}")
        try:
            return cls(TrainConfig.from_dict(d.get("train", {})),
                       FieldConfig.from_dict(d.get("field", {})),
                       EvalConfig.from_dict(d.get("eval", {})))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def with_seed(self, seed: int) -> "RunConfig":
        d = self.to_dict()
        d["train"]["seed"] = int(seed)
        return RunConfig.from_dict(d)


# ---------------------------------------------------------------------------
# bundled demo
# ---------------------------------------------------------------------------

DEMO_FILES = ("scene", "trajectory", "radar", "run")


def demo_json(name: str) -> dict:
    if name not in DEMO_FILES:
        raise KeyError(name)
    return json.loads(resources.files("radarfields").joinpath(f"data/demo_{name}.json").read_text())


def demo_inputs():
    """(scene, trajectory, radar config, run config, simulation seed/supersamples) of the bundled demo."""
    sc = demo_json("scene")
    sim = sc.pop("simulation", {})
    return (SyntheticScene.from_dict(sc), Trajectory.from_dict(demo_json("trajectory")),
            RadarConfig.from_dict(demo_json("radar")), RunConfig.from_dict(demo_json("run")), sim)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def simulate(scene: SyntheticScene, trajectory: Trajectory, radar: RadarConfig,
             seed: int = 0, supersamples: int = 64):
    return simulate_sequence(scene, trajectory, radar, supersamples, seed)


def split(frames, tcfg: TrainConfig):
    """(train frames, test frames, train indices, test indices)."""
    _, _, test_idx = split_frames(frames, tcfg.split_fraction, tcfg.split_position)
    held = set(test_idx)
    train_idx = [i for i in range(len(frames)) if i not in held]
    return [frames[i] for i in train_idx], [frames[i] for i in test_idx], train_idx, test_idx


def fit(frames, radar: RadarConfig, run: RunConfig, callback=None):
    """Train on the training split. Returns (model, history, train indices, test indices)."""
    train_f, _, train_idx, test_idx = split(frames, run.train)
    model = FieldModel(run.field, seed=run.train.seed)
    result = train(model, train_f, radar, run.train, callback)
    return model, result.history, train_idx, test_idx


def bev_origin(frames, train_idx) -> np.ndarray:
    """Reference point for range-normalised chamfer: centroid of the training sensor positions."""
    return np.mean([frames[i].pose[:2, 3] for i in train_idx], axis=0)


def _chamfer_entry(points, gt, origin):
    try:
        cd, rcd, parts = chamfer(points, gt, origin=origin, return_parts=True)
    except EmptySet:
        return {"cd": None, "rcd": None, "n_points": int(len(points)), "empty": True}
    return {"cd": cd, "rcd": rcd, "n_points": int(len(points)), **parts}


def grid_mapping_baseline(frames, train_idx, radar: RadarConfig, run: RunConfig, bounds):
    gmap = grid_map_accumulate([frames[i] for i in train_idx], run.eval.bev_resolution, radar,
                               bounds=bounds, params=run.train.occupancy)
    return gmap, grid_map_to_points(gmap)


def evaluate(model: FieldModel, frames, radar: RadarConfig, run: RunConfig, train_idx, test_idx,
             scene: SyntheticScene | None = None) -> dict[str, Any]:
    """Metrics report: BEV chamfer (needs the scene oracle) and held-out frame synthesis.

    Both BEV rasters (model and grid-mapping baseline) cover the scene bounds
    when a scene is given, else the field bounds.
    """
    ev = run.eval
    bounds = scene.bounds if scene is not None else model.cfg.hash.bounds
    report: dict[str, Any] = {"train_indices": list(train_idx), "test_indices": list(test_idx)}

    per_frame = []
    for i in test_idx:
        f = frames[i]
        syn = synthesize_frame(model, f.pose, radar, S=ev.synth_supersamples, seed=ev.synth_seed,
                               joint_sigma=run.train.joint_sigma, min_bin=run.train.min_bin)
        rmse, psnr = frame_metrics(syn, f)
        nn = nearest_frame_baseline([frames[j] for j in train_idx], f.pose)
        b_rmse, b_psnr = frame_metrics(nn, f)
        per_frame.append({"index": i, "rmse": rmse, "psnr": psnr,
                          "baseline_rmse": b_rmse, "baseline_psnr": b_psnr})
    report["rmse"] = float(np.mean([p["rmse"] for p in per_frame]))
    report["psnr"] = float(np.mean([p["psnr"] for p in per_frame]))
    report["per_frame"] = per_frame

    baseline: dict[str, Any] = {
        "nearest_frame": {"rmse": float(np.mean([p["baseline_rmse"] for p in per_frame])),
                          "psnr": float(np.mean([p["baseline_psnr"] for p in per_frame]))},
    }
    if scene is not None:
        origin = bev_origin(frames, train_idx)
        gt = ground_truth_bev(scene, ev.bev_resolution, ev.height_band)
        pts = extract_bev(model, ev.bev_resolution, ev.height_band, ev.bev_threshold,
                          bounds=scene.bounds, n_heights=ev.n_heights)
        _, gm_pts = grid_mapping_baseline(frames, train_idx, radar, run, bounds)
        if ev.observed_only:
            # supervised annulus around every training pose, shared by all three sets
            sensors = [frames[i].pose[:2, 3] for i in train_idx]
            lo_r = run.train.min_bin * radar.range_resolution
            gt, pts, gm_pts = (q[observed_mask(q, sensors, radar.max_range, lo_r)] for q in (gt, pts, gm_pts))
        rf = _chamfer_entry(pts, gt, origin)
        report["cd"], report["rcd"] = rf["cd"], rf["rcd"]
        report["bev"] = rf
        baseline["grid_mapping"] = _chamfer_entry(gm_pts, gt, origin)
        report["bev_origin"] = [float(v) for v in origin]
        report["n_gt_points"] = int(len(gt))
    else:
        report["cd"] = report["rcd"] = None
    report["baseline"] = baseline
    return report


def run_pipeline(scene: SyntheticScene, trajectory: Trajectory, radar: RadarConfig, run: RunConfig,
                 sim_seed: int = 0, supersamples: int = 64, callback=None):
    """simulate -> fit -> evaluate. Returns (report, model, history, frames)."""
    frames = simulate(scene, trajectory, radar, sim_seed, supersamples)
    model, history, train_idx, test_idx = fit(frames, radar, run, callback)
    report = evaluate(model, frames, radar, run, train_idx, test_idx, scene)
    return report, model, history, frames
