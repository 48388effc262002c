"""Losses, per-step batch pipeline and the training loop.

One step: pick N random (frame, beam) pairs, super-sample S rays per beam,
evaluate the fields at every range bin of every ray, merge rays with the
radiation-pattern weights, apply the radar equation and compare with the
measured power. Regularisers pull the merged occupancy toward the
inverse-sensor estimate of the measured frame.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .encodings import CoarseToFineSchedule, active_levels
from .errors import ConfigError, DegenerateSplit, ShapeMismatch
from .fields import Adam, FieldModel, zero_grads
from .geometry import sensor_directions
from .occupancy import OccupancyParams, estimate_occupancy
from .radar import RadarConfig, RadarFrame
from .sampling import draw_offsets, normalized_weights

log = logging.getLogger(__name__)

ALPHA_EPS = 1e-6


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _check_shapes(a, b):
    if np.shape(a) != np.shape(b):
        raise ShapeMismatch(f"{np.shape(a)} vs {np.shape(b)}")


def loss_w(pred, target, norm: str = "l1") -> float:
    """Per-cell mean reconstruction error of predicted power."""
    _check_shapes(pred, target)
    diff = np.asarray(pred, float) - np.asarray(target, float)
    if norm == "l1":
        return float(np.mean(np.abs(diff)))
    if norm == "l2":
        return float(np.mean(diff * diff))
    raise ConfigError(f"unknown norm {norm!r}")


def loss_w_grad(pred, target, norm: str = "l1") -> np.ndarray:
    diff = np.asarray(pred, float) - np.asarray(target, float)
    n = diff.size
    if norm == "l1":
        return np.sign(diff) / n
    return 2.0 * diff / n


def loss_r(alpha, occ) -> float:
    """mean of occ * (log occ - log alpha), with 0 log 0 = 0 and alpha clamped at 1e-6."""
    _check_shapes(alpha, occ)
    a = np.maximum(np.asarray(alpha, float), ALPHA_EPS)
    o = np.asarray(occ, float)
    o_log_o = np.where(o > 0, o * np.log(np.where(o > 0, o, 1.0)), 0.0)
    return float(np.mean(o_log_o - o * np.log(a)))


def loss_r_grad(alpha, occ) -> np.ndarray:
    a = np.asarray(alpha, float)
    o = np.asarray(occ, float)
    return np.where(a > ALPHA_EPS, -o / np.maximum(a, ALPHA_EPS), 0.0) / a.size


def _class_masks(occ):
    o = np.asarray(occ, float)
    return o > 0.5, o < 0.5


def loss_p(alpha, occ) -> float:
    """Population std of alpha over occupied cells plus over free cells."""
    _check_shapes(alpha, occ)
    a = np.asarray(alpha, float)
    total = 0.0
    for m in _class_masks(occ):
        # a constant class is exactly zero, not round-off
        if m.sum() > 1 and np.ptp(a[m]) > 0:
            total += float(a[m].std())
    return total


def loss_p_grad(alpha, occ) -> np.ndarray:
    a = np.asarray(alpha, float)
    g = np.zeros_like(a)
    for m in _class_masks(occ):
        n = m.sum()
        if n > 1:
            vals = a[m]
            sd = vals.std() if np.ptp(vals) > 0 else 0.0
            if sd > 0:
                g[m] = (vals - vals.mean()) / (n * sd)
    return g


# ---------------------------------------------------------------------------
# configs
# ---------------------------------------------------------------------------

@dataclass
class LossWeights:
    eta_w: float = 1.0
    eta_r: float = 0.1
    eta_p: float = 0.01

    def __post_init__(self):
        if min(self.eta_w, self.eta_r, self.eta_p) < 0 or not self.eta_w > 0:
            raise ConfigError("loss weights must be >= 0 with eta_w > 0")


@dataclass
class TrainConfig:
    epochs: int = 300
    steps_per_epoch: int = 5
    beams_per_step: int = 16
    supersamples: int = 16
    learning_rate: float = 1e-2
    lr_decay: float = 0.33
    lr_milestones: tuple = (0.5, 0.75)
    mlp_lr_scale: float = 1.0  # MLP learning rate relative to the hash tables
    warmup_epochs: int = 0  # linear ramp of the learning rate over the first epochs
    loss_weights: LossWeights = field(default_factory=LossWeights)
    schedule_floor: float = 0.4
    schedule_span: float = 0.6
    split_fraction: float = 0.2
    split_position: float = 0.5
    seed: int = 0
    min_bin: int = 1  # first supervised range bin; bins closer than this are a blind zone
    loss_norm: str = "l1"
    joint_sigma: bool = False
    occupancy: OccupancyParams = field(default_factory=OccupancyParams)

    def __post_init__(self):
        if self.epochs < 1 or self.steps_per_epoch < 1:
            raise ConfigError("epochs and steps_per_epoch must be >= 1")
        if not 0 < self.split_fraction < 1:
            raise ConfigError("split_fraction must lie in (0, 1)")
        if self.beams_per_step < 1 or self.supersamples < 1:
            raise ConfigError("beams_per_step and supersamples must be >= 1")
        if self.warmup_epochs < 0:
            raise ConfigError("warmup_epochs must be >= 0")
        if self.min_bin < 1:
            raise ConfigError("min_bin must be >= 1")
        if self.loss_norm not in ("l1", "l2"):
            raise ConfigError("loss_norm must be 'l1' or 'l2'")
        self.lr_milestones = tuple(self.lr_milestones)

    def schedule(self) -> CoarseToFineSchedule:
        return CoarseToFineSchedule(max(self.epochs - 1, 1), self.schedule_floor, self.schedule_span)

    def lr_at(self, epoch: int) -> float:
        passed = sum(1 for m in self.lr_milestones if epoch >= m * self.epochs)
        ramp = min(1.0, (epoch + 1) / self.warmup_epochs) if self.warmup_epochs > 0 else 1.0
        return self.learning_rate * self.lr_decay ** passed * ramp

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["lr_milestones"] = list(self.lr_milestones)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        d = dict(d)
        if "loss_weights" in d:
            d["loss_weights"] = LossWeights(**d["loss_weights"])
        if "occupancy" in d:
            d["occupancy"] = OccupancyParams(**d["occupancy"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# batch pipeline
# ---------------------------------------------------------------------------

def predictable_bins(cfg: RadarConfig, min_bin: int = 1) -> np.ndarray:
    """Bins with positive range; bin 0 sits on the sensor and is never predicted."""
    if not 1 <= min_bin < cfg.n_bins:
        raise ConfigError(f"min_bin {min_bin} outside [1, {cfg.n_bins})")
    return np.arange(min_bin, cfg.n_bins)


@dataclass
class Batch:
    poses: np.ndarray      # (N, 4, 4)
    azimuths: np.ndarray   # (N,) sensor-frame beam centres
    a: np.ndarray          # (N, S)
    e: np.ndarray          # (N, S)
    bins: np.ndarray       # (B,)
    target: np.ndarray | None = None  # (N, B) measured power
    occ: np.ndarray | None = None     # (N, B) occupancy estimate


@dataclass
class Prediction:
    power: np.ndarray       # (N, B)
    alpha: np.ndarray       # (N, B) merged occupancy
    rho_gamma: np.ndarray   # (N, B) merged reflectance
    cache: Any = None


def make_batch(poses, azimuths, cfg: RadarConfig, S: int, rng, bins=None) -> Batch:
    poses = np.asarray(poses, float).reshape(-1, 4, 4)
    azimuths = np.asarray(azimuths, float).reshape(-1)
    a, e = draw_offsets(azimuths.shape[0], cfg, S, rng)
    return Batch(poses, azimuths, a, e, predictable_bins(cfg) if bins is None else np.asarray(bins))


def _ray_geometry(batch: Batch, cfg: RadarConfig):
    dirs = sensor_directions(batch.azimuths[:, None] + batch.a, batch.e)         # (N,S,3)
    dirs = np.einsum("nij,nsj->nsi", batch.poses[:, :3, :3], dirs)
    ranges = batch.bins * cfg.range_resolution
    pts = batch.poses[:, None, None, :3, 3] + dirs[:, :, None, :] * ranges[None, None, :, None]
    return dirs, ranges, pts


def forward_batch(model: FieldModel, batch: Batch, cfg: RadarConfig, active: int | None = None,
                  joint_sigma: bool = False) -> Prediction:
    """Merged per-bin occupancy, reflectance and power for every beam of ``batch``.

    Sample points outside the field bounds contribute zero occupancy and reflectance.
    """
    dirs, ranges, pts = _ray_geometry(batch, cfg)
    N, S, B = pts.shape[:3]
    inside = model.cfg.hash.contains(pts)
    view = np.broadcast_to(dirs[:, :, None, :], pts.shape)
    alpha = np.zeros((N, S, B), dtype=model.dtype)
    rg = np.zeros((N, S, B), dtype=model.dtype)
    fcache = None
    if inside.any():
        a_in, rg_in, _, fcache = model.forward(pts[inside], view[inside], active, check=False)
        alpha[inside] = a_in
        rg[inside] = rg_in
    w = normalized_weights(batch.a, batch.e, cfg)                                 # (N,S)
    k_b = cfg.power_constant / ranges ** 4
    alpha_bar = np.einsum("ns,nsb->nb", w, alpha)
    rg_bar = np.einsum("ns,nsb->nb", w, rg)
    if joint_sigma:
        power = k_b * np.einsum("ns,nsb->nb", w, alpha * rg)
    else:
        power = k_b * alpha_bar * rg_bar
    cache = dict(inside=inside, alpha=alpha, rg=rg, w=w, k_b=k_b, fcache=fcache, joint=joint_sigma,
                 alpha_bar=alpha_bar, rg_bar=rg_bar)
    return Prediction(power, alpha_bar, rg_bar, cache)


def backward_batch(model: FieldModel, pred: Prediction, g_power, g_alpha_bar, grads=None):
    """Chain dL/dP, dL/d(alpha_bar) back to every model parameter."""
    c = pred.cache
    if grads is None:
        grads = zero_grads(model)
    w, k_b = c["w"], c["k_b"]
    g_power = np.asarray(g_power, float)
    g_ab = np.asarray(g_alpha_bar, float).copy()
    if c["joint"]:
        g_sig = g_power * k_b                                                     # (N,B)
        g_alpha = w[:, :, None] * g_sig[:, None, :] * c["rg"]
        g_rg = w[:, :, None] * g_sig[:, None, :] * c["alpha"]
        g_alpha += w[:, :, None] * g_ab[:, None, :]
    else:
        g_ab += g_power * k_b * c["rg_bar"]
        g_rgb = g_power * k_b * c["alpha_bar"]
        g_alpha = w[:, :, None] * g_ab[:, None, :]
        g_rg = w[:, :, None] * g_rgb[:, None, :]
    inside = c["inside"]
    if c["fcache"] is not None:
        model.backward(c["fcache"], g_alpha[inside], g_rg[inside], grads)
    return grads


def batch_losses(pred: Prediction, batch: Batch, weights: LossWeights, norm: str = "l1"):
    """(dict of loss values, dL/dP, dL/d alpha_bar) for the weighted total loss."""
    lw = loss_w(pred.power, batch.target, norm)
    lr = loss_r(pred.alpha, batch.occ)
    lp = loss_p(pred.alpha, batch.occ)
    total = weights.eta_w * lw + weights.eta_r * lr + weights.eta_p * lp
    g_p = weights.eta_w * loss_w_grad(pred.power, batch.target, norm)
    g_a = np.zeros_like(pred.alpha)
    if weights.eta_r:
        g_a += weights.eta_r * loss_r_grad(pred.alpha, batch.occ)
    if weights.eta_p:
        g_a += weights.eta_p * loss_p_grad(pred.alpha, batch.occ)
    return {"L_W": lw, "L_R": lr, "L_P": lp, "total": total}, g_p, g_a


def total_loss(model, batch, cfg, weights, active=None, norm="l1", joint_sigma=False) -> float:
    pred = forward_batch(model, batch, cfg, active, joint_sigma)
    return batch_losses(pred, batch, weights, norm)[0]["total"]


def loss_and_grads(model, batch, cfg, weights, active=None, norm="l1", joint_sigma=False):
    pred = forward_batch(model, batch, cfg, active, joint_sigma)
    losses, g_p, g_a = batch_losses(pred, batch, weights, norm)
    return losses, backward_batch(model, pred, g_p, g_a)


def predict_power(model: FieldModel, pose, beam_azimuth: float, bins, cfg: RadarConfig, S: int,
                  active=None, rng=None, joint_sigma: bool = False) -> Prediction:
    """Predicted (power, alpha, rho_gamma) at ``bins`` for one beam of a sensor at ``pose``."""
    rng = np.random.default_rng(rng)
    batch = make_batch(pose, [beam_azimuth], cfg, S, rng, bins=bins)
    pred = forward_batch(model, batch, cfg, active, joint_sigma)
    return Prediction(pred.power[0], pred.alpha[0], pred.rho_gamma[0])


# ---------------------------------------------------------------------------
# data split and loop
# ---------------------------------------------------------------------------

def split_frames(frames: Sequence, split_fraction: float = 0.2, position: float = 0.5):
    """Withhold one consecutive block of round(fraction * n) frames.

    ``position`` in [0, 1] places the block's centre along the sequence.
    Returns (train, test, test_indices).
    """
    if not 0 < split_fraction < 1:
        raise DegenerateSplit("split_fraction must lie in (0, 1)")
    n = len(frames)
    k = int(round(split_fraction * n))
    if k < 1 or k >= n:
        raise DegenerateSplit(f"cannot withhold {k} of {n} frames")
    start = int(round(position * n - k / 2.0))
    start = min(max(start, 0), n - k)
    test_idx = list(range(start, start + k))
    train = [f for i, f in enumerate(frames) if not start <= i < start + k]
    test = [frames[i] for i in test_idx]
    return train, test, test_idx


@dataclass
class TrainResult:
    model: FieldModel
    history: list   # per-epoch dicts: epoch, L_W, L_R, L_P, total


def train(model: FieldModel, frames: Sequence[RadarFrame], cfg: RadarConfig, tcfg: TrainConfig,
          callback=None) -> TrainResult:
    """Fit ``model`` in place to ``frames`` (already the training split)."""
    frames = list(frames)
    if len(frames) < 2:
        raise DegenerateSplit("need at least two training frames")
    rng = np.random.default_rng(tcfg.seed)
    bins = predictable_bins(cfg, tcfg.min_bin)
    poses = np.stack([f.pose for f in frames])
    powers = np.stack([f.power.astype(np.float64)[:, bins] for f in frames])
    occs = np.stack([estimate_occupancy(f, None, tcfg.occupancy).probabilities[:, bins] for f in frames])
    az = frames[0].azimuths
    sched = tcfg.schedule()
    params = model.parameters()
    opt = Adam(lr=tcfg.learning_rate,
               lr_scale={k: tcfg.mlp_lr_scale for k in params if k != "hash.tables"})
    history = []
    n_lev = model.cfg.hash.n_levels
    for epoch in range(tcfg.epochs):
        act = active_levels(min(epoch, sched.max_epoch), sched, n_lev)
        opt.lr = tcfg.lr_at(epoch)
        acc = {"L_W": 0.0, "L_R": 0.0, "L_P": 0.0, "total": 0.0}
        for _ in range(tcfg.steps_per_epoch):
            fi = rng.integers(0, len(frames), size=tcfg.beams_per_step)
            bi = rng.integers(0, az.shape[0], size=tcfg.beams_per_step)
            batch = make_batch(poses[fi], az[bi], cfg, tcfg.supersamples, rng, bins)
            batch.target = powers[fi, bi]
            batch.occ = occs[fi, bi]
            losses, grads = loss_and_grads(model, batch, cfg, tcfg.loss_weights, act,
                                           tcfg.loss_norm, tcfg.joint_sigma)
            opt.step(params, grads)
            for k in acc:
                acc[k] += losses[k] / tcfg.steps_per_epoch
        history.append({"epoch": epoch, **acc})
        if callback is not None:
            callback(epoch, history[-1], model)
        if epoch % max(1, tcfg.epochs // 10) == 0:
            log.info("epoch %d active=%d %s", epoch, act, {k: round(v, 6) for k, v in acc.items()})
    return TrainResult(model, history)
