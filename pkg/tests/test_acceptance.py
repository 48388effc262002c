"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one ``PASS``/``FAIL`` line (shown in the terminal summary).
Criteria 6-8 share one set of demo training runs: three seeds of the full
model plus the S=1 ablation for each seed.
"""
import json
import math
import os
import time

import numpy as np
import pytest

from radarfields import io as rio
from radarfields.cli import main as cli_main
from radarfields.encodings import CoarseToFineSchedule, active_levels
from radarfields.fields import FieldModel
from radarfields.geometry import pose_matrix, sensor_directions
from radarfields.occupancy import OccupancyParams, estimate_occupancy
from radarfields.pipeline import RunConfig, demo_inputs, demo_json, run_pipeline
from radarfields.radar import RadarConfig, RadarFrame, RadiationPattern
from radarfields.sampling import BeamSampleSet, aggregate_sigma, draw_samples
from radarfields.scene import ScenePrimitive, SyntheticScene, simulate_frame, simulate_sequence
from radarfields.training import (LossWeights, batch_losses, forward_batch, loss_and_grads, loss_p, loss_r, loss_w,
                                  make_batch, predictable_bins, total_loss)

from conftest import ACCEPTANCE_LINES, randomize, tiny_field_config

SEEDS = (3, 4, 5)  # not used while choosing the demo settings
TRAIN_BUDGET_S = 30 * 60


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# ---------------------------------------------------------------------------

def test_criterion_1_signal_formation():
    _, _, radar, _, _ = demo_inputs()
    R = 10.0
    beam = 30
    az = radar.beam_azimuths()[beam]
    target = ScenePrimitive("cylinder", (R * math.cos(az), R * math.sin(az), 1.0), (0.05, 0.05, 0.5), 1.0, 0.0)
    scene = SyntheticScene([target], ((-15, -15, -1), (15, 15, 3)))
    pose = pose_matrix([0.0, 0.0, 1.0])
    simulate_frame(scene, pose, RadarConfig(n_bins=8, n_azimuth=2), 2)  # load compiled kernels
    t = time.perf_counter()
    frame = simulate_frame(scene, pose, radar, 64, rng_seed=0)
    dt = time.perf_counter() - t
    got = int(np.argmax(frame.power[beam]))
    want = int(round(R / radar.range_resolution))
    ok = abs(got - want) <= 1 and dt < 1.0 and int(np.unravel_index(frame.power.argmax(), frame.power.shape)[0]) == beam
    assert record(1, ok, f"argmax bin {got}, expected {want} +-1, {dt * 1e3:.0f} ms")


def test_criterion_2_gradient_fidelity():
    t = time.perf_counter()
    cfg = RadarConfig(n_bins=48, n_azimuth=8, gain=math.sqrt((4 * math.pi) ** 3))
    model = randomize(FieldModel(tiny_field_config(width=8), seed=0), seed=1)
    rng = np.random.default_rng(0)
    poses = np.stack([pose_matrix((0.3, -0.2, 1.0), 0.4), pose_matrix((-1.0, 0.5, 1.2), 2.0)])
    batch = make_batch(poses, np.array([0.1, 2.5]), cfg, 4, rng, predictable_bins(cfg, 6))
    batch.target = rng.uniform(0, 0.3, batch.occ.shape if batch.occ is not None else (2, batch.bins.size))
    batch.occ = rng.choice([0.1, 0.5, 0.9], (2, batch.bins.size))
    W = LossWeights(1.0, 0.1, 0.05)
    _, grads = loss_and_grads(model, batch, cfg, W, None, "l2")
    worst = {}
    for name, p in model.parameters().items():
        g = grads[name]
        cls = name.split(".")[0] + ("" if name == "hash.tables" else "." + name.split(".")[1])
        for fi in np.argsort(-np.abs(g).ravel())[:5]:
            i = np.unravel_index(fi, p.shape)
            old = p[i]
            h = 1e-6 * max(1.0, abs(old))
            p[i] = old + h
            lp = total_loss(model, batch, cfg, W, None, "l2")
            p[i] = old - h
            lm = total_loss(model, batch, cfg, W, None, "l2")
            p[i] = old
            fd = (lp - lm) / (2 * h)
            err = abs(fd - g[i]) / max(abs(fd), abs(g[i]), 1e-12)
            worst[cls] = max(worst.get(cls, 0.0), err)
    dt = time.perf_counter() - t
    all_nonzero = all(np.any(grads[k] != 0) for k in grads)
    ok = max(worst.values()) < 1e-3 and dt < 30 and all_nonzero
    assert record(2, ok, f"worst relative error {max(worst.values()):.2e} over {len(worst)} parameter arrays, {dt:.1f} s")


def test_criterion_3_aggregation():
    uniform = RadarConfig(azimuth_pattern=RadiationPattern("uniform"), elevation_pattern=RadiationPattern("uniform"))
    cfg = RadarConfig()
    rng = np.random.default_rng(0)
    worst_mean = worst_perm = worst_hom = 0.0
    for _ in range(1000):
        S = int(rng.integers(1, 33))
        s = draw_samples(rng.uniform(0, 2 * math.pi), cfg, S, rng)
        sig = rng.uniform(0, 10, S)
        worst_mean = max(worst_mean, abs(aggregate_sigma(sig, s, uniform) - sig.mean()))
        agg = aggregate_sigma(sig, s, cfg)
        p = rng.permutation(S)
        perm = BeamSampleSet(s.azimuth, s.a[p], s.e[p], s.directions[p])
        worst_perm = max(worst_perm, abs(aggregate_sigma(sig[p], perm, cfg) - agg))
        c = rng.uniform(0.1, 10)
        worst_hom = max(worst_hom, abs(aggregate_sigma(c * sig, s, cfg) - c * agg) / max(1.0, c * agg))
    # weighted hand case: gains {1/3, 1}, sigma {0, 4} -> 3
    h = 0.1
    wcfg = RadarConfig(azimuth_pattern=RadiationPattern("gaussian", h), elevation_pattern=RadiationPattern("uniform"),
                       half_fov_azimuth=0.5)
    a1 = h * math.sqrt(math.log(3.0) / (4 * math.log(2.0)))
    hand = aggregate_sigma([0.0, 4.0], BeamSampleSet(0.0, np.array([a1, 0.0]), np.zeros(2),
                                                     sensor_directions(np.array([a1, 0.0]), np.zeros(2))), wcfg)
    ok = worst_mean <= 1e-12 and worst_perm <= 1e-12 and worst_hom <= 1e-12 and abs(hand - 3.0) <= 1e-12
    assert record(3, ok, f"mean err {worst_mean:.1e}, permutation {worst_perm:.1e}, homogeneity {worst_hom:.1e}, "
                         f"hand case {hand:.15g}")


def test_criterion_4_schedule():
    sched = CoarseToFineSchedule(1000)
    counts = [active_levels(e, sched, 16) for e in range(1001)]
    mono = all(b >= a for a, b in zip(counts, counts[1:]))
    ok = counts[0] == 7 and counts[-1] == 15 and mono
    assert record(4, ok, f"epoch 0 -> {counts[0]}, max_epoch -> {counts[-1]}, non-decreasing={mono}")


def test_criterion_5_loss_identities(monkeypatch):
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, (4, 9))
    occ = rng.choice([0.0, 0.1, 0.5, 0.9, 1.0], (4, 9))
    a_const = np.where(occ > 0.5, 0.8, np.where(occ < 0.5, 0.2, 0.4))
    ids = [bool(loss_w(x, x) == 0), bool(loss_r(np.clip(occ, 1e-6, 1), occ) == 0), bool(loss_p(a_const, occ) == 0)]

    cfg = RadarConfig(n_bins=32, n_azimuth=8)
    model = randomize(FieldModel(tiny_field_config(), seed=0))
    batch = make_batch(pose_matrix((0, 0, 1))[None].repeat(3, 0), np.array([0.2, 1.4, 3.0]), cfg, 4, rng)
    batch.target = rng.uniform(0, 1, (3, batch.bins.size))
    batch.occ = rng.choice([0.1, 0.5, 0.9], (3, batch.bins.size))
    pred = forward_batch(model, batch, cfg)
    checks = [bool(np.all(batch_losses(pred, batch, LossWeights(1.0, 0.0, 0.0))[2] == 0))]
    # a term weighted by zero contributes nothing: poisoning its gradient must not change the result
    import radarfields.training as tr
    for w, fn in ((LossWeights(1.0, 0.0, 0.3), "loss_r_grad"), (LossWeights(1.0, 0.3, 0.0), "loss_p_grad")):
        ref = loss_and_grads(model, batch, cfg, w)[1]
        with monkeypatch.context() as mp:
            mp.setattr(tr, fn, lambda a, o: np.full(np.shape(a), np.nan))
            got = loss_and_grads(model, batch, cfg, w)[1]
        checks.append(all(np.array_equal(ref[k], got[k]) for k in ref))
    ok = all(ids) and all(checks)
    assert record(5, ok, f"identities {ids}, eta=0 gradient checks {checks}")


# ---------------------------------------------------------------------------
# end-to-end runs on the demo scene

_RUNS = {}


def _demo_run(seed, supersamples=None):
    key = (seed, supersamples)
    if key not in _RUNS:
        scene, traj, radar, run, sim = demo_inputs()
        run = run.with_seed(seed)
        if supersamples is not None:
            d = run.to_dict()
            # the ablation drops super-sampling in both training and rendering
            d["train"]["supersamples"] = supersamples
            d["eval"]["synth_supersamples"] = supersamples
            run = RunConfig.from_dict(d)
        # the budget is CPU time; wall time depends on how loaded the host is
        t = time.process_time()
        report, _, _, _ = run_pipeline(scene, traj, radar, run, sim["seed"], sim["supersamples"])
        _RUNS[key] = (report, time.process_time() - t)
    return _RUNS[key]


@pytest.mark.slow
def test_criterion_6_reconstruction_beats_grid_mapping():
    parts, ok = [], True
    for seed in SEEDS:
        rep, dt = _demo_run(seed)
        rf = rep["cd"]
        gm = rep["baseline"]["grid_mapping"]["cd"]
        seed_ok = rf is not None and gm is not None and rf < gm and dt <= TRAIN_BUDGET_S
        ok &= seed_ok
        parts.append(f"seed {seed}: RF {rf if rf is None else round(rf, 4)} vs grid map "
                     f"{gm if gm is None else round(gm, 4)} ({dt / 60:.1f} CPU min)")
    assert record(6, ok, "; ".join(parts))


@pytest.mark.slow
def test_criterion_7_supersampling_ablation():
    parts, ok = [], True
    for seed in SEEDS:
        full, _ = _demo_run(seed)
        abl, _ = _demo_run(seed, supersamples=1)
        seed_ok = full["psnr"] > abl["psnr"]
        ok &= seed_ok
        parts.append(f"seed {seed}: S=16 {full['psnr']:.2f} dB vs S=1 {abl['psnr']:.2f} dB")
    assert record(7, ok, "; ".join(parts))


@pytest.mark.slow
def test_criterion_8_novel_view_synthesis():
    parts, ok = [], True
    for seed in SEEDS:
        rep, _ = _demo_run(seed)
        nn = rep["baseline"]["nearest_frame"]["psnr"]
        ok &= rep["psnr"] > nn
        parts.append(f"seed {seed}: {rep['psnr']:.2f} dB vs nearest frame {nn:.2f} dB")
    assert record(8, ok, "; ".join(parts))


# ---------------------------------------------------------------------------

def test_criterion_9_occupancy_estimator():
    P = OccupancyParams()
    pw = np.zeros((3, 12))
    pw[1, 5] = 4.0
    est = estimate_occupancy(RadarFrame(np.eye(4), np.zeros(3), pw), 1.0).probabilities
    hand = (np.all(est[1, :5] == P.p_free) and est[1, 5] == P.p_occ and np.all(est[1, 6:] == 0.5)
            and np.all(est[[0, 2]] == P.p_free))
    rng = np.random.default_rng(0)
    in_range = independent = True
    for _ in range(200):
        pw = rng.exponential(1.0, (8, 20)) * (rng.uniform(size=(8, 20)) < 0.3)
        f = RadarFrame(np.eye(4), np.zeros(8), pw)
        p = estimate_occupancy(f, 1.5).probabilities
        in_range &= bool(np.all((p >= P.p_min) & (p <= P.p_max)))
        perm = rng.permutation(8)
        q = estimate_occupancy(RadarFrame(np.eye(4), np.zeros(8), pw[perm]), 1.5).probabilities
        other = pw.copy()
        other[1:] = rng.exponential(1.0, (7, 20))
        r = estimate_occupancy(RadarFrame(np.eye(4), np.zeros(8), other), 1.5).probabilities
        independent &= bool(np.array_equal(p[perm], q) and np.array_equal(p[0], r[0]))
    ok = hand and in_range and independent
    assert record(9, ok, f"hand case {hand}, clamp range {in_range}, ray independence {independent}")


def test_criterion_10_format_and_determinism(tmp_path):
    scene, traj, radar, run, sim = demo_inputs()
    frames = simulate_sequence(scene, traj, radar, 4, seed=0)[:3]
    rio.write_sequence(frames, tmp_path / "a.rfld", radar)
    back, _, _ = rio.read_sequence(tmp_path / "a.rfld")
    rio.write_sequence(back, tmp_path / "b.rfld", radar)
    bit_exact = back == frames and (tmp_path / "a.rfld").read_bytes() == (tmp_path / "b.rfld").read_bytes()

    # full CLI chain on the demo scene with a short schedule, then replay every stage from its manifest
    d = run.to_dict()
    d["train"].update(epochs=8, steps_per_epoch=2)
    d["eval"].update(synth_supersamples=4)
    for name in ("scene", "trajectory", "radar"):
        rio.write_json(demo_json(name), tmp_path / f"{name}.json")
    rio.write_json(d, tmp_path / "run.json")
    seq, rundir, report = str(tmp_path / "seq.rfld"), str(tmp_path / "run"), str(tmp_path / "report.json")
    codes = [
        cli_main(["simulate", "--scene", str(tmp_path / "scene.json"), "--trajectory", str(tmp_path / "trajectory.json"),
                  "--radar", str(tmp_path / "radar.json"), "--out", seq, "--seed", "0", "--supersamples", "8"]),
        cli_main(["train", "--data", seq, "--config", str(tmp_path / "run.json"), "--out", rundir, "--seed", "3"]),
        cli_main(["eval", "--model", rundir + "/model.rfck", "--data", seq, "--report", report]),
    ]
    first = (tmp_path / "report.json").read_bytes()
    for f in (seq, rundir + "/model.rfck", report):
        os.unlink(f)
    codes += [cli_main(["replay", "--manifest", seq + ".manifest.json"]),
              cli_main(["replay", "--manifest", rundir + "/manifest.json"]),
              cli_main(["replay", "--manifest", report + ".manifest.json"])]
    second = (tmp_path / "report.json").read_bytes()
    rep = json.loads(first)
    identical = first == second and all(k in rep for k in ("cd", "rcd", "rmse", "psnr"))
    ok = bit_exact and identical and codes == [0] * 6
    assert record(10, ok, f"RFLD bit-exact {bit_exact}, replayed report identical {identical}, exit codes {codes}")
