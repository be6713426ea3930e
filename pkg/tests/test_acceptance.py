"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 4-8 share one full experiment (synthetic 24 h corpus, slice
lengths 2 s and 20 s, 50 injections per attack kind, 15 s attacks). It runs
once per session and takes roughly an hour on a single CPU core.
"""

import os
import time

import numpy as np
import pytest

from skyframes.attacks import CLEAN_PREFIX, AttackGeometry, AttackKind, AttackOptions, inject, segment_test_set
from skyframes.convlstm import EncoderDecoderModel, ModelConfig, loss_and_grads, model_forward, mse_loss
from skyframes.detector import ssim
from skyframes.explain import tile_scores
from skyframes.harness import load_config, run_experiment
from skyframes.harness.cli import main
from skyframes.ingest import Region, slice_time
from skyframes.projection import LccParams, inverse_project, project, scale_factor
from skyframes.raster import render_images
from skyframes.scenario import ScenarioConfig, foreign_route, generate_corpus


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}", flush=True)


# 1 -------------------------------------------------------------------------

def test_criterion_1_gradients(capsys):
    t0 = time.perf_counter()
    cfg = ModelConfig(channels=1, hidden=2)
    model = EncoderDecoderModel.init(cfg, seed=0, dtype=np.float64, readout_bias=0.0)
    rng = np.random.default_rng(0)
    for p in model.parameters():
        p += rng.normal(0.0, 0.3, p.shape)
    x = rng.random((1, 3, 1, 4, 4))
    _, grads = loss_and_grads(model, x)
    eps, worst = 1e-3, 0.0
    for p, g in zip(model.parameters(), grads.arrays()):
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            up = mse_loss(model_forward(model, x), x)
            p[idx] = orig - eps
            down = mse_loss(model_forward(model, x), x)
            p[idx] = orig
            fd = (up - down) / (2 * eps)
            worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-8))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-3 and elapsed < 60
    report(capsys, 1, ok, f"max relative gradient error {worst:.2e} (< 1e-3), {elapsed:.1f} s (< 60 s)")
    assert ok


# 2 -------------------------------------------------------------------------

def naive_ssim(a, b, k=8, c1=1e-4, c2=9e-4):
    vals = []
    for r in range(a.shape[0] - k + 1):
        for c in range(a.shape[1] - k + 1):
            pa = [float(v) for v in a[r:r + k, c:c + k].ravel()]
            pb = [float(v) for v in b[r:r + k, c:c + k].ravel()]
            n = len(pa)
            ma, mb = sum(pa) / n, sum(pb) / n
            va = sum((u - ma) ** 2 for u in pa) / n
            vb = sum((v - mb) ** 2 for v in pb) / n
            cov = sum((u - ma) * (v - mb) for u, v in zip(pa, pb)) / n
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return sum(vals) / len(vals)


def test_criterion_2_ssim_oracle(capsys):
    rng = np.random.default_rng(0)
    diff = ident = asym = 0.0
    for _ in range(20):
        a, b = rng.random((32, 32)), rng.random((32, 32))
        b = np.clip(0.5 * a + 0.5 * b, 0, 1)
        diff = max(diff, abs(ssim(a, b) - naive_ssim(a, b)))
        ident = max(ident, abs(ssim(a, a) - 1.0))
        asym = max(asym, abs(ssim(a, b) - ssim(b, a)))
    ok = diff < 1e-6 and ident < 1e-9 and asym < 1e-9
    report(capsys, 2, ok, f"oracle gap {diff:.1e} (< 1e-6), |ssim(x,x)-1| {ident:.1e}, asymmetry {asym:.1e} (< 1e-9)")
    assert ok


# 3 -------------------------------------------------------------------------

def test_criterion_3_projection(capsys):
    region = Region(51.47, -0.45)
    params = region.projection()
    rng = np.random.default_rng(0)
    half = region.half_extent_m
    x, y = rng.uniform(-half, half, 1000), rng.uniform(-half, half, 1000)
    lat, lon = inverse_project(x, y, params)
    lat2, lon2 = inverse_project(*project(lat, lon, params), params)
    trip = float(max(np.abs(lat2 - lat).max(), np.abs(lon2 - lon).max()))
    scale = max(abs(scale_factor(params.std_parallel_1, params) - 1), abs(scale_factor(params.std_parallel_2, params) - 1))
    wide = LccParams(45.0, 10.0, 30.0, 60.0)
    scale = max(scale, abs(scale_factor(30.0, wide) - 1), abs(scale_factor(60.0, wide) - 1))
    ok = trip < 1e-9 and scale < 1e-6
    report(capsys, 3, ok, f"roundtrip error {trip:.1e} deg (< 1e-9), standard-parallel scale error {scale:.1e} (< 1e-6)")
    assert ok


# 4-8: one shared experiment --------------------------------------------------

ACCEPTANCE_CONFIG = {
    "run.seed": "0",
    "scenario.duration_s": str(24 * 3600),
    "render.dt_list": "2 20",
    "attacks.injections_per_kind": "50",
    "attacks.duration_s": "15",
    "detect.frame_stride": "1",
}


@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    out = os.environ.get("SKYFRAMES_ACCEPTANCE_DIR") or str(tmp_path_factory.mktemp("acceptance"))
    cfg = load_config(overrides=dict(ACCEPTANCE_CONFIG, **{"run.output_dir": out}))
    return run_experiment(cfg)


def metric(result, dt, attack, key):
    for r in result.metrics:
        if r.dt_s == dt and r.attack == attack:
            return r.values.get(key)
    raise KeyError((dt, attack))


def test_criterion_4_training(experiment, capsys):
    losses = np.array(experiment.losses[2.0])
    smooth = np.convolve(losses, np.ones(5) / 5, mode="valid")
    monotone = bool(np.all(np.diff(smooth) <= 0))
    val = experiment.calibrations[2.0].mean_ssim
    minutes = experiment.train_seconds[2.0] / 60
    cfg = load_config()
    ok = monotone and val >= 0.8 and minutes <= 30
    report(capsys, 4, ok, f"{cfg.train.max_sequences} sequences, smoothed loss non-increasing={monotone} "
                          f"({smooth[0]:.2e} -> {smooth[-1]:.2e}), validation SSIM {val:.3f} (>= 0.8), "
                          f"training {minutes:.1f} min (<= 30)")
    assert ok


def test_criterion_5_detection(experiment, capsys):
    need = {"Flood": 0.85, "ChangeAltitude": 0.85, "Ghost": 0.75, "Jam": 0.75}
    parts, ok = [], True
    for kind in ("Flood", "ChangeAltitude", "Ghost", "Jam", "Reverse"):
        auc = metric(experiment, 2.0, kind, "frame_auc")
        n = metric(experiment, 2.0, kind, "injections")
        good = n >= 50 and (kind not in need or auc >= need[kind])
        ok &= good
        bar = f">= {need[kind]}" if kind in need else "report only"
        parts.append(f"{kind} AUC {auc:.3f} ({bar}, {n} injections)")
    report(capsys, 5, ok, "; ".join(parts))
    assert ok


def test_criterion_6_dt_ordering(experiment, capsys):
    fast = metric(experiment, 2.0, "Flood", "frame_tpr_at_fpr_0.1")
    slow = metric(experiment, 20.0, "Flood", "frame_tpr_at_fpr_0.1")
    ok = fast >= slow
    report(capsys, 6, ok, f"Flood TPR at FPR <= 0.1: dt=2 s {fast:.3f} vs dt=20 s {slow:.3f}")
    assert ok


def test_criterion_7_operating_point(experiment, capsys):
    fpr = metric(experiment, 2.0, "clean", "window_fpr")
    t1 = experiment.calibrations[2.0].t1
    ok = fpr <= 0.10
    report(capsys, 7, ok, f"clean-test window FPR {fpr:.3f} (<= 0.10) at t1={t1:.4f}, t2=5, w=10")
    assert ok


def test_criterion_8_xai(experiment, capsys):
    hits = metric(experiment, 2.0, "Flood", "xai_hits")
    total = metric(experiment, 2.0, "Flood", "xai_windows")
    x = np.random.default_rng(0).random((1, 64, 64))
    hm = tile_scores(x, x, n=4)
    identity = hm.scores.shape == (4, 4) and bool(np.all(hm.scores == 1.0))
    frac = hits / total if total else 0.0
    ok = total > 0 and frac >= 0.7 and identity
    report(capsys, 8, ok, f"worst tile hits the flood box in {hits}/{total} detected windows ({frac:.0%}, >= 70%); "
                          f"identity gives 16 tiles of 1.0: {identity}")
    assert ok


# 9 -------------------------------------------------------------------------

def test_criterion_9_injectors(capsys):
    region = Region(51.47, -0.45)
    params, viewport = region.projection(), region.viewport()
    geom = AttackGeometry(params, viewport)
    msgs = generate_corpus(region, config=ScenarioConfig(duration_s=600.0), seed=11)
    segs = segment_test_set(slice_time(msgs, 2.0, 0.5))
    opts = AttackOptions(ghost_routes=[foreign_route(0), foreign_route(1)])
    involution = additive = subtractive = prefix = True
    checked = 0
    for seg in segs:
        clean_imgs = render_images(seg.slices(), params, viewport)
        base = sorted(seg.messages, key=repr)
        for kind in AttackKind:
            out, lab = inject(seg, kind, 0, geom, opts)
            if lab.skipped:
                continue
            checked += 1
            got = sorted(out.messages, key=repr)
            prefix &= bool(np.array_equal(render_images(out.slices(), params, viewport)[:CLEAN_PREFIX],
                                          clean_imgs[:CLEAN_PREFIX]))
            if kind in (AttackKind.FLOOD, AttackKind.GHOST):
                extra = list(got)
                for m in base:
                    extra.remove(m)
                additive &= len(extra) == len(got) - len(base)
            if kind is AttackKind.JAM:
                remaining = list(base)
                for m in got:
                    remaining.remove(m)
                subtractive &= len(remaining) == len(base) - len(got)
            if kind is AttackKind.REVERSE:
                again, _ = inject(out, kind, 0, geom, opts)
                involution &= again.messages == seg.messages
    ok = involution and additive and subtractive and prefix and checked >= 20
    report(capsys, 9, ok, f"{checked} injections: reverse twice identity={involution}, flood/ghost additive={additive}, "
                          f"jam subtractive={subtractive}, first 35 images bit-identical={prefix}")
    assert ok


# 10 ------------------------------------------------------------------------

SMALL = """
[scenario]
duration_s = 1800
[model]
hidden = 4
[train]
epochs = 2
max_sequences = 12
[detect]
frame_stride = 3
max_val_frames = 30
[attacks]
injections_per_kind = 3
ghost_routes = 2
"""


def test_criterion_10_reproducible(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(SMALL)
    outs = [tmp_path / "a", tmp_path / "b"]
    codes = [main(["run-all", "--config", str(cfg), "--seed", "7", "--output", str(o)]) for o in outs]
    same = {}
    for name in ("metrics.csv", "dt_2/model.vadb"):
        same[name] = (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    ok = codes == [0, 0] and all(same.values())
    report(capsys, 10, ok, f"two run-all executions: exit codes {codes}, bit-identical "
                           + ", ".join(f"{k}={v}" for k, v in same.items()))
    assert ok
