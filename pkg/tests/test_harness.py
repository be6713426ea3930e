import os

import numpy as np
import pytest
from sklearn.metrics import roc_auc_score, roc_curve

from skyframes.harness import ConfigError, StageError, compute_roc, dump_config, load_config, tpr_at_fpr
from skyframes.harness.cli import main
from skyframes.harness.experiment import output_lock, read_metrics

TINY = """
[scenario]
duration_s = 1200
[model]
hidden = 4
[train]
epochs = 2
max_sequences = 8
[detect]
frame_stride = 5
max_val_frames = 20
[attacks]
injections_per_kind = 2
ghost_routes = 2
[explain]
max_overlays = 1
[output]
frames_to_write = 2
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(TINY)
    return path


def test_roc_hand_case():
    roc = compute_roc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0])
    assert roc.auc == 1.0
    assert (roc.fpr[0], roc.tpr[0]) == (0.0, 0.0) and (roc.fpr[-1], roc.tpr[-1]) == (1.0, 1.0)


def test_roc_matches_sklearn():
    rng = np.random.default_rng(0)
    for _ in range(10):
        y = rng.random(300) < 0.3
        s = np.round(rng.normal(0, 1, 300) - y * 0.8, 1)  # rounding creates ties
        roc = compute_roc(s, y)
        assert roc.auc == pytest.approx(roc_auc_score(y, -s), abs=1e-12)
        fpr, tpr, _ = roc_curve(y, -s, drop_intermediate=False)
        assert np.allclose(roc.fpr, fpr) and np.allclose(roc.tpr, tpr)


def test_roc_high_is_attack():
    roc = compute_roc([0, 1, 5, 7], [0, 0, 1, 1], low_is_attack=False)
    assert roc.auc == 1.0


def test_roc_random_labels_near_chance():
    rng = np.random.default_rng(1)
    roc = compute_roc(rng.random(1000), rng.random(1000) < 0.5)
    assert abs(roc.auc - 0.5) < 0.1
    assert np.all(np.diff(roc.fpr) >= 0) and np.all(np.diff(roc.tpr) >= 0)


def test_roc_needs_both_classes():
    with pytest.raises(ValueError):
        compute_roc([0.1, 0.2], [1, 1])


def test_operating_point_on_curve():
    rng = np.random.default_rng(2)
    s = rng.random(200)
    y = rng.random(200) < 0.4
    roc = compute_roc(s, y)
    t1 = float(np.percentile(s, 5))
    p = s < t1
    point = (p[~y].mean(), p[y].mean())
    assert any(np.isclose(f, point[0]) and np.isclose(t, point[1]) for f, t in zip(roc.fpr, roc.tpr))


def test_tpr_at_fpr():
    roc = compute_roc([0.1, 0.2, 0.3, 0.4, 0.5], [1, 0, 1, 0, 0])
    assert tpr_at_fpr(roc, 0.0) == 0.5
    assert tpr_at_fpr(roc, 0.34) == 1.0


def test_config_defaults_and_overrides(tmp_path):
    cfg = load_config()
    assert (cfg.detect.s, cfg.detect.w, cfg.detect.t2, cfg.detect.t1_percentile) == (15, 10, 5, 5.0)
    assert cfg.render.dt_list == [2.0] and len(cfg.attacks.kinds) == 5
    cfg = load_config(overrides={"render.dt_list": "2, 20", "attacks.kinds": "flood jam", "model.peephole": "yes"})
    assert cfg.render.dt_list == [2.0, 20.0] and [k.value for k in cfg.attacks.kinds] == ["Flood", "Jam"]
    assert cfg.model.peephole is True
    dump_config(cfg, tmp_path / "c.ini")
    assert load_config(tmp_path / "c.ini") == cfg


@pytest.mark.parametrize("overrides", [{"detect.bogus": "1"}, {"nosuch.key": "1"}, {"detect.w": "3"},
                                       {"detect.s": "x"}, {"model.decoder_input": "sideways"}])
def test_config_errors(overrides):
    with pytest.raises(ConfigError):
        load_config(overrides=overrides)


def test_output_root_env(monkeypatch, tmp_path):
    monkeypatch.setenv("SKYFRAMES_OUTPUT_ROOT", str(tmp_path))
    assert load_config(overrides={"run.output_dir": "abc"}).output_path() == tmp_path / "abc"
    assert load_config(overrides={"run.output_dir": "/x/y"}).output_path() == tmp_path.__class__("/x/y")


def test_lock_excludes_second_run(tmp_path):
    with output_lock(tmp_path):
        with pytest.raises(StageError):
            with output_lock(tmp_path):
                pass
    assert not (tmp_path / ".lock").exists()


def test_cli_usage_errors(capsys):
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["train", "--no-such-flag"])
    assert e.value.code == 2
    assert main(["generate", "--set", "detect.w=1"]) == 2


def test_detect_without_model(tmp_path, tiny_cfg, capsys):
    assert main(["generate", "--config", str(tiny_cfg), "--output", str(tmp_path / "run")]) == 0
    assert main(["detect", "--config", str(tiny_cfg), "--output", str(tmp_path / "run")]) == 1
    assert "[detect]" in capsys.readouterr().err


def test_stage_by_stage(tmp_path, tiny_cfg):
    out = str(tmp_path / "run")
    base = ["--config", str(tiny_cfg), "--output", out, "--seed", "3"]
    for cmd in ("generate", "render", "train", "calibrate", "inject", "detect", "explain"):
        assert main([cmd] + base) == 0, cmd
    assert main(["eval", "--dt", "2"] + base) == 0
    rows = read_metrics(os.path.join(out, "metrics.csv"))
    assert sorted(r["attack"] for r in rows) == sorted(["clean", "Flood", "Ghost", "Jam", "Reverse",
                                                        "ChangeAltitude"])
    assert all(r["injections"] == "2" for r in rows if r["attack"] != "clean")
    for name in ("loss.csv", "model.vadb", "labels.csv", "calibration.csv", "scores.csv", "xai.csv"):
        assert os.path.exists(os.path.join(out, "dt_2", name)), name
    assert os.path.exists(os.path.join(out, "roc_Flood.csv"))
    assert os.listdir(os.path.join(out, "dt_2", "frames"))


def test_zero_attacks_reports_clean_only(tmp_path, tiny_cfg):
    out = str(tmp_path / "run")
    assert main(["run-all", "--config", str(tiny_cfg), "--output", out, "--set", "attacks.injections_per_kind=0"]) == 0
    rows = read_metrics(os.path.join(out, "metrics.csv"))
    assert [r["attack"] for r in rows] == ["clean"] and rows[0]["window_fpr"] != ""


def test_run_all_reproducible(tmp_path, tiny_cfg):
    outs = [str(tmp_path / f"run{i}") for i in range(2)]
    for o in outs:
        assert main(["run-all", "--config", str(tiny_cfg), "--output", o, "--seed", "7", "--attack", "flood"]) == 0
    for name in ("metrics.csv", "dt_2/model.vadb", "dt_2/scores.csv"):
        a, b = (open(os.path.join(o, name), "rb").read() for o in outs)
        assert a == b, name
