"""Command line entry point: ``skyframes <stage> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys

from ..attacks import AttackKind
from . import experiment as ex
from .config import ConfigError, load_config

STAGES = ("generate", "ingest", "render", "train", "calibrate", "inject", "detect", "explain", "eval", "run-all")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment config (defaults apply to missing keys)")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--dt", type=float, action="append", help="slice length in seconds (repeatable)")
    common.add_argument("--attack", action="append", help="attack kind to inject (repeatable)")
    common.add_argument("--output", help="override run.output_dir")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config key")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="skyframes", description="ADS-B image-sequence anomaly detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "generate": "generate the synthetic corpus",
        "ingest": "read a message file into the corpus",
        "render": "render sample images for each split",
        "train": "train one model per slice length",
        "calibrate": "compute t1 on the validation split",
        "inject": "inject attacks into the test segments and write labels",
        "detect": "score frames and emit window verdicts",
        "explain": "write grid-SSIM overlays for detected attack windows",
        "eval": "compute metrics.csv and ROC curves from frame scores",
        "run-all": "run every stage",
    }
    for name in STAGES:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "ingest":
            p.add_argument("--input", help="CSV or JSON-lines message file")
    return parser


def config_from_args(args):
    overrides: dict[str, str] = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    if args.dt:
        overrides["render.dt_list"] = " ".join(repr(v) for v in args.dt)
    if args.attack:
        overrides["attacks.kinds"] = " ".join(AttackKind.parse(a).value for a in args.attack)
    if args.output:
        overrides["run.output_dir"] = args.output
    return load_config(args.config, overrides)


def run_stage(command: str, args, cfg) -> None:
    if command == "run-all":
        result = ex.run_experiment(cfg)
        print(f"artifacts written to {result.root}")
        return
    ws = ex.Workspace.from_config(cfg)
    dts = cfg.render.dt_list
    with ex.output_lock(ws.root):
        if command == "generate":
            msgs = ex.build_corpus(ws)
            print(f"{len(msgs)} messages -> {ws.corpus_path}")
            return
        if command == "ingest":
            if not (args.input or cfg.scenario.input_csv):
                raise ex.StageError("ingest", "no input file: pass --input or set scenario.input_csv")
            msgs = ex.build_corpus(ws, args.input)
            print(f"{len(msgs)} messages -> {ws.corpus_path}")
            return
        if command == "eval":
            rows = ex.stage_eval(ws, dts)
            print(f"{len(rows)} metric rows -> {ws.root / 'metrics.csv'}")
            return
        messages = ex.load_corpus(ws)
        for dt in dts:
            splits = ex.split_slices(ws, messages, dt)
            if command == "render":
                with ex.stage("render"):
                    from ..raster import write_png

                    frames = ws.dt_dir(dt) / "frames"
                    frames.mkdir(exist_ok=True)
                    n = cfg.output.frames_to_write
                    for split in ("train", "val", "test"):
                        sl = getattr(splits, split)
                        for i, img in enumerate(ws.render(sl[:n])):
                            write_png(frames / f"{split}_{i:04d}.png", img)
                        print(f"dt={ex.dt_label(dt)} {split}: {len(sl)} images")
            elif command == "train":
                ex.stage_train(ws, splits, dt)
            elif command == "calibrate":
                cal = ex.stage_calibrate(ws, splits, dt)
                print(f"dt={ex.dt_label(dt)} t1={cal.t1!r}")
            elif command == "inject":
                test = ex.stage_inject(ws, splits, dt)
                print(f"dt={ex.dt_label(dt)} {len(test.segments)} segments, attacks: "
                      f"{', '.join(k.value for k in test.infected) or 'none'}")
            elif command in ("detect", "explain"):
                model = ex.require_model(ws, dt, command)
                cal = ex.read_calibration(ws, dt, command)
                test = ex.stage_inject(ws, splits, dt)
                streams = ex.stage_detect(ws, test, dt, cal, model)
                if command == "explain":
                    for name, (hits, total) in ex.stage_explain(ws, test, streams, dt, cal, model).items():
                        print(f"dt={ex.dt_label(dt)} {name}: worst tile on the injection in {hits}/{total} windows")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        run_stage(args.command, args, cfg)
    except ConfigError as exc:
        print(f"skyframes: error: [config] {exc}", file=sys.stderr)
        return 2
    except ex.StageError as exc:
        print(f"skyframes: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
