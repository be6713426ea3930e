"""End-to-end experiment: corpus, training, calibration, injection, detection, explanation, metrics.

Output layout under the run directory::

    config.ini            every setting used, defaults included
    corpus.csv            generated or ingested messages
    metrics.csv           one row per (slice length, attack), plus a clean row
    roc_<attack>.csv      frame-level ROC points for every slice length
    dt_<N>/               per slice length
        model.vadb, loss.csv, calibration.csv, labels.csv, infected_<attack>.csv,
        scores.csv, verdicts_<stream>.csv, xai.csv, frames/*.png, explain/<attack>/*.png

Each stage re-renders the images it needs from the corpus (rendering is
cheap and deterministic), so stages can also run one at a time from the CLI.
"""

from __future__ import annotations

import contextlib
import csv
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..attacks import (
    CLEAN_PREFIX,
    SEGMENT_LEN,
    AttackGeometry,
    AttackKind,
    AttackOptions,
    GroundTruthLabel,
    Segment,
    inject,
    read_labels,
    segment_test_set,
    write_labels,
)
from ..convlstm import (
    ModelConfig,
    TrainConfig,
    load_model,
    model_forward,
    read_loss_history,
    save_model,
    train,
    write_loss_history,
)
from ..detector import SsimParams, calibrate_t1, detect, ssim_batch, write_verdicts
from ..explain import box_intersects, render_heatmap, tile_scores, worst_image, write_overlay
from ..ingest import Region, TimeSlice, filter_region, read_corpus, slice_time, sort_messages, write_corpus
from ..raster import GlyphStyle, build_glyph, glyph_bbox, group_indices, render_images, write_png
from ..scenario import ScenarioConfig, foreign_route, generate_corpus, split_corpus
from .config import ExperimentConfig, dump_config
from .metrics import compute_roc, rates, tpr_at_fpr, write_roc

log = logging.getLogger(__name__)

CLEAN = "clean"
FPR_BUDGET = 0.1


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@contextlib.contextmanager
def stage(name: str):
    """Tag any failure inside the block with the stage name."""
    log.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage tag
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc


@contextlib.contextmanager
def output_lock(root: Path):
    """One experiment per output directory at a time."""
    root.mkdir(parents=True, exist_ok=True)
    lock = root / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise StageError("lock", f"{root} is in use by another experiment (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def dt_label(dt: float) -> str:
    return f"{dt:g}"


@dataclass
class Workspace:
    """Everything derived from the config that several stages share."""

    cfg: ExperimentConfig
    root: Path
    region: Region = field(init=False)
    style: GlyphStyle = field(init=False)
    ssim_params: SsimParams = field(init=False)

    def __post_init__(self):
        r = self.cfg.region
        self.region = Region(r.center_lat, r.center_lon, r.half_extent_km)
        self.params = self.region.projection()
        self.viewport = self.region.viewport()
        self.style = GlyphStyle(head_length_px=self.cfg.render.head_length_px,
                                stroke_width_px=self.cfg.render.stroke_width_px)
        self.ssim_params = SsimParams(window=self.cfg.detect.ssim_window)
        self.geom = AttackGeometry(self.params, self.viewport, self.style)

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> Workspace:
        return cls(cfg, cfg.output_path())

    @property
    def corpus_path(self) -> Path:
        return self.root / "corpus.csv"

    def dt_dir(self, dt: float) -> Path:
        d = self.root / f"dt_{dt_label(dt)}"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def render(self, slices: Sequence[TimeSlice]) -> np.ndarray:
        return render_images(slices, self.params, self.viewport, self.cfg.render.channels, self.style)

    def model_config(self) -> ModelConfig:
        m = self.cfg.model
        return ModelConfig(channels=self.cfg.render.channels, hidden=m.hidden, kernel=m.kernel, layers=m.layers,
                           peephole=m.peephole, decoder_input=m.decoder_input)

    def attack_options(self) -> AttackOptions:
        a = self.cfg.attacks
        routes = [foreign_route(self.cfg.run.seed * 1000 + k) for k in range(a.ghost_routes)] \
            if AttackKind.GHOST in a.kinds else []
        return AttackOptions(
            flood_resample=a.flood_resample,
            altitude_threshold_ft=a.altitude_threshold_ft,
            altitude_high_ft=a.altitude_high_ft,
            altitude_low_ft=a.altitude_low_ft,
            duration_ms=None if a.duration_s is None else int(round(a.duration_s * 1000)),
            ghost_routes=routes,
        )


# corpus ---------------------------------------------------------------------

def build_corpus(ws: Workspace, input_csv: str | None = None) -> list:
    """Generate the synthetic corpus, or ingest ``input_csv`` when given, and store it."""
    src = input_csv or ws.cfg.scenario.input_csv
    if src:
        with stage("ingest"):
            msgs = sort_messages(filter_region(read_corpus(src), ws.region, ws.params))
    else:
        with stage("generate"):
            sc = ws.cfg.scenario
            msgs = generate_corpus(ws.region, config=ScenarioConfig(arrival_rate_per_min=sc.arrival_rate_per_min,
                                                                    duration_s=sc.duration_s),
                                   seed=ws.cfg.run.seed, params=ws.params)
    if not msgs:
        raise StageError("ingest" if src else "generate", "corpus is empty")
    ws.root.mkdir(parents=True, exist_ok=True)
    write_corpus(ws.corpus_path, msgs)
    log.info("corpus: %d messages", len(msgs))
    return msgs


def load_corpus(ws: Workspace) -> list:
    if ws.corpus_path.exists():
        with stage("ingest"):
            return read_corpus(ws.corpus_path)
    return build_corpus(ws)


@dataclass
class Splits:
    train: list[TimeSlice]
    val: list[TimeSlice]
    test: list[TimeSlice]


def split_slices(ws: Workspace, messages: list, dt: float) -> Splits:
    train_m, val_m, test_m = split_corpus(messages)
    ov = ws.cfg.render.overlap
    return Splits(*(slice_time(m, dt, ov) if m else [] for m in (train_m, val_m, test_m)))


def evenly(n_total: int, n_max: int) -> np.ndarray:
    """Up to ``n_max`` indices spread evenly over ``range(n_total)``."""
    if n_total <= n_max:
        return np.arange(n_total)
    return np.unique(np.linspace(0, n_total - 1, n_max).round().astype(int))


# frames ---------------------------------------------------------------------

def frame_starts(n_images: int, ws: Workspace) -> np.ndarray:
    return np.array([g.start for g in group_indices(n_images, ws.cfg.detect.s, ws.cfg.detect.frame_stride)],
                    dtype=int)


def score_frames(model, images: np.ndarray, starts: Sequence[int], s: int, params: SsimParams,
                 batch: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Mean and per-pair SSIM for frames ``images[st:st+s]``; shapes (n,) and (n, s)."""
    pairs = np.zeros((len(starts), s))
    for i in range(0, len(starts), batch):
        chunk = starts[i:i + batch]
        x = np.stack([images[st:st + s] for st in chunk])
        pairs[i:i + len(chunk)] = ssim_batch(x, model_forward(model, x), params)
    return pairs.mean(axis=1), pairs


# stages ---------------------------------------------------------------------

def stage_train(ws: Workspace, splits: Splits, dt: float):
    with stage("train"):
        s = ws.cfg.detect.s
        groups = group_indices(len(splits.train), s)
        if not groups:
            raise ValueError(f"training split has {len(splits.train)} images, fewer than s={s}")
        pick = evenly(len(groups), ws.cfg.train.max_sequences)
        seqs = np.stack([ws.render(splits.train[groups[i].start:groups[i].stop]) for i in pick])
        tc = ws.cfg.train
        tcfg = TrainConfig(epochs=tc.epochs, batch_size=tc.batch_size, lr=tc.lr,
                           readout_bias=ws.cfg.model.readout_bias)
        res = train(seqs, ws.model_config(), tcfg, seed=ws.cfg.run.seed,
                    progress=lambda e, l: log.info("dt=%s epoch %d loss %.6f", dt_label(dt), e, l))
        d = ws.dt_dir(dt)
        save_model(res.model, d / "model.vadb")
        write_loss_history(d / "loss.csv", res.losses)
        return res.model


def require_model(ws: Workspace, dt: float, stage_name: str):
    path = ws.dt_dir(dt) / "model.vadb"
    if not path.exists():
        raise StageError(stage_name, f"no trained model at {path}; run the train stage first")
    with stage(stage_name):
        return load_model(path, expected=ws.model_config())


@dataclass
class Calibration:
    t1: float
    percentile: float
    frames: int
    mean_ssim: float


def stage_calibrate(ws: Workspace, splits: Splits, dt: float, model=None) -> Calibration:
    model = model or require_model(ws, dt, "calibrate")
    with stage("calibrate"):
        s = ws.cfg.detect.s
        starts = frame_starts(len(splits.val), ws)
        if len(starts) == 0:
            raise ValueError("validation split is shorter than one frame")
        starts = starts[evenly(len(starts), ws.cfg.detect.max_val_frames)]
        needed = np.unique(np.concatenate([np.arange(st, st + s) for st in starts]))
        imgs = np.zeros((len(splits.val), ws.cfg.render.channels, 64, 64), dtype=np.float32)
        imgs[needed] = ws.render([splits.val[i] for i in needed])
        scores, _ = score_frames(model, imgs, starts, s, ws.ssim_params)
        d = ws.cfg.detect
        t1 = d.t1_override if d.t1_override is not None else calibrate_t1(scores, d.t1_percentile)
        cal = Calibration(float(t1), d.t1_percentile, len(scores), float(scores.mean()))
        write_calibration(ws.dt_dir(dt) / "calibration.csv", cal)
        return cal


def write_calibration(path, cal: Calibration) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t1,percentile,validation_frames,validation_mean_ssim\n")
        fh.write(f"{cal.t1!r},{cal.percentile!r},{cal.frames},{cal.mean_ssim!r}\n")


def read_calibration(ws: Workspace, dt: float, stage_name: str) -> Calibration:
    path = ws.dt_dir(dt) / "calibration.csv"
    if not path.exists():
        raise StageError(stage_name, f"no calibration at {path}; run the calibrate stage first")
    with open(path, encoding="utf-8") as fh:
        row = next(csv.DictReader(fh))
    return Calibration(float(row["t1"]), float(row["percentile"]), int(row["validation_frames"]),
                       float(row["validation_mean_ssim"]))


@dataclass
class EvaluationSet:
    segments: list[Segment]
    infected: dict[AttackKind, list[tuple[Segment, GroundTruthLabel]]]


def stage_inject(ws: Workspace, splits: Splits, dt: float) -> EvaluationSet:
    """Inject each attack kind into test segments, in order, until it has its quota.

    Targeted attacks skip segments without a suitable aircraft, so a kind may
    need more segments than its quota. The evaluation covers the shortest
    prefix of segments that satisfies every kind; segments past a kind's
    quota stay clean in that kind's stream.
    """
    with stage("inject"):
        segs = segment_test_set(splits.test)
        if not segs:
            raise ValueError(f"test split has {len(splits.test)} images, fewer than one {SEGMENT_LEN}-image segment")
        n = ws.cfg.attacks.injections_per_kind
        kinds = ws.cfg.attacks.kinds if n else []
        opts = ws.attack_options()
        infected: dict[AttackKind, list[tuple[Segment, GroundTruthLabel]]] = {}
        used = n if n else len(segs)
        for k in kinds:
            items, done = [], 0
            for seg in segs:
                if done < n:
                    out, lab = inject(seg, k, ws.cfg.run.seed, ws.geom, opts)
                    done += any(lab.attacked)
                    if done == n:
                        used = max(used, seg.index + 1)
                else:
                    out, lab = seg, GroundTruthLabel.clean(seg)
                items.append((out, lab))
            if done < n:
                log.warning("dt=%s: only %d of %d %s injections fit the test split", dt_label(dt), done, n, k.value)
                used = len(segs)
            infected[k] = items
        segs = segs[:used]
        infected = {k: v[:used] for k, v in infected.items()}
        d = ws.dt_dir(dt)
        write_labels(d / "labels.csv", [lab for k in kinds for _, lab in infected[k]])
        for k in kinds:
            seen = {}
            for seg, _ in infected[k]:
                for m in seg.messages:
                    seen.setdefault((m.callsign, m.time_ms), m)
            write_corpus(d / f"infected_{k.value}.csv", sorted(seen.values(), key=lambda m: (m.time_ms, m.callsign)))
        return EvaluationSet(segs, infected)


@dataclass
class Stream:
    """Frame scores over one test stream (clean, or one attack kind injected into every segment)."""

    name: str
    starts: np.ndarray
    scores: np.ndarray
    pairs: np.ndarray
    labels: np.ndarray  # frame overlaps an attacked image
    segment: np.ndarray  # attacked segment the frame overlaps, -1 if none
    images: np.ndarray = field(repr=False)


def stream_images(ws: Workspace, segments: Sequence[Segment]) -> np.ndarray:
    return np.concatenate([ws.render(seg.slices()) for seg in segments])


def stage_detect(ws: Workspace, test: EvaluationSet, dt: float, cal: Calibration, model=None) -> dict[str, Stream]:
    model = model or require_model(ws, dt, "detect")
    with stage("detect"):
        s, p = ws.cfg.detect.s, ws.ssim_params
        clean_imgs = stream_images(ws, test.segments)
        starts = frame_starts(len(clean_imgs), ws)
        scores, pairs = score_frames(model, clean_imgs, starts, s, p)
        none = np.full(len(starts), -1)
        streams = {CLEAN: Stream(CLEAN, starts, scores, pairs, np.zeros(len(starts), bool), none, clean_imgs)}
        for kind, items in test.infected.items():
            imgs = clean_imgs.copy()
            attacked = np.zeros(len(imgs), bool)
            for j, (seg, lab) in enumerate(items):
                base = j * SEGMENT_LEN
                imgs[base + CLEAN_PREFIX:base + SEGMENT_LEN] = ws.render(seg.slices()[CLEAN_PREFIX:])
                attacked[base:base + SEGMENT_LEN] = lab.attacked
            changed = np.any(imgs != clean_imgs, axis=(1, 2, 3))
            k_scores, k_pairs = scores.copy(), pairs.copy()
            redo = [i for i, st in enumerate(starts) if changed[st:st + s].any()]
            if redo:
                k_scores[redo], k_pairs[redo] = score_frames(model, imgs, starts[redo], s, p)
            labels = np.array([attacked[st:st + s].any() for st in starts])
            segment = np.array([(st + int(np.argmax(attacked[st:st + s]))) // SEGMENT_LEN if lab_ else -1
                                for st, lab_ in zip(starts, labels)])
            streams[kind.value] = Stream(kind.value, starts, k_scores, k_pairs, labels, segment, imgs)
        d = ws.dt_dir(dt)
        write_scores(d / "scores.csv", streams.values(), cal.t1)
        for st in streams.values():
            write_verdicts(d / f"verdicts_{st.name}.csv",
                           list(detect(st.scores, ws.cfg.detect.w, ws.cfg.detect.t2, cal.t1)))
        write_frames(ws, d, streams)
        return streams


def write_scores(path, streams, t1: float) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("stream,frame_index,first_image,score,suspicious,label,segment\n")
        for st in streams:
            for i, (first, sc, lab, seg) in enumerate(zip(st.starts, st.scores, st.labels, st.segment)):
                fh.write(f"{st.name},{i},{first},{float(sc)!r},{int(sc < t1)},{int(lab)},{seg}\n")


def read_scores(path) -> dict[str, Stream]:
    rows: dict[str, list] = {}
    with open(path, encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(r["stream"], []).append(r)
    out = {}
    for name, rs in rows.items():
        out[name] = Stream(name, np.array([int(r["first_image"]) for r in rs]),
                           np.array([float(r["score"]) for r in rs]), np.zeros((len(rs), 0)),
                           np.array([r["label"] == "1" for r in rs]), np.array([int(r["segment"]) for r in rs]),
                           np.zeros(0))
    return out


def write_frames(ws: Workspace, d: Path, streams: dict[str, Stream]) -> None:
    frames = d / "frames"
    frames.mkdir(exist_ok=True)
    n = min(ws.cfg.output.frames_to_write, len(streams[CLEAN].images))
    for i in range(n):
        write_png(frames / f"test_{i:04d}.png", streams[CLEAN].images[i])
    for name, st in streams.items():
        if name != CLEAN and n:
            write_png(frames / f"{name}_seg0_img{CLEAN_PREFIX + 5:02d}.png", st.images[CLEAN_PREFIX + 5])


def window_labels(st: Stream, w: int) -> np.ndarray:
    return np.array([st.labels[i - w + 1:i + 1].any() for i in range(w - 1, len(st.labels))], dtype=bool)


def injection_boxes(ws: Workspace, seg: Segment, lab: GroundTruthLabel) -> list[tuple[int, int, int, int]]:
    """Glyph box of every involved aircraft, each a union over the attacked images."""
    if not lab.callsigns:
        return []
    boxes = []
    for cs in lab.callsigns:
        box = None
        for sl, hit, lb in zip(seg.slices(), lab.attacked, lab.bboxes):
            if not hit:
                continue
            track = sl.per_aircraft.get(cs)
            b = glyph_bbox(build_glyph(track, ws.params, ws.viewport, ws.style), ws.viewport, ws.style) \
                if track else None
            # targeted attacks may remove the glyph; the label box keeps where it was
            b = b if b is not None else (lb if len(lab.callsigns) == 1 else None)
            if b is not None:
                box = b if box is None else (min(box[0], b[0]), min(box[1], b[1]), max(box[2], b[2]),
                                             max(box[3], b[3]))
        if box is not None:
            boxes.append(box)
    return boxes


def stage_explain(ws: Workspace, test: EvaluationSet, streams: dict[str, Stream], dt: float, cal: Calibration,
                  model=None) -> dict[str, tuple[int, int]]:
    """Overlays for detected attack windows; returns (hits, explained) per attack."""
    model = model or require_model(ws, dt, "explain")
    with stage("explain"):
        w, t2, s, n = ws.cfg.detect.w, ws.cfg.detect.t2, ws.cfg.detect.s, ws.cfg.explain.n
        d = ws.dt_dir(dt)
        out: dict[str, tuple[int, int]] = {}
        rows = []
        for kind, items in test.infected.items():
            st = streams[kind.value]
            boxes_cache: dict[int, list] = {}
            outputs: dict[int, np.ndarray] = {}
            hits = explained = 0
            folder = d / "explain" / kind.value
            for v in detect(st.scores, w, t2, cal.t1):
                lo = v.window_end_index - w + 1
                if not (v.anomalous and st.labels[lo:v.window_end_index + 1].any()):
                    continue
                pairs = st.pairs[lo:v.window_end_index + 1]
                flat = worst_image(pairs.ravel())
                f, pos = lo + flat // s, flat % s
                image = int(st.starts[f]) + pos
                if f not in outputs:
                    outputs[f] = model_forward(model, st.images[st.starts[f]:st.starts[f] + s])
                hm = tile_scores(st.images[image], outputs[f][pos], n, ws.ssim_params, image_index=image)
                tile = hm.tile_box(*hm.worst_tile, 64, 64)
                j = image // SEGMENT_LEN
                if j not in boxes_cache:
                    boxes_cache[j] = injection_boxes(ws, *items[j]) if j < len(items) else []
                hit = any(box_intersects(tile, b) for b in boxes_cache[j])
                hits += hit
                explained += 1
                rows.append((kind.value, v.window_end_index, image, *hm.worst_tile, int(hit)))
                if explained <= ws.cfg.explain.max_overlays:
                    folder.mkdir(parents=True, exist_ok=True)
                    rgb = render_heatmap(st.images[image], outputs[f][pos], hm, ws.cfg.explain.alpha)
                    write_overlay(folder / f"explain_{v.window_end_index}_{image}.png", rgb)
            out[kind.value] = (hits, explained)
        with open(d / "xai.csv", "w", encoding="utf-8") as fh:
            fh.write("attack,window_end_index,image_index,tile_row,tile_col,hit\n")
            for r in rows:
                fh.write(",".join(str(x) for x in r) + "\n")
        return out


def read_xai(path) -> dict[str, tuple[int, int]]:
    out: dict[str, list[int]] = {}
    if not Path(path).exists():
        return {}
    with open(path, encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            c = out.setdefault(r["attack"], [0, 0])
            c[0] += int(r["hit"])
            c[1] += 1
    return {k: (v[0], v[1]) for k, v in out.items()}


# metrics --------------------------------------------------------------------

METRIC_COLUMNS = (
    "dt_s", "attack", "injections", "positive_frames", "negative_frames", "frame_auc",
    "frame_tpr_at_fpr_0.1", "frame_tpr_at_t1", "frame_fpr_at_t1", "window_auc", "window_tpr", "window_fpr",
    "detected_injections", "xai_hits", "xai_windows", "t1", "t2", "w",
)


@dataclass
class MetricsRow:
    dt_s: float
    attack: str
    values: dict


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def attack_metrics(dt: float, st: Stream, cal: Calibration, w: int, t2: int, injections: int,
                   xai: tuple[int, int] | None) -> tuple[MetricsRow, object]:
    vals: dict = {"injections": injections, "positive_frames": int(st.labels.sum()),
                  "negative_frames": int((~st.labels).sum())}
    verdicts = list(detect(st.scores, w, t2, cal.t1))
    wl = window_labels(st, w)
    anomalous = np.array([v.anomalous for v in verdicts], dtype=bool)
    counts = np.array([v.suspicious_count for v in verdicts])
    roc = None
    if st.labels.any() and (~st.labels).any():
        roc = compute_roc(st.scores, st.labels)
        vals["frame_auc"] = roc.auc
        vals["frame_tpr_at_fpr_0.1"] = tpr_at_fpr(roc, FPR_BUDGET)
    vals["frame_tpr_at_t1"], vals["frame_fpr_at_t1"] = rates(st.scores < cal.t1, st.labels)
    if wl.any() and (~wl).any():
        vals["window_auc"] = compute_roc(counts, wl, low_is_attack=False).auc
    vals["window_tpr"], vals["window_fpr"] = rates(anomalous, wl)
    if injections:
        detected = set()
        for i, v in enumerate(verdicts):
            if v.anomalous:
                segs = st.segment[i:i + w]
                detected.update(int(x) for x in segs if x >= 0)
        vals["detected_injections"] = len(detected)
    if xai is not None:
        vals["xai_hits"], vals["xai_windows"] = xai
    vals.update(t1=cal.t1, t2=t2, w=w)
    return MetricsRow(dt, st.name, vals), roc


def stage_eval(ws: Workspace, dts: Sequence[float]) -> list[MetricsRow]:
    with stage("eval"):
        rows: list[MetricsRow] = []
        rocs: dict[str, list] = {}
        w, t2 = ws.cfg.detect.w, ws.cfg.detect.t2
        for dt in dts:
            d = ws.dt_dir(dt)
            if not (d / "scores.csv").exists():
                raise StageError("eval", f"no frame scores at {d / 'scores.csv'}; run the detect stage first")
            cal = read_calibration(ws, dt, "eval")
            streams = read_scores(d / "scores.csv")
            xai = read_xai(d / "xai.csv")
            labels = read_labels(d / "labels.csv") if (d / "labels.csv").exists() else []
            for name, st in streams.items():
                inj = sum(1 for lab in labels if lab.kind and lab.kind.value == name and any(lab.attacked))
                row, roc = attack_metrics(dt, st, cal, w, t2, inj, xai.get(name, (0, 0)) if name != CLEAN else None)
                rows.append(row)
                if roc is not None:
                    rocs.setdefault(name, []).append((dt, roc))
        write_metrics(ws.root / "metrics.csv", rows)
        for name, items in rocs.items():
            write_roc(ws.root / f"roc_{name}.csv", items)
        return rows


def write_metrics(path, rows: Sequence[MetricsRow]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for r in rows:
            vals = dict(r.values, dt_s=r.dt_s, attack=r.attack)
            fh.write(",".join(_fmt(vals.get(c, "")) for c in METRIC_COLUMNS) + "\n")


def read_metrics(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# orchestration --------------------------------------------------------------

@dataclass
class ExperimentResult:
    root: Path
    metrics: list[MetricsRow]
    calibrations: dict[float, Calibration]
    losses: dict[float, list[float]]
    train_seconds: dict[float, float]


def run_experiment(cfg: ExperimentConfig, dts: Sequence[float] | None = None) -> ExperimentResult:
    """Run every stage for every slice length and write all artifacts."""
    ws = Workspace.from_config(cfg)
    dts = list(dts or cfg.render.dt_list)
    with output_lock(ws.root):
        dump_config(cfg, ws.root / "config.ini")
        messages = build_corpus(ws)
        cals, losses, seconds = {}, {}, {}
        for dt in dts:
            splits = split_slices(ws, messages, dt)
            t0 = time.perf_counter()
            model = stage_train(ws, splits, dt)
            seconds[dt] = time.perf_counter() - t0
            cal = stage_calibrate(ws, splits, dt, model)
            test = stage_inject(ws, splits, dt)
            streams = stage_detect(ws, test, dt, cal, model)
            stage_explain(ws, test, streams, dt, cal, model)
            cals[dt] = cal
            losses[dt] = read_loss_history(ws.dt_dir(dt) / "loss.csv")
        rows = stage_eval(ws, dts)
    return ExperimentResult(ws.root, rows, cals, losses, seconds)
