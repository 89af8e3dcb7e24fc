"""Serialized and parallel identification modes, end-to-end inference and evaluation."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import evaluator as ev
from . import gesidnet as gn
from .cloud import FrameStream
from .errors import EmptyCell, NoCluster, ValidationError
from .preprocess import DenoiseConfig, keep_main_cluster
from .segmenter import Segment, SegmenterConfig, aggregate_segment, segment_stream
from .trainer import TrainConfig, condition, derive_seed, train

log = logging.getLogger(__name__)

MODES = ("serialized", "parallel")


@dataclass(frozen=True)
class PipelineConfig:
    net: gn.GesIDNetConfig = gn.GesIDNetConfig(num_classes=2)  # num_classes set per model
    train: TrainConfig = TrainConfig()
    segmenter: SegmenterConfig = SegmenterConfig()
    denoise: DenoiseConfig = DenoiseConfig()
    augment: bool = True
    seed: int = 0
    gesture_epochs: int | None = None  # overrides train.epochs for the gesture model


@dataclass
class Model:
    cfg: gn.GesIDNetConfig
    params: dict


@dataclass
class SerializedBundle:
    gr_model: Model
    ui_models: dict[int, Model]
    mode: str = "serialized"

    def __post_init__(self):
        missing = set(range(self.gr_model.cfg.num_classes)) - set(self.ui_models)
        if missing:
            raise ValidationError(f"no identification model for gestures {sorted(missing)}")


@dataclass
class ParallelBundle:
    gr_model: Model
    ui_model: Model
    mode: str = "parallel"


def _check_cells(gestures, users):
    n_g, n_u = int(gestures.max()) + 1, int(users.max()) + 1
    counts = np.zeros((n_g, n_u), dtype=np.int64)
    np.add.at(counts, (gestures, users), 1)
    empty = np.argwhere(counts == 0)
    if empty.size:
        g, u = empty[0]
        raise EmptyCell(f"no samples for gesture {g} x user {u}")
    return n_g, n_u


def _fit(clouds, labels, n_classes, cfgs: PipelineConfig, seed):
    net = cfgs.net.with_classes(n_classes)
    tcfg = replace(cfgs.train, seed=seed)
    params, hist = train(clouds, labels, tcfg, net, augment=cfgs.augment)
    return Model(net, params), hist


def train_gesture_model(clouds, gestures, cfgs: PipelineConfig):
    gestures = np.asarray(gestures)
    if cfgs.gesture_epochs is not None:
        cfgs = replace(cfgs, train=replace(cfgs.train, epochs=cfgs.gesture_epochs))
    return _fit(clouds, gestures, int(gestures.max()) + 1, cfgs, cfgs.train.seed)


def train_user_models(clouds, gestures, users, cfgs: PipelineConfig, mode: str = "serialized"):
    """User models keyed by gesture id (serialized) or ``"all"`` (parallel), plus histories."""
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    gestures, users = np.asarray(gestures), np.asarray(users)
    n_g, n_u = _check_cells(gestures, users)
    models, hists = {}, {}
    if mode == "parallel":
        models["all"], hists["all"] = _fit(clouds, users, n_u, cfgs, derive_seed(cfgs.train.seed, 2))
        return models, hists
    for g in range(n_g):
        idx = np.flatnonzero(gestures == g)
        models[g], hists[g] = _fit([clouds[i] for i in idx], users[idx], n_u, cfgs,
                                   derive_seed(cfgs.train.seed, 1, g))
    return models, hists


def train_serialized(clouds, gestures, users, cfgs: PipelineConfig = PipelineConfig(),
                     gr_model: Model | None = None) -> SerializedBundle:
    """One gesture model on everything plus one user model per gesture."""
    ui, _ = train_user_models(clouds, gestures, users, cfgs, "serialized")
    if gr_model is None:
        gr_model, _ = train_gesture_model(clouds, gestures, cfgs)
    return SerializedBundle(gr_model, ui)


def train_parallel(clouds, gestures, users, cfgs: PipelineConfig = PipelineConfig(),
                   gr_model: Model | None = None) -> ParallelBundle:
    """One gesture model and one user model, both trained on every gesture."""
    ui, _ = train_user_models(clouds, gestures, users, cfgs, "parallel")
    if gr_model is None:
        gr_model, _ = train_gesture_model(clouds, gestures, cfgs)
    return ParallelBundle(gr_model, ui["all"])


# ---------------------------------------------------------------------------
# classification of already-denoised clouds

@dataclass
class Classification:
    gesture: np.ndarray
    user: np.ndarray
    gesture_scores: np.ndarray
    user_scores: np.ndarray
    ui_model_key: list  # gesture id (serialized) or "all" (parallel)


def _probs(model: Model, pts, cache):
    cfg = model.cfg
    key = (cfg.point_count, cfg.in_channels, cfg.sa1, cfg.sa2)
    if key not in cache:
        cache[key] = gn.build_geometry(pts, cfg)
    geom = cache[key]
    out = []
    for s in range(0, len(geom), 64):
        tr = gn.forward_batch(model.params, geom.take(np.arange(s, min(s + 64, len(geom)))), cfg)
        out.append(gn.softmax(tr.logits1))
    return np.concatenate(out)


def classify_clouds(bundle, clouds, seed: int = 0) -> Classification:
    """Recognize gestures, then identify users (routed by gesture in serialized mode)."""
    gr = bundle.gr_model
    pts = [condition(c, gr.cfg.point_count, derive_seed(seed, i)) for i, c in enumerate(clouds)]
    n = len(pts)
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return Classification(empty, empty, np.zeros((0, gr.cfg.num_classes)), np.zeros((0, 0)), [])
    cache: dict = {}
    g_scores = _probs(gr, pts, cache)
    g_pred = np.argmax(g_scores, axis=1)
    if bundle.mode == "parallel":
        u_scores = _probs(bundle.ui_model, pts, cache)
        keys = ["all"] * n
    else:
        n_u = next(iter(bundle.ui_models.values())).cfg.num_classes
        u_scores = np.zeros((n, n_u))
        for g in np.unique(g_pred):
            idx = np.flatnonzero(g_pred == g)
            sub_cache: dict = {}
            u_scores[idx] = _probs(bundle.ui_models[int(g)], [pts[i] for i in idx], sub_cache)
        keys = [int(g) for g in g_pred]
    return Classification(g_pred, np.argmax(u_scores, axis=1), g_scores, u_scores, keys)


# ---------------------------------------------------------------------------
# streams

@dataclass
class InferenceRecord:
    segment: Segment
    gesture: int | None
    user: int | None
    gesture_scores: list[float] = field(default_factory=list)
    user_scores: list[float] = field(default_factory=list)
    ui_model_key: object = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "start_frame": self.segment.start_frame,
            "end_frame": self.segment.end_frame,
            "frame_count": self.segment.frame_count,
            "threshold": self.segment.threshold_used,
            "gesture": self.gesture,
            "user": self.user,
            "gesture_scores": self.gesture_scores,
            "user_scores": self.user_scores,
            "ui_model": self.ui_model_key,
            "error": self.error,
        }


def infer(bundle, stream: FrameStream, cfgs: PipelineConfig = PipelineConfig()) -> list[InferenceRecord]:
    """Segment, denoise and classify every gesture in ``stream``.

    Segments whose denoising finds no cluster are reported with ``error`` set.
    """
    segments = segment_stream(stream, cfgs.segmenter)
    clouds, kept, records = [], [], []
    for seg in segments:
        try:
            clouds.append(keep_main_cluster(aggregate_segment(stream, seg), cfgs.denoise))
            kept.append(len(records))
            records.append(None)
        except NoCluster as exc:
            log.warning("segment %d-%d skipped: %s", seg.start_frame, seg.end_frame, exc)
            records.append(InferenceRecord(seg, None, None, error=f"NoCluster: {exc}"))
    res = classify_clouds(bundle, clouds, cfgs.seed)
    for j, pos in enumerate(kept):
        records[pos] = InferenceRecord(
            segments[pos], int(res.gesture[j]), int(res.user[j]),
            res.gesture_scores[j].tolist(), res.user_scores[j].tolist(), res.ui_model_key[j])
    return records


# ---------------------------------------------------------------------------
# evaluation

def report_from_predictions(mode, gestures, users, res: Classification) -> dict:
    """Gesture and user metrics for classified, labeled samples.

    Serialized mode reports UIA (and UIF1, UIAUC) as the unweighted mean over
    true gestures; parallel mode computes them once over all samples.
    """
    gestures, users = np.asarray(gestures), np.asarray(users)
    gr = ev.classification_metrics(gestures, res.gesture, res.gesture_scores)
    if mode == "serialized":
        reports = [ev.classification_metrics(users[m], res.user[m], res.user_scores[m])
                   for m in (gestures == g for g in np.unique(gestures))]
        uia = ev.uia_serialized(reports)
        uif1 = float(np.mean([r.macro_f1 for r in reports]))
        uiauc = float(np.nanmean([r.macro_auc for r in reports]))
    else:
        rep = ev.classification_metrics(users, res.user, res.user_scores)
        uia, uif1, uiauc = rep.accuracy, rep.macro_f1, rep.macro_auc
    return {
        "mode": mode,
        "GRA": gr.accuracy, "GRF1": gr.macro_f1, "GRAUC": gr.macro_auc,
        "UIA": uia, "UIF1": uif1, "UIAUC": uiauc,
        "EER": ev.system_eer(users, res.user_scores),
        "n": int(gestures.size),
        "gesture_confusion": gr.confusion,
    }


def evaluate(bundle, clouds, gestures, users, seed: int = 0) -> dict:
    return report_from_predictions(bundle.mode, gestures, users, classify_clouds(bundle, clouds, seed))


# ---------------------------------------------------------------------------
# end-to-end synthetic benchmark

def benchmark_config(seed: int = 0) -> PipelineConfig:
    """Compact network and schedule sized to run the synthetic benchmark on one CPU core."""
    train_cfg = TrainConfig(lr=3e-3, epochs=30, batch=8, seed=seed, lr_schedule="cosine", refresh_inputs=True)
    return PipelineConfig(net=gn.compact_config(), train=train_cfg, seed=seed, gesture_epochs=8)


@dataclass
class BenchmarkResult:
    report: dict
    serialized: SerializedBundle
    parallel: ParallelBundle
    train_idx: np.ndarray
    test_idx: np.ndarray
    seconds: dict = field(default_factory=dict)


def run_benchmark(n_users: int = 8, n_gestures: int = 5, samples_per_cell: int = 40,
                  cfgs: PipelineConfig | None = None, ablations: bool = True) -> BenchmarkResult:
    """Synthesize a corpus, hold out a stratified 20 %, train both modes and evaluate.

    With ``ablations`` the serialized user models are retrained without the
    fusion module and without augmentation (the gesture model is shared), and
    the resulting UIA drops are added to the report.
    """
    from .synthgen import synth_dataset
    from .trainer import stratified_split

    cfgs = cfgs or benchmark_config()
    clock = {}
    t0 = time.perf_counter()
    ds = synth_dataset(n_users, n_gestures, samples_per_cell, cfgs.seed,
                       seg_cfg=cfgs.segmenter, den_cfg=cfgs.denoise)
    cells = ds.gestures * n_users + ds.users
    tr, te = stratified_split(cells, cfgs.train.split_ratio, cfgs.seed)
    train_c = [ds.clouds[i] for i in tr]
    test_c = [ds.clouds[i] for i in te]
    g_tr, u_tr, g_te, u_te = ds.gestures[tr], ds.users[tr], ds.gestures[te], ds.users[te]
    clock["data"] = time.perf_counter() - t0

    def timed(key, fn, *a):
        t = time.perf_counter()
        out = fn(*a)
        clock[key] = time.perf_counter() - t
        return out

    gr, _ = timed("gesture", train_gesture_model, train_c, g_tr, cfgs)
    ser = timed("serialized", train_serialized, train_c, g_tr, u_tr, cfgs, gr)
    par = timed("parallel", train_parallel, train_c, g_tr, u_tr, cfgs, gr)
    report = {
        "dataset": {"users": n_users, "gestures": n_gestures, "samples_per_cell": samples_per_cell,
                    "train": int(tr.size), "test": int(te.size),
                    "segmentation_misses": ds.segmentation_misses,
                    "max_boundary_error": int(max(ds.boundary_errors, default=0))},
        "serialized": evaluate(ser, test_c, g_te, u_te, cfgs.seed),
        "parallel": evaluate(par, test_c, g_te, u_te, cfgs.seed),
    }
    clock["benchmark"] = time.perf_counter() - t0
    if ablations:
        base = report["serialized"]["UIA"]
        variants = {"no_fusion": replace(cfgs, net=replace(cfgs.net, fusion=False)),
                    "no_augment": replace(cfgs, augment=False)}
        report["ablation"] = {}
        for name, vcfg in variants.items():
            bundle = timed(name, train_serialized, train_c, g_tr, u_tr, vcfg, gr)
            uia = evaluate(bundle, test_c, g_te, u_te, cfgs.seed)["UIA"]
            report["ablation"][name] = {"UIA": uia, "UIA_drop": base - uia}
    clock["total"] = time.perf_counter() - t0
    return BenchmarkResult(report, ser, par, tr, te, clock)
