"""Command-line interface: ``gestureprint <command> [options]``.

Exit codes: 0 success, 1 validation or usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evaluator as ev
from . import gesidnet as gn
from . import io as gio
from . import pipeline as pl
from .cloud import METRICS, CloudCollection, collection_difference
from .errors import GesturePrintError, LengthMismatch, NoCluster, ValidationError
from .preprocess import AugmentConfig, DenoiseConfig, keep_main_cluster
from .segmenter import SegmenterConfig, aggregate_segment, segment_stream
from .synthgen import NoiseConfig, synth_dataset
from .trainer import TrainConfig, derive_seed, gradient_check, stratified_split

log = logging.getLogger("gestureprint")

CONFIG_SECTIONS = ("net", "train", "augment", "segmenter", "denoise", "noise", "pipeline", "metrics")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# configuration

def build_configs(overrides: dict[str, str], seed: int) -> tuple[pl.PipelineConfig, dict]:
    """Pipeline configuration plus the remaining sections (noise, metrics)."""
    unknown = [k for k in overrides if k.split(".", 1)[0] not in CONFIG_SECTIONS]
    if unknown:
        raise ValidationError(f"unknown config section in {unknown[0]!r}")
    preset = overrides.get("net.preset", "default")
    if preset not in gn.PRESETS:
        raise ValidationError(f"net.preset must be one of {sorted(gn.PRESETS)}")
    net = gio.apply_overrides(gn.PRESETS[preset](2),
                              {k: v for k, v in overrides.items() if k != "net.preset"}, "net")
    augment = gio.apply_overrides(AugmentConfig(), overrides, "augment")
    train = gio.apply_overrides(TrainConfig(seed=seed), overrides, "train")
    train = replace(train, augment=augment, seed=seed)
    seg = gio.apply_overrides(SegmenterConfig(), overrides, "segmenter")
    den = gio.apply_overrides(DenoiseConfig(), overrides, "denoise")
    cfgs = gio.apply_overrides(pl.PipelineConfig(net, train, seg, den, seed=seed), overrides, "pipeline")
    extra = {
        "noise": gio.apply_overrides(NoiseConfig(), overrides, "noise"),
        "voxel": float(overrides.get("metrics.voxel", 0.1)),
    }
    return cfgs, extra


def _dump(obj, path=None):
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _write_text(text, path=None):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _segment_dict(seg):
    return {"start_frame": seg.start_frame, "end_frame": seg.end_frame,
            "frame_count": seg.frame_count, "threshold": seg.threshold_used}


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args, cfgs, extra):
    out = Path(args.out)
    for sub in ("streams", "clouds"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    ds = synth_dataset(args.users, args.gestures, args.samples, args.seed, noise=extra["noise"],
                       seg_cfg=cfgs.segmenter, den_cfg=cfgs.denoise)
    for k, (stream, ann) in enumerate(ds.streams):
        name = f"stream_{k:03d}"
        gio.write_stream(stream, out / "streams" / f"{name}.jsonl")
        _dump([{"start_frame": e.start_frame, "end_frame": e.end_frame,
                "gesture": e.gesture_id, "user": e.user_id} for e in ann.events],
              out / "streams" / f"{name}.events.json")
    paths = []
    for k, c in enumerate(ds.clouds):
        paths.append(out / "clouds" / f"{k:05d}.json")
        gio.write_cloud(c, paths[-1])
    g_names = [f"{t.trajectory}-{t.gesture_id}" for t in ds.templates]
    u_names = [f"user-{p.user_id}" for p in ds.profiles]
    rows = list(zip(paths, ds.gestures, ds.users))
    gio.write_manifest(out / "manifest.json", rows, g_names, u_names)
    if args.split:
        cell = ds.gestures * len(ds.profiles) + ds.users
        tr, te = stratified_split(cell, args.split, args.seed)
        gio.write_manifest(out / "train.json", [rows[i] for i in tr], g_names, u_names)
        gio.write_manifest(out / "test.json", [rows[i] for i in te], g_names, u_names)
    _dump({"clouds": len(ds), "streams": len(ds.streams),
           "segmentation_misses": ds.segmentation_misses,
           "max_boundary_error": int(max(ds.boundary_errors, default=0))})


def cmd_segment(args, cfgs, extra):
    stream = gio.read_stream(args.stream)
    _dump([_segment_dict(s) for s in segment_stream(stream, cfgs.segmenter)], args.out)


def cmd_denoise(args, cfgs, extra):
    if args.cloud:
        c = gio.read_cloud(args.cloud)
        kept = keep_main_cluster(c, cfgs.denoise)
        gio.write_cloud(kept, args.out)
        _dump({"points_in": len(c), "points_kept": len(kept)})
        return
    stream = gio.read_stream(args.stream)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, seg in enumerate(segment_stream(stream, cfgs.segmenter)):
        raw = aggregate_segment(stream, seg)
        row = {"segment": _segment_dict(seg), "points_in": len(raw)}
        try:
            kept = keep_main_cluster(raw, cfgs.denoise)
            path = out / f"cloud_{k:03d}.json"
            gio.write_cloud(kept, path)
            row.update(points_kept=len(kept), path=path.name)
        except NoCluster as exc:
            row["error"] = f"NoCluster: {exc}"
        rows.append(row)
    _dump(rows)


def cmd_metrics(args, cfgs, extra):
    voxel = extra["voxel"]
    names = args.metric or list(METRICS)
    lines = []
    if args.manifest:
        clouds, gestures, users, _ = gio.read_manifest(args.manifest)
        lines.append("gesture,user_a,user_b,metric,value")
        for g in np.unique(gestures):
            coll = {u: CloudCollection([clouds[i] for i in np.flatnonzero((gestures == g) & (users == u))],
                                       int(g), int(u)) for u in np.unique(users[gestures == g])}
            for a in coll:
                for b in coll:
                    if a > b:
                        continue
                    for m in names:
                        v = collection_difference(coll[a], coll[b], m, voxel)
                        lines.append(f"{g},{a},{b},{m},{v!r}")
    else:
        if not (args.a and args.b):
            raise UsageError("metrics: give --manifest or both --a and --b")
        lines.append("a,b," + ",".join(names))
        for pa in args.a:
            for pb in args.b:
                ca, cb = gio.read_cloud(pa), gio.read_cloud(pb)
                vals = [METRICS[m](ca, cb, voxel) if m == "JSD" else METRICS[m](ca, cb) for m in names]
                lines.append(f"{pa},{pb}," + ",".join(repr(float(v)) for v in vals))
    _write_text("\n".join(lines) + "\n", args.out)


def cmd_train(args, cfgs, extra):
    clouds, gestures, users, _ = gio.read_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"task": args.task, "mode": args.mode, "n": len(clouds)}
    if args.task in ("gesture", "all"):
        gr, hist = pl.train_gesture_model(clouds, gestures, cfgs)
        gio.save_model(out / "gr.model", gr.cfg, gr.params)
        (out / "history_gr.csv").write_text(hist.to_csv())
        summary["gesture_final_loss"] = hist.loss[-1] if hist.loss else None
    if args.task in ("user", "all"):
        models, hists = pl.train_user_models(clouds, gestures, users, cfgs, args.mode)
        for key, m in models.items():
            gio.save_model(out / f"ui_{key}.model", m.cfg, m.params)
            (out / f"history_ui_{key}.csv").write_text(hists[key].to_csv())
        summary["user_models"] = [str(k) for k in models]
    if args.task == "all":
        gio.write_bundle_index(out, args.mode, list(models))
    _dump(summary)


def cmd_infer(args, cfgs, extra):
    bundle = gio.load_bundle(args.bundle)
    lines = []
    if args.stream:
        records = pl.infer(bundle, gio.read_stream(args.stream), cfgs)
        lines = [json.dumps(r.to_dict(), sort_keys=True) for r in records]
    else:
        clouds, _, _, _ = gio.read_manifest(args.manifest)
        res = pl.classify_clouds(bundle, clouds, cfgs.seed)
        for i in range(len(clouds)):
            lines.append(json.dumps({
                "index": i, "gesture": int(res.gesture[i]), "user": int(res.user[i]),
                "gesture_scores": res.gesture_scores[i].tolist(),
                "user_scores": res.user_scores[i].tolist(),
                "ui_model": res.ui_model_key[i]}, sort_keys=True))
    _write_text("".join(line + "\n" for line in lines), args.out)


def _read_predictions(path):
    rows = []
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError:
            raise gio.ParseError("invalid JSON", n) from None
    if not rows:
        raise gio.ParseError("no predictions", 1)
    return rows


def cmd_eval(args, cfgs, extra):
    rows = _read_predictions(args.predictions)
    _, gestures, users, _ = gio.read_manifest(args.truth)
    if len(rows) != gestures.size:
        raise LengthMismatch(f"{len(rows)} predictions for {gestures.size} labeled samples")
    mode = "parallel" if rows[0].get("ui_model") == "all" else "serialized"
    res = pl.Classification(
        np.array([r["gesture"] for r in rows]), np.array([r["user"] for r in rows]),
        np.array([r["gesture_scores"] for r in rows], dtype=np.float64),
        np.array([r["user_scores"] for r in rows], dtype=np.float64),
        [r.get("ui_model") for r in rows])
    report = pl.report_from_predictions(mode, gestures, users, res)
    _dump(report, args.out)
    if args.roc:
        roc = Path(args.roc)
        roc.mkdir(parents=True, exist_ok=True)
        eer_lines = ["user,eer,threshold"]
        for u, s in ev.user_score_sets(users, res.user_scores).items():
            (roc / f"roc_user_{u}.csv").write_text(ev.roc_csv(s))
            rate, thr = ev.eer(s)
            eer_lines.append(f"{u},{rate!r},{thr!r}")
        (roc / "eer.csv").write_text("\n".join(eer_lines) + "\n")


def cmd_benchmark(args, cfgs, extra):
    cfgs = pl.benchmark_config(args.seed) if args.preset else cfgs
    result = pl.run_benchmark(args.users, args.gestures, args.samples, cfgs, ablations=not args.no_ablation)
    if args.out:
        out = Path(args.out)
        gio.save_bundle(out / "serialized", result.serialized)
        gio.save_bundle(out / "parallel", result.parallel)
        _dump(result.report, out / "report.json")
    _dump(result.report)


def cmd_grad_check(args, cfgs, extra):
    rep = gradient_check(seed=args.seed, samples_per_block=args.samples_per_block)
    print(f"max relative error: {rep.max_error:.3e}")
    print(f"blocks checked: {len(rep.checked)}")
    print("PASS" if rep.passed else "FAIL")
    return 0 if rep.passed else 2


COMMANDS = {
    "synth": cmd_synth, "segment": cmd_segment, "denoise": cmd_denoise, "metrics": cmd_metrics,
    "train": cmd_train, "infer": cmd_infer, "eval": cmd_eval, "benchmark": cmd_benchmark,
    "grad-check": cmd_grad_check,
}


def make_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--config", help="key=value file, e.g. 'train.epochs=20'")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="gestureprint", description="Gesture recognition and user identification "
                "from radar point clouds.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate synthetic streams, clouds and a manifest")
    s.add_argument("--users", type=int, default=8)
    s.add_argument("--gestures", type=int, default=5)
    s.add_argument("--samples", type=int, default=40, help="samples per (user, gesture) cell")
    s.add_argument("--split", type=float, default=0.0, help="also write train/test manifests")
    s.add_argument("--out", required=True)

    s = sub.add_parser("segment", parents=[common], help="stream -> segments JSON")
    s.add_argument("--stream", required=True)
    s.add_argument("--out")

    s = sub.add_parser("denoise", parents=[common], help="keep the main cluster of each segment or cloud")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--stream")
    g.add_argument("--cloud")
    s.add_argument("--out", required=True, help="output directory (stream) or file (cloud)")

    s = sub.add_parser("metrics", parents=[common], help="HD/CD/JSD between clouds or collections -> CSV")
    s.add_argument("--manifest", help="per-gesture user-collection differences")
    s.add_argument("--a", nargs="+")
    s.add_argument("--b", nargs="+")
    s.add_argument("--metric", action="append", choices=list(METRICS))
    s.add_argument("--out")

    s = sub.add_parser("train", parents=[common], help="train gesture and/or user models")
    s.add_argument("--manifest", required=True)
    s.add_argument("--task", choices=("gesture", "user", "all"), default="all")
    s.add_argument("--mode", choices=pl.MODES, default="serialized")
    s.add_argument("--out", required=True)

    s = sub.add_parser("infer", parents=[common], help="bundle + stream or manifest -> JSONL")
    s.add_argument("--bundle", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--stream")
    g.add_argument("--manifest")
    s.add_argument("--out")

    s = sub.add_parser("eval", parents=[common], help="predictions + truth -> report JSON, ROC/EER CSV")
    s.add_argument("--predictions", required=True)
    s.add_argument("--truth", required=True, help="manifest with the true labels")
    s.add_argument("--out")
    s.add_argument("--roc", help="directory for per-user ROC curves and eer.csv")

    s = sub.add_parser("benchmark", parents=[common], help="end-to-end synthetic benchmark")
    s.add_argument("--users", type=int, default=8)
    s.add_argument("--gestures", type=int, default=5)
    s.add_argument("--samples", type=int, default=40)
    s.add_argument("--preset", action="store_true", help="use the shipped benchmark configuration")
    s.add_argument("--no-ablation", action="store_true")
    s.add_argument("--out")

    s = sub.add_parser("grad-check", parents=[common], help="finite-difference gradient check")
    s.add_argument("--samples-per-block", type=int, default=8)
    return p


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        overrides = gio.read_config_file(args.config) if args.config else {}
        cfgs, extra = build_configs(overrides, args.seed)
        return COMMANDS[args.command](args, cfgs, extra) or 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (GesturePrintError, OSError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
