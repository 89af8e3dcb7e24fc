"""Text file formats: frame streams, clouds, manifests, model files and config files.

Stream files are JSON Lines. The first line is a header
``{"frame_rate": 10.0, "meta": {...}}``; every further line is one frame
``{"frame": 0, "t": 0.0, "points": [[x, y, z, doppler, intensity], ...]}``.

Model files are line oriented::

    gestureprint-model 1
    config {...json...}
    params <count>
    <name> <shape as AxB>
    <values, %.17g, space separated>
    ...
    end
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from . import gesidnet as gn
from .cloud import Frame, FrameStream, GestureCloud
from .errors import NonMonotoneFrames, ParseError, ShapeMismatch, ValidationError, VersionMismatch

MODEL_MAGIC = "gestureprint-model"
MODEL_VERSION = 1


# ---------------------------------------------------------------------------
# streams

def stream_to_lines(stream: FrameStream):
    yield json.dumps({"frame_rate": stream.frame_rate, "meta": stream.meta}, sort_keys=True)
    for f in stream.frames:
        yield json.dumps({"frame": f.index, "t": f.t, "points": f.points.tolist()})


def write_stream(stream: FrameStream, path) -> None:
    with open(path, "w") as fh:
        for line in stream_to_lines(stream):
            fh.write(line + "\n")


def parse_stream(lines) -> FrameStream:
    header = None
    frames = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", n) from None
        if header is None:
            if "frame_rate" not in rec:
                raise ParseError("first line must be the header with 'frame_rate'", n)
            header = rec
            continue
        try:
            idx, t, pts = int(rec["frame"]), float(rec["t"]), rec["points"]
            frame = Frame(idx, t, np.asarray(pts, dtype=np.float64).reshape(-1, 5) if pts else None)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad frame record: {exc}", n) from None
        if frames and frame.index <= frames[-1].index:
            raise NonMonotoneFrames(f"line {n}: frame {frame.index} after frame {frames[-1].index}")
        frames.append(frame)
    if header is None:
        raise ParseError("empty stream file", 1)
    return FrameStream(frames, float(header["frame_rate"]), dict(header.get("meta", {})))


def read_stream(path) -> FrameStream:
    with open(path) as fh:
        return parse_stream(fh)


# ---------------------------------------------------------------------------
# clouds and manifests

def write_cloud(cloud: GestureCloud, path) -> None:
    Path(path).write_text(json.dumps({
        "start_frame": cloud.start_frame, "end_frame": cloud.end_frame,
        "source": cloud.source, "points": cloud.points.tolist()}) + "\n")


def read_cloud(path) -> GestureCloud:
    try:
        rec = json.loads(Path(path).read_text())
        pts = np.asarray(rec["points"], dtype=np.float64).reshape(-1, 5)
        return GestureCloud(pts, int(rec["start_frame"]), int(rec["end_frame"]), rec.get("source", ""))
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ParseError(f"{path}: bad cloud file ({exc})") from None


def write_manifest(path, entries, gesture_names, user_names) -> None:
    """``entries``: iterable of (cloud path, gesture label, user label); paths stored relative."""
    base = Path(path).parent
    samples = []
    for p, g, u in entries:
        p = Path(p)
        samples.append({"path": str(p.relative_to(base) if p.is_absolute() or base != Path(".") and
                                    str(p).startswith(str(base)) else p),
                        "gesture": int(g), "user": int(u)})
    Path(path).write_text(json.dumps({
        "labels": {"gesture": list(gesture_names), "user": list(user_names)},
        "samples": samples}, indent=1) + "\n")


def read_manifest(path):
    """-> (clouds, gestures, users, label dictionaries)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        samples = doc["samples"]
        labels = doc["labels"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise ParseError(f"{path}: bad manifest ({exc})") from None
    clouds = [read_cloud(path.parent / s["path"]) for s in samples]
    gestures = np.array([s["gesture"] for s in samples], dtype=np.int64)
    users = np.array([s["user"] for s in samples], dtype=np.int64)
    for name, arr in (("gesture", gestures), ("user", users)):
        if arr.size and (arr.min() < 0 or arr.max() >= len(labels[name])):
            raise ValidationError(f"{name} labels must be dense integers 0..C-1")
    return clouds, gestures, users, labels


# ---------------------------------------------------------------------------
# models

def model_to_text(cfg: gn.GesIDNetConfig, params: dict) -> str:
    gn.check_params(params, cfg)
    lines = [f"{MODEL_MAGIC} {MODEL_VERSION}",
             "config " + json.dumps(cfg.to_dict(), sort_keys=True),
             f"params {len(params)}"]
    for name, arr in params.items():
        lines.append(f"{name} {'x'.join(str(d) for d in arr.shape)}")
        lines.append(" ".join("%.17g" % v for v in arr.reshape(-1)))
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_model(path, cfg: gn.GesIDNetConfig, params: dict) -> None:
    Path(path).write_text(model_to_text(cfg, params))


def model_from_text(text: str, expected: gn.GesIDNetConfig | None = None):
    lines = text.split("\n")

    def line(i):
        if i >= len(lines) or (not lines[i] and i == len(lines) - 1):
            raise ParseError("model file is truncated", i + 1)
        return lines[i]

    head = line(0).split()
    if len(head) != 2 or head[0] != MODEL_MAGIC:
        raise ParseError("not a model file", 1)
    if head[1] != str(MODEL_VERSION):
        raise VersionMismatch(f"model format version {head[1]}, expected {MODEL_VERSION}")
    if not line(1).startswith("config "):
        raise ParseError("expected config line", 2)
    try:
        cfg = gn.GesIDNetConfig.from_dict(json.loads(line(1)[len("config "):]))
        count = int(line(2).split()[1])
    except (json.JSONDecodeError, KeyError, TypeError, IndexError, ValueError) as exc:
        raise ParseError(f"bad model header ({exc})", 2) from None
    if expected is not None and expected != cfg:
        raise ShapeMismatch("model configuration differs from the expected one")
    params = {}
    i = 3
    for _ in range(count):
        name, shape_txt = line(i).split()
        shape = tuple(int(d) for d in shape_txt.split("x")) if shape_txt else ()
        try:
            values = np.array([float(v) for v in line(i + 1).split()], dtype=np.float64)
        except ValueError:
            raise ParseError(f"bad values for {name}", i + 2) from None
        if values.size != int(np.prod(shape)):
            raise ParseError(f"{name}: expected {int(np.prod(shape))} values, got {values.size}", i + 2)
        params[name] = values.reshape(shape)
        i += 2
    if line(i).strip() != "end":
        raise ParseError("missing end marker", i + 1)
    gn.check_params(params, cfg)
    return cfg, params


def load_model(path, expected: gn.GesIDNetConfig | None = None):
    return model_from_text(Path(path).read_text(), expected)


def write_bundle_index(directory, mode: str, ui_keys) -> None:
    """``bundle.json`` naming ``gr.model`` and ``ui_<key>.model`` files already in ``directory``."""
    ui = {str(k): f"ui_{k}.model" for k in ui_keys}
    doc = {"mode": mode, "gr": "gr.model", "ui": ui}
    (Path(directory) / "bundle.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def save_bundle(directory, bundle) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_model(d / "gr.model", bundle.gr_model.cfg, bundle.gr_model.params)
    models = bundle.ui_models if bundle.mode == "serialized" else {"all": bundle.ui_model}
    for key, m in models.items():
        save_model(d / f"ui_{key}.model", m.cfg, m.params)
    write_bundle_index(d, bundle.mode, list(models))


def load_bundle(directory):
    from .pipeline import Model, ParallelBundle, SerializedBundle

    d = Path(directory)
    try:
        doc = json.loads((d / "bundle.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{d}: bad bundle ({exc})") from None
    try:
        mode, gr_path, ui = doc["mode"], doc["gr"], doc["ui"]
    except KeyError as exc:
        raise ParseError(f"{d}: bundle.json lacks {exc}") from None
    gr = Model(*load_model(d / gr_path))
    if mode == "parallel":
        return ParallelBundle(gr, Model(*load_model(d / ui["all"])))
    return SerializedBundle(gr, {int(g): Model(*load_model(d / p)) for g, p in ui.items()})


# ---------------------------------------------------------------------------
# key=value config files

def read_config_file(path) -> dict[str, str]:
    """``section.key=value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {raw!r}", n)
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _coerce(value: str, like):
    if isinstance(like, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"expected a boolean, got {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, tuple):
        return tuple(int(v) for v in value.split(",") if v.strip())
    return value


def apply_overrides(obj, overrides: dict[str, str], prefix: str):
    """Return a copy of dataclass ``obj`` with ``prefix.field`` overrides applied."""
    changes = {}
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in overrides.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1:]
        if name not in names:
            raise ValidationError(f"unknown config key {key!r}")
        current = getattr(obj, name)
        if dataclasses.is_dataclass(current):
            continue
        try:
            changes[name] = _coerce(value, current)
        except ValueError:
            raise ValidationError(f"bad value for {key}: {value!r}") from None
    return dataclasses.replace(obj, **changes) if changes else obj
