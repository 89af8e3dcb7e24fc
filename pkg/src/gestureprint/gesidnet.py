"""Two-level set-abstraction point network with attention feature fusion.

Pipeline for one cloud of ``point_count`` centered points::

    sa1 -> f_s1 --global--> F1 --+--> fuse(F1, resize(F2)) -> head1 -> logits P1
     |                           |
    sa2 -> f_s2 --global--> F2 --+--> fuse(F2, resize(F1)) -> head2 -> logits P2

Every layer is a plain affine map (``x @ W + b``) followed by ReLU, except the
last layer of each head. Parameters live in a ``dict`` of named float arrays in
a fixed declaration order (see :func:`param_shapes`). Forward passes work on
batches; sampling and grouping depend only on the coordinates, so they are
computed once per cloud by :func:`build_geometry` and reused across epochs.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .cloud import GestureCloud
from .errors import EmptyCloud, LabelOutOfRange, NonFiniteActivation, ShapeMismatch, TraceMismatch, ValidationError


@dataclass(frozen=True)
class SAScale:
    radius: float
    group_size: int
    mlp: tuple[int, ...]

    def __post_init__(self):
        if not self.radius > 0 or self.group_size < 1 or not self.mlp:
            raise ValidationError(f"bad set-abstraction scale {self}")


@dataclass(frozen=True)
class SABlockSpec:
    centers: int
    scales: tuple[SAScale, ...]

    def __post_init__(self):
        if self.centers < 1 or not self.scales:
            raise ValidationError(f"bad set-abstraction block {self}")

    @property
    def out_dim(self) -> int:
        return sum(s.mlp[-1] for s in self.scales)


DEFAULT_SA1 = SABlockSpec(64, (SAScale(0.2, 16, (32, 32, 64)), SAScale(0.4, 32, (32, 32, 64))))
DEFAULT_SA2 = SABlockSpec(16, (SAScale(0.4, 16, (64, 64, 128)), SAScale(0.8, 32, (64, 64, 128))))


@dataclass(frozen=True)
class GesIDNetConfig:
    num_classes: int
    point_count: int = 256
    in_channels: int = 5
    sa1: SABlockSpec = DEFAULT_SA1
    sa2: SABlockSpec = DEFAULT_SA2
    level_dims: tuple[int, int] = (256, 512)
    head_fc_widths_l1: tuple[int, ...] = (128, 64)
    head_fc_widths_l2: tuple[int, ...] = (128,)
    fusion: bool = True

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        if self.in_channels not in (3, 5):
            raise ValidationError("in_channels must be 5 (x, y, z, doppler, intensity) or 3 (xyz only)")
        if self.point_count < 1 or len(self.level_dims) != 2:
            raise ValidationError("bad point_count / level_dims")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> GesIDNetConfig:
        d = dict(d)
        for key in ("sa1", "sa2"):
            blk = d[key]
            d[key] = SABlockSpec(blk["centers"], tuple(
                SAScale(s["radius"], s["group_size"], tuple(s["mlp"])) for s in blk["scales"]))
        for key in ("level_dims", "head_fc_widths_l1", "head_fc_widths_l2"):
            d[key] = tuple(d[key])
        return cls(**d)

    def with_classes(self, num_classes: int) -> GesIDNetConfig:
        return replace(self, num_classes=num_classes)


def tiny_config(num_classes: int = 2, point_count: int = 8, fusion: bool = True) -> GesIDNetConfig:
    """Small network used for gradient checks."""
    return GesIDNetConfig(
        num_classes=num_classes,
        point_count=point_count,
        sa1=SABlockSpec(4, (SAScale(0.5, 3, (4, 5)), SAScale(1.0, 4, (3,)))),
        sa2=SABlockSpec(2, (SAScale(1.0, 2, (6,)), SAScale(2.0, 3, (4, 5)))),
        level_dims=(7, 9),
        head_fc_widths_l1=(6, 5),
        head_fc_widths_l2=(4,),
        fusion=fusion,
    )


def compact_config(num_classes: int = 2, fusion: bool = True) -> GesIDNetConfig:
    """Reduced widths and 128 points; trains about 15x faster than the default."""
    return GesIDNetConfig(
        num_classes=num_classes,
        point_count=128,
        sa1=SABlockSpec(32, (SAScale(0.1, 8, (16, 32)), SAScale(0.25, 16, (16, 32)))),
        sa2=SABlockSpec(8, (SAScale(0.3, 8, (64,)), SAScale(0.6, 16, (64,)))),
        level_dims=(128, 256),
        head_fc_widths_l1=(64, 32),
        head_fc_widths_l2=(64,),
        fusion=fusion,
    )


PRESETS = {
    "default": lambda num_classes=2: GesIDNetConfig(num_classes=num_classes),
    "compact": compact_config,
    "tiny": tiny_config,
}


# ---------------------------------------------------------------------------
# parameters

def _affine(shapes, prefix, fan_in, widths):
    for i, w in enumerate(widths):
        shapes[f"{prefix}.l{i}.W"] = (fan_in, w)
        shapes[f"{prefix}.l{i}.b"] = (w,)
        fan_in = w


def param_shapes(cfg: GesIDNetConfig) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes in declaration order."""
    shapes: dict[str, tuple[int, ...]] = {}
    extra = cfg.in_channels - 3
    for j, sc in enumerate(cfg.sa1.scales):
        _affine(shapes, f"sa1.s{j}", 3 + extra, sc.mlp)
    for j, sc in enumerate(cfg.sa2.scales):
        _affine(shapes, f"sa2.s{j}", 3 + cfg.sa1.out_dim, sc.mlp)
    d1, d2 = cfg.level_dims
    _affine(shapes, "glob1", cfg.sa1.out_dim, (d1,))
    _affine(shapes, "glob2", cfg.sa2.out_dim, (d2,))
    if cfg.fusion:
        _affine(shapes, "resize21", d2, (d1,))
        _affine(shapes, "resize12", d1, (d2,))
        # the gate's bias would cancel inside the two-way softmax, so it has none
        shapes["gate1.w"] = (d1,)
        shapes["gate2.w"] = (d2,)
    _affine(shapes, "head1", d1, (*cfg.head_fc_widths_l1, cfg.num_classes))
    _affine(shapes, "head2", d2, (*cfg.head_fc_widths_l2, cfg.num_classes))
    return shapes


def init_params(cfg: GesIDNetConfig, seed: int) -> dict[str, np.ndarray]:
    """Uniform(+-sqrt(6 / fan_in)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            bound = np.sqrt(6.0 / shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def check_params(params: dict, cfg: GesIDNetConfig) -> None:
    shapes = param_shapes(cfg)
    if list(params) != list(shapes):
        raise ShapeMismatch("parameter names do not match the configuration")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ShapeMismatch(f"{name}: expected {shape}, got {params[name].shape}")


# ---------------------------------------------------------------------------
# geometry (parameter independent)

@dataclass
class Geometry:
    """Sampling/grouping indices for a stack of clouds.

    ``feats`` is ``(S, P, C)``; ``c1``/``g1`` index points, ``c2``/``g2`` index
    the level-1 centers.
    """
    feats: np.ndarray
    c1: np.ndarray
    g1: list[np.ndarray]
    c2: np.ndarray
    g2: list[np.ndarray]

    def __len__(self):
        return self.feats.shape[0]

    def take(self, idx) -> Geometry:
        return Geometry(self.feats[idx], self.c1[idx], [g[idx] for g in self.g1],
                        self.c2[idx], [g[idx] for g in self.g2])


def farthest_point_sample(xyz, n: int, seed: int = 0) -> np.ndarray:
    """Farthest-point sampling starting from index 0.

    ``seed`` is accepted for interface symmetry; the start is the first point of
    the (already seeded) resample, so the result is deterministic.
    """
    xyz = np.ascontiguousarray(np.asarray(xyz, dtype=np.float64)[:, :3])
    if xyz.shape[0] == 0:
        raise EmptyCloud("cannot sample from an empty cloud")
    if n < 1:
        raise ValidationError("n must be >= 1")
    return kernels.farthest_point_sample(xyz, int(n), 0)


def ball_query_group(xyz, centers, radius: float, m: int) -> np.ndarray:
    """Up to ``m`` nearest points within ``radius`` of each center index, padded."""
    if not radius > 0 or m < 1:
        raise ValidationError("radius must be > 0 and m >= 1")
    xyz = np.ascontiguousarray(np.asarray(xyz, dtype=np.float64)[:, :3])
    return kernels.ball_query(xyz, np.asarray(centers, dtype=np.int64), float(radius), int(m))


def _cloud_geometry(pts, cfg):
    xyz = np.ascontiguousarray(pts[:, :3])
    c1 = farthest_point_sample(xyz, cfg.sa1.centers)
    g1 = [ball_query_group(xyz, c1, s.radius, s.group_size) for s in cfg.sa1.scales]
    xyz1 = np.ascontiguousarray(xyz[c1])
    c2 = farthest_point_sample(xyz1, cfg.sa2.centers)
    g2 = [ball_query_group(xyz1, c2, s.radius, s.group_size) for s in cfg.sa2.scales]
    return c1, g1, c2, g2


def build_geometry(point_sets, cfg: GesIDNetConfig) -> Geometry:
    """Precompute grouping for clouds that are already centered and resampled."""
    sets = [np.asarray(p.points if isinstance(p, GestureCloud) else p, dtype=np.float64)
            for p in point_sets]
    for p in sets:
        if p.shape != (cfg.point_count, 5):
            raise ShapeMismatch(f"expected ({cfg.point_count}, 5) points, got {p.shape}")
    parts = [_cloud_geometry(p, cfg) for p in sets]
    feats = np.stack(sets)[:, :, :cfg.in_channels]
    return Geometry(
        feats,
        np.stack([p[0] for p in parts]),
        [np.stack([p[1][j] for p in parts]) for j in range(len(cfg.sa1.scales))],
        np.stack([p[2] for p in parts]),
        [np.stack([p[3][j] for p in parts]) for j in range(len(cfg.sa2.scales))],
    )


# ---------------------------------------------------------------------------
# building blocks

def _relu(x):
    return np.maximum(x, 0.0)


def _mlp_forward(x2d, params, prefix, n_layers, last_linear=False):
    acts = [x2d]
    for i in range(n_layers):
        z = acts[-1] @ params[f"{prefix}.l{i}.W"] + params[f"{prefix}.l{i}.b"]
        acts.append(z if (last_linear and i == n_layers - 1) else _relu(z))
    return acts


def _mlp_backward(acts, dout, params, grads, prefix, last_linear=False, need_input=True):
    n_layers = len(acts) - 1
    d = dout
    for i in reversed(range(n_layers)):
        if not (last_linear and i == n_layers - 1):
            d = d * (acts[i + 1] > 0)
        grads[f"{prefix}.l{i}.W"] += acts[i].T @ d
        grads[f"{prefix}.l{i}.b"] += d.sum(axis=0)
        if i > 0 or need_input:
            d = d @ params[f"{prefix}.l{i}.W"].T
    return d if need_input else None


def _maxpool(h, axis):
    arg = np.argmax(h, axis=axis)  # first index on ties
    return np.take_along_axis(h, np.expand_dims(arg, axis), axis).squeeze(axis), arg


def _maxpool_backward(shape, arg, dy, axis):
    dh = np.zeros(shape)
    np.put_along_axis(dh, np.expand_dims(arg, axis), np.expand_dims(dy, axis), axis)
    return dh


def _group(feats, xyz, centers, groups, radius):
    """Gather grouped features with center-relative coordinates: ``(B, nc, m, 3 + C)``.

    Offsets are divided by the ball radius so they are O(1) at every scale.
    """
    bi = np.arange(feats.shape[0])[:, None, None]
    rel = (xyz[bi, groups] - xyz[bi[:, :, 0], centers][:, :, None, :]) / radius
    if feats.shape[-1] == 0:
        return rel
    return np.concatenate([rel, feats[bi, groups]], axis=-1)


def _sa_forward(feats, xyz, centers, groups, spec, params, block):
    """Batched set abstraction; returns (f_s (B, nc, sum widths), per-scale caches)."""
    outs, caches = [], []
    for j, (sc, g) in enumerate(zip(spec.scales, groups)):
        x = _group(feats, xyz, centers, g, sc.radius)
        b, nc, m, cin = x.shape
        acts = _mlp_forward(x.reshape(-1, cin), params, f"{block}.s{j}", len(sc.mlp))
        h = acts[-1].reshape(b, nc, m, -1)
        pooled, arg = _maxpool(h, axis=2)
        outs.append(pooled)
        caches.append((acts, arg, h.shape))
    return np.concatenate(outs, axis=-1), caches


def _sa_backward(dfs, caches, spec, params, grads, block, need_input):
    """Returns gradient w.r.t. the grouped input tensors (one per scale) or None."""
    d_inputs = []
    start = 0
    for j, (sc, (acts, arg, hshape)) in enumerate(zip(spec.scales, caches)):
        w = sc.mlp[-1]
        dh = _maxpool_backward(hshape, arg, dfs[..., start:start + w], axis=2)
        start += w
        dx = _mlp_backward(acts, dh.reshape(-1, w), params, grads, f"{block}.s{j}",
                           need_input=need_input)
        if need_input:
            d_inputs.append(dx.reshape(hshape[:3] + (-1,)))
    return d_inputs if need_input else None


def sa_block_forward(points, spec: SABlockSpec, params: dict, block: str = "sa1",
                     centers=None, groups=None):
    """Set abstraction on one cloud ``(n, 3 + C)`` -> (center_xyz, f_s per center).

    ``centers``/``groups`` default to farthest-point sampling and ball query.
    """
    pts = np.asarray(points, dtype=np.float64)
    xyz = np.ascontiguousarray(pts[:, :3])
    if centers is None:
        centers = farthest_point_sample(xyz, spec.centers)
    if groups is None:
        groups = [ball_query_group(xyz, centers, s.radius, s.group_size) for s in spec.scales]
    try:
        fs, _ = _sa_forward(pts[None, :, 3:], xyz[None], np.asarray(centers)[None],
                            [np.asarray(g)[None] for g in groups], spec, params, block)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from exc
    return xyz[centers], fs[0]


def global_feature(fs, params: dict, level: int) -> np.ndarray:
    """Pointwise MLP over the centers' features, then max-pool over centers."""
    fs = np.asarray(fs, dtype=np.float64)
    if fs.ndim != 2 or fs.shape[0] == 0:
        raise ShapeMismatch("global_feature needs a non-empty (centers, dim) array")
    try:
        acts = _mlp_forward(fs, params, f"glob{level}", 1)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from exc
    return acts[-1].max(axis=0)


def resize_feature(f, params: dict, from_level: int, to_level: int) -> np.ndarray:
    name = f"resize{from_level}{to_level}"
    w = params[f"{name}.l0.W"]
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != w.shape[0]:
        raise ShapeMismatch(f"{name} expects dim {w.shape[0]}, got {f.shape[-1]}")
    return _relu(f @ w + params[f"{name}.l0.b"])


def _sigmoid(u):
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def attention_fuse(f_native, f_resized, gate_w):
    """Convex combination weighted by a two-way softmax of shared scalar gates.

    Works on single vectors or on batches (leading axis). Returns
    ``(Y, w_native, w_resized)`` with ``w_native + w_resized == 1`` exactly.
    """
    fn = np.asarray(f_native, dtype=np.float64)
    fr = np.asarray(f_resized, dtype=np.float64)
    g = np.asarray(gate_w, dtype=np.float64)
    if fn.shape != fr.shape or fn.shape[-1] != g.shape[0]:
        raise ShapeMismatch("fusion inputs and gate must share the level dimension")
    u = np.atleast_1d(fr @ g - fn @ g)
    w_r = _sigmoid(u)
    w_n = 1.0 - w_r
    if fn.ndim == 1:
        return w_r[0] * fr + w_n[0] * fn, float(w_n[0]), float(w_r[0])
    return w_r[:, None] * fr + w_n[:, None] * fn, w_n, w_r


def _fuse_backward(dy, fn, fr, g, w_n, w_r):
    du = ((dy * fr).sum(axis=1) - (dy * fn).sum(axis=1)) * w_r * w_n
    dfr = w_r[:, None] * dy + du[:, None] * g[None, :]
    dfn = w_n[:, None] * dy - du[:, None] * g[None, :]
    dg = du @ fr - du @ fn
    return dfn, dfr, dg


# ---------------------------------------------------------------------------
# full network

@dataclass
class ForwardTrace:
    """Activations retained for :func:`backward`."""
    logits1: np.ndarray
    logits2: np.ndarray
    fusion_weights: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def batch_size(self) -> int:
        return self.logits1.shape[0]


def forward_batch(params: dict, geom: Geometry, cfg: GesIDNetConfig) -> ForwardTrace:
    feats = geom.feats
    xyz = feats[..., :3]
    bi = np.arange(feats.shape[0])[:, None]
    f1, sa1_c = _sa_forward(feats[..., 3:], xyz, geom.c1, geom.g1, cfg.sa1, params, "sa1")
    xyz1 = xyz[bi, geom.c1]
    f2, sa2_c = _sa_forward(f1, xyz1, geom.c2, geom.g2, cfg.sa2, params, "sa2")

    b, n1, w1 = f1.shape
    _, n2, w2 = f2.shape
    g1_acts = _mlp_forward(f1.reshape(-1, w1), params, "glob1", 1)
    F1, g1_arg = _maxpool(g1_acts[-1].reshape(b, n1, -1), axis=1)
    g2_acts = _mlp_forward(f2.reshape(-1, w2), params, "glob2", 1)
    F2, g2_arg = _maxpool(g2_acts[-1].reshape(b, n2, -1), axis=1)

    weights = {}
    cache = dict(sa1=sa1_c, sa2=sa2_c, f1_shape=f1.shape, geom=geom,
                 g1_acts=g1_acts, g1_arg=g1_arg, g2_acts=g2_acts, g2_arg=g2_arg, F1=F1, F2=F2)
    if cfg.fusion:
        R21 = resize_feature(F2, params, 2, 1)
        R12 = resize_feature(F1, params, 1, 2)
        Y1, wn1, wr1 = attention_fuse(F1, R21, params["gate1.w"])
        Y2, wn2, wr2 = attention_fuse(F2, R12, params["gate2.w"])
        weights = {"l1": (wn1, wr1), "l2": (wn2, wr2)}
        cache.update(R21=R21, R12=R12)
    else:
        Y1, Y2 = F1, F2
    h1 = _mlp_forward(Y1, params, "head1", len(cfg.head_fc_widths_l1) + 1, last_linear=True)
    h2 = _mlp_forward(Y2, params, "head2", len(cfg.head_fc_widths_l2) + 1, last_linear=True)
    cache.update(h1=h1, h2=h2)
    logits1, logits2 = h1[-1], h2[-1]
    if not (np.all(np.isfinite(logits1)) and np.all(np.isfinite(logits2))):
        raise NonFiniteActivation("non-finite logits")
    return ForwardTrace(logits1, logits2, weights, cache)


def _cloud_points(cloud):
    return cloud.points if isinstance(cloud, GestureCloud) else np.asarray(cloud, dtype=np.float64)


def forward(params: dict, cloud, cfg: GesIDNetConfig):
    """Single-cloud forward pass -> ``(logits_P1, logits_P2, trace)``.

    ``cloud`` must already be centered and resampled to ``cfg.point_count``.
    """
    tr = forward_batch(params, build_geometry([_cloud_points(cloud)], cfg), cfg)
    return tr.logits1[0], tr.logits2[0], tr


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits):
    z = np.exp(logits - np.max(logits, axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def _check_labels(labels, num_classes):
    labels = np.atleast_1d(np.asarray(labels))
    if labels.dtype.kind not in "iu" or np.any(labels < 0) or np.any(labels >= num_classes):
        raise LabelOutOfRange(f"labels must be integers in [0, {num_classes})")
    return labels.astype(np.int64)


def per_sample_losses(logits1, logits2, labels):
    labels = _check_labels(labels, logits1.shape[-1])
    rows = np.arange(labels.shape[0])
    l1 = -log_softmax(np.atleast_2d(logits1))[rows, labels]
    l2 = -log_softmax(np.atleast_2d(logits2))[rows, labels]
    return l1 + l2, l1, l2


def total_loss(logits_P1, logits_P2, label):
    """Primary plus auxiliary cross-entropy: ``(L, L1, L2)``."""
    lt, l1, l2 = per_sample_losses(np.asarray(logits_P1, float), np.asarray(logits_P2, float), label)
    return float(lt[0]), float(l1[0]), float(l2[0])


def backward(params: dict, trace: ForwardTrace, labels, cfg: GesIDNetConfig,
             scale: float | None = None) -> dict[str, np.ndarray]:
    """Exact gradient of ``scale * sum_b (L1_b + L2_b)``; ``scale`` defaults to ``1/B``.

    Max-pool routes the whole gradient to the first maximal element.
    """
    labels = _check_labels(labels, cfg.num_classes)
    b = trace.batch_size
    if labels.shape[0] != b or "h1" not in trace.cache:
        raise TraceMismatch("labels/trace do not come from the same forward call")
    if scale is None:
        scale = 1.0 / b
    c = trace.cache
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    if set(grads) != set(param_shapes(cfg)):
        raise TraceMismatch("parameters do not match the configuration")

    onehot = np.zeros_like(trace.logits1)
    onehot[np.arange(b), labels] = 1.0
    d1 = (softmax(trace.logits1) - onehot) * scale
    d2 = (softmax(trace.logits2) - onehot) * scale
    dY1 = _mlp_backward(c["h1"], d1, params, grads, "head1", last_linear=True)
    dY2 = _mlp_backward(c["h2"], d2, params, grads, "head2", last_linear=True)

    F1, F2 = c["F1"], c["F2"]
    if cfg.fusion:
        wn1, wr1 = trace.fusion_weights["l1"]
        wn2, wr2 = trace.fusion_weights["l2"]
        dF1, dR21, grads["gate1.w"] = _fuse_backward(dY1, F1, c["R21"], params["gate1.w"], wn1, wr1)
        dF2, dR12, grads["gate2.w"] = _fuse_backward(dY2, F2, c["R12"], params["gate2.w"], wn2, wr2)
        dF2 = dF2 + _mlp_backward([F2, c["R21"]], dR21, params, grads, "resize21")
        dF1 = dF1 + _mlp_backward([F1, c["R12"]], dR12, params, grads, "resize12")
    else:
        dF1, dF2 = dY1, dY2

    _, n1, w1 = c["f1_shape"]
    g2a = c["g2_acts"]
    n2 = g2a[-1].shape[0] // b
    dh = _maxpool_backward((b, n2, g2a[-1].shape[1]), c["g2_arg"], dF2, axis=1)
    df2 = _mlp_backward(g2a, dh.reshape(b * n2, -1), params, grads, "glob2").reshape(b, n2, -1)
    g1a = c["g1_acts"]
    dh = _maxpool_backward((b, n1, g1a[-1].shape[1]), c["g1_arg"], dF1, axis=1)
    df1 = _mlp_backward(g1a, dh.reshape(b * n1, -1), params, grads, "glob1").reshape(b, n1, w1)

    geom = c["geom"]
    dx2 = _sa_backward(df2, c["sa2"], cfg.sa2, params, grads, "sa2", need_input=True)
    # route grouped-feature gradients back to the level-1 centers
    flat = df1.reshape(b * n1, w1)
    offs = (np.arange(b) * n1)[:, None, None]
    for dx, g in zip(dx2, geom.g2):
        idx = (g + offs).reshape(-1)
        kernels.scatter_add_rows(flat, idx, np.ascontiguousarray(dx[..., 3:].reshape(-1, w1)))
    _sa_backward(flat.reshape(b, n1, w1), c["sa1"], cfg.sa1, params, grads, "sa1", need_input=False)
    return grads


def predict_logits(logits):
    return int(np.argmax(logits))  # lowest index on ties


def predict(params: dict, cloud, cfg: GesIDNetConfig) -> int:
    logits1, _, _ = forward(params, cloud, cfg)
    return predict_logits(logits1)
