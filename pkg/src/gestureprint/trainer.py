"""Deterministic training: stratified splits, k-fold, the optimization loop and a gradient check."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import gesidnet as gn
from .cloud import GestureCloud, normalize_center, resample_fixed
from .errors import ClassTooSmall, DivergenceDetected, EmptyDataset, ValidationError
from .preprocess import AugmentConfig, jitter_augment

log = logging.getLogger(__name__)

OPTIMIZERS = ("adaptive-moment", "plain-sgd")
SCHEDULES = ("constant", "cosine")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 60
    batch: int = 16
    seed: int = 0
    split_ratio: float = 0.8
    folds: int = 5
    optimizer: str = "adaptive-moment"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    augment: AugmentConfig = AugmentConfig()
    lr_schedule: str = "constant"
    # redraw the resample and the jittered copies every epoch instead of once
    refresh_inputs: bool = False

    def __post_init__(self):
        if not 0 < self.split_ratio < 1:
            raise ValidationError("split_ratio must lie in (0, 1)")
        if self.folds < 2:
            raise ValidationError("folds must be >= 2")
        if self.lr < 0 or self.epochs < 0 or self.batch < 1:
            raise ValidationError("need lr >= 0, epochs >= 0, batch >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"optimizer must be one of {OPTIMIZERS}")
        if self.lr_schedule not in SCHEDULES:
            raise ValidationError(f"lr_schedule must be one of {SCHEDULES}")

    def lr_at(self, epoch: int) -> float:
        if self.lr_schedule == "cosine":
            return self.lr * 0.5 * (1.0 + np.cos(np.pi * epoch / self.epochs))
        return self.lr


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    loss1: list[float] = field(default_factory=list)
    loss2: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)
    test_accuracy: float | None = None

    def __len__(self):
        return len(self.loss)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "L", "L1", "L2", "acc"])
        for e, row in enumerate(zip(self.loss, self.loss1, self.loss2, self.accuracy)):
            w.writerow([e, *(repr(float(v)) for v in row)])
        return buf.getvalue()


def derive_seed(*keys: int) -> int:
    """Stable 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# splits

def _class_members(labels, minimum):
    labels = np.asarray(labels)
    out = {}
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.size < minimum:
            raise ClassTooSmall(f"class {c} has {members.size} samples, need >= {minimum}")
        out[c] = members
    return out


def stratified_split(labels, ratio: float = 0.8, seed: int = 0):
    """Per-class shuffled split -> sorted ``(train_idx, test_idx)``.

    Each class sends ``ceil(ratio * n)`` samples to train (at most ``n - 1``).
    """
    if not 0 < ratio < 1:
        raise ValidationError("ratio must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for _, members in sorted(_class_members(labels, 2).items()):
        members = rng.permutation(members)
        k = min(members.size - 1, int(np.ceil(ratio * members.size - 1e-9)))
        train.append(members[:k])
        test.append(members[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def kfold(labels, folds: int = 5, seed: int = 0):
    """Stratified folds; every sample lands in exactly one test fold."""
    if folds < 2:
        raise ValidationError("folds must be >= 2")
    rng = np.random.default_rng(seed)
    assign = np.empty(len(labels), dtype=np.int64)
    for _, members in sorted(_class_members(labels, folds).items()):
        members = rng.permutation(members)
        assign[members] = np.arange(members.size) % folds
    everything = np.arange(len(labels))
    return [(everything[assign != f], everything[assign == f]) for f in range(folds)]


# ---------------------------------------------------------------------------
# inputs

def condition(cloud: GestureCloud, point_count: int, seed: int) -> np.ndarray:
    """Center and resample one cloud to the network's fixed size."""
    return resample_fixed(normalize_center(cloud), point_count, seed).points


def prepare_inputs(clouds, net_cfg: gn.GesIDNetConfig, seed: int,
                   augment: AugmentConfig | None = None):
    """Condition clouds (plus jittered copies) and precompute their geometry.

    Returns ``(geometry, origin)`` where ``origin[k]`` is the index of the source
    cloud of row ``k``.
    """
    pts, origin = [], []
    for i, c in enumerate(clouds):
        variants = [c]
        if augment is not None and augment.copies > 0:
            variants += jitter_augment(c, augment, derive_seed(seed, i, 1))
        for k, v in enumerate(variants):
            pts.append(condition(v, net_cfg.point_count, derive_seed(seed, i, 2, k)))
            origin.append(i)
    return gn.build_geometry(pts, net_cfg), np.asarray(origin, dtype=np.int64)


# ---------------------------------------------------------------------------
# optimization

class _Optimizer:
    def __init__(self, cfg: TrainConfig, params):
        self.cfg = cfg
        self.t = 0
        if cfg.optimizer == "adaptive-moment":
            self.m = {k: np.zeros_like(v) for k, v in params.items()}
            self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads, lr):
        cfg = self.cfg
        self.t += 1
        if cfg.optimizer == "plain-sgd":
            for k in params:
                params[k] -= lr * grads[k]
            return
        c1 = 1.0 - cfg.beta1 ** self.t
        c2 = 1.0 - cfg.beta2 ** self.t
        for k in params:
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


def train(clouds, labels, cfg: TrainConfig, net_cfg: gn.GesIDNetConfig, test=None,
          augment: bool = True):
    """Fit a network on ``clouds`` with integer ``labels``.

    Jittered copies are generated here, after any train/test split, so they
    never leak across it. ``test`` is an optional ``(clouds, labels)`` pair
    used to fill ``history.test_accuracy``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(clouds) == 0:
        raise EmptyDataset("training set is empty")
    if len(clouds) != labels.size:
        raise ValidationError("clouds and labels differ in length")
    if np.unique(labels).size < 2:
        raise ValidationError("training needs at least two classes")

    aug = cfg.augment if augment else None
    geom, origin = prepare_inputs(clouds, net_cfg, cfg.seed, aug)
    y = labels[origin]
    n = len(geom)
    params = gn.init_params(net_cfg, cfg.seed)
    opt = _Optimizer(cfg, params)
    hist = TrainHistory()
    for epoch in range(cfg.epochs):
        if cfg.refresh_inputs and epoch > 0:
            geom, _ = prepare_inputs(clouds, net_cfg, derive_seed(cfg.seed, 3, epoch), aug)
        lr = cfg.lr_at(epoch)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        lt = np.empty(n)
        l1 = np.empty(n)
        l2 = np.empty(n)
        hit = np.empty(n, dtype=bool)
        for s in range(0, n, cfg.batch):
            idx = order[s:s + cfg.batch]
            tr = gn.forward_batch(params, geom.take(idx), net_cfg)
            lt[idx], l1[idx], l2[idx] = gn.per_sample_losses(tr.logits1, tr.logits2, y[idx])
            if not np.all(np.isfinite(lt[idx])):
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}, step {s // cfg.batch}")
            hit[idx] = np.argmax(tr.logits1, axis=1) == y[idx]
            opt.step(params, gn.backward(params, tr, y[idx], net_cfg), lr)
        hist.loss.append(float(lt.mean()))
        hist.loss1.append(float(l1.mean()))
        hist.loss2.append(float(l2.mean()))
        hist.accuracy.append(float(hit.mean()))
        log.debug("epoch %d  L=%.4f  acc=%.3f", epoch, hist.loss[-1], hist.accuracy[-1])
    if test is not None:
        tc, tl = test
        pred = predict_many(params, tc, net_cfg, cfg.seed)
        hist.test_accuracy = float(np.mean(pred == np.asarray(tl)))
    return params, hist


def logits_many(params, clouds, net_cfg: gn.GesIDNetConfig, seed: int = 0, batch: int = 64):
    """Primary logits for many clouds, conditioned with per-index seeds."""
    if len(clouds) == 0:
        return np.zeros((0, net_cfg.num_classes))
    geom, _ = prepare_inputs(clouds, net_cfg, seed)
    out = [gn.forward_batch(params, geom.take(np.arange(s, min(s + batch, len(geom)))), net_cfg).logits1
           for s in range(0, len(geom), batch)]
    return np.concatenate(out)


def predict_many(params, clouds, net_cfg, seed: int = 0):
    return np.argmax(logits_many(params, clouds, net_cfg, seed), axis=1)


# ---------------------------------------------------------------------------
# gradient check

@dataclass
class GradCheckReport:
    errors: dict[str, float]
    checked: dict[str, int]
    skipped: dict[str, int]
    tolerance: float = 1e-4

    @property
    def max_error(self) -> float:
        return max(self.errors.values())

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance and all(v > 0 for v in self.checked.values())


def _activation_pattern(trace):
    """Every ReLU on/off bit and max-pool winner of a forward pass."""
    c = trace.cache
    parts = []
    for block in ("sa1", "sa2"):
        for acts, arg, _ in c[block]:
            parts += [a > 0 for a in acts[1:]] + [arg]
    for key in ("g1", "g2"):
        parts += [c[f"{key}_acts"][-1] > 0, c[f"{key}_arg"]]
    for key in ("R21", "R12"):
        if key in c:
            parts.append(c[key] > 0)
    for key in ("h1", "h2"):
        parts += [a > 0 for a in c[key][1:-1]]
    return parts


def _same_pattern(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(net_cfg: gn.GesIDNetConfig | None = None, seed: int = 0, clouds=None,
                   labels=None, samples_per_block: int = 8, rel_step: float = 1e-4,
                   grad_fn=None) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    Checks a random sample of entries per parameter block plus every gate
    entry. The step is ``rel_step * max(1, |theta|)``. Entries whose
    perturbation flips a ReLU or a max-pool winner are skipped, since the loss
    is not differentiable across that step. The error of a block is
    ``max |analytic - numeric| / max(max |analytic|, max |numeric|)``.
    """
    if net_cfg is None:
        net_cfg = gn.tiny_config()
    if grad_fn is None:
        grad_fn = gn.backward
    rng = np.random.default_rng(seed)
    if clouds is None:
        clouds = []
        for _ in range(3):
            p = rng.normal(0.0, 0.5, size=(net_cfg.point_count, 5))
            p[:, 4] = np.abs(p[:, 4])
            clouds.append(p)
        labels = rng.integers(0, net_cfg.num_classes, size=3)
    pts = [c.points if isinstance(c, GestureCloud) else np.asarray(c, dtype=np.float64) for c in clouds]
    labels = np.asarray(labels, dtype=np.int64)
    geom = gn.build_geometry(pts, net_cfg)

    params = gn.init_params(net_cfg, seed)
    for k in params:
        # zero biases would park dead units exactly on the ReLU kink
        if k.endswith(".b"):
            params[k] = rng.uniform(-0.1, 0.1, size=params[k].shape)

    base = gn.forward_batch(params, geom, net_cfg)
    pattern = _activation_pattern(base)
    analytic = grad_fn(params, base, labels, net_cfg)

    def loss_and_pattern():
        tr = gn.forward_batch(params, geom, net_cfg)
        return gn.per_sample_losses(tr.logits1, tr.logits2, labels)[0].mean(), _activation_pattern(tr)

    errors, checked, skipped = {}, {}, {}
    for name, value in params.items():
        flat = value.reshape(-1)
        if name.startswith("gate") or flat.size <= samples_per_block:
            picks = np.arange(flat.size)
        else:
            picks = np.sort(rng.choice(flat.size, samples_per_block, replace=False))
        a = analytic[name].reshape(-1)[picks]
        num = np.full(picks.size, np.nan)
        for j, i in enumerate(picks):
            old = flat[i]
            h = rel_step * max(1.0, abs(old))
            flat[i] = old + h
            lp, pp = loss_and_pattern()
            flat[i] = old - h
            lm, pm = loss_and_pattern()
            flat[i] = old
            if _same_pattern(pp, pattern) and _same_pattern(pm, pattern):
                num[j] = (lp - lm) / (2.0 * h)
        ok = np.isfinite(num)
        checked[name] = int(ok.sum())
        skipped[name] = int((~ok).sum())
        if not ok.any():
            errors[name] = 0.0
            continue
        scale = max(np.abs(a[ok]).max(), np.abs(num[ok]).max(), 1e-12)
        errors[name] = float(np.abs(a[ok] - num[ok]).max() / scale)
    return GradCheckReport(errors, checked, skipped)
