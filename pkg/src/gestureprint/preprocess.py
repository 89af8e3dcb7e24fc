"""Noise canceling (density clustering, main-cluster retention) and jitter augmentation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .cloud import GestureCloud
from .errors import EmptyCloud, NoCluster, ValidationError


@dataclass(frozen=True)
class DenoiseConfig:
    d_max: float = 1.0
    n_min: int = 4

    def __post_init__(self):
        if not self.d_max > 0:
            raise ValidationError("d_max must be > 0")
        if self.n_min < 1:
            raise ValidationError("n_min must be >= 1")


@dataclass(frozen=True)
class AugmentConfig:
    sigma: float = 0.02
    mean: float = 0.0
    copies: int = 3

    def __post_init__(self):
        if self.sigma < 0:
            raise ValidationError("sigma must be >= 0")
        if self.copies < 0:
            raise ValidationError("copies must be >= 0")
        if self.mean != 0.0:
            raise ValidationError("jitter mean is fixed at 0")


@dataclass(frozen=True)
class ClusterLabeling:
    labels: np.ndarray
    cluster_sizes: list[int]

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_sizes)


def dbscan_cluster(c: GestureCloud, cfg: DenoiseConfig = DenoiseConfig()) -> ClusterLabeling:
    """Label points by density clustering on (x, y, z); ``-1`` marks noise.

    A point is core when at least ``n_min`` points (itself included) lie within
    ``d_max``. Border points go to the first cluster that reaches them when
    points are scanned in input order.
    """
    if len(c) == 0:
        raise EmptyCloud("cannot cluster an empty cloud")
    labels = kernels.dbscan(np.ascontiguousarray(c.xyz), float(cfg.d_max), int(cfg.n_min))
    k = int(labels.max()) + 1 if labels.size else 0
    sizes = np.bincount(labels[labels >= 0], minlength=k).tolist()
    return ClusterLabeling(labels, sizes)


def keep_main_cluster(c: GestureCloud, cfg: DenoiseConfig = DenoiseConfig()) -> GestureCloud:
    lab = dbscan_cluster(c, cfg)
    if lab.n_clusters == 0:
        raise NoCluster(f"no cluster of >= {cfg.n_min} points within {cfg.d_max} m")
    main = int(np.argmax(lab.cluster_sizes))  # first (lowest) label on ties
    return c.with_points(c.points[lab.labels == main])


def jitter_augment(c: GestureCloud, cfg: AugmentConfig = AugmentConfig(),
                   rng_seed: int = 0) -> list[GestureCloud]:
    """Return ``cfg.copies`` copies with Gaussian displacement on x, y, z."""
    if len(c) == 0:
        raise EmptyCloud("cannot augment an empty cloud")
    out = []
    for k in range(cfg.copies):
        rng = np.random.default_rng([rng_seed, k])
        pts = c.points.copy()
        pts[:, :3] += rng.normal(cfg.mean, cfg.sigma, size=(len(c), 3))
        out.append(c.with_points(pts))
    return out
