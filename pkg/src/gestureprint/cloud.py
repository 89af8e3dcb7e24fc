"""Point-cloud containers, conditioning helpers and cloud difference metrics.

Points are stored as ``(n, 5)`` float64 arrays with columns
``x, y, z, doppler, intensity``. Geometry (all metrics here) uses the first
three columns only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import EmptyCloud, EmptyCollection, NonPositiveVoxel, NoValidPairs, ValidationError

N_CHANNELS = 5
DEFAULT_FRAME_RATE = 10.0
DEFAULT_VOXEL = 0.1


class Point(NamedTuple):
    x: float
    y: float
    z: float
    doppler: float
    intensity: float


def as_points(points) -> np.ndarray:
    """Coerce ``points`` to a validated ``(n, 5)`` float64 array; ``None`` means no points."""
    if points is None:
        return np.zeros((0, N_CHANNELS))
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, N_CHANNELS))
    if arr.ndim != 2 or arr.shape[1] != N_CHANNELS:
        raise ValidationError(f"points must have shape (n, {N_CHANNELS}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("point fields must be finite")
    if np.any(arr[:, 4] < 0):
        raise ValidationError("intensity must be >= 0")
    return arr


@dataclass
class Frame:
    index: int
    t: float
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, N_CHANNELS)))

    def __post_init__(self):
        self.points = as_points(self.points)

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (self.index == other.index and self.t == other.t
                and np.array_equal(self.points, other.points))


@dataclass
class FrameStream:
    frames: list[Frame]
    frame_rate: float = DEFAULT_FRAME_RATE
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.frame_rate > 0:
            raise ValidationError("frame_rate must be > 0")

    def __len__(self):
        return len(self.frames)

    def counts(self) -> np.ndarray:
        return np.array([len(f) for f in self.frames], dtype=np.int64)

    @classmethod
    def from_point_lists(cls, point_lists, frame_rate=DEFAULT_FRAME_RATE, meta=None):
        frames = [Frame(i, i / frame_rate, pts) for i, pts in enumerate(point_lists)]
        return cls(frames, frame_rate, dict(meta or {}))


@dataclass
class GestureCloud:
    points: np.ndarray
    start_frame: int = 0
    end_frame: int = 0
    source: str = ""

    def __post_init__(self):
        self.points = as_points(self.points)
        if self.start_frame > self.end_frame:
            raise ValidationError("start_frame must be <= end_frame")

    def __len__(self):
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    def with_points(self, points) -> GestureCloud:
        return GestureCloud(points, self.start_frame, self.end_frame, self.source)


@dataclass
class CloudCollection:
    clouds: list[GestureCloud]
    gesture_label: int | None = None
    user_label: int | None = None

    def __len__(self):
        return len(self.clouds)


def _xyz(c) -> np.ndarray:
    xyz = c.xyz if isinstance(c, GestureCloud) else np.asarray(c, dtype=np.float64)[:, :3]
    if xyz.shape[0] == 0:
        raise EmptyCloud("metric needs non-empty clouds")
    return np.ascontiguousarray(xyz)


def hausdorff(a, b) -> float:
    """Symmetric Hausdorff distance between two clouds (meters)."""
    ab, ba = kernels.mutual_min_dist(_xyz(a), _xyz(b))
    return float(max(ab.max(), ba.max()))


def chamfer(a, b) -> float:
    """Mean of the two directed mean nearest-neighbour distances (unsquared)."""
    da, db = kernels.mutual_min_dist(_xyz(a), _xyz(b))
    return 0.5 * (kernels.left_sum(da) / da.shape[0] + kernels.left_sum(db) / db.shape[0])


def jsd(a, b, voxel: float = DEFAULT_VOXEL) -> float:
    """Base-2 Jensen-Shannon divergence of voxel occupancy histograms.

    The grid is anchored at the minimum corner of the union bounding box.
    """
    if not voxel > 0:
        raise NonPositiveVoxel(f"voxel must be > 0, got {voxel}")
    pa, pb = _xyz(a), _xyz(b)
    origin = np.minimum(pa.min(axis=0), pb.min(axis=0))
    cells = np.floor((np.vstack([pa, pb]) - origin) / voxel).astype(np.int64)
    # cells are non-negative, so a mixed-radix code identifies each voxel
    span = cells.max(axis=0) + 1
    if float(span[0]) * float(span[1]) * float(span[2]) < 2.0 ** 62:
        code = (cells[:, 0] * span[1] + cells[:, 1]) * span[2] + cells[:, 2]
        _, inv = np.unique(code, return_inverse=True)
    else:
        _, inv = np.unique(cells, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    k = int(inv.max()) + 1
    p = np.bincount(inv[:pa.shape[0]], minlength=k) / pa.shape[0]
    q = np.bincount(inv[pa.shape[0]:], minlength=k) / pb.shape[0]
    return _jsd_bins(p, q)


def _jsd_bins(p, q) -> float:
    both = (p > 0) & (q > 0)
    if not both.any():
        return 1.0
    pb, qb = p[both], q[both]
    m = 0.5 * (pb + qb)
    shared = 0.5 * (pb * np.log2(pb / m) + qb * np.log2(qb / m))
    alone = 0.5 * (p[~both] + q[~both])
    # fsum is order independent, so jsd(a, b) == jsd(b, a) exactly
    total = math.fsum(shared.tolist()) + math.fsum(alone.tolist())
    return min(max(total, 0.0), 1.0)


METRICS = {"HD": hausdorff, "CD": chamfer, "JSD": jsd}


def collection_difference(c1: CloudCollection, c2: CloudCollection, metric: str = "CD",
                          voxel: float = DEFAULT_VOXEL) -> float:
    """Mean pairwise metric between two collections.

    Pairs of the very same cloud object are skipped, and the mean is taken
    over the pairs actually used.
    """
    if len(c1) == 0 or len(c2) == 0:
        raise EmptyCollection("collections must be non-empty")
    if (c1.gesture_label is not None and c2.gesture_label is not None
            and c1.gesture_label != c2.gesture_label):
        raise ValidationError("collections hold different gestures")
    try:
        fn = METRICS[metric.upper()]
    except KeyError:
        raise ValidationError(f"unknown metric {metric!r}; choose from {sorted(METRICS)}") from None
    kwargs = {"voxel": voxel} if fn is jsd else {}
    total, count = 0.0, 0
    for cm in c2.clouds:
        for cn in c1.clouds:
            if cn is cm:
                continue
            total += fn(cn, cm, **kwargs)
            count += 1
    if count == 0:
        raise NoValidPairs("no distinct cloud pairs to compare")
    return total / count


def normalize_center(c: GestureCloud) -> GestureCloud:
    if len(c) == 0:
        raise EmptyCloud("cannot center an empty cloud")
    pts = c.points.copy()
    pts[:, :3] -= pts[:, :3].mean(axis=0)
    return c.with_points(pts)


def resample_fixed(c: GestureCloud, p_count: int, rng_seed: int) -> GestureCloud:
    """Draw exactly ``p_count`` points; without replacement when possible."""
    n = len(c)
    if n == 0:
        raise EmptyCloud("cannot resample an empty cloud")
    if p_count < 1:
        raise ValidationError("p_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    if n >= p_count:
        idx = np.sort(rng.choice(n, size=p_count, replace=False))
    else:
        idx = np.concatenate([np.arange(n), rng.integers(0, n, size=p_count - n)])
    return c.with_points(c.points[idx])
