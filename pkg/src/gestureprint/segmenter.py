"""Gesture segmentation with a parameter-adaptive sliding window.

A frame is a motion frame when its point count reaches a dynamic threshold
derived from the recent idle history. A gesture starts once a window of the
last ``win_len`` frames holds at least ``min_motion`` motion frames and ends
once a whole window is static.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .cloud import FrameStream, GestureCloud
from .errors import EmptyHistory, SegmentOutOfRange, StreamTooShort, ValidationError

MOTION = True
STATIC = False


@dataclass(frozen=True)
class SegmenterConfig:
    hist_len: int = 50
    win_len: int = 10
    min_motion: int = 8
    quantile: float = 0.7
    # Floor on the dynamic threshold. Keeps sparse clutter (a couple of
    # points per frame) from ever counting as motion.
    p_min: int = 12

    def __post_init__(self):
        if not 1 <= self.min_motion <= self.win_len <= self.hist_len:
            raise ValidationError("need 1 <= min_motion <= win_len <= hist_len")
        if not 0 < self.quantile < 1:
            raise ValidationError("quantile must lie in (0, 1)")
        if self.p_min < 1:
            raise ValidationError("p_min must be >= 1")


@dataclass(frozen=True)
class Segment:
    start_frame: int
    end_frame: int
    frame_count: int
    threshold_used: int


def dynamic_threshold(counts, cfg: SegmenterConfig = SegmenterConfig()) -> int:
    """Nearest-rank ``cfg.quantile`` of the trailing ``hist_len`` counts, floored at ``p_min``."""
    hist = np.asarray(counts)[-cfg.hist_len:]
    if hist.size == 0:
        raise EmptyHistory("threshold needs at least one frame of history")
    ordered = np.sort(hist)
    rank = max(1, math.ceil(cfg.quantile * ordered.size))
    return max(cfg.p_min, math.ceil(ordered[rank - 1]))


def classify_frame(count: int, p_thr: int) -> bool:
    return MOTION if count >= p_thr else STATIC


def segment_stream(s: FrameStream, cfg: SegmenterConfig = SegmenterConfig()) -> list[Segment]:
    counts = s.counts()
    n = cfg.win_len
    if counts.size < n:
        raise StreamTooShort(f"stream has {counts.size} frames, need >= {n}")
    idx = [f.index for f in s.frames]

    segments = []
    history = deque(maxlen=cfg.hist_len)  # counts of frames outside any segment
    hist_pos = deque(maxlen=cfg.hist_len)
    in_motion = False
    frozen = 0
    start = last_motion = 0
    seg_floor = 0  # first position eligible for a new segment

    for i in range(counts.size):
        if not in_motion:
            history.append(int(counts[i]))
            hist_pos.append(i)
            if i < n - 1:
                continue
            thr = dynamic_threshold(history, cfg)
            lo = max(i - n + 1, seg_floor)
            window = counts[lo:i + 1] >= thr
            if window.sum() >= cfg.min_motion:
                in_motion = True
                frozen = thr
                start = lo + int(np.argmax(window))
                last_motion = lo + int(np.flatnonzero(window)[-1])
                while hist_pos and hist_pos[-1] >= start:
                    hist_pos.pop()
                    history.pop()
        else:
            if counts[i] >= frozen:
                last_motion = i
            if i - last_motion >= n:
                segments.append(_make_segment(idx, start, last_motion, frozen))
                in_motion = False
                seg_floor = last_motion + 1
                for j in range(last_motion + 1, i + 1):
                    history.append(int(counts[j]))
                    hist_pos.append(j)
    if in_motion:
        segments.append(_make_segment(idx, start, last_motion, frozen))
    return segments


def _make_segment(idx, start, end, thr):
    return Segment(idx[start], idx[end], end - start + 1, int(thr))


def aggregate_segment(s: FrameStream, seg: Segment) -> GestureCloud:
    """Concatenate the points of every frame inside ``seg`` in frame order."""
    pos = {f.index: k for k, f in enumerate(s.frames)}
    if seg.start_frame not in pos or seg.end_frame not in pos or seg.start_frame > seg.end_frame:
        raise SegmentOutOfRange(f"segment {seg.start_frame}..{seg.end_frame} outside stream")
    frames = s.frames[pos[seg.start_frame]:pos[seg.end_frame] + 1]
    points = np.concatenate([f.points for f in frames], axis=0)
    source = s.meta.get("source", s.meta.get("name", ""))
    return GestureCloud(points, seg.start_frame, seg.end_frame, source)
