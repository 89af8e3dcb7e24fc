"""Synthetic radar gesture streams with ground-truth annotations.

Users differ in range of motion, speed, position and tremor; gestures are
parametric hand trajectories. Each frame of a gesture carries Poisson(20)
points scattered around the current hand position, and every frame carries
sparse uniform background clutter.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cloud import DEFAULT_FRAME_RATE, Frame, FrameStream, GestureCloud
from .errors import BadSchedule, ValidationError
from .preprocess import DenoiseConfig, keep_main_cluster
from .segmenter import Segment, SegmenterConfig, aggregate_segment, segment_stream

TRAJECTORIES = ("line", "arc", "zigzag", "push", "circle")
BASE_POSITION = np.array([0.0, 1.5, 0.2])
BASE_AMPLITUDE = 0.3


@dataclass(frozen=True)
class UserProfile:
    user_id: int
    motion_scale: float = 1.0
    speed_factor: float = 1.0
    center_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    style_jitter: float = 0.0

    def __post_init__(self):
        if not (self.motion_scale > 0 and self.speed_factor > 0):
            raise ValidationError("motion_scale and speed_factor must be > 0")


@dataclass(frozen=True)
class GestureTemplate:
    gesture_id: int
    trajectory: str
    duration: int = 24
    spread: float = 0.04
    rotation: int = 0  # quarter turns of the motion plane about the depth axis

    def __post_init__(self):
        if self.trajectory not in TRAJECTORIES:
            raise ValidationError(f"trajectory must be one of {TRAJECTORIES}")
        if self.duration < 10:
            raise ValidationError("duration must be >= 10 frames")


@dataclass(frozen=True)
class NoiseConfig:
    gesture_rate: float = 20.0
    background_rate: float = 2.0
    box: tuple = ((-2.0, 2.0), (0.0, 4.0), (-1.0, 1.0))
    doppler_std: float = 0.05
    background_doppler_std: float = 0.1
    intensity_mean: float = 1.0
    intensity_std: float = 0.3
    amplitude_jitter: float = 0.03
    duration_jitter: float = 0.05


@dataclass(frozen=True)
class ScheduledEvent:
    user_id: int
    gesture_id: int
    start_frame: int
    duration: int


@dataclass(frozen=True)
class AnnotatedEvent:
    start_frame: int
    end_frame: int
    gesture_id: int
    user_id: int


@dataclass
class OracleAnnotations:
    events: list[AnnotatedEvent]
    provenance: list[np.ndarray] = field(repr=False)  # per frame: True = gesture point


def trajectory(kind: str, u, rotation: int = 0):
    """Unit-amplitude hand offset (x lateral, y depth, z height) at phase ``u`` in [0, 1]."""
    u = np.asarray(u, dtype=np.float64)
    zero = np.zeros_like(u)
    if kind == "line":
        p = (2 * u - 1, zero, zero)
    elif kind == "arc":
        a = np.pi * (u - 0.5)
        p = (np.sin(a), zero, np.cos(a) - 0.5)
    elif kind == "zigzag":
        tri = 2 * np.abs(2 * ((3 * u) % 1.0) - 1) - 1
        p = (2 * u - 1, zero, 0.4 * tri)
    elif kind == "push":
        p = (zero, -np.sin(np.pi * u), 0.2 * np.sin(np.pi * u))
    elif kind == "circle":
        a = 2 * np.pi * u
        p = (0.6 * np.cos(a), zero, 0.6 * np.sin(a))
    else:
        raise ValidationError(f"unknown trajectory {kind!r}")
    x, y, z = p
    for _ in range(rotation % 4):
        x, z = -z, x
    return np.stack([x, y, z], axis=-1)


def default_templates(n_gestures: int) -> list[GestureTemplate]:
    k = len(TRAJECTORIES)
    return [GestureTemplate(g, TRAJECTORIES[g % k], duration=15 + (7 * g) % 16, rotation=g // k)
            for g in range(n_gestures)]


def default_users(n_users: int, seed: int, motion_scales=None) -> list[UserProfile]:
    """Profiles with motion scales spread evenly over [0.7, 1.3] unless given."""
    if motion_scales is None:
        if n_users < 2:
            raise ValidationError("need at least two users")
        motion_scales = np.linspace(0.7, 1.3, n_users)
    motion_scales = np.asarray(motion_scales, dtype=np.float64)
    n = motion_scales.size
    rng = np.random.default_rng([seed, 7])
    speeds = rng.permutation(np.linspace(0.7, 1.4, n))
    # jitter grows with motion scale so overall extent stays monotone in it
    jitters = np.linspace(0.0, 0.03, n)[np.argsort(np.argsort(motion_scales, kind="stable"), kind="stable")]
    offsets = rng.uniform(-0.15, 0.15, size=(n, 3))
    return [UserProfile(u, float(motion_scales[u]), float(speeds[u]), tuple(map(float, offsets[u])),
                        float(jitters[u])) for u in range(n)]


def event_duration(user: UserProfile, tmpl: GestureTemplate, rng, jitter: float) -> int:
    d = tmpl.duration / user.speed_factor * (1.0 + jitter * rng.standard_normal())
    return max(10, int(round(d)))


def make_schedule(pairs, users, templates, seed: int, noise: NoiseConfig = NoiseConfig(),
                  lead: int = 30, gap=(20, 40)) -> tuple[list[ScheduledEvent], int]:
    """Lay (user_id, gesture_id) events out with idle gaps of 2-4 s.

    Returns the schedule and the total stream length in frames.
    """
    rng = np.random.default_rng([seed, 11])
    umap = {u.user_id: u for u in users}
    tmap = {t.gesture_id: t for t in templates}
    events, t = [], lead
    for uid, gid in pairs:
        d = event_duration(umap[uid], tmap[gid], rng, noise.duration_jitter)
        events.append(ScheduledEvent(uid, gid, t, d))
        t += d + int(rng.integers(gap[0], gap[1] + 1))
    return events, t


def _check_schedule(schedule, n_frames):
    last_end = -1
    for ev in sorted(schedule, key=lambda e: e.start_frame):
        if ev.start_frame <= last_end or ev.duration < 1:
            raise BadSchedule(f"event at frame {ev.start_frame} overlaps its predecessor")
        last_end = ev.start_frame + ev.duration - 1
    if last_end >= n_frames:
        raise BadSchedule("schedule runs past the end of the stream")


def synth_stream(users, templates, schedule, noise_cfg: NoiseConfig = NoiseConfig(), seed: int = 0,
                 n_frames: int | None = None, frame_rate: float = DEFAULT_FRAME_RATE):
    """Render a schedule into ``(FrameStream, OracleAnnotations)``."""
    if not users or not templates:
        raise ValidationError("need at least one user and one template")
    umap = {u.user_id: u for u in users}
    tmap = {t.gesture_id: t for t in templates}
    if n_frames is None:
        n_frames = max((e.start_frame + e.duration for e in schedule), default=0) + 20
    _check_schedule(schedule, n_frames)
    rng = np.random.default_rng(seed)
    nc = noise_cfg
    lo = np.array([b[0] for b in nc.box])
    hi = np.array([b[1] for b in nc.box])

    # per-frame gesture generators
    active = {}
    for ev in schedule:
        user, tmpl = umap[ev.user_id], tmap[ev.gesture_id]
        amp = BASE_AMPLITUDE * user.motion_scale * (1.0 + nc.amplitude_jitter * rng.standard_normal())
        u = (np.arange(ev.duration) + 0.5) / ev.duration
        center = BASE_POSITION + np.asarray(user.center_offset)
        pos = center + amp * trajectory(tmpl.trajectory, u, tmpl.rotation)
        du = 1e-4
        vel = amp * (trajectory(tmpl.trajectory, np.minimum(u + du, 1.0), tmpl.rotation)
                     - trajectory(tmpl.trajectory, np.maximum(u - du, 0.0), tmpl.rotation))
        vel /= (np.minimum(u + du, 1.0) - np.maximum(u - du, 0.0))[:, None]
        vel *= frame_rate / ev.duration  # d(pos)/dt in m/s
        std = tmpl.spread * user.motion_scale + user.style_jitter
        for k in range(ev.duration):
            active[ev.start_frame + k] = (pos[k], vel[k], std)

    frames, prov = [], []
    for i in range(n_frames):
        chunks, flags = [], []
        if i in active:
            p, v, std = active[i]
            k = rng.poisson(nc.gesture_rate)
            xyz = p + std * rng.standard_normal((k, 3))
            radial = float(v @ p / np.linalg.norm(p))
            dop = radial + nc.doppler_std * rng.standard_normal(k)
            inten = np.abs(nc.intensity_mean + nc.intensity_std * rng.standard_normal(k))
            chunks.append(np.column_stack([xyz, dop, inten]))
            flags.append(np.ones(k, dtype=bool))
        b = rng.poisson(nc.background_rate)
        xyz = lo + (hi - lo) * rng.random((b, 3))
        dop = nc.background_doppler_std * rng.standard_normal(b)
        inten = np.abs(nc.intensity_mean + nc.intensity_std * rng.standard_normal(b))
        chunks.append(np.column_stack([xyz, dop, inten]))
        flags.append(np.zeros(b, dtype=bool))
        frames.append(Frame(i, i / frame_rate, np.concatenate(chunks)))
        prov.append(np.concatenate(flags))
    events = [AnnotatedEvent(e.start_frame, e.start_frame + e.duration - 1, e.gesture_id, e.user_id)
              for e in sorted(schedule, key=lambda e: e.start_frame)]
    stream = FrameStream(frames, frame_rate, {"source": f"synth-{seed}"})
    return stream, OracleAnnotations(events, prov)


@dataclass
class SynthDataset:
    clouds: list[GestureCloud]
    gestures: np.ndarray
    users: np.ndarray
    streams: list[tuple[FrameStream, OracleAnnotations]]
    profiles: list[UserProfile]
    templates: list[GestureTemplate]
    boundary_errors: list[int]  # max(|start err|, |end err|) per sample
    segmentation_misses: int  # events without exactly one matching segment

    def __len__(self):
        return len(self.clouds)


def match_segments(segments, events):
    """Map each annotated event to the single segment overlapping it (or None)."""
    out = []
    for ev in events:
        hits = [s for s in segments if s.start_frame <= ev.end_frame and s.end_frame >= ev.start_frame]
        out.append(hits[0] if len(hits) == 1 else None)
    return out


def synth_dataset(n_users: int, n_gestures: int, samples_per_cell: int, seed: int = 0,
                  motion_scales=None, noise: NoiseConfig = NoiseConfig(),
                  seg_cfg: SegmenterConfig = SegmenterConfig(),
                  den_cfg: DenoiseConfig = DenoiseConfig()) -> SynthDataset:
    """Generate one stream per (user, gesture) cell and cut it into labeled clouds.

    Clouds come from the real segmenter and denoiser; the oracle annotations
    are only used to check them (and to recover any event the segmenter
    missed, which is counted in ``segmentation_misses``).
    """
    if n_gestures < 2:
        raise ValidationError("need at least two gestures")
    users = default_users(n_users, seed, motion_scales)
    templates = default_templates(n_gestures)
    clouds, gl, ul, streams, errs = [], [], [], [], []
    misses = 0
    for u in users:
        for t in templates:
            cell_seed = seed * 1_000_003 + u.user_id * 1009 + t.gesture_id
            pairs = [(u.user_id, t.gesture_id)] * samples_per_cell
            schedule, n_frames = make_schedule(pairs, users, templates, cell_seed, noise)
            stream, ann = synth_stream(users, templates, schedule, noise, cell_seed, n_frames)
            streams.append((stream, ann))
            segs = segment_stream(stream, seg_cfg)
            for ev, seg in zip(ann.events, match_segments(segs, ann.events)):
                if seg is None:
                    misses += 1
                    seg = Segment(ev.start_frame, ev.end_frame, ev.end_frame - ev.start_frame + 1, 0)
                errs.append(max(abs(seg.start_frame - ev.start_frame), abs(seg.end_frame - ev.end_frame)))
                cloud = keep_main_cluster(aggregate_segment(stream, seg), den_cfg)
                cloud.source = f"u{u.user_id}-g{t.gesture_id}"
                clouds.append(cloud)
                gl.append(t.gesture_id)
                ul.append(u.user_id)
    return SynthDataset(clouds, np.asarray(gl), np.asarray(ul), streams, users, templates, errs, misses)
