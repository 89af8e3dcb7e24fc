import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gestureprint.cloud import (CloudCollection, Frame, FrameStream, GestureCloud, chamfer,
                                collection_difference, hausdorff, jsd, normalize_center,
                                resample_fixed)
from gestureprint.errors import (EmptyCloud, EmptyCollection, NonPositiveVoxel, NoValidPairs,
                                 ValidationError)

from conftest import make_cloud
import oracles

coords = st.floats(-3, 3, allow_nan=False, width=64)
xyz_arrays = st.integers(1, 24).flatmap(lambda n: arrays(np.float64, (n, 3), elements=coords))


# --- types -----------------------------------------------------------------

def test_points_validated():
    with pytest.raises(ValidationError):
        GestureCloud(np.array([[0, 0, 0, 0, -1.0]]))
    with pytest.raises(ValidationError):
        GestureCloud(np.array([[0, 0, np.nan, 0, 1.0]]))
    with pytest.raises(ValidationError):
        GestureCloud(np.zeros((2, 4)))
    with pytest.raises(ValidationError):
        make_cloud([[0, 0, 0]], start_frame=3, end_frame=2)


def test_frames_and_streams():
    s = FrameStream.from_point_lists([np.zeros((2, 5)), [], np.ones((1, 5))])
    assert s.counts().tolist() == [2, 0, 1]
    assert [f.t for f in s.frames] == [0.0, 0.1, 0.2]
    assert s.frames[1] == Frame(1, 0.1)
    with pytest.raises(ValidationError):
        FrameStream([], frame_rate=0)


# --- metric examples ---------------------------------------------------------

def test_hausdorff_examples():
    a = make_cloud([[0, 0, 0], [1, 0, 0]])
    assert hausdorff(a, a) == 0.0
    assert hausdorff(make_cloud([[0, 0, 0]]), make_cloud([[3, 4, 0]])) == 5.0
    assert hausdorff(a, make_cloud([[0, 0, 0], [0, 2, 0]])) == 2.0


def test_chamfer_examples():
    a = make_cloud([[0, 0, 0], [1, 0, 0]])
    assert chamfer(a, a) == 0.0
    assert chamfer(make_cloud([[0, 0, 0]]), make_cloud([[3, 4, 0]])) == 5.0
    assert chamfer(a, make_cloud([[0, 0, 0]])) == 0.25


def test_jsd_examples():
    a = make_cloud([[0, 0, 0], [0.3, 0.2, 0.1]])
    assert jsd(a, a) == 0.0
    assert jsd(make_cloud([[0, 0, 0]]), make_cloud([[1, 1, 1]])) == 1.0
    p = make_cloud([[0, 0, 0], [0, 0, 0]])
    q = make_cloud([[0, 0, 0], [1, 0, 0]])
    # p = [1, 0], q = [0.5, 0.5], m = [0.75, 0.25]
    expected = 0.5 * math.log2(1 / 0.75) + 0.5 * (0.5 * math.log2(0.5 / 0.75) + 0.5 * math.log2(0.5 / 0.25))
    assert jsd(p, q, voxel=0.5) == pytest.approx(expected, abs=1e-15)
    assert jsd(p, q, voxel=0.5) == pytest.approx(0.3113, abs=1e-4)


def test_metric_errors():
    empty = GestureCloud(np.zeros((0, 5)))
    a = make_cloud([[0, 0, 0]])
    for fn in (hausdorff, chamfer, jsd):
        with pytest.raises(EmptyCloud):
            fn(a, empty)
    with pytest.raises(NonPositiveVoxel):
        jsd(a, a, voxel=0.0)


def test_metrics_ignore_doppler_and_intensity():
    a = make_cloud([[0, 0, 0], [1, 2, 3]], doppler=5.0, intensity=0.0)
    b = make_cloud([[0, 0, 0], [1, 2, 3]], doppler=-1.0, intensity=9.0)
    assert hausdorff(a, b) == chamfer(a, b) == jsd(a, b) == 0.0


@settings(max_examples=60, deadline=None)
@given(xyz_arrays, xyz_arrays)
def test_metric_properties(xa, xb):
    a, b = make_cloud(xa), make_cloud(xb)
    hd, cd, js = hausdorff(a, b), chamfer(a, b), jsd(a, b)
    assert hd == hausdorff(b, a) and cd == chamfer(b, a) and js == jsd(b, a)
    assert hd >= cd - 1e-12 * max(1.0, hd)  # a mean of equal minima may round up by an ulp
    assert cd >= 0.0
    assert 0.0 <= js <= 1.0
    assert hausdorff(a, a) == chamfer(a, a) == jsd(a, a) == 0.0


@settings(max_examples=40, deadline=None)
@given(xyz_arrays, xyz_arrays)
def test_metrics_match_oracles(xa, xb):
    a, b = make_cloud(xa), make_cloud(xb)
    assert hausdorff(a, b) == oracles.hausdorff(xa, xb)
    assert chamfer(a, b) == oracles.chamfer(xa, xb)
    assert jsd(a, b) == pytest.approx(oracles.jsd(xa, xb), abs=1e-12)


def test_jsd_is_one_only_for_disjoint_cells():
    a = make_cloud([[0.05, 0.05, 0.05], [0.55, 0.05, 0.05]])
    b = make_cloud([[0.06, 0.05, 0.05], [2.0, 2.0, 2.0]])
    assert 0.0 < jsd(a, b) < 1.0


# --- collection difference ---------------------------------------------------

def test_collection_difference_examples():
    x = make_cloud([[0, 0, 0], [1, 0, 0]])
    y = make_cloud([[0, 0, 0], [0, 2, 0]])
    both = CloudCollection([x, y])
    assert collection_difference(both, both, "HD") == 2.0
    z = make_cloud([[0, 0, 0]])
    assert collection_difference(CloudCollection([x]), CloudCollection([z]), "CD") == 0.25


def test_collection_difference_counts_only_distinct_objects():
    x = make_cloud([[0, 0, 0]])
    x_copy = make_cloud([[0, 0, 0]])
    y = make_cloud([[3, 4, 0]])
    # x vs its equal copy is a valid pair (distance 0); x vs x itself is skipped
    c = CloudCollection([x, x_copy, y])
    expected = (0 + 5 + 0 + 5 + 5 + 5) / 6
    assert collection_difference(c, c, "HD") == pytest.approx(expected)


def test_collection_difference_errors():
    x = make_cloud([[0, 0, 0]])
    with pytest.raises(EmptyCollection):
        collection_difference(CloudCollection([]), CloudCollection([x]))
    with pytest.raises(NoValidPairs):
        collection_difference(CloudCollection([x]), CloudCollection([x]))
    with pytest.raises(ValidationError):
        collection_difference(CloudCollection([x], gesture_label=0), CloudCollection([x], gesture_label=1))
    with pytest.raises(ValidationError):
        collection_difference(CloudCollection([x]), CloudCollection([x]), "EMD")


# --- conditioning --------------------------------------------------------------

def test_normalize_center_examples(rng):
    assert normalize_center(make_cloud([[1, 1, 1]])).xyz.tolist() == [[0, 0, 0]]
    assert normalize_center(make_cloud([[0, 0, 0], [2, 0, 0]])).xyz.tolist() == [[-1, 0, 0], [1, 0, 0]]
    pts = np.column_stack([rng.normal(5, 2, (50, 3)), rng.normal(size=50), rng.random(50)])
    c = GestureCloud(pts.copy())
    out = normalize_center(c)
    assert np.abs(out.xyz.mean(axis=0)).max() < 1e-9
    assert np.array_equal(out.points[:, 3:], pts[:, 3:])
    assert np.array_equal(c.points, pts)
    with pytest.raises(EmptyCloud):
        normalize_center(GestureCloud(np.zeros((0, 5))))


def test_resample_fixed(rng):
    pts = np.column_stack([np.arange(300.0), np.zeros((300, 3)), np.ones(300)])
    c = GestureCloud(pts)
    out = resample_fixed(c, 256, 7)
    assert len(out) == 256 and len(set(out.points[:, 0])) == 256
    small = GestureCloud(pts[:100])
    out = resample_fixed(small, 256, 7)
    assert len(out) == 256 and set(out.points[:, 0]) == set(range(100))
    assert np.array_equal(resample_fixed(c, 64, 3).points, resample_fixed(c, 64, 3).points)
    with pytest.raises(EmptyCloud):
        resample_fixed(GestureCloud(np.zeros((0, 5))), 4, 0)
    with pytest.raises(ValidationError):
        resample_fixed(c, 0, 0)
