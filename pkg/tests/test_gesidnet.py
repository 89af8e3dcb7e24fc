import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gestureprint import gesidnet as gn
from gestureprint.errors import LabelOutOfRange, ShapeMismatch, TraceMismatch, ValidationError
from gestureprint.io import model_from_text, model_to_text
from gestureprint.cloud import normalize_center, resample_fixed

from conftest import random_cloud

TINY = gn.tiny_config()


def _prepared(rng, cfg=TINY, n=30):
    cloud = random_cloud(rng, n, scale=0.3)
    return resample_fixed(normalize_center(cloud), cfg.point_count, int(rng.integers(1 << 30)))


def _randomize_biases(params, rng):
    return {k: (v + 0.1 * rng.standard_normal(v.shape) if k.endswith(".b") else v)
            for k, v in params.items()}


# -- sampling and grouping ---------------------------------------------------

def test_fps_collinear():
    xyz = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], float)
    assert set(gn.farthest_point_sample(xyz, 2).tolist()) == {0, 3}


def test_fps_full_permutation_and_repeatable(rng):
    xyz = rng.standard_normal((17, 3))
    idx = gn.farthest_point_sample(xyz, 17)
    assert sorted(idx.tolist()) == list(range(17))
    assert np.array_equal(idx, gn.farthest_point_sample(xyz, 17))


def test_fps_cycles_when_short():
    xyz = np.array([[0, 0, 0], [1, 0, 0]], float)
    idx = gn.farthest_point_sample(xyz, 5)
    assert len(idx) == 5 and set(idx.tolist()) == {0, 1}


def test_fps_rejects_bad_input():
    with pytest.raises(ValidationError):
        gn.farthest_point_sample(np.zeros((0, 3)), 1)
    with pytest.raises(ValidationError):
        gn.farthest_point_sample(np.zeros((3, 3)), 0)


def test_ball_query_nearest_in_order():
    # center at index 0; others at 0.9, 0.2, 0.1, 0.3
    xyz = np.array([[0, 0, 0], [0.9, 0, 0], [0, 0.2, 0], [0.1, 0, 0], [0, 0, 0.3]])
    g = gn.ball_query_group(xyz, [0], 0.5, 3)
    assert g.tolist() == [[0, 3, 2]]


def test_ball_query_all_within_radius_padded():
    xyz = np.array([[0, 0, 0], [0.3, 0, 0], [0.1, 0, 0]])
    g = gn.ball_query_group(xyz, [0], 1.0, 5)
    assert g.tolist() == [[0, 2, 1, 0, 0]]


def test_ball_query_isolated_center():
    xyz = np.array([[0, 0, 0], [5, 0, 0]], float)
    assert gn.ball_query_group(xyz, [1], 0.5, 4).tolist() == [[1, 1, 1, 1]]


def test_ball_query_ties_by_index():
    xyz = np.array([[0, 0, 0], [0.2, 0, 0], [-0.2, 0, 0], [0, 0.2, 0]])
    assert gn.ball_query_group(xyz, [0], 0.5, 4).tolist() == [[0, 1, 2, 3]]


def test_ball_query_validation():
    with pytest.raises(ValidationError):
        gn.ball_query_group(np.zeros((2, 3)), [0], 0.0, 2)
    with pytest.raises(ValidationError):
        gn.ball_query_group(np.zeros((2, 3)), [0], 1.0, 0)


# -- set abstraction ---------------------------------------------------------

def _zeroed(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def test_sa_zero_weights(rng):
    params = _zeroed(gn.init_params(TINY, 0))
    pts = _prepared(rng).points
    centers, fs = gn.sa_block_forward(pts, TINY.sa1, params)
    assert centers.shape == (TINY.sa1.centers, 3)
    assert fs.shape == (TINY.sa1.centers, TINY.sa1.out_dim)
    assert not fs.any()


def test_sa_width_is_sum_of_last_widths():
    assert TINY.sa1.out_dim == 5 + 3
    assert TINY.sa2.out_dim == 6 + 5


def test_sa_single_point_hand_computation():
    spec = gn.SABlockSpec(1, (gn.SAScale(1.0, 1, (2,)),))
    pts = np.array([[0.5, -1.0, 2.0, 0.7, 0.2]])
    W = np.array([[1, 0], [0, 1], [1, 1], [2, -1], [-3, 1]], float)
    b = np.array([0.1, -0.2])
    params = {"sa1.s0.l0.W": W, "sa1.s0.l0.b": b}
    _, fs = gn.sa_block_forward(pts, spec, params)
    # relative xyz of the center to itself is zero; features pass through
    x = np.array([0, 0, 0, 0.7, 0.2])
    expected = np.maximum(x @ W + b, 0)
    assert np.allclose(fs[0], expected, atol=1e-15)


def test_sa_shape_mismatch(rng):
    params = gn.init_params(TINY, 0)
    pts = _prepared(rng).points[:, :4]
    with pytest.raises(ShapeMismatch):
        gn.sa_block_forward(pts, TINY.sa1, params)


# -- global feature, resize, fusion ------------------------------------------

def _glob_params(W, b):
    return {"glob1.l0.W": np.asarray(W, float), "glob1.l0.b": np.asarray(b, float)}


def test_global_single_center_identity(rng):
    W, b = rng.standard_normal((3, 4)), rng.standard_normal(4)
    fs = rng.standard_normal((1, 3))
    out = gn.global_feature(fs, _glob_params(W, b), 1)
    assert np.array_equal(out, np.maximum(fs[0] @ W + b, 0))


def test_global_duplicates_are_idempotent(rng):
    p = _glob_params(rng.standard_normal((3, 4)), rng.standard_normal(4))
    fs = rng.standard_normal((2, 3))
    assert np.array_equal(gn.global_feature(fs, p, 1), gn.global_feature(np.vstack([fs, fs, fs[:1]]), p, 1))


def test_global_two_by_two_hand():
    p = _glob_params([[1, -1], [2, 0]], [0, 0.5])
    fs = np.array([[1.0, 0.0], [-1.0, 1.0]])
    # center 0 -> (1, -0.5) -> relu (1, 0); center 1 -> (1, 1.5)
    assert gn.global_feature(fs, p, 1).tolist() == [1.0, 1.5]


def test_global_empty():
    with pytest.raises(ShapeMismatch):
        gn.global_feature(np.zeros((0, 2)), _glob_params(np.eye(2), np.zeros(2)), 1)


def test_resize_zero_and_identity():
    p = {"resize12.l0.W": np.zeros((3, 4)), "resize12.l0.b": np.zeros(4)}
    assert gn.resize_feature([1.0, 2.0, 3.0], p, 1, 2).tolist() == [0, 0, 0, 0]
    p = {"resize21.l0.W": np.eye(4, 3), "resize21.l0.b": np.zeros(3)}
    assert gn.resize_feature([1.0, 2.0, 3.0, 4.0], p, 2, 1).tolist() == [1, 2, 3]


def test_resize_three_to_two():
    W = np.array([[0.5, -1.0], [2.0, 0.25], [-1.5, 1.0]])
    b = np.array([0.1, -0.3])
    f = [1.0, -2.0, 0.5]
    # col 0: 0.5 - 4 - 0.75 + 0.1 = -4.15 -> 0; col 1: -1 - 0.5 + 0.5 - 0.3 = -1.3 -> 0
    # flip sign of f for a positive case
    out = gn.resize_feature(f, {"resize12.l0.W": W, "resize12.l0.b": b}, 1, 2)
    assert out.tolist() == [0.0, 0.0]
    out = gn.resize_feature([-1.0, 2.0, -0.5], {"resize12.l0.W": W, "resize12.l0.b": b}, 1, 2)
    assert np.allclose(out, [0.5 * -1 + 4 + 0.75 + 0.1, 1 + 0.5 - 0.5 - 0.3], atol=1e-15)


def test_resize_dim_check():
    with pytest.raises(ShapeMismatch):
        gn.resize_feature([1.0], {"resize12.l0.W": np.zeros((3, 2)), "resize12.l0.b": np.zeros(2)}, 1, 2)


def test_fuse_zero_gate():
    y, wn, wr = gn.attention_fuse([1.0, 3.0], [3.0, -1.0], np.zeros(2))
    assert (wn, wr) == (0.5, 0.5)
    assert y.tolist() == [2.0, 1.0]


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3),
       st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_fuse_identical_inputs(f, g):
    y, wn, wr = gn.attention_fuse(f, f, np.array(g))
    assert np.allclose(y, f, rtol=1e-15, atol=1e-13)
    assert wn + wr == 1.0


def test_fuse_closed_form():
    g = np.array([1.0, 0.0])
    y, wn, wr = gn.attention_fuse([1.0, 0.0], [0.0, 0.0], g)
    assert wr == pytest.approx(0.2689, abs=1e-4)
    assert wn == pytest.approx(0.7311, abs=1e-4)
    assert wr == pytest.approx(1 / (1 + math.e), abs=1e-15)


def test_fuse_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        gn.attention_fuse([1.0, 2.0], [1.0], np.zeros(2))


# -- full network ------------------------------------------------------------

def test_forward_shapes_and_purity(rng):
    params = gn.init_params(TINY, 3)
    c = _prepared(rng)
    l1, l2, tr = gn.forward(params, c, TINY)
    assert l1.shape == l2.shape == (TINY.num_classes,)
    assert np.isfinite(l1).all() and np.isfinite(l2).all()
    m1, m2, _ = gn.forward(params, c.points.copy(), TINY)
    assert np.array_equal(l1, m1) and np.array_equal(l2, m2)
    for wn, wr in tr.fusion_weights.values():
        assert 0 <= wn[0] <= 1 and 0 <= wr[0] <= 1 and wn[0] + wr[0] == 1


def test_forward_requires_resampled(rng):
    params = gn.init_params(TINY, 0)
    with pytest.raises(ShapeMismatch):
        gn.forward(params, random_cloud(rng, TINY.point_count + 1), TINY)


def test_forward_without_fusion(rng):
    cfg = gn.tiny_config(fusion=False)
    params = gn.init_params(cfg, 0)
    assert not any(k.startswith(("gate", "resize")) for k in params)
    _, _, tr = gn.forward(params, _prepared(rng, cfg), cfg)
    assert tr.fusion_weights == {}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_order_symmetry_with_fixed_grouping(seed):
    # after grouping, the MLP and max-pool see the same multiset: relabel points,
    # remap the cached indices, and the logits must not move at all
    rng = np.random.default_rng(seed)
    cfg = TINY
    params = _randomize_biases(gn.init_params(cfg, seed % 97), rng)
    pts = _prepared(rng, cfg).points
    geom = gn.build_geometry([pts], cfg)
    perm = rng.permutation(cfg.point_count)
    inv = np.argsort(perm)
    g2 = gn.Geometry(pts[perm][None], inv[geom.c1], [inv[g] for g in geom.g1], geom.c2, geom.g2)
    a = gn.forward_batch(params, geom, cfg)
    b = gn.forward_batch(params, g2, cfg)
    assert np.array_equal(a.logits1, b.logits1) and np.array_equal(a.logits2, b.logits2)


def test_group_member_order_irrelevant(rng):
    cfg = TINY
    params = gn.init_params(cfg, 1)
    geom = gn.build_geometry([_prepared(rng, cfg).points], cfg)
    shuffled = gn.Geometry(geom.feats, geom.c1, [g[:, :, ::-1].copy() for g in geom.g1],
                           geom.c2, [g[:, :, ::-1].copy() for g in geom.g2])
    a = gn.forward_batch(params, geom, cfg)
    b = gn.forward_batch(params, shuffled, cfg)
    assert np.array_equal(a.logits1, b.logits1) and np.array_equal(a.logits2, b.logits2)


def test_batch_matches_single(rng):
    params = gn.init_params(TINY, 5)
    clouds = [_prepared(rng) for _ in range(4)]
    tr = gn.forward_batch(params, gn.build_geometry(clouds, TINY), TINY)
    for i, c in enumerate(clouds):
        l1, l2, _ = gn.forward(params, c, TINY)
        assert np.allclose(tr.logits1[i], l1, rtol=1e-13, atol=1e-14)
        assert np.allclose(tr.logits2[i], l2, rtol=1e-13, atol=1e-14)


# -- losses and prediction ---------------------------------------------------

@pytest.mark.parametrize("c", [2, 3, 7])
def test_uniform_loss(c):
    L, L1, L2 = gn.total_loss(np.zeros(c), np.full(c, 4.0), 1)
    assert L == pytest.approx(2 * math.log(c), abs=1e-14)
    assert L1 == L2


def test_saturated_loss():
    L, _, _ = gn.total_loss([25.0, 0.0, 0.0], [0.0, -20.0, -21.0], 0)
    assert L <= 1e-8


def test_closed_form_loss():
    _, L1, _ = gn.total_loss([1.0, 0.0, 0.0], [0.0, 0.0, 0.0], 0)
    assert L1 == pytest.approx(math.log(math.e + 2) - 1, abs=1e-15)
    assert L1 == pytest.approx(0.5514, abs=1e-4)


def test_loss_is_stable_for_large_logits():
    L, _, _ = gn.total_loss([1e4, 0.0], [0.0, 1e4], 0)
    assert L == pytest.approx(1e4, rel=1e-12)


@pytest.mark.parametrize("label", [-1, 3, 1.0])
def test_label_out_of_range(label):
    with pytest.raises(LabelOutOfRange):
        gn.total_loss([0.0, 0.0, 0.0], [0.0, 0.0, 0.0], label)


def test_softmax_rows_sum_to_one(rng):
    z = rng.standard_normal((50, 6)) * 30
    assert np.all(np.abs(gn.softmax(z).sum(axis=1) - 1) <= 1e-12)


def test_predict_examples():
    assert gn.predict_logits(np.array([0.1, 2.3, -1.0])) == 1
    assert gn.predict_logits(np.array([0.0, 0.0])) == 0


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=6), st.floats(-1e3, 1e3))
def test_predict_shift_invariance(logits, k):
    z = np.array(logits)
    # shifting can collapse near-ties in float arithmetic; only compare clear winners
    top = np.sort(z)[-2:]
    if top[1] - top[0] > 1e-9 * max(1.0, abs(k)):
        assert gn.predict_logits(z) == gn.predict_logits(z + k)


def test_predict_uses_primary_head(rng):
    params = gn.init_params(TINY, 2)
    c = _prepared(rng)
    l1, _, _ = gn.forward(params, c, TINY)
    assert gn.predict(params, c, TINY) == int(np.argmax(l1))


# -- backward ----------------------------------------------------------------

def test_backward_linear_in_scale(rng):
    params = _randomize_biases(gn.init_params(TINY, 4), rng)
    geom = gn.build_geometry([_prepared(rng) for _ in range(3)], TINY)
    tr = gn.forward_batch(params, geom, TINY)
    labels = np.array([0, 1, 1])
    g1 = gn.backward(params, tr, labels, TINY, scale=1.0)
    g2 = gn.backward(params, tr, labels, TINY, scale=2.0)
    for k in g1:
        assert np.array_equal(2 * g1[k], g2[k])


def test_backward_dead_path(rng):
    params = gn.init_params(TINY, 4)
    # a unit whose weights and bias are strongly negative never fires
    params["glob1.l0.W"][:, 0] = -1.0
    params["glob1.l0.b"][0] = -1e6
    geom = gn.build_geometry([_prepared(rng)], TINY)
    grads = gn.backward(params, gn.forward_batch(params, geom, TINY), [1], TINY)
    assert not grads["glob1.l0.W"][:, 0].any() and grads["glob1.l0.b"][0] == 0


def test_backward_shapes(rng):
    params = gn.init_params(TINY, 0)
    tr = gn.forward_batch(params, gn.build_geometry([_prepared(rng)], TINY), TINY)
    grads = gn.backward(params, tr, [0], TINY)
    assert {k: v.shape for k, v in grads.items()} == gn.param_shapes(TINY)


def test_backward_trace_mismatch(rng):
    params = gn.init_params(TINY, 0)
    tr = gn.forward_batch(params, gn.build_geometry([_prepared(rng)], TINY), TINY)
    with pytest.raises(TraceMismatch):
        gn.backward(params, tr, [0, 1], TINY)
    with pytest.raises(TraceMismatch):
        gn.backward(params, gn.ForwardTrace(tr.logits1, tr.logits2), [0], TINY)


def test_backward_finite_difference_spot(rng):
    cfg = TINY
    params = _randomize_biases(gn.init_params(cfg, 9), rng)
    geom = gn.build_geometry([_prepared(rng, cfg) for _ in range(2)], cfg)
    labels = np.array([1, 0])

    def loss(p):
        tr = gn.forward_batch(p, geom, cfg)
        return gn.per_sample_losses(tr.logits1, tr.logits2, labels)[0].mean()

    grads = gn.backward(params, gn.forward_batch(params, geom, cfg), labels, cfg)
    for name in ("head1.l2.W", "gate1.w", "resize21.l0.b", "glob2.l0.W"):
        idx = np.unravel_index(np.argmax(np.abs(grads[name])), grads[name].shape)
        h = 1e-6
        hi = {k: v.copy() for k, v in params.items()}
        lo = {k: v.copy() for k, v in params.items()}
        hi[name][idx] += h
        lo[name][idx] -= h
        fd = (loss(hi) - loss(lo)) / (2 * h)
        assert fd == pytest.approx(grads[name][idx], rel=1e-5, abs=1e-9)


# -- parameters and serialization -------------------------------------------

def test_init_is_seeded():
    a, b = gn.init_params(TINY, 11), gn.init_params(TINY, 11)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    c = gn.init_params(TINY, 12)
    assert any(not np.array_equal(a[k], c[k]) for k in a)


def test_check_params_rejects_wrong_shape():
    p = gn.init_params(TINY, 0)
    p["head1.l0.W"] = p["head1.l0.W"][:-1]
    with pytest.raises(ShapeMismatch):
        gn.check_params(p, TINY)


def test_config_validation():
    with pytest.raises(ValidationError):
        gn.GesIDNetConfig(num_classes=1)
    with pytest.raises(ValidationError):
        gn.SAScale(0.0, 4, (8,))


@pytest.mark.parametrize("name", sorted(gn.PRESETS))
def test_config_dict_round_trip(name):
    cfg = gn.PRESETS[name](num_classes=4)
    assert gn.GesIDNetConfig.from_dict(cfg.to_dict()) == cfg


def test_model_round_trip_bit_exact(rng):
    params = _randomize_biases(gn.init_params(TINY, 6), rng)
    cfg2, p2 = model_from_text(model_to_text(TINY, params), expected=TINY)
    assert cfg2 == TINY
    c = _prepared(rng)
    a, b = gn.forward(params, c, TINY), gn.forward(p2, c, cfg2)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
