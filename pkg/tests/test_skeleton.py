import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import gradient_relative_error
from pacgan import skeleton, synthdata
from pacgan.keypoints import LIMBS, NUM_JOINTS, NUM_LIMBS, KeypointSet, mean_keypoint_error

SIZE = (32, 16)


def test_rasterize_deterministic():
    kp = synthdata.make_pose(4)
    a, b = skeleton.rasterize_skeleton(kp, SIZE), skeleton.rasterize_skeleton(kp, SIZE)
    assert a == b
    assert a.rendered.min() >= 0 and a.rendered.max() <= 1


def test_rasterize_degenerate_pose():
    kp = KeypointSet(np.full((NUM_JOINTS, 2), 0.5), np.ones(NUM_JOINTS))
    img = skeleton.rasterize_skeleton(kp, SIZE).rendered
    lit = np.argwhere(img.sum(axis=2) > 0)
    assert len(lit) > 0
    # a single blob around the shared point
    assert np.ptp(lit[:, 0]) <= 2 and np.ptp(lit[:, 1]) <= 2


@given(st.integers(0, 10**5))
@settings(max_examples=20, deadline=None)
def test_rasterize_covers_every_limb(seed):
    kp = synthdata.make_pose(seed)
    img = skeleton.rasterize_skeleton(kp, SIZE).rendered
    px = kp.to_pixels(SIZE)
    for a, b in LIMBS:
        for t in np.linspace(0, 1, 7):
            c, r = np.rint(px[a] + t * (px[b] - px[a])).astype(int)
            assert img[r, c].sum() > 0


def test_extract_one_hot_peak():
    maps = np.zeros((NUM_JOINTS, 32, 16))
    maps[:, 5, 3] = 1.0
    kp = skeleton.extract_keypoints(maps)
    assert np.allclose(kp.points[0], [3 / 15, 5 / 31])
    assert np.all(kp.confidences == 1.0)


def test_extract_uniform_map_tie_break():
    kp = skeleton.extract_keypoints(np.full((NUM_JOINTS, 32, 16), 0.25))
    assert np.all(kp.points == 0)


def test_extract_wrong_count():
    with pytest.raises(ValueError):
        skeleton.extract_keypoints(np.zeros((3, 8, 8)))


@given(st.integers(0, 10**5))
@settings(max_examples=20, deadline=None)
def test_heatmap_round_trip_within_one_pixel(seed):
    kp = synthdata.make_pose(seed)
    back = skeleton.extract_keypoints(skeleton.keypoint_heatmaps(kp, SIZE))
    d = np.linalg.norm(back.to_pixels(SIZE) - kp.to_pixels(SIZE), axis=1)
    assert d.max() <= 1.0


def test_limb_fields_are_unit_inside_ribbon():
    kp = synthdata.make_pose(2)
    f = skeleton.limb_fields(kp, SIZE)
    assert f.shape == (NUM_LIMBS, 2, 32, 16)
    norms = np.linalg.norm(f, axis=1)
    assert np.allclose(norms[norms > 0], 1.0)


def _estimator(n_stages=3, **kw):
    torch.manual_seed(0)
    return skeleton.PafEstimator(SIZE, n_stages=n_stages, **kw)


def test_stage_count_and_shapes():
    img = synthdata.render_pedestrian(synthdata.make_identity(0), synthdata.make_pose(0), 1)
    assert len(skeleton.paf_forward(_estimator(1), img)) == 1
    outs = skeleton.paf_forward(_estimator(3), img)
    assert [o.stage_index for o in outs] == [1, 2, 3]
    assert outs[-1].confidence_maps.shape == (1, NUM_JOINTS, 32, 16)
    assert outs[-1].affinity_fields.shape == (1, NUM_LIMBS, 2, 32, 16)


def test_refinement_input_channels():
    est = _estimator(3, feature_channels=16)
    assert est.stages[0].in_channels == 16
    for st_ in est.stages[1:]:
        assert st_.in_channels == 16 + NUM_JOINTS + 2 * NUM_LIMBS


def test_size_mismatch():
    img = synthdata.render_pedestrian(synthdata.make_identity(0), synthdata.make_pose(0), 1, (16, 8))
    with pytest.raises(ValueError):
        skeleton.paf_forward(_estimator(1), img)


def test_zeroed_branches_propagate_biases():
    est = _estimator(3)
    with torch.no_grad():
        for stage in est.stages:
            for branch in (stage.maps, stage.fields):
                for m in branch:
                    if isinstance(m, torch.nn.Conv2d):
                        m.weight.zero_()
    img = synthdata.render_pedestrian(synthdata.make_identity(1), synthdata.make_pose(1), 1)
    outs = skeleton.paf_forward(est, img)
    for o, stage in zip(outs, est.stages):
        want_maps = stage.maps[-1].bias.view(1, -1, 1, 1).expand_as(o.confidence_maps)
        want_fields = stage.fields[-1].bias.view(1, NUM_LIMBS, 2, 1, 1).expand_as(o.affinity_fields)
        assert torch.equal(o.confidence_maps, want_maps)
        assert torch.equal(o.affinity_fields, want_fields)


def test_stage_two_depends_on_stage_one_maps():
    est = _estimator(2)
    x = torch.rand(1, 3, *SIZE)
    feats = est.features(x)
    maps, flds = est.stages[0](feats)
    base = est.stages[1](torch.cat([feats, maps, flds], 1))[0]
    bumped = maps.clone()
    bumped[0, 0, 10, 5] += 1e-3
    moved = est.stages[1](torch.cat([feats, bumped, flds], 1))[0]
    assert (moved - base).abs().max() > 0


def _out(maps, fields):
    return skeleton.PafStageOutput(torch.as_tensor(maps, dtype=torch.float64), torch.as_tensor(fields, dtype=torch.float64), 1)


def test_stage_loss_exact_and_masked():
    rng = np.random.default_rng(0)
    m, f = rng.random((2, 3, 4, 4)), rng.random((2, 2, 2, 4, 4))
    assert [float(v) for v in skeleton.paf_stage_loss(_out(m, f), m, f, np.ones((2, 4, 4)))] == [0.0, 0.0]
    assert [float(v) for v in skeleton.paf_stage_loss(_out(m, f), 0 * m, 0 * f, np.zeros((2, 4, 4)))] == [0.0, 0.0]


def test_stage_loss_hand_value():
    lm, _ = skeleton.paf_stage_loss(_out(np.ones((1, 1, 1, 1)), np.zeros((1, 1, 2, 1, 1))),
                                    np.zeros((1, 1, 1, 1)), np.zeros((1, 1, 2, 1, 1)), np.full((1, 1, 1), 2.0))
    assert float(lm) == 2.0


def test_stage_loss_errors():
    m, f = np.zeros((1, 3, 4, 4)), np.zeros((1, 2, 2, 4, 4))
    with pytest.raises(ValueError):
        skeleton.paf_stage_loss(_out(m, f), np.zeros((1, 3, 4, 5)), f, 1.0)
    with pytest.raises(ValueError):
        skeleton.paf_stage_loss(_out(m, f), m, f, -np.ones((1, 4, 4)))


@given(st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_stage_loss_nonnegative(seed):
    rng = np.random.default_rng(seed)
    m, f = rng.normal(size=(1, 2, 3, 3)), rng.normal(size=(1, 1, 2, 3, 3))
    w = rng.random((1, 3, 3))
    a, b = skeleton.paf_stage_loss(_out(m, f), rng.normal(size=m.shape), rng.normal(size=f.shape), w)
    assert float(a) >= 0 and float(b) >= 0


def test_total_loss():
    assert skeleton.paf_total_loss([(1.0, 2.0)]) == 3.0
    assert skeleton.paf_total_loss([(1, 2), (3, 4)]) == 10
    rng = np.random.default_rng(1)
    pairs = [tuple(rng.random(2)) for _ in range(5)]
    assert skeleton.paf_total_loss(pairs) == pytest.approx(sum(a + b for a, b in pairs), rel=1e-12)
    with pytest.raises(ValueError):
        skeleton.paf_total_loss([])


def tiny_paf():
    torch.manual_seed(1)
    est = skeleton.PafEstimator((4, 4), n_stages=2, feature_channels=1, branch_channels=1, n_joints=3, n_limbs=2).double()
    return est


def paf_loss_closure(est):
    rng = np.random.default_rng(2)
    x = torch.as_tensor(rng.random((2, 3, 4, 4)))
    gm, gf, w = rng.random((2, 3, 4, 4)), rng.random((2, 2, 2, 4, 4)), rng.random((2, 4, 4))

    def f():
        outs = [skeleton.PafStageOutput(m, fl, t) for t, (m, fl) in enumerate(est(x))]
        return skeleton.paf_total_loss([skeleton.paf_stage_loss(o, gm, gf, w) for o in outs])

    return f


def test_paf_gradient_matches_finite_differences():
    est = tiny_paf()
    params = list(est.parameters())
    assert sum(p.numel() for p in params) <= 1000
    assert gradient_relative_error(paf_loss_closure(est), params) < 1e-4


def test_train_zero_lr_leaves_parameters():
    est = _estimator(1)
    before = [p.detach().clone() for p in est.parameters()]
    s = synthdata.render_pedestrian(synthdata.make_identity(0), synthdata.make_pose(0), 1)
    skeleton.train_paf(est, [s], skeleton.PafTrainConfig(epochs=1, lr=0.0))
    assert all(torch.equal(a, b) for a, b in zip(before, est.parameters()))


def test_train_empty_rejected():
    with pytest.raises(ValueError):
        skeleton.train_paf(_estimator(1), [])


@pytest.mark.slow
def test_train_reduces_loss():
    ds = synthdata.generate_dataset(8, 8, 1, SIZE, 0)
    est, log = skeleton.train_paf(_estimator(3), ds.view1, skeleton.PafTrainConfig(epochs=200, batch_size=16))
    assert log.epoch_loss[-1] < 0.5 * log.epoch_loss[0]
