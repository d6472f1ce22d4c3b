"""Targets, loss, schedule, augmentation, clips and the training loop."""

import logging
import math

import numpy as np
import pytest

from evpose.events import EventStream, make_events, read_events, slice_packets
from evpose.exceptions import InvalidArgument, InvalidConfig, NonFiniteLoss
from evpose.metrics import decode
from evpose.ndgrad import Tensor
from evpose.pose import BONES, JOINTS, LIMB_PIVOTS, Pose
from evpose.posenet import build_params
from evpose.trainer import (
    ClipDataset,
    Sample,
    augment_global_rotation,
    augment_limb_rotation,
    batch_targets,
    evaluate_dataset,
    heatmap_loss,
    infer_stream,
    limb_event_mask,
    load_checkpoint,
    make_target,
    read_manifest,
    replay_schedule,
    rotate_points,
    segment_distances,
    sequence_dir,
    train,
    train_step,
)
from tests import helpers

logger = logging.getLogger(__name__)


def test_target_peak_and_width():
    """A joint on a cell centre peaks at exactly 1; one sigma away is exp(-1/2)."""
    pose = Pose([[14.0, 22.0]], [True])
    target = make_target(pose, 16, 4, sigma=2.0)
    assert target.shape == (1, 16, 16)
    assert target[0, 5, 3] == 1.0
    assert target[0, 5, 5] == pytest.approx(math.exp(-0.5))
    assert target.max() == 1.0


def test_target_invisible_is_zero():
    """Masked joints get a blank channel."""
    pose = Pose([[14.0, 22.0], [30.0, 30.0]], [True, False])
    assert not make_target(pose, 16, 4)[1].any()


def test_decode_recovers_targets():
    """Arg-max of a rendered target lands within 3 px of the joint."""
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        pose = helpers.random_pose(rng)
        back = decode(make_target(pose, 16, 4), 4)
        assert back.visible.all()
        worst = max(worst, np.linalg.norm(back.joints - pose.joints, axis=1).max())
    logger.info("worst decode error %.3f px", worst)
    assert worst <= 3.0


def test_loss_examples():
    """Zero for a perfect match; sum(target^2) / (W' H') against zeros."""
    rng = np.random.default_rng(1)
    target = rng.random((1, 1, 4, 4))
    mask = np.ones((1, 1), dtype=bool)
    assert heatmap_loss([Tensor(target)], [target], [mask]).item() == 0
    loss = heatmap_loss([Tensor(np.zeros((1, 1, 4, 4)))], [target], [mask]).item()
    assert loss == pytest.approx((target**2).sum() / 16)


def test_loss_is_a_mean_over_frames():
    """Repeating every frame leaves the loss unchanged."""
    rng = np.random.default_rng(2)
    preds = [Tensor(rng.standard_normal((2, 3, 4, 4))) for _ in range(2)]
    targets = [rng.random((2, 3, 4, 4)) for _ in range(2)]
    masks = [rng.random((2, 3)) > 0.3 for _ in range(2)]
    once = heatmap_loss(preds, targets, masks).item()
    twice = heatmap_loss(preds * 2, targets * 2, masks * 2).item()
    assert twice == pytest.approx(once, rel=1e-12)


def test_loss_ignores_masked_channels():
    """Whatever an invisible joint's channel holds costs nothing."""
    rng = np.random.default_rng(3)
    target = rng.random((1, 2, 4, 4))
    pred = target.copy()
    pred[0, 1] = 100.0
    mask = np.array([[True, False]])
    assert heatmap_loss([Tensor(pred)], [target], [mask]).item() == 0
    with pytest.raises(InvalidArgument):
        heatmap_loss([], [], [])


def test_schedule_constant_loss():
    """A flat loss from 5e-5 halves every 5 epochs and stops after 6 halvings."""
    states = replay_schedule([1.0] * 100, 5e-5)
    assert len(states) == 1 + 5 * 6
    assert states[-1].stop
    assert states[-1].lr == pytest.approx(5e-5 / 2**6)
    assert states[4].lr == 5e-5
    assert states[5].lr == 2.5e-5
    assert not any(s.stop for s in states[:-1])


def test_schedule_stops_below_floor():
    """Starting under lr_min stops after the first epoch."""
    states = replay_schedule([1.0, 0.5], 5e-7)
    assert len(states) == 1
    assert states[0].stop


def test_schedule_keeps_rate_while_improving():
    """Strict improvements never cut lr; equal losses count as stalls."""
    states = replay_schedule([10.0 - i for i in range(20)], 5e-5)
    assert all(s.lr == 5e-5 and s.since_best == 0 for s in states)
    states = replay_schedule([1.0, 1.0, 1.0], 5e-5, patience=2)
    assert [s.lr for s in states] == [5e-5, 5e-5, 2.5e-5]


def test_rotate_points_quarter_turn():
    """+90 degrees turns +x into +y; 0 is the identity."""
    assert np.allclose(rotate_points([[1.0, 0.0]], (0, 0), 90), [[0.0, 1.0]], atol=1e-12)
    pts = np.random.default_rng(4).integers(0, 10, (5, 2)).astype(np.float64)
    assert np.array_equal(rotate_points(pts, (3, 3), 0), pts)


def test_global_rotation_round_trip():
    """Interior events come back after +90 then -90; events leaving the sensor drop."""
    packet = make_events([5, 8], [2, 2], [0, 1], [1, -1])
    sample = Sample([packet], [Pose([[5.0, 2.0]], [True])], 9, 5)
    turned = augment_global_rotation(sample, 90)
    assert turned.packets[0]["u"].tolist() == [4]
    assert turned.packets[0]["v"].tolist() == [3]
    assert np.allclose(turned.poses[0].joints, [[4.0, 3.0]])
    back = augment_global_rotation(turned, -90)
    assert back.packets[0].tolist() == packet[:1].tolist()


def test_global_rotation_hides_joints_off_sensor():
    """A joint rotated off the frame becomes invisible."""
    sample = Sample([make_events([], [], [], [])], [Pose([[8.0, 2.0]], [True])], 9, 5)
    assert not augment_global_rotation(sample, 90).poses[0].visible[0]


def test_limb_rotation_moves_forearm_only():
    """Forearm events and the wrist turn about the elbow; the head stays put."""
    pose = helpers.bone_pose()
    packet = make_events([43, 32], [35, 14], [0, 1], [1, 1])
    out = augment_limb_rotation(Sample([packet], [pose], 64, 64), "l_elbow", 90)
    assert out.packets[0]["u"].tolist() == [37, 32]
    assert out.packets[0]["v"].tolist() == [31, 14]
    wrist = JOINTS["l_wrist"]
    assert np.allclose(out.poses[0].joints[wrist], [33.0, 31.0])
    untouched = [k for k in range(13) if k != wrist]
    assert np.array_equal(out.poses[0].joints[untouched], pose.joints[untouched])


def test_limb_rotation_zero_and_invisible_pivot():
    """theta = 0 changes nothing; a hidden pivot skips the augmentation."""
    pose = helpers.bone_pose()
    packet = make_events([43, 32], [35, 14], [0, 1], [1, 1])
    same = augment_limb_rotation(Sample([packet], [pose], 64, 64), "l_knee", 0)
    assert same.packets[0].tolist() == packet.tolist()
    visible = pose.visible.copy()
    visible[JOINTS["l_elbow"]] = False
    sample = Sample([packet], [Pose(pose.joints, visible)], 64, 64)
    assert augment_limb_rotation(sample, "l_elbow", 45) is sample
    with pytest.raises(InvalidArgument):
        augment_limb_rotation(sample, "head", 45)


def forearm_sample(offsets=(-1.0, 0.0, 1.0)) -> Sample:
    """bone_pose with 48 events on the left forearm, clear of the elbow, and one on the head."""
    pose = helpers.bone_pose()
    bone = (JOINTS["l_elbow"], JOINTS["l_wrist"])
    packet = helpers.bone_events(pose, [bone], np.linspace(0.25, 1.0, 16), offsets)
    head = make_events([32], [10], [len(packet)], [1])
    return Sample([np.concatenate([packet, head])], [pose], 64, 64)


def test_limb_event_mask_band_edges():
    """Inside the strip and past the pivot is a member; the strip's edge and the pivot side are not."""
    pose = helpers.bone_pose()
    joints = pose.joints.copy()
    joints[JOINTS["l_wrist"]] = [42.0, 39.0]
    pose = pose.moved(joints)
    bone = LIMB_PIVOTS["l_elbow"][0]
    packet = make_events([43, 44, 42, 41, 42], [35, 35, 30, 29, 40], [0, 1, 2, 3, 4], [1, 1, 1, 1, 1])
    assert limb_event_mask(packet, pose, bone, band=2.0).tolist() == [True, False, False, False, True]
    assert limb_event_mask(packet, pose, bone, band=3.0).tolist() == [True, True, False, False, True]
    hidden = Pose(pose.joints, pose.visible & (np.arange(13) != JOINTS["l_wrist"]))
    assert not limb_event_mask(packet, hidden, bone).any()
    with pytest.raises(InvalidArgument):
        limb_event_mask(packet, pose, bone, band=0.0)


def test_limb_rotation_quarter_turn_round_trip():
    """+90 then -90 about an integer pivot restores every event exactly."""
    sample = forearm_sample()
    bone = LIMB_PIVOTS["l_elbow"][0]
    assert limb_event_mask(sample.packets[0], sample.poses[0], bone).sum() == 48
    back = augment_limb_rotation(augment_limb_rotation(sample, "l_elbow", 90), "l_elbow", -90)
    assert back.packets[0].tolist() == sample.packets[0].tolist()
    assert np.allclose(back.poses[0].joints, sample.poses[0].joints)
    assert np.array_equal(back.poses[0].visible, sample.poses[0].visible)


@pytest.mark.parametrize("theta", [30.0, 45.0, -60.0])
def test_limb_rotation_round_trip(theta):
    """theta then -theta brings every forearm event back to within two pixel roundings."""
    sample = forearm_sample()
    turned = augment_limb_rotation(sample, "l_elbow", theta)
    back = augment_limb_rotation(turned, "l_elbow", -theta)
    before, after = sample.packets[0], back.packets[0]
    assert len(after) == len(before)
    assert after["t"].tolist() == before["t"].tolist()
    assert after["p"].tolist() == before["p"].tolist()
    moved = np.hypot(after["u"].astype(np.float64) - before["u"], after["v"].astype(np.float64) - before["v"])
    assert moved.max() <= math.sqrt(2) + 1e-9
    assert np.allclose(back.poses[0].joints, sample.poses[0].joints)


@pytest.mark.parametrize("theta", [30.0, 90.0, -45.0])
def test_limb_rotation_preserves_distances(theta):
    """Members keep their distance to the pivot and to the bone; everything else stays put."""
    sample = forearm_sample()
    pose = sample.poses[0]
    bone = LIMB_PIVOTS["l_elbow"][0]
    pivot = pose.joints[JOINTS["l_elbow"]]
    packet = sample.packets[0]
    members = limb_event_mask(packet, pose, bone)
    out = augment_limb_rotation(sample, "l_elbow", theta)
    turned, new_pose = out.packets[0], out.poses[0]
    assert len(turned) == len(packet)

    def points(events):
        return np.stack([events["u"], events["v"]], axis=1).astype(np.float64)

    def to_bone(pts, p):
        a, b = BONES[bone]
        return segment_distances(pts, p.joints[a][None], p.joints[b][None])[:, 0]

    rounding = math.sqrt(0.5) + 1e-9
    old, new = points(packet), points(turned)
    assert np.all(np.abs(np.linalg.norm(new - pivot, axis=1) - np.linalg.norm(old - pivot, axis=1)) <= rounding)
    assert np.all(np.abs(to_bone(new[members], new_pose) - to_bone(old[members], pose)) <= rounding)
    assert np.array_equal(new[~members], old[~members])


def test_global_rotation_keeps_labels_on_events():
    """After a turn, surviving events still sit on the turned bones and visibility tracks the sensor."""
    pose = helpers.bone_pose()
    pose = pose.moved(pose.joints + [20.0, 0.0])
    sample = Sample([helpers.bone_events(pose, BONES)], [pose], 64, 64)
    out = augment_global_rotation(sample, 45)
    turned, new_pose = out.packets[0], out.poses[0]
    assert 0 < len(turned) < len(sample.packets[0])
    starts = np.array([new_pose.joints[a] for a, _ in BONES])
    ends = np.array([new_pose.joints[b] for _, b in BONES])
    pts = np.stack([turned["u"], turned["v"]], axis=1).astype(np.float64)
    assert segment_distances(pts, starts, ends).min(axis=1).max() <= math.sqrt(2) + 1e-9
    x, y = new_pose.joints[:, 0], new_pose.joints[:, 1]
    inside = (x >= 0) & (x < 64) & (y >= 0) & (y < 64)
    assert np.array_equal(new_pose.visible, inside)
    assert new_pose.visible.any() and not new_pose.visible.all()
    x0, y0, x1, y1 = new_pose.bbox()
    assert 0 <= x0 <= x1 < 64 and 0 <= y0 <= y1 < 64


def expected_clips(root, split, T):
    """Clip count from the manifest's frame counts."""
    return sum((r["frames"] - T) // T + 1 for r in read_manifest(root) if r["split"] == split)


def test_clip_dataset(synth_root):
    """Clips tile each sequence; prepared inputs are normalized crops."""
    dataset = ClipDataset(synth_root, "train", T=3)
    assert len(dataset) == expected_clips(synth_root, "train", 3) > 0
    clip = dataset.prepare(0, 32)
    assert clip.inputs.shape == (3, 2, 32, 32)
    assert 0 <= clip.inputs.min() and clip.inputs.max() <= 1
    assert len(clip.poses) == 3
    assert clip.poses[0].K == 13
    assert dataset.prepare(0, 32, crop="events").inputs.shape == (3, 2, 32, 32)
    with pytest.raises(InvalidArgument):
        dataset.prepare(0, 32, crop="box")
    with pytest.raises(InvalidArgument):
        ClipDataset(synth_root, "train", T=0)


def test_batch_targets(synth_root):
    """Inputs stack to (T, N, 2, S, S) with one target and mask per step."""
    model = pytest.tiny_model()
    dataset = ClipDataset(synth_root, "train", T=3)
    clips = [dataset.prepare(i, model.input_size) for i in range(2)]
    inputs, targets, masks = batch_targets(clips, model, 2.0)
    assert inputs.shape == (3, 2, 2, 32, 32)
    assert [t.shape for t in targets] == [(2, 13, 8, 8)] * 3
    assert [m.shape for m in masks] == [(2, 13)] * 3


def test_zero_lr_keeps_parameters(synth_root):
    """With lr = 0 one epoch runs and the weights don't move."""
    model = pytest.tiny_model()
    result = train(ClipDataset(synth_root, "train", T=3), model, pytest.tiny_train(lr=0.0), threads=2)
    assert len(result.history) == 1
    assert result.checkpoint.schedule.stop
    fresh = build_params(model, seed=0)
    for name, p in result.checkpoint.params.items():
        assert np.array_equal(p.values, fresh[name].values)


def test_training_is_deterministic(synth_root):
    """Same seed, any thread count, same losses, even with augmentation on."""
    model = pytest.tiny_model()
    config = pytest.tiny_train(augment=True, pose_aug=True, limb_rotation_prob=1.0)
    dataset = ClipDataset(synth_root, "train", T=3)
    a = train(dataset, model, config, threads=1)
    b = train(dataset, model, config, threads=3)
    assert a.checkpoint.losses == b.checkpoint.losses
    assert all(math.isfinite(x) for x in a.checkpoint.losses)


def test_resume_matches_uninterrupted_run(synth_root, tmp_path):
    """Stopping after two epochs and resuming gives the same four-epoch loss trace."""
    model = pytest.tiny_model()
    dataset = ClipDataset(synth_root, "train", T=3)
    whole = train(dataset, model, pytest.tiny_train(epochs_max=4), out=tmp_path / "whole", threads=2)
    train(dataset, model, pytest.tiny_train(epochs_max=2), out=tmp_path / "split", threads=2)
    ckpt = load_checkpoint(tmp_path / "split" / "last.epc")
    assert ckpt.epoch == 2
    resumed = train(dataset, model, pytest.tiny_train(epochs_max=4), out=tmp_path / "split", resume=ckpt, threads=2)
    assert len(resumed.history) == 2
    assert resumed.checkpoint.losses == whole.checkpoint.losses
    for name, p in whole.checkpoint.params.items():
        assert np.array_equal(p.values, resumed.checkpoint.params[name].values)
    log = (tmp_path / "split" / "train.log").read_text(encoding="utf-8").splitlines()
    assert [int(line.split("\t")[0]) for line in log] == [0, 1, 2, 3]
    assert (tmp_path / "whole" / "best.epc").exists()


def test_train_preconditions(synth_root):
    """No clips is an argument error; clips longer than T_max a config error."""
    model = pytest.tiny_model()
    with pytest.raises(InvalidArgument):
        train(ClipDataset(synth_root, "validation", T=3), model, pytest.tiny_train())
    with pytest.raises(InvalidConfig):
        train(ClipDataset(synth_root, "train", T=5), model, pytest.tiny_train(T=5))


def test_non_finite_loss_leaves_weights(synth_root):
    """A NaN loss raises before any update."""
    model = pytest.tiny_model()
    config = pytest.tiny_train()
    params = build_params(model)
    params.load("head.bias", np.full(13, np.nan))
    before = params["encoder.stem.weight"].values.copy()
    clips = [ClipDataset(synth_root, "train", T=3).prepare(0, 32)]
    with pytest.raises(NonFiniteLoss) as e:
        train_step(clips, model, params, config, lr=1e-3, epoch=3, batch=1)
    assert (e.value.epoch, e.value.batch) == (3, 1)
    assert np.array_equal(params["encoder.stem.weight"].values, before)
    assert params.step == 0


def test_evaluate_dataset(synth_root):
    """Every test frame with a visible joint is scored; AP never beats AP50."""
    model = pytest.tiny_model()
    dataset = ClipDataset(synth_root, "test", T=3)
    report = evaluate_dataset(dataset, model, build_params(model), threads=2)
    assert 0 < report.overall.frames <= len(dataset) * 3
    assert 0 <= report.AP <= report.AP50 <= 100
    assert 0 <= report.PCK <= 100
    assert report.per_action


def test_infer_stream(synth_root):
    """One pose per frame interval counted from t = 0, in sensor coordinates."""
    model = pytest.tiny_model()
    params = build_params(model)
    row = read_manifest(synth_root)[0]
    stream = read_events(sequence_dir(synth_root, row["id"]) / "events.evt1")
    poses = infer_stream(stream, model, params, T=3, interval=pytest.interval)
    assert len(poses) == len(slice_packets(stream, pytest.interval, t0=0))
    assert all(p.K == 13 for p in poses)
    padded = infer_stream(stream, model, params, T=3, interval=pytest.interval, frames=row["frames"])
    assert len(padded) == row["frames"]
    assert not infer_stream(EventStream(96, 96), model, params, T=3)
    with pytest.raises(InvalidConfig):
        infer_stream(stream, model, params, T=5)
    with pytest.raises(InvalidArgument):
        infer_stream(stream, model, params, T=3, frames=-1)


def test_infer_stream_leading_silence():
    """A recording that starts late still gets a pose for every label frame."""
    model = pytest.tiny_model()
    params = build_params(model)
    t = [k * 8333 + 5 for k in (3, 4, 5)]
    stream = EventStream(96, 96, make_events([40, 41, 42], [50, 50, 50], t, [1, -1, 1]))
    assert len(infer_stream(stream, model, params, T=3, interval=8333)) == 6
    assert len(infer_stream(stream, model, params, T=3, interval=8333, frames=8)) == 8
    assert len(infer_stream(stream, model, params, T=3, interval=8333, frames=4)) == 4
