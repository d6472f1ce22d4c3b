"""Stick-figure kinematics, event simulation and dataset generation."""

import logging

import numpy as np
import pytest

from evpose.exceptions import InvalidArgument, InvalidConfig
from evpose.pose import JOINTS, read_poses
from evpose.events import read_events
from evpose.synthgen import (
    ROOT,
    MotionScript,
    Oscillation,
    StaticEpisode,
    SynthConfig,
    default_skeleton,
    forward_kinematics,
    joint_positions,
    make_dataset,
    make_sequence,
    random_script,
    simulate,
)
from evpose.trainer import read_manifest, sequence_dir

logger = logging.getLogger(__name__)

SPEC = default_skeleton()


def test_rest_pose():
    """No script puts every joint at its rest offset from the origin."""
    pose = forward_kinematics(SPEC, MotionScript(), 0)
    assert pose.visible.all()
    assert np.allclose(pose.joints[JOINTS["head"]], [64, 44])
    assert np.allclose(pose.joints[JOINTS["l_shoulder"]], [72, 52])
    assert np.allclose(pose.joints[JOINTS["l_elbow"]], [74, 62])
    assert np.allclose(pose.joints[JOINTS["r_ankle"]], [58, 100])


def test_quarter_turn_carries_children():
    """+90 degrees at the elbow swings the forearm and wrist with it."""
    elbow = JOINTS["l_elbow"]
    script = MotionScript({elbow: [Oscillation(90.0, 0.0, np.pi / 2)]})
    pose = forward_kinematics(SPEC, script, 0)
    assert np.allclose(pose.joints[elbow], [62, 54])
    assert np.allclose(pose.joints[JOINTS["l_wrist"]], [53, 55])
    assert np.allclose(pose.joints[JOINTS["r_elbow"]], [54, 62])


def test_still_figure_is_silent():
    """Nothing moves, nothing fires; labels still come once per interval."""
    sample = simulate(SPEC, MotionScript(), 50_000, seed=1)
    assert len(sample.stream) == 0
    assert len(sample.poses) == 50_000 // 8333


def test_noise_only():
    """Background noise alone fills a still scene."""
    sample = simulate(SPEC, MotionScript(), 50_000, noise_rate=50.0, seed=1)
    assert len(sample.stream) > 0
    assert set(np.unique(sample.stream.events["p"]).tolist()) <= {-1, 1}


def test_static_episode_is_silent():
    """With one moving limb frozen for a while, no events fall inside the episode."""
    elbow = JOINTS["l_elbow"]
    episode = StaticEpisode(JOINTS["l_shoulder"], 20_000, 60_000)
    script = MotionScript({elbow: [Oscillation(40.0, 5.0)]}, [episode])
    sample = simulate(SPEC, script, 100_000, seed=2)
    t = sample.stream.events["t"].astype(np.int64)
    assert len(t) > 0
    assert not np.any((t >= 20_000) & (t < 60_000))
    assert np.any(t < 20_000) and np.any(t >= 60_000)
    inside = [k for k in range(len(sample.poses)) if 20_000 <= (k + 0.5) * 8333 < 60_000]
    for a, b in zip(inside, inside[1:]):
        assert np.array_equal(sample.poses[a].joints, sample.poses[b].joints)


def test_bad_episode_root():
    """Episodes must hang off the torso and stay inside the recording."""
    script = MotionScript({}, [StaticEpisode(JOINTS["l_elbow"], 0, 10)])
    with pytest.raises(InvalidArgument):
        simulate(SPEC, script, 100)
    script = MotionScript({}, [StaticEpisode(JOINTS["l_shoulder"], 0, 200)])
    with pytest.raises(InvalidArgument):
        simulate(SPEC, script, 100)


def test_random_script_static_span():
    """A static script freezes a quarter to a half of the recording."""
    for seed in range(20):
        script = random_script(SPEC, "waving", "fast", 1_000_000, np.random.default_rng(seed), static=True)
        (episode,) = script.episodes
        assert 250_000 <= episode.t_end - episode.t_start <= 500_000
        assert 0 <= episode.t_start and episode.t_end <= 1_000_000
    with pytest.raises(InvalidArgument):
        random_script(SPEC, "dancing", "fast", 1000, np.random.default_rng(0))


def test_same_seed_same_sequence():
    """(seed, index) fixes the whole recording."""
    mix = {"slow": 1.0, "fast": 1.0}
    a = make_sequence(3, 11, 60_000, 8333, mix, True, 96, 96)
    b = make_sequence(3, 11, 60_000, 8333, mix, True, 96, 96)
    assert a.stream == b.stream
    assert a.action == b.action
    assert all(np.array_equal(p.joints, q.joints) for p, q in zip(a.poses, b.poses))
    c = make_sequence(4, 11, 60_000, 8333, mix, True, 96, 96)
    assert c.stream != a.stream


def test_dataset_layout(synth_root):
    """Manifest rows, alternating splits, static share and readable files."""
    rows = read_manifest(synth_root)
    assert [r["id"] for r in rows] == ["0000", "0001", "0002", "0003"]
    assert sorted(r["split"] for r in rows) == ["test", "test", "train", "train"]
    assert sum(r["static"] for r in rows) == 2
    for row in rows:
        folder = sequence_dir(synth_root, row["id"])
        stream = read_events(folder / "events.evt1")
        assert (stream.width, stream.height) == (pytest.sensor, pytest.sensor)
        assert len(stream) == row["events"]
        assert len(read_poses(folder / "poses.jsonl")) == row["frames"] == 100_000 // pytest.interval


def test_dataset_regenerates_bytes(synth_root, tmp_path):
    """Same arguments, any thread count, identical files."""
    again = tmp_path / "again"
    make_dataset(again, 4, duration=100_000, seed=7, width=pytest.sensor, height=pytest.sensor, threads=1)
    files = sorted(p.relative_to(synth_root) for p in synth_root.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(again) for p in again.rglob("*") if p.is_file())
    for name in files:
        assert (synth_root / name).read_bytes() == (again / name).read_bytes()


def test_dataset_refuses_to_overwrite(tmp_path):
    """A non-empty target needs overwrite; with it the old sequences go."""
    out = tmp_path / "data"
    make_dataset(out, 2, duration=20_000, seed=1, width=96, height=96, threads=1)
    before = (out / "manifest.jsonl").read_bytes()
    with pytest.raises(FileExistsError):
        make_dataset(out, 1, duration=20_000, seed=2, width=96, height=96, threads=1)
    assert (out / "manifest.jsonl").read_bytes() == before
    make_dataset(out, 1, duration=20_000, seed=2, width=96, height=96, threads=1, overwrite=True)
    assert len(read_manifest(out)) == 1
    assert not (out / "seq_0001").exists()


@pytest.mark.parametrize(
    "kwargs",
    [{"n_sequences": 0}, {"static_episode_fraction": 1.5}, {"speed_mix": {"warp": 1.0}}, {"speed_mix": {"slow": 0}}],
)
def test_dataset_arguments(tmp_path, kwargs):
    """Bad generator arguments are rejected before anything is written."""
    args = {"n_sequences": 1, "duration": 10_000}
    args.update(kwargs)
    with pytest.raises(InvalidArgument):
        make_dataset(tmp_path / "x", **args)
    assert not (tmp_path / "x").exists()


@pytest.mark.parametrize(
    "changes", [{"static_fraction": 2.0}, {"sequences": 0}, {"noise_rate": -1.0}, {"frames": 10}]
)
def test_synth_config_validation(changes):
    """Out-of-range and unknown settings are config errors."""
    with pytest.raises(InvalidConfig):
        SynthConfig.from_dict(changes)


def test_event_count_tracks_frequency():
    """Twice the joint frequency moves the limb twice as far, so about twice the events."""
    elbow = JOINTS["l_elbow"]
    counts = []
    for seed, frequency in ((5, 2.0), (6, 4.0)):
        script = MotionScript({elbow: [Oscillation(40.0, frequency)]})
        counts.append(len(simulate(SPEC, script, 1_000_000, rate_per_px_speed=20.0, seed=seed).stream))
    logger.debug("events at 2 Hz and 4 Hz: %s", counts)
    assert counts[0] >= 10_000
    assert 1.8 <= counts[1] / counts[0] <= 2.2


def test_events_stay_on_bones():
    """Every event lies within the bone half-width, plus pixel rounding, of some bone at its timestamp."""
    script = MotionScript(
        {JOINTS["l_elbow"]: [Oscillation(40.0, 5.0)], JOINTS["r_knee"]: [Oscillation(30.0, 3.0, 1.0)]},
        translation=(Oscillation(4.0, 2.0), None),
    )
    events = simulate(SPEC, script, 100_000, seed=4).stream.events
    assert len(events) > 100
    joints, root = joint_positions(SPEC, script, events["t"].astype(np.float64))
    starts = np.stack([root if p == ROOT else joints[:, p] for p in SPEC.parent], axis=1)
    d = joints - starts
    pts = np.stack([events["u"], events["v"]], axis=1).astype(np.float64)[:, None, :]
    along = np.clip(((pts - starts) * d).sum(axis=2) / (d * d).sum(axis=2), 0.0, 1.0)
    distance = np.linalg.norm(pts - starts - along[..., None] * d, axis=2).min(axis=1)
    assert distance.max() <= SPEC.thickness + 0.75
