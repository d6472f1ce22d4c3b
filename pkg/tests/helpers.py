"""Brute-force oracles and random-instance builders to keep tests readable."""

import logging

import numpy as np

from evpose.events import EventStream, make_events
from evpose.pose import Pose

logger = logging.getLogger(__name__)


def random_stream(
    rng: np.random.Generator, n: int, width: int = 32, height: int = 24, span: int = 50_000
) -> EventStream:
    """n events with sorted, possibly repeated timestamps."""
    t = np.sort(rng.integers(0, span, size=n))
    return EventStream(
        width,
        height,
        make_events(rng.integers(0, width, n), rng.integers(0, height, n), t, rng.choice([-1, 1], n)),
    )


def count_oracle(packet: np.ndarray, width: int, height: int) -> np.ndarray:
    """Per-pixel, per-polarity histogram, one event at a time."""
    grid = np.zeros((2, height, width))
    for u, v, _, p in packet.tolist():
        grid[1 if p > 0 else 0, v, u] += 1
    return grid


def conv_oracle(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, padding: int) -> np.ndarray:
    """Cross-correlation by explicit loops."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding : padding + h, padding : padding + wd] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for i in range(ho):
        for j in range(wo):
            patch = xp[:, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
            out[:, :, i, j] = np.einsum("nckl,ockl->no", patch, w) + b
    return out


def random_pose(rng: np.random.Generator, k: int = 13, size: float = 64.0, p_visible: float = 1.0) -> Pose:
    """Joints uniform in [0, size)^2."""
    visible = rng.random(k) < p_visible
    return Pose(rng.uniform(0, size, (k, 2)), visible)


def bone_pose() -> Pose:
    """A hand-placed 13-joint figure around (32, 32)."""
    joints = np.array(
        [
            [32, 12],
            [40, 20],
            [24, 20],
            [42, 30],
            [22, 30],
            [43, 39],
            [21, 39],
            [37, 44],
            [27, 44],
            [38, 56],
            [26, 56],
            [38, 62],
            [26, 62],
        ],
        dtype=np.float64,
    )
    return Pose(joints, np.ones(13, dtype=bool))


def bone_events(pose: Pose, bones, fractions=np.linspace(0.0, 1.0, 9), offsets=(0.0,)) -> np.ndarray:
    """Events on evenly spaced points of each bone, nudged sideways and snapped to pixels."""
    rows = []
    for a, b in bones:
        start, end = pose.joints[a], pose.joints[b]
        d = end - start
        normal = np.array([-d[1], d[0]]) / np.linalg.norm(d)
        for f in fractions:
            for off in offsets:
                rows.append(np.floor(start + f * d + off * normal + 0.5))
    xy = np.array(rows)
    n = len(xy)
    return make_events(xy[:, 0], xy[:, 1], np.arange(n), np.where(np.arange(n) % 2, 1, -1))
