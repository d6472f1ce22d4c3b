"""Event emission from a moving figure.

Every bone is sampled at 1-pixel spacing. Over each substep a sample
point emits Poisson(rate * distance it moved) events, so anything that
holds still is silent. Each event lands at the point's interpolated
position at its own timestamp, pushed sideways by up to ``thickness``,
with positive polarity on the bone's leading edge and negative on the
trailing one. Uniform background noise can be mixed in.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from evpose.events import DEFAULT_INTERVAL, EventStream, make_events
from evpose.events.stream import empty_events
from evpose.exceptions import InvalidArgument
from evpose.pose import Pose
from evpose.synthgen.skeleton import ROOT, MotionScript, SkeletonSpec, joint_positions

logger = logging.getLogger(__name__)

SUBSTEPS = 32


@dataclass
class SynthSample:
    """A simulated recording with exact labels.

    Attributes:
      stream: events, sorted by time
      poses: one pose per frame interval, taken at interval midpoints,
        every joint visible
      action: label such as "waving_fast"
      interval: frame interval in µs
      meta: generator settings worth keeping
    """

    stream: EventStream
    poses: list[Pose]
    action: str = ""
    interval: int = DEFAULT_INTERVAL
    meta: dict = field(default_factory=dict)


def substep_grid(duration: int, interval: int, script: MotionScript) -> np.ndarray:
    """Substep boundaries in µs: interval / 32 apart, plus every episode edge.

    Episode edges split substeps so no substep straddles a change
    between moving and frozen.
    """
    step = interval / SUBSTEPS
    grid = np.arange(0.0, duration, step)
    edges = [float(x) for e in script.episodes for x in (e.t_start, e.t_end) if 0 < x < duration]
    return np.union1d(np.concatenate([grid, [float(duration)]]), edges)


def _bone_samples(spec: SkeletonSpec) -> tuple[np.ndarray, np.ndarray]:
    """(bone joint index, fraction along the bone) for every sample point."""
    bones, fractions = [], []
    for j in range(spec.K):
        n = max(1, int(math.ceil(spec.length[j])))
        bones.append(np.full(n, j))
        fractions.append((np.arange(n) + 0.5) / n)
    return np.concatenate(bones), np.concatenate(fractions)


def _segments(spec: SkeletonSpec, joints: np.ndarray, root: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(start, end) of every bone, each (n, K, 2)."""
    starts = np.empty_like(joints)
    for j in range(spec.K):
        p = spec.parent[j]
        starts[:, j] = root if p == ROOT else joints[:, p]
    return starts, joints


def simulate(  # pylint: disable=too-many-arguments,too-many-locals
    spec: SkeletonSpec,
    script: MotionScript,
    duration: int,
    rate_per_px_speed: float = 2.0,
    noise_rate: float = 0.0,
    seed: int = 0,
    width: int = 128,
    height: int = 128,
    interval: int = DEFAULT_INTERVAL,
    action: str = "",
    rng: Optional[np.random.Generator] = None,
) -> SynthSample:
    """Renders a script into events plus per-frame ground truth.

    Arguments:
      spec: the figure
      script: its motion
      duration: length in µs
      rate_per_px_speed: expected events per sample point per pixel moved
      noise_rate: background events per pixel per second
      seed: RNG seed, ignored when rng is given
      width, height: sensor size
      interval: label frame interval in µs
      action: label copied into the sample
    """
    if rate_per_px_speed < 0 or noise_rate < 0:
        raise InvalidArgument("rates must be >= 0")
    if duration < 0 or interval < 1:
        raise InvalidArgument(f"bad duration {duration} or interval {interval}")
    script.validate(spec, duration)
    rng = rng if rng is not None else np.random.default_rng(seed)

    grid = substep_grid(duration, interval, script) if duration else np.zeros(1)
    joints, root = joint_positions(spec, script, grid)
    starts, ends = _segments(spec, joints, root)
    bone, frac = _bone_samples(spec)
    # sample point positions at every grid time, (n_grid, n_points, 2)
    pts = starts[:, bone] + frac[None, :, None] * (ends[:, bone] - starts[:, bone])
    direction = ends[:, bone] - starts[:, bone]
    normal = np.stack([-direction[..., 1], direction[..., 0]], axis=-1)
    normal /= np.maximum(np.linalg.norm(normal, axis=-1, keepdims=True), 1e-12)

    chunks = []
    for k in range(len(grid) - 1):
        t0, t1 = grid[k], grid[k + 1]
        move = pts[k + 1] - pts[k]
        counts = rng.poisson(rate_per_px_speed * np.linalg.norm(move, axis=1))
        total = int(counts.sum())
        parts = []
        if total:
            idx = np.repeat(np.arange(len(counts)), counts)
            f = rng.random(total)
            offset = rng.uniform(-spec.thickness, spec.thickness, total)
            pos = pts[k, idx] + f[:, None] * move[idx] + offset[:, None] * normal[k, idx]
            leading = offset * np.einsum("ij,ij->i", normal[k, idx], move[idx]) >= 0
            parts.append((pos, t0 + f * (t1 - t0), np.where(leading, 1, -1)))
        if noise_rate:
            n_noise = rng.poisson(noise_rate * width * height * (t1 - t0) * 1e-6)
            if n_noise:
                pos = rng.random((n_noise, 2)) * (width, height)
                times = t0 + rng.random(n_noise) * (t1 - t0)
                parts.append((pos, times, rng.choice(np.array([-1, 1]), n_noise)))
        for pos, times, pol in parts:
            xy = np.floor(pos + 0.5)
            keep = (xy[:, 0] >= 0) & (xy[:, 0] < width) & (xy[:, 1] >= 0) & (xy[:, 1] < height)
            chunk = make_events(xy[keep, 0], xy[keep, 1], np.floor(times[keep]), pol[keep])
            chunks.append(chunk)
    events = np.concatenate(chunks) if chunks else empty_events()
    events = events[np.argsort(events["t"], kind="stable")]

    n_frames = duration // interval
    mid = (np.arange(n_frames) + 0.5) * interval
    labels, _ = joint_positions(spec, script, mid) if n_frames else (np.zeros((0, spec.K, 2)), None)
    poses = [Pose(j, np.ones(spec.K, dtype=bool)) for j in labels]
    logger.debug("simulated %d events, %d frames", len(events), n_frames)
    return SynthSample(
        EventStream(width, height, events),
        poses,
        action,
        interval,
        {"duration": duration, "rate_per_px_speed": rate_per_px_speed, "noise_rate": noise_rate},
    )
