"""Event-level augmentation: limb rotation about a joint and global rotation.

Both operate on per-frame event packets plus per-frame poses, before
frames are accumulated, and drop events that leave the frame.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from evpose.exceptions import InvalidArgument
from evpose.pose import BONES, JOINTS, LIMB_PIVOTS, Pose

logger = logging.getLogger(__name__)

# half-width of the strip around a bone whose events move with it
LIMB_BAND = 2.5


@dataclass
class Sample:
    """Per-frame event packets and poses on a width x height sensor."""

    packets: list[np.ndarray]
    poses: list[Pose]
    width: int
    height: int

    def __post_init__(self):
        if len(self.packets) != len(self.poses):
            raise InvalidArgument(f"{len(self.packets)} packets but {len(self.poses)} poses")

    @property
    def center(self) -> tuple[float, float]:
        """Rotation centre of the whole frame, (W - 1) / 2, (H - 1) / 2."""
        return (self.width - 1) / 2, (self.height - 1) / 2


def rotation_matrix(theta: float) -> np.ndarray:
    """Row-vector rotation [[cos, sin], [-sin, cos]] for theta in degrees.

    (du, dv) @ R = (du cos - dv sin, du sin + dv cos), so +90 turns +x
    into +y.
    """
    rad = math.radians(theta)
    c, s = math.cos(rad), math.sin(rad)
    return np.array([[c, s], [-s, c]])


def rotate_points(points: np.ndarray, center, theta: float) -> np.ndarray:
    """Rotates (n, 2) points about center by theta degrees, in float64."""
    center = np.asarray(center, dtype=np.float64)
    return (np.asarray(points, dtype=np.float64) - center) @ rotation_matrix(theta) + center


def _rotate_packet(packet: np.ndarray, center, theta: float, width: int, height: int, mask=None) -> np.ndarray:
    """Rotates the masked events (all by default), snapping to the nearest pixel.

    Event order is kept; rotated events landing off the sensor are dropped.
    """
    if mask is None:
        mask = np.ones(len(packet), dtype=bool)
    pts = np.stack([packet["u"][mask], packet["v"][mask]], axis=1).astype(np.float64)
    rotated = np.floor(rotate_points(pts, center, theta) + 0.5).reshape(-1, 2)
    inside = (
        (rotated[:, 0] >= 0) & (rotated[:, 0] < width) & (rotated[:, 1] >= 0) & (rotated[:, 1] < height)
    )
    u = packet["u"].astype(np.int64)
    v = packet["v"].astype(np.int64)
    u[mask] = rotated[:, 0]
    v[mask] = rotated[:, 1]
    keep = np.ones(len(packet), dtype=bool)
    keep[mask] = inside
    out = packet[keep].copy()
    out["u"] = u[keep]
    out["v"] = v[keep]
    return out


def clip_visibility(pose: Pose, width: int, height: int) -> Pose:
    """Marks joints outside [0, width) x [0, height) invisible."""
    x, y = pose.joints[:, 0], pose.joints[:, 1]
    inside = (x >= 0) & (x < width) & (y >= 0) & (y < height)
    return Pose(pose.joints, pose.visible & inside)


def segment_distances(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """(n, b) Euclidean distance from each point to each segment."""
    d = ends - starts  # b, 2
    length2 = np.maximum((d * d).sum(axis=1), 1e-12)
    rel = points[:, None, :] - starts[None, :, :]  # n, b, 2
    t = np.clip((rel * d[None]).sum(axis=2) / length2, 0.0, 1.0)
    nearest = starts[None] + t[:, :, None] * d[None]
    return np.linalg.norm(points[:, None, :] - nearest, axis=2)


def limb_event_mask(packet: np.ndarray, pose: Pose, bone: int, band: float = LIMB_BAND) -> np.ndarray:
    """Events that ride on BONES[bone] when it turns about its first joint.

    An event belongs to the bone when it lies strictly within ``band``
    pixels of the segment and projects past the pivot, onto the far side
    of the line through the pivot perpendicular to the bone. Neither test
    changes when the bone and its events turn together about the pivot,
    so a turn by theta followed by one by -theta returns every member up
    to pixel rounding, provided no other limb's events sit in the turned
    strip. Either end invisible means no members.
    """
    if band <= 0:
        raise InvalidArgument(f"band must be positive, got {band}")
    a, b = BONES[bone]
    if not len(packet) or not (pose.visible[a] and pose.visible[b]):
        return np.zeros(len(packet), dtype=bool)
    start, end = pose.joints[a], pose.joints[b]
    pts = np.stack([packet["u"], packet["v"]], axis=1).astype(np.float64)
    along = (pts - start) @ (end - start)
    near = segment_distances(pts, start[None], end[None])[:, 0] < band
    return near & (along > 0)


def augment_limb_rotation(sample: Sample, pivot: str, theta: float, band: float = LIMB_BAND) -> Sample:
    """Rotates the limb below an elbow or knee by theta degrees.

    Events on the pivot's distal bone (see limb_event_mask) turn about
    the pivot joint, and so do the distal joints in the labels. A sample
    whose pivot is invisible in any frame comes back unchanged.
    """
    if pivot not in LIMB_PIVOTS:
        raise InvalidArgument(f"pivot {pivot!r} not one of {sorted(LIMB_PIVOTS)}")
    bone, distal = LIMB_PIVOTS[pivot]
    k = JOINTS[pivot]
    if not all(p.visible[k] for p in sample.poses):
        logger.warning("pivot %s invisible, skipping limb rotation", pivot)
        return sample
    packets, poses = [], []
    for packet, pose in zip(sample.packets, sample.poses):
        center = pose.joints[k]
        mask = limb_event_mask(packet, pose, bone, band)
        packets.append(_rotate_packet(packet, center, theta, sample.width, sample.height, mask))
        joints = pose.joints.copy()
        joints[list(distal)] = rotate_points(joints[list(distal)], center, theta)
        poses.append(clip_visibility(pose.moved(joints), sample.width, sample.height))
    return Sample(packets, poses, sample.width, sample.height)


def augment_global_rotation(sample: Sample, theta: float) -> Sample:
    """Rotates every event and joint about the frame centre by theta degrees."""
    center = sample.center
    packets = [_rotate_packet(p, center, theta, sample.width, sample.height) for p in sample.packets]
    poses = [
        clip_visibility(p.moved(rotate_points(p.joints, center, theta)), sample.width, sample.height)
        for p in sample.poses
    ]
    return Sample(packets, poses, sample.width, sample.height)


def random_augment(sample: Sample, rng: np.random.Generator, config) -> Sample:
    """Applies the augmentations a TrainConfig asks for, drawing from rng.

    Limb rotation (when pose_aug is on) comes first, with probability
    limb_rotation_prob, about a uniformly chosen elbow or knee.
    """
    if config.pose_aug and rng.random() < config.limb_rotation_prob:
        pivot = sorted(LIMB_PIVOTS)[rng.integers(len(LIMB_PIVOTS))]
        theta = rng.uniform(-config.limb_rotation_range, config.limb_rotation_range)
        sample = augment_limb_rotation(sample, pivot, theta)
    if config.augment and config.rotation_range > 0:
        sample = augment_global_rotation(sample, rng.uniform(-config.rotation_range, config.rotation_range))
    return sample
