"""Gaussian heatmap targets and the masked heatmap loss."""

import logging
from typing import Sequence

import numpy as np

from evpose.exceptions import InvalidArgument
from evpose.ndgrad import Tensor, ops
from evpose.pose import Pose

logger = logging.getLogger(__name__)


def heatmap_coords(points: np.ndarray, stride: int) -> np.ndarray:
    """Input-pixel (x, y) to continuous heatmap cell coordinates.

    Cell (cx, cy) is centred on input pixel ((cx + 0.5) * stride,
    (cy + 0.5) * stride).
    """
    return np.asarray(points, dtype=np.float64) / stride - 0.5


def make_target(pose: Pose, size: int, stride: int, sigma: float = 2.0) -> np.ndarray:
    """b*: one unnormalized Gaussian per joint, (K, size, size).

    Invisible joints get an all-zero channel. Peaks reach 1.0 only when a
    joint sits exactly on a cell centre.

    Arguments:
      pose: joints in input pixels
      size: heatmap side W' = H'
      stride: input pixels per heatmap cell
      sigma: std in heatmap cells
    """
    centers = heatmap_coords(pose.joints, stride)
    grid = np.arange(size, dtype=np.float64)
    dx2 = (grid[None, :] - centers[:, :1]) ** 2  # K, W
    dy2 = (grid[None, :] - centers[:, 1:]) ** 2  # K, H
    maps = np.exp(-(dy2[:, :, None] + dx2[:, None, :]) / (2 * sigma * sigma))
    maps[~pose.visible] = 0.0
    return maps


def heatmap_loss(
    preds: Sequence[Tensor], targets: Sequence[np.ndarray], masks: Sequence[np.ndarray]
) -> Tensor:
    """Masked squared error over a clip.

    sum_t sum_k mask[t, k] * SSE(b_t(k), b*_t(k)) / (masked-in channels * W' * H')

    Arguments:
      preds: b_t, each (N, K, H', W')
      targets: b*_t, same shapes
      masks: (N, K) visibility per step
    """
    if not len(preds) == len(targets) == len(masks):
        raise InvalidArgument(
            f"loss over {len(preds)} predictions, {len(targets)} targets, {len(masks)} masks"
        )
    if not preds:
        raise InvalidArgument("loss needs at least one frame")
    terms = []
    count = 0
    for pred, target, mask in zip(preds, targets, masks):
        if pred.shape != np.shape(target):
            raise InvalidArgument(f"prediction {pred.shape} vs target {np.shape(target)}")
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != pred.shape[:2]:
            raise InvalidArgument(f"mask {mask.shape} doesn't fit {pred.shape}")
        full = np.broadcast_to(mask[:, :, None, None], pred.shape).astype(pred.dtype)
        terms.append(ops.sse(ops.mul(pred, full), np.asarray(target, dtype=pred.dtype) * full))
        count += int(mask.sum())
    h, w = preds[0].shape[2:]
    return ops.scale(ops.sum_tensors(terms), 1.0 / (max(count, 1) * h * w))
