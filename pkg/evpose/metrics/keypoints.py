"""Heatmap decoding and single-person keypoint metrics: MPJPE, OKS/AP, PCK."""

import logging
from typing import Sequence, Union

import numpy as np

from evpose.exceptions import InvalidArgument, UndefinedResult
from evpose.pose import Pose

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.1
DEFAULT_KAPPA = 0.1
DEFAULT_ALPHA = 0.1
# 0.50, 0.55, ..., 0.95 built from integers so 0.6 is exactly 0.6
AP_THRESHOLDS = np.arange(50, 100, 5) / 100


def decode(heatmaps: np.ndarray, stride: int, threshold: float = DEFAULT_THRESHOLD) -> Pose:
    """Arg-max decoding of (K, H', W') heatmaps to input-pixel joints.

    Ties go to the lowest row-major index. A joint is visible iff its
    peak exceeds threshold. No sub-pixel refinement.
    """
    heatmaps = np.asarray(heatmaps)
    if heatmaps.ndim != 3:
        raise InvalidArgument(f"decode wants (K, H, W), got {heatmaps.shape}")
    k, _, w = heatmaps.shape
    flat = heatmaps.reshape(k, -1)
    best = np.argmax(flat, axis=1)
    peaks = flat[np.arange(k), best]
    cy, cx = np.divmod(best, w)
    joints = np.stack([(cx + 0.5) * stride, (cy + 0.5) * stride], axis=1)
    return Pose(joints, peaks > threshold)


def _pairs(pred, gt) -> tuple[list[Pose], list[Pose]]:
    if isinstance(pred, Pose):
        pred, gt = [pred], [gt]
    if len(pred) != len(gt):
        raise InvalidArgument(f"{len(pred)} predictions for {len(gt)} ground-truth poses")
    for p, g in zip(pred, gt):
        if p.K != g.K:
            raise InvalidArgument(f"prediction has {p.K} joints, ground truth {g.K}")
    return list(pred), list(gt)


def joint_errors(pred: Pose, gt: Pose) -> np.ndarray:
    """Euclidean distance per joint, (K,)."""
    return np.linalg.norm(pred.joints - gt.joints, axis=1)


def mpjpe(pred: Union[Pose, Sequence[Pose]], gt: Union[Pose, Sequence[Pose]]) -> float:
    """Mean over frames of the mean error over gt-visible joints, in pixels.

    Frames without visible joints are left out.
    """
    pred, gt = _pairs(pred, gt)
    means = [joint_errors(p, g)[g.visible].mean() for p, g in zip(pred, gt) if g.visible.any()]
    if not means:
        raise UndefinedResult("no visible ground-truth joints")
    return float(np.mean(means))


def oks(pred: Pose, gt: Pose, kappa: Union[float, Sequence[float]] = DEFAULT_KAPPA) -> float:
    """Object keypoint similarity in [0, 1].

    Mean over gt-visible joints of exp(-d^2 / (2 s^2 kappa^2)), where s^2
    is the area of the tight box around the visible gt joints, at least 1.
    """
    _pairs(pred, gt)
    if not gt.visible.any():
        raise UndefinedResult("OKS needs at least one visible ground-truth joint")
    kappa = np.broadcast_to(np.asarray(kappa, dtype=np.float64), (gt.K,))
    x0, y0, x1, y1 = gt.bbox()
    area = max((x1 - x0) * (y1 - y0), 1.0)
    d2 = joint_errors(pred, gt) ** 2
    sims = np.exp(-d2 / (2 * area * kappa**2))
    return float(sims[gt.visible].mean())


def ap_at(oks_values: Sequence[float], threshold: float) -> float:
    """Percent of frames with OKS >= threshold."""
    values = np.asarray(oks_values, dtype=np.float64)
    if not values.size:
        raise UndefinedResult("AP over no frames")
    return float(100.0 * np.mean(values >= threshold))


def ap_suite(oks_values: Sequence[float]) -> tuple[float, float, float]:
    """(AP, AP50, AP75) for one prediction per frame.

    With a single instance per frame there's nothing to rank, so AP at a
    threshold is the share of frames reaching it; AP averages thresholds
    0.50 to 0.95 in steps of 0.05.
    """
    per = [ap_at(oks_values, t) for t in AP_THRESHOLDS]
    return float(np.mean(per)), per[0], per[5]


def pck(
    pred: Union[Pose, Sequence[Pose]],
    gt: Union[Pose, Sequence[Pose]],
    alpha: float = DEFAULT_ALPHA,
) -> float:
    """Percent of gt-visible joints within alpha * max(bbox width, height, 1).

    Counts are pooled over all frames; the boundary is inclusive.
    """
    pred, gt = _pairs(pred, gt)
    correct = visible = 0
    for p, g in zip(pred, gt):
        if not g.visible.any():
            continue
        x0, y0, x1, y1 = g.bbox()
        limit = alpha * max(x1 - x0, y1 - y0, 1.0)
        d = joint_errors(p, g)[g.visible]
        correct += int(np.sum(d <= limit))
        visible += len(d)
    if not visible:
        raise UndefinedResult("PCK needs at least one visible ground-truth joint")
    return 100.0 * correct / visible
