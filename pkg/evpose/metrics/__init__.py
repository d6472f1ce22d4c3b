"""Heatmap decoding and keypoint metrics.

Typical usage:

from evpose.metrics import decode, evaluate

pred = decode(heatmaps, stride=4)

report = evaluate([(pred, gt, "waving_slow")])

print(report.to_tsv())
"""

from evpose.metrics.keypoints import (
    AP_THRESHOLDS,
    DEFAULT_ALPHA,
    DEFAULT_KAPPA,
    DEFAULT_THRESHOLD,
    ap_at,
    ap_suite,
    decode,
    joint_errors,
    mpjpe,
    oks,
    pck,
)
from evpose.metrics.report import EvalReport, Scores, evaluate, score
