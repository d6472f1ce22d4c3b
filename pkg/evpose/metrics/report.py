"""Evaluation reports with a per-action breakdown."""

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from prettytable import PrettyTable

from evpose.metrics.keypoints import DEFAULT_ALPHA, DEFAULT_KAPPA, ap_suite, mpjpe, oks, pck
from evpose.pose import Pose
from evpose.typing import PathArg

logger = logging.getLogger(__name__)

FIELDS = ("AP", "AP50", "AP75", "PCK", "MPJPE")


@dataclass
class Scores:
    """Metric values over one set of frames. Percentages except MPJPE (pixels)."""

    AP: float  # pylint: disable=invalid-name
    AP50: float  # pylint: disable=invalid-name
    AP75: float  # pylint: disable=invalid-name
    PCK: float  # pylint: disable=invalid-name
    MPJPE: float  # pylint: disable=invalid-name
    frames: int = 0

    def to_dict(self) -> dict:
        """Plain dict, rounded the way reports print."""
        out = {name: round(getattr(self, name), 4) for name in FIELDS}
        out["frames"] = self.frames
        return out


@dataclass
class EvalReport:
    """Overall scores plus the same scores per action label."""

    overall: Scores
    per_action: dict[str, Scores] = field(default_factory=dict)

    def __getattr__(self, name):
        if name in FIELDS:
            return getattr(self.overall, name)
        raise AttributeError(name)

    def to_dict(self) -> dict:
        """The report as a JSON-ready object."""
        return {
            "overall": self.overall.to_dict(),
            "per_action": {a: s.to_dict() for a, s in sorted(self.per_action.items())},
        }

    def to_json(self) -> str:
        """Indented, key-sorted JSON text."""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_tsv(self) -> str:
        """Action-wise table: action, AP, PCK, MPJPE, tab separated, overall last."""
        lines = ["action\tAP\tPCK\tMPJPE"]
        rows = sorted(self.per_action.items()) + [("all", self.overall)]
        for action, s in rows:
            lines.append(f"{action}\t{s.AP:.2f}\t{s.PCK:.2f}\t{s.MPJPE:.2f}")
        return "\n".join(lines) + "\n"

    def table(self) -> PrettyTable:
        """Console table of every field."""
        table = PrettyTable(["action"] + list(FIELDS) + ["frames"])
        for action, s in sorted(self.per_action.items()) + [("all", self.overall)]:
            table.add_row([action] + [f"{getattr(s, n):.2f}" for n in FIELDS] + [s.frames])
        table.align = "r"
        table.align["action"] = "l"
        return table

    def write(self, out: PathArg) -> tuple[Path, Path]:
        """Writes report.json and report.tsv under out."""
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        json_path, tsv_path = out / "report.json", out / "report.tsv"
        json_path.write_text(self.to_json() + "\n", encoding="utf-8")
        tsv_path.write_text(self.to_tsv(), encoding="utf-8")
        return json_path, tsv_path


def score(preds: list[Pose], gts: list[Pose], kappa=DEFAULT_KAPPA, alpha=DEFAULT_ALPHA) -> Scores:
    """All metrics over matched frames, skipping frames without visible joints."""
    pairs = [(p, g) for p, g in zip(preds, gts) if g.visible.any()]
    preds = [p for p, _ in pairs]
    gts = [g for _, g in pairs]
    ap, ap50, ap75 = ap_suite([oks(p, g, kappa) for p, g in pairs])
    return Scores(ap, ap50, ap75, pck(preds, gts, alpha), mpjpe(preds, gts), len(pairs))


def evaluate(
    frames: Iterable[tuple[Pose, Pose, str]],
    kappa=DEFAULT_KAPPA,
    alpha: float = DEFAULT_ALPHA,
    actions: bool = True,
) -> EvalReport:
    """Scores (prediction, ground truth, action) triples.

    Frames are grouped by action in first-seen order; the overall
    numbers pool every frame.
    """
    grouped: dict[str, tuple[list, list]] = defaultdict(lambda: ([], []))
    preds, gts = [], []
    for pred, gt, action in frames:
        preds.append(pred)
        gts.append(gt)
        grouped[action][0].append(pred)
        grouped[action][1].append(gt)
    report = EvalReport(score(preds, gts, kappa, alpha))
    if actions:
        report.per_action = {
            a: score(p, g, kappa, alpha)
            for a, (p, g) in grouped.items()
            if any(x.visible.any() for x in g)
        }
    logger.info("evaluated %d frames: PCK %.2f, AP %.2f", report.overall.frames, report.PCK, report.AP)
    return report
