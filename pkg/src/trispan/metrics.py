"""Temporal localization metrics: span IoU, recall at IoU thresholds,
mean IoU, and the random-span baseline.

Scoring always happens in continuous seconds so grid-domain and
token-domain predictors are directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ValidationError

DEFAULT_THRESHOLDS = (0.3, 0.5, 0.7)


def temporal_iou(a, b):
    """IoU of two (start_s, end_s) spans; continuous length convention.

    A pair of identical degenerate spans scores 1, differing spans with a
    measure-zero union score 0.
    """
    if a[0] > a[1] or b[0] > b[1]:
        raise ContractError(f"span start exceeds end: {a}, {b}")
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    if union <= 0.0:
        return 1.0 if tuple(a) == tuple(b) else 0.0
    return inter / union


@dataclass
class SampleResult:
    question_id: str
    predicted: tuple
    ground_truth: tuple
    iou: float


@dataclass
class EvalReport:
    r_at_1: dict
    miou: float
    n_samples: int
    per_sample: list[SampleResult] = field(default_factory=list)

    def to_json_dict(self):
        return {
            "r_at_1": {f"{th:g}": frac for th, frac in self.r_at_1.items()},
            "miou": self.miou,
            "n_samples": self.n_samples,
            "per_sample": [
                {
                    "question_id": s.question_id,
                    "predicted_s": list(s.predicted),
                    "ground_truth_s": list(s.ground_truth),
                    "iou": s.iou,
                }
                for s in self.per_sample
            ],
        }

    def to_table(self, label="model"):
        header = "".join(f"IoU={th:g}".rjust(10) for th in sorted(self.r_at_1)) + "mIoU".rjust(10)
        row = "".join(
            f"{100 * self.r_at_1[th]:.2f}".rjust(10) for th in sorted(self.r_at_1)
        ) + f"{100 * self.miou:.2f}".rjust(10)
        pad = max(len(label), 6)
        return f"{'Method'.ljust(pad)}{header}\n{label.ljust(pad)}{row}"


def evaluate(predictions, ground_truths, question_ids=None, thresholds=DEFAULT_THRESHOLDS):
    """Score one predicted second-span per QA instance.

    R@1 at threshold m is the fraction of samples whose IoU is >= m; mIoU
    is the plain mean over samples.
    """
    if len(predictions) != len(ground_truths):
        raise ValidationError(
            f"{len(predictions)} predictions for {len(ground_truths)} ground truths"
        )
    if question_ids is None:
        question_ids = [f"q{i}" for i in range(len(predictions))]
    per_sample = [
        SampleResult(qid, tuple(p), tuple(g), temporal_iou(p, g))
        for qid, p, g in zip(question_ids, predictions, ground_truths)
    ]
    ious = np.array([s.iou for s in per_sample], dtype=np.float64)
    n = len(per_sample)
    r_at_1 = {
        th: float((ious >= th).sum() / n) if n else 0.0 for th in thresholds
    }
    miou = float(ious.mean()) if n else 0.0
    return EvalReport(r_at_1=r_at_1, miou=miou, n_samples=n, per_sample=per_sample)


def random_pick_baseline(manifest, seed=0, thresholds=DEFAULT_THRESHOLDS):
    """Uniformly random spans within each video's duration."""
    rng = np.random.default_rng(seed)
    preds, gts, qids = [], [], []
    for video, qa in manifest.all_qa():
        s = rng.uniform(0.0, video.duration_s)
        e = rng.uniform(s, video.duration_s)
        preds.append((s, e))
        gts.append((qa.gt_start_s, qa.gt_end_s))
        qids.append(qa.question_id)
    return evaluate(preds, gts, qids, thresholds)
