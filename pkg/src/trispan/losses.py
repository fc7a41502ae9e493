"""The joint training objective.

Three supervised span losses (cross entropy of start and end logits
against ground truth) plus six cross-predictor consistency losses, each
weighted by the IoU between the two predictors' currently decoded spans.
Pseudo-labels are always detached: a pair loss moves only its source
predictor.

Same-domain pairs (the two video-grid predictors learning from each
other) use soft targets, the detached softmax of the partner's logits;
pairs that cross the grid/token boundary use hard targets, the partner's
decoded span converted through the TimeSpanMap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .autograd import Tensor, add
from .data import TimeSpanMap
from .errors import ContractError
from .nnops import cross_entropy_index, soft_cross_entropy, softmax_1d
from .predictors import (
    TOKEN,
    VIDEO_GRID,
    SpanLogits,
    SpanPrediction,
    convert_span,
    decode_span,
)

AV, V, T = "AV", "V", "T"
PAIR_ORDER = ((AV, T), (AV, V), (V, T), (V, AV), (T, AV), (T, V))


@dataclass
class PairWeight:
    source: str
    target: str
    value: float  # temporal IoU of the paired spans, in [0, 1]


@dataclass
class PairTerm:
    weight: PairWeight
    loss: float


@dataclass
class LossBreakdown:
    """Per-step loss decomposition, serialized to the training log."""

    l1_av: float | None
    l1_v: float
    l1_t: float
    pairs: list[PairTerm] = field(default_factory=list)
    total: float = 0.0

    def to_json_dict(self):
        return {
            "l1_av": self.l1_av,
            "l1_v": self.l1_v,
            "l1_t": self.l1_t,
            "pairs": {
                f"{p.weight.source}-{p.weight.target}": {
                    "lambda": p.weight.value,
                    "loss": p.loss,
                }
                for p in self.pairs
            },
            "total": self.total,
        }


def span_ce(logits: SpanLogits, start_index, end_index) -> Tensor:
    """CE(start logits, start) + CE(end logits, end)."""
    return add(
        cross_entropy_index(logits.start_logits, start_index),
        cross_entropy_index(logits.end_logits, end_index),
    )


def l1_losses(av, v, t, gt_grid, gt_token):
    """Supervised losses of the three predictors; `av` may be None."""
    l_av = span_ce(av, *gt_grid) if av is not None else None
    l_v = span_ce(v, *gt_grid)
    l_t = span_ce(t, *gt_token)
    return l_av, l_v, l_t


def pair_loss(source: SpanLogits, target) -> Tensor:
    """Consistency loss of one predictor against a detached pseudo-label.

    A SpanLogits target (same domain) contributes its softmax as a soft
    target; a SpanPrediction target (already converted into the source's
    domain) contributes hard indices.
    """
    if isinstance(target, SpanLogits):
        if target.domain != source.domain or target.length != source.length:
            raise ContractError(
                f"soft pair loss needs matching domains, got {source.domain}/{target.domain}"
            )
        start_t = softmax_1d(target.start_logits.data)
        end_t = softmax_1d(target.end_logits.data)
        return add(
            soft_cross_entropy(source.start_logits, start_t.astype(source.start_logits.dtype)),
            soft_cross_entropy(source.end_logits, end_t.astype(source.end_logits.dtype)),
        )
    if isinstance(target, SpanPrediction):
        if target.domain != source.domain:
            raise ContractError(
                f"hard pair loss needs the target converted into {source.domain!r}, "
                f"got {target.domain!r}"
            )
        return span_ce(source, target.start_index, target.end_index)
    raise ContractError(f"unsupported pseudo-label type {type(target).__name__}")


def index_span_iou(a, b):
    """IoU of two inclusive index spans ((s, e) covers e - s + 1 positions)."""
    inter = min(a[1], b[1]) - max(a[0], b[0]) + 1
    if inter <= 0:
        return 0.0
    union = (a[1] - a[0] + 1) + (b[1] - b[0] + 1) - inter
    return inter / union


def dynamic_weight(source_span: SpanPrediction, target_converted: SpanPrediction, source, target):
    """Pair weight: IoU of the two decoded spans, taken in the source domain."""
    if source_span.domain != target_converted.domain:
        raise ContractError("dynamic_weight needs both spans in the source domain")
    value = index_span_iou(
        (source_span.start_index, source_span.end_index),
        (target_converted.start_index, target_converted.end_index),
    )
    return PairWeight(source=source, target=target, value=value)


def total_loss(
    av: SpanLogits | None,
    v: SpanLogits,
    t: SpanLogits,
    gt_grid,
    gt_token,
    tsm: TimeSpanMap,
    grid_step_s,
    use_dtl=True,
):
    """Aggregate objective; returns (scalar tensor, breakdown for logging).

    The pair weights are recomputed from the current decoded spans every
    call and enter the objective as constants; a zero weight drops its
    pair entirely, so disjoint spans contribute exactly zero gradient.
    """
    l_av, l_v, l_t = l1_losses(av, v, t, gt_grid, gt_token)
    total = add(l_v, l_t)
    if l_av is not None:
        total = add(total, l_av)
    breakdown = LossBreakdown(
        l1_av=None if l_av is None else l_av.item(),
        l1_v=l_v.item(),
        l1_t=l_t.item(),
    )
    if not use_dtl:
        breakdown.total = total.item()
        return total, breakdown

    grid_len = v.length
    logits = {V: v, T: t}
    if av is not None:
        logits[AV] = av
    spans = {name: decode_span(lg) for name, lg in logits.items()}

    def to_domain_of(source, target_span):
        if logits[source].domain == target_span.domain:
            return target_span
        return convert_span(
            target_span, tsm, grid_step_s, logits[source].domain, grid_len=grid_len
        )

    for source, target in PAIR_ORDER:
        if source not in logits or target not in logits:
            continue
        target_conv = to_domain_of(source, spans[target])
        weight = dynamic_weight(spans[source], target_conv, source, target)
        if logits[source].domain == logits[target].domain:
            term = pair_loss(logits[source], logits[target])
        else:
            term = pair_loss(logits[source], target_conv)
        breakdown.pairs.append(PairTerm(weight=weight, loss=term.item()))
        if weight.value > 0.0:
            total = add(total, term * weight.value)
    breakdown.total = total.item()
    return total, breakdown
