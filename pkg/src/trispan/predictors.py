"""Span predictors and span-domain conversions.

Two recurrent predictors emit per-position start/end logits on the video
grid (fused audio-visual stream and visual stream); a feed-forward
predictor emits logits over subtitle-token positions. Decoded spans move
between the two domains through the video's TimeSpanMap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, linear, relu, reshape
from .data import TimeSpanMap, quantize_time_to_grid
from .errors import ContractError
from .nnops import LstmParams, lstm_forward

VIDEO_GRID = "video_grid"
TOKEN = "token"


@dataclass
class SpanLogits:
    domain: str
    start_logits: Tensor  # [L]
    end_logits: Tensor  # [L]

    @property
    def length(self):
        return self.start_logits.shape[0]


@dataclass
class SpanPrediction:
    domain: str
    start_index: int
    end_index: int
    score: float


@dataclass
class FfnHeadParams:
    """Position-wise scorer: one hidden layer, scalar logit per position."""

    w1: Tensor  # [h, h]
    b1: Tensor  # [1, h]
    w2: Tensor  # [h, 1]
    b2: Tensor  # [1, 1]


def ffn_head(x, params: FfnHeadParams):
    hidden = relu(linear(x, params.w1, params.b1))
    out = linear(hidden, params.w2, params.b2)
    return reshape(out, (x.shape[0],))


@dataclass
class RecurrentPredictorParams:
    """Separate LSTM+FFN branches for the start and the end logits."""

    lstm_start: LstmParams
    ffn_start: FfnHeadParams
    lstm_end: LstmParams
    ffn_end: FfnHeadParams


@dataclass
class FfnPredictorParams:
    ffn_start: FfnHeadParams
    ffn_end: FfnHeadParams


def _recurrent_predict(features, params: RecurrentPredictorParams, domain):
    start = ffn_head(lstm_forward(features, params.lstm_start), params.ffn_start)
    end = ffn_head(lstm_forward(features, params.lstm_end), params.ffn_end)
    return SpanLogits(domain=domain, start_logits=start, end_logits=end)


def av_predict(f_av, params: RecurrentPredictorParams) -> SpanLogits:
    """Start/end logits of the fused audio-visual stream, on the video grid."""
    return _recurrent_predict(f_av, params, VIDEO_GRID)


def v_predict(f_v2, params: RecurrentPredictorParams) -> SpanLogits:
    """Start/end logits of the text-conditioned visual stream."""
    return _recurrent_predict(f_v2, params, VIDEO_GRID)


def t_predict(t_hat, params: FfnPredictorParams) -> SpanLogits:
    """Position-wise start/end logits over subtitle-token positions."""
    return SpanLogits(
        domain=TOKEN,
        start_logits=ffn_head(t_hat, params.ffn_start),
        end_logits=ffn_head(t_hat, params.ffn_end),
    )


def decode_span(logits: SpanLogits) -> SpanPrediction:
    """Best (start, end) with start <= end by a single forward scan.

    Tracks the best start seen so far; strict comparisons keep ties on the
    earliest start, then the earliest end.
    """
    start = np.asarray(logits.start_logits.data, dtype=np.float64)
    end = np.asarray(logits.end_logits.data, dtype=np.float64)
    best_start = 0
    best = (0, 0)
    best_score = start[0] + end[0]
    for e in range(len(start)):
        if start[e] > start[best_start]:
            best_start = e
        score = start[best_start] + end[e]
        if score > best_score:
            best_score = score
            best = (best_start, e)
    return SpanPrediction(
        domain=logits.domain,
        start_index=best[0],
        end_index=best[1],
        score=float(best_score),
    )


def convert_span(
    pred: SpanPrediction, tsm: TimeSpanMap, grid_step_s, to_domain, grid_len=None
) -> SpanPrediction:
    """Carry a span across domains through the TimeSpanMap.

    Grid indices convert to seconds as index * grid_step_s and then to the
    nearest token; token indices convert through their span edges and then
    round onto the grid. The result is re-ordered so start <= end.
    """
    if pred.domain == to_domain:
        raise ContractError(f"convert_span: span already in domain {to_domain!r}")
    if to_domain == TOKEN:
        s = tsm.time_to_token(pred.start_index * grid_step_s)
        e = tsm.time_to_token(pred.end_index * grid_step_s)
    elif to_domain == VIDEO_GRID:
        if grid_len is None:
            raise ContractError("convert_span to the video grid needs grid_len")
        s = quantize_time_to_grid(
            tsm.token_to_time(tsm.clamp_token(pred.start_index), "start"),
            grid_step_s,
            grid_len,
        )
        e = quantize_time_to_grid(
            tsm.token_to_time(tsm.clamp_token(pred.end_index), "end"),
            grid_step_s,
            grid_len,
        )
    else:
        raise ContractError(f"unknown span domain {to_domain!r}")
    if s > e:
        s, e = e, s
    return SpanPrediction(domain=to_domain, start_index=s, end_index=e, score=pred.score)


def span_to_seconds(pred: SpanPrediction, tsm: TimeSpanMap, grid_step_s):
    """Continuous-time span of a prediction, for metric scoring."""
    if pred.domain == VIDEO_GRID:
        return pred.start_index * grid_step_s, pred.end_index * grid_step_s
    s = tsm.token_to_time(tsm.clamp_token(pred.start_index), "start")
    e = tsm.token_to_time(tsm.clamp_token(pred.end_index), "end")
    return (s, e) if s <= e else (e, s)
