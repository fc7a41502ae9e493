"""Full model assembly: parameter construction, the forward pipeline from
raw feature sequences to three sets of span logits, and the per-sample
loss."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autograd import Parameter, Tensor, default_dtype
from .data import (
    QAInstance,
    VideoSample,
    quantize_time_to_grid,
    resample_audio_to_video_grid,
)
from .errors import ConfigError
from .fusion import (
    CqaParams,
    ProjectionParams,
    TriModalParams,
    context_query_concat,
    cqa_forward,
    project_inputs,
    tri_modal_fuse,
)
from .losses import total_loss
from .nnops import LstmParams, MhaParams
from .predictors import (
    TOKEN,
    VIDEO_GRID,
    FfnHeadParams,
    FfnPredictorParams,
    RecurrentPredictorParams,
    SpanPrediction,
    av_predict,
    convert_span,
    t_predict,
    v_predict,
)


@dataclass
class ModelConfig:
    d: int = 1024
    heads: int = 8
    d_visual: int = 1024
    d_audio: int = 1024
    d_textual: int = 1024
    use_audio: bool = True

    def validate(self):
        if self.d < 1 or self.d % self.heads != 0:
            raise ConfigError(f"hidden dim {self.d} not divisible by {self.heads} heads")
        return self


class ParamRegistry:
    """Ordered, named parameter store with fan-in uniform initialization.

    Weight matrices draw from uniform(-1/sqrt(fan_in), +1/sqrt(fan_in));
    biases start at zero. Construction order is deterministic so a fixed
    seed reproduces the model bitwise.
    """

    def __init__(self, rng):
        self.rng = rng
        self.params: dict[str, Tensor] = {}

    def _register(self, name, array):
        if name in self.params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        tensor = Tensor(np.asarray(array, dtype=default_dtype()), requires_grad=True)
        Parameter(name, tensor)  # enforces the name charset
        self.params[name] = tensor
        return tensor

    def weight(self, name, shape, fan_in=None):
        fan = fan_in if fan_in is not None else shape[0]
        bound = 1.0 / math.sqrt(fan)
        return self._register(name, self.rng.uniform(-bound, bound, size=shape))

    def zeros(self, name, shape):
        return self._register(name, np.zeros(shape))

    def constant(self, name, shape, value):
        return self._register(name, np.full(shape, value))


def _build_mha(reg: ParamRegistry, prefix, d):
    return MhaParams(
        wq=reg.weight(f"{prefix}.wq", (d, d)),
        bq=reg.zeros(f"{prefix}.bq", (1, d)),
        wk=reg.weight(f"{prefix}.wk", (d, d)),
        bk=reg.zeros(f"{prefix}.bk", (1, d)),
        wv=reg.weight(f"{prefix}.wv", (d, d)),
        bv=reg.zeros(f"{prefix}.bv", (1, d)),
        wo=reg.weight(f"{prefix}.wo", (d, d)),
        bo=reg.zeros(f"{prefix}.bo", (1, d)),
    )


def _build_cqa(reg: ParamRegistry, prefix, d):
    return CqaParams(
        sim_ctx=reg.weight(f"{prefix}.sim_ctx", (d, 1), fan_in=d),
        sim_qry=reg.weight(f"{prefix}.sim_qry", (d, 1), fan_in=d),
        sim_cross=reg.weight(f"{prefix}.sim_cross", (1, d), fan_in=d),
        ffn_w1=reg.weight(f"{prefix}.ffn.w1", (4 * d, 2 * d)),
        ffn_b1=reg.zeros(f"{prefix}.ffn.b1", (1, 2 * d)),
        ffn_w2=reg.weight(f"{prefix}.ffn.w2", (2 * d, d)),
        ffn_b2=reg.zeros(f"{prefix}.ffn.b2", (1, d)),
        attn_wq=reg.weight(f"{prefix}.attn.wq", (d, d)),
        attn_wk=reg.weight(f"{prefix}.attn.wk", (d, d)),
        attn_wv=reg.weight(f"{prefix}.attn.wv", (d, d)),
        conv_kernel=reg.weight(f"{prefix}.conv.kernel", (1, 2 * d, d), fan_in=2 * d),
    )


def _build_lstm(reg: ParamRegistry, prefix, d_in, h):
    """LSTM weights with the forget-gate bias lifted to +1."""
    bias = np.zeros(4 * h)
    bias[h : 2 * h] = 1.0
    return LstmParams(
        wx=reg.weight(f"{prefix}.wx", (d_in, 4 * h), fan_in=d_in),
        wh=reg.weight(f"{prefix}.wh", (h, 4 * h), fan_in=h),
        b=reg._register(f"{prefix}.b", bias),
    )


def _build_ffn_head(reg: ParamRegistry, prefix, h):
    return FfnHeadParams(
        w1=reg.weight(f"{prefix}.w1", (h, h)),
        b1=reg.zeros(f"{prefix}.b1", (1, h)),
        w2=reg.weight(f"{prefix}.w2", (h, 1)),
        b2=reg.zeros(f"{prefix}.b2", (1, 1)),
    )


def _build_recurrent_predictor(reg: ParamRegistry, prefix, d):
    return RecurrentPredictorParams(
        lstm_start=_build_lstm(reg, f"{prefix}.lstm_start", d, d),
        ffn_start=_build_ffn_head(reg, f"{prefix}.ffn_start", d),
        lstm_end=_build_lstm(reg, f"{prefix}.lstm_end", d, d),
        ffn_end=_build_ffn_head(reg, f"{prefix}.ffn_end", d),
    )


class SpanModel:
    """The trainable localization network over one video/QA pair."""

    def __init__(self, config: ModelConfig, seed=0):
        self.config = config.validate()
        reg = ParamRegistry(np.random.default_rng(seed))
        d = config.d
        use_audio = config.use_audio
        self.projection = ProjectionParams(
            visual_w=reg.weight("proj.visual.w", (config.d_visual, d)),
            visual_b=reg.zeros("proj.visual.b", (1, d)),
            audio_w=reg.weight("proj.audio.w", (config.d_audio, d)) if use_audio else None,
            audio_b=reg.zeros("proj.audio.b", (1, d)) if use_audio else None,
            textual_w=reg.weight("proj.textual.w", (config.d_textual, d)),
            textual_b=reg.zeros("proj.textual.b", (1, d)),
        )
        self.cqa_visual = _build_cqa(reg, "cqa.visual", d)
        self.cqa_audio = _build_cqa(reg, "cqa.audio", d) if use_audio else None
        self.fuse = TriModalParams(
            heads=config.heads,
            text_over_visual=_build_mha(reg, "fuse.text_over_visual", d),
            text_over_audio=_build_mha(reg, "fuse.text_over_audio", d) if use_audio else None,
            visual_over_text=_build_mha(reg, "fuse.visual_over_text", d),
            audio_over_text=_build_mha(reg, "fuse.audio_over_text", d) if use_audio else None,
        )
        self.pred_av = _build_recurrent_predictor(reg, "pred.av", d) if use_audio else None
        self.pred_v = _build_recurrent_predictor(reg, "pred.v", d)
        self.pred_t = FfnPredictorParams(
            ffn_start=_build_ffn_head(reg, "pred.t.ffn_start", d),
            ffn_end=_build_ffn_head(reg, "pred.t.ffn_end", d),
        )
        self._params = reg.params

    # -- parameter access ---------------------------------------------------

    def param_dict(self) -> dict[str, Tensor]:
        return self._params

    def parameters(self) -> list[Parameter]:
        return [Parameter(name, t) for name, t in self._params.items()]

    def n_parameters(self):
        return sum(t.size for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    # -- forward ------------------------------------------------------------

    def forward_arrays(self, visual, audio, textual):
        """Span logits from raw [L, d_m] arrays; audio must already sit on
        the visual grid (or be None when the model runs without audio)."""
        v_in = Tensor(visual)
        a_in = Tensor(audio) if (audio is not None and self.config.use_audio) else None
        t_in = Tensor(textual)
        v_p, a_p, t_p = project_inputs(v_in, a_in, t_in, self.projection)
        f_v2 = context_query_concat(
            cqa_forward(v_p, t_p, self.cqa_visual), t_p, self.cqa_visual
        )
        f_a2 = None
        if a_p is not None:
            f_a2 = context_query_concat(
                cqa_forward(a_p, t_p, self.cqa_audio), t_p, self.cqa_audio
            )
        fused = tri_modal_fuse(f_v2, f_a2, t_p, self.fuse)
        av_logits = av_predict(fused.f_av, self.pred_av) if self.pred_av else None
        v_logits = v_predict(fused.f_v, self.pred_v)
        t_logits = t_predict(fused.t_hat, self.pred_t)
        return av_logits, v_logits, t_logits

    def forward_sample(self, video: VideoSample, qa: QAInstance):
        audio_grid = resample_audio_to_video_grid(video.audio, video.visual.length)
        return self.forward_arrays(
            video.visual.values, audio_grid.values, qa.textual.values
        )

    # -- training objective ---------------------------------------------------

    def ground_truth_targets(self, video: VideoSample, qa: QAInstance):
        """Grid-index and token-index supervision targets for one QA pair.

        The token targets derive from the grid targets through the span
        map, keeping all predictors consistent with one annotation.
        """
        step = video.visual.time_step_s
        grid_len = video.visual.length
        gs = quantize_time_to_grid(qa.gt_start_s, step, grid_len)
        ge = quantize_time_to_grid(qa.gt_end_s, step, grid_len)
        grid_span = SpanPrediction(VIDEO_GRID, gs, ge, score=0.0)
        token_span = convert_span(grid_span, video.tsm, step, TOKEN)
        return (gs, ge), (token_span.start_index, token_span.end_index)

    def loss_for_sample(self, video: VideoSample, qa: QAInstance, use_dtl=True):
        av_logits, v_logits, t_logits = self.forward_sample(video, qa)
        gt_grid, gt_token = self.ground_truth_targets(video, qa)
        return total_loss(
            av_logits,
            v_logits,
            t_logits,
            gt_grid,
            gt_token,
            video.tsm,
            video.visual.time_step_s,
            use_dtl=use_dtl,
        )
