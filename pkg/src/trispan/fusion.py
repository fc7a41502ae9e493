"""Multimodal fusion: text-conditioned modality interactors and the
tri-modal attention block producing the fused visual/audio stream and the
audio-visual-enhanced text.

All functions are pure given their parameter structs; gradients flow
through the autograd ops they compose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .autograd import (
    Tensor,
    add,
    concat,
    linear,
    matmul,
    mul,
    relu,
    softmax,
    transpose,
)
from .errors import ShapeError
from .nnops import MhaParams, conv1d, max_pool_seq, multi_head_attention


@dataclass
class ProjectionParams:
    """Per-modality linear maps onto the shared hidden dim."""

    visual_w: Tensor
    visual_b: Tensor
    audio_w: Tensor | None
    audio_b: Tensor | None
    textual_w: Tensor
    textual_b: Tensor


def project_inputs(visual, audio, textual, params: ProjectionParams):
    """Project raw feature sequences to the common dim; audio may be absent."""
    v = linear(visual, params.visual_w, params.visual_b)
    t = linear(textual, params.textual_w, params.textual_b)
    a = None
    if audio is not None:
        if params.audio_w is None:
            raise ShapeError("audio features supplied but no audio projection exists")
        a = linear(audio, params.audio_w, params.audio_b)
    return v, a, t


@dataclass
class CqaParams:
    """Weights of one textual/modality interactor.

    The trilinear similarity weight is stored as its three length-d
    blocks (context term, query term, elementwise cross term). The
    feed-forward net maps the 4d concatenation back to d through one
    hidden layer; the attention weights and the width-1 conv kernel serve
    the concatenation stage.
    """

    sim_ctx: Tensor  # [d, 1]
    sim_qry: Tensor  # [d, 1]
    sim_cross: Tensor  # [1, d]
    ffn_w1: Tensor  # [4d, 2d]
    ffn_b1: Tensor  # [1, 2d]
    ffn_w2: Tensor  # [2d, d]
    ffn_b2: Tensor  # [1, d]
    attn_wq: Tensor  # [d, d]
    attn_wk: Tensor  # [d, d]
    attn_wv: Tensor  # [d, d]
    conv_kernel: Tensor  # [1, 2d, d]


def trilinear_similarity(context, query, params: CqaParams):
    """S[i, j] = w_c . c_i + w_q . q_j + w_x . (c_i * q_j), shape [L_m, T_n]."""
    s_ctx = matmul(context, params.sim_ctx)  # [L_m, 1]
    s_qry = transpose(matmul(query, params.sim_qry))  # [1, T_n]
    s_cross = matmul(mul(context, params.sim_cross), transpose(query))
    return add(add(s_ctx, s_qry), s_cross)


def cqa_forward(context, query, params: CqaParams):
    """Bidirectional context/query attention over one modality stream.

    Row-softmax attends context to query, column-softmax routes query mass
    back to context; the 4d concatenation [c; c2q; c*c2q; c*q2c] passes
    through the FFN back to width d.
    """
    sim = trilinear_similarity(context, query, params)
    s_row = softmax(sim, axis="row")
    s_col = softmax(sim, axis="col")
    c2q = matmul(s_row, query)
    q2c = matmul(matmul(s_col, transpose(s_row)), context)
    cat = concat([context, c2q, mul(context, c2q), mul(context, q2c)], axis=1)
    hidden = relu(linear(cat, params.ffn_w1, params.ffn_b1))
    return linear(hidden, params.ffn_w2, params.ffn_b2)


def context_query_concat(f_prime, textual, params: CqaParams):
    """Deepen the interaction: attend text onto the modality grid.

    Single-head scaled dot-product attention (queries = f_prime) yields a
    value-projected attention output plus the raw attended text context at
    every modality position; both halves concatenate feature-wise and a
    width-1 conv projects 2d -> d, keeping the result on the modality grid.
    """
    d = f_prime.shape[1]
    qp = matmul(f_prime, params.attn_wq)
    kp = matmul(textual, params.attn_wk)
    att = softmax(matmul(qp, transpose(kp)) * (1.0 / math.sqrt(d)), axis="row")
    attn_out = matmul(att, matmul(textual, params.attn_wv))
    text_context = matmul(att, textual)
    return conv1d(concat([attn_out, text_context], axis=1), params.conv_kernel)


@dataclass
class TriModalParams:
    """Four attention layers of the tri-modal interaction block."""

    heads: int
    text_over_visual: MhaParams
    text_over_audio: MhaParams | None
    visual_over_text: MhaParams
    audio_over_text: MhaParams | None


@dataclass
class FusedFeatures:
    f_av: Tensor  # fused audio-visual stream, [V_n, d]
    f_v: Tensor  # text-conditioned visual stream, [V_n, d]
    t_hat: Tensor  # audio-visual-enhanced text, [T_n, d]


def tri_modal_fuse(f_v2, f_a2, textual, params: TriModalParams) -> FusedFeatures:
    """Cross-attend text and modality streams, then broadcast a pooled
    summary of the fused stream onto every text token.

    With no audio stream (`f_a2` is None) the fused stream degenerates to
    the enriched visual stream.
    """
    h = params.heads
    ft1 = multi_head_attention(textual, f_v2, f_v2, h, params.text_over_visual)
    t_prime = add(ft1, textual)
    if f_a2 is not None:
        ft2 = multi_head_attention(textual, f_a2, f_a2, h, params.text_over_audio)
        t_prime = add(t_prime, ft2)
    f_v3 = add(multi_head_attention(f_v2, t_prime, t_prime, h, params.visual_over_text), f_v2)
    if f_a2 is not None:
        f_a3 = add(multi_head_attention(f_a2, t_prime, t_prime, h, params.audio_over_text), f_a2)
        f_av = add(f_v3, f_a3)
    else:
        f_av = f_v3
    pooled = max_pool_seq(f_av)
    t_hat = add(textual, pooled)
    return FusedFeatures(f_av=f_av, f_v=f_v2, t_hat=t_hat)
