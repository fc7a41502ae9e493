"""Tensor engine: op-level oracles, tape semantics, gradient checks."""

import math

import numpy as np
import pytest

import oracles
from trispan import Parameter, Tape, Tensor, backward, grad_check, no_grad, precision
from trispan.autograd import (
    add,
    concat,
    linear,
    matmul,
    mean,
    mul,
    slice_cols,
    softmax,
    tensor_sum,
    transpose,
)
from trispan.errors import ContractError, NumericsError, ShapeError, ValidationError
from trispan.nnops import (
    LstmParams,
    MhaParams,
    cross_entropy_index,
    lstm_forward,
    max_pool_seq,
    multi_head_attention,
    soft_cross_entropy,
)


def t64(arr, requires_grad=False):
    return Tensor(np.asarray(arr), requires_grad=requires_grad, dtype=np.float64)


class TestMatmul:
    def test_identity(self):
        b = Tensor(np.arange(12.0).reshape(3, 4))
        out = matmul(Tensor(np.eye(3)), b)
        np.testing.assert_array_equal(out.data, b.data)

    def test_zero(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        z = Tensor([[0.0], [0.0]])
        np.testing.assert_array_equal(matmul(a, z).data, np.zeros((2, 1)))

    def test_matches_triple_loop_oracle(self, rng):
        a = rng.normal(size=(4, 3))
        b = rng.normal(size=(3, 2))
        got = matmul(t64(a), t64(b)).data
        np.testing.assert_allclose(got, oracles.matmul_triple_loop(a, b), atol=1e-6)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


class TestSoftmax:
    def test_uniform_rows(self):
        out = softmax(Tensor(np.zeros((2, 3))), axis="row")
        np.testing.assert_allclose(out.data, np.full((2, 3), 1 / 3), atol=1e-7)

    def test_large_inputs_do_not_overflow(self):
        out = softmax(Tensor([[1000.0, 1000.0]]), axis="row")
        np.testing.assert_allclose(out.data, [[0.5, 0.5]], atol=1e-7)

    def test_rows_sum_to_one(self, rng):
        out = softmax(t64(rng.normal(size=(3, 4))), axis="row")
        np.testing.assert_allclose(out.data.sum(axis=1), np.ones(3), atol=1e-6)

    def test_cols_sum_to_one(self, rng):
        out = softmax(t64(rng.normal(size=(3, 4))), axis="col")
        np.testing.assert_allclose(out.data.sum(axis=0), np.ones(4), atol=1e-6)

    def test_shift_invariance(self, rng):
        x = rng.normal(size=(3, 4))
        a = softmax(t64(x), axis="row").data
        b = softmax(t64(x + 7.5), axis="row").data
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestCrossEntropy:
    def test_uniform_logits_give_log_n(self):
        for target in range(4):
            loss = cross_entropy_index(t64(np.zeros(4)), target)
            assert math.isclose(loss.item(), math.log(4), rel_tol=1e-9)

    def test_peaked_logits(self):
        loss = cross_entropy_index(t64([10.0, -10.0]), 0)
        expected = oracles.cross_entropy_scalar([10.0, -10.0], 0)
        assert math.isclose(loss.item(), expected, rel_tol=1e-6)
        assert loss.item() == pytest.approx(2.06e-9, rel=5e-3)

    def test_gradient_is_softmax_minus_onehot(self):
        logits = t64(np.zeros(4), requires_grad=True)
        backward(cross_entropy_index(logits, 2))
        expected = np.full(4, 0.25)
        expected[2] -= 1.0
        np.testing.assert_allclose(logits.grad, expected, atol=1e-12)

    def test_target_out_of_range(self):
        with pytest.raises(IndexError):
            cross_entropy_index(t64([0.0, 1.0]), 2)


class TestSoftCrossEntropy:
    def test_one_hot_reduces_to_hard_ce(self, rng):
        logits = rng.normal(size=5)
        one_hot = np.zeros(5)
        one_hot[3] = 1.0
        soft = soft_cross_entropy(t64(logits), one_hot)
        hard = cross_entropy_index(t64(logits), 3)
        assert math.isclose(soft.item(), hard.item(), rel_tol=1e-9)

    def test_matching_target_gives_entropy(self, rng):
        logits = rng.normal(size=6)
        dist = oracles.softmax_vec(logits)
        loss = soft_cross_entropy(t64(logits), dist)
        assert math.isclose(loss.item(), oracles.entropy(dist), rel_tol=1e-9)

    def test_uniform_two_way(self):
        loss = soft_cross_entropy(t64([0.0, 0.0]), np.array([0.5, 0.5]))
        assert math.isclose(loss.item(), math.log(2), rel_tol=1e-9)

    def test_rejects_unnormalized_target(self):
        with pytest.raises(ValidationError):
            soft_cross_entropy(t64([0.0, 0.0]), np.array([0.7, 0.7]))

    def test_rejects_grad_carrying_target(self):
        with pytest.raises(ValidationError):
            soft_cross_entropy(t64([0.0, 0.0]), t64([0.5, 0.5], requires_grad=True))


class TestMaxPool:
    def test_single_row_identity(self):
        x = Tensor([[3.0, -2.0, 5.0]])
        np.testing.assert_array_equal(max_pool_seq(x).data, [3.0, -2.0, 5.0])

    def test_columnwise_max(self):
        out = max_pool_seq(Tensor([[1.0, 5.0], [3.0, 2.0]]))
        np.testing.assert_array_equal(out.data, [3.0, 5.0])

    def test_constant_sequence(self):
        out = max_pool_seq(Tensor(np.full((4, 3), 2.5)))
        np.testing.assert_array_equal(out.data, np.full(3, 2.5))

    def test_tie_routes_grad_to_first_argmax(self):
        x = t64([[1.0, 0.0], [1.0, 2.0]], requires_grad=True)
        backward(tensor_sum(max_pool_seq(x)))
        np.testing.assert_array_equal(x.grad, [[1.0, 0.0], [0.0, 1.0]])


class TestLstm:
    def _params(self, d_in, h, rng=None, zero=False):
        if zero:
            wx = np.zeros((d_in, 4 * h))
            wh = np.zeros((h, 4 * h))
            b = np.zeros(4 * h)
        else:
            wx = rng.normal(size=(d_in, 4 * h)) * 0.5
            wh = rng.normal(size=(h, 4 * h)) * 0.5
            b = rng.normal(size=4 * h) * 0.5
        return LstmParams(wx=t64(wx), wh=t64(wh), b=t64(b)), (wx, wh, b)

    def test_zero_weights_give_zero_hidden_states(self):
        params, _ = self._params(3, 2, zero=True)
        out = lstm_forward(t64(np.zeros((4, 3))), params)
        np.testing.assert_array_equal(out.data, np.zeros((4, 2)))

    def test_length_one_equals_single_cell_step(self, rng):
        params, (wx, wh, b) = self._params(3, 2, rng)
        x = rng.normal(size=(1, 3))
        out = lstm_forward(t64(x), params)
        expected = oracles.lstm_scalar_steps(x, wx, wh, b)
        np.testing.assert_allclose(out.data, expected, atol=1e-10)

    def test_matches_scalar_cell_oracle(self, rng):
        params, (wx, wh, b) = self._params(3, 2, rng)
        x = rng.normal(size=(4, 3))
        out = lstm_forward(t64(x), params)
        expected = oracles.lstm_scalar_steps(x, wx, wh, b)
        np.testing.assert_allclose(out.data, expected, atol=1e-5)


class TestMultiHeadAttention:
    def _params(self, d, rng=None, identity=False):
        def w():
            if identity:
                return np.eye(d)
            return rng.normal(size=(d, d)) * 0.4

        def make():
            return t64(w())

        zeros = t64(np.zeros((1, d)))
        return MhaParams(
            wq=make(), bq=zeros, wk=make(), bk=zeros, wv=make(), bv=zeros,
            wo=make(), bo=zeros,
        )

    def test_single_key_output_ignores_queries(self, rng):
        d = 4
        params = self._params(d, rng)
        v = rng.normal(size=(1, d))
        out1 = multi_head_attention(t64(rng.normal(size=(3, d))), t64(v), t64(v), 2, params)
        out2 = multi_head_attention(t64(rng.normal(size=(3, d))), t64(v), t64(v), 2, params)
        np.testing.assert_allclose(out1.data, out2.data, atol=1e-12)
        np.testing.assert_allclose(out1.data[0], out1.data[1], atol=1e-12)

    def test_identical_keys_give_uniform_attention(self, rng):
        d = 4
        params = self._params(d, rng)
        k = np.tile(rng.normal(size=(1, d)), (5, 1))
        v = rng.normal(size=(5, d))
        out = multi_head_attention(t64(rng.normal(size=(2, d))), t64(k), t64(v), 2, params)
        uniform_v = np.tile(v.mean(axis=0, keepdims=True), (5, 1))
        expected = multi_head_attention(t64(k), t64(uniform_v), t64(uniform_v), 2, params)
        np.testing.assert_allclose(out.data[0], expected.data[0], atol=1e-8)

    def test_single_head_matches_explicit_oracle(self, rng):
        d = 4
        params = self._params(d, identity=True)
        q = rng.normal(size=(3, d))
        k = rng.normal(size=(5, d))
        v = rng.normal(size=(5, d))
        out = multi_head_attention(t64(q), t64(k), t64(v), 1, params)
        np.testing.assert_allclose(out.data, oracles.single_head_attention(q, k, v), atol=1e-5)

    def test_indivisible_heads_rejected(self, rng):
        from trispan.errors import ConfigError

        params = self._params(4, rng)
        x = t64(rng.normal(size=(2, 4)))
        with pytest.raises(ConfigError):
            multi_head_attention(x, x, x, 3, params)


class TestTapeSemantics:
    def test_backward_requires_scalar(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        y = add(x, x)
        with pytest.raises(ContractError):
            backward(y)

    def test_backward_requires_nonempty_tape(self):
        x = Tensor(np.ones(1), requires_grad=True)
        with Tape() as tape:
            with pytest.raises(ContractError):
                backward(x, tape)

    def test_grads_accumulate_across_backward_calls(self):
        x = t64([1.0, 2.0], requires_grad=True)
        loss = tensor_sum(mul(x, x))
        backward(loss)
        first = x.grad.copy()
        backward(loss)
        np.testing.assert_allclose(x.grad, 2 * first, atol=1e-12)

    def test_sum_of_losses_matches_sum_of_gradients(self, rng):
        data = rng.normal(size=(3, 3))
        xa = t64(data, requires_grad=True)
        backward(add(tensor_sum(mul(xa, xa)), mean(xa)))
        combined = xa.grad.copy()

        xb = t64(data, requires_grad=True)
        backward(tensor_sum(mul(xb, xb)))
        backward(mean(xb))
        np.testing.assert_allclose(combined, xb.grad, atol=1e-12)

    def test_forward_backward_bitwise_deterministic(self, rng):
        data = rng.normal(size=(4, 4))
        grads = []
        for _ in range(2):
            x = t64(data, requires_grad=True)
            with Tape() as tape:
                y = tensor_sum(softmax(matmul(x, transpose(x)), axis="row"))
                backward(y, tape)
            grads.append(x.grad.copy())
        assert np.array_equal(grads[0], grads[1])

    def test_no_grad_blocks_recording(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with Tape() as tape:
            with no_grad():
                y = add(x, x)
            assert not y.requires_grad
            assert len(tape) == 0

    def test_detach_cuts_gradient_flow(self):
        x = t64([1.0, 2.0], requires_grad=True)
        y = mul(x, x)
        z = tensor_sum(mul(y.detach(), x))
        backward(z)
        np.testing.assert_allclose(x.grad, y.data, atol=1e-12)

    def test_non_finite_forward_raises(self):
        big = Tensor(np.array([[1e30]], dtype=np.float32))
        with pytest.raises(NumericsError):
            mul(big, big)


class TestParameter:
    def test_name_charset_enforced(self):
        with pytest.raises(ContractError):
            Parameter("bad name!", Tensor(np.zeros(1)))

    def test_parameter_requires_grad(self):
        p = Parameter("enc.w", Tensor(np.zeros((2, 2))))
        assert p.tensor.requires_grad


class TestGradCheck:
    def test_matmul_sum(self, rng):
        with precision(64):
            a = t64(rng.normal(size=(3, 4)), requires_grad=True)
            b = t64(rng.normal(size=(4, 2)), requires_grad=True)
            report = grad_check(lambda: tensor_sum(matmul(a, b)), {"a": a, "b": b})
        assert report.max_rel_err < 1e-6, report.worst()

    def test_cross_entropy(self, rng):
        with precision(64):
            logits = t64(rng.normal(size=6), requires_grad=True)
            report = grad_check(lambda: cross_entropy_index(logits, 2), {"logits": logits})
        assert report.max_rel_err < 1e-6, report.worst()

    def test_rejects_float32_inputs(self):
        x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
        with pytest.raises(ContractError):
            grad_check(lambda: tensor_sum(x), {"x": x})

    @pytest.mark.parametrize("op_name", [
        "add", "mul", "softmax_row", "softmax_col", "concat", "slice",
        "relu_linear", "lstm", "conv", "mha", "maxpool", "soft_ce",
    ])
    def test_every_primitive_under_1e5(self, op_name, rng):
        from trispan.nnops import conv1d

        with precision(64):
            if op_name == "add":
                a = t64(rng.normal(size=(3, 4)), requires_grad=True)
                b = t64(rng.normal(size=(1, 4)), requires_grad=True)
                fn, inputs = lambda: tensor_sum(add(a, b)), {"a": a, "b": b}
            elif op_name == "mul":
                a = t64(rng.normal(size=(3, 4)), requires_grad=True)
                b = t64(rng.normal(size=(3, 1)), requires_grad=True)
                fn, inputs = lambda: tensor_sum(mul(a, b)), {"a": a, "b": b}
            elif op_name in ("softmax_row", "softmax_col"):
                axis = "row" if op_name.endswith("row") else "col"
                x = t64(rng.normal(size=(3, 5)), requires_grad=True)
                w = rng.normal(size=(3, 5))
                fn = lambda: tensor_sum(mul(softmax(x, axis=axis), Tensor(w, dtype=np.float64)))
                inputs = {"x": x}
            elif op_name == "concat":
                a = t64(rng.normal(size=(2, 3)), requires_grad=True)
                b = t64(rng.normal(size=(2, 2)), requires_grad=True)
                w = Tensor(rng.normal(size=(2, 5)), dtype=np.float64)
                fn, inputs = lambda: tensor_sum(mul(concat([a, b], axis=1), w)), {"a": a, "b": b}
            elif op_name == "slice":
                x = t64(rng.normal(size=(3, 6)), requires_grad=True)
                w = Tensor(rng.normal(size=(3, 2)), dtype=np.float64)
                fn, inputs = lambda: tensor_sum(mul(slice_cols(x, 2, 4), w)), {"x": x}
            elif op_name == "relu_linear":
                x = t64(rng.normal(size=(3, 4)), requires_grad=True)
                w = t64(rng.normal(size=(4, 2)), requires_grad=True)
                b = t64(rng.normal(size=(1, 2)), requires_grad=True)
                from trispan.autograd import relu

                fn = lambda: tensor_sum(relu(linear(x, w, b)))
                inputs = {"x": x, "w": w, "b": b}
            elif op_name == "lstm":
                x = t64(rng.normal(size=(4, 3)), requires_grad=True)
                params = LstmParams(
                    wx=t64(rng.normal(size=(3, 8)) * 0.5, requires_grad=True),
                    wh=t64(rng.normal(size=(2, 8)) * 0.5, requires_grad=True),
                    b=t64(rng.normal(size=8) * 0.5, requires_grad=True),
                )
                fn = lambda: tensor_sum(lstm_forward(x, params))
                inputs = {"x": x, "wx": params.wx, "wh": params.wh, "b": params.b}
            elif op_name == "conv":
                x = t64(rng.normal(size=(5, 3)), requires_grad=True)
                w = t64(rng.normal(size=(3, 3, 2)), requires_grad=True)
                fn, inputs = lambda: tensor_sum(conv1d(x, w)), {"x": x, "w": w}
            elif op_name == "mha":
                d = 4
                q = t64(rng.normal(size=(3, d)), requires_grad=True)
                kv = t64(rng.normal(size=(5, d)), requires_grad=True)
                params = MhaParams(
                    wq=t64(rng.normal(size=(d, d)) * 0.5, requires_grad=True),
                    bq=t64(np.zeros((1, d)), requires_grad=True),
                    wk=t64(rng.normal(size=(d, d)) * 0.5, requires_grad=True),
                    bk=t64(np.zeros((1, d)), requires_grad=True),
                    wv=t64(rng.normal(size=(d, d)) * 0.5, requires_grad=True),
                    bv=t64(np.zeros((1, d)), requires_grad=True),
                    wo=t64(rng.normal(size=(d, d)) * 0.5, requires_grad=True),
                    bo=t64(np.zeros((1, d)), requires_grad=True),
                )
                fn = lambda: tensor_sum(multi_head_attention(q, kv, kv, 2, params))
                inputs = {"q": q, "kv": kv, "wq": params.wq, "wo": params.wo, "wv": params.wv}
            elif op_name == "maxpool":
                x = t64(rng.normal(size=(4, 3)), requires_grad=True)
                w = Tensor(rng.normal(size=3), dtype=np.float64)
                fn, inputs = lambda: tensor_sum(mul(max_pool_seq(x), w)), {"x": x}
            elif op_name == "soft_ce":
                x = t64(rng.normal(size=5), requires_grad=True)
                dist = oracles.softmax_vec(rng.normal(size=5))
                fn, inputs = lambda: soft_cross_entropy(x, dist), {"x": x}
            report = grad_check(fn, inputs)
        assert report.max_rel_err < 1e-5, (op_name, report.worst())
