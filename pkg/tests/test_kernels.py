"""Cross-backend agreement between the numba and numpy kernel paths."""

import numpy as np
import pytest

from trispan import kernels

BOTH = sorted(kernels.available_backends())
needs_both = pytest.mark.skipif(len(BOTH) < 2, reason="numba backend unavailable")


@pytest.fixture
def force_backend():
    saved = kernels.active_backend()
    yield kernels.set_backend
    kernels.set_backend(saved)


@needs_both
@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-5), (np.float64, 1e-11)])
def test_lstm_fwd_backends_agree(dtype, tol, rng):
    x = rng.normal(size=(6, 3)).astype(dtype)
    wx = rng.normal(size=(3, 8)).astype(dtype) * dtype(0.5)
    wh = rng.normal(size=(2, 8)).astype(dtype) * dtype(0.5)
    b = rng.normal(size=8).astype(dtype)
    results = {
        name: kernels.get_backend(name).lstm_fwd(x, wx, wh, b) for name in BOTH
    }
    for part in range(3):
        np.testing.assert_allclose(
            results[BOTH[0]][part], results[BOTH[1]][part], rtol=tol, atol=tol
        )


@needs_both
@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-4), (np.float64, 1e-10)])
def test_lstm_bwd_backends_agree(dtype, tol, rng):
    x = rng.normal(size=(5, 4)).astype(dtype)
    wx = rng.normal(size=(4, 12)).astype(dtype) * dtype(0.5)
    wh = rng.normal(size=(3, 12)).astype(dtype) * dtype(0.5)
    b = rng.normal(size=12).astype(dtype)
    grad_h = rng.normal(size=(5, 3)).astype(dtype)
    grads = {}
    for name in BOTH:
        mod = kernels.get_backend(name)
        h_seq, c_seq, gates = mod.lstm_fwd(x, wx, wh, b)
        grads[name] = mod.lstm_bwd(x, wx, wh, gates, c_seq, h_seq, grad_h)
    for part in range(4):
        np.testing.assert_allclose(
            grads[BOTH[0]][part], grads[BOTH[1]][part], rtol=tol, atol=tol
        )


@needs_both
@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-5), (np.float64, 1e-11)])
def test_conv1d_backends_agree(dtype, tol, rng):
    x = rng.normal(size=(7, 3)).astype(dtype)
    w = rng.normal(size=(3, 3, 4)).astype(dtype)
    gy = rng.normal(size=(7, 4)).astype(dtype)
    fwd = {}
    bwd = {}
    for name in BOTH:
        mod = kernels.get_backend(name)
        fwd[name] = mod.conv1d_fwd(x, w)
        bwd[name] = mod.conv1d_bwd(x, w, gy)
    np.testing.assert_allclose(fwd[BOTH[0]], fwd[BOTH[1]], rtol=tol, atol=tol)
    for part in range(2):
        np.testing.assert_allclose(
            bwd[BOTH[0]][part], bwd[BOTH[1]][part], rtol=tol, atol=tol
        )


def test_conv1d_identity_kernel(force_backend, rng):
    import oracles

    x = rng.normal(size=(5, 3))
    ident = np.zeros((1, 3, 3))
    ident[0] = np.eye(3)
    for name in BOTH:
        force_backend(name)
        np.testing.assert_allclose(kernels.conv1d_fwd(x, ident), x, atol=1e-12)
        got = kernels.conv1d_fwd(x, rng.normal(size=(3, 3, 2)))
        assert got.shape == (5, 2)

    w = rng.normal(size=(3, 3, 2))
    expected = oracles.conv1d_sliding(x, w)
    for name in BOTH:
        force_backend(name)
        np.testing.assert_allclose(kernels.conv1d_fwd(x, w), expected, atol=1e-6)


def test_zero_kernel_gives_zero_output(rng):
    x = rng.normal(size=(4, 2))
    w = np.zeros((3, 2, 5))
    np.testing.assert_array_equal(kernels.conv1d_fwd(x, w), np.zeros((4, 5)))


def test_env_flag_selection_rejects_unknown():
    from trispan.errors import ConfigError

    with pytest.raises(ConfigError):
        kernels.set_backend("cuda")
