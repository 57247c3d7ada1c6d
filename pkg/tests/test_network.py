import numpy as np
import pytest

from dpsbcd.network import (
    LipschitzMLP,
    forward,
    init_model,
    load_model,
    loss,
    normalize_layer,
    predict,
    prox_squared_loss,
    save_model,
)
from dpsbcd.numerics import RngState, fd_gradient, power_iteration


def small_model(rng, widths=(3, 4, 2), rho=2.0):
    weights = [rng.standard_normal((widths[d + 1], widths[d])) for d in range(len(widths) - 1)]
    return LipschitzMLP(weights, [rho] * (len(widths) - 1))


class TestForward:
    def test_zero_weights_zero_activations(self):
        model = LipschitzMLP([np.zeros((4, 3)), np.zeros((2, 4))])
        acts = forward(model, np.ones((3, 5)))
        assert np.array_equal(acts[0], np.ones((3, 5)))
        assert np.array_equal(acts[1], np.zeros((4, 5)))

    def test_relu_masks_negative(self):
        model = LipschitzMLP([np.eye(2), np.ones((1, 2))])
        acts = forward(model, np.array([[1.0], [-1.0]]))
        assert np.array_equal(acts[1], np.array([[1.0], [0.0]]))

    def test_matches_manual_recomputation(self):
        rng = np.random.default_rng(10)
        widths = (5, 7, 6, 3)
        model = small_model(rng, widths)
        x0 = rng.standard_normal((5, 11))
        acts = forward(model, x0)
        x = x0
        for d in range(model.depth):
            x = np.maximum(model.weights[d] @ x, 0.0)
            assert np.array_equal(acts[d + 1], x)

    def test_dimension_mismatch_rejected(self):
        model = small_model(np.random.default_rng(0))
        with pytest.raises(ValueError, match="width"):
            forward(model, np.ones((4, 2)))

    def test_layer_nonexpansive_after_normalization(self):
        rng = np.random.default_rng(4)
        w = normalize_layer(rng.standard_normal((6, 5)) * 3, rho=1.0)
        for _ in range(50):
            x, y = rng.standard_normal((5, 1)), rng.standard_normal((5, 1))
            dx = np.linalg.norm(np.maximum(w @ x, 0) - np.maximum(w @ y, 0))
            assert dx <= 1.0 * np.linalg.norm(x - y) * (1 + 1e-6)


class TestNormalizeLayer:
    def test_under_cap_unchanged(self):
        w = 0.5 * np.eye(3)
        assert normalize_layer(w, rho=1.0) is w

    def test_uniform_rescale(self):
        out = normalize_layer(2.0 * np.eye(3), rho=1.0)
        assert np.allclose(out, np.eye(3), atol=1e-9)

    def test_svd_confirms_cap(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            w = rng.standard_normal((8, 6)) * 2.0
            out = normalize_layer(w, rho=0.99, max_iters=5000, tol=1e-14)
            assert np.linalg.svd(out, compute_uv=False)[0] <= 0.99 * (1 + 1e-6)

    def test_power_iteration_cap_invariant(self):
        rng = np.random.default_rng(22)
        w = rng.standard_normal((10, 10)) * 5.0
        out = normalize_layer(w, rho=1.5)
        assert power_iteration(out) <= 1.5 * (1 + 1e-6)

    def test_idempotent(self):
        rng = np.random.default_rng(23)
        w = rng.standard_normal((7, 7)) * 4.0
        once = normalize_layer(w, rho=1.0, max_iters=5000, tol=1e-14)
        twice = normalize_layer(once, rho=1.0, max_iters=5000, tol=1e-14)
        assert np.linalg.norm(twice - once) <= 1e-6 * np.linalg.norm(once)


class TestLoss:
    def test_exact_fit_is_zero(self):
        rng = np.random.default_rng(1)
        w = rng.standard_normal((2, 3))
        x = rng.standard_normal((3, 4))
        assert loss(w, x, w @ x) == 0.0

    def test_scalar_case(self):
        assert loss(np.array([[1.0]]), np.array([[2.0]]), np.array([[0.0]])) == 2.0

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            val = loss(
                rng.standard_normal((2, 3)),
                rng.standard_normal((3, 5)),
                rng.standard_normal((2, 5)),
            )
            assert val >= 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        w = rng.standard_normal((2, 3))
        x = rng.standard_normal((3, 6))
        y = rng.standard_normal((2, 6))
        analytic = (w @ x - y) @ x.T / x.shape[1]
        numeric = fd_gradient(lambda t: loss(t, x, y), w, h=1e-6)
        assert np.linalg.norm(numeric - analytic) <= 1e-7 * max(np.linalg.norm(analytic), 1)


class TestProxSquaredLoss:
    def test_zero_weights_identity(self):
        rng = np.random.default_rng(5)
        v = rng.standard_normal((3, 4))
        y = rng.standard_normal((2, 4))
        out = prox_squared_loss(np.zeros((2, 3)), v, y, gamma=1.0)
        assert np.allclose(out, v, atol=1e-12)

    def test_large_gamma_returns_v(self):
        rng = np.random.default_rng(6)
        w = rng.standard_normal((2, 3))
        v = rng.standard_normal((3, 4))
        y = rng.standard_normal((2, 4))
        out = prox_squared_loss(w, v, y, gamma=1e12)
        assert np.allclose(out, v, atol=1e-9)

    def test_matches_gradient_descent_oracle(self):
        rng = np.random.default_rng(7)
        w = rng.standard_normal((3, 4))
        v = rng.standard_normal((4, 5))
        y = rng.standard_normal((3, 5))
        gamma = 1.0
        out = prox_squared_loss(w, v, y, gamma)

        x = v.copy()
        step = 1.0 / (np.linalg.svd(w.T @ w, compute_uv=False)[0] + gamma)
        for _ in range(100_000):
            grad = w.T @ (w @ x - y) + gamma * (x - v)
            if np.linalg.norm(grad) <= 1e-10:
                break
            x = x - step * grad
        assert np.linalg.norm(out - x) <= 1e-6

    def test_stationarity_residual(self):
        rng = np.random.default_rng(8)
        w = rng.standard_normal((4, 6))
        v = rng.standard_normal((6, 3))
        y = rng.standard_normal((4, 3))
        out = prox_squared_loss(w, v, y, gamma=1.0)
        grad = w.T @ (w @ out - y) + 1.0 * (out - v)
        assert np.linalg.norm(grad) <= 1e-8


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = init_model([4, 6, 3], rho=2.0, init_sigma2=0.04, rng=RngState(17))
        path = tmp_path / "model.bin"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.depth == model.depth
        assert loaded.caps == model.caps
        assert loaded.cap_final == model.cap_final
        for a, b in zip(loaded.weights, model.weights):
            assert np.array_equal(a, b)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOT-A-MODEL\n" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            load_model(path)

    def test_predict_shape(self):
        model = init_model([4, 6, 3], rho=2.0, init_sigma2=0.04, rng=RngState(17))
        labels = predict(model, np.random.default_rng(0).standard_normal((4, 9)))
        assert labels.shape == (9,)
        assert set(labels) <= {0, 1, 2}
