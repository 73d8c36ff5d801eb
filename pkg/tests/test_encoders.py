import numpy as np
import pytest

from banditlab.encoders import (
    AutoencoderModel,
    LinearEncoderModel,
    TrainConfig,
    compression_width,
    encode,
    fit_linear_encoder,
    reconstruct,
    train_autoencoder,
    update_autoencoder,
)
from banditlab.errors import InputError


def finite_difference_gradients(model, X, h=1e-6):
    """Central finite differences of the batch MSE for every parameter."""
    grads = []
    for name in ("W1", "b1", "W2", "b2"):
        param = getattr(model, name)
        g = np.zeros_like(param)
        it = np.nditer(param, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = param[idx]
            param[idx] = orig + h
            up = model.mse(X)
            param[idx] = orig - h
            down = model.mse(X)
            param[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


class TestTrainAutoencoder:
    def test_constant_data_is_representable(self):
        rng = np.random.default_rng(0)
        v = rng.uniform(0.2, 0.8, size=5)
        X = np.tile(v, (200, 1))
        model = train_autoencoder(X, 1, TrainConfig(epochs=40, learning_rate=1.0, seed=1))
        assert model.mse(X) < 1e-3 * float(v @ v)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(0, 1, size=(10, 5))
        model = AutoencoderModel.initialize(5, 3, rng)
        analytic = model.gradients(X)
        numeric = finite_difference_gradients(model, X)
        for a, n in zip(analytic, numeric):
            scale = np.maximum(np.abs(n), 1e-8)
            assert np.max(np.abs(a - n) / scale) < 1e-4

    def test_first_epoch_descends_on_random_data(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 1, size=(128, 6))
        model = train_autoencoder(X, 6, TrainConfig(epochs=1, learning_rate=0.2, seed=2))
        assert model.loss_history[1] < model.loss_history[0]

    def test_final_mse_not_above_initial(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(0, 1, size=(64, 4))
        model = train_autoencoder(X, 2, TrainConfig(epochs=10, learning_rate=0.5, seed=0))
        assert model.loss_history[-1] <= model.loss_history[0]

    def test_empty_data_rejected(self):
        with pytest.raises(InputError):
            train_autoencoder(np.empty((0, 3)), 2)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(0, 1, size=(50, 4))
        cfg = TrainConfig(epochs=3, learning_rate=0.5, seed=123)
        m1 = train_autoencoder(X, 2, cfg)
        m2 = train_autoencoder(X, 2, cfg)
        np.testing.assert_array_equal(m1.W1, m2.W1)
        np.testing.assert_array_equal(m1.b2, m2.b2)


class TestUpdateAutoencoder:
    def test_zero_gradient_fixed_point_leaves_parameters(self):
        D = 4
        model = AutoencoderModel(
            W1=np.zeros((2, D)), b1=np.zeros(2), W2=np.zeros((D, 2)), b2=np.zeros(D)
        )
        # sigmoid(0) = 0.5 reconstructs the all-0.5 input exactly
        X = np.full((8, D), 0.5)
        update_autoencoder(model, X, TrainConfig(epochs=3, learning_rate=1.0, seed=0))
        np.testing.assert_array_equal(model.W1, np.zeros((2, D)))
        np.testing.assert_array_equal(model.b2, np.zeros(D))

    def test_update_reduces_new_batch_mse(self):
        rng = np.random.default_rng(9)
        base = rng.uniform(0.1, 0.4, size=(100, 6))
        model = train_autoencoder(base, 3, TrainConfig(epochs=10, learning_rate=0.5, seed=1))
        shifted = rng.uniform(0.6, 0.9, size=(100, 6))
        before = model.mse(shifted)
        update_autoencoder(model, shifted, TrainConfig(epochs=10, learning_rate=0.5, seed=2))
        assert model.mse(shifted) < before

    def test_empty_batch_rejected(self):
        model = AutoencoderModel.initialize(3, 2, np.random.default_rng(0))
        with pytest.raises(InputError):
            update_autoencoder(model, np.empty((0, 3)))


class TestLinearEncoder:
    def test_line_data_reconstructs_exactly(self):
        t = np.linspace(-2, 2, 30)
        X = np.outer(t, [1.0, 2.0, -1.0]) + np.array([0.5, 0.0, 1.0])
        model = fit_linear_encoder(X, 1)
        err = np.mean([np.sum((model.reconstruct(x) - x) ** 2) for x in X])
        assert err <= 1e-10

    def test_full_rank_projection_is_lossless(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(40, 4))
        model = fit_linear_encoder(X, 4)
        for x in X[:10]:
            np.testing.assert_allclose(model.reconstruct(x), x, atol=1e-10)

    def test_reconstruction_error_equals_discarded_eigenvalues(self):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(500, 6)) @ np.diag([3.0, 2.0, 1.5, 1.0, 0.5, 0.2])
        model = fit_linear_encoder(X, 2)
        mse = np.mean([np.sum((model.reconstruct(x) - x) ** 2) for x in X])
        # oracle: dense eigendecomposition of the 1/n covariance
        cov = np.cov(X, rowvar=False, bias=True)
        eigvals = np.sort(np.linalg.eigvalsh(cov))[::-1]
        assert mse == pytest.approx(eigvals[2:].sum(), abs=1e-8)

    def test_rows_orthonormal(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(50, 5))
        model = fit_linear_encoder(X, 3)
        np.testing.assert_allclose(model.P @ model.P.T, np.eye(3), atol=1e-8)

    def test_residual_orthogonal_to_projection_rows(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(60, 5))
        model = fit_linear_encoder(X, 2)
        for x in X[:20]:
            residual = x - model.reconstruct(x)
            assert np.max(np.abs(model.P @ residual)) <= 1e-8

    def test_m_out_of_range(self):
        X = np.random.default_rng(0).normal(size=(10, 3))
        with pytest.raises(InputError):
            fit_linear_encoder(X, 4)
        with pytest.raises(InputError):
            fit_linear_encoder(X, 0)

    def test_too_few_points(self):
        with pytest.raises(InputError):
            fit_linear_encoder(np.ones((1, 3)), 1)


class TestEncode:
    def test_linear_encoder_centers(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(20, 4))
        model = fit_linear_encoder(X, 2)
        np.testing.assert_allclose(encode(model, X.mean(axis=0)), np.zeros(2), atol=1e-12)

    def test_zero_autoencoder_outputs_half(self):
        model = AutoencoderModel(
            W1=np.zeros((3, 5)), b1=np.zeros(3), W2=np.zeros((5, 3)), b2=np.zeros(5)
        )
        np.testing.assert_array_equal(encode(model, np.ones(5)), np.full(3, 0.5))

    def test_round_trip_consistent_with_training_loss(self):
        rng = np.random.default_rng(10)
        X = rng.uniform(0, 1, size=(80, 4))
        model = train_autoencoder(X, 2, TrainConfig(epochs=15, learning_rate=0.5, seed=3))
        per_point = np.mean(
            [np.mean((reconstruct(model, x) - x) ** 2) for x in X]
        )
        assert per_point <= model.loss_history[-1] + 1e-9

    def test_dimension_mismatch(self):
        model = AutoencoderModel.initialize(4, 2, np.random.default_rng(0))
        with pytest.raises(InputError):
            encode(model, np.ones(5))

    def test_output_dim_depends_only_on_model(self):
        rng = np.random.default_rng(13)
        model = train_autoencoder(rng.uniform(0, 1, (30, 6)), 3, TrainConfig(epochs=1, seed=0))
        linear = fit_linear_encoder(rng.normal(size=(30, 6)), 2)
        for _ in range(5):
            assert encode(model, rng.uniform(0, 1, 6)).shape == (3,)
            assert encode(linear, rng.normal(size=6)).shape == (2,)


class TestCompressionWidth:
    @pytest.mark.parametrize(
        "c,D,expected",
        [(0.25, 32, 8), (1.0, 7, 7), (0.1, 4, 1), (0.01, 10, 1), (0.5, 5, 3), (0.75, 6, 5)],
    )
    def test_width_rule(self, c, D, expected):
        assert compression_width(c, D) == expected
