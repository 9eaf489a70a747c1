"""
Layer specs, forward passes and vector-Jacobian products

Every layer kind is checked against central finite differences of the scalar
<c, G(z)> for a random cotangent c, both in z and in all trainable weights.
"""

import numpy as np
import pytest

from src.modules.generators import layers as L
from src.modules.generators.layers import build_network
from src.modules.generators.network import (
    apply_running_stats,
    check_weights,
    final_activation,
    forward,
    init_weights,
    vjp,
)
from src.modules.numerics.random_streams import SeededRng
from src.shared.errors import ArgumentError, DimensionError, NumericError, StateError

STEP = 1e-6


def assert_vjp_matches_finite_differences(net, weights, z, seed=0):
    rng = np.random.default_rng(seed)
    out, tape = forward(net, weights, z)
    cotangent = rng.standard_normal(out.shape)
    grad_z, grads = vjp(net, weights, tape, cotangent)

    def scalar(latent, store):
        return float(np.sum(forward(net, store, latent)[0] * cotangent))

    dz = rng.standard_normal(z.shape)
    numeric = (scalar(z + STEP * dz, weights) - scalar(z - STEP * dz, weights)) / (2 * STEP)
    assert np.sum(grad_z * dz) == pytest.approx(numeric, rel=1e-5, abs=1e-8)

    trainable = weights.to_dict()
    if not trainable:
        return
    directions = {key: rng.standard_normal(value.shape) for key, value in trainable.items()}
    plus = weights.replace({key: value + STEP * directions[key] for key, value in trainable.items()})
    minus = weights.replace({key: value - STEP * directions[key] for key, value in trainable.items()})
    numeric = (scalar(z, plus) - scalar(z, minus)) / (2 * STEP)
    analytic = sum(float(np.sum(grads.to_dict()[key] * d)) for key, d in directions.items())
    assert analytic == pytest.approx(numeric, rel=1e-5, abs=1e-8)


LAYER_CASES = {
    "fully_connected": ([L.fc(4)], {"input_dim": 5}),
    "conv_strided_padded": ([L.conv(3, 3, 2, padding=1)], {"input_shape": (2, 6, 6)}),
    "conv_transpose": ([L.conv_t(2, 3, 2, padding=1)], {"input_shape": (2, 3, 3)}),
    "max_pool": ([L.max_pool(2, 2)], {"input_shape": (2, 6, 6)}),
    "max_pool_overlapping": ([L.max_pool(3, 2)], {"input_shape": (1, 7, 7)}),
    "upsample": ([L.upsample(2)], {"input_shape": (2, 3, 3)}),
    "relu": ([L.relu()], {"input_shape": (2, 3, 3)}),
    "sigmoid": ([L.sigmoid()], {"input_shape": (2, 3, 3)}),
    "reshape": ([L.fc(12), L.reshape(3, 2, 2), L.conv(1, 2, 1)], {"input_dim": 3}),
    "decoder_stack": ([L.fc(18), L.reshape(2, 3, 3), L.upsample(2), L.conv_t(2, 2, 1), L.relu(),
                       L.conv(1, 1, 1), L.sigmoid()], {"input_dim": 4}),
}


class TestLayerShapes:

    def test_network_resolves_output_shape(self):
        net = build_network([L.fc(16), L.reshape(1, 4, 4), L.conv_t(2, 3, 2, padding=1)], input_dim=3)
        assert net.output_shape == (2, 7, 7)
        assert net.layer_shapes()[0] == (3,)

    def test_max_pool_uses_floor_mode(self):
        net = build_network([L.max_pool(2, 2)], input_shape=(1, 5, 5))
        assert net.output_shape == (1, 2, 2)

    def test_bad_reshape_rejected(self):
        with pytest.raises(DimensionError):
            build_network([L.fc(10), L.reshape(3, 3)], input_dim=2)

    def test_conv_that_does_not_fit_rejected(self):
        with pytest.raises(DimensionError):
            build_network([L.conv(1, 5, 1)], input_shape=(1, 3, 3))


class TestVectorJacobianProducts:

    @pytest.mark.parametrize("case", sorted(LAYER_CASES))
    def test_layer_kind(self, case):
        layers, shape = LAYER_CASES[case]
        net = build_network(layers, **shape)
        weights = init_weights(net, "uniform_fan_in", SeededRng(1))
        z = np.random.default_rng(2).standard_normal(net.in_shape)
        assert_vjp_matches_finite_differences(net, weights, z)

    def test_batched_input(self):
        layers, shape = LAYER_CASES["decoder_stack"]
        net = build_network(layers, **shape)
        weights = init_weights(net, "uniform_fan_in", SeededRng(3))
        z = np.random.default_rng(4).standard_normal((3, 4))
        assert_vjp_matches_finite_differences(net, weights, z)

    def test_batch_norm_training_mode(self):
        net = build_network([L.conv(2, 2, 1), L.batch_norm(2), L.relu()], input_shape=(1, 4, 4))
        weights = init_weights(net, "uniform_fan_in", SeededRng(5)).with_mode(True)
        weights = weights.replace({(1, "scale"): np.array([1.5, 0.7]), (1, "shift"): np.array([0.1, -0.2])})
        z = np.random.default_rng(6).standard_normal((3, 1, 4, 4))
        assert_vjp_matches_finite_differences(net, weights, z)

    def test_batch_norm_inference_mode(self):
        net = build_network([L.fc(6), L.batch_norm(6), L.sigmoid()], input_dim=3)
        weights = init_weights(net, "uniform_fan_in", SeededRng(7))
        weights = weights.replace({(1, "running_mean"): np.full(6, 0.2), (1, "running_var"): np.full(6, 2.0)})
        z = np.random.default_rng(8).standard_normal(3)
        assert_vjp_matches_finite_differences(net, weights, z)

    def test_cotangent_shape_checked(self):
        net = build_network([L.fc(4)], input_dim=2)
        weights = init_weights(net, "uniform_fan_in", SeededRng(0))
        _, tape = forward(net, weights, np.zeros(2))
        with pytest.raises(StateError):
            vjp(net, weights, tape, np.zeros(5))


class TestTwoLayerJacobian:
    """relu(W2 relu(W1 z)): the Jacobian is W1^T and W2^T with rows masked by the active units"""

    @staticmethod
    def two_layer(w1, w2):
        net = build_network([L.fc(w1.shape[0]), L.relu(), L.fc(w2.shape[0]), L.relu()], input_dim=w1.shape[1])
        weights = init_weights(net, "uniform_fan_in", SeededRng(0))
        return net, weights.replace({(0, "weight"): w1, (2, "weight"): w2})

    def test_identity_weights(self):
        net, weights = self.two_layer(np.eye(2), np.eye(2))
        out, tape = forward(net, weights, np.array([1.0, -1.0]))
        np.testing.assert_array_equal(out, [1.0, 0.0])
        grad_z, _ = vjp(net, weights, tape, np.ones(2))
        np.testing.assert_array_equal(grad_z, [1.0, 0.0])

    def test_matches_masked_closed_form(self):
        rng = np.random.default_rng(8)
        w1, w2 = rng.standard_normal((5, 3)), rng.standard_normal((4, 5))
        z, cotangent = rng.standard_normal(3), rng.standard_normal(4)
        net, weights = self.two_layer(w1, w2)
        _, tape = forward(net, weights, z)
        grad_z, _ = vjp(net, weights, tape, cotangent)

        hidden = w1 @ z
        active_1 = (hidden > 0).astype(float)
        active_2 = (w2 @ np.maximum(hidden, 0) > 0).astype(float)
        expected = (w1 * active_1[:, None]).T @ ((w2 * active_2[:, None]).T @ cotangent)
        np.testing.assert_allclose(grad_z, expected, rtol=1e-12, atol=1e-15)

    def test_zero_cotangent(self):
        net, weights = self.two_layer(np.eye(2), np.eye(2))
        _, tape = forward(net, weights, np.array([0.5, 2.0]))
        grad_z, grads = vjp(net, weights, tape, np.zeros(2))
        assert not grad_z.any()
        assert all(not value.any() for value in grads.to_dict().values())

class TestWeights:

    def test_initialization_is_deterministic(self):
        net = build_network(LAYER_CASES["decoder_stack"][0], input_dim=4)
        first = init_weights(net, "gaussian", SeededRng(9))
        second = init_weights(net, "gaussian", SeededRng(9))
        assert first.allclose(second, rtol=0, atol=0)

    def test_uniform_bounds_follow_fans(self):
        weights = init_weights(build_network([L.fc(3)], input_dim=4), "uniform_fan_in", SeededRng(3))
        assert np.abs(weights.params[0]["weight"]).max() <= np.sqrt(6 / 7)
        assert np.array_equal(weights.params[0]["bias"], np.zeros(3))

        conv_net = build_network([L.conv(4, 3, 1)], input_shape=(2, 5, 5))
        kernel = init_weights(conv_net, "uniform_fan_in", SeededRng(3)).params[0]["weight"]
        assert np.abs(kernel).max() <= np.sqrt(6 / (2 * 9 + 4 * 9))

    def test_gaussian_std(self):
        net = build_network([L.conv(32, 5, 1)], input_shape=(16, 8, 8))
        kernel = init_weights(net, "gaussian", SeededRng(4), std=0.02).params[0]["weight"]
        assert kernel.size >= 10_000
        assert 0.015 <= kernel.std() <= 0.025
        assert abs(kernel.mean()) < 1e-3

    def test_unknown_scheme_rejected(self):
        with pytest.raises(ArgumentError):
            init_weights(build_network([L.fc(2)], input_dim=2), "orthogonal", SeededRng(0))

    def test_shape_mismatch_detected(self):
        net = build_network([L.fc(3)], input_dim=2)
        weights = init_weights(net, "uniform_fan_in", SeededRng(0))
        with pytest.raises(DimensionError):
            check_weights(net, weights.replace({(0, "weight"): np.zeros((2, 2))}))

    def test_wrong_input_shape_rejected(self):
        net = build_network([L.fc(3)], input_dim=2)
        with pytest.raises(DimensionError):
            forward(net, init_weights(net, "uniform_fan_in", SeededRng(0)), np.zeros(5))

    def test_non_finite_weights_raise_numeric_error(self):
        net = build_network([L.fc(3), L.sigmoid()], input_dim=2)
        weights = init_weights(net, "uniform_fan_in", SeededRng(0))
        weights = weights.replace({(0, "bias"): np.array([0.0, np.nan, 0.0])})
        with pytest.raises(NumericError):
            forward(net, weights, np.ones(2))

    def test_running_stats_move_toward_batch(self):
        net = build_network([L.fc(2), L.batch_norm(2)], input_dim=2)
        weights = init_weights(net, "uniform_fan_in", SeededRng(0)).with_mode(True)
        weights = weights.replace({(0, "bias"): np.array([5.0, -5.0])})
        _, tape = forward(net, weights, np.random.default_rng(0).standard_normal((8, 2)))
        updated = apply_running_stats(net, weights, tape)
        running_mean = updated.params[1]["running_mean"]
        assert running_mean[0] > 0 > running_mean[1]
        assert np.array_equal(weights.params[1]["running_mean"], np.zeros(2))

    def test_final_activation(self):
        assert final_activation(build_network(LAYER_CASES["decoder_stack"][0], input_dim=4)) == "sigmoid"
        assert final_activation(build_network([L.fc(2)], input_dim=2)) is None
