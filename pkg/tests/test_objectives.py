"""
Deblurring objectives and their gradients

Gradients follow the half convention: for a real objective f the routines
return (1/2) df, so a finite difference of f is compared against twice the
directional derivative of the returned gradient.
"""

import numpy as np
import pytest

from src.modules.deblur import objectives
from src.modules.deblur.objectives import (
    alg1_gradients,
    alg1_objective,
    alg2_gradients,
    alg2_objective,
    alg3_gradients,
    alg3_objective,
    evaluate,
    image_gradient,
    kernel_gradient,
    measurement_loss,
    projection_gradient,
    projection_objective,
)
from src.modules.deblur.problem import DeblurProblem
from src.modules.generators.architectures import untrained_image_net
from src.modules.generators.network import init_weights
from src.modules.numerics.random_streams import SeededRng
from src.shared.errors import ArgumentError, DimensionError, NumericError

STEP = 1e-6


def central_difference(f, x, direction):
    return (f(x + STEP * direction) - f(x - STEP * direction)) / (2 * STEP)


@pytest.fixture
def noisy_problem(observation, image_handle, blur_handle):
    y = observation.y + 0.05 * np.random.default_rng(0).standard_normal(observation.y.shape)
    return DeblurProblem(y, blur_generator=blur_handle, image_generator=image_handle)


@pytest.fixture
def latents():
    rng = np.random.default_rng(1)
    return rng.standard_normal(4), rng.standard_normal(3)


class TestMeasurementLoss:

    def test_fourier_and_spatial_agree(self):
        rng = np.random.default_rng(2)
        y = rng.standard_normal((3, 9, 7))
        image = rng.standard_normal((3, 9, 7))
        kernel = rng.uniform(size=(5, 5))
        assert measurement_loss(y, image, kernel, "fourier") == pytest.approx(
            measurement_loss(y, image, kernel, "spatial"), rel=1e-10)

    def test_zero_for_the_true_pair(self, observation):
        assert measurement_loss(observation.y, observation.image, observation.kernel) < 1e-25

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            measurement_loss(np.zeros((1, 4, 4)), np.zeros((1, 4, 5)), np.ones((1, 1)))

    def test_unknown_domain(self):
        with pytest.raises(ArgumentError):
            measurement_loss(np.zeros((1, 4, 4)), np.zeros((1, 4, 4)), np.ones((1, 1)), domain="wavelet")


class TestAmbientGradients:
    """Half-gradients in image and tap space, both computation paths"""

    @pytest.fixture
    def data(self):
        rng = np.random.default_rng(3)
        return rng.standard_normal((3, 10, 8)), rng.uniform(size=(3, 10, 8)), rng.uniform(size=(5, 5))

    def test_paths_agree(self, data):
        y, image, kernel = data
        for gradient in (image_gradient, kernel_gradient):
            fourier = gradient(y, image, kernel, "fourier")
            spatial = gradient(y, image, kernel, "spatial")
            assert np.linalg.norm(fourier - spatial) <= 1e-8 * np.linalg.norm(spatial)

    def test_image_gradient(self, data):
        y, image, kernel = data
        direction = np.random.default_rng(4).standard_normal(image.shape)
        numeric = central_difference(lambda x: measurement_loss(y, x, kernel), image, direction)
        assert 2 * np.sum(image_gradient(y, image, kernel) * direction) == pytest.approx(numeric, rel=1e-6)

    def test_kernel_gradient(self, data):
        y, image, kernel = data
        direction = np.random.default_rng(5).standard_normal(kernel.shape)
        numeric = central_difference(lambda k: measurement_loss(y, image, k), kernel, direction)
        assert 2 * np.sum(kernel_gradient(y, image, kernel) * direction) == pytest.approx(numeric, rel=1e-6)


class TestGenerativeObjective:

    def test_latent_gradients(self, noisy_problem, latents):
        z_i, z_k = latents
        lam, gamma = 0.3, 0.2
        grad_i, grad_k = alg1_gradients(z_i, z_k, noisy_problem, lam, gamma)
        image_net, blur_net = noisy_problem.image_generator, noisy_problem.blur_generator

        def objective(zi, zk):
            return alg1_objective(noisy_problem.y, image_net.sample(zi), blur_net.sample(zk), zi, zk, lam, gamma)

        rng = np.random.default_rng(6)
        d_i, d_k = rng.standard_normal(4), rng.standard_normal(3)
        assert 2 * grad_i @ d_i == pytest.approx(central_difference(lambda z: objective(z, z_k), z_i, d_i), rel=1e-5)
        assert 2 * grad_k @ d_k == pytest.approx(central_difference(lambda z: objective(z_i, z), z_k, d_k), rel=1e-5)

    def test_penalty_alone_at_an_exact_fit(self, problem, observation):
        grad_i, grad_k = alg1_gradients(observation.z_i, observation.z_k, problem, lam=0.5, gamma=0.25)
        assert np.allclose(grad_i, 0.25 * observation.z_i, atol=1e-10)
        assert np.allclose(grad_k, 0.5 * observation.z_k, atol=1e-10)

    def test_debug_cross_check_passes(self, noisy_problem, latents):
        plain = alg1_gradients(*latents, noisy_problem, 0.01, 0.01)
        checked = alg1_gradients(*latents, noisy_problem, 0.01, 0.01, debug=True)
        for a, b in zip(plain, checked):
            assert np.array_equal(a, b)

    def test_debug_cross_check_at_an_exact_fit(self, problem, observation):
        grad_i, grad_k = alg1_gradients(observation.z_i, observation.z_k, problem, 0.0, 0.0, debug=True)
        assert np.allclose(grad_i, 0.0, atol=1e-10)
        assert np.allclose(grad_k, 0.0, atol=1e-10)

    def test_debug_cross_check_catches_a_mismatch(self, monkeypatch, noisy_problem, latents):
        exact = objectives.image_gradient

        def skewed(y, image, kernel, path="fourier"):
            grad = exact(y, image, kernel, path)
            return grad * 1.001 if path == "spatial" else grad

        monkeypatch.setattr(objectives, "image_gradient", skewed)
        with pytest.raises(NumericError, match="image gradients differ"):
            alg1_gradients(*latents, noisy_problem, 0.01, 0.01, debug=True, iteration=7)


class TestHybridObjective:

    def test_gradients(self, noisy_problem, latents):
        z_i, z_k = latents
        image = np.random.default_rng(7).uniform(size=noisy_problem.y.shape)
        tau, zeta, rho = 2.0, 0.5, 0.01
        grad_i, grad_k, grad_image = alg2_gradients(noisy_problem, z_i, z_k, image, tau, zeta, rho)

        def objective(zi=z_i, zk=z_k, x=image):
            return alg2_objective(noisy_problem, zi, zk, x, tau, zeta, rho)

        rng = np.random.default_rng(8)
        d_i, d_k, d_x = rng.standard_normal(4), rng.standard_normal(3), rng.standard_normal(image.shape)
        assert 2 * grad_i @ d_i == pytest.approx(central_difference(lambda z: objective(zi=z), z_i, d_i), rel=1e-5)
        assert 2 * grad_k @ d_k == pytest.approx(central_difference(lambda z: objective(zk=z), z_k, d_k), rel=1e-5)
        assert 2 * np.sum(grad_image * d_x) == pytest.approx(
            central_difference(lambda x: objective(x=x), image, d_x), rel=1e-5)


class TestUntrainedObjective:

    @pytest.fixture
    def untrained_problem(self, noisy_problem):
        spec = untrained_image_net(noisy_problem.image_shape, 4, 2)
        return DeblurProblem(noisy_problem.y, blur_generator=noisy_problem.blur_generator,
                             untrained_image_spec=spec)

    def test_gradients(self, untrained_problem, latents):
        spec = untrained_problem.untrained_image_spec
        weights = init_weights(spec, "uniform_fan_in", SeededRng(9))
        z_i, z_k = latents
        kappa, nu = 0.2, 1e-3
        grad_i, grad_k, grad_w = alg3_gradients(untrained_problem, z_i, z_k, weights, kappa, nu)

        rng = np.random.default_rng(10)
        d_i, d_k = rng.standard_normal(4), rng.standard_normal(3)
        assert 2 * grad_i @ d_i == pytest.approx(central_difference(
            lambda z: alg3_objective(untrained_problem, z, z_k, weights, kappa, nu), z_i, d_i), rel=1e-5)
        assert 2 * grad_k @ d_k == pytest.approx(central_difference(
            lambda z: alg3_objective(untrained_problem, z_i, z, weights, kappa, nu), z_k, d_k), rel=1e-5)

        flat = weights.to_dict()
        directions = {key: rng.standard_normal(value.shape) for key, value in flat.items()}

        def moved(sign):
            store = weights.replace({key: value + sign * STEP * directions[key] for key, value in flat.items()})
            return alg3_objective(untrained_problem, z_i, z_k, store, kappa, nu)

        numeric = (moved(1) - moved(-1)) / (2 * STEP)
        analytic = sum(float(np.sum(grad_w.to_dict()[key] * d)) for key, d in directions.items())
        assert 2 * analytic == pytest.approx(numeric, rel=1e-5)


class TestRangeProjection:

    def test_gradient(self, image_handle):
        rng = np.random.default_rng(11)
        target = rng.uniform(size=image_handle.output_shape)
        z, direction = rng.standard_normal(4), rng.standard_normal(4)
        grad = projection_gradient(image_handle, evaluate(image_handle, z), target)
        numeric = central_difference(lambda v: projection_objective(target, image_handle.sample(v)), z, direction)
        assert 2 * grad @ direction == pytest.approx(numeric, rel=1e-5)
