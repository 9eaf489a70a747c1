"""
Deblurring objectives and their latent-space gradients

Gradients follow the Wirtinger (d/d conj z) convention of the Fourier-domain
expressions: each is one half of the real gradient of the squared-norm
objective, so the l2 penalty gamma * ||z_i||^2 contributes exactly gamma * z_i.

The ambient gradients of the data term exist in two forms: a Fourier form
built from the residual spectrum r = sqrt(n) F G_K . F G_I - F y, and a
spatial form built from shifted copies of the image. Both end in the same
reverse-mode pass through the generators.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.modules.deblur.problem import DeblurProblem, GeneratorHandle, kernel_of
from src.modules.generators.network import ForwardTape, WeightStore, forward, vjp
from src.modules.numerics.fourier import (
    circ_conv2,
    circ_conv2_spatial,
    circ_conv2_spatial_adjoint,
    circ_conv2_spatial_kernel_grad,
    dft2,
    embed_kernel,
    extract_kernel,
    idft2,
)
from src.modules.numerics.total_variation import tv, tv_grad
from src.shared.errors import ArgumentError, DimensionError, NumericError

logger = logging.getLogger(__name__)

GRADIENT_AGREEMENT = 1e-8
# absolute per-entry floor; at an exact fit both gradients are round-off
GRADIENT_FLOOR = 1e-12


@dataclass
class GeneratorState:
    """Latent vector, generator output and the tape that produced it"""

    z: np.ndarray
    output: np.ndarray
    tape: ForwardTape


def evaluate(handle: GeneratorHandle, z: np.ndarray) -> GeneratorState:
    output, tape = handle.generate(z)
    return GeneratorState(np.asarray(z, dtype=np.float64), output, tape)


def _embedded(y: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return embed_kernel(kernel_of(kernel), y.shape[-2], y.shape[-1])


def _check(y: np.ndarray, image: np.ndarray) -> None:
    if np.shape(image) != np.shape(y):
        raise DimensionError(f"Image {np.shape(image)} does not match observation {np.shape(y)}")


def residual(y: np.ndarray, image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """e = image (*) kernel - y"""
    _check(y, image)
    return circ_conv2(image, _embedded(y, kernel)) - y


def measurement_loss(y: np.ndarray, image: np.ndarray, kernel: np.ndarray,
                     domain: str = "spatial") -> float:
    """
    ||y - image (*) kernel||^2

    Args:
        kernel: un-embedded (s, s) or (1, s, s) kernel
        domain: 'spatial' or 'fourier'; equal up to rounding by Parseval
    """
    _check(y, image)
    if domain == "spatial":
        return float(np.sum(residual(y, image, kernel) ** 2))
    if domain == "fourier":
        return float(np.sum(np.abs(residual_spectrum(y, image, kernel)) ** 2))
    raise ArgumentError(f"Unknown domain {domain}")


def residual_spectrum(y: np.ndarray, image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """r = sqrt(n) F k . F i - F y, per channel"""
    n = y.shape[-2] * y.shape[-1]
    return np.sqrt(n) * dft2(_embedded(y, kernel)) * dft2(image) - dft2(y)


def image_gradient(y: np.ndarray, image: np.ndarray, kernel: np.ndarray,
                   path: str = "fourier") -> np.ndarray:
    """Half-gradient of ||y - i (*) k||^2 with respect to the image i"""
    if path == "fourier":
        n = y.shape[-2] * y.shape[-1]
        r = residual_spectrum(y, image, kernel)
        return idft2(np.sqrt(n) * r * np.conj(dft2(_embedded(y, kernel))))
    e = circ_conv2_spatial(image, kernel_of(kernel)) - y
    return circ_conv2_spatial_adjoint(e, kernel_of(kernel))


def kernel_gradient(y: np.ndarray, image: np.ndarray, kernel: np.ndarray,
                    path: str = "fourier") -> np.ndarray:
    """Half-gradient of ||y - i (*) k||^2 with respect to the s x s taps of k"""
    size = kernel_of(kernel).shape[-1]
    if path == "fourier":
        n = y.shape[-2] * y.shape[-1]
        r = residual_spectrum(y, image, kernel)
        spectrum = r * np.sqrt(n) * np.conj(dft2(image))
        if spectrum.ndim == 3:
            spectrum = spectrum.sum(axis=0)
        return extract_kernel(idft2(spectrum), size)
    e = circ_conv2_spatial(image, kernel_of(kernel)) - y
    return circ_conv2_spatial_kernel_grad(e, image, size)


def _agree(fourier: np.ndarray, spatial: np.ndarray, what: str, iteration: Optional[int]) -> None:
    scale = max(np.linalg.norm(fourier), np.linalg.norm(spatial))
    gap = np.linalg.norm(fourier - spatial)
    if gap > GRADIENT_AGREEMENT * scale + GRADIENT_FLOOR * np.sqrt(fourier.size):
        relative = gap / max(scale, 1e-300)
        raise NumericError(f"Fourier and spatial {what} gradients differ by {relative:.3e}", iteration=iteration)


def _finite(grad: np.ndarray, what: str, iteration: Optional[int]) -> np.ndarray:
    if not np.all(np.isfinite(grad)):
        raise NumericError(f"Non-finite {what} gradient", iteration=iteration)
    return grad


def _kernel_cotangent(handle: GeneratorHandle, grad_taps: np.ndarray) -> np.ndarray:
    return grad_taps.reshape(handle.output_shape)


# gen: both unknowns inside generator ranges

def alg1_objective(y: np.ndarray, image: np.ndarray, kernel: np.ndarray,
                   z_i: np.ndarray, z_k: np.ndarray, lam: float, gamma: float,
                   domain: str = "spatial") -> float:
    return (measurement_loss(y, image, kernel, domain)
            + lam * float(np.sum(z_k ** 2)) + gamma * float(np.sum(z_i ** 2)))


def alg1_image_latent_gradient(problem: DeblurProblem, image: GeneratorState, blur: GeneratorState,
                               gamma: float, debug: bool = False,
                               iteration: Optional[int] = None) -> np.ndarray:
    """sqrt(n) G_I'* F* [r . conj(F G_K)] + gamma z_i"""
    ambient = image_gradient(problem.y, image.output, blur.output, "fourier")
    if debug:
        _agree(ambient, image_gradient(problem.y, image.output, blur.output, "spatial"), "image", iteration)
    grad_z, _ = vjp(problem.image_generator.spec, problem.image_generator.weights, image.tape, ambient)
    return _finite(grad_z + gamma * image.z, "z_i", iteration)


def alg1_blur_latent_gradient(problem: DeblurProblem, image: GeneratorState, blur: GeneratorState,
                              lam: float, debug: bool = False,
                              iteration: Optional[int] = None) -> np.ndarray:
    """G_K'* F* [r . sqrt(n) conj(F G_I)] + lambda z_k"""
    taps = kernel_gradient(problem.y, image.output, blur.output, "fourier")
    if debug:
        _agree(taps, kernel_gradient(problem.y, image.output, blur.output, "spatial"), "kernel", iteration)
    handle = problem.blur_generator
    grad_z, _ = vjp(handle.spec, handle.weights, blur.tape, _kernel_cotangent(handle, taps))
    return _finite(grad_z + lam * blur.z, "z_k", iteration)


def alg1_gradients(z_i: np.ndarray, z_k: np.ndarray, problem: DeblurProblem, lam: float, gamma: float,
                   debug: bool = False, iteration: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Both latent gradients of the gen objective at one point"""
    problem.require("image_generator", "blur_generator")
    image = evaluate(problem.image_generator, z_i)
    blur = evaluate(problem.blur_generator, z_k)
    return (alg1_image_latent_gradient(problem, image, blur, gamma, debug, iteration),
            alg1_blur_latent_gradient(problem, image, blur, lam, debug, iteration))


# hybrid: free image tethered to the range

def alg2_objective(problem: DeblurProblem, z_i: np.ndarray, z_k: np.ndarray, image: np.ndarray,
                   tau: float, zeta: float, rho: float) -> float:
    """||y - i (*) k||^2 + tau ||i - G_I||^2 + zeta ||y - G_I (*) k||^2 + rho tv(i)"""
    problem.require("image_generator", "blur_generator")
    generated = problem.image_generator.sample(z_i)
    kernel = problem.blur_generator.sample(z_k)
    return alg2_value(problem.y, image, generated, kernel, tau, zeta, rho)


def alg2_value(y, image, generated, kernel, tau, zeta, rho) -> float:
    return (measurement_loss(y, image, kernel)
            + tau * float(np.sum((image - generated) ** 2))
            + zeta * measurement_loss(y, generated, kernel)
            + rho * tv(image))


def alg2_image_latent_gradient(problem: DeblurProblem, generated: GeneratorState, blur: GeneratorState,
                               image: np.ndarray, tau: float, zeta: float) -> np.ndarray:
    cotangent = -tau * (image - generated.output) + zeta * image_gradient(problem.y, generated.output, blur.output)
    grad_z, _ = vjp(problem.image_generator.spec, problem.image_generator.weights, generated.tape, cotangent)
    return grad_z


def alg2_blur_latent_gradient(problem: DeblurProblem, generated: GeneratorState, blur: GeneratorState,
                              image: np.ndarray, zeta: float) -> np.ndarray:
    taps = (kernel_gradient(problem.y, image, blur.output)
            + zeta * kernel_gradient(problem.y, generated.output, blur.output))
    handle = problem.blur_generator
    grad_z, _ = vjp(handle.spec, handle.weights, blur.tape, _kernel_cotangent(handle, taps))
    return grad_z


def alg2_image_gradient(problem: DeblurProblem, generated: GeneratorState, blur: GeneratorState,
                        image: np.ndarray, tau: float, rho: float) -> np.ndarray:
    return (image_gradient(problem.y, image, blur.output)
            + tau * (image - generated.output) + 0.5 * rho * tv_grad(image))


def alg2_gradients(problem: DeblurProblem, z_i: np.ndarray, z_k: np.ndarray, image: np.ndarray,
                   tau: float, zeta: float, rho: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(grad z_i, grad z_k, grad i) of the hybrid objective at one point"""
    problem.require("image_generator", "blur_generator")
    generated = evaluate(problem.image_generator, z_i)
    blur = evaluate(problem.blur_generator, z_k)
    return (alg2_image_latent_gradient(problem, generated, blur, image, tau, zeta),
            alg2_blur_latent_gradient(problem, generated, blur, image, zeta),
            alg2_image_gradient(problem, generated, blur, image, tau, rho))


# untrained: image network fitted from scratch

def alg3_objective(problem: DeblurProblem, z_i: np.ndarray, z_k: np.ndarray, weights: WeightStore,
                   kappa: float, nu: float) -> float:
    """||y - G_I(z_i, W) (*) G_K(z_k)||^2 + kappa ||z_k||^2 + nu tv(G_I(z_i, W))"""
    problem.require("untrained_image_spec", "blur_generator")
    generated, _ = forward(problem.untrained_image_spec, weights, z_i)
    kernel = problem.blur_generator.sample(z_k)
    return (measurement_loss(problem.y, generated, kernel)
            + kappa * float(np.sum(z_k ** 2)) + nu * tv(generated))


def alg3_image_cotangent(problem: DeblurProblem, generated: np.ndarray, kernel: np.ndarray,
                         nu: float) -> np.ndarray:
    return image_gradient(problem.y, generated, kernel) + 0.5 * nu * tv_grad(generated)


def alg3_blur_latent_gradient(problem: DeblurProblem, generated: np.ndarray, blur: GeneratorState,
                              kappa: float) -> np.ndarray:
    taps = kernel_gradient(problem.y, generated, blur.output)
    handle = problem.blur_generator
    grad_z, _ = vjp(handle.spec, handle.weights, blur.tape, _kernel_cotangent(handle, taps))
    return grad_z + kappa * blur.z


def alg3_gradients(problem: DeblurProblem, z_i: np.ndarray, z_k: np.ndarray, weights: WeightStore,
                   kappa: float, nu: float) -> Tuple[np.ndarray, np.ndarray, WeightStore]:
    """(grad z_i, grad z_k, grad W) of the untrained-prior objective at one point"""
    problem.require("untrained_image_spec", "blur_generator")
    spec = problem.untrained_image_spec
    generated, tape = forward(spec, weights, z_i)
    blur = evaluate(problem.blur_generator, z_k)
    grad_zi, grad_w = vjp(spec, weights, tape, alg3_image_cotangent(problem, generated, blur.output, nu))
    return grad_zi, alg3_blur_latent_gradient(problem, generated, blur, kappa), grad_w


# Range back-projection

def projection_objective(target: np.ndarray, generated: np.ndarray) -> float:
    return float(np.sum((target - generated) ** 2))


def projection_gradient(handle: GeneratorHandle, state: GeneratorState, target: np.ndarray) -> np.ndarray:
    """Half-gradient of ||target - G(z)||^2"""
    grad_z, _ = vjp(handle.spec, handle.weights, state.tape, state.output - target)
    return grad_z
