"""
Deblurring solvers

Every solver is a single-restart routine driven by its own SeededRng;
with_restarts runs it for restart indices 0..R-1 on child streams of the
master seed and keeps the run with the lowest final measurement loss. Updates
inside one iteration are sequential (Gauss-Seidel) in the order z_i, z_k, then
the third variable where there is one.
"""

import logging
import math
import time
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from src.modules.deblur.objectives import (
    alg1_blur_latent_gradient,
    alg1_image_latent_gradient,
    alg2_blur_latent_gradient,
    alg2_image_gradient,
    alg2_image_latent_gradient,
    alg2_value,
    alg3_blur_latent_gradient,
    alg3_image_cotangent,
    evaluate,
    measurement_loss,
    projection_gradient,
    projection_objective,
)
from src.modules.deblur.problem import (
    Alg1Config,
    Alg2Config,
    Alg3Config,
    DeblurProblem,
    DeblurResult,
    GeneratorHandle,
    NaiveConfig,
    kernel_of,
)
from src.modules.generators.network import forward, init_weights, vjp
from src.modules.numerics.random_streams import SeededRng
from src.modules.numerics.total_variation import tv
from src.modules.scheduler.task_scheduler import TaskScheduler
from src.modules.training.adam import AdamState, adam_step
from src.shared.errors import ArgumentError, NumericError

logger = logging.getLogger(__name__)

LOG_EVERY = 1000
OBJECTIVE_AGREEMENT = 1e-9
ALG2_IMAGE_INIT = (0.5, 0.1)

Runner = Callable[[SeededRng], DeblurResult]


def _check_finite(value: float, iteration: int) -> float:
    if not math.isfinite(value):
        raise NumericError("Objective became non-finite", iteration=iteration)
    return value


def _log_progress(algorithm: str, t: int, steps: int, total: float, measurement: float) -> None:
    if (t + 1) % LOG_EVERY == 0 or t + 1 == steps:
        logger.info("%s iteration %d/%d: objective %.6e measurement %.6e",
                    algorithm, t + 1, steps, total, measurement)


class _Adam:
    """Adam on a single array"""

    def __init__(self, lr: float):
        self.lr = lr
        self.state = AdamState()

    def step(self, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return adam_step(self.state, {"x": value}, {"x": grad}, self.lr)["x"]


def with_restarts(runner: Runner, restarts: int, master_seed: int, jobs: Optional[int] = None) -> DeblurResult:
    """
    Run `runner` from R independent initializations and keep the best

    Restart r always draws from child stream r of the master seed, so the
    restarts of a smaller R are a prefix of those of a larger one. Runs that
    hit a numeric error are excluded; the winner has the smallest final
    measurement loss, ties going to the lower index.
    """
    if restarts < 1:
        raise ArgumentError(f"Need at least one restart, got {restarts}")
    master = SeededRng(master_seed)
    started = time.perf_counter()
    outcomes = TaskScheduler(jobs).map_settled(lambda r: runner(master.child(r)), range(restarts))

    losses, failed, candidates = [], [], []
    for index, outcome in enumerate(outcomes):
        if isinstance(outcome, NumericError):
            logger.warning("Restart %d failed: %s", index, outcome)
            failed.append(index)
            losses.append(float("nan"))
            continue
        if isinstance(outcome, Exception):
            raise outcome
        if not math.isfinite(outcome.measurement_loss):
            failed.append(index)
            losses.append(float("nan"))
            continue
        losses.append(outcome.measurement_loss)
        candidates.append((outcome.measurement_loss, index, outcome))

    if not candidates:
        raise NumericError(f"All {restarts} restarts failed")
    _, best_index, best = min(candidates, key=lambda item: (item[0], item[1]))
    best.restart_index = best_index
    best.restart_losses = losses
    best.failed_restarts = failed
    best.seed = master_seed
    best.seconds = time.perf_counter() - started
    logger.info("Best of %d restarts: #%d with measurement loss %.6e (%d failed)",
                restarts, best_index, best.measurement_loss, len(failed))
    return best


# Naive back-projection and range projection

def _backproject_once(handle: GeneratorHandle, target: np.ndarray, cfg: NaiveConfig, rng: SeededRng,
                      algorithm: str, z0: Optional[np.ndarray] = None) -> DeblurResult:
    z = rng.standard_normal(handle.latent_dim) if z0 is None else np.asarray(z0, dtype=np.float64)
    state = evaluate(handle, z)
    trace = []
    for t in range(cfg.steps):
        grad = projection_gradient(handle, state, target)
        if not np.all(np.isfinite(grad)):
            raise NumericError("Non-finite z_i gradient", iteration=t)
        state = evaluate(handle, state.z - cfg.lr * grad)
        loss = _check_finite(projection_objective(target, state.output), t)
        trace.append((t, loss, loss, cfg.lr))
        _log_progress(algorithm, t, cfg.steps, loss, loss)
    return DeblurResult(
        algorithm=algorithm, image=state.output, kernel=None, z_i=state.z, z_k=None,
        measurement_loss=projection_objective(target, state.output), trace=trace)


def run_naive(problem: DeblurProblem, cfg: NaiveConfig, jobs: Optional[int] = None) -> DeblurResult:
    """Closest range image to the blurry observation itself; ignores the blur entirely"""
    problem.require("image_generator")
    return with_restarts(
        lambda rng: _backproject_once(problem.image_generator, problem.y, cfg, rng, "naive"),
        cfg.restarts, cfg.seed, jobs)


def project_to_range(handle: GeneratorHandle, target: np.ndarray, cfg: NaiveConfig,
                     jobs: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(z, G(z)) minimizing ||target - G(z)||^2, best of cfg.restarts"""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != handle.output_shape:
        target = target.reshape(handle.output_shape)
    result = with_restarts(
        lambda rng: _backproject_once(handle, target, cfg, rng, "project-range"),
        cfg.restarts, cfg.seed, jobs)
    return result.z_i, result.image


# gen: both unknowns inside generator ranges

def _alg1_once(problem: DeblurProblem, cfg: Alg1Config, rng: SeededRng,
               init: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> DeblurResult:
    image_net, blur_net = problem.image_generator, problem.blur_generator
    if init is None:
        z_i = rng.standard_normal(image_net.latent_dim)
        z_k = rng.standard_normal(blur_net.latent_dim)
    else:
        z_i, z_k = (np.asarray(z, dtype=np.float64) for z in init)
    image, blur = evaluate(image_net, z_i), evaluate(blur_net, z_k)

    trace = []
    for t in range(cfg.steps):
        eta = cfg.step_size(t)
        grad = alg1_image_latent_gradient(problem, image, blur, cfg.gamma, cfg.debug, t)
        image = evaluate(image_net, image.z - eta * grad)
        grad = alg1_blur_latent_gradient(problem, image, blur, cfg.lam, cfg.debug, t)
        blur = evaluate(blur_net, blur.z - eta * grad)

        measurement = _check_finite(measurement_loss(problem.y, image.output, blur.output), t)
        if cfg.debug:
            fourier = measurement_loss(problem.y, image.output, blur.output, domain="fourier")
            if abs(fourier - measurement) > OBJECTIVE_AGREEMENT * max(measurement, 1e-300):
                raise NumericError("Spatial and Fourier objectives disagree", iteration=t)
        total = measurement + cfg.lam * float(blur.z @ blur.z) + cfg.gamma * float(image.z @ image.z)
        trace.append((t, total, measurement, eta))
        _log_progress("alg1", t, cfg.steps, total, measurement)

    return DeblurResult(
        algorithm="gen", image=image.output, kernel=kernel_of(blur.output), z_i=image.z, z_k=blur.z,
        measurement_loss=measurement_loss(problem.y, image.output, blur.output), trace=trace)


def run_alg1(problem: DeblurProblem, cfg: Alg1Config, jobs: Optional[int] = None,
             init: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> DeblurResult:
    """
    Alternating gradient descent strictly inside both generator ranges

    Args:
        init: optional fixed (z_i, z_k) start used by every restart instead of N(0, I) draws
    """
    problem.require("image_generator", "blur_generator")
    return with_restarts(lambda rng: _alg1_once(problem, cfg, rng, init), cfg.restarts, cfg.seed, jobs)


# hybrid: free image tethered to the range

def _alg2_once(problem: DeblurProblem, cfg: Alg2Config, rng: SeededRng) -> DeblurResult:
    image_net, blur_net = problem.image_generator, problem.blur_generator
    z_i = rng.standard_normal(image_net.latent_dim)
    z_k = rng.standard_normal(blur_net.latent_dim)
    image = rng.normal(*ALG2_IMAGE_INIT, size=problem.y.shape)
    generated, blur = evaluate(image_net, z_i), evaluate(blur_net, z_k)
    optimizers = {name: _Adam(cfg.lr) for name in ("z_i", "z_k", "image")}

    trace = []
    for t in range(cfg.steps):
        grad = alg2_image_latent_gradient(problem, generated, blur, image, cfg.tau, cfg.zeta)
        generated = evaluate(image_net, optimizers["z_i"].step(generated.z, grad))
        grad = alg2_blur_latent_gradient(problem, generated, blur, image, cfg.zeta)
        blur = evaluate(blur_net, optimizers["z_k"].step(blur.z, grad))
        grad = alg2_image_gradient(problem, generated, blur, image, cfg.tau, cfg.rho)
        if not np.all(np.isfinite(grad)):
            raise NumericError("Non-finite image gradient", iteration=t)
        image = optimizers["image"].step(image, grad)

        measurement = _check_finite(measurement_loss(problem.y, image, blur.output), t)
        total = alg2_value(problem.y, image, generated.output, blur.output, cfg.tau, cfg.zeta, cfg.rho)
        trace.append((t, total, measurement, cfg.lr))
        _log_progress("alg2", t, cfg.steps, total, measurement)

    range_gap = float(np.linalg.norm(image - generated.output))
    return DeblurResult(
        algorithm="hybrid", image=image, kernel=kernel_of(blur.output), z_i=generated.z, z_k=blur.z,
        measurement_loss=measurement_loss(problem.y, image, blur.output), trace=trace,
        details={"range_gap": range_gap})


def run_alg2(problem: DeblurProblem, cfg: Alg2Config, jobs: Optional[int] = None) -> DeblurResult:
    """Free image tethered to the generator range, plus a TV prior"""
    problem.require("image_generator", "blur_generator")
    return with_restarts(lambda rng: _alg2_once(problem, cfg, rng), cfg.restarts, cfg.seed, jobs)


# untrained: image network fitted from scratch

def fit_untrained_weights(problem: DeblurProblem, z_i: np.ndarray, weights, steps: int, lr: float):
    """Adam on W alone for ||y - G_I(z_i, W)||^2; returns the weights and the relative fit error"""
    spec = problem.untrained_image_spec
    state = AdamState()
    for t in range(steps):
        output, tape = forward(spec, weights, z_i)
        _, grads = vjp(spec, weights, tape, output - problem.y)
        try:
            weights = weights.replace(adam_step(state, weights.to_dict(), grads.to_dict(), lr))
        except NumericError as e:
            raise NumericError(f"Weight fit diverged: {str(e)}", iteration=t)
    output, _ = forward(spec, weights, z_i)
    fit = projection_objective(problem.y, output) / max(float(np.sum(problem.y ** 2)), 1e-300)
    return weights, fit


def _alg3_once(problem: DeblurProblem, cfg: Alg3Config, rng: SeededRng) -> DeblurResult:
    spec, blur_net = problem.untrained_image_spec, problem.blur_generator
    z_i = rng.standard_normal(spec.input_dim)
    z_k = rng.standard_normal(blur_net.latent_dim)
    weights = init_weights(spec, cfg.init_scheme, rng.child(0))
    weights, init_fit = fit_untrained_weights(problem, z_i, weights, cfg.init_steps, cfg.init_lr)
    logger.info("Untrained prior fitted to the observation: relative error %.4f after %d steps",
                init_fit, cfg.init_steps)

    lr_zi, lr_zk, lr_w = _Adam(cfg.lr_zi), _Adam(cfg.lr_zk), AdamState()
    generated, tape = forward(spec, weights, z_i)
    blur = evaluate(blur_net, z_k)

    trace = []
    for t in range(cfg.steps):
        cotangent = alg3_image_cotangent(problem, generated, blur.output, cfg.nu)
        grad_zi, _ = vjp(spec, weights, tape, cotangent)
        z_i = lr_zi.step(z_i, grad_zi)
        generated, tape = forward(spec, weights, z_i)

        grad_zk = alg3_blur_latent_gradient(problem, generated, blur, cfg.kappa)
        blur = evaluate(blur_net, lr_zk.step(blur.z, grad_zk))

        cotangent = alg3_image_cotangent(problem, generated, blur.output, cfg.nu)
        _, grad_w = vjp(spec, weights, tape, cotangent)
        weights = weights.replace(adam_step(lr_w, weights.to_dict(), grad_w.to_dict(), cfg.lr_w))
        generated, tape = forward(spec, weights, z_i)

        measurement = _check_finite(measurement_loss(problem.y, generated, blur.output), t)
        total = measurement + cfg.kappa * float(blur.z @ blur.z) + cfg.nu * tv(generated)
        trace.append((t, total, measurement, cfg.lr_zi))
        _log_progress("alg3", t, cfg.steps, total, measurement)

    return DeblurResult(
        algorithm="untrained", image=generated, kernel=kernel_of(blur.output), z_i=z_i, z_k=blur.z,
        measurement_loss=measurement_loss(problem.y, generated, blur.output), trace=trace,
        image_weights=weights, details={"init_fit": init_fit})


def run_alg3(problem: DeblurProblem, cfg: Alg3Config, jobs: Optional[int] = None) -> DeblurResult:
    """Untrained image network fitted to y, alternating with the pretrained blur generator"""
    problem.require("untrained_image_spec", "blur_generator")
    return with_restarts(lambda rng: _alg3_once(problem, cfg, rng), cfg.restarts, cfg.seed, jobs)


SOLVERS: Dict[str, Tuple[type, Callable]] = {
    "naive": (NaiveConfig, run_naive),
    "gen": (Alg1Config, run_alg1),
    "hybrid": (Alg2Config, run_alg2),
    "untrained": (Alg3Config, run_alg3),
}


def run_algorithm(name: str, problem: DeblurProblem, cfg, jobs: Optional[int] = None) -> DeblurResult:
    if name not in SOLVERS:
        raise ArgumentError(f"Unknown algorithm {name}; choose from {', '.join(SOLVERS)}")
    return SOLVERS[name][1](problem, cfg, jobs)


def renormalize_estimate(image: np.ndarray, kernel: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Scale the kernel to sum 1 and the image by the inverse factor; their convolution is unchanged"""
    total = float(np.sum(kernel))
    if total <= 0:
        raise ArgumentError(f"Cannot renormalize a kernel summing to {total}")
    return np.asarray(image) * total, np.asarray(kernel) / total
