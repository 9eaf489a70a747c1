import logging
from pathlib import Path

import click

from src.modules.deblur.deblur_service import SOLVERS, project_to_range, renormalize_estimate
from src.modules.deblur.problem import TRACE_COLUMNS, DeblurProblem, GeneratorHandle, NaiveConfig
from src.modules.evaluation.metrics import evaluate_estimate, range_error
from src.modules.generators.architectures import untrained_image_net
from src.modules.generators.weight_file import save_weights
from src.shared.cli_options import common_options, echo_success, record_failure
from src.shared.image_io import read_image, write_f32, write_image, write_kernel_png
from src.shared.presets import resolve_options
from src.shared.run_log import RunConfig, RunLogService
from src.shared.run_log_enhancer import RunLogEnhancer

logger = logging.getLogger(__name__)

# flag name -> solver config field
SOLVER_FLAGS = {
    "lam": "--lambda", "gamma": "--gamma", "steps": "--steps", "restarts": "--restarts", "lr": "--lr",
    "eta0": "--eta0", "decay": "--decay", "debug": "--debug",
    "tau": "--tau", "zeta": "--zeta", "rho": "--rho",
    "kappa": "--kappa", "nu": "--nu", "init_steps": "--init-steps", "init_lr": "--init-lr",
    "lr_zi": "--lr-zi", "lr_zk": "--lr-zk", "lr_w": "--lr-w", "init_scheme": "--init-scheme",
}
NEEDS_IMAGE_MODEL = ("naive", "gen", "hybrid")
NEEDS_BLUR_MODEL = ("gen", "hybrid", "untrained")


def _solver_options(alg: str, flags: dict) -> dict:
    """Keep the flags that were given; reject the ones the algorithm has no use for"""
    config_cls = SOLVERS[alg][0]
    given = {name: value for name, value in flags.items() if value is not None and value is not False}
    stray = [SOLVER_FLAGS[name] for name in given if name not in config_cls.model_fields]
    if stray:
        raise click.UsageError(f"{', '.join(stray)} does not apply to --alg {alg}")
    return given


@click.command("deblur")
@click.option("--alg", type=click.Choice(list(SOLVERS)), required=True,
              help="naive: back-projection; gen: generative priors; hybrid: generative + classical priors; "
                   "untrained: untrained image network + generative blur prior.")
@click.option("--input", "input_path", type=click.Path(dir_okay=False, exists=True), required=True,
              help="Blurry observation (.png or .f32).")
@click.option("--image-model", type=click.Path(dir_okay=False), help="G_I GNW file (naive, gen, hybrid).")
@click.option("--blur-model", type=click.Path(dir_okay=False), help="G_K GNW file (gen, hybrid, untrained).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--reference", type=click.Path(dir_okay=False, exists=True),
              help="Sharp image; adds PSNR/SSIM to result.json.")
@click.option("--renormalize", is_flag=True, help="Rescale k to sum 1 (and i inversely) before metrics.")
@click.option("--lambda", "lam", type=float, help="z_k penalty [0.01].")
@click.option("--gamma", type=float, help="z_i penalty [0.01].")
@click.option("--steps", type=int, help="Iterations [naive 6000, gen 6000, hybrid 10000, untrained 20000].")
@click.option("--restarts", type=int, help="Random restarts [10; untrained 1].")
@click.option("--lr", type=float, help="Step size [naive 0.01, hybrid 0.005].")
@click.option("--eta0", type=float, help="gen: initial step size [0.01].")
@click.option("--decay", type=float, help="gen: step-size decay constant [1000].")
@click.option("--debug", is_flag=True, default=None, help="gen: cross-check Fourier and tape gradients.")
@click.option("--tau", type=float, help="hybrid: range-tether weight [100].")
@click.option("--zeta", type=float, help="hybrid: in-range measurement weight [0.5].")
@click.option("--rho", type=float, help="hybrid: image TV weight [1e-3].")
@click.option("--kappa", type=float, help="untrained: z_k penalty [0.01].")
@click.option("--nu", type=float, help="untrained: image TV weight [1e-3].")
@click.option("--init-steps", type=int, help="untrained: weight-fit steps [400].")
@click.option("--init-lr", type=float, help="untrained: weight-fit step size [1e-3].")
@click.option("--lr-zi", type=float, help="untrained: z_i step size [1e-3].")
@click.option("--lr-zk", type=float, help="untrained: z_k step size [1e-3].")
@click.option("--lr-w", type=float, help="untrained: weight step size [1e-4].")
@click.option("--init-scheme", type=click.Choice(["uniform_fan_in", "gaussian"]),
              help="untrained: weight initialization [uniform_fan_in].")
@click.option("--untrained-latent-dim", type=click.IntRange(min=1), help="untrained: z_i length [32].")
@click.option("--untrained-width", type=click.IntRange(min=1), help="untrained: channels [desk32 16, paper64 64].")
@common_options
def deblur_cmd(alg, input_path, image_model, blur_model, out_dir, reference, renormalize,
               untrained_latent_dim, untrained_width, preset, seed, jobs, config_path, **solver_flags):
    """Blind deblurring with generative priors"""
    if alg == "untrained" and image_model:
        raise click.UsageError("--alg untrained fits its own image network; drop --image-model")
    if alg in NEEDS_IMAGE_MODEL and not image_model:
        raise click.UsageError(f"--alg {alg} needs --image-model")
    if alg in NEEDS_BLUR_MODEL and not blur_model:
        raise click.UsageError(f"--alg {alg} needs --blur-model")

    options = resolve_options(preset, "deblur", {
        "untrained_latent_dim": untrained_latent_dim, "untrained_width": untrained_width,
        **_solver_options(alg, solver_flags),
    }, config_path)
    network = {key: options.pop(key) for key in ("untrained_latent_dim", "untrained_width")}
    options["seed"] = seed
    config = SOLVERS[alg][0].from_options(**options)

    run_log = RunLogService(out_dir, "deblur")
    run_log.create_log(RunConfig(
        subcommand="deblur", out_dir=str(out_dir), seed=seed, preset=preset,
        paths={"input": str(input_path), "image_model": image_model, "blur_model": blur_model,
               "reference": reference},
        hyperparameters={"algorithm": alg, "renormalize": renormalize, "solver": config.model_dump(by_alias=True),
                         **(network if alg == "untrained" else {})},
    ))
    out_dir = Path(out_dir)
    try:
        y = read_image(input_path)
        problem = DeblurProblem(
            y,
            image_generator=GeneratorHandle.from_file(image_model) if image_model else None,
            blur_generator=GeneratorHandle.from_file(blur_model) if blur_model else None,
            untrained_image_spec=untrained_image_net(y.shape, network["untrained_latent_dim"],
                                                     network["untrained_width"]) if alg == "untrained" else None,
        )
        result = SOLVERS[alg][1](problem, config, jobs)

        write_image(result.image, out_dir / "ihat")
        if result.kernel is not None:
            write_kernel_png(result.kernel, out_dir / "khat.png")
            write_f32(result.kernel, out_dir / "khat.f32")
        for name, latent in (("zi", result.z_i), ("zk", result.z_k)):
            if latent is not None:
                write_f32(latent, out_dir / f"{name}.f32")
        if result.image_weights is not None:
            save_weights(problem.untrained_image_spec, result.image_weights, out_dir / "untrained_image.gnw")
        run_log.write_trace(TRACE_COLUMNS, result.trace)

        metrics = {}
        if reference:
            estimate = result.image
            if renormalize and result.kernel is not None:
                estimate, _ = renormalize_estimate(result.image, result.kernel)
            metrics = evaluate_estimate(estimate, read_image(reference, channels=y.shape[0])).to_dict()
            metrics = {key: value for key, value in metrics.items() if value is not None}
    except Exception as e:
        record_failure(run_log, e)
        raise

    record = run_log.update_log(status="completed", **result.summary(), **metrics)
    echo_success(RunLogEnhancer.create_run_summary(record))


@click.command("project-range")
@click.option("--image-model", type=click.Path(dir_okay=False, exists=True), required=True)
@click.option("--input", "input_path", type=click.Path(dir_okay=False, exists=True), required=True,
              help="Image to project onto the range of G_I.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--steps", type=click.IntRange(min=0), help="Gradient steps [desk32 1000, paper64 6000].")
@click.option("--restarts", type=click.IntRange(min=1), help="Random restarts [desk32 3, paper64 10].")
@click.option("--lr", type=float, help="Step size [0.01].")
@common_options
def project_range_cmd(image_model, input_path, out_dir, steps, restarts, lr, preset, seed, jobs, config_path):
    """Closest range image G_I(z) to a sharp image; reports the range error"""
    options = resolve_options(preset, "project-range", {"steps": steps, "restarts": restarts, "lr": lr},
                              config_path)
    options["seed"] = seed
    config = NaiveConfig.from_options(**options)

    run_log = RunLogService(out_dir, "project-range")
    run_log.create_log(RunConfig(
        subcommand="project-range", out_dir=str(out_dir), seed=seed, preset=preset,
        paths={"image_model": image_model, "input": str(input_path)}, hyperparameters={"solver": config.model_dump()},
    ))
    out_dir = Path(out_dir)
    try:
        handle = GeneratorHandle.from_file(image_model)
        image = read_image(input_path, channels=handle.output_shape[0])
        z, i_range = project_to_range(handle, image, config, jobs)
        write_image(i_range, out_dir / "irange")
        write_f32(z, out_dir / "zi.f32")
        gap = range_error(image, i_range)
    except Exception as e:
        record_failure(run_log, e)
        raise

    run_log.update_log(status="completed", range_error=gap)
    echo_success(f"Projected {input_path} onto the range of {image_model}; range error {gap:.5f}")
