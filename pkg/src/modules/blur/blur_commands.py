import logging
from pathlib import Path

import click

from src.modules.blur.blur_dataset_service import gen_blur_dataset, regenerate_blur_dataset
from src.modules.blur.kernels import GaussianBlurParams, KernelCanvas, TrajectoryParams, blur_image
from src.modules.numerics.random_streams import SeededRng
from src.shared.cli_options import cli_options, common_options, echo_success, record_failure
from src.shared.errors import ConfigError, DimensionError
from src.shared.image_io import read_image, read_kernel, write_image
from src.shared.presets import resolve_options
from src.shared.run_log import RunConfig, RunLogService

logger = logging.getLogger(__name__)


@click.command("gen-blur-dataset")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True, help="Dataset directory.")
@click.option("--kind", type=click.Choice(["motion", "gaussian"]), default="motion", show_default=True)
@click.option("--count", type=click.IntRange(min=1), help="Number of kernels [desk32: 10000, paper64: 80000].")
@click.option("--canvas", type=int, help="Odd kernel canvas size [desk32: 15, paper64: 29].")
@click.option("--length-min", type=float, help="Shortest trajectory in pixels [desk32: 3, paper64: 5].")
@click.option("--length-max", type=float, help="Longest trajectory in pixels [desk32: 12, paper64: 28].")
@click.option("--steps", type=click.IntRange(min=1), help="Polyline steps per trajectory [64].")
@click.option("--kappa-dir", type=float, help="Heading change std per step, radians [0.35].")
@click.option("--sigma-min", type=float, help="Smallest Gaussian sigma [0.5].")
@click.option("--sigma-max", type=float, help="Largest Gaussian sigma [desk32: 2, paper64: 3].")
@click.option("--test-count", type=click.IntRange(min=0), help="Held-out kernels [a fifth of --count].")
@click.option("--regenerate-from", type=click.Path(file_okay=False, exists=True),
              help="Rebuild an existing dataset from its manifest instead.")
@common_options
def gen_blur_dataset_cmd(out_dir, kind, count, canvas, length_min, length_max, steps, kappa_dir,
                         sigma_min, sigma_max, test_count, regenerate_from, preset, seed, jobs, config_path):
    """Synthesize a motion or Gaussian blur-kernel dataset"""
    if regenerate_from:
        manifest = regenerate_blur_dataset(regenerate_from, out_dir, jobs)
        echo_success(f"Regenerated {manifest['count']} kernels into {out_dir}")
        return

    options = resolve_options(preset, "gen-blur-dataset", {
        "count": count, "canvas": canvas, "length_min": length_min, "length_max": length_max,
        "steps": steps, "kappa_dir": kappa_dir, "sigma_min": sigma_min, "sigma_max": sigma_max,
        "test_count": test_count,
    }, config_path)
    options["kind"] = kind

    run_log = RunLogService(out_dir, "gen-blur-dataset")
    run_log.create_log(RunConfig(subcommand="gen-blur-dataset", out_dir=str(out_dir), seed=seed, preset=preset,
                                 hyperparameters=options))
    try:
        if kind == "motion":
            params = TrajectoryParams.model_validate({
                "length_min": options["length_min"], "length_max": options["length_max"],
                "steps": options["steps"], "kappa_dir": options["kappa_dir"], "seed": seed})
        else:
            params = GaussianBlurParams.model_validate({
                "sigma_min": options["sigma_min"], "sigma_max": options["sigma_max"], "seed": seed})
        manifest = gen_blur_dataset(options["count"], params, options["canvas"], out_dir, kind=kind,
                                    test_count=options.get("test_count"), jobs=jobs)
    except ValueError as e:
        record_failure(run_log, e)
        raise ConfigError(f"Invalid blur parameters: {e}")
    except Exception as e:
        record_failure(run_log, e)
        raise

    record = run_log.update_log(status="completed", count=manifest["count"],
                                split_boundary=manifest["split_boundary"], clipped=manifest["clipped"])
    echo_success(f"Wrote {record['count']} {kind} kernels to {out_dir} "
                 f"({record['count'] - record['split_boundary']} held out, {record['clipped']} clipped)")


@click.command("blur")
@click.option("--image", "image_path", type=click.Path(dir_okay=False, exists=True), required=True,
              help="Sharp image (.png or .f32).")
@click.option("--kernel", "kernel_path", type=click.Path(dir_okay=False, exists=True), required=True,
              help="Kernel (.f32 or .png).")
@click.option("--noise", type=click.FloatRange(min=0), default=0.01, show_default=True,
              help="Gaussian noise std on [0, 1] images.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True,
              help="Output path; both .png and .f32 are written.")
@cli_options("seed")
def blur_cmd(image_path, kernel_path, noise, out_path, seed):
    """Apply the forward model y = i (*) k + n with circular boundaries"""
    image = read_image(image_path)
    kernel = read_kernel(kernel_path)
    KernelCanvas(kernel).check()
    if kernel.shape[0] > min(image.shape[1:]):
        raise DimensionError(f"Kernel {kernel.shape} is larger than image {image.shape}")
    y = blur_image(image, kernel, noise, SeededRng(seed))
    png_path, raw_path = write_image(y, Path(out_path))
    logger.info("Blurred %s with %s (sigma %.4f, seed %d)", image_path, kernel_path, noise, seed)
    echo_success(f"Wrote {png_path} and {raw_path}")
