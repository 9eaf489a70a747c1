import logging
from pathlib import Path

import click
import numpy as np

from src.modules.blur.blur_dataset_service import load_blur_dataset
from src.modules.deblur.problem import GeneratorHandle
from src.modules.generators.architectures import blur_vae_for, image_vae_for
from src.modules.numerics.random_streams import SeededRng
from src.modules.training.shapes_corpus import gen_image_dataset, load_image_dataset
from src.modules.training.vae_training_service import TrainingConfig, train_vae
from src.shared.cli_options import cli_options, common_options, echo_success, record_failure
from src.shared.image_io import write_f32, write_image, write_kernel_png
from src.shared.presets import resolve_options
from src.shared.run_log import RunConfig, RunLogService

logger = logging.getLogger(__name__)


@click.command("gen-image-dataset")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--count", type=click.IntRange(min=1), help="Number of images [desk32: 2000, paper64: 50000].")
@click.option("--size", type=click.IntRange(min=4), help="Image extent [32].")
@click.option("--channels", type=click.Choice(["1", "3"]), help="Channels [desk32: 1, paper64: 3].")
@click.option("--format", "fmt", type=click.Choice(["f32", "png"]), help="File format [f32].")
@common_options
def gen_image_dataset_cmd(out_dir, count, size, channels, fmt, preset, seed, jobs, config_path):
    """Draw a procedural shapes corpus (ellipses, rectangles, strokes)"""
    options = resolve_options(preset, "gen-image-dataset", {
        "count": count, "size": size, "channels": int(channels) if channels else None, "format": fmt,
    }, config_path)

    run_log = RunLogService(out_dir, "gen-image-dataset")
    run_log.create_log(RunConfig(subcommand="gen-image-dataset", out_dir=str(out_dir), seed=seed, preset=preset,
                                 hyperparameters=options))
    try:
        manifest = gen_image_dataset(options["count"], options["size"], options["channels"], seed,
                                     out_dir, fmt=options["format"], jobs=jobs)
    except Exception as e:
        record_failure(run_log, e)
        raise
    run_log.update_log(status="completed", count=manifest["count"])
    echo_success(f"Wrote {manifest['count']} {options['size']}x{options['size']} images to {out_dir}")


@click.command("train-vae")
@click.option("--kind", type=click.Choice(["blur", "image"]), required=True, help="Train G_K or G_I.")
@click.option("--data", "data_dir", type=click.Path(file_okay=False, exists=True), required=True,
              help="Blur dataset (train split is used) or image dataset directory.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--latent-dim", type=click.IntRange(min=1),
              help="Latent length [blur: desk32 16, paper64 50; image: desk32 16, paper64 100].")
@click.option("--epochs", type=click.IntRange(min=1), help="Training epochs.")
@click.option("--batch-size", type=click.IntRange(min=1), help="[blur paper64: 5; image paper64: 1500].")
@click.option("--lr", type=float, help="Adam learning rate [desk32: 1e-3, paper64: 1e-5].")
@click.option("--init-scheme", type=click.Choice(["uniform_fan_in", "gaussian"]),
              help="Weight initialization [uniform_fan_in].")
@cli_options("preset", "seed", "config")
def train_vae_cmd(kind, data_dir, out_dir, latent_dim, epochs, batch_size, lr, init_scheme,
                  preset, seed, config_path):
    """Train a VAE on the ELBO and export its decoder as a GNW generator"""
    options = resolve_options(preset, f"train-vae-{kind}", {
        "latent_dim": latent_dim, "epochs": epochs, "batch_size": batch_size, "lr": lr,
        "init_scheme": init_scheme,
    }, config_path)
    options["kind"] = kind

    run_log = RunLogService(out_dir, "train-vae")
    run_log.create_log(RunConfig(subcommand="train-vae", out_dir=str(out_dir), seed=seed, preset=preset,
                                 paths={"data": str(data_dir)}, hyperparameters=options))
    try:
        if kind == "blur":
            dataset = load_blur_dataset(data_dir, split="train")
            vae = blur_vae_for(preset, options["latent_dim"], dataset.shape[-1])
        else:
            dataset = load_image_dataset(data_dir)
            vae = image_vae_for(preset, options["latent_dim"], dataset.shape[-1], dataset.shape[1])
        config = TrainingConfig.from_options(
            epochs=options.get("epochs"), batch_size=options.get("batch_size"), lr=options.get("lr"),
            seed=seed, init_scheme=options.get("init_scheme"))
        outcome = train_vae(vae, dataset, config, out_dir)
    except Exception as e:
        record_failure(run_log, e)
        raise

    final = outcome.trace[-1]
    run_log.update_log(status="completed", decoder=str(outcome.decoder_path), epochs=len(outcome.trace),
                       final_recon=final[1], final_kl=final[2], final_total=final[3])
    echo_success(f"Trained {kind} VAE on {len(dataset)} items; final loss {final[3]:.5f}; "
                 f"decoder at {outcome.decoder_path}")


@click.command("sample")
@click.option("--model", "model_path", type=click.Path(dir_okay=False, exists=True), required=True,
              help="Generator GNW file.")
@click.option("--count", type=click.IntRange(min=1), default=8, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--kernel", "as_kernel", is_flag=True,
              help="Treat outputs as blur kernels (normalized PNG rendering).")
@cli_options("seed")
def sample_cmd(model_path, count, out_dir, as_kernel, seed):
    """Draw G(z) with z ~ N(0, I); sample j uses child stream j of --seed"""
    run_log = RunLogService(out_dir, "sample")
    run_log.create_log(RunConfig(subcommand="sample", out_dir=str(out_dir), seed=seed,
                                 paths={"model": str(model_path)},
                                 hyperparameters={"count": count, "kernel": as_kernel}))
    out_dir = Path(out_dir)
    try:
        handle = GeneratorHandle.from_file(model_path)
        master = SeededRng(seed)
        for index in range(count):
            z = master.child(index).standard_normal(handle.latent_dim)
            output = handle.sample(z)
            stem = out_dir / f"sample_{index:04d}"
            if as_kernel:
                kernel = output[0] if output.ndim == 3 else output
                write_kernel_png(kernel, stem.with_suffix(".png"))
                write_f32(kernel, stem.with_suffix(".f32"))
            else:
                write_image(output, stem)
            write_f32(np.asarray(z), out_dir / f"z_{index:04d}.f32")
    except Exception as e:
        record_failure(run_log, e)
        raise
    run_log.update_log(status="completed", count=count)
    logger.info("Sampled %d outputs of %s", count, model_path)
    echo_success(f"Wrote {count} samples to {out_dir}")
