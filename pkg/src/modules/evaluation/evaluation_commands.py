import json
import logging
from pathlib import Path

import click

from src.modules.evaluation.metrics import evaluate_estimate
from src.modules.evaluation.sweep_service import SweepSpec, run_sweep
from src.shared.cli_options import cli_options, common_options, echo_success
from src.shared.image_io import read_image
from src.shared.presets import resolve_options
from src.shared.run_log import list_runs
from src.shared.run_log_enhancer import RunLogEnhancer

logger = logging.getLogger(__name__)


@click.command("eval")
@click.option("--estimate", type=click.Path(dir_okay=False, exists=True), required=True)
@click.option("--reference", type=click.Path(dir_okay=False, exists=True), required=True)
@click.option("--range-image", type=click.Path(dir_okay=False, exists=True),
              help="Projection of the reference onto the generator range; adds range/overall error.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), help="Write the metrics as JSON.")
@cli_options()
def eval_cmd(estimate, reference, range_image, out_path):
    """PSNR / SSIM of an estimate against a reference"""
    ref = read_image(reference)
    report = evaluate_estimate(read_image(estimate, channels=ref.shape[0]), ref,
                               read_image(range_image, channels=ref.shape[0]) if range_image else None)
    metrics = {key: value for key, value in report.to_dict().items() if value is not None}
    if out_path:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    echo_success(" | ".join(f"{key} {value:.4f}" for key, value in metrics.items()))


@click.command("sweep")
@click.option("--spec", "spec_path", type=click.Path(dir_okay=False, exists=True),
              help="Sweep spec JSON; flags below override its fields.")
@click.option("--kind", type=click.Choice(["noise", "blur_size", "restarts", "latent_dim"]))
@click.option("--grid", help="Comma-separated grid values, e.g. 0.01,0.05,0.1.")
@click.option("--alg", "algorithms", multiple=True, help="Algorithm to run; repeat for several [gen].")
@click.option("--image-model", help="G_I GNW file; use {value} in the path for latent_dim sweeps.")
@click.option("--blur-model", help="G_K GNW file.")
@click.option("--suite", "suite_kind", type=click.Choice(["test", "sample", "range"]), help="Problem suite [test].")
@click.option("--count", type=click.IntRange(min=1), help="Suite images [20].")
@click.option("--images-dir", type=click.Path(file_okay=False, exists=True),
              help="Test images; procedural shapes when omitted.")
@click.option("--blur-dataset", type=click.Path(file_okay=False, exists=True),
              help="Blur dataset whose test split supplies kernels.")
@click.option("--noise", type=click.FloatRange(min=0), help="Noise std when not swept [0.01].")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@common_options
def sweep_cmd(spec_path, kind, grid, algorithms, image_model, blur_model, suite_kind, count, images_dir,
              blur_dataset, noise, out_dir, preset, seed, jobs, config_path):
    """Run a noise / blur-size / restarts / latent-dim sweep and write sweep.csv and summary.json"""
    if spec_path and config_path:
        raise click.UsageError("--spec and --config both name a sweep file; pass one")
    try:
        grid_values = [float(value) for value in grid.split(",")] if grid else None
    except ValueError:
        raise click.BadParameter(f"cannot parse {grid!r}", param_hint="--grid")

    suite = {key: value for key, value in {
        "kind": suite_kind, "count": count, "images_dir": images_dir, "blur_dataset": blur_dataset,
        "noise_sigma": noise}.items() if value is not None}
    options = resolve_options(preset, "sweep", {
        "kind": kind, "grid": grid_values, "algorithms": list(algorithms) or None,
        "image_model": image_model, "blur_model": blur_model, "suite": suite or None, "seed": seed,
    }, spec_path or config_path)
    spec = SweepSpec.from_options(**options)

    outcome = run_sweep(spec, out_dir, jobs)
    for entry in outcome.summary:
        psnr = entry["psnr_db"]
        click.echo(f"  {spec.kind}={entry['grid_value']} {entry['algorithm']}: "
                   f"PSNR {psnr['mean']:.2f} ± {psnr['std']:.2f} dB over {entry['images']} images"
                   f" ({psnr['failures']} failed)")
    echo_success(f"Sweep wrote {len(outcome.rows)} rows to {outcome.csv_path}")


@click.command("list-runs")
@click.argument("root", type=click.Path(file_okay=False, exists=True))
def list_runs_cmd(root):
    """Status line of every run directory under ROOT"""
    records = list_runs(root)
    if not records:
        click.echo(f"No runs under {root}")
        return
    for record in records:
        entry = RunLogEnhancer.format_log_entry(record)
        click.echo(f"{entry['status_badge']}  {entry.get('formatted_date', '')}  {entry['summary']}")
