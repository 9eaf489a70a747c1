"""
Blur kernel datasets on disk

A dataset directory holds one raw float32 file per kernel (k_%06d.f32) and a
manifest.json carrying everything needed to regenerate it bit for bit. Each
kernel draws from its own child stream of the master seed, so the dataset is
the same for any worker count.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import ValidationError
from tqdm import tqdm

from src.modules.blur.kernels import (
    GaussianBlurParams,
    KernelCanvas,
    TrajectoryParams,
    gaussian_kernel,
    motion_kernel,
)
from src.modules.numerics.random_streams import SeededRng
from src.modules.scheduler.task_scheduler import TaskScheduler
from src.shared.errors import ArgumentError, ConfigError, FormatError
from src.shared.image_io import read_f32, write_f32

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
KERNEL_PATTERN = "k_{:06d}.f32"
DEFAULT_TEST_FRACTION = 0.2


def kernel_filename(index: int) -> str:
    return KERNEL_PATTERN.format(index)


def split_rank(seed: int, index: int) -> str:
    """Hash key ordering kernels for the train/test split"""
    return hashlib.blake2b(f"{seed}:{index}".encode("ascii"), digest_size=8).hexdigest()


def train_indices(seed: int, count: int, boundary: int) -> List[int]:
    """The `boundary` indices with the lowest hash rank form the training split"""
    ranked = sorted(range(count), key=lambda index: (split_rank(seed, index), index))
    return sorted(ranked[:boundary])


def _make_kernel(kind: str, params, canvas: int, rng: SeededRng) -> KernelCanvas:
    if kind == "gaussian":
        sigma = rng.uniform(params.sigma_min, params.sigma_max)
        return gaussian_kernel(sigma, canvas)
    return motion_kernel(params, canvas, rng)


def gen_blur_dataset(count: int, params: Union[TrajectoryParams, GaussianBlurParams], canvas: int,
                     out_dir: Union[str, Path], kind: str = "motion",
                     test_count: Optional[int] = None, jobs: Optional[int] = None) -> dict:
    """
    Synthesize `count` kernels into out_dir

    Args:
        params: trajectory model (kind 'motion') or sigma range (kind 'gaussian');
            params.seed is the master seed
        canvas: odd kernel canvas size s
        test_count: held-out kernels; defaults to a fifth of the dataset

    Returns the manifest that was written.
    """
    if count < 1:
        raise ArgumentError(f"Dataset needs at least one kernel, got {count}")
    if kind not in ("motion", "gaussian"):
        raise ArgumentError(f"Unknown blur kind {kind}")
    if canvas % 2 == 0:
        raise ArgumentError(f"Kernel canvas size must be odd, got {canvas}")
    if kind == "motion":
        params.check_canvas(canvas)
    if test_count is None:
        test_count = int(round(count * DEFAULT_TEST_FRACTION))
    if not 0 <= test_count <= count:
        raise ArgumentError(f"Test split of {test_count} does not fit {count} kernels")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    master = SeededRng(params.seed)

    logger.info("Generating %d %s kernels (canvas %d) into %s", count, kind, canvas, out_dir)
    with tqdm(total=count, desc=f"{kind} kernels", unit="kernel", disable=None) as bar:
        def make(index: int) -> bool:
            kernel = _make_kernel(kind, params, canvas, master.child(index))
            write_f32(kernel.values, out_dir / kernel_filename(index))
            bar.update(1)
            return kernel.clipped

        try:
            clipped = TaskScheduler(jobs).map(make, range(count))
        except OSError as e:
            raise ConfigError(f"Blur dataset generation failed: {str(e)}")

    manifest = {
        "kind": kind,
        "seed": params.seed,
        "params": params.model_dump(mode="json"),
        "count": count,
        "canvas_size": canvas,
        "split_boundary": count - test_count,
        "clipped": int(sum(clipped)),
    }
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    if manifest["clipped"]:
        logger.warning("%d of %d kernels were clipped to the canvas", manifest["clipped"], count)
    return manifest


def read_manifest(directory: Union[str, Path]) -> dict:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise ConfigError(f"No {MANIFEST_NAME} in {directory}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"Invalid blur manifest: {e.msg}", offset=e.pos)


def params_from_manifest(manifest: dict) -> Union[TrajectoryParams, GaussianBlurParams]:
    try:
        if manifest.get("kind", "motion") == "gaussian":
            return GaussianBlurParams.model_validate(manifest["params"])
        return TrajectoryParams.model_validate(manifest["params"])
    except (KeyError, ValidationError) as e:
        raise ConfigError(f"Blur manifest parameters are invalid: {e}")


def regenerate_blur_dataset(source_dir: Union[str, Path], out_dir: Union[str, Path],
                            jobs: Optional[int] = None) -> dict:
    """Rebuild a dataset elsewhere from the manifest alone"""
    manifest = read_manifest(source_dir)
    return gen_blur_dataset(
        manifest["count"], params_from_manifest(manifest), manifest["canvas_size"], out_dir,
        kind=manifest.get("kind", "motion"),
        test_count=manifest["count"] - manifest["split_boundary"], jobs=jobs)


def load_blur_dataset(directory: Union[str, Path], split: str = "train") -> np.ndarray:
    """
    Load one split as an (N, 1, s, s) array

    Args:
        split: 'train', 'test' or 'all'
    """
    if split not in ("train", "test", "all"):
        raise ArgumentError(f"Unknown split {split}")
    directory = Path(directory)
    manifest = read_manifest(directory)
    count, size = manifest["count"], manifest["canvas_size"]
    if split == "all":
        indices = list(range(count))
    else:
        train = train_indices(manifest["seed"], count, manifest["split_boundary"])
        indices = train if split == "train" else sorted(set(range(count)) - set(train))
    if not indices:
        return np.zeros((0, 1, size, size))
    kernels = [read_f32(directory / kernel_filename(index), (size, size)) for index in indices]
    return np.stack(kernels)[:, None]
