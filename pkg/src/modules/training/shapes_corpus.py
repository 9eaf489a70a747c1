"""
Procedural shapes corpus for desk-scale image generators

Each image is a flat random background with a few random ellipses,
rectangles and strokes drawn by Pillow. Image i only depends on the child
stream i of the master seed.
"""

import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image, ImageDraw

from src.modules.numerics.random_streams import SeededRng
from src.modules.scheduler.task_scheduler import TaskScheduler
from src.shared.errors import ArgumentError, ConfigError, FormatError
from src.shared.image_io import read_image, write_f32, write_png

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
SHAPE_KINDS = ("ellipse", "rectangle", "stroke")
MAX_SHAPES = 4


def _color(rng: SeededRng, channels: int):
    values = tuple(int(v) for v in rng.integers(0, 256, size=channels))
    return values[0] if channels == 1 else values


def draw_shapes(size: int, channels: int, rng: SeededRng) -> np.ndarray:
    """One (channels, size, size) image in [0, 1]"""
    if channels not in (1, 3):
        raise ArgumentError(f"Shapes corpus supports 1 or 3 channels, got {channels}")
    mode = "L" if channels == 1 else "RGB"
    img = Image.new(mode, (size, size), _color(rng, channels))
    draw = ImageDraw.Draw(img)

    for _ in range(int(rng.integers(1, MAX_SHAPES + 1))):
        kind = SHAPE_KINDS[int(rng.integers(0, len(SHAPE_KINDS)))]
        x0, y0, x1, y1 = (int(v) for v in rng.integers(0, size, size=4))
        box = [min(x0, x1), min(y0, y1), max(x0, x1) + 2, max(y0, y1) + 2]
        fill = _color(rng, channels)
        if kind == "ellipse":
            draw.ellipse(box, fill=fill)
        elif kind == "rectangle":
            draw.rectangle(box, fill=fill)
        else:
            width = int(rng.integers(1, max(2, size // 8) + 1))
            draw.line([(x0, y0), (x1, y1)], fill=fill, width=width)

    data = np.asarray(img, dtype=np.float64) / 255.0
    return data[None] if channels == 1 else data.transpose(2, 0, 1)


def shapes_corpus(count: int, size: int, channels: int, rng: SeededRng) -> np.ndarray:
    """In-memory (count, channels, size, size) corpus"""
    return np.stack([draw_shapes(size, channels, rng.child(index)) for index in range(count)])


def image_filename(index: int, fmt: str) -> str:
    return f"img_{index:06d}.{fmt}"


def gen_image_dataset(count: int, size: int, channels: int, seed: int,
                      out_dir: Union[str, Path], fmt: str = "f32",
                      jobs: Optional[int] = None) -> dict:
    """
    Write a shapes corpus to disk

    Args:
        fmt: 'f32' (lossless) or 'png'
    """
    if count < 1:
        raise ArgumentError(f"Dataset needs at least one image, got {count}")
    if fmt not in ("f32", "png"):
        raise ArgumentError(f"Unknown image format {fmt}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    master = SeededRng(seed)

    def make(index: int) -> None:
        image = draw_shapes(size, channels, master.child(index))
        target = out_dir / image_filename(index, fmt)
        if fmt == "png":
            write_png(image, target)
        else:
            write_f32(image, target)

    logger.info("Drawing %d %dx%d shapes images into %s", count, size, size, out_dir)
    TaskScheduler(jobs).map(make, range(count))

    manifest = {"kind": "shapes", "seed": seed, "count": count, "size": size,
                "channels": channels, "format": fmt}
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_image_dataset(directory: Union[str, Path]) -> np.ndarray:
    """
    Load an image dataset directory as (N, c, h, w)

    With a manifest the listed files are read in index order; without one every
    .f32/.png file is read in name order (external datasets).
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"Image dataset directory not found: {directory}")
    manifest_path = directory / MANIFEST_NAME
    if manifest_path.exists():
        try:
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as e:
            raise FormatError(f"Invalid image manifest: {e.msg}", offset=e.pos)
        channels = manifest.get("channels")
        size = manifest.get("size")
        files = [directory / image_filename(i, manifest.get("format", "f32")) for i in range(manifest["count"])]
    else:
        channels, size = None, None
        files = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".f32", ".png"))
    if not files:
        raise ConfigError(f"No images in {directory}")

    images = []
    for path in files:
        image = read_image(path, channels)
        if size is not None and image.shape[-2:] != (size, size):
            raise FormatError(f"{path.name} has extent {image.shape[-2:]}, manifest says {size}", offset=0)
        images.append(image)
    shapes = {image.shape for image in images}
    if len(shapes) != 1:
        raise FormatError(f"Images in {directory} have mixed shapes {sorted(shapes)}", offset=0)
    return np.stack(images)
