"""
Experiment sweeps

A sweep runs one or more deblurring algorithms over a grid of one varied
quantity (noise level, blur length, restart count or image-generator latent
length) on a seeded problem suite, and writes one CSV row per
(grid value, image, algorithm) plus per-grid aggregates.

Suite image j always draws from child stream j of the sweep seed, so the same
image, kernel and noise pattern are reused at every grid value.
"""

import json
import logging
import math
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from tqdm import tqdm

from src.modules.blur.blur_dataset_service import load_blur_dataset
from src.modules.blur.kernels import TrajectoryParams, blur_image, motion_kernel
from src.modules.deblur.deblur_service import SOLVERS, project_to_range, renormalize_estimate
from src.modules.deblur.problem import DeblurProblem, GeneratorHandle, NaiveConfig
from src.modules.evaluation.metrics import psnr, range_error, ssim
from src.modules.generators.architectures import untrained_image_net
from src.modules.numerics.random_streams import SeededRng
from src.modules.scheduler.task_scheduler import TaskScheduler
from src.modules.training.shapes_corpus import draw_shapes, load_image_dataset
from src.shared.errors import ArgumentError, ConfigError, FormatError, NumericError
from src.shared.run_log import RunConfig, RunLogService
from src.shared.run_log_enhancer import RunLogEnhancer

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("sweep_kind", "grid_value", "image_id", "algorithm",
               "psnr_db", "ssim", "measurement_loss", "range_error", "seconds")
SWEEP_CSV = "sweep.csv"
SUMMARY_NAME = "summary.json"

# child streams of one suite image
IMAGE_STREAM, KERNEL_STREAM, NOISE_STREAM, LATENT_STREAM, SOLVER_STREAM, PROJECTION_STREAM = range(6)

GENERATOR_ALGORITHMS = ("naive", "gen", "hybrid")
BLUR_ALGORITHMS = ("gen", "hybrid", "untrained")


class SuiteSpec(BaseModel):
    """
    Problem suite

    kind:
        test: y blurs a test image
        sample: y blurs G_I(z) with z ~ N(0, I)
        range: y blurs the projection of a test image onto the range of G_I
    """

    kind: Literal["test", "sample", "range"] = "test"
    count: int = Field(default=20, ge=1)
    images_dir: Optional[str] = None
    image_size: int = Field(default=32, ge=1)
    channels: Literal[1, 3] = 1
    blur_dataset: Optional[str] = None
    kernel_size: int = Field(default=15, ge=1)
    trajectory: TrajectoryParams = Field(default_factory=TrajectoryParams)
    noise_sigma: float = Field(default=0.01, ge=0)
    projection: NaiveConfig = Field(default_factory=lambda: NaiveConfig(restarts=3, steps=1000))

    @field_validator("kernel_size")
    @classmethod
    def _odd_kernel(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("kernel_size must be odd")
        return value


class SweepSpec(BaseModel):
    kind: Literal["noise", "blur_size", "restarts", "latent_dim"]
    grid: List[float] = Field(min_length=1)
    suite: SuiteSpec = Field(default_factory=SuiteSpec)
    algorithms: List[str] = Field(default_factory=lambda: ["gen"], min_length=1)
    image_model: Optional[str] = None
    blur_model: Optional[str] = None
    untrained_latent_dim: int = Field(default=32, ge=1)
    untrained_width: int = Field(default=16, ge=1)
    config: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    renormalize: bool = False
    seed: int = Field(default=0, ge=0)

    @field_validator("algorithms")
    @classmethod
    def _known_algorithms(cls, value: List[str]) -> List[str]:
        unknown = [name for name in value if name not in SOLVERS]
        if unknown:
            raise ValueError(f"unknown algorithms {unknown}; choose from {list(SOLVERS)}")
        return value

    @model_validator(mode="after")
    def _check_grid(self):
        for value in self.grid:
            if not math.isfinite(value):
                raise ValueError(f"grid value {value} is not finite")
            if self.kind == "noise" and value < 0:
                raise ValueError(f"noise level {value} is negative")
            if self.kind == "blur_size" and value <= 0:
                raise ValueError(f"blur length {value} must be positive")
            if self.kind in ("restarts", "latent_dim") and (value < 1 or value != int(value)):
                raise ValueError(f"{self.kind} grid value {value} must be a positive integer")
        if self.kind == "blur_size":
            for value in self.grid:
                try:
                    TrajectoryParams(length_min=value, length_max=value).check_canvas(self.suite.kernel_size)
                except ArgumentError as e:
                    raise ValueError(str(e))
        if self.kind == "latent_dim" and "{value}" not in (self.image_model or ""):
            raise ValueError("a latent_dim sweep needs an image_model path containing {value}")
        return self

    @classmethod
    def from_options(cls, **options) -> "SweepSpec":
        try:
            return cls(**{key: value for key, value in options.items() if value is not None})
        except ValidationError as e:
            raise ConfigError(f"Invalid sweep spec: {e}")

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "SweepSpec":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Sweep spec not found: {path}")
        try:
            options = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise FormatError(f"Invalid sweep spec {path.name}: {e.msg}", offset=e.pos)
        return cls.from_options(**options)

    def grid_label(self, value: float):
        """Grid value as written to the CSV: integers for integer-valued kinds"""
        return int(value) if self.kind in ("restarts", "latent_dim") else float(value)

    def image_model_for(self, value: float) -> Optional[str]:
        if self.image_model is None:
            return None
        return self.image_model.replace("{value}", str(int(value))) if self.kind == "latent_dim" \
            else self.image_model

    def needs_image_model(self) -> bool:
        return self.suite.kind in ("sample", "range") or any(a in GENERATOR_ALGORITHMS for a in self.algorithms)

    def needs_blur_model(self) -> bool:
        return any(a in BLUR_ALGORITHMS for a in self.algorithms)


@dataclass
class SuiteImage:
    """One suite problem: the image that produced y, and the test image it came from"""

    image_id: int
    truth: np.ndarray
    kernel: np.ndarray
    y: np.ndarray
    test_image: Optional[np.ndarray] = None


@dataclass
class SweepOutcome:
    rows: List[Dict[str, Any]] = field(default_factory=list)
    summary: List[Dict[str, Any]] = field(default_factory=list)
    csv_path: Optional[Path] = None


class SweepService:
    """Runs a SweepSpec; handles and datasets are loaded once and shared across cells"""

    def __init__(self, spec: SweepSpec, jobs: Optional[int] = None):
        self.spec = spec
        self.jobs = jobs
        self.master = SeededRng(spec.seed)
        self._handles: Dict[str, GeneratorHandle] = {}
        self._test_images: Optional[np.ndarray] = None
        self._test_kernels: Optional[np.ndarray] = None

    def validate(self) -> None:
        """Check every referenced model and dataset before the first run"""
        spec = self.spec
        missing = []
        if spec.needs_image_model():
            if spec.image_model is None:
                raise ConfigError(f"Sweep over {spec.algorithms} on a {spec.suite.kind} suite needs an image_model")
            missing += [path for path in {spec.image_model_for(v) for v in spec.grid} if not Path(path).exists()]
        if spec.needs_blur_model():
            if spec.blur_model is None:
                raise ConfigError(f"Sweep over {spec.algorithms} needs a blur_model")
            if not Path(spec.blur_model).exists():
                missing.append(spec.blur_model)
        for directory in (spec.suite.images_dir, spec.suite.blur_dataset):
            if directory is not None and not Path(directory).is_dir():
                missing.append(directory)
        if missing:
            raise ConfigError(f"Missing sweep inputs: {', '.join(sorted(missing))}")

        if spec.suite.images_dir is not None:
            images = load_image_dataset(spec.suite.images_dir)
            if len(images) < spec.suite.count:
                raise ConfigError(f"{spec.suite.images_dir} holds {len(images)} images, suite needs {spec.suite.count}")
            self._test_images = images[:spec.suite.count]
        if spec.suite.blur_dataset is not None:
            self._test_kernels = load_blur_dataset(spec.suite.blur_dataset, split="test")[:, 0]
            if len(self._test_kernels) == 0:
                raise ConfigError(f"{spec.suite.blur_dataset} has an empty test split")

        for path in sorted({spec.image_model_for(v) for v in spec.grid} if spec.needs_image_model() else []):
            self._handle(path)
        if spec.needs_blur_model():
            self._handle(spec.blur_model)

    def _handle(self, path: str) -> GeneratorHandle:
        if path not in self._handles:
            self._handles[path] = GeneratorHandle.from_file(path)
        return self._handles[path]

    def _test_image(self, index: int, rng: SeededRng) -> np.ndarray:
        if self._test_images is not None:
            return self._test_images[index]
        suite = self.spec.suite
        return draw_shapes(suite.image_size, suite.channels, rng.child(IMAGE_STREAM))

    def _kernel(self, index: int, value: float, rng: SeededRng) -> np.ndarray:
        suite = self.spec.suite
        if self.spec.kind == "blur_size":
            params = suite.trajectory.model_copy(update={"length_min": value, "length_max": value})
            return motion_kernel(params, suite.kernel_size, rng.child(KERNEL_STREAM)).values
        if self._test_kernels is not None:
            return self._test_kernels[index % len(self._test_kernels)]
        return motion_kernel(suite.trajectory, suite.kernel_size, rng.child(KERNEL_STREAM)).values

    def suite_image(self, index: int, value: float) -> SuiteImage:
        spec, suite = self.spec, self.spec.suite
        rng = self.master.child(index)
        test_image = None
        if suite.kind == "sample":
            handle = self._handle(spec.image_model_for(value))
            truth = handle.sample(rng.child(LATENT_STREAM).standard_normal(handle.latent_dim))
        else:
            test_image = self._test_image(index, rng)
            truth = test_image
            if suite.kind == "range":
                projection = suite.projection.model_copy(
                    update={"seed": rng.child_seed(PROJECTION_STREAM)})
                _, truth = project_to_range(self._handle(spec.image_model_for(value)), test_image,
                                            projection, jobs=1)
        kernel = self._kernel(index, value, rng)
        sigma = value if spec.kind == "noise" else suite.noise_sigma
        y = blur_image(truth, kernel, sigma, rng.child(NOISE_STREAM))
        return SuiteImage(image_id=index, truth=truth, kernel=kernel, y=y, test_image=test_image)

    def _problem(self, algorithm: str, item: SuiteImage, value: float) -> DeblurProblem:
        spec = self.spec
        sigma = value if spec.kind == "noise" else spec.suite.noise_sigma
        options: Dict[str, Any] = {"noise_sigma": sigma}
        if algorithm in BLUR_ALGORITHMS:
            options["blur_generator"] = self._handle(spec.blur_model)
        if algorithm in GENERATOR_ALGORITHMS:
            options["image_generator"] = self._handle(spec.image_model_for(value))
        if algorithm == "untrained":
            options["untrained_image_spec"] = untrained_image_net(
                item.y.shape, spec.untrained_latent_dim, spec.untrained_width)
        return DeblurProblem(item.y, **options)

    def _config(self, algorithm: str, index: int, value: float):
        config_cls = SOLVERS[algorithm][0]
        options = dict(self.spec.config.get(algorithm, {}))
        options.setdefault("seed", self.master.child(index).child_seed(SOLVER_STREAM))
        if self.spec.kind == "restarts":
            options["restarts"] = int(value)
        return config_cls.from_options(**options)

    def run_cell(self, value: float, index: int) -> List[Dict[str, Any]]:
        """Rows of every algorithm on suite image `index` at grid value `value`"""
        spec = self.spec
        item = self.suite_image(index, value)
        gap = range_error(item.test_image, item.truth) \
            if spec.suite.kind == "range" else float("nan")
        rows = []
        for algorithm in spec.algorithms:
            started = time.perf_counter()
            row = {"sweep_kind": spec.kind, "grid_value": spec.grid_label(value), "image_id": index,
                   "algorithm": algorithm, "range_error": gap}
            try:
                result = SOLVERS[algorithm][1](self._problem(algorithm, item, value),
                                               self._config(algorithm, index, value), 1)
                estimate = result.image
                if spec.renormalize and result.kernel is not None:
                    estimate, _ = renormalize_estimate(result.image, result.kernel)
                row.update(psnr_db=psnr(estimate, item.truth), ssim=ssim(estimate, item.truth),
                           measurement_loss=result.measurement_loss)
            except NumericError as e:
                logger.warning("Sweep cell %s=%s image %d %s failed: %s",
                               spec.kind, value, index, algorithm, e)
                row.update(psnr_db=float("nan"), ssim=float("nan"), measurement_loss=float("nan"))
            row["seconds"] = time.perf_counter() - started
            rows.append(row)
        return rows

    def run(self) -> SweepOutcome:
        self.validate()
        spec = self.spec
        cells = [(value, index) for value in spec.grid for index in range(spec.suite.count)]
        logger.info("Sweeping %s over %s on %d %s images with %s (%d cells)",
                    spec.kind, spec.grid, spec.suite.count, spec.suite.kind, spec.algorithms, len(cells))

        with tqdm(total=len(cells), desc=f"sweep {spec.kind}", unit="cell", disable=None) as bar:
            def task(cell: Tuple[float, int]) -> List[Dict[str, Any]]:
                rows = self.run_cell(*cell)
                bar.update(1)
                return rows

            per_cell = TaskScheduler(self.jobs).map(task, cells)

        rows = [row for cell_rows in per_cell for row in cell_rows]
        metrics = ["psnr_db", "ssim", "measurement_loss", "seconds"]
        if spec.suite.kind == "range":
            metrics.append("range_error")
        return SweepOutcome(rows=rows, summary=RunLogEnhancer.get_sweep_statistics(rows, metrics))


def run_sweep(spec: SweepSpec, out_dir: Union[str, Path], jobs: Optional[int] = None) -> SweepOutcome:
    """Run a sweep and write sweep.csv, summary.json, config.json and result.json into out_dir"""
    run_log = RunLogService(out_dir, "sweep")
    run_log.create_log(RunConfig(
        subcommand="sweep", out_dir=str(out_dir), seed=spec.seed,
        paths={"image_model": spec.image_model, "blur_model": spec.blur_model,
               "images_dir": spec.suite.images_dir, "blur_dataset": spec.suite.blur_dataset},
        hyperparameters=spec.model_dump(),
    ))
    try:
        outcome = SweepService(spec, jobs).run()
    except Exception as e:
        run_log.update_log(status="failed", error_message=str(e))
        raise

    outcome.csv_path = run_log.write_trace(
        CSV_COLUMNS, ([row[column] for column in CSV_COLUMNS] for row in outcome.rows),
        name=SWEEP_CSV, comment=f"generated {datetime.now().isoformat()}")
    (run_log.out_dir / SUMMARY_NAME).write_text(json.dumps(outcome.summary, indent=2) + "\n")
    failures = sum(1 for row in outcome.rows if math.isnan(row["psnr_db"]))
    run_log.update_log(status="completed", message=f"{len(outcome.rows)} rows, {failures} failed",
                       sweep_kind=spec.kind, rows=len(outcome.rows), failures=failures)
    logger.info("Sweep finished: %d rows written to %s", len(outcome.rows), outcome.csv_path)
    return outcome
