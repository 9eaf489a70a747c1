"""
Deblurring problem, solver configs and results

Configs are pydantic models with the reference settings as defaults
(gen: lambda = gamma = 0.01, 6000 steps, eta(t) = 0.01 exp(-t/1000);
hybrid: tau = 100, zeta = 0.5, rho = 1e-3, 10000 Adam steps at 0.005;
untrained: 400 init steps at 1e-3, then 20000 steps with learning rates
1e-3 / 1e-3 / 1e-4 for z_i / z_k / W).
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.modules.generators.layers import NetworkSpec
from src.modules.generators.network import ForwardTape, WeightStore, check_weights, forward
from src.modules.generators.weight_file import load_weights
from src.shared.errors import ConfigError, DimensionError

C = TypeVar("C", bound=BaseModel)

TRACE_COLUMNS = ("iteration", "total_loss", "measurement_loss", "step_size")


@dataclass(frozen=True)
class GeneratorHandle:
    """A network with fixed weights, evaluated in inference mode"""

    spec: NetworkSpec
    weights: WeightStore

    def __post_init__(self):
        check_weights(self.spec, self.weights)
        object.__setattr__(self, "weights", self.weights.with_mode(False))

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "GeneratorHandle":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Model file not found: {path}")
        spec, weights = load_weights(path)
        return cls(spec, weights)

    @property
    def latent_dim(self) -> int:
        return self.spec.input_dim

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return tuple(self.spec.output_shape)

    def generate(self, z: np.ndarray) -> Tuple[np.ndarray, ForwardTape]:
        return forward(self.spec, self.weights, z)

    def sample(self, z: np.ndarray) -> np.ndarray:
        return self.generate(z)[0]


def kernel_of(blur_output: np.ndarray) -> np.ndarray:
    """(1, s, s) blur-generator output as an (s, s) kernel"""
    blur_output = np.asarray(blur_output)
    return blur_output[0] if blur_output.ndim == 3 else blur_output


@dataclass
class DeblurProblem:
    """
    One blind deconvolution instance

    Args:
        y: observation, (c, h, w)
        image_generator: pretrained G_I (naive, gen, hybrid)
        blur_generator: pretrained G_K emitting (1, s, s) or (s, s)
        untrained_image_spec: network fitted from scratch by the untrained solver
        noise_sigma: informational noise estimate
    """

    y: np.ndarray
    blur_generator: Optional[GeneratorHandle] = None
    image_generator: Optional[GeneratorHandle] = None
    untrained_image_spec: Optional[NetworkSpec] = None
    noise_sigma: float = 0.0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim == 2:
            y = y[None]
        if y.ndim != 3 or y.shape[0] not in (1, 3):
            raise DimensionError(f"Observation must be (c, h, w) with c in {{1, 3}}, got {y.shape}")
        if not np.all(np.isfinite(y)):
            raise DimensionError("Observation contains non-finite values")
        self.y = y
        for name, spec in (("image generator", self.image_generator and self.image_generator.spec),
                           ("untrained image network", self.untrained_image_spec)):
            if spec is not None and tuple(spec.output_shape) != y.shape:
                raise DimensionError(f"The {name} emits {tuple(spec.output_shape)}, observation is {y.shape}")
        if self.blur_generator is not None:
            shape = self.blur_generator.output_shape
            if len(shape) == 3 and shape[0] == 1:
                shape = shape[1:]
            if len(shape) != 2 or shape[0] != shape[1] or shape[0] % 2 == 0:
                raise DimensionError(f"Blur generator must emit an odd square kernel, got {shape}")
            if shape[0] > min(y.shape[1:]):
                raise DimensionError(f"Kernel {shape} does not fit on an observation of {y.shape}")

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.y.shape)

    @property
    def kernel_size(self) -> int:
        return self.blur_generator.output_shape[-1]

    def require(self, *names: str) -> None:
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise ConfigError(f"Deblur problem is missing {', '.join(missing)}")


class SolverConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    restarts: int = Field(default=10, ge=1)
    seed: int = Field(default=0, ge=0)

    @classmethod
    def from_options(cls: Type[C], **options) -> C:
        """Build from CLI/JSON options; None values fall back to the defaults"""
        try:
            return cls(**{key: value for key, value in options.items() if value is not None})
        except ValidationError as e:
            raise ConfigError(f"Invalid {cls.__name__}: {e}")


class NaiveConfig(SolverConfig):
    """Back-projection onto the image range (also used for range projection)"""

    steps: int = Field(default=6000, ge=0)
    lr: float = Field(default=0.01, gt=0)


class Alg1Config(SolverConfig):
    lam: float = Field(default=0.01, ge=0, alias="lambda")
    gamma: float = Field(default=0.01, ge=0)
    steps: int = Field(default=6000, ge=0)
    eta0: float = Field(default=0.01, gt=0)
    decay: float = Field(default=1000.0, gt=0)
    debug: bool = False

    def step_size(self, t: int) -> float:
        return self.eta0 * math.exp(-t / self.decay)


class Alg2Config(SolverConfig):
    tau: float = Field(default=100.0, ge=0)
    zeta: float = Field(default=0.5, ge=0)
    rho: float = Field(default=1e-3, ge=0)
    steps: int = Field(default=10000, ge=0)
    lr: float = Field(default=0.005, gt=0)


class Alg3Config(SolverConfig):
    kappa: float = Field(default=0.01, ge=0)
    nu: float = Field(default=1e-3, ge=0)
    init_steps: int = Field(default=400, ge=0)
    init_lr: float = Field(default=1e-3, gt=0)
    steps: int = Field(default=20000, ge=0)
    lr_zi: float = Field(default=1e-3, gt=0)
    lr_zk: float = Field(default=1e-3, gt=0)
    lr_w: float = Field(default=1e-4, gt=0)
    init_scheme: str = Field(default="uniform_fan_in", pattern="^(uniform_fan_in|gaussian)$")
    restarts: int = Field(default=1, ge=1)


@dataclass
class DeblurResult:
    """Outcome of one solver run, or the winner of a set of restarts"""

    algorithm: str
    image: np.ndarray
    kernel: Optional[np.ndarray]
    z_i: Optional[np.ndarray]
    z_k: Optional[np.ndarray]
    measurement_loss: float
    trace: List[Tuple[int, float, float, float]] = field(default_factory=list)
    restart_index: int = 0
    restart_losses: List[float] = field(default_factory=list)
    failed_restarts: List[int] = field(default_factory=list)
    seed: int = 0
    seconds: float = 0.0
    image_weights: Optional[WeightStore] = None
    details: Dict[str, float] = field(default_factory=dict)

    @property
    def steps_run(self) -> int:
        return len(self.trace)

    def summary(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "measurement_loss": self.measurement_loss,
            "restart_index": self.restart_index,
            "restart_losses": self.restart_losses,
            "failed_restarts": self.failed_restarts,
            "steps": self.steps_run,
            "seed": self.seed,
            "seconds": self.seconds,
            **self.details,
        }
