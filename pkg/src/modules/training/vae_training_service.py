"""
VAE training loop

Minibatch Adam on the negative ELBO. Batch order and reparameterization
noise come from child streams of the config seed, so a rerun with the same
seed, config and dataset reproduces the weights bit for bit. The decoder is
exported as a GNW generator with batch norm frozen to its running statistics.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError
from tqdm import tqdm

from src.modules.generators.architectures import VaeArchitecture
from src.modules.generators.network import apply_running_stats
from src.modules.generators.weight_file import save_weights
from src.modules.numerics.random_streams import SeededRng
from src.modules.training.adam import AdamState, adam_step
from src.modules.training.vae import PARTS, VaeWeights, elbo_pass, init_vae_weights
from src.shared.errors import ArgumentError, ConfigError, DimensionError, NumericError, TrainingDivergedError
from src.shared.run_log import write_csv

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("epoch", "recon", "kl", "total")


class TrainingConfig(BaseModel):
    epochs: int = Field(default=50, ge=1)
    batch_size: int = Field(default=32, ge=1)
    lr: float = Field(default=1e-3, gt=0)
    seed: int = Field(default=0, ge=0)
    init_scheme: str = Field(default="uniform_fan_in", pattern="^(uniform_fan_in|gaussian)$")

    @classmethod
    def from_options(cls, **options) -> "TrainingConfig":
        try:
            return cls(**{k: v for k, v in options.items() if v is not None})
        except ValidationError as e:
            raise ConfigError(f"Invalid training config: {e}")


@dataclass
class TrainingOutcome:
    weights: VaeWeights
    trace: List[Tuple[int, float, float, float]] = field(default_factory=list)
    decoder_path: Optional[Path] = None


class VaeTrainingService:
    """Trains one VAE architecture on an in-memory dataset"""

    def __init__(self, vae: VaeArchitecture, config: TrainingConfig):
        self.vae = vae
        self.config = config

    def _check_dataset(self, dataset: np.ndarray) -> np.ndarray:
        dataset = np.asarray(dataset, dtype=np.float64)
        if dataset.shape[0] == 0:
            raise ArgumentError("Training dataset is empty")
        if dataset.shape[1:] != self.vae.encoder.in_shape:
            raise DimensionError(
                f"Dataset items have shape {dataset.shape[1:]}, encoder expects {self.vae.encoder.in_shape}")
        return dataset

    def train(self, dataset: np.ndarray, weights: Optional[VaeWeights] = None) -> TrainingOutcome:
        dataset = self._check_dataset(dataset)
        config = self.config
        master = SeededRng(config.seed)
        if weights is None:
            weights = init_vae_weights(self.vae, master.child(0), config.init_scheme)
        weights = weights.with_mode(True)
        state = AdamState()
        trace: List[Tuple[int, float, float, float]] = []
        count = dataset.shape[0]

        epochs = tqdm(range(1, config.epochs + 1), desc="train-vae", unit="epoch", disable=None)
        for epoch in epochs:
            epoch_rng = master.child(1).child(epoch)
            order = epoch_rng.permutation(count)
            sums = np.zeros(3)
            for batch_index, start in enumerate(range(0, count, config.batch_size)):
                batch = dataset[order[start:start + config.batch_size]]
                try:
                    result = elbo_pass(self.vae, weights, batch, rng=epoch_rng.child(batch_index))
                except NumericError as e:
                    raise TrainingDivergedError(f"Training diverged: {str(e)}", trace, iteration=epoch)
                breakdown = result.breakdown
                if not np.isfinite(breakdown.total):
                    raise TrainingDivergedError("Training diverged: non-finite loss", trace, iteration=epoch)
                if breakdown.kl < 0:
                    logger.warning("Negative KL %.3e at epoch %d", breakdown.kl, epoch)

                try:
                    flat = adam_step(state, weights.flatten(), result.grads.flatten(), config.lr)
                except NumericError as e:
                    raise TrainingDivergedError(f"Training diverged: {str(e)}", trace, iteration=epoch)
                weights = weights.with_flat(flat)
                weights.encoder = apply_running_stats(self.vae.encoder, weights.encoder, result.encoder_tape)
                weights.decoder = apply_running_stats(self.vae.decoder, weights.decoder, result.decoder_tape)

                size = breakdown.batch_size
                sums += size * np.array([breakdown.recon, breakdown.kl, breakdown.total])

            recon, kl, total = (sums / count).tolist()
            trace.append((epoch, recon, kl, total))
            logger.info("Epoch %d/%d: recon %.5f kl %.5f total %.5f",
                        epoch, config.epochs, recon, kl, total)
            epochs.set_postfix(loss=f"{total:.4f}")

        return TrainingOutcome(weights=weights.with_mode(False), trace=trace)

    def export(self, outcome: TrainingOutcome, out_dir: Union[str, Path]) -> Path:
        """Write every part as GNW plus the loss trace; returns the decoder path"""
        out_dir = Path(out_dir)
        networks = {"encoder": self.vae.encoder, "mu_head": self.vae.mu_head,
                    "logvar_head": self.vae.logvar_head, "decoder": self.vae.decoder}
        stores = outcome.weights.with_mode(False).stores()
        for part in PARTS:
            save_weights(networks[part], stores[part], out_dir / f"{part}.gnw")
        write_csv(out_dir / "trace.csv", TRACE_COLUMNS, outcome.trace)
        outcome.decoder_path = out_dir / "decoder.gnw"
        return outcome.decoder_path


def train_vae(vae: VaeArchitecture, dataset: np.ndarray, config: TrainingConfig,
              out_dir: Optional[Union[str, Path]] = None) -> TrainingOutcome:
    """Train and, when out_dir is given, export the decoder (and the rest) as GNW files"""
    service = VaeTrainingService(vae, config)
    outcome = service.train(dataset)
    if out_dir is not None:
        service.export(outcome, out_dir)
    return outcome
