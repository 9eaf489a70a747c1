"""
Variational autoencoder objective

The encoder trunk feeds two fully connected heads (mean and log-variance);
the decoder maps latents back to the data shape. elbo_loss returns the
negative ELBO averaged over the batch together with exact gradients for
every encoder, head and decoder parameter.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from src.modules.generators.architectures import VaeArchitecture
from src.modules.generators.network import (
    ForwardTape,
    WeightStore,
    final_activation,
    forward,
    init_weights,
    vjp,
)
from src.modules.numerics.random_streams import SeededRng
from src.shared.errors import ArgumentError, DimensionError

logger = logging.getLogger(__name__)

PARTS = ("encoder", "mu_head", "logvar_head", "decoder")
BCE_CLIP = 1e-12


@dataclass
class VaeWeights:
    """One WeightStore per VAE part"""

    encoder: WeightStore
    mu_head: WeightStore
    logvar_head: WeightStore
    decoder: WeightStore

    def stores(self) -> Dict[str, WeightStore]:
        return {part: getattr(self, part) for part in PARTS}

    def flatten(self) -> Dict[tuple, np.ndarray]:
        """(part, layer, name) -> trainable array"""
        flat = {}
        for part, store in self.stores().items():
            for (index, name), value in store.items(trainable_only=True):
                flat[(part, index, name)] = value
        return flat

    def with_flat(self, flat: Dict[tuple, np.ndarray]) -> "VaeWeights":
        updates: Dict[str, dict] = {part: {} for part in PARTS}
        for (part, index, name), value in flat.items():
            updates[part][(index, name)] = value
        return VaeWeights(**{part: store.replace(updates[part]) for part, store in self.stores().items()})

    def with_mode(self, training: bool) -> "VaeWeights":
        return VaeWeights(**{part: store.with_mode(training) for part, store in self.stores().items()})


@dataclass(frozen=True)
class ElboBreakdown:
    recon: float
    kl: float
    total: float
    batch_size: int


@dataclass
class ElboPass:
    """Everything one ELBO evaluation produced"""

    breakdown: ElboBreakdown
    grads: VaeWeights
    encoder_tape: ForwardTape
    decoder_tape: ForwardTape


def init_vae_weights(vae: VaeArchitecture, rng: SeededRng, scheme: str = "uniform_fan_in") -> VaeWeights:
    return VaeWeights(
        encoder=init_weights(vae.encoder, scheme, rng.child(0)),
        mu_head=init_weights(vae.mu_head, scheme, rng.child(1)),
        logvar_head=init_weights(vae.logvar_head, scheme, rng.child(2)),
        decoder=init_weights(vae.decoder, scheme, rng.child(3)),
    )


def _encode_batch(vae: VaeArchitecture, weights: VaeWeights, batch: np.ndarray):
    features, encoder_tape = forward(vae.encoder, weights.encoder, batch)
    flat = features.reshape(features.shape[0], -1)
    mu, mu_tape = forward(vae.mu_head, weights.mu_head, flat)
    logvar, logvar_tape = forward(vae.logvar_head, weights.logvar_head, flat)
    return mu, logvar, (features.shape, encoder_tape, mu_tape, logvar_tape)


def encode(vae: VaeArchitecture, weights: VaeWeights, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior mean and log-variance for one input or a batch"""
    x = np.asarray(x, dtype=np.float64)
    in_shape = vae.encoder.in_shape
    if x.shape == in_shape:
        mu, logvar, _ = _encode_batch(vae, weights, x[None])
        return mu[0], logvar[0]
    if x.shape[1:] != in_shape:
        raise DimensionError(f"Encoder expects {in_shape}, got {x.shape}")
    mu, logvar, _ = _encode_batch(vae, weights, x)
    return mu, logvar


def reparameterize(mu: np.ndarray, logvar: np.ndarray, rng: Optional[SeededRng] = None,
                   eps: Optional[np.ndarray] = None) -> np.ndarray:
    """z = mu + exp(logvar / 2) * eps with eps ~ N(0, I) drawn from rng unless given"""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise DimensionError(f"mu {mu.shape} and logvar {logvar.shape} differ")
    if eps is None:
        if rng is None:
            raise ArgumentError("reparameterize needs an rng or an explicit eps")
        eps = rng.standard_normal(mu.shape)
    return mu + np.exp(0.5 * logvar) * eps


def kl_gaussian(mu: np.ndarray, logvar: np.ndarray) -> float:
    """KL(N(mu, exp(logvar)) || N(0, I)), summed over every coordinate"""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise DimensionError(f"mu {mu.shape} and logvar {logvar.shape} differ")
    # expm1(lv) - lv stays >= 0 in floating point where exp(lv) - lv - 1 can round below 0
    return float(0.5 * np.sum(mu ** 2 + (np.expm1(logvar) - logvar)))


def reconstruction_loss(decoder_kind: Optional[str], recon: np.ndarray,
                        target: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Batch-averaged reconstruction term and its gradient w.r.t. recon

    Sigmoid decoders use binary cross-entropy; everything else uses the sum of
    squared errors (mean squared error times the pixel count).
    """
    batch = recon.shape[0]
    if decoder_kind == "sigmoid":
        p = np.clip(recon, BCE_CLIP, 1.0 - BCE_CLIP)
        loss = -np.sum(target * np.log(p) + (1.0 - target) * np.log1p(-p)) / batch
        grad = (p - target) / (p * (1.0 - p)) / batch
        return float(loss), grad
    diff = recon - target
    return float(np.sum(diff ** 2) / batch), 2.0 * diff / batch


def elbo_pass(vae: VaeArchitecture, weights: VaeWeights, batch: np.ndarray,
              rng: Optional[SeededRng] = None, eps: Optional[np.ndarray] = None) -> ElboPass:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == len(vae.encoder.in_shape):
        batch = batch[None]
    if batch.shape[0] == 0:
        raise ArgumentError("ELBO needs a nonempty batch")
    if batch.shape[1:] != vae.encoder.in_shape:
        raise DimensionError(f"Encoder expects {vae.encoder.in_shape}, got {batch.shape[1:]}")
    if vae.decoder.output_shape != vae.encoder.in_shape:
        raise DimensionError(
            f"Decoder output {vae.decoder.output_shape} does not match encoder input {vae.encoder.in_shape}")
    size = batch.shape[0]

    mu, logvar, (feature_shape, encoder_tape, mu_tape, logvar_tape) = _encode_batch(vae, weights, batch)
    if eps is None:
        if rng is None:
            raise ArgumentError("elbo_loss needs an rng or an explicit eps")
        eps = rng.standard_normal(mu.shape)
    eps = np.asarray(eps, dtype=np.float64).reshape(mu.shape)
    sigma = np.exp(0.5 * logvar)
    z = mu + sigma * eps

    recon, decoder_tape = forward(vae.decoder, weights.decoder, z)
    recon_loss, grad_recon = reconstruction_loss(final_activation(vae.decoder), recon, batch)
    kl = kl_gaussian(mu, logvar) / size

    grad_z, decoder_grads = vjp(vae.decoder, weights.decoder, decoder_tape, grad_recon)
    grad_mu = grad_z + mu / size
    grad_logvar = grad_z * eps * 0.5 * sigma + 0.5 * np.expm1(logvar) / size

    grad_flat_mu, mu_grads = vjp(vae.mu_head, weights.mu_head, mu_tape, grad_mu)
    grad_flat_lv, logvar_grads = vjp(vae.logvar_head, weights.logvar_head, logvar_tape, grad_logvar)
    grad_features = (grad_flat_mu + grad_flat_lv).reshape(feature_shape)
    _, encoder_grads = vjp(vae.encoder, weights.encoder, encoder_tape, grad_features)

    breakdown = ElboBreakdown(recon=recon_loss, kl=kl, total=recon_loss + kl, batch_size=size)
    grads = VaeWeights(encoder=encoder_grads, mu_head=mu_grads, logvar_head=logvar_grads,
                       decoder=decoder_grads)
    return ElboPass(breakdown, grads, encoder_tape, decoder_tape)


def elbo_loss(vae: VaeArchitecture, weights: VaeWeights, batch: np.ndarray,
              rng: Optional[SeededRng] = None,
              eps: Optional[np.ndarray] = None) -> Tuple[ElboBreakdown, VaeWeights]:
    """
    Negative ELBO of a batch and its gradients

    Args:
        batch: (B, *input_shape) or a single input
        rng: stream for the reparameterization noise (one draw per example)
        eps: explicit noise of shape (B, latent_dim), used instead of rng
    """
    result = elbo_pass(vae, weights, batch, rng, eps)
    return result.breakdown, result.grads
