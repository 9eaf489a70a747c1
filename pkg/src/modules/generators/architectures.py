"""
Network builders for the blur and image generators

Full-scale builders match the paper64 preset (blur kernels on a 29 x 29
canvas, 32 x 32 x 3 house-number images). Desk-scale builders keep
the same layer pattern with fewer channels (blur canvas 15, 32 x 32 images).
The untrained decoder is the deep-image-prior style network fitted from
scratch in the untrained-prior algorithm.
"""

from dataclasses import dataclass
from typing import Tuple

from src.modules.generators import layers as L
from src.modules.generators.layers import NetworkSpec, build_network
from src.shared.errors import ArgumentError, DimensionError


@dataclass(frozen=True)
class VaeArchitecture:
    """Encoder trunk, the two latent heads and the decoder of one VAE"""

    encoder: NetworkSpec
    mu_head: NetworkSpec
    logvar_head: NetworkSpec
    decoder: NetworkSpec

    @property
    def latent_dim(self) -> int:
        return self.decoder.input_dim


def _heads(trunk: NetworkSpec, latent_dim: int) -> Tuple[NetworkSpec, NetworkSpec]:
    features = 1
    for extent in trunk.output_shape:
        features *= extent
    mu = build_network([L.fc(latent_dim)], input_dim=features)
    logvar = build_network([L.fc(latent_dim)], input_dim=features)
    return mu, logvar


def _vae(encoder_layers, input_shape, decoder_layers, latent_dim) -> VaeArchitecture:
    trunk = build_network(encoder_layers, input_shape=input_shape)
    mu, logvar = _heads(trunk, latent_dim)
    decoder = build_network(decoder_layers, input_dim=latent_dim)
    return VaeArchitecture(encoder=trunk, mu_head=mu, logvar_head=logvar, decoder=decoder)


def full_blur_vae(latent_dim: int = 50) -> VaeArchitecture:
    """
    Blur VAE on a 29 x 29 canvas: fc(720) -> (20, 6, 6) -> ... -> (1, 29, 29)

    The last transposed convolution is 3 x 3 so the canvas comes out odd.
    """
    encoder = [
        L.conv(20, 2, 1), L.relu(), L.max_pool(2, 2),
        L.conv(20, 2, 1), L.relu(), L.max_pool(2, 2),
    ]
    decoder = [
        L.fc(720), L.relu(), L.reshape(20, 6, 6),
        L.upsample(2), L.conv_t(20, 2, 1), L.relu(),
        L.upsample(2), L.conv_t(20, 2, 1), L.relu(),
        L.conv_t(1, 3, 1), L.relu(),
    ]
    return _vae(encoder, (1, 29, 29), decoder, latent_dim)


def full_svhn_vae(latent_dim: int = 100) -> VaeArchitecture:
    """Image VAE for 32 x 32 x 3 inputs: fc(8192) -> (512, 4, 4) -> ... -> sigmoid"""
    encoder = [
        L.conv(128, 2, 2), L.batch_norm(128), L.relu(),
        L.conv(256, 2, 2), L.batch_norm(256), L.relu(),
        L.conv(512, 2, 2), L.batch_norm(512), L.relu(),
    ]
    decoder = [
        L.fc(8192), L.reshape(512, 4, 4),
        L.conv_t(512, 2, 2), L.batch_norm(512), L.relu(),
        L.conv_t(256, 2, 2), L.batch_norm(256), L.relu(),
        L.conv_t(128, 2, 2), L.batch_norm(128), L.relu(),
        L.conv(3, 1, 1), L.sigmoid(),
    ]
    return _vae(encoder, (3, 32, 32), decoder, latent_dim)


def desk_blur_vae(latent_dim: int = 16, canvas: int = 15, width: int = 20) -> VaeArchitecture:
    """
    Blur VAE for small canvases (canvas = 4m + 3, e.g. 15)

    Decoder: fc -> (width, m, m) -> upsample -> convT(2) -> upsample -> convT(2)
    -> conv(1, 1x1) -> relu, which lands exactly on the canvas.
    """
    if canvas % 4 != 3 or canvas < 7:
        raise ArgumentError(f"Desk blur canvas must be 4m + 3 with m >= 1, got {canvas}")
    base = (canvas - 3) // 4
    encoder = [
        L.conv(width, 2, 1), L.relu(), L.max_pool(2, 2),
        L.conv(width, 2, 1), L.relu(), L.max_pool(2, 2),
    ]
    decoder = [
        L.fc(width * base * base), L.relu(), L.reshape(width, base, base),
        L.upsample(2), L.conv_t(width, 2, 1), L.relu(),
        L.upsample(2), L.conv_t(width, 2, 1), L.relu(),
        L.conv(1, 1, 1), L.relu(),
    ]
    return _vae(encoder, (1, canvas, canvas), decoder, latent_dim)


def desk_image_vae(latent_dim: int = 16, size: int = 32, channels: int = 1,
                   width: int = 16) -> VaeArchitecture:
    """Image VAE following the house-number layout with `width` base channels"""
    if size % 8 != 0:
        raise ArgumentError(f"Image size must be a multiple of 8, got {size}")
    base = size // 8
    encoder = [
        L.conv(width, 2, 2), L.batch_norm(width), L.relu(),
        L.conv(2 * width, 2, 2), L.batch_norm(2 * width), L.relu(),
        L.conv(4 * width, 2, 2), L.batch_norm(4 * width), L.relu(),
    ]
    decoder = [
        L.fc(4 * width * base * base), L.reshape(4 * width, base, base),
        L.conv_t(4 * width, 2, 2), L.batch_norm(4 * width), L.relu(),
        L.conv_t(2 * width, 2, 2), L.batch_norm(2 * width), L.relu(),
        L.conv_t(width, 2, 2), L.batch_norm(width), L.relu(),
        L.conv(channels, 1, 1), L.sigmoid(),
    ]
    return _vae(encoder, (channels, size, size), decoder, latent_dim)


def untrained_image_net(shape: Tuple[int, int, int] = (3, 64, 64), latent_dim: int = 32,
                        width: int = 16) -> NetworkSpec:
    """Decoder fitted to a single observation: fc -> (width, h/8, w/8) -> 3 x [up, conv3, relu] -> sigmoid"""
    channels, height, width_px = shape
    if height % 8 or width_px % 8:
        raise ArgumentError(f"Image extent must be a multiple of 8, got {shape}")
    bh, bw = height // 8, width_px // 8
    layers = [L.fc(width * bh * bw), L.reshape(width, bh, bw)]
    for _ in range(3):
        layers += [L.upsample(2), L.conv(width, 3, 1, padding=1), L.relu()]
    layers += [L.conv(channels, 1, 1), L.sigmoid()]
    return build_network(layers, input_dim=latent_dim)


def _fixed_input(vae: VaeArchitecture, shape: Tuple[int, int, int], what: str) -> VaeArchitecture:
    if tuple(vae.decoder.output_shape) != tuple(shape):
        raise DimensionError(f"paper64 {what} VAE works on {vae.decoder.output_shape}, the dataset holds {shape}")
    return vae


def blur_vae_for(preset: str, latent_dim: int, canvas: int) -> VaeArchitecture:
    if preset == "paper64":
        return _fixed_input(full_blur_vae(latent_dim), (1, canvas, canvas), "blur")
    return desk_blur_vae(latent_dim, canvas)


def image_vae_for(preset: str, latent_dim: int, size: int, channels: int) -> VaeArchitecture:
    if preset == "paper64":
        return _fixed_input(full_svhn_vae(latent_dim), (channels, size, size), "image")
    return desk_image_vae(latent_dim, size, channels)
