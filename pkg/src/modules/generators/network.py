"""
Forward evaluation and reverse-mode products for declarative networks

forward() records a ForwardTape with whatever each layer needs to run
backwards; vjp() replays it to get exact gradients with respect to the
latent input and every parameter. Inputs are always processed with a
leading batch axis; unbatched calls add and strip it.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from src.modules.generators.layers import LayerSpec, NetworkSpec
from src.shared.errors import ArgumentError, DimensionError, NumericError, StateError

logger = logging.getLogger(__name__)

BATCH_NORM_EPS = 1e-5
BATCH_NORM_MOMENTUM = 0.1
TRAINABLE = ("weight", "bias", "scale", "shift")
PARAMETER_ORDER = ("weight", "bias", "scale", "shift", "running_mean", "running_var")

ParamKey = Tuple[int, str]


class WeightStore:
    """Parameter arrays per layer index, plus the batch-norm mode flag"""

    def __init__(self, params: Dict[int, Dict[str, np.ndarray]], training: bool = False):
        self.params = params
        self.training = training

    def items(self, trainable_only: bool = False) -> Iterator[Tuple[ParamKey, np.ndarray]]:
        """(layer index, name) -> array in canonical file order"""
        for index in sorted(self.params):
            layer_params = self.params[index]
            for name in PARAMETER_ORDER:
                if name in layer_params and (not trainable_only or name in TRAINABLE):
                    yield (index, name), layer_params[name]

    def to_dict(self, trainable_only: bool = True) -> Dict[ParamKey, np.ndarray]:
        return {key: value for key, value in self.items(trainable_only)}

    def replace(self, updates: Dict[ParamKey, np.ndarray]) -> "WeightStore":
        """New store with the given arrays swapped in; others are shared"""
        params = {index: dict(layer) for index, layer in self.params.items()}
        for (index, name), value in updates.items():
            params[index][name] = value
        return WeightStore(params, self.training)

    def with_mode(self, training: bool) -> "WeightStore":
        return WeightStore(self.params, training)

    def copy(self) -> "WeightStore":
        params = {index: {name: value.copy() for name, value in layer.items()}
                  for index, layer in self.params.items()}
        return WeightStore(params, self.training)

    def zeros_like(self) -> "WeightStore":
        params = {index: {name: np.zeros_like(value) for name, value in layer.items()}
                  for index, layer in self.params.items()}
        return WeightStore(params, self.training)

    def parameter_count(self) -> int:
        return sum(value.size for _, value in self.items())

    def allclose(self, other: "WeightStore", **kwargs) -> bool:
        mine, theirs = self.to_dict(False), other.to_dict(False)
        return mine.keys() == theirs.keys() and all(
            np.allclose(mine[key], theirs[key], **kwargs) for key in mine)


@dataclass
class ForwardTape:
    """Per-layer records of one forward pass"""

    input_shape: Tuple[int, ...]
    batched: bool
    training: bool
    records: List[dict] = field(default_factory=list)
    output: Optional[np.ndarray] = None


def parameter_shapes(net: NetworkSpec) -> Dict[int, Dict[str, Tuple[int, ...]]]:
    """Array shapes of every parameter, derived from the spec alone"""
    shapes = net.layer_shapes()
    result: Dict[int, Dict[str, Tuple[int, ...]]] = {}
    for index, layer in enumerate(net.layers):
        in_shape = shapes[index]
        if layer.kind == "fully_connected":
            fan_in = int(np.prod(in_shape))
            result[index] = {"weight": (layer.out_dim, fan_in), "bias": (layer.out_dim,)}
        elif layer.kind == "conv2d":
            k = layer.kernel_size
            result[index] = {"weight": (layer.filters, in_shape[0], k, k), "bias": (layer.filters,)}
        elif layer.kind == "conv_transpose2d":
            k = layer.kernel_size
            result[index] = {"weight": (in_shape[0], layer.filters, k, k), "bias": (layer.filters,)}
        elif layer.kind == "batch_norm":
            c = (layer.channels,)
            result[index] = {"scale": c, "shift": c, "running_mean": c, "running_var": c}
    return result


def _fans(layer: LayerSpec, shape: Tuple[int, ...]) -> Tuple[int, int]:
    if layer.kind == "fully_connected":
        return shape[1], shape[0]
    receptive = shape[2] * shape[3]
    if layer.kind == "conv2d":
        return shape[1] * receptive, shape[0] * receptive
    return shape[0] * receptive, shape[1] * receptive


def init_weights(net: NetworkSpec, scheme: str, rng, std: float = 0.02) -> WeightStore:
    """
    Fresh parameters for a network

    Args:
        scheme: 'uniform_fan_in' (bounds +-sqrt(6 / (fan_in + fan_out))) or 'gaussian'
        rng: SeededRng used for every draw, in layer order
        std: standard deviation for the gaussian scheme
    """
    if scheme not in ("uniform_fan_in", "gaussian"):
        raise ArgumentError(f"Unknown initialization scheme {scheme}")

    params: Dict[int, Dict[str, np.ndarray]] = {}
    for index, shapes in parameter_shapes(net).items():
        layer = net.layers[index]
        if layer.kind == "batch_norm":
            params[index] = {
                "scale": np.ones(shapes["scale"]),
                "shift": np.zeros(shapes["shift"]),
                "running_mean": np.zeros(shapes["running_mean"]),
                "running_var": np.ones(shapes["running_var"]),
            }
            continue
        weight_shape = shapes["weight"]
        if scheme == "uniform_fan_in":
            fan_in, fan_out = _fans(layer, weight_shape)
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weight = rng.uniform(-bound, bound, size=weight_shape)
        else:
            weight = rng.normal(0.0, std, size=weight_shape)
        params[index] = {"weight": weight, "bias": np.zeros(shapes["bias"])}
    return WeightStore(params, training=False)


def check_weights(net: NetworkSpec, weights: WeightStore) -> None:
    expected = parameter_shapes(net)
    if sorted(expected) != sorted(weights.params):
        raise DimensionError(f"Weights cover layers {sorted(weights.params)}, network needs {sorted(expected)}")
    for index, shapes in expected.items():
        for name, shape in shapes.items():
            actual = weights.params[index].get(name)
            if actual is None or actual.shape != shape:
                got = None if actual is None else actual.shape
                raise DimensionError(f"Layer {index} {name} has shape {got}, expected {shape}")


def _windows(x: np.ndarray, size: int, stride: int) -> np.ndarray:
    """(B, C, Ho, Wo, k, k) view of strided k x k patches"""
    view = sliding_window_view(x, (size, size), axis=(2, 3))
    return view[:, :, ::stride, ::stride]


def _scatter_patches(target: np.ndarray, patches: np.ndarray, stride: int) -> None:
    """Add (B, C, Ho, Wo, k, k) patches back onto target (B, C, H, W) in place"""
    size = patches.shape[-1]
    out_h, out_w = patches.shape[2], patches.shape[3]
    for i in range(size):
        for j in range(size):
            target[:, :, i:i + stride * (out_h - 1) + 1:stride,
                   j:j + stride * (out_w - 1) + 1:stride] += patches[..., i, j]


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _unpad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return x[:, :, padding:-padding, padding:-padding]


def _layer_name(index: int, layer: LayerSpec) -> str:
    return f"{index}:{layer.describe()}"


def _forward_layer(layer: LayerSpec, params: Dict[str, np.ndarray], x: np.ndarray,
                   training: bool) -> Tuple[np.ndarray, dict]:
    kind = layer.kind
    if kind == "fully_connected":
        flat = x.reshape(x.shape[0], -1)
        out = flat @ params["weight"].T + params["bias"]
        return out, {"x": flat, "in_shape": x.shape}

    if kind == "relu":
        mask = x > 0
        return x * mask, {"mask": mask}

    if kind == "sigmoid":
        out = expit(x)
        return out, {"out": out}

    if kind == "reshape":
        return x.reshape((x.shape[0],) + tuple(layer.target_shape)), {"in_shape": x.shape}

    if kind == "upsample_nearest":
        f = layer.factor
        return np.repeat(np.repeat(x, f, axis=2), f, axis=3), {}

    if kind == "max_pool":
        windows = _windows(x, layer.size, layer.stride)
        flat = windows.reshape(windows.shape[:4] + (-1,))
        argmax = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
        return out, {"argmax": argmax, "in_shape": x.shape}

    if kind == "conv2d":
        padded = _pad(x, layer.padding)
        windows = _windows(padded, layer.kernel_size, layer.stride)
        out = np.tensordot(windows, params["weight"], axes=([1, 4, 5], [1, 2, 3]))
        out = out.transpose(0, 3, 1, 2) + params["bias"][None, :, None, None]
        return out, {"windows": windows, "padded_shape": padded.shape}

    if kind == "conv_transpose2d":
        k, s, p = layer.kernel_size, layer.stride, layer.padding
        batch, _, height, width = x.shape
        full = np.zeros((batch, layer.filters, (height - 1) * s + k, (width - 1) * s + k))
        patches = np.tensordot(x, params["weight"], axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
        _scatter_patches(full, patches, s)
        out = _unpad(full, p) + params["bias"][None, :, None, None]
        return out, {"x": x}

    if kind == "batch_norm":
        axes = (0,) if x.ndim == 2 else (0, 2, 3)
        expand = (slice(None),) + (None,) * (x.ndim - 2)
        scale = params["scale"][(None,) + expand]
        shift = params["shift"][(None,) + expand]
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
        else:
            mean = params["running_mean"]
            var = params["running_var"]
        inv_std = 1.0 / np.sqrt(var + BATCH_NORM_EPS)
        normalized = (x - mean[(None,) + expand]) * inv_std[(None,) + expand]
        count = x.size // x.shape[1]
        return normalized * scale + shift, {
            "normalized": normalized, "inv_std": inv_std, "axes": axes,
            "training": training, "batch_mean": mean, "batch_var": var, "count": count,
        }

    raise DimensionError(f"Unknown layer kind {kind}")


def forward(net: NetworkSpec, weights: WeightStore, z: np.ndarray) -> Tuple[np.ndarray, ForwardTape]:
    """
    Evaluate the network on a latent vector (or a batch of them)

    Returns the output with the declared output_shape (batch axis kept if the
    input had one) and the tape needed by vjp().
    """
    z = np.asarray(z, dtype=np.float64)
    in_shape = net.in_shape
    if z.shape == in_shape:
        batched = False
        x = z[None]
    elif z.shape[1:] == in_shape:
        batched = True
        x = z
    else:
        raise DimensionError(f"Network expects input {in_shape}, got {z.shape}")
    check_weights(net, weights)

    tape = ForwardTape(input_shape=z.shape, batched=batched, training=weights.training)
    for index, layer in enumerate(net.layers):
        params = weights.params.get(index, {})
        if params and not all(np.all(np.isfinite(v)) for v in params.values()):
            raise NumericError("Non-finite weights", layer=_layer_name(index, layer))
        x, record = _forward_layer(layer, params, x, weights.training)
        if not np.all(np.isfinite(x)):
            raise NumericError("Non-finite activations", layer=_layer_name(index, layer))
        tape.records.append(record)

    tape.output = x
    return (x if batched else x[0]), tape


def _backward_layer(layer: LayerSpec, params: Dict[str, np.ndarray], record: dict,
                    g: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    kind = layer.kind
    if kind == "fully_connected":
        flat = record["x"]
        grads = {"weight": g.T @ flat, "bias": g.sum(axis=0)}
        return (g @ params["weight"]).reshape(record["in_shape"]), grads

    if kind == "relu":
        return g * record["mask"], {}

    if kind == "sigmoid":
        out = record["out"]
        return g * out * (1.0 - out), {}

    if kind == "reshape":
        return g.reshape(record["in_shape"]), {}

    if kind == "upsample_nearest":
        f = layer.factor
        b, c, h, w = g.shape
        return g.reshape(b, c, h // f, f, w // f, f).sum(axis=(3, 5)), {}

    if kind == "max_pool":
        argmax = record["argmax"]
        gx = np.zeros(record["in_shape"])
        b, c, out_h, out_w = argmax.shape
        di, dj = np.divmod(argmax, layer.size)
        rows = np.arange(out_h)[None, None, :, None] * layer.stride + di
        cols = np.arange(out_w)[None, None, None, :] * layer.stride + dj
        bi = np.arange(b)[:, None, None, None]
        ci = np.arange(c)[None, :, None, None]
        np.add.at(gx, (np.broadcast_to(bi, argmax.shape), np.broadcast_to(ci, argmax.shape), rows, cols), g)
        return gx, {}

    if kind == "conv2d":
        windows = record["windows"]
        grads = {
            "weight": np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3])),
            "bias": g.sum(axis=(0, 2, 3)),
        }
        patches = np.tensordot(g, params["weight"], axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
        gx = np.zeros(record["padded_shape"])
        _scatter_patches(gx, patches, layer.stride)
        return _unpad(gx, layer.padding), grads

    if kind == "conv_transpose2d":
        x = record["x"]
        padded = _pad(g, layer.padding)
        windows = _windows(padded, layer.kernel_size, layer.stride)
        gx = np.tensordot(windows, params["weight"], axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        grads = {
            "weight": np.tensordot(x, windows, axes=([0, 2, 3], [0, 2, 3])),
            "bias": g.sum(axis=(0, 2, 3)),
        }
        return gx, grads

    if kind == "batch_norm":
        axes = record["axes"]
        expand = (None, slice(None)) + (None,) * (g.ndim - 2)
        normalized = record["normalized"]
        grads = {
            "scale": (g * normalized).sum(axis=axes),
            "shift": g.sum(axis=axes),
            "running_mean": np.zeros_like(params["running_mean"]),
            "running_var": np.zeros_like(params["running_var"]),
        }
        g_norm = g * params["scale"][expand]
        inv_std = record["inv_std"][expand]
        if not record["training"]:
            return g_norm * inv_std, grads
        mean_g = g_norm.mean(axis=axes, keepdims=True)
        mean_gx = (g_norm * normalized).mean(axis=axes, keepdims=True)
        return inv_std * (g_norm - mean_g - normalized * mean_gx), grads

    raise DimensionError(f"Unknown layer kind {kind}")


def vjp(net: NetworkSpec, weights: WeightStore, tape: ForwardTape,
        cotangent: np.ndarray) -> Tuple[np.ndarray, WeightStore]:
    """
    Vector-Jacobian product: (J_z^T c, J_W^T c) for cotangent c

    The cotangent must match the forward output (batched or not).
    """
    if len(tape.records) != len(net.layers) or tape.output is None:
        raise StateError("Tape does not belong to this network")
    g = np.asarray(cotangent, dtype=np.float64)
    if not tape.batched:
        g = g[None]
    if g.shape != tape.output.shape:
        raise StateError(f"Cotangent shape {g.shape} does not match tape output {tape.output.shape}")

    grads: Dict[int, Dict[str, np.ndarray]] = {}
    for index in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[index]
        g, layer_grads = _backward_layer(layer, weights.params.get(index, {}), tape.records[index], g)
        if layer.has_parameters:
            grads[index] = layer_grads
        if not np.all(np.isfinite(g)):
            raise NumericError("Non-finite gradient", layer=_layer_name(index, layer))

    grad_z = g if tape.batched else g[0]
    return grad_z, WeightStore(grads, weights.training)


def apply_running_stats(net: NetworkSpec, weights: WeightStore, tape: ForwardTape,
                        momentum: float = BATCH_NORM_MOMENTUM) -> WeightStore:
    """Fold the batch statistics of a training-mode tape into running statistics"""
    if not tape.training:
        return weights
    updates = {}
    for index, layer in enumerate(net.layers):
        if layer.kind != "batch_norm":
            continue
        record = tape.records[index]
        count = record["count"]
        unbiased = record["batch_var"] * count / max(count - 1, 1)
        params = weights.params[index]
        updates[(index, "running_mean")] = (1 - momentum) * params["running_mean"] + momentum * record["batch_mean"]
        updates[(index, "running_var")] = (1 - momentum) * params["running_var"] + momentum * unbiased
    return weights.replace(updates) if updates else weights


def final_activation(net: NetworkSpec) -> Optional[str]:
    """Kind of the last activation layer (relu / sigmoid), if any"""
    for layer in reversed(net.layers):
        if layer.kind in ("relu", "sigmoid"):
            return layer.kind
    return None
