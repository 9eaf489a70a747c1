"""
Declarative layer and network specifications

A NetworkSpec is an ordered list of LayerSpec entries plus the latent
input length. Shapes are resolved from the spec alone, so a weight file
header can be checked against it without running anything.
"""

from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.shared.errors import DimensionError

LayerKind = Literal[
    "fully_connected",
    "conv2d",
    "conv_transpose2d",
    "relu",
    "sigmoid",
    "batch_norm",
    "upsample_nearest",
    "max_pool",
    "reshape",
]

PARAMETERIZED_KINDS = {"fully_connected", "conv2d", "conv_transpose2d", "batch_norm"}


class LayerSpec(BaseModel):
    """One layer and its hyperparameters; unused fields stay None"""

    model_config = ConfigDict(frozen=True)

    kind: LayerKind
    out_dim: Optional[int] = Field(default=None, ge=1)
    filters: Optional[int] = Field(default=None, ge=1)
    kernel_size: Optional[int] = Field(default=None, ge=1)
    stride: Optional[int] = Field(default=None, ge=1)
    padding: Optional[int] = Field(default=None, ge=0)
    channels: Optional[int] = Field(default=None, ge=1)
    factor: Optional[int] = Field(default=None, ge=1)
    size: Optional[int] = Field(default=None, ge=1)
    target_shape: Optional[Tuple[int, ...]] = None

    @model_validator(mode="after")
    def _check_required(self):
        required = {
            "fully_connected": ("out_dim",),
            "conv2d": ("filters", "kernel_size", "stride", "padding"),
            "conv_transpose2d": ("filters", "kernel_size", "stride", "padding"),
            "batch_norm": ("channels",),
            "upsample_nearest": ("factor",),
            "max_pool": ("size", "stride"),
            "reshape": ("target_shape",),
        }.get(self.kind, ())
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind} layer is missing {', '.join(missing)}")
        if self.target_shape is not None and any(d < 1 for d in self.target_shape):
            raise ValueError("reshape target extents must be positive")
        return self

    @property
    def has_parameters(self) -> bool:
        return self.kind in PARAMETERIZED_KINDS

    def describe(self) -> str:
        if self.kind == "fully_connected":
            return f"fc({self.out_dim})"
        if self.kind in ("conv2d", "conv_transpose2d"):
            name = "conv" if self.kind == "conv2d" else "convT"
            return f"{name}({self.filters}, {self.kernel_size}x{self.kernel_size}, {self.stride}, pad={self.padding})"
        if self.kind == "max_pool":
            return f"maxpool({self.size}x{self.size}, {self.stride})"
        if self.kind == "upsample_nearest":
            return f"upsample({self.factor}x{self.factor})"
        if self.kind == "reshape":
            return f"reshape{tuple(self.target_shape)}"
        if self.kind == "batch_norm":
            return f"batch-norm({self.channels})"
        return self.kind


def fc(out_dim: int) -> LayerSpec:
    return LayerSpec(kind="fully_connected", out_dim=out_dim)


def conv(filters: int, kernel_size: int, stride: int = 1, padding: int = 0) -> LayerSpec:
    return LayerSpec(kind="conv2d", filters=filters, kernel_size=kernel_size, stride=stride, padding=padding)


def conv_t(filters: int, kernel_size: int, stride: int = 1, padding: int = 0) -> LayerSpec:
    return LayerSpec(kind="conv_transpose2d", filters=filters, kernel_size=kernel_size,
                     stride=stride, padding=padding)


def relu() -> LayerSpec:
    return LayerSpec(kind="relu")


def sigmoid() -> LayerSpec:
    return LayerSpec(kind="sigmoid")


def batch_norm(channels: int) -> LayerSpec:
    return LayerSpec(kind="batch_norm", channels=channels)


def upsample(factor: int) -> LayerSpec:
    return LayerSpec(kind="upsample_nearest", factor=factor)


def max_pool(size: int, stride: int) -> LayerSpec:
    return LayerSpec(kind="max_pool", size=size, stride=stride)


def reshape(*target_shape: int) -> LayerSpec:
    return LayerSpec(kind="reshape", target_shape=tuple(target_shape))


def _product(shape: Tuple[int, ...]) -> int:
    total = 1
    for extent in shape:
        total *= extent
    return total


def layer_output_shape(layer: LayerSpec, in_shape: Tuple[int, ...]) -> Tuple[int, ...]:
    """Output shape (without batch axis) of one layer for a given input shape"""
    kind = layer.kind
    if kind == "fully_connected":
        return (layer.out_dim,)
    if kind in ("relu", "sigmoid"):
        return in_shape
    if kind == "reshape":
        if _product(layer.target_shape) != _product(in_shape):
            raise DimensionError(f"Cannot reshape {in_shape} into {tuple(layer.target_shape)}")
        return tuple(layer.target_shape)
    if kind == "batch_norm":
        if len(in_shape) not in (1, 3) or in_shape[0] != layer.channels:
            raise DimensionError(f"batch-norm({layer.channels}) cannot take input {in_shape}")
        return in_shape

    if len(in_shape) != 3:
        raise DimensionError(f"{layer.describe()} needs a (channels, h, w) input, got {in_shape}")
    channels, height, width = in_shape

    if kind == "upsample_nearest":
        return channels, height * layer.factor, width * layer.factor
    if kind == "max_pool":
        out_h = (height - layer.size) // layer.stride + 1
        out_w = (width - layer.size) // layer.stride + 1
        if out_h < 1 or out_w < 1:
            raise DimensionError(f"{layer.describe()} does not fit input {in_shape}")
        return channels, out_h, out_w
    if kind == "conv2d":
        k, s, p = layer.kernel_size, layer.stride, layer.padding
        out_h = (height + 2 * p - k) // s + 1
        out_w = (width + 2 * p - k) // s + 1
        if out_h < 1 or out_w < 1:
            raise DimensionError(f"{layer.describe()} does not fit input {in_shape}")
        return layer.filters, out_h, out_w
    if kind == "conv_transpose2d":
        k, s, p = layer.kernel_size, layer.stride, layer.padding
        out_h = (height - 1) * s + k - 2 * p
        out_w = (width - 1) * s + k - 2 * p
        if out_h < 1 or out_w < 1:
            raise DimensionError(f"{layer.describe()} does not fit input {in_shape}")
        return layer.filters, out_h, out_w
    raise DimensionError(f"Unknown layer kind {kind}")


class NetworkSpec(BaseModel):
    """Feed-forward network: latent vector of length input_dim -> output_shape"""

    model_config = ConfigDict(frozen=True)

    layers: List[LayerSpec]
    input_dim: Optional[int] = Field(default=None, ge=1)
    input_shape: Optional[Tuple[int, ...]] = None
    output_shape: Tuple[int, ...]

    @model_validator(mode="after")
    def _check_chain(self):
        if (self.input_dim is None) == (self.input_shape is None):
            raise ValueError("exactly one of input_dim or input_shape must be given")
        resolved = self.layer_shapes()[-1]
        if tuple(resolved) != tuple(self.output_shape):
            raise ValueError(f"layers produce {resolved}, declared output_shape is {tuple(self.output_shape)}")
        return self

    @property
    def in_shape(self) -> Tuple[int, ...]:
        return (self.input_dim,) if self.input_dim is not None else tuple(self.input_shape)

    def layer_shapes(self) -> List[Tuple[int, ...]]:
        """Input shape followed by every layer's output shape"""
        shapes = [self.in_shape]
        for layer in self.layers:
            in_shape = shapes[-1]
            if layer.kind == "fully_connected":
                in_shape = (_product(in_shape),)
            shapes.append(layer_output_shape(layer, in_shape))
        return shapes

    def describe(self) -> str:
        return " -> ".join(layer.describe() for layer in self.layers)


def build_network(layers: List[LayerSpec], input_dim: Optional[int] = None,
                  input_shape: Optional[Tuple[int, ...]] = None) -> NetworkSpec:
    """Resolve the output shape of a layer list and wrap it as a NetworkSpec"""
    shape = (input_dim,) if input_dim is not None else tuple(input_shape)
    for layer in layers:
        if layer.kind == "fully_connected":
            shape = (_product(shape),)
        shape = layer_output_shape(layer, shape)
    return NetworkSpec(layers=list(layers), input_dim=input_dim,
                       input_shape=tuple(input_shape) if input_shape is not None else None,
                       output_shape=shape)
