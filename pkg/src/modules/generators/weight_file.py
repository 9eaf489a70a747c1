"""
GNW weight files

Layout (little-endian):
    bytes 0-3    magic b"GNW1"
    bytes 4-7    uint32 header length H
    bytes 8..8+H UTF-8 JSON header (layers, input_dim / input_shape,
                 output_shape, parameters with layer index, name and shape)
    rest         float32 parameter arrays in header order, row-major

The header is serialized canonically (sorted keys, compact separators) so
save -> load -> save reproduces the file byte for byte.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np
from pydantic import ValidationError

from src.modules.generators.layers import NetworkSpec
from src.modules.generators.network import WeightStore, check_weights
from src.shared.errors import DimensionError, FormatError

logger = logging.getLogger(__name__)

MAGIC = b"GNW1"
PREFIX_SIZE = 8


def _header(net: NetworkSpec, weights: WeightStore) -> dict:
    spec = net.model_dump(mode="json", exclude_none=True)
    spec["layers"] = [layer.model_dump(mode="json", exclude_none=True) for layer in net.layers]
    spec["parameters"] = [
        {"layer": index, "name": name, "shape": list(array.shape)}
        for (index, name), array in weights.items()
    ]
    return spec


def encode_weights(net: NetworkSpec, weights: WeightStore) -> bytes:
    check_weights(net, weights)
    header = json.dumps(_header(net, weights), sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", len(header)), header]
    for _, array in weights.items():
        chunks.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_weights(payload: bytes) -> Tuple[NetworkSpec, WeightStore]:
    if len(payload) < PREFIX_SIZE:
        raise FormatError("File too short for a GNW prefix", offset=len(payload))
    if payload[:4] != MAGIC:
        raise FormatError(f"Bad magic {payload[:4]!r}, expected {MAGIC!r}", offset=0)
    (header_length,) = struct.unpack("<I", payload[4:8])
    header_end = PREFIX_SIZE + header_length
    if header_end > len(payload):
        raise FormatError(f"Header of {header_length} bytes is truncated", offset=len(payload))

    try:
        header = json.loads(payload[PREFIX_SIZE:header_end].decode("utf-8"))
        entries = header.pop("parameters")
        net = NetworkSpec.model_validate(header)
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, ValidationError, DimensionError) as e:
        raise FormatError(f"Invalid GNW header: {e}", offset=PREFIX_SIZE)

    params: Dict[int, Dict[str, np.ndarray]] = {}
    offset = header_end
    for entry in entries:
        shape = tuple(entry["shape"])
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(payload):
            raise FormatError(
                f"Payload truncated in layer {entry['layer']} {entry['name']}", offset=len(payload))
        array = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=offset)
        params.setdefault(int(entry["layer"]), {})[entry["name"]] = array.astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(payload):
        raise FormatError(f"{len(payload) - offset} trailing bytes after parameters", offset=offset)

    weights = WeightStore(params, training=False)
    try:
        check_weights(net, weights)
    except DimensionError as e:
        raise FormatError(f"Parameter shapes disagree with layer specs: {e}", offset=PREFIX_SIZE)
    return net, weights


def save_weights(net: NetworkSpec, weights: WeightStore, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_weights(net, weights))
    logger.info("Saved %d parameters to %s", weights.parameter_count(), path)
    return path


def load_weights(path: Union[str, Path]) -> Tuple[NetworkSpec, WeightStore]:
    path = Path(path)
    net, weights = decode_weights(path.read_bytes())
    logger.info("Loaded %s: %s", path, net.describe())
    return net, weights
