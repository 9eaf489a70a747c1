"""GNW weight files"""

import struct

import numpy as np
import pytest

from src.modules.generators import layers as L
from src.modules.generators.layers import build_network
from src.modules.generators.network import forward, init_weights
from src.modules.generators.weight_file import (
    MAGIC,
    PREFIX_SIZE,
    decode_weights,
    encode_weights,
    load_weights,
    save_weights,
)
from src.modules.numerics.random_streams import SeededRng
from src.shared.errors import FormatError


@pytest.fixture
def network():
    return build_network([L.fc(8), L.reshape(2, 2, 2), L.batch_norm(2), L.relu(),
                          L.conv_t(1, 2, 2), L.sigmoid()], input_dim=3)


@pytest.fixture
def payload(network):
    return encode_weights(network, init_weights(network, "uniform_fan_in", SeededRng(0)))


class TestWeightFile:

    def test_save_load_save_is_byte_identical(self, network, tmp_path):
        weights = init_weights(network, "gaussian", SeededRng(1), std=0.3)
        first = save_weights(network, weights, tmp_path / "a.gnw")
        spec, loaded = load_weights(first)
        second = save_weights(spec, loaded, tmp_path / "b.gnw")
        assert first.read_bytes() == second.read_bytes()
        assert spec == network

    def test_loaded_network_reproduces_outputs(self, network, tmp_path):
        weights = init_weights(network, "uniform_fan_in", SeededRng(2))
        spec, loaded = load_weights(save_weights(network, weights, tmp_path / "g.gnw"))
        z = np.array([0.3, -1.2, 0.5])
        expected, _ = forward(network, weights, z)
        assert np.allclose(forward(spec, loaded, z)[0], expected, atol=1e-5)

    def test_layout(self, payload):
        assert payload[:4] == MAGIC
        (header_length,) = struct.unpack("<I", payload[4:8])
        assert payload[PREFIX_SIZE:PREFIX_SIZE + header_length].startswith(b"{")

    def test_bad_magic(self, payload):
        with pytest.raises(FormatError) as excinfo:
            decode_weights(b"XXXX" + payload[4:])
        assert excinfo.value.offset == 0

    def test_truncated_payload(self, payload):
        with pytest.raises(FormatError) as excinfo:
            decode_weights(payload[:-4])
        assert excinfo.value.offset == len(payload) - 4

    def test_trailing_bytes(self, payload):
        with pytest.raises(FormatError):
            decode_weights(payload + b"\x00\x00\x00\x00")

    def test_short_file(self):
        with pytest.raises(FormatError):
            decode_weights(b"GNW")

    def test_corrupt_header(self, payload):
        (header_length,) = struct.unpack("<I", payload[4:8])
        broken = payload[:PREFIX_SIZE] + b"!" * header_length + payload[PREFIX_SIZE + header_length:]
        with pytest.raises(FormatError) as excinfo:
            decode_weights(broken)
        assert excinfo.value.offset == PREFIX_SIZE
