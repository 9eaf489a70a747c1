import json

import pytest

from src.shared.errors import ConfigError, FormatError
from src.shared.presets import PRESETS, preset_defaults, resolve_options


def test_defaults_are_copies():
    defaults = preset_defaults("desk32", "sweep")
    defaults["suite"]["kernel_size"] = 99
    assert PRESETS["desk32"]["sweep"]["suite"]["kernel_size"] == 15


def test_missing_preset_uses_desk32():
    assert preset_defaults(None, "project-range") == PRESETS["desk32"]["project-range"]


def test_desk_blur_vae_schedule():
    assert preset_defaults("desk32", "train-vae-blur") == {"latent_dim": 16, "epochs": 50, "batch_size": 32, "lr": 1e-3}
    assert preset_defaults("desk32", "gen-blur-dataset")["canvas"] == 15


def test_unknown_command_has_no_defaults():
    assert preset_defaults("paper64", "eval") == {}


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset_defaults("cluster128", "deblur")


def test_precedence(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"steps": 50, "restarts": 2}))
    options = resolve_options("paper64", "project-range", {"steps": 7, "restarts": None}, config)
    assert options == {"steps": 7, "restarts": 2, "lr": 0.01}


def test_nested_sections_merge(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"suite": {"count": 4}}))
    options = resolve_options("desk32", "sweep", {"suite": {"kind": "range"}}, config)
    assert options["suite"] == {"image_size": 32, "channels": 1, "kernel_size": 15, "count": 4, "kind": "range"}


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        resolve_options("desk32", "deblur", {}, tmp_path / "absent.json")

    bad = tmp_path / "bad.json"
    bad.write_text('{"steps": ')
    with pytest.raises(FormatError) as info:
        resolve_options("desk32", "deblur", {}, bad)
    assert info.value.offset == len('{"steps": ')

    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        resolve_options("desk32", "deblur", {}, listing)
