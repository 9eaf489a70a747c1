"""
Named default sets for every subcommand

desk32 targets 32 x 32 images on a laptop CPU; paper64 uses full dataset
sizes, 29 x 29 kernels and slow training settings. Solver hyperparameters are
the same in both presets and live on the solver configs themselves.

Precedence: preset < --config JSON file < explicit command-line flags.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

from src.shared.errors import ConfigError, FormatError

logger = logging.getLogger(__name__)

DEFAULT_PRESET = "desk32"

PRESETS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "desk32": {
        "gen-blur-dataset": {
            "count": 10000, "canvas": 15, "length_min": 3.0, "length_max": 12.0,
            "steps": 64, "kappa_dir": 0.35, "sigma_min": 0.5, "sigma_max": 2.0,
        },
        "gen-image-dataset": {"count": 2000, "size": 32, "channels": 1, "format": "f32"},
        "train-vae-blur": {"latent_dim": 16, "epochs": 50, "batch_size": 32, "lr": 1e-3},
        "train-vae-image": {"latent_dim": 16, "epochs": 30, "batch_size": 32, "lr": 1e-3},
        "deblur": {"untrained_latent_dim": 32, "untrained_width": 16},
        "project-range": {"steps": 1000, "restarts": 3, "lr": 0.01},
        "sweep": {"suite": {"image_size": 32, "channels": 1, "kernel_size": 15}},
    },
    "paper64": {
        "gen-blur-dataset": {
            "count": 80000, "canvas": 29, "length_min": 5.0, "length_max": 28.0,
            "steps": 128, "kappa_dir": 0.35, "sigma_min": 0.5, "sigma_max": 3.0,
        },
        "gen-image-dataset": {"count": 50000, "size": 32, "channels": 3, "format": "f32"},
        "train-vae-blur": {"latent_dim": 50, "epochs": 10, "batch_size": 5, "lr": 1e-5},
        "train-vae-image": {"latent_dim": 100, "epochs": 50, "batch_size": 1500, "lr": 1e-5},
        "deblur": {"untrained_latent_dim": 32, "untrained_width": 64},
        "project-range": {"steps": 6000, "restarts": 10, "lr": 0.01},
        "sweep": {"suite": {"image_size": 32, "channels": 3, "kernel_size": 29}},
    },
}


def preset_defaults(preset: Optional[str], command: str) -> Dict[str, Any]:
    """Copy of the defaults `preset` defines for `command`"""
    name = preset or DEFAULT_PRESET
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset {name}; choose from {', '.join(PRESETS)}")
    return json.loads(json.dumps(PRESETS[name].get(command, {})))


def load_config_file(path: Optional[Union[str, Path]]) -> Dict[str, Any]:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        options = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"Invalid config file {path.name}: {e.msg}", offset=e.pos)
    if not isinstance(options, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    return options


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def resolve_options(preset: Optional[str], command: str, flags: Dict[str, Any],
                    config_path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """Merge preset, config file and flags; flags left as None do not override"""
    options = _merge(preset_defaults(preset, command), load_config_file(config_path))
    options = _merge(options, {key: value for key, value in flags.items() if value is not None})
    logger.debug("Resolved %s options: %s", command, options)
    return options
