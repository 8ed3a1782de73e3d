# -*- coding: utf-8 -*-
"""
config.py — Run configuration for covfactor
→ Defaults merged with data/config.json
→ Environment overrides for tolerance, dense cap, seed and workers
→ Safe load: a broken file falls back to defaults
"""

import json
import os
from functools import lru_cache
from pathlib import Path
from typing import Any

from src.logger import get_logger

logger = get_logger(__name__)

# ================================================
# CONFIG FILE PATH
# ================================================
CONFIG_DIR = Path(__file__).resolve().parent.parent / "data"
CONFIG_FILE = CONFIG_DIR / "config.json"

# ================================================
# DEFAULT CONFIG
# ================================================
DEFAULT_CONFIG = {
    "rank_tolerance": 1e-10,
    "verdict_tolerance": 1e-9,
    "conserved_tolerance": 1e-10,
    "dense_cap": 4096,
    "cluster_dim_cap": 4096,
    "degeneracy_delta": 1e-8,
    "lanczos_tol": 1e-8,
    "lanczos_max_iter": 20000,
    "seed": 1234,
    "n_jobs": 1,
    "boundary_resolution": 1e-6,
    "overlap_threshold": 1e-8,
    "memory_fraction": 0.8,
}

# env var -> (config key, parser)
ENV_OVERRIDES = {
    "COVFACTOR_TOL": ("verdict_tolerance", float),
    "COVFACTOR_DENSE_CAP": ("dense_cap", int),
    "COVFACTOR_SEED": ("seed", int),
    "COVFACTOR_N_JOBS": ("n_jobs", int),
}


def config_path() -> Path:
    override = os.environ.get("COVFACTOR_CONFIG")
    return Path(override) if override else CONFIG_FILE


# ================================================
# LOAD CONFIG
# ================================================
@lru_cache(maxsize=1)
def load_config() -> dict:
    """Load config safely, always returns a valid dict"""
    config = DEFAULT_CONFIG.copy()
    path = config_path()

    if path.exists():
        try:
            with open(path, "r", encoding="utf-8") as f:
                user_config = json.load(f)
            if isinstance(user_config, dict):
                unknown = set(user_config) - set(DEFAULT_CONFIG)
                if unknown:
                    logger.warning(f"Ignoring unknown config keys: {sorted(unknown)}")
                config.update({k: v for k, v in user_config.items() if k in DEFAULT_CONFIG})
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Could not read {path}, using defaults: {e}")

    for env_name, (key, parse) in ENV_OVERRIDES.items():
        raw = os.environ.get(env_name)
        if raw is None:
            continue
        try:
            config[key] = parse(raw)
        except ValueError:
            logger.error(f"Ignoring {env_name}={raw!r}: not a valid {parse.__name__}")

    return config


def reload_config() -> dict:
    load_config.cache_clear()
    return load_config()


# ================================================
# QUICK GETTERS
# ================================================
def get_setting(key: str) -> Any:
    """Return one configured value (KeyError for unknown keys)"""
    return load_config()[key]


def resolve(value: Any, key: str) -> Any:
    """Explicit argument wins, otherwise the configured value"""
    return get_setting(key) if value is None else value
