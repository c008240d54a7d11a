import copy
import os
from pathlib import Path

import yaml

from src.errors import ConfigError

# Try to import dotenv, but don't fail if it's not available
try:
    from dotenv import load_dotenv
    DOTENV_AVAILABLE = True
except ImportError:
    DOTENV_AVAILABLE = False

DEFAULT_CONFIG_PATH = Path(__file__).parent.parent / "config" / "config.yaml"


def load_config(path=None):
    """Load configuration from a YAML file and environment variables."""
    # Load .env file if available
    if DOTENV_AVAILABLE:
        env_path = Path(__file__).parent.parent / ".env"
        if env_path.exists():
            load_dotenv(env_path)

    config_path = Path(path) if path else DEFAULT_CONFIG_PATH

    try:
        with open(config_path, 'r') as file:
            config = yaml.safe_load(file) or {}
    except FileNotFoundError as e:
        raise ConfigError(f"Configuration file not found at {config_path}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Error parsing configuration file {config_path}: {e}") from e

    if not isinstance(config, dict):
        raise ConfigError(f"Configuration file {config_path} must hold a mapping")

    return _override_with_env_vars(config)


def _override_with_env_vars(config):
    """Override configuration values with environment variables."""
    output_root = os.getenv('CST_OUTPUT_ROOT')
    log_dir = os.getenv('CST_LOG_DIR')
    log_level = os.getenv('CST_LOG_LEVEL')

    if output_root:
        set_config_value(config, 'paths.output_root', output_root)

    if log_dir:
        set_config_value(config, 'paths.logs', log_dir)

    if log_level:
        set_config_value(config, 'logging.level', log_level.upper())

    return config


def get_config_value(config, key_path, default=None):
    """Get a configuration value using dot notation (e.g., 'training.ct.n_min')."""
    if not config:
        return default

    keys = key_path.split('.')
    value = config

    try:
        for key in keys:
            value = value[key]
        return value
    except (KeyError, TypeError):
        return default


def set_config_value(config, key_path, value):
    """Set a configuration value using dot notation, creating sections as needed."""
    keys = key_path.split('.')
    section = config
    for key in keys[:-1]:
        if not isinstance(section.get(key), dict):
            section[key] = {}
        section = section[key]
    section[keys[-1]] = value
    return config


def apply_overrides(config, overrides):
    """Return a copy of ``config`` with dot-path overrides applied (None values skipped)."""
    merged = copy.deepcopy(config)
    for key_path, value in overrides.items():
        if value is not None:
            set_config_value(merged, key_path, value)
    return merged


def save_config(config, path):
    """Write the effective configuration next to a command's outputs."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as file:
        yaml.safe_dump(config, file, sort_keys=False)
    return Path(path)
