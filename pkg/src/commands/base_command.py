import shutil
from pathlib import Path

from utils.config_manager import get_config_value, save_config

from ..errors import ConfigError, DataError
from ..data.store import load_corpus

EFFECTIVE_CONFIG = "effective_config.yaml"


class BaseCommand:
    """Base class for all workbench command components."""

    def __init__(self, config, logger):
        self.config = config
        self.logger = logger

    def setting(self, key_path, default=None):
        """Read a configuration value by dot path."""
        return get_config_value(self.config, key_path, default)

    def output_root(self):
        return Path(self.setting('paths.output_root', './runs'))

    def prepare_output(self, directory):
        """Create the output directory of a run; returns it as a Path."""
        directory = Path(directory)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise DataError(f"Cannot create output directory {directory}: {e}") from e
        return directory

    def save_effective_config(self, directory):
        """Echo the merged configuration next to a command's outputs."""
        path = save_config(self.config, Path(directory) / EFFECTIVE_CONFIG)
        self.logger.debug(f"Effective configuration written to {path}")
        return path

    def load_dataset(self, directory, kind):
        """Load a corpus directory and check it holds the expected corpus kind."""
        directory = Path(directory)
        self.logger.info(f"Loading {kind} corpus from {directory}")
        corpus = load_corpus(directory)
        if corpus.kind != kind:
            raise DataError(f"{directory} holds a {corpus.kind} corpus, expected {kind}")
        return corpus

    def dataset_for_head(self, head_mode, explicit=None):
        """Corpus directory for a model head: the explicit one, else the configured default."""
        if explicit:
            return Path(explicit)
        key = 'paths.anomaly_data' if head_mode == 'anomaly' else 'paths.data'
        path = self.setting(key)
        if not path:
            raise ConfigError(f"{key} is not configured and no dataset was given")
        return Path(path)

    @staticmethod
    def corpus_kind(head_mode):
        return 'attributes' if head_mode == 'anomaly' else 'classification'

    @staticmethod
    def discard(directory):
        shutil.rmtree(directory, ignore_errors=True)
