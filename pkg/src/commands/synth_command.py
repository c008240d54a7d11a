import os
import tempfile
from pathlib import Path

from ..data.attributes import gen_attribute_corpus
from ..data.classification import gen_classification
from ..data.store import write_corpus
from ..errors import ConfigError, DataError
from .base_command import BaseCommand

CORPUS_KINDS = ("classification", "anomaly")


class SynthCommand(BaseCommand):
    """Generates a synthetic corpus directory."""

    def _default_directory(self, kind):
        key = 'paths.anomaly_data' if kind == 'anomaly' else 'paths.data'
        return Path(self.setting(key, self.output_root() / 'data' / kind))

    def _generate(self, kind):
        seed = self.setting('seeds.data')
        if seed is None:
            raise ConfigError("seeds.data must be set explicitly")

        if kind == 'anomaly':
            section = self.setting('data.anomaly', {}) or {}
            return gen_attribute_corpus(
                count=int(section.get('count', 3000)),
                image_size=int(section.get('image_size', 24)),
                seed=int(seed),
                n_attributes=int(section.get('n_attributes', 8)),
                split_fractions=tuple(section.get('split_fractions', (0.7, 0.15, 0.15))),
            )

        section = self.setting('data.classification', {}) or {}
        return gen_classification(
            num_classes=int(section.get('num_classes', 10)),
            per_class=int(section.get('per_class', 100)),
            image_size=int(section.get('image_size', 16)),
            p_ambiguous=float(section.get('p_ambiguous', 0.5)),
            seed=int(seed),
            group_size=int(section.get('group_size', 2)),
            n_max=int(self.setting('training.ct.n_max', 5)),
            split_fractions=tuple(section.get('split_fractions', (0.7, 0.15, 0.15))),
        )

    def _check_target(self, target, force):
        if target.exists() and not target.is_dir():
            raise DataError(f"{target} exists and is not a directory")
        if target.exists() and any(target.iterdir()) and not force:
            raise ConfigError(f"{target} is not empty; pass --force to replace it")

    def synthesize(self, kind="classification", out=None, force=False):
        """Write a corpus; files appear at ``out`` only once complete."""
        if kind not in CORPUS_KINDS:
            raise ConfigError(f"unknown corpus kind {kind!r}; expected one of {', '.join(CORPUS_KINDS)}")

        target = Path(out) if out else self._default_directory(kind)
        self._check_target(target, force)

        self.logger.info(f"Generating {kind} corpus into {target}")
        corpus = self._generate(kind)

        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            staging = Path(tempfile.mkdtemp(prefix=f".{target.name}-", dir=target.parent))
        except OSError as e:
            raise DataError(f"Cannot write below {target.parent}: {e}") from e

        try:
            manifest = write_corpus(corpus, staging)
            self.save_effective_config(staging)
            if target.exists():
                self.discard(target)
            os.replace(staging, target)
        except OSError as e:
            self.discard(staging)
            raise DataError(f"Failed to write corpus to {target}: {e}") from e

        self.logger.info(
            f"Wrote {len(corpus.images)} images ({manifest['image_sha256'][:12]}) to {target}"
        )
        return target, manifest
