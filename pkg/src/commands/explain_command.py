import csv
from pathlib import Path

import numpy as np

from ..data.attributes import make_anomaly_episode
from ..errors import DataError
from ..explain import CamRequest, grad_cam, localization_score, write_overlay_ppm, write_pgm
from ..models import checkpoint
from .base_command import BaseCommand

LOCALIZATION_FILE = "metrics.csv"
LOCALIZATION_HEADER = ["layer", "episode_size", "prevalence", "seed", "localization_score"]


def parse_layer(selector):
    """Layer selector from the command line: a selector name or a layer index."""
    if isinstance(selector, str) and selector.lstrip("-").isdigit():
        return int(selector)
    return selector


class ExplainCommand(BaseCommand):
    """Writes Grad-CAM heatmaps and overlays for one input set."""

    def _input_set(self, corpus, indices, episode_size, prevalence, seed):
        if indices:
            indices = np.asarray(indices, dtype=np.int64)
            if indices.min() < 0 or indices.max() >= len(corpus.images):
                raise DataError(f"image indices must lie in [0, {len(corpus.images)})")
            return corpus.images[indices], None
        if corpus.kind != 'attributes':
            raise DataError("a classification corpus needs explicit --indices to explain")
        rng = np.random.default_rng(seed)
        episode = make_anomaly_episode(
            corpus, episode_size, prevalence, rng, pool=corpus.split_indices('test')
        )
        self.logger.info(
            f"Sampled episode of {episode.size} images, {int(episode.flags.sum())} anomalous, "
            f"attributes {list(episode.chosen_attrs)}"
        )
        return episode.images, episode

    def _append_score(self, path, row):
        is_new = not path.exists()
        with open(path, "a", newline="") as handle:
            writer = csv.writer(handle)
            if is_new:
                writer.writerow(LOCALIZATION_HEADER)
            writer.writerow(row)

    def explain(
        self,
        checkpoint_path,
        dataset=None,
        out=None,
        layer=None,
        target=None,
        indices=None,
        episode_size=None,
        prevalence=None,
        seed=None,
    ):
        """Write one P2 heatmap and one P3 overlay per set member; returns paths and score."""
        checkpoint_path = Path(checkpoint_path)
        model = checkpoint.load(checkpoint_path)
        corpus = self.load_dataset(
            self.dataset_for_head(model.head_mode, dataset), self.corpus_kind(model.head_mode)
        )

        layer = parse_layer(layer if layer is not None else self.setting('explain.layer', 'penultimate_setconv'))
        episode_size = int(episode_size or self.setting('explain.episode_size', 10))
        prevalence = float(prevalence if prevalence is not None else self.setting('explain.prevalence', 0.2))
        seed = int(seed if seed is not None else self.setting('seeds.eval', 0))

        images, episode = self._input_set(corpus, indices, episode_size, prevalence, seed)
        heatmaps = grad_cam(CamRequest(model, images, target, layer))

        directory = self.prepare_output(out or checkpoint_path.parent / "explain")
        self.save_effective_config(directory)
        files = []
        for heatmap in heatmaps:
            i = heatmap.source_index
            files.append(write_pgm(directory / f"heatmap_{i:02d}.pgm", heatmap.values))
            files.append(write_overlay_ppm(directory / f"overlay_{i:02d}.ppm", images[i], heatmap.values))
        self.logger.info(f"Wrote {len(files)} explanation files to {directory}")

        score = None
        if episode is not None:
            try:
                score = localization_score([heatmaps], [episode])
            except DataError as e:
                self.logger.warning(f"Localization score undefined: {e}")
            else:
                print(f"localization_score={score:.4f}")
                self._append_score(directory / LOCALIZATION_FILE, [layer, episode_size, prevalence, seed, f"{score:.6f}"])
        return {"files": files, "localization_score": score, "heatmaps": heatmaps}
