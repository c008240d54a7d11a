import csv
from pathlib import Path

from ..data.metrics import accuracy_by_set_size, anomaly_grid
from ..models import checkpoint
from .base_command import BaseCommand

EVAL_FILE = "eval.csv"


class EvalCommand(BaseCommand):
    """Scores a checkpoint on the test split: accuracy by set size or the AUPRC grid."""

    def _write_rows(self, path, header, rows):
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
        return path

    def _classification(self, model, corpus, sizes, trials, seed):
        sizes = sizes or self.setting('evaluation.sizes', (1, 2, 3, 4, 5))
        table = accuracy_by_set_size(model, corpus.split('test'), sizes, trials, seed)
        for size, accuracy in table.items():
            self.logger.info(f"Set size {size}: accuracy {accuracy:.4f}")
        return ["set_size", "accuracy"], [(size, f"{acc:.6f}") for size, acc in table.items()]

    def _anomaly(self, model, corpus, sizes, trials, seed):
        sizes = sizes or self.setting('evaluation.anomaly_sizes', (10, 20, 40))
        prevalences = self.setting('evaluation.anomaly_prevalences', (0.1, 0.2, 0.3, 0.4))
        grid = anomaly_grid(model, corpus, sizes, prevalences, trials, seed, pool=corpus.split_indices('test'))
        for size, p_anomaly, value in grid:
            self.logger.info(f"N={size} p={p_anomaly}: AUPRC {value:.4f}")
        return ["set_size", "prevalence", "auprc"], [(n, p, f"{v:.6f}") for n, p, v in grid]

    def evaluate(self, checkpoint_path, dataset=None, sizes=None, trials=None, seed=None, out=None):
        """Write ``eval.csv`` under the checkpoint directory (or into ``out``); returns its path and rows."""
        checkpoint_path = Path(checkpoint_path)
        model = checkpoint.load(checkpoint_path)
        self.logger.info(f"Loaded {model.spec.name} ({model.head_mode}) from {checkpoint_path}")

        corpus = self.load_dataset(
            self.dataset_for_head(model.head_mode, dataset), self.corpus_kind(model.head_mode)
        )
        seed = int(seed if seed is not None else self.setting('seeds.eval', 0))
        if model.head_mode == 'anomaly':
            trials = int(trials or self.setting('evaluation.anomaly_trials', 50))
            header, rows = self._anomaly(model, corpus, sizes, trials, seed)
        else:
            trials = int(trials or self.setting('evaluation.trials', 1))
            header, rows = self._classification(model, corpus, sizes, trials, seed)

        directory = self.prepare_output(out or checkpoint_path.parent / "eval")
        self.save_effective_config(directory)
        path = self._write_rows(directory / EVAL_FILE, header, rows)
        self.logger.info(f"Evaluation written to {path}")
        return {"metrics": path, "rows": rows}
