import logging

from ..errors import DivergenceError
from ..models import checkpoint
from ..models.model import Model, build
from ..models.spec import preset_spec
from ..training.trainer import EarlyStop, train, write_history_csv
from .base_command import BaseCommand

CHECKPOINT_FILE = "checkpoint.cst"
METRICS_FILE = "metrics.csv"


class TrainCommand(BaseCommand):
    """Trains one preset on a stored corpus and saves the best checkpoint."""

    def build_model(self, run, corpus):
        num_classes = corpus.num_classes if run.task != 'anomaly' else 1
        spec = preset_spec(
            run.preset,
            task=run.task,
            num_classes=num_classes,
            divisor=run.divisor,
            input_shape=corpus.images.shape[1:],
        )
        model = build(spec, seed=run.seeds['init'])
        self.logger.info(f"Built {spec.name} for {run.task}: {model.param_count} parameters")
        return Model(spec, model.parameters, run.attention_dropout)

    def train(self, run, dataset=None):
        """Run training for ``run`` (a RunConfig); returns the written file paths."""
        corpus = self.load_dataset(dataset or run.dataset, self.corpus_kind(run.task))
        model = self.build_model(run, corpus)
        out = self.prepare_output(run.output_dir)
        self.save_effective_config(out)

        mode = "combinatorial" if run.ct.enabled else f"fixed sets of {run.ct.fixed_set_size}"
        self.logger.info(f"Training {run.preset} on {run.task} ({mode}), up to {run.train.max_epochs} epochs")
        try:
            result = train(model, corpus, run.task, run.train, EarlyStop(run.patience), logging.getLogger("cst.train"))
        except DivergenceError as e:
            self.logger.error(f"Training diverged: {e}")
            raise

        checkpoint_path = checkpoint.save(result.model, out / CHECKPOINT_FILE)
        metrics_path = out / METRICS_FILE
        write_history_csv(result.history, metrics_path)
        self.logger.info(
            f"Best validation score {result.stop.best_metric:.4f} at epoch {result.stop.best_epoch}; "
            f"checkpoint saved to {checkpoint_path}"
        )
        return {"checkpoint": checkpoint_path, "metrics": metrics_path, "result": result}
