"""Training loop shared by the CIC, SC and anomaly tasks."""

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..data.metrics import accuracy_by_set_size, frozen_episodes, mean_episode_auprc
from ..data.attributes import make_anomaly_episode
from ..errors import ConfigError, DivergenceError
from ..tensor_core.tensor import Tape, backward
from .combinatorial import CtConfig, ct_epoch_plan, fixed_set_plan, reshuffle
from .losses import anomaly_loss, cic_loss, sc_loss
from .optimizer import OptimState, adam_step, lr_at

TASKS = ("cic", "sc_sf", "sc_lf", "anomaly")
VALIDATION_PREVALENCES = (0.1, 0.2, 0.3, 0.4)


@dataclass(frozen=True)
class TrainConfig:
    ct: CtConfig = field(default_factory=CtConfig)
    base_lr: float = 1e-4
    peak_lr: float = 5e-4
    warmup_epochs: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2_coeff: float = 5e-4
    clip_norm: Optional[float] = None
    max_epochs: int = 100
    dropout_seed: int = 0
    eval_seed: int = 0
    eval_sizes: tuple = (1, 2, 3, 4, 5)
    eval_trials: int = 1
    episode_size: int = 10
    max_prevalence: float = 0.4
    episodes_per_epoch: int = 400
    batch_episodes: int = 8
    validation_episodes: int = 100

    def optim_state(self):
        return OptimState(
            base_lr=self.base_lr,
            peak_lr=self.peak_lr,
            warmup_epochs=self.warmup_epochs,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            l2_coeff=self.l2_coeff,
            clip_norm=self.clip_norm,
        )


@dataclass
class EarlyStop:
    patience: int = 10
    best_metric: float = -math.inf
    best_epoch: int = -1
    best_parameters: Optional[dict] = None
    stale_epochs: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")

    def update(self, metric, epoch, parameters):
        if metric > self.best_metric:
            self.best_metric = metric
            self.best_epoch = epoch
            self.best_parameters = dict(parameters)
            self.stale_epochs = 0
            return True
        self.stale_epochs += 1
        return False

    @property
    def should_stop(self):
        return self.stale_epochs >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_metrics: dict
    val_score: float


@dataclass
class TrainResult:
    model: object
    history: list
    stop: EarlyStop


def write_history_csv(history, path):
    """CSV columns: epoch, lr, train_loss, one column per validation metric, val_score."""
    metric_keys = list(history[0].val_metrics) if history else []
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "lr", "train_loss"] + metric_keys + ["val_score"])
        for record in history:
            writer.writerow(
                [record.epoch, f"{record.lr:.8g}", f"{record.train_loss:.8g}"]
                + [f"{record.val_metrics[k]:.8g}" for k in metric_keys]
                + [f"{record.val_score:.8g}"]
            )


class Trainer:
    """Runs one training job; holds the per-purpose random streams."""

    def __init__(self, model, dataset, task, cfg, stop, logger=None):
        if task not in TASKS:
            raise ConfigError(f"unknown task {task!r}")
        self.model = model
        self.dataset = dataset
        self.task = task
        self.cfg = cfg
        self.stop = stop
        self.logger = logger or logging.getLogger("cst.train")
        self.state = cfg.optim_state()
        self.plan_rng = np.random.default_rng(cfg.ct.seed)
        self.dropout_rng = np.random.default_rng(cfg.dropout_seed)
        self._fixed_plan = None

        if task == "anomaly":
            self.train_pool = dataset.split_indices("train")
            self.val_episodes = frozen_episodes(
                dataset,
                cfg.episode_size,
                VALIDATION_PREVALENCES,
                cfg.validation_episodes,
                cfg.eval_seed,
                pool=dataset.split_indices("validation"),
            )
        else:
            self.train_corpus = dataset.split("train")
            self.val_corpus = dataset.split("validation")

    # ------------------------------------------------------------------ batches

    def _classification_batches(self):
        labels = self.train_corpus.labels
        if self.cfg.ct.enabled:
            plan = ct_epoch_plan(labels, self.cfg.ct, self.plan_rng)
        elif self._fixed_plan is None:
            plan = self._fixed_plan = fixed_set_plan(labels, self.cfg.ct, self.plan_rng)
        else:
            plan = reshuffle(self._fixed_plan, self.cfg.ct.batch_sets, self.plan_rng)
        self.logger.debug(f"Epoch plan: set size {plan.set_size}, {plan.num_sets} sets, {plan.dropped} dropped")
        for batch in plan.batches:
            yield self.train_corpus.images[batch], self.train_corpus.labels[batch]

    def _anomaly_batches(self):
        cfg = self.cfg
        for _ in range(max(1, cfg.episodes_per_epoch // cfg.batch_episodes)):
            episodes = [
                make_anomaly_episode(
                    self.dataset,
                    cfg.episode_size,
                    float(self.plan_rng.uniform(0.0, cfg.max_prevalence)),
                    self.plan_rng,
                    pool=self.train_pool,
                )
                for _ in range(cfg.batch_episodes)
            ]
            yield np.stack([e.images for e in episodes]), np.stack([e.flags for e in episodes])

    def epoch_batches(self):
        if self.task == "anomaly":
            return self._anomaly_batches()
        return self._classification_batches()

    # ------------------------------------------------------------------ steps

    def loss_and_grads(self, params, images, targets):
        with Tape() as tape:
            watched = {name: tape.watch(t) for name, t in params.items()}
            if self.task == "anomaly":
                out = self.model.forward(images, True, self.dropout_rng, watched)
                loss = anomaly_loss(out, targets)
            elif self.task == "sc_lf":
                out = self.model.forward(images, True, self.dropout_rng, watched)
                loss = sc_loss(out, targets[..., 0])
            else:
                # score-fusion models train on the per-image objective
                out = self.model.forward_layers(images, True, self.dropout_rng, watched)
                loss = cic_loss(out, targets)
        value = loss.item()
        if not math.isfinite(value):
            return value, None
        backward(tape, loss)
        return value, {name: tape.gradient(w) for name, w in watched.items()}

    def validate(self, model):
        if self.task == "anomaly":
            score = mean_episode_auprc(model, self.val_episodes)
            return {"val_auprc": score}, score
        table = accuracy_by_set_size(
            model, self.val_corpus, self.cfg.eval_sizes, self.cfg.eval_trials, self.cfg.eval_seed
        )
        metrics = {f"val_metric@size{size}": acc for size, acc in table.items()}
        return metrics, float(np.mean(list(table.values())))

    def run(self):
        params = dict(self.model.parameters)
        history = []
        for epoch in range(self.cfg.max_epochs):
            self.state.lr = lr_at(epoch, self.state)
            losses = []
            for index, (images, targets) in enumerate(self.epoch_batches()):
                loss, grads = self.loss_and_grads(params, images, targets)
                if grads is None:
                    raise DivergenceError(epoch, index)
                params = adam_step(params, grads, self.state)
                losses.append(loss)
                self.logger.debug(f"epoch {epoch} batch {index} loss {loss:.5f}")

            current = self.model.with_parameters(params)
            metrics, score = self.validate(current)
            record = EpochRecord(epoch, self.state.lr, float(np.mean(losses)), metrics, score)
            history.append(record)
            improved = self.stop.update(score, epoch, params)
            self.logger.info(
                f"Epoch {epoch}: lr={record.lr:.2e} loss={record.train_loss:.4f} "
                f"val={score:.4f}{' (best)' if improved else ''}"
            )
            if self.stop.should_stop:
                self.logger.info(f"Early stop after {epoch + 1} epochs (best epoch {self.stop.best_epoch})")
                break

        best = self.model.with_parameters(self.stop.best_parameters or params)
        return TrainResult(best, history, self.stop)


def train(model, dataset, task, cfg, stop, logger=None):
    """Train ``model`` and return the best-validation checkpoint plus metric history."""
    if task == "sc_lf" and cfg.clip_norm is None:
        cfg = replace(cfg, clip_norm=5.0)
    return Trainer(model, dataset, task, cfg, stop, logger).run()
