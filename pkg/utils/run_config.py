from dataclasses import dataclass
from pathlib import Path

from src.errors import ConfigError
from src.models.spec import PRESETS
from src.training.combinatorial import CtConfig
from src.training.trainer import TASKS, TrainConfig

from .config_manager import get_config_value

SEED_NAMES = ("data", "init", "plan", "dropout", "eval")


@dataclass(frozen=True)
class RunConfig:
    """Typed view of the merged configuration for one command run."""

    task: str
    preset: str
    divisor: int
    attention_dropout: float
    train: TrainConfig
    patience: int
    dataset: Path
    output_dir: Path
    seeds: dict

    @property
    def ct(self):
        return self.train.ct

    @classmethod
    def from_config(cls, config, output_dir=None):
        task = get_config_value(config, 'model.task', 'cic')
        if task not in TASKS:
            raise ConfigError(f"model.task must be one of {', '.join(TASKS)}, got {task!r}")

        preset = get_config_value(config, 'model.preset')
        if preset not in PRESETS:
            raise ConfigError(f"model.preset {preset!r} is not a known preset")

        seeds = {}
        for name in SEED_NAMES:
            value = get_config_value(config, f'seeds.{name}')
            if value is None:
                raise ConfigError(f"seeds.{name} must be set explicitly")
            seeds[name] = int(value)

        ct = CtConfig(
            n_min=int(get_config_value(config, 'training.ct.n_min', 2)),
            n_max=int(get_config_value(config, 'training.ct.n_max', 5)),
            batch_sets=int(get_config_value(config, 'training.ct.batch_sets', 8)),
            seed=seeds['plan'],
            enabled=bool(get_config_value(config, 'training.ct.enabled', True)),
            fixed_set_size=int(get_config_value(config, 'training.ct.fixed_set_size', 3)),
        )

        optimizer = get_config_value(config, 'training.optimizer', {}) or {}
        anomaly = get_config_value(config, 'training.anomaly', {}) or {}
        clip_norm = optimizer.get('clip_norm')
        try:
            train = TrainConfig(
                ct=ct,
                base_lr=float(optimizer.get('base_lr', 1e-4)),
                peak_lr=float(optimizer.get('peak_lr', 5e-4)),
                warmup_epochs=int(optimizer.get('warmup_epochs', 5)),
                beta1=float(optimizer.get('beta1', 0.9)),
                beta2=float(optimizer.get('beta2', 0.999)),
                eps=float(optimizer.get('eps', 1e-8)),
                l2_coeff=float(optimizer.get('l2_coeff', 5e-4)),
                clip_norm=None if clip_norm is None else float(clip_norm),
                max_epochs=int(get_config_value(config, 'training.max_epochs', 100)),
                dropout_seed=seeds['dropout'],
                eval_seed=seeds['eval'],
                eval_sizes=tuple(int(s) for s in get_config_value(config, 'evaluation.sizes', (1, 2, 3, 4, 5))),
                eval_trials=int(get_config_value(config, 'evaluation.trials', 1)),
                episode_size=int(anomaly.get('episode_size', 10)),
                max_prevalence=float(anomaly.get('max_prevalence', 0.4)),
                episodes_per_epoch=int(anomaly.get('episodes_per_epoch', 400)),
                batch_episodes=int(anomaly.get('batch_episodes', 8)),
                validation_episodes=int(anomaly.get('validation_episodes', 100)),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid training setting: {e}") from e

        if train.max_epochs < 1:
            raise ConfigError(f"training.max_epochs must be >= 1, got {train.max_epochs}")

        data_key = 'paths.anomaly_data' if task == 'anomaly' else 'paths.data'
        root = Path(get_config_value(config, 'paths.output_root', './runs'))
        return cls(
            task=task,
            preset=preset,
            divisor=int(get_config_value(config, 'model.divisor', 1)),
            attention_dropout=float(get_config_value(config, 'model.attention_dropout', 0.1)),
            train=train,
            patience=int(get_config_value(config, 'training.early_stop.patience', 10)),
            dataset=Path(get_config_value(config, data_key, root / 'data')),
            output_dir=Path(output_dir) if output_dir else root / f"{task}-{preset}",
            seeds=seeds,
        )
