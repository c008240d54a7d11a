"""Combinatorial Training: per-epoch random assembly of same-class sets."""

from dataclasses import dataclass

import numpy as np

from ..data.classification import same_class_sets
from ..errors import ConfigError, DataError


@dataclass(frozen=True)
class CtConfig:
    n_min: int = 2
    n_max: int = 5
    batch_sets: int = 8
    seed: int = 0
    enabled: bool = True
    fixed_set_size: int = 3  # set size of the fixed-set control when disabled

    def __post_init__(self):
        if self.n_min < 1 or self.n_max < self.n_min:
            raise ConfigError(f"need 1 <= n_min <= n_max, got n_min={self.n_min}, n_max={self.n_max}")
        if self.batch_sets < 1:
            raise ConfigError(f"batch_sets must be >= 1, got {self.batch_sets}")
        if self.fixed_set_size < 1:
            raise ConfigError(f"fixed_set_size must be >= 1, got {self.fixed_set_size}")


@dataclass
class EpochPlan:
    set_size: int
    batches: list  # each an int array (sets_in_batch, set_size) of sample indices
    dropped: int = 0

    @property
    def num_sets(self):
        return sum(len(batch) for batch in self.batches)

    def sets(self):
        for batch in self.batches:
            yield from batch


def _batch(sets, batch_sets):
    return [np.stack(sets[i : i + batch_sets]) for i in range(0, len(sets), batch_sets)]


def plan_from_sets(sets, size, batch_sets, rng, total):
    order = rng.permutation(len(sets))
    sets = [sets[i] for i in order]
    return EpochPlan(size, _batch(sets, batch_sets), dropped=total - len(sets) * size)


def ct_epoch_plan(labels, cfg, rng):
    """Draw one set size for the epoch, cut every class into sets, shuffle into batches."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("cannot plan an epoch over an empty dataset")
    size = int(rng.integers(cfg.n_min, cfg.n_max + 1))
    sets = same_class_sets(labels, size, rng)
    if not sets:
        raise DataError(f"no class holds {size} samples")
    return plan_from_sets(sets, size, cfg.batch_sets, rng, labels.size)


def fixed_set_plan(labels, cfg, rng):
    """Sets of ``cfg.fixed_set_size`` built once, for training without CT."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("cannot plan an epoch over an empty dataset")
    sets = same_class_sets(labels, cfg.fixed_set_size, rng)
    if not sets:
        raise DataError(f"no class holds {cfg.fixed_set_size} samples")
    return plan_from_sets(sets, cfg.fixed_set_size, cfg.batch_sets, rng, labels.size)


def reshuffle(plan, batch_sets, rng):
    """Same sets, new order."""
    sets = list(plan.sets())
    total = plan.num_sets * plan.set_size + plan.dropped
    return plan_from_sets(sets, plan.set_size, batch_sets, rng, total)
