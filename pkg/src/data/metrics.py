"""Evaluation metrics: accuracy by set size and AUPRC grids."""

import numpy as np
from sklearn.metrics import average_precision_score

from ..errors import DataError
from .attributes import make_anomaly_episode
from .classification import same_class_sets

SET_LEVEL_HEADS = ("sc_score_fusion", "sc_late_fusion")
EVAL_BATCH_SETS = 64


def auprc(scores, flags):
    """Step-wise area under the precision-recall curve, tied scores grouped."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    flags = np.asarray(flags).reshape(-1).astype(np.int64)
    if scores.shape != flags.shape:
        raise DataError(f"{len(scores)} scores for {len(flags)} flags")
    if not np.any(flags == 1):
        raise DataError("AUPRC is undefined without a positive flag")
    return float(average_precision_score(flags, scores))


def _batches(items, size):
    for start in range(0, len(items), size):
        yield items[start : start + size]


def accuracy_by_set_size(model, corpus, sizes, trials=1, seed=0):
    """Top-1 accuracy for seeded same-class sets of each size.

    ``model`` needs ``head_mode`` and ``predict(images)``. Per-image heads
    score every image; set-level heads score the set.
    """
    class_counts = np.bincount(corpus.labels)
    smallest = int(class_counts[class_counts > 0].min())
    table = {}
    for size in sizes:
        if size < 1 or size > smallest:
            raise DataError(f"set size {size} exceeds the smallest class ({smallest} images)")
        correct = total = 0
        for trial in range(trials):
            rng = np.random.default_rng([seed, size, trial])
            sets = same_class_sets(corpus.labels, size, rng)
            for chunk in _batches(sets, EVAL_BATCH_SETS):
                index = np.stack(chunk)
                probs = np.asarray(model.predict(corpus.images[index]))
                labels = corpus.labels[index]
                if model.head_mode in SET_LEVEL_HEADS:
                    correct += int((probs.argmax(axis=-1) == labels[:, 0]).sum())
                    total += len(chunk)
                else:
                    correct += int((probs.argmax(axis=-1) == labels).sum())
                    total += labels.size
        table[size] = correct / max(total, 1)
    return table


def frozen_episodes(corpus, size, prevalences, count, seed, pool=None):
    """Seeded episodes cycling through ``prevalences``."""
    rng = np.random.default_rng(seed)
    return [
        make_anomaly_episode(corpus, size, prevalences[i % len(prevalences)], rng, pool=pool)
        for i in range(count)
    ]


def mean_episode_auprc(model, episodes):
    """Mean per-episode AUPRC over episodes holding at least one anomaly."""
    values = []
    by_size = {}
    for episode in episodes:
        by_size.setdefault(episode.size, []).append(episode)
    for group in by_size.values():
        for chunk in _batches(group, EVAL_BATCH_SETS):
            scores = np.asarray(model.predict(np.stack([e.images for e in chunk])))
            for episode, row in zip(chunk, scores):
                if episode.flags.any():
                    values.append(auprc(row, episode.flags))
    if not values:
        raise DataError("no episode contains an anomaly")
    return float(np.mean(values))


def anomaly_grid(model, corpus, sizes=(10, 20, 40), prevalences=(0.1, 0.2, 0.3, 0.4), trials=50, seed=0, pool=None):
    """Rows of (set size, prevalence, mean AUPRC) for every grid cell."""
    rows = []
    for size in sizes:
        for p_anomaly in prevalences:
            episodes = frozen_episodes(corpus, size, (p_anomaly,), trials, [seed, size, int(round(p_anomaly * 1000))], pool)
            rows.append((size, p_anomaly, mean_episode_auprc(model, episodes)))
    return rows
