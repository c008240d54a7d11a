"""Desk-scale trend checks; run with ``pytest -m slow``."""

import logging

import numpy as np
import pytest

from src.data import accuracy_by_set_size, anomaly_grid, gen_attribute_corpus, gen_classification, make_anomaly_episode
from src.explain import CamRequest, Heatmap, grad_cam, localization_score
from src.models import build, preset_spec
from src.training import CtConfig, EarlyStop, TrainConfig, train

pytestmark = pytest.mark.slow

logger = logging.getLogger("cst.train")


@pytest.fixture(scope="module")
def context_run():
    corpus = gen_classification(10, 100, image_size=16, p_ambiguous=0.5, seed=7)
    spec = preset_spec("cifar-cst", task="cic", num_classes=10, divisor=4, input_shape=(16, 16, 1))
    cfg = TrainConfig(
        ct=CtConfig(n_min=2, n_max=5, batch_sets=8, seed=13),
        max_epochs=60,
        dropout_seed=17,
        eval_seed=19,
    )
    result = train(build(spec, seed=11), corpus, "cic", cfg, EarlyStop(patience=10), logger)
    return result.model, corpus


@pytest.fixture(scope="module")
def anomaly_run():
    corpus = gen_attribute_corpus(3000, image_size=24, seed=7)
    spec = preset_spec("anomaly-cst-desk", task="anomaly", num_classes=1, divisor=4, input_shape=(24, 24, 1))
    cfg = TrainConfig(max_epochs=30, dropout_seed=17, eval_seed=19, episodes_per_epoch=400)
    result = train(build(spec, seed=11), corpus, "anomaly", cfg, EarlyStop(patience=10), logger)
    return result.model, corpus


def test_context_improves_accuracy(context_run):
    model, corpus = context_run
    table = accuracy_by_set_size(model, corpus.split("test"), [1, 2, 3, 5], trials=3, seed=19)
    values = [table[size] for size in (1, 2, 3, 5)]
    assert all(later >= earlier - 0.01 for earlier, later in zip(values, values[1:]))
    assert table[5] - table[1] >= 0.10


def test_anomaly_auprc_beats_prevalence(anomaly_run):
    model, corpus = anomaly_run
    grid = anomaly_grid(model, corpus, sizes=(10, 40), prevalences=(0.2,), trials=50, seed=19, pool=corpus.split_indices("test"))
    by_size = {size: value for size, _, value in grid}
    assert by_size[10] >= 0.2 + 0.25
    assert by_size[40] > by_size[10]


def test_penultimate_heatmaps_find_the_attribute_patches(anomaly_run):
    model, corpus = anomaly_run
    rng = np.random.default_rng(19)
    pool = corpus.split_indices("test")
    episodes = [make_anomaly_episode(corpus, 10, 0.2, rng, pool=pool) for _ in range(50)]

    def score(selector):
        maps = [grad_cam(CamRequest(model, e.images, layer_selector=selector)) for e in episodes]
        return localization_score(maps, episodes)

    uniform = localization_score(
        [[Heatmap(np.ones((24, 24)), i) for i in range(e.size)] for e in episodes], episodes
    )
    penultimate = score("penultimate_setconv")
    assert penultimate >= 2 * uniform
    assert penultimate >= score("last_setconv")
