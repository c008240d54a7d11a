"""Shared fixtures: seeded generators, tiny model specs and small corpora."""

import copy

import numpy as np
import pytest
import yaml

from src.data import gen_attribute_corpus, gen_classification
from src.models import LayerSpec, ModelSpec
from src.tensor_core import Tape, backward, relative_error
from utils.config_manager import load_config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _tiny_layers(head):
    layers = [
        LayerSpec(kind="setconv2d", filters=2, kernel=3),
        LayerSpec(kind="setconv2d", filters=2, kernel=3),
        LayerSpec(kind="gap"),
    ]
    if head == "anomaly":
        return layers + [
            LayerSpec(kind="dense", out_width=1, activation="identity"),
            LayerSpec(kind="sigmoid"),
        ]
    return layers + [
        LayerSpec(kind="dense", out_width=3, activation="identity"),
        LayerSpec(kind="softmax"),
    ]


@pytest.fixture
def tiny_cst_spec():
    """Two SetConv2D blocks on 6x6x2 inputs, three classes."""
    return ModelSpec("tiny-cst", (6, 6, 2), tuple(_tiny_layers("cic")), "cic")


@pytest.fixture
def tiny_anomaly_spec():
    return ModelSpec("tiny-anomaly", (16, 16, 1), tuple(_tiny_layers("anomaly")), "anomaly")


@pytest.fixture
def small_net_spec():
    """A pooled two-block network on 16x16 glyphs with four classes."""
    layers = (
        LayerSpec(kind="setconv2d", filters=2),
        LayerSpec(kind="maxpool", pool=2),
        LayerSpec(kind="setconv2d", filters=3),
        LayerSpec(kind="maxpool", pool=2),
        LayerSpec(kind="gap"),
        LayerSpec(kind="dense", out_width=4, activation="identity"),
        LayerSpec(kind="softmax"),
    )
    return ModelSpec("small-net", (16, 16, 1), layers, "cic")


@pytest.fixture(scope="session")
def glyph_corpus():
    return gen_classification(num_classes=4, per_class=10, image_size=16, p_ambiguous=0.5, seed=3)


@pytest.fixture(scope="session")
def attribute_corpus():
    return gen_attribute_corpus(count=400, image_size=16, seed=5)


@pytest.fixture
def grad_of():
    """Gradient of ``f`` at ``x`` through the tape."""

    def compute(f, x):
        with Tape() as tape:
            watched = tape.watch(x)
            out = f(watched)
        backward(tape, out)
        return tape.gradient(watched).data

    return compute


@pytest.fixture
def assert_grad_close():
    """Element-wise agreement: relative error <= rtol, or both values negligibly small."""

    def check(analytic, numeric, rtol=1e-4, atol=1e-8):
        analytic = np.asarray(getattr(analytic, "data", analytic), dtype=np.float64)
        numeric = np.asarray(getattr(numeric, "data", numeric), dtype=np.float64)
        rel = relative_error(analytic, numeric)
        close = (rel <= rtol) | (np.abs(analytic - numeric) <= atol)
        assert close.all(), f"max relative error {rel[~close].max():.3e}"

    return check


@pytest.fixture
def workspace_config(tmp_path):
    """Default configuration rewritten to keep every path under ``tmp_path``."""
    config = copy.deepcopy(load_config())
    config["paths"] = {
        "output_root": str(tmp_path / "runs"),
        "logs": str(tmp_path / "logs"),
        "data": str(tmp_path / "data" / "classification"),
        "anomaly_data": str(tmp_path / "data" / "anomaly"),
    }
    config["data"]["classification"].update({"num_classes": 4, "per_class": 40, "image_size": 16})
    config["data"]["anomaly"].update({"count": 400, "image_size": 16})
    config["model"].update({"preset": "cifar-cst", "divisor": 32, "task": "cic"})
    config["training"]["max_epochs"] = 1
    config["training"]["ct"]["n_max"] = 3
    config["evaluation"]["trials"] = 1
    return config


@pytest.fixture
def config_file(tmp_path, workspace_config):
    path = tmp_path / "config.yaml"
    with open(path, "w") as handle:
        yaml.safe_dump(workspace_config, handle, sort_keys=False)
    return path
