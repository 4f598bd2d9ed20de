from __future__ import annotations

import numpy as np
import pytest

from app.config import SimulationConfig, config_from_flat
from app.core.data import LabeledDataset
from app.core.numerics import seeded_rng


SMALL_FLAT = {
    "simulation.nodes": "4",
    "simulation.rounds": "3",
    "simulation.seed": "11",
    "synthetic.samples": "600",
    "synthetic.feature_dim": "5",
    "train.local_epochs": "1",
    "train.batch_size": "32",
}


def small_config(**overrides: object) -> SimulationConfig:
    """Configuração enxuta para testes rápidos (4 nós, 3 rodadas, dim 5)."""
    flat = dict(SMALL_FLAT)
    flat.update({k.replace("__", "."): str(v) for k, v in overrides.items()})
    return config_from_flat(flat)


@pytest.fixture
def config() -> SimulationConfig:
    return small_config()


@pytest.fixture
def rng():
    return seeded_rng(1234, 0)


@pytest.fixture
def toy_dataset() -> LabeledDataset:
    gen = np.random.default_rng(5)
    x = gen.normal(size=(40, 3))
    y = (x @ np.array([1.0, -0.5, 0.25]) > 0).astype(np.int8)
    return LabeledDataset(x, y)
