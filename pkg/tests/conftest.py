"""Test configuration and fixtures"""

import numpy as np
import pytest
import structlog

from shared.imaging.operators import FourierModel, IdentityModel, radon_build
from shared.imaging.synthdata import dataset_from_config, make_mask
from shared.models.configs import CriticArch, DataConfig, RegularizerArch, TrainConfig


@pytest.fixture(autouse=True)
def reset_structlog():
    """Leave no configured loggers bound to captured streams between tests"""
    yield
    structlog.reset_defaults()


@pytest.fixture
def rng():
    """Fixed random generator for test inputs"""
    return np.random.default_rng(1234)


@pytest.fixture
def fourier_model():
    """16×16 masked Fourier model at 4× acceleration"""
    return FourierModel(make_mask(16, 4.0, 0.125, seed=0))


@pytest.fixture
def radon_model():
    """16×16 parallel-beam model with 12 angles"""
    return radon_build(16, 12)


@pytest.fixture
def identity_model():
    return IdentityModel(16)


@pytest.fixture
def tiny_data_cfg():
    """A few samples of each split at 16×16"""
    return DataConfig(n=16, n_unpaired=6, n_clean=6, n_paired=3, n_val=2, seed=3)


@pytest.fixture
def tiny_train_cfg():
    """Narrow networks and a short path so a training epoch takes well under a second"""
    return TrainConfig(
        N=3,
        epochs=1,
        batch=3,
        regularizer=RegularizerArch(channels=[1, 4, 1]),
        critic=CriticArch(channels=[1, 4]),
        seed=3,
    )


@pytest.fixture
def tiny_dataset(tiny_data_cfg):
    return dataset_from_config(tiny_data_cfg)


@pytest.fixture
def run_config_file(tmp_path):
    """JSON run config sized for command-line tests"""
    path = tmp_path / "run.json"
    path.write_text(
        """{
  "data": {"n": 16, "n_unpaired": 4, "n_clean": 4, "n_paired": 2, "n_val": 2, "seed": 5},
  "train": {"N": 2, "batch": 2, "epochs": 1,
            "regularizer": {"channels": [1, 2, 1]}, "critic": {"channels": [1, 2]}}
}""",
        encoding="utf-8",
    )
    return path
