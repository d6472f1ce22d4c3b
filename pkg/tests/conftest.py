"""Preps defaults and shared data for tests"""

import logging

import pytest

from evpose.posenet import ModelConfig
from evpose.synthgen import make_dataset
from evpose.trainer import TrainConfig

logger = logging.getLogger(__name__)


def pytest_configure():
    """Effectively global vars, including some functions."""
    pytest.interval = 8333
    pytest.tolerance = 1e-4
    pytest.sensor = 96
    pytest.tiny_model = tiny_model
    pytest.tiny_train = tiny_train
    logging.getLogger("evpose").setLevel(logging.DEBUG)


def tiny_model(**changes) -> ModelConfig:
    """32-pixel input, stride 4, one LSTM layer: small enough to train in a test."""
    values = {
        "input_size": 32,
        "heatmap_stride": 4,
        "K": 13,
        "feature_channels": 4,
        "encoder_depth": 4,
        "encoder_blocks": 0,
        "lstm_layers": 1,
        "attention_channels": 2,
        "T_max": 4,
        "variant": "dense_att",
    }
    values.update(changes)
    return ModelConfig.from_dict(values)


def tiny_train(**changes) -> TrainConfig:
    """Short clips, two epochs, no augmentation unless asked."""
    values = {"T": 3, "batch_size": 2, "epochs_max": 2, "lr": 1e-3, "augment": False, "pose_aug": False}
    values.update(changes)
    return TrainConfig.from_dict(values)


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """Four 12-frame recordings on a 96x96 sensor, generated once per session."""
    out = tmp_path_factory.mktemp("synth") / "data"
    rows = make_dataset(out, 4, duration=100_000, seed=7, width=pytest.sensor, height=pytest.sensor, threads=2)
    logger.debug("synth fixture: %s", [(r["id"], r["split"], r["events"]) for r in rows])
    return out
