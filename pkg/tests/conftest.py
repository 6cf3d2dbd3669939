import numpy as np
import pytest

from sclrobust.data import make_datasets, synthesize_blobs
from sclrobust.model import ModelConfig
from sclrobust.training import Mode, RunMode, TrainConfig, train

TINY = ModelConfig(input_channels=3, input_size=8, channel_widths=(4, 6, 6), feature_dim=6,
                   projection_hidden=6, projection_out=5, num_classes=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def blobs():
    """3 classes x 200 train, 50 test, 8x8, sigma 0.05, seed 0."""
    train_s = synthesize_blobs(3, 200, 8, 0.05, 0, stream=0)
    test_s = synthesize_blobs(3, 50, 8, 0.05, 0, stream=1)
    return make_datasets("blobs", 3, train_s, test_s)


@pytest.fixture(scope="session")
def trained_baseline(blobs):
    train_set, test_set = blobs
    params, history = train(TrainConfig(RunMode(Mode.BASELINE), epochs=10, seed=0), train_set,
                            eval_set=test_set, model_config=ModelConfig(num_classes=3))
    return params, history
