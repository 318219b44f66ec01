import numpy as np
import pytest

from ldcp.dataset import synth_dataset
from ldcp.mlp import LooTrainer, MlpArchitecture, TrainConfig

# Desk-scale training recipe shared by the end-to-end tests: 200 entries are
# too few for batch 1024 / 10 epochs (that is ten SGD steps in total).
DESK_TRAIN = TrainConfig(epochs=50, learning_rate=0.05, batch_size=32, l1_coefficient=1e-5, seed=0)
DESK_DIM = 5


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_data():
    return synth_dataset(40, 3, seed=3)


@pytest.fixture(scope="session")
def small_trainer(small_data):
    arch = MlpArchitecture.from_hidden(3, [4, 3])
    return LooTrainer(arch, small_data, TrainConfig(epochs=20, learning_rate=0.1, batch_size=8, seed=1))
