import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from harcnn import synthetic  # noqa: E402
from harcnn.model import ModelConfig  # noqa: E402

# Reduced geometry small enough for finite differences over every parameter.
REDUCED = ModelConfig(input_len=40, channels=2, num_classes=3, conv1_kernel=8,
                      conv1_out_channels=3, pool_window=4, pool_stride=2, conv2_kernel=3,
                      conv2_out_channels=3, fc_units=16, l2_lambda=0.01)


@pytest.fixture
def reduced_config():
    return REDUCED


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixture_tree(tmp_path):
    """2 subjects x 3 activities, 450 samples x 3 channels each."""
    root = tmp_path / "data"
    synthetic.write_tree(root, ["jump", "run", "sit"], subjects=("subject1", "subject2"),
                         length=450, channels=3, seed=3)
    return root
