import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from proapt.dataset import generate_synthetic_apt, preprocess_records, synthetic_schema  # noqa: E402
from proapt.model import build_network  # noqa: E402


def random_net(seed, n_in=4, hidden=3, n_act=2, softmax_position="pre_fc"):
    """A 64-bit network with weights spread wider than the default init."""
    net = build_network(n_in, hidden, n_act, seed, np.float64, softmax_position)
    rng = np.random.default_rng(seed + 10_000)
    for a in net.parameters().values():
        a[...] = rng.normal(0, 0.5, a.shape)
    return net


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synthetic_records():
    return generate_synthetic_apt(None, 2000, seed=3)


@pytest.fixture(scope="session")
def synthetic_dataset(synthetic_records):
    return preprocess_records(synthetic_records, synthetic_schema(), k=4, seed=0)
