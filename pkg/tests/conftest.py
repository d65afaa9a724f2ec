import numpy as np
import pytest

from fedexsim import data, federated, models


@pytest.fixture(scope="session")
def mlp_spec():
    return models.ArchitectureSpec("mlp", (8,), 3, 16)


@pytest.fixture(scope="session")
def blob_bundle():
    base = data.synth_blobs(3, 100, 8, 6.0, seed=1)
    test = data.synth_blobs(3, 40, 8, 6.0, seed=99, name="blobs/test")
    return data.split(base, split_seed=2, test=test)


@pytest.fixture(scope="session")
def victim(mlp_spec, blob_bundle):
    cfg = models.TrainConfig(epochs=10, seed=5, batch_size=16)
    return federated.run_centralized(blob_bundle.victim_train, mlp_spec, cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
