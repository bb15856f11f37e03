import numpy as np
import pytest

from bytehue.bundle import ModelBundle
from bytehue.encoder import EncodingConfig
from bytehue.ingest import LabelVocabulary
from bytehue.nn import Dense, NetworkConfig, init_params, micro_network


@pytest.fixture(scope="session")
def tiny_encoding():
    return EncodingConfig(target_size=(16, 16))


@pytest.fixture(scope="session")
def tiny_bundle(tiny_encoding):
    """Untrained micro-style bundle on 16x16 inputs; fast enough for API tests."""
    binary_net = micro_network(input_size=16, name="tiny")
    vocab = LabelVocabulary(("BugA", "BugB", "BugC"), version="test-3")
    ml_net = NetworkConfig(
        name="tiny-multilabel",
        input_shape=binary_net.input_shape,
        layers=binary_net.layers[:-1] + (Dense(3),),
        head=("sigmoid", 3),
    )
    return ModelBundle(
        binary_net=binary_net,
        binary_params=init_params(binary_net, 1),
        multilabel_net=ml_net,
        multilabel_params=init_params(ml_net, 2),
        vocabulary=vocab,
        encoding=tiny_encoding,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
