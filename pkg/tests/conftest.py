import numpy as np
import pytest
import torch

from textcost.constraints import QuantitativeSpec, render_with_template
from textcost.corpus import CorpusSplit, Pair, collect_rollouts, label_pairs, split_pairs
from textcost.gridworld import GridConfig

from helpers import small_vocab, tiny_model

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def vocab():
    return small_vocab()


@pytest.fixture()
def model(vocab):
    return tiny_model(vocab=vocab)


@pytest.fixture(scope="session")
def tiny_env_config():
    return GridConfig(
        width=8,
        height=8,
        entity_counts={"lava": 3, "water": 2, "grass": 2},
        reward_objects={"key": 1, "ball": 1},
        horizon=15,
        layout_mode="scatter",
    )


@pytest.fixture(scope="session")
def tiny_corpus(tiny_env_config):
    """A small real corpus: random rollouts labeled against a handful of specs."""
    rng = np.random.default_rng(7)
    episodes = collect_rollouts(tiny_env_config, 60, seed=7)
    specs = [
        QuantitativeSpec("lava", 0),
        QuantitativeSpec("lava", 2),
        QuantitativeSpec("water", 1),
        QuantitativeSpec("grass", 0),
    ]
    pairs, negatives = label_pairs(episodes, specs, rng)
    train, test = split_pairs(pairs, split_seed=7)
    assert len(train) >= 8 and len(test) >= 2, "tiny corpus unexpectedly small"
    return CorpusSplit(train, test, 7, negatives)


@pytest.fixture()
def one_pair(tiny_corpus) -> Pair:
    return tiny_corpus.train[0]


def pytest_collection_modifyitems(config, items):
    # Keep acceptance tests last so unit failures surface first.
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")
