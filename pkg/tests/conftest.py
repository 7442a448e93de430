import numpy as np
import pytest

from dlgparse.corpus import build_vocab
from dlgparse.model import ModelConfig, ModelParams

from helpers import corpus_to_dialogues, make_synthetic_corpus


@pytest.fixture(scope="session")
def synth_corpus():
    return make_synthetic_corpus(n_dialogues=20, seed=7)


@pytest.fixture(scope="session")
def synth_dialogues(synth_corpus):
    return corpus_to_dialogues(synth_corpus)


@pytest.fixture(scope="session")
def synth_vocab(synth_dialogues):
    return build_vocab(synth_dialogues)


def tiny_model(vocab, mode="full", shared=False, seed=0, repr_dim=8):
    config = ModelConfig(vocab_size=vocab.n_words, n_rel_types=vocab.n_relations,
                         word_dim=6, rel_dim=4, repr_dim=repr_dim, head_dim=8,
                         mode=mode, shared=shared)
    return ModelParams.create(config, np.random.default_rng(seed))


@pytest.fixture()
def tiny_params(synth_vocab):
    return tiny_model(synth_vocab)
