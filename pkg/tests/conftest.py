from pathlib import Path

import pytest

from framelens.corpus import SynthConfig, build_vocab, generate_synthetic, load_corpus
from framelens.lexicon import load_lexicon

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def get_lex():
    return load_lexicon(DATA / "get_lexicon.json")


@pytest.fixture(scope="session")
def get_corpus(get_lex):
    return load_corpus(DATA / "get_corpus.jsonl", get_lex)


@pytest.fixture(scope="session")
def get_vocab(get_lex, get_corpus):
    return build_vocab(get_corpus, get_lex)


@pytest.fixture(scope="session")
def synth():
    """Seed-7 desk dataset: 24 frames in 6 families."""
    lex, corpus = generate_synthetic(SynthConfig(seed=7))
    return lex, corpus, build_vocab(corpus, lex)


@pytest.fixture(scope="session")
def small_synth():
    cfg = SynthConfig(n_families=2, frames_per_family=3, lus=8, seed=3,
                      instances_per_split={"exemplar": 24, "train": 12, "dev": 6, "test": 12})
    lex, corpus = generate_synthetic(cfg)
    return lex, corpus, build_vocab(corpus, lex)
