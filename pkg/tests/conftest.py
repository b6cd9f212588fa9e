import sys

import pytest

from tpekit.base_bpe import BaseTokenizer
from tpekit.corpus import synthetic_clinical_corpus, synthetic_general_corpus
from tpekit.evaluation import build_pipeline
from tpekit.mining import MiningConfig
from tpekit.training import DEFAULT_SPECIAL, train_bpe


def toy_tokenizer(merges, specials=()) -> BaseTokenizer:
    return BaseTokenizer.from_merges(merges, specials)


# Spells words out the way a general-purpose merge table might.
SPIROMETRY_MERGES = [
    ("S", "p"), ("Sp", "i"), ("r", "o"), ("ro", "m"), ("e", "t"), ("et", "r"), ("etr", "y"),
    ("a", "t"), ("C", "at"),
]


@pytest.fixture(scope="session")
def small_corpus():
    return synthetic_clinical_corpus(200_000, seed=3)


@pytest.fixture(scope="session")
def small_base():
    texts = synthetic_general_corpus(200_000, seed=1) + synthetic_clinical_corpus(60_000, seed=7)
    return train_bpe(texts, 1500, [DEFAULT_SPECIAL])


@pytest.fixture(scope="session")
def small_medtpe(small_base, small_corpus):
    return build_pipeline(small_base, small_corpus, MiningConfig(n_max=4, budget_m=300))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
