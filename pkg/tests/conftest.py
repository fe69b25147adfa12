import math

import numpy as np
import pytest

from divdecode.model import TableModel, build_ngram_model

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def ab_model():
    """P(A|BOS)=0.6, P(B|BOS)=0.4, both followed by EOS."""
    return TableModel.from_probabilities({
        (): {"A": 0.6, "B": 0.4},
        ("A",): {"</s>": 1.0},
        ("B",): {"</s>": 1.0},
    })


@pytest.fixture(scope="session")
def toy_model():
    from importlib import resources
    path = resources.files("divdecode") / "data" / "toy_corpus.txt"
    return build_ngram_model(str(path), 3, 0.01, unit="char")


@pytest.fixture(scope="session")
def toy_prompts(toy_model):
    from importlib import resources
    path = resources.files("divdecode") / "data" / "toy_prompts.txt"
    return [toy_model.encode(p) for p in path.read_text(encoding="utf-8").splitlines()]


def random_word_corpus(rng, n_lines=30, n_words=6):
    words = [f"w{i}" for i in range(n_words)]
    return [" ".join(rng.choice(words, size=rng.integers(1, 6))) for _ in range(n_lines)]


def entropy(p):
    p = np.asarray(p)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


LN = math.log
