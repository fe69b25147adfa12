import ast
import math
from pathlib import Path

import numpy as np
import pytest

import divdecode.oracle as oracle
from divdecode.errors import BudgetExceededError
from divdecode.model import TableModel, random_table_model
from divdecode.oracle import (best_partition, exact_sampling_distribution, exhaustive_topk,
                              pairwise_groups)
from divdecode.rng import generator
from divdecode.samplers import greedy_decode


def test_topk_ab_model(ab_model):
    top = exhaustive_topk(ab_model, (), 2, 2)
    v = ab_model.vocab
    assert [h.tokens for h in top] == [(v.id("A"),), (v.id("B"),)]
    assert top[0].base_score == pytest.approx(math.log(0.6), abs=1e-12)
    assert top[1].base_score == pytest.approx(math.log(0.4), abs=1e-12)
    assert all(h.finished for h in top)


def test_top1_on_chain_is_greedy():
    m = TableModel.from_probabilities({
        (): {"A": 1.0}, ("A",): {"B": 1.0}, ("A", "B"): {"</s>": 1.0}})
    (top,) = exhaustive_topk(m, (), 4, 1)
    g = greedy_decode(m, (), 4)
    assert top.full_ids == g.full_ids
    assert top.base_score == pytest.approx(0.0, abs=1e-12)


def test_one_step_distribution(ab_model):
    dist, trunc = exact_sampling_distribution(ab_model, (), 3)
    v = ab_model.vocab
    assert dist[(v.id("A"),)] == pytest.approx(0.6)
    assert dist[(v.id("B"),)] == pytest.approx(0.4)
    assert sum(dist.values()) + trunc == pytest.approx(1.0, abs=1e-9)


def test_two_step_chain_products():
    m = TableModel.from_probabilities({
        (): {"A": 0.7, "</s>": 0.3},
        ("A",): {"B": 0.5, "</s>": 0.5},
        ("A", "B"): {"</s>": 1.0}})
    dist, trunc = exact_sampling_distribution(m, (), 2)
    A, B = m.vocab.id("A"), m.vocab.id("B")
    assert dist[()] == pytest.approx(0.3, abs=1e-12)
    assert dist[(A,)] == pytest.approx(0.35, abs=1e-12)
    # (A, B) needs a third step to finish, so at L=2 its mass is truncated
    assert trunc == pytest.approx(0.35, abs=1e-12)
    dist3, trunc3 = exact_sampling_distribution(m, (), 3)
    assert dist3[(A, B)] == pytest.approx(0.35, abs=1e-12)


def test_normalisation_on_random_tables():
    rng = generator(11)
    for _ in range(10):
        m = random_table_model(rng, 3, 3)
        dist, trunc = exact_sampling_distribution(m, (), 3)
        assert abs(math.fsum(dist.values()) + trunc - 1.0) <= 1e-9


def test_guard_refuses(toy_model):
    with pytest.raises(BudgetExceededError):
        exhaustive_topk(toy_model, (), 6, 1)
    with pytest.raises(BudgetExceededError):
        exact_sampling_distribution(toy_model, (), 6)


def test_oracle_shares_no_decoder_code():
    tree = ast.parse(Path(oracle.__file__).read_text(encoding="utf-8"))
    imported = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            imported.add(node.module or "")
    assert not any(mod.endswith(("beam", "samplers", "cluster", "metrics", "_kernels")) for mod in imported)


def test_best_partition_pairs():
    pts = [(0, 0), (0, 1), (10, 10), (10, 11)]
    inertia, labels = best_partition(pts, 2)
    assert pairwise_groups(labels) == {frozenset({0, 1}), frozenset({2, 3})}
    assert inertia == pytest.approx(1.0)
