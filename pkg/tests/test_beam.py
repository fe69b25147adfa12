import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from divdecode.beam import (BeamConfig, beam_search, clustered_select, hamming_penalty,
                            iterative_beam_search, iterative_runs, top_g_cap_select)
from divdecode.cluster import HashedEmbeddings, sequence_embedder
from divdecode.errors import CapabilityError, ValidationError
from divdecode.hypothesis import ScoredHypothesis, rank_key
from divdecode.model import TableModel, Vocabulary, SequenceModel, random_table_model, score_sequence
from divdecode.oracle import exhaustive_topk
from divdecode.rng import generator


def same(a, b):
    return [(h.full_ids, h.base_score) for h in a] == [(h.full_ids, h.base_score) for h in b]


def test_ab_example(ab_model):
    out = beam_search(ab_model, (), BeamConfig(beam_width=2, max_len=4))
    v = ab_model.vocab
    assert [h.tokens for h in out] == [(v.id("A"),), (v.id("B"),)]
    assert [h.base_score for h in out] == pytest.approx([math.log(0.6), math.log(0.4)], abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.integers(1, 4))
def test_matches_oracle_when_beam_covers_everything(seed, n_emit, L):
    if n_emit ** L > 256:
        L = 3
    m = random_table_model(generator(seed), n_emit, L)
    b = n_emit ** L
    got = beam_search(m, (), BeamConfig(beam_width=b, max_len=L))
    want = exhaustive_topk(m, (), L, b)
    assert [h.full_ids for h in got] == [h.full_ids for h in want]
    for g, w in zip(got, want):
        assert abs(g.base_score - w.base_score) <= 1e-9


def test_output_sorted_and_rescorable(toy_model, toy_prompts):
    for variant, kw in [("standard", {}), ("hamming", dict(hamming_lambda=0.8)),
                        ("top_g_cap", dict(g=3)), ("npad", dict(sigma0=0.3))]:
        x = toy_prompts[5]
        out = beam_search(toy_model, x, BeamConfig(beam_width=6, max_len=25, variant=variant, **kw))
        scores = [h.base_score for h in out]
        assert scores == sorted(scores, reverse=True)
        for h in out:
            assert h.base_score == pytest.approx(score_sequence(toy_model, x, h.tokens, h.finished), abs=1e-9)


def test_finished_hypotheses_never_extended(toy_model, toy_prompts):
    steps = []
    beam_search(toy_model, toy_prompts[0], BeamConfig(beam_width=8, max_len=40),
                on_step=lambda t, prev, sel: steps.append((prev, sel)))
    for prev, sel in steps:
        for h in sel:
            parent = prev[h.parent_index]
            if parent.finished:
                assert h.full_ids == parent.full_ids and h.finished


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 99))
def test_degenerate_variants_equal_standard(seed):
    from divdecode.model import build_ngram_model
    from conftest import random_word_corpus
    rng = np.random.default_rng(seed)
    m = build_ngram_model(random_word_corpus(rng), int(rng.integers(1, 4)), float(rng.uniform(0.05, 1)))
    x = m.encode("w0")
    base = beam_search(m, x, BeamConfig(beam_width=5, max_len=8))
    for variant, kw in [("hamming", dict(hamming_lambda=0.0)), ("top_g_cap", dict(g=5)),
                        ("npad", dict(sigma0=0.0)), ("clustered", dict(clusters=1))]:
        assert beam_search(m, x, BeamConfig(beam_width=5, max_len=8, variant=variant, **kw)) == base


def test_hamming_penalty_examples():
    a, b, c = 3, 4, 5
    prev = [ScoredHypothesis((c, a), 0.0, False)]
    assert hamming_penalty((a, b, a), prev) == -2
    assert hamming_penalty((a, b, a), []) == 0
    assert hamming_penalty((b, b), prev) == 0


def _children(prev, V, eos):
    out = []
    for i, h in enumerate(prev):
        if h.finished:
            out.append((i, h.full_ids))
        else:
            out.extend((i, h.tokens + (w,)) for w in range(V))
    return out


def test_hamming_selection_is_top_b_under_penalised_score(toy_model, toy_prompts):
    lam, b = 0.8, 5
    x = toy_prompts[7]
    eos = toy_model.vocab.eos
    checked = []

    def check(t, prev, sel):
        cands = []
        for i, full in _children(prev, toy_model.V, eos):
            h = prev[i] if prev[i].finished else None
            base = h.base_score if h else score_sequence(toy_model, x, full[:-1] if full[-1] == eos else full,
                                                         full[-1] == eos)
            value = base + lam * hamming_penalty(full, prev)
            cands.append((-value, full))
        cands.sort()
        want = [full for _, full in cands[:b]]
        assert [h.full_ids for h in sel] == want
        for h in sel:
            assert h.score == pytest.approx(h.base_score + lam * hamming_penalty(h.full_ids, prev), abs=1e-9)
        checked.append(t)

    beam_search(toy_model, x, BeamConfig(beam_width=b, max_len=12, variant="hamming", hamming_lambda=lam),
                on_step=check)
    assert len(checked) >= 5


def _fanout_model(n_first=5, n_second=6):
    first = [f"P{i}" for i in range(n_first)]
    second = [f"C{j}" for j in range(n_second)]
    w = np.arange(n_first, 0, -1, dtype=float)
    entries = {(): dict(zip(first, w / w.sum()))}
    for p in first:
        w2 = np.arange(n_second, 0, -1, dtype=float)
        entries[(p,)] = dict(zip(second, w2 / w2.sum()))
        for c in second:
            entries[(p, c)] = {"</s>": 1.0}
    return TableModel.from_probabilities(entries)


def test_top_g_one_gives_distinct_parents():
    m = _fanout_model()
    # the step-2 candidate pool: every child of every step-1 hypothesis
    root = m.step((), ())
    lp0 = root - np.logaddexp.reduce(root)
    cands = []
    firsts = [m.vocab.id(f"P{i}") for i in range(5)]
    for parent, p in enumerate(firsts):
        z = m.step((), (p,))
        lp = z - np.logaddexp.reduce(z)
        cands.extend(ScoredHypothesis((p, w), float(lp0[p] + lp[w]), False, parent_index=parent)
                     for w in range(m.V) if w != m.vocab.eos)
    sel = top_g_cap_select(cands, 1, 4)
    assert len(sel) == 4 and len({h.parent_index for h in sel}) == 4
    assert sel == [max((c for c in cands if c.parent_index == j), key=lambda h: h.base_score)
                   for j in range(4)]
    # uncapped selection piles onto the best parents instead
    assert len({h.parent_index for h in top_g_cap_select(cands, 4, 4)}) < 4


def test_top_g_limits_first_step_to_g():
    # a single root parent may contribute only g hypotheses
    out = beam_search(_fanout_model(), (), BeamConfig(beam_width=4, max_len=3, variant="top_g_cap", g=2))
    steps = []
    beam_search(_fanout_model(), (), BeamConfig(beam_width=4, max_len=3, variant="top_g_cap", g=2),
                on_step=lambda t, prev, sel: steps.append(sel))
    assert len(steps[0]) == 2 and len(steps[1]) == 4
    assert len(out) == 4


def test_top_g_select_caps_dominant_parent():
    b = 3
    cands = [ScoredHypothesis((3, w), -0.1 * w, False, parent_index=0) for w in range(2 * b)]
    cands += [ScoredHypothesis((4, w), -5.0 - w, False, parent_index=1) for w in range(b)]
    sel = top_g_cap_select(cands, 2, b)
    assert sum(h.parent_index == 0 for h in sel) == 2
    assert len(sel) == b


def test_capping_constraint_every_step(toy_model, toy_prompts):
    g = 2
    def check(t, prev, sel):
        counts = {}
        for h in sel:
            if not prev[h.parent_index].finished:
                counts[h.parent_index] = counts.get(h.parent_index, 0) + 1
        assert max(counts.values(), default=0) <= g
    beam_search(toy_model, toy_prompts[8], BeamConfig(beam_width=6, max_len=20, variant="top_g_cap", g=g),
                on_step=check)


def test_npad_noise_scale_and_reproducibility(toy_model, toy_prompts):
    x = toy_prompts[9]
    cfg = BeamConfig(beam_width=4, max_len=15, variant="npad", sigma0=0.3, seed=5)
    seen = []
    a = beam_search(toy_model, x, cfg, on_noise=lambda t, s, n: seen.append((t, s, n.copy())))
    assert [s for _, s, _ in seen] == [0.3 / t for t, _, _ in seen]
    # the captured noise is the seeded standard normal draw scaled by sigma_t
    allz = np.concatenate([n / s for _, s, n in seen])
    assert abs(allz.std() - 1.0) < 0.1 and abs(allz.mean()) < 0.1
    assert beam_search(toy_model, x, cfg) == a
    other = beam_search(toy_model, x, BeamConfig(beam_width=4, max_len=15, variant="npad", sigma0=3.0, seed=6))
    assert other != a


class _Plain(SequenceModel):
    def __init__(self):
        self.vocab = Vocabulary(["A"])

    def _logits(self, x, prefix):
        return np.zeros(self.V)


def test_npad_needs_perturbable_model():
    with pytest.raises(CapabilityError):
        beam_search(_Plain(), (), BeamConfig(variant="npad", sigma0=0.1, beam_width=2, max_len=2))


@pytest.mark.parametrize("kw", [dict(beam_width=0), dict(variant="nope"), dict(variant="top_g_cap", g=0),
                                dict(variant="top_g_cap", g=11), dict(variant="hamming", hamming_lambda=-1),
                                dict(variant="npad", sigma0=-0.1), dict(variant="clustered", clusters=11),
                                dict(max_len=0)])
def test_invalid_configs(ab_model, kw):
    with pytest.raises(ValidationError):
        beam_search(ab_model, (), BeamConfig(**kw))


def test_clustered_needs_embedder(toy_model):
    with pytest.raises(ValidationError):
        beam_search(toy_model, (), BeamConfig(variant="clustered", clusters=2, beam_width=4))


def _cands(n):
    return [ScoredHypothesis((3 + i,), -float(i), False) for i in range(n)]


def test_clustered_select_two_per_cluster():
    cands = _cands(20)
    centers = np.arange(5)[:, None] * 100.0 * np.ones((1, 2))
    pts = np.stack([centers[i % 5] + 0.01 * i for i in range(20)])
    sel = clustered_select(cands, 5, 10, points=pts)
    assert len(sel) == 10
    groups = [i % 5 for i in range(20) if cands[i] in sel]
    assert sorted(groups) == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]
    # and within each cluster the two best ranks were taken
    assert sel == [cands[i] for i in range(10)]


def test_clustered_select_singleton_fill():
    cands = _cands(8)
    pts = np.zeros((8, 2))
    pts[5] = (50.0, 50.0)  # rank-6 candidate sits alone
    pts[:5, 0] = np.arange(5) * 0.01
    pts[6:, 0] = np.arange(2) * 0.01
    sel = clustered_select(cands, 2, 4, points=pts)
    # big cluster gives ranks 0 and 1, the singleton gives rank 5, fill takes rank 2
    assert sel == [cands[0], cands[1], cands[2], cands[5]]


def test_clustered_c1_is_rank_order():
    cands = _cands(8)
    assert clustered_select(cands, 1, 4) == cands[:4]


def test_clustered_beam_runs(toy_model, toy_prompts):
    embed = sequence_embedder(HashedEmbeddings(16), toy_model.vocab)
    cfg = BeamConfig(beam_width=10, max_len=20, variant="clustered", clusters=5, seed=1)
    a = beam_search(toy_model, toy_prompts[0], cfg, embed=embed)
    assert len(a) == 10
    assert beam_search(toy_model, toy_prompts[0], cfg, embed=embed) == a


def one_step_model(n_content=9):
    content = [f"T{i}" for i in range(n_content)]
    w = np.arange(n_content + 1, 0, -1, dtype=float)
    first = dict(zip(content + ["</s>"], w / w.sum()))
    entries = {(): first}
    for tok in content:
        entries[(tok,)] = {"</s>": 1.0}
    return TableModel.from_probabilities(entries)


def test_iterative_one_step_ranks():
    m = one_step_model()
    assert m.V == 12
    p = np.exp(m.step((), ()) - np.logaddexp.reduce(m.step((), ())))
    ranked = [int(i) for i in np.argsort(-p, kind="stable")]
    runs = iterative_runs(m, (), 2, 5, 3)
    for i, (out, seen) in enumerate(runs, 1):
        firsts = sorted((h.full_ids[0] for h in out), key=ranked.index)
        assert firsts == ranked[2 * i - 2: 2 * i]


def test_iterative_first_run_is_standard(toy_model, toy_prompts):
    x = toy_prompts[3]
    (out, _), = iterative_runs(toy_model, x, 4, 1, 20)
    assert out == beam_search(toy_model, x, BeamConfig(beam_width=4, max_len=20))


def test_iterative_explored_sets_disjoint(toy_model, toy_prompts):
    runs = iterative_runs(toy_model, toy_prompts[6], 4, 5, 20)
    sets = [s for _, s in runs]
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            assert not sets[i] & sets[j]


def test_iterative_union_truncated(toy_model, toy_prompts):
    out = iterative_beam_search(toy_model, toy_prompts[6], 3, 4, 20)
    assert len(out) <= 12
    assert out == sorted(out, key=rank_key)


def test_exhaustion_returns_finished_so_far():
    m = TableModel.from_probabilities({(): {"</s>": 0.5, "A": 0.5}, ("A",): {"</s>": 1.0}})
    V, eos = m.V, m.vocab.eos
    everything_t1 = {(1, (w,)) for w in range(V)}
    assert beam_search(m, (), BeamConfig(beam_width=2, max_len=3), exclude=everything_t1) == []
    A = m.vocab.id("A")
    everything_t2 = {(2, (A, w)) for w in range(V)} | {(2, (eos,))}
    out = beam_search(m, (), BeamConfig(beam_width=2, max_len=3), exclude=everything_t2)
    assert [h.full_ids for h in out] == [(eos,)]
    assert out[0].base_score == pytest.approx(math.log(0.5))
