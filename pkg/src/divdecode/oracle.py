"""Brute-force reference implementations for validating decoders and metrics.

Deliberately naive: nothing here shares selection or counting code with the
decoders it checks, only the model contract.
"""
from itertools import product
import math

import numpy as np

from .errors import BudgetExceededError, ValidationError
from .hypothesis import ScoredHypothesis

GUARD = 10**6


def _check_budget(V, L, guard):
    if V ** L > guard:
        raise BudgetExceededError(f"V^L = {V}^{L} exceeds the enumeration guard {guard}")


def _log_probs(model, x, prefix):
    z = [float(v) for v in model.step(x, prefix)]
    m = max(z)
    lse = m + math.log(sum(math.exp(v - m) for v in z))
    return [v - lse for v in z]


def enumerate_sequences(model, x, L, guard=GUARD):
    """Yield ``(tokens, logprob, finished)`` for every complete or length-L sequence."""
    V = model.V
    _check_budget(V, L, guard)
    eos = model.vocab.eos
    x = tuple(x)

    def walk(prefix, lp):
        logp = _log_probs(model, x, prefix)
        for w in range(V):
            s = lp + logp[w]
            if w == eos:
                yield prefix, s, True
            elif len(prefix) + 1 == L:
                yield prefix + (w,), s, False
            else:
                yield from walk(prefix + (w,), s)

    yield from walk((), 0.0)


def exhaustive_topk(model, x, L: int, k: int, guard=GUARD):
    """Exact top-k sequences by log-likelihood (ties -> lexicographic ids)."""
    if L < 1 or k < 1:
        raise ValidationError("L and k must be >= 1")
    eos = model.vocab.eos
    rows = [(-lp, toks + (eos,) if fin else toks, toks, lp, fin)
            for toks, lp, fin in enumerate_sequences(model, x, L, guard)]
    rows.sort(key=lambda r: (r[0], r[1]))
    return [ScoredHypothesis(toks, lp, fin, eos=eos) for _, _, toks, lp, fin in rows[:k]]


def exact_sampling_distribution(model, x, L: int, guard=GUARD):
    """Probability of every complete (EOS-terminated, <= L steps) sequence.

    Returns ``(distribution, truncated_mass)``.
    """
    dist = {}
    truncated = 0.0
    for toks, lp, fin in enumerate_sequences(model, x, L, guard):
        if fin:
            dist[toks] = math.exp(lp)
        else:
            truncated += math.exp(lp)
    return dist, truncated


# -- metric recomputation ---------------------------------------------------


def _as_lists(candidates):
    out = []
    for c in candidates:
        if hasattr(c, "tokens"):
            out.append(list(c.tokens))
        elif isinstance(c, str):
            out.append(c.split())
        else:
            out.append(list(c))
    return out


def brute_kgram_table(candidates, k):
    table = {}
    for toks in _as_lists(candidates):
        i = 0
        while i + k <= len(toks):
            key = "\x1f".join(str(t) for t in toks[i:i + k])
            table[key] = table.get(key, 0) + 1
            i += 1
    return table


def brute_dist_k(candidates, k):
    seqs = _as_lists(candidates)
    total = 0
    for s in seqs:
        total += len(s)
    return len(brute_kgram_table(seqs, k)) / total


def brute_ent_k(candidates, k):
    table = brute_kgram_table(candidates, k)
    total = float(sum(table.values()))
    h = 0.0
    for f in table.values():
        p = f / total
        h -= p * math.log(p)
    return h


# -- clustering -------------------------------------------------------------


def best_partition(points, k):
    """Minimum-inertia assignment of points to k non-empty groups, by enumeration."""
    X = np.asarray(points, dtype=np.float64)
    n = X.shape[0]
    _check_budget(k, n, GUARD)
    best = (math.inf, None)
    for labels in product(range(k), repeat=n):
        if len(set(labels)) != k or labels[0] != 0:
            continue
        lab = np.array(labels)
        inertia = 0.0
        for j in range(k):
            pts = X[lab == j]
            inertia += float(((pts - pts.mean(axis=0)) ** 2).sum())
        if inertia < best[0] - 1e-12:
            best = (inertia, lab)
    return best


def pairwise_groups(labels):
    """Partition as a set of frozensets of indices (label-permutation invariant)."""
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), set()).add(i)
    return {frozenset(g) for g in groups.values()}

