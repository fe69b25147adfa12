"""Beam search and its diversity-promoting variants.

One engine covers standard beam search plus four selection-phase variants:

* ``top_g_cap`` keeps at most ``g`` children per parent before global ranking;
* ``hamming`` adds ``lambda * theta`` (theta = minus the number of candidate
  positions whose token occurs in the previous beam) at selection time;
* ``npad`` adds Gaussian noise with std ``sigma0 / t`` to the model state at
  step ``t`` (one draw per step, shared by every hypothesis);
* ``clustered`` clusters the best ``2b`` candidates into ``c`` groups and
  takes ``b // c`` from each, filling any shortfall by rank.

Iterative beam search repeats the standard search while rejecting every
``(timestep, sequence)`` state explored by earlier runs.

Finished hypotheses stay in the beam, occupy a slot and compete on score.
Search stops once every slot is finished or ``max_len`` tokens were emitted.
Ties are broken by lexicographic order of the emitted id sequence.
"""
from dataclasses import dataclass
import math
from typing import Callable, List, Optional, Set, Tuple

import numpy as np

from ._kernels import kernels
from .cluster import kmeans
from .errors import CapabilityError, ValidationError
from .hypothesis import CandidateSet, ScoredHypothesis, rank_key
from .rng import generator, mix

VARIANTS = ("standard", "top_g_cap", "hamming", "npad", "clustered")


@dataclass(frozen=True)
class BeamConfig:
    beam_width: int = 10
    variant: str = "standard"
    g: Optional[int] = None
    hamming_lambda: float = 0.0
    sigma0: float = 0.0
    clusters: int = 1
    max_len: int = 20
    seed: int = 0

    def validate(self):
        b = self.beam_width
        if isinstance(b, bool) or not isinstance(b, (int, np.integer)) or b < 1:
            raise ValidationError(f"beam_width must be an integer >= 1, got {b!r}")
        if self.max_len < 1:
            raise ValidationError("max_len must be >= 1")
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown beam variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "top_g_cap":
            if self.g is None or not 1 <= self.g <= b:
                raise ValidationError(f"top_g_cap needs 1 <= g <= b={b}, got {self.g!r}")
        if self.variant == "hamming" and not (self.hamming_lambda >= 0 and math.isfinite(self.hamming_lambda)):
            raise ValidationError("hamming lambda must be finite and >= 0")
        if self.variant == "npad" and not (self.sigma0 >= 0 and math.isfinite(self.sigma0)):
            raise ValidationError("npad sigma0 must be finite and >= 0")
        if self.variant == "clustered" and not 1 <= self.clusters <= b:
            raise ValidationError(f"clustered needs 1 <= c <= b={b}, got {self.clusters!r}")
        return self


class _Node:
    __slots__ = ("tokens", "base", "search", "finished", "parent", "value", "eos")

    def __init__(self, tokens, base, search, finished, parent, value, eos):
        self.tokens = tokens
        self.base = base
        self.search = search
        self.finished = finished
        self.parent = parent
        self.value = value
        self.eos = eos

    @property
    def full_ids(self):
        return self.tokens + (self.eos,) if self.finished else self.tokens

    def to_hypothesis(self):
        return ScoredHypothesis(self.tokens, self.base, self.finished, score=self.value,
                                parent_index=self.parent, eos=self.eos)


def _sel_key(node):
    return (-node.value, node.full_ids)


def hamming_penalty(candidate, prev_beam) -> int:
    """Minus the number of candidate positions whose token occurs in ``prev_beam``."""
    support = set()
    for h in prev_beam:
        support.update(h.full_ids)
    ids = candidate.full_ids if hasattr(candidate, "full_ids") else tuple(candidate)
    return -sum(1 for tok in ids if tok in support)


def top_g_cap_select(candidates, g: int, b: int, key=rank_key) -> list:
    """Keep the best ``g`` per ``parent_index`` group, then the best ``b`` overall."""
    if g < 1 or b < 1:
        raise ValidationError("g and b must be >= 1")
    groups = {}
    for c in candidates:
        groups.setdefault(c.parent_index, []).append(c)
    survivors = []
    for members in groups.values():
        survivors.extend(sorted(members, key=key)[:g])
    return sorted(survivors, key=key)[:b]


def clustered_select(candidates, c: int, b: int, embed: Optional[Callable] = None,
                     seed: int = 0, points=None) -> list:
    """Select ``min(b, n)`` of the score-sorted ``candidates`` via k-means.

    Takes the top ``b // c`` members of each of ``c`` clusters, then fills
    from the remaining candidates in rank order.  The result keeps the input
    (score) order.
    """
    n = len(candidates)
    if c < 1 or b < 1:
        raise ValidationError("c and b must be >= 1")
    want = min(b, n)
    if c == 1 or n <= 1:
        return list(candidates[:want])
    if points is None:
        if embed is None:
            raise ValidationError("clustered selection needs an embedder")
        points = np.stack([np.asarray(embed(h), dtype=np.float64) for h in candidates])
    res = kmeans(points, min(c, n), seed=seed)
    per = b // c
    taken = []
    for j in range(res.k):
        taken.extend(res.members(j)[:per].tolist())  # members are in rank order
    chosen = set(taken)
    for i in range(n):
        if len(chosen) >= want:
            break
        chosen.add(i)
    return [candidates[i] for i in sorted(chosen)][:want]


def _top_indices(values, count):
    """Indices of the ``count`` largest finite values, plus anything tied with the last."""
    ok = np.flatnonzero(np.isfinite(values))
    if ok.size <= count:
        return ok
    v = values[ok]
    kth = np.partition(v, ok.size - count)[ok.size - count]
    return ok[v >= kth]


def beam_search(model, x, config: BeamConfig, *, embed: Optional[Callable] = None,
                exclude: Optional[Set[Tuple[int, Tuple[int, ...]]]] = None,
                record: Optional[Set[Tuple[int, Tuple[int, ...]]]] = None,
                on_step: Optional[Callable] = None,
                on_noise: Optional[Callable] = None) -> CandidateSet:
    """Run beam search and return up to ``b`` hypotheses by descending base_score.

    ``embed`` maps a hypothesis (anything with ``.tokens``) to a vector and is
    required by the clustered variant with ``c > 1``.  ``exclude`` holds
    ``(t, emitted ids)`` states that may not be selected; ``record`` receives
    every selected state.  ``on_step(t, prev_beam, selected)`` and
    ``on_noise(t, sigma, noise)`` are observation hooks.
    """
    config.validate()
    variant = config.variant
    if variant == "npad" and not model.perturbable:
        raise CapabilityError("npad requires a perturbable model")
    if variant == "clustered" and config.clusters > 1 and embed is None:
        raise ValidationError("clustered beam search needs an embedder")
    b = config.beam_width
    V = model.V
    eos = model.vocab.eos
    lam = config.hamming_lambda if variant == "hamming" else 0.0
    noise_rng = generator(config.seed, 0x4E504144) if variant == "npad" else None
    x = tuple(x)

    excl_prefixes = {}
    if exclude:
        for t, seq in exclude:
            excl_prefixes.setdefault(t, set()).add(seq[:-1])

    beam = [_Node((), 0.0, 0.0, False, -1, 0.0, eos)]
    for t in range(1, config.max_len + 1):
        if all(h.finished for h in beam):
            break
        noise = None
        if noise_rng is not None:
            sigma = config.sigma0 / t
            if sigma > 0:
                noise = noise_rng.standard_normal(V) * sigma
            if on_noise is not None:
                on_noise(t, sigma, noise if noise is not None else np.zeros(V))

        live = [i for i, h in enumerate(beam) if not h.finished]
        fin = [i for i, h in enumerate(beam) if h.finished]
        support = np.zeros(V, dtype=bool)
        if lam:
            for h in beam:
                support[list(h.full_ids)] = True

        base_rows, search_rows = [], []
        for i in live:
            h = beam[i]
            logits = model.step(x, h.tokens)
            lp = kernels.log_softmax(logits)
            base_rows.append(h.base + lp)
            if noise is not None:
                search_rows.append(h.search + kernels.log_softmax(model.perturbed_step(x, h.tokens, noise)))
            else:
                search_rows.append(h.search + lp)
        if live:
            base_mat = np.vstack(base_rows)
            search_mat = np.vstack(search_rows)
            value_mat = search_mat.copy()
            if lam:
                lens = np.array([len(beam[i].tokens) for i in live], dtype=np.float64)
                theta = -(lens[:, None] + support[None, :])
                value_mat = value_mat + lam * theta
            if exclude:
                prefixes = excl_prefixes.get(t, ())
                for r, i in enumerate(live):
                    if beam[i].tokens in prefixes:
                        for w in range(V):
                            child = beam[i].tokens + (w,)
                            if (t, child) in exclude:
                                value_mat[r, w] = -np.inf
        else:
            base_mat = search_mat = value_mat = np.empty((0, V))

        fin_values = np.array([beam[i].search - lam * len(beam[i].full_ids) for i in fin])
        if exclude:
            for j, i in enumerate(fin):
                if (t, beam[i].full_ids) in exclude:
                    fin_values[j] = -np.inf

        def make(flat):
            if flat >= value_mat.size:
                i = fin[flat - value_mat.size]
                h = beam[i]
                return _Node(h.tokens, h.base, h.search, True, i, float(fin_values[flat - value_mat.size]), eos)
            r, w = divmod(int(flat), V)
            parent = beam[live[r]]
            done = w == eos
            return _Node(parent.tokens if done else parent.tokens + (w,),
                         float(base_mat[r, w]), float(search_mat[r, w]), done, live[r],
                         float(value_mat[r, w]), eos)

        all_values = np.concatenate([value_mat.ravel(), fin_values])
        if variant == "top_g_cap":
            g = config.g
            pool = []
            for r in range(len(live)):
                row = value_mat[r]
                idx = _top_indices(row, g)
                nodes = sorted((make(r * V + int(w)) for w in idx), key=_sel_key)[:g]
                pool.extend(nodes)
            pool.extend(make(value_mat.size + j) for j in range(len(fin)) if np.isfinite(fin_values[j]))
            selected = sorted(pool, key=_sel_key)[:b]
        elif variant == "clustered":
            idx = _top_indices(all_values, 2 * b)
            pool = sorted((make(int(f)) for f in idx), key=_sel_key)[: 2 * b]
            if config.clusters > 1 and len(pool) > b:
                selected = clustered_select(pool, config.clusters, b, embed=embed,
                                            seed=mix(config.seed, t))
            else:
                selected = pool[:b]
        else:
            idx = _top_indices(all_values, b)
            selected = sorted((make(int(f)) for f in idx), key=_sel_key)[:b]

        if not selected:
            # every candidate was excluded: the run ends with what it has finished
            done = [h for h in beam if h.finished]
            return sorted((h.to_hypothesis() for h in done), key=rank_key)

        if on_step is not None:
            on_step(t, [h.to_hypothesis() for h in beam], [h.to_hypothesis() for h in selected])
        if record is not None:
            record.update((t, h.full_ids) for h in selected)
        beam = selected

    return sorted((h.to_hypothesis() for h in beam), key=rank_key)


def iterative_runs(model, x, b: int, iterations: int, max_len: int) -> List[Tuple[CandidateSet, set]]:
    """Run ``iterations`` exclusion-chained beam searches; return (outputs, explored) per run."""
    if iterations < 1:
        raise ValidationError("iterations must be >= 1")
    cfg = BeamConfig(beam_width=b, max_len=max_len)
    explored: set = set()
    runs = []
    for _ in range(iterations):
        seen: set = set()
        out = beam_search(model, x, cfg, exclude=explored, record=seen)
        runs.append((out, seen))
        explored |= seen
    return runs


def iterative_beam_search(model, x, b: int, iterations: int, max_len: int) -> CandidateSet:
    """Union of all runs' outputs by descending base_score, truncated to ``b * iterations``."""
    pool = [h for out, _ in iterative_runs(model, x, b, iterations, max_len) for h in out]
    return sorted(pool, key=rank_key)[: b * iterations]
