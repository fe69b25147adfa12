"""Diversity and quality statistics over one prompt's candidate set."""
from collections import Counter
from dataclasses import dataclass, field
import math
from typing import Dict, List

from .errors import UndefinedMetricError, ValidationError
from .hypothesis import ScoredHypothesis
from .model import score_sequence


def _token_lists(candidates) -> List[tuple]:
    out = []
    for c in candidates:
        if hasattr(c, "tokens"):
            out.append(tuple(c.tokens))
        elif isinstance(c, str):
            out.append(tuple(c.split()))
        else:
            out.append(tuple(c))
    return out


def ngrams(tokens, k):
    return [tuple(tokens[i:i + k]) for i in range(len(tokens) - k + 1)]


def kgram_counts(candidates, k: int) -> Counter:
    """k-gram frequencies pooled over candidates; k-grams never cross candidates."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    counts = Counter()
    for toks in _token_lists(candidates):
        counts.update(ngrams(toks, k))
    return counts


def dist_k(candidates, k: int) -> float:
    """Distinct k-grams divided by the total number of tokens."""
    seqs = _token_lists(candidates)
    if not seqs:
        raise ValidationError("empty candidate set")
    total = sum(len(s) for s in seqs)
    if total == 0:
        raise UndefinedMetricError("candidates contain no tokens")
    return len(kgram_counts(seqs, k)) / total


def ent_k(candidates, k: int) -> float:
    """Entropy (nats) of the pooled k-gram frequency distribution."""
    counts = kgram_counts(candidates, k)
    total = sum(counts.values())
    if total == 0:
        raise UndefinedMetricError(f"no {k}-grams in the candidate set")
    return -sum(f * math.log(f / total) for f in counts.values()) / total


def perplexity_from_scores(candidates) -> float:
    """Mean over candidates of ``exp(-base_score / length)``; EOS counts as a token."""
    if not candidates:
        raise ValidationError("empty candidate set")
    ppls = []
    for h in candidates:
        n = len(h.tokens) + (1 if h.finished else 0)
        if n == 0:
            raise ValidationError("zero-length candidate has no perplexity")
        ppls.append(math.exp(-h.base_score / n))
    return sum(ppls) / len(ppls)


def set_perplexity(model, x, candidates) -> float:
    """Per-candidate perplexity under ``model`` (re-scored), averaged over the set."""
    rescored = []
    for h in candidates:
        if len(h.tokens) + (1 if h.finished else 0) == 0:
            raise ValidationError("zero-length candidate has no perplexity")
        rescored.append(ScoredHypothesis(h.tokens, score_sequence(model, x, h.tokens, h.finished),
                                         h.finished, eos=h.eos))
    return perplexity_from_scores(rescored)


@dataclass
class MetricsReport:
    dist: Dict[int, float] = field(default_factory=dict)
    ent: Dict[int, float] = field(default_factory=dict)
    perplexity: float = float("nan")
    scores: List[float] = field(default_factory=list)

    @property
    def mean_score(self):
        return sum(self.scores) / len(self.scores) if self.scores else float("nan")

    def as_record(self) -> Dict[str, float]:
        """Flat key/value view; undefined metrics are None."""
        rec = {"ppl": _clean(self.perplexity), "mean_score": _clean(self.mean_score)}
        rec.update({f"dist{k}": _clean(v) for k, v in sorted(self.dist.items())})
        rec.update({f"ent{k}": _clean(v) for k, v in sorted(self.ent.items())})
        return rec


def _clean(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def compute_metrics(candidates, dist_orders=(1, 2), ent_orders=(2, 4)) -> MetricsReport:
    """Metrics from stored scores; a metric undefined for this set is NaN."""
    rep = MetricsReport(scores=[h.base_score for h in candidates])
    for k in dist_orders:
        try:
            rep.dist[k] = dist_k(candidates, k)
        except UndefinedMetricError:
            rep.dist[k] = float("nan")
    for k in ent_orders:
        try:
            rep.ent[k] = ent_k(candidates, k)
        except UndefinedMetricError:
            rep.ent[k] = float("nan")
    try:
        rep.perplexity = perplexity_from_scores(candidates)
    except ValidationError:
        rep.perplexity = float("nan")
    return rep
