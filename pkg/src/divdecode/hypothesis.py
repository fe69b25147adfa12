"""The unit of output shared by all decoders."""
from dataclasses import dataclass
from typing import List, Tuple


@dataclass(frozen=True)
class ScoredHypothesis:
    """A generated token sequence.

    ``tokens`` excludes BOS and the terminating EOS.  ``base_score`` is the
    natural-log model likelihood of ``tokens`` (plus EOS when ``finished``);
    ``score`` is the value the producing decoder ranked it by, which differs
    from ``base_score`` only for variants that add a selection-time term.
    """

    tokens: Tuple[int, ...]
    base_score: float
    finished: bool
    score: float = None
    parent_index: int = -1
    eos: int = 1

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if self.score is None:
            object.__setattr__(self, "score", self.base_score)

    @property
    def full_ids(self) -> Tuple[int, ...]:
        """Emitted ids including EOS if the hypothesis is finished."""
        return self.tokens + (self.eos,) if self.finished else self.tokens

    def __len__(self):
        return len(self.tokens)


CandidateSet = List[ScoredHypothesis]


def rank_key(h: ScoredHypothesis):
    """Descending base_score, ties broken by lexicographic id order."""
    return (-h.base_score, h.full_ids)


def sort_candidates(cands) -> CandidateSet:
    return sorted(cands, key=rank_key)
