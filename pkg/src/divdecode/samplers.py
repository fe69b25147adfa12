"""Arg-max decoding and ancestral sampling with temperature / top-s truncation."""
from dataclasses import dataclass
import math
from typing import Optional

import numpy as np

from ._kernels import kernels
from .errors import ValidationError
from .hypothesis import CandidateSet, ScoredHypothesis
from .rng import generator


def _check_logits(logits):
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise ValidationError("logits must be a non-empty vector")
    if not np.all(np.isfinite(z)):
        raise ValidationError("logits must be finite")
    return z


def softmax_with_temperature(logits, T: float = 1.0) -> np.ndarray:
    """``exp(z_i / T) / sum_j exp(z_j / T)`` computed with max subtraction."""
    if not (isinstance(T, (int, float, np.floating)) and T > 0 and math.isfinite(T)):
        raise ValidationError(f"temperature must be a positive finite number, got {T!r}")
    return kernels.softmax_temperature(_check_logits(logits), float(T))


def top_s_filter(probs, s: int) -> np.ndarray:
    """Zero all but the ``s`` most probable entries (ties -> lower id), renormalise."""
    p = np.asarray(probs, dtype=np.float64)
    if isinstance(s, bool) or not isinstance(s, (int, np.integer)) or not 1 <= s <= p.size:
        raise ValidationError(f"top_s must be an integer in [1, {p.size}], got {s!r}")
    return kernels.top_s_filter(p, int(s))


@dataclass(frozen=True)
class SamplerConfig:
    temperature: float = 1.0
    top_s: Optional[int] = None
    num_samples: int = 10
    max_len: int = 20
    seed: int = 0

    def validate(self, V: Optional[int] = None):
        if not (self.temperature > 0 and math.isfinite(self.temperature)):
            raise ValidationError(f"temperature must be positive, got {self.temperature!r}")
        if self.top_s is not None:
            if self.top_s < 1 or (V is not None and self.top_s > V):
                raise ValidationError(f"top_s must lie in [1, {V}], got {self.top_s}")
        if self.num_samples < 1:
            raise ValidationError("num_samples must be >= 1")
        if self.max_len < 1:
            raise ValidationError("max_len must be >= 1")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        return self


def greedy_decode(model, x, max_len: int) -> ScoredHypothesis:
    """Pick the most probable token at every step (ties -> lowest id)."""
    if max_len < 1:
        raise ValidationError("max_len must be >= 1")
    eos = model.vocab.eos
    tokens = []
    score = 0.0
    for _ in range(max_len):
        logp = kernels.log_softmax(model.step(x, tokens))
        tok = int(np.argmax(logp))
        score += float(logp[tok])
        if tok == eos:
            return ScoredHypothesis(tuple(tokens), score, True, eos=eos)
        tokens.append(tok)
    return ScoredHypothesis(tuple(tokens), score, False, eos=eos)


def _sample_one(model, x, config: SamplerConfig, index: int) -> ScoredHypothesis:
    rng = generator(config.seed, index)
    uniforms = rng.random(config.max_len)
    s = config.top_s or 0
    T = float(config.temperature)
    eos = model.vocab.eos
    tokens = []
    score = 0.0
    for t in range(config.max_len):
        tok, lp = kernels.sample_step(model.step(x, tokens), T, s, uniforms[t])
        score += lp
        if tok == eos:
            return ScoredHypothesis(tuple(tokens), score, True, eos=eos)
        tokens.append(tok)
    return ScoredHypothesis(tuple(tokens), score, False, eos=eos)


def sample_candidates(model, x, config: SamplerConfig) -> CandidateSet:
    """Draw ``config.num_samples`` independent sequences.

    Candidate ``i`` reads only the Philox stream keyed by ``(seed, i)``; its
    ``t``-th uniform drives the inverse-CDF draw at step ``t``.  Scores are
    untempered model log-likelihoods regardless of T and top-s.
    """
    config.validate(model.V)
    return [_sample_one(model, x, config, i) for i in range(config.num_samples)]
