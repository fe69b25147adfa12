"""Conditional sequence models consumed by every decoder.

A model maps a prompt ``x`` and a prefix of already generated token ids to a
vector of next-token logits over its vocabulary.  Prefixes never contain the
implicit BOS marker; the empty prefix is the first decoding step.

Two deterministic reference models are provided: :class:`TableModel`, which
stores explicit conditional probabilities, and :class:`NgramModel`, an
additively smoothed n-gram model estimated from a corpus.  Both expose their
pre-softmax logit vector as the perturbable state used by noisy decoding.
"""
from collections import Counter, defaultdict
from dataclasses import dataclass, field
import math
from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np

from ._kernels import kernels
from .errors import CapabilityError, ConstructionError, ParseError, ValidationError

BOS, EOS, UNK = "<s>", "</s>", "<unk>"
SPACE = "▁"  # stands in for whitespace in character-level token streams

# Finite stand-in for log(0): keeps every logit finite while making the token
# unreachable for any practical purpose (exp underflows to exactly 0).
IMPOSSIBLE_LOGIT = -1.0e4


class Vocabulary:
    """Bijection between token strings and ids ``0..V-1``.

    The reserved markers BOS, EOS and UNK always occupy ids 0, 1 and 2.
    """

    def __init__(self, tokens: Sequence[str] = ()):
        self.tokens = [BOS, EOS, UNK]
        self._index = {t: i for i, t in enumerate(self.tokens)}
        for tok in tokens:
            if tok in self._index:
                if tok in (BOS, EOS, UNK):
                    continue
                raise ValidationError(f"duplicate token {tok!r}")
            self._index[tok] = len(self.tokens)
            self.tokens.append(tok)
        self.bos, self.eos, self.unk = 0, 1, 2

    def __len__(self):
        return len(self.tokens)

    @property
    def size(self):
        return len(self.tokens)

    def __contains__(self, tok):
        return tok in self._index

    def id(self, tok: str) -> int:
        return self._index.get(tok, self.unk)

    def encode(self, tokens: Sequence[str]) -> Tuple[int, ...]:
        return tuple(self._index.get(t, self.unk) for t in tokens)

    def decode(self, ids: Sequence[int]) -> Tuple[str, ...]:
        return tuple(self.tokens[i] for i in ids)


def tokenize(text: str, unit: str = "word") -> list:
    """Whitespace tokenization (``unit="word"``) or one token per character.

    In character mode every whitespace character becomes :data:`SPACE` so that
    token streams can be written space-separated without ambiguity.
    """
    if unit == "word":
        return text.split()
    if unit == "char":
        return [SPACE if c.isspace() else c for c in text.strip("\r\n")]
    raise ValidationError(f"unknown tokenization unit {unit!r}")


def detokenize(tokens: Sequence[str], unit: str = "word") -> str:
    if unit == "char":
        return "".join(" " if t == SPACE else t for t in tokens)
    return " ".join(tokens)


class SequenceModel:
    """Base class for models.

    Subclasses implement :meth:`_logits`; ``state_dim`` is the length of the
    noise vector accepted by :meth:`perturbed_step` (0 if not perturbable).
    """

    vocab: Vocabulary
    perturbable: bool = False
    state_dim: int = 0

    @property
    def V(self):
        return len(self.vocab)

    def _check_ids(self, ids):
        if ids and (min(ids) < 0 or max(ids) >= len(self.vocab)):
            bad = [i for i in ids if not 0 <= i < len(self.vocab)]
            raise ValidationError(f"token id(s) {bad} outside vocabulary of size {len(self.vocab)}")

    def step(self, x: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        """Next-token logits given prompt ids ``x`` and generated ids ``prefix``."""
        x = tuple(x)
        prefix = tuple(prefix)
        self._check_ids(x)
        self._check_ids(prefix)
        return self._logits(x, prefix)

    def perturbed_step(self, x, prefix, noise) -> np.ndarray:
        if not self.perturbable:
            raise CapabilityError(f"{type(self).__name__} does not accept state noise")
        noise = np.asarray(noise, dtype=np.float64)
        if noise.shape != (self.state_dim,):
            raise ValidationError(
                f"noise has shape {noise.shape}, expected ({self.state_dim},)")
        # the perturbable state of the reference models is the logit vector itself
        return self.step(x, prefix) + noise

    def _logits(self, x, prefix):  # pragma: no cover - abstract
        raise NotImplementedError


def step(model: SequenceModel, x, prefix) -> np.ndarray:
    return model.step(x, prefix)


def perturbed_step(model: SequenceModel, x, prefix, noise) -> np.ndarray:
    return model.perturbed_step(x, prefix, noise)


def score_sequence(model: SequenceModel, x, tokens, finished=True) -> float:
    """Natural-log likelihood of ``tokens`` (plus EOS when ``finished``)."""
    tokens = tuple(tokens)
    ids = tokens + ((model.vocab.eos,) if finished else ())
    total = 0.0
    for t, tok in enumerate(ids):
        total += float(kernels.log_softmax(model.step(x, tokens[:t]))[tok])
    return total


class TableModel(SequenceModel):
    """Explicit conditional probability table keyed by prefix.

    ``table`` maps a prefix (tuple of ids, BOS excluded) to a probability
    vector of length V.  Prefixes absent from the table put all their mass on
    UNK.  The prompt is ignored.
    """

    perturbable = True

    def __init__(self, vocab: Vocabulary, table: Dict[Tuple[int, ...], np.ndarray]):
        self.vocab = vocab
        self.state_dim = len(vocab)
        V = len(vocab)
        self._logit_table = {}
        for prefix, probs in table.items():
            probs = np.asarray(probs, dtype=np.float64)
            if probs.shape != (V,):
                raise ValidationError(f"prefix {prefix}: distribution has shape {probs.shape}")
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
                raise ValidationError(
                    f"prefix {prefix}: probabilities must be non-negative and sum to 1 "
                    f"(got {probs.sum():.12g})")
            self._check_ids(prefix)
            with np.errstate(divide="ignore"):
                logits = np.where(probs > 0, np.log(probs), IMPOSSIBLE_LOGIT)
            logits.setflags(write=False)
            self._logit_table[tuple(prefix)] = logits
        default = np.full(V, IMPOSSIBLE_LOGIT)
        default[vocab.unk] = 0.0
        default.setflags(write=False)
        self._default = default

    @property
    def prefixes(self):
        return list(self._logit_table)

    def _logits(self, x, prefix):
        return self._logit_table.get(prefix, self._default).copy()

    @classmethod
    def from_probabilities(cls, entries: Dict[Tuple[str, ...], Dict[str, float]],
                           extra_tokens: Sequence[str] = ()):
        """Build from ``{prefix_tokens: {next_token: prob}}`` using token strings."""
        seen = []
        for prefix, dist in entries.items():
            seen.extend(prefix)
            seen.extend(dist)
        seen.extend(extra_tokens)
        vocab = Vocabulary(dict.fromkeys(t for t in seen))
        table = {}
        for prefix, dist in entries.items():
            p = np.zeros(len(vocab))
            for tok, prob in dist.items():
                p[vocab.id(tok)] += prob
            table[vocab.encode(prefix)] = p
        return cls(vocab, table)


def load_table_model(path) -> TableModel:
    """Parse a table file: ``prefix tokens | next_token probability`` per line.

    ``#`` starts a comment.  A leading ``<s>`` in the prefix is optional.
    """
    entries: Dict[Tuple[str, ...], Dict[str, float]] = {}
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "|" not in line:
                raise ParseError("expected 'prefix | token probability'", lineno, path)
            left, right = line.split("|", 1)
            prefix = tuple(left.split())
            if prefix[:1] == (BOS,):
                prefix = prefix[1:]
            parts = right.split()
            if len(parts) != 2:
                raise ParseError("expected exactly one token and one probability", lineno, path)
            try:
                prob = float(parts[1])
            except ValueError:
                raise ParseError(f"bad probability {parts[1]!r}", lineno, path) from None
            if not 0.0 <= prob <= 1.0:
                raise ParseError(f"probability {prob} outside [0, 1]", lineno, path)
            dist = entries.setdefault(prefix, {})
            dist[parts[0]] = dist.get(parts[0], 0.0) + prob
    if not entries:
        raise ConstructionError(f"{path}: no table entries")
    for prefix, dist in entries.items():
        if abs(sum(dist.values()) - 1.0) > 1e-9:
            raise ValidationError(
                f"{path}: probabilities for prefix {' '.join(prefix) or '<s>'!r} sum to "
                f"{sum(dist.values()):.12g}, not 1")
    return TableModel.from_probabilities(entries)


@dataclass
class NgramModel(SequenceModel):
    """Additively smoothed n-gram model.

    ``P(w | h) = (count(h w) + alpha) / (count(h) + alpha * V)`` where ``h`` is
    the last ``n - 1`` tokens of ``BOS^(n-1) + prompt + prefix``: the prompt is
    treated as the opening of the sequence being continued.
    """

    vocab: Vocabulary
    n: int
    alpha: float
    unit: str = "word"
    counts: Dict[Tuple[int, ...], Counter] = field(default_factory=dict, repr=False)

    perturbable = True

    def __post_init__(self):
        self.state_dim = len(self.vocab)
        V = len(self.vocab)
        self._table = {}
        for hist, ctr in self.counts.items():
            c = np.zeros(V)
            for w, k in ctr.items():
                c[w] = k
            logp = np.log((c + self.alpha) / (c.sum() + self.alpha * V))
            logp.setflags(write=False)
            self._table[hist] = logp
        uniform = np.full(V, -math.log(V))
        uniform.setflags(write=False)
        self._uniform = uniform

    def history(self, x, prefix):
        if self.n == 1:
            return ()
        ctx = (self.vocab.bos,) * (self.n - 1) + tuple(x) + tuple(prefix)
        return ctx[len(ctx) - (self.n - 1):]

    def prob(self, w: int, hist: Tuple[int, ...]) -> float:
        ctr = self.counts.get(tuple(hist), Counter())
        total = sum(ctr.values())
        return (ctr.get(w, 0) + self.alpha) / (total + self.alpha * len(self.vocab))

    def _logits(self, x, prefix):
        hist = self.history(x, prefix)
        return self._table.get(hist, self._uniform).copy()

    def encode(self, text: str) -> Tuple[int, ...]:
        return self.vocab.encode(tokenize(text, self.unit))


def build_ngram_model(corpus, n: int, alpha: float, unit: str = "word") -> NgramModel:
    """Estimate an n-gram model from an iterable of lines (or a path).

    Each line is tokenized, padded with ``n - 1`` BOS markers and terminated
    with EOS; EOS is counted as a predicted event.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ValidationError(f"n-gram order must be an integer >= 1, got {n!r}")
    if not alpha > 0 or not math.isfinite(alpha):
        raise ValidationError(f"smoothing constant must be positive, got {alpha!r}")
    if isinstance(corpus, (str, Path)) and Path(corpus).exists():
        lines = Path(corpus).read_text(encoding="utf-8").splitlines()
    elif isinstance(corpus, str):
        lines = corpus.splitlines()
    else:
        lines = list(corpus)
    tokenized = [tokenize(line, unit) for line in lines]
    tokenized = [t for t in tokenized if t]
    if not tokenized:
        raise ConstructionError("corpus contains no tokens")
    vocab = Vocabulary(sorted({t for toks in tokenized for t in toks}))
    counts: Dict[Tuple[int, ...], Counter] = defaultdict(Counter)
    for toks in tokenized:
        seq = (vocab.bos,) * (n - 1) + vocab.encode(toks) + (vocab.eos,)
        for i in range(n - 1, len(seq)):
            counts[seq[i - n + 1:i]][seq[i]] += 1
    return NgramModel(vocab=vocab, n=int(n), alpha=float(alpha), unit=unit, counts=dict(counts))


def random_table_model(rng: np.random.Generator, n_emit: int = 3, max_len: int = 3) -> TableModel:
    """Random complete table over ``n_emit`` emittable tokens (EOS included).

    Every prefix of length ``< max_len`` over the non-EOS emittable tokens gets a
    Dirichlet(1) distribution over the emittable tokens; BOS/UNK are never
    emitted from listed prefixes.
    """
    if n_emit < 2:
        raise ValidationError("need at least EOS and one content token")
    content = [chr(ord("A") + i) for i in range(n_emit - 1)]
    vocab = Vocabulary(content)
    emit = [vocab.eos] + [vocab.id(c) for c in content]
    table = {}
    frontier = [()]
    for _ in range(max_len):
        nxt = []
        for prefix in frontier:
            p = np.zeros(len(vocab))
            p[emit] = rng.dirichlet(np.ones(len(emit)))
            table[prefix] = p
            nxt.extend(prefix + (vocab.id(c),) for c in content)
        frontier = nxt
    return TableModel(vocab, table)
