"""Sequence embeddings, k-means, and post-decoding clustering (PDC)."""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ._kernels import kernels
from .errors import ParseError, ValidationError
from .hypothesis import CandidateSet, ScoredHypothesis, rank_key
from .rng import generator, name_key


class EmbeddingProvider:
    """Token string -> fixed-length vector; ``lookup`` returns None if absent."""

    dim: int

    def lookup(self, token: str) -> Optional[np.ndarray]:  # pragma: no cover - abstract
        raise NotImplementedError


class WordVectors(EmbeddingProvider):
    def __init__(self, vectors: Dict[str, np.ndarray], dim: int):
        self.vectors = vectors
        self.dim = dim

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, token):
        return token in self.vectors

    def lookup(self, token):
        return self.vectors.get(token)


class HashedEmbeddings(EmbeddingProvider):
    """Deterministic pseudo-random unit-variance vector per token string.

    Stands in for pretrained vectors when none are available; the mean of such
    vectors over a sequence behaves like a random projection of its bag of tokens.
    """

    def __init__(self, dim: int = 32, seed: int = 0):
        if dim < 1:
            raise ValidationError("embedding dimension must be >= 1")
        self.dim = dim
        self.seed = seed
        self._cache: Dict[str, np.ndarray] = {}

    def lookup(self, token):
        vec = self._cache.get(token)
        if vec is None:
            vec = generator(self.seed, name_key(token)).standard_normal(self.dim)
            vec.setflags(write=False)
            self._cache[token] = vec
        return vec


def _parse_floats(fields, lineno, path):
    try:
        vec = np.array([float(f) for f in fields])
    except ValueError as exc:
        raise ParseError(f"malformed number ({exc})", lineno, path) from None
    if not np.all(np.isfinite(vec)):
        raise ParseError("non-finite vector entry", lineno, path)
    return vec


def load_word_vectors(path) -> WordVectors:
    """Read ``token v1 ... vd`` lines (GloVe layout; a word2vec ``N d`` header is skipped)."""
    path = Path(path)
    vectors: Dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            fields = raw.rstrip("\n").split(" ")
            fields = [f for f in fields if f != ""]
            if not fields:
                continue
            if lineno == 1 and len(fields) == 2 and all(f.isdigit() for f in fields):
                dim = int(fields[1])
                continue
            if len(fields) < 2:
                raise ParseError("expected a token followed by at least one value", lineno, path)
            vec = _parse_floats(fields[1:], lineno, path)
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise ParseError(f"vector has {vec.size} values, expected {dim}", lineno, path)
            vec.setflags(write=False)
            vectors[fields[0]] = vec
    if not vectors:
        raise ParseError("no word vectors found", path=path)
    return WordVectors(vectors, dim)


def load_precomputed_embeddings(path) -> Dict[int, np.ndarray]:
    """Read ``candidate_index v1 ... vd`` lines into ``{index: vector}``."""
    path = Path(path)
    out: Dict[int, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            fields = raw.split()
            if not fields:
                continue
            try:
                idx = int(fields[0])
            except ValueError:
                raise ParseError(f"bad candidate index {fields[0]!r}", lineno, path) from None
            vec = _parse_floats(fields[1:], lineno, path)
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise ParseError(f"vector has {vec.size} values, expected {dim}", lineno, path)
            if idx in out:
                raise ParseError(f"duplicate candidate index {idx}", lineno, path)
            out[idx] = vec
    if not out:
        raise ParseError("no embeddings found", path=path)
    return out


def embed_sequence(provider: EmbeddingProvider, tokens: Sequence[str]) -> np.ndarray:
    """Mean of the vectors of known tokens; zero vector if none are known."""
    acc = np.zeros(provider.dim)
    n = 0
    for tok in tokens:
        vec = provider.lookup(tok)
        if vec is not None:
            acc += vec
            n += 1
    return acc / n if n else acc


def sequence_embedder(provider: EmbeddingProvider, vocab) -> Callable[[ScoredHypothesis], np.ndarray]:
    """Embed hypotheses by averaging the vectors of their decoded tokens."""

    def embed(h):
        ids = tuple(getattr(h, "tokens", h))
        return embed_sequence(provider, vocab.decode(ids))

    return embed


# --------------------------------------------------------------------------
# k-means


@dataclass
class ClusterResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int = 0
    inertia_history: List[float] = field(default_factory=list)

    @property
    def k(self):
        return self.centroids.shape[0]

    def members(self, j) -> np.ndarray:
        return np.flatnonzero(self.assignments == j)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def _kmeans_pp(X, k, rng):
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = kernels.sq_dists(X, X[chosen[0]][None, :])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = kernels.draw(d2 / total, rng.random())
        else:
            # all remaining mass is zero: take the first unused point
            idx = next(i for i in range(n) if i not in chosen)
        chosen.append(int(idx))
        d2 = np.minimum(d2, kernels.sq_dists(X, X[idx][None, :])[:, 0])
    return X[chosen].copy()


def _repair_empty(X, C, labels, d2, k):
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        movable = counts[labels] > 1
        if not np.any(movable & (d2 > 0)):
            break
        far = int(np.argmax(np.where(movable, d2, -1.0)))
        counts[labels[far]] -= 1
        counts[j] += 1
        labels[far] = j
        d2[far] = 0.0
        C[j] = X[far]
    return labels


def kmeans(points, k: int, seed: int = 0, max_iters: int = 100, tol: float = 1e-9) -> ClusterResult:
    """Lloyd's algorithm from k-means++ seeds, Euclidean distance.

    Ties in assignment go to the lower cluster id.  A cluster that loses all
    its points is reseeded with the point farthest from its centroid.
    """
    X = np.ascontiguousarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if isinstance(k, bool) or not 1 <= k <= n:
        raise ValidationError(f"k must lie in [1, {n}], got {k!r}")
    rng = generator(seed)
    C = _kmeans_pp(X, k, rng)
    history = []
    it = 0
    for it in range(1, max_iters + 1):
        labels, d2 = kernels.assign(X, C)
        history.append(float(d2.sum()))
        labels = _repair_empty(X, C, labels.copy(), d2.copy(), k)
        newC, counts = kernels.centroids(X, labels, k)
        newC[counts == 0] = C[counts == 0]
        shift = float(np.max(np.sqrt(((newC - C) ** 2).sum(axis=1))))
        C = newC
        if shift < tol:
            break
    labels, d2 = kernels.assign(X, C)
    return ClusterResult(labels.astype(np.int64), C, float(d2.sum()), it, history)


# --------------------------------------------------------------------------
# post-decoding clustering


@dataclass
class PDCTrace:
    """Which candidates PDC picked, in pick order, and how."""

    picks: List[int]
    passes: List[int]  # pass number per pick; -1 marks global-rank fill
    clusters: ClusterResult
    surviving: List[int]  # cluster ids in visiting order


def _embed_all(candidates, embed, embeddings):
    if embeddings is not None:
        X = np.asarray(embeddings, dtype=np.float64)
        if X.shape[0] != len(candidates):
            raise ValidationError(
                f"{X.shape[0]} embeddings supplied for {len(candidates)} candidates")
        return X
    if embed is None:
        raise ValidationError("either an embedder or precomputed embeddings is required")
    return np.stack([np.asarray(embed(h), dtype=np.float64) for h in candidates])


def pdc_trace(candidates: CandidateSet, m: int, k: Optional[int] = None, embed=None,
              seed: int = 0, embeddings=None, min_cluster_size: int = 3) -> PDCTrace:
    n = len(candidates)
    if m < 1 or n < m:
        raise ValidationError(f"need at least m={m} >= 1 candidates, got {n}")
    k = m if k is None else k
    if k < 1:
        raise ValidationError("k must be >= 1")
    X = _embed_all(candidates, embed, embeddings)
    res = kmeans(X, k, seed=seed)
    order = {j: sorted(res.members(j).tolist(), key=lambda i: rank_key(candidates[i]))
             for j in range(res.k)}
    surviving = sorted((j for j in order if len(order[j]) >= min_cluster_size),
                       key=lambda j: (-len(order[j]), j))
    picks, passes = [], []
    depth = 0
    while len(picks) < m and surviving and depth < max(len(order[j]) for j in surviving):
        for j in surviving:
            if len(picks) == m:
                break
            if depth < len(order[j]):
                picks.append(order[j][depth])
                passes.append(depth)
        depth += 1
    if len(picks) < m:
        taken = set(picks)
        rest = sorted((i for i in range(n) if i not in taken), key=lambda i: rank_key(candidates[i]))
        for i in rest[: m - len(picks)]:
            picks.append(i)
            passes.append(-1)
    return PDCTrace(picks, passes, res, surviving)


def pdc_filter(candidates: CandidateSet, m: int, k: Optional[int] = None, embed=None,
               seed: int = 0, embeddings=None) -> CandidateSet:
    """Reduce an oversampled candidate pool to ``m`` diverse, high-likelihood members.

    Candidates are clustered into ``k`` groups (default ``k = m``); clusters
    with two or fewer members are dropped; the best-scoring member of each
    remaining cluster is taken, largest clusters first, then the second best,
    and so on.  Any shortfall is filled by global log-likelihood rank.  The
    result is sorted by descending ``base_score``.
    """
    tr = pdc_trace(candidates, m, k, embed, seed, embeddings)
    return sorted((candidates[i] for i in tr.picks), key=rank_key)


def rank_filter(candidates: CandidateSet, m: int) -> CandidateSet:
    if m < 1 or len(candidates) < m:
        raise ValidationError(f"need at least m={m} >= 1 candidates, got {len(candidates)}")
    return sorted(candidates, key=rank_key)[:m]
