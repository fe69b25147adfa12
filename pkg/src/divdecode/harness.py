"""Experiment runner: build a model, decode every prompt with every strategy,
optionally oversample then filter, score, and persist.

Config files are INI-style::

    [experiment]
    model = ngram            ; or: table
    corpus = builtin:toy_corpus
    n = 3
    alpha = 0.01
    unit = char
    prompts = builtin:toy_prompts
    m = 10
    max_len = 40
    seed = 0
    embedding = hashed:32    ; or a word-vector file path

    [strategy rs1.0]
    kind = sample
    temperature = 1.0

    [strategy rs-pdc]
    kind = sample
    oversample = pdc
    pool = 100

Relative paths are resolved against the config file's directory.

Output directory layout (all files are deterministic functions of the config
bytes and seed):

``candidates.tsv``
    ``prompt_id strategy rank score finished tokens`` (tab separated; tokens
    space separated; score is the model log-likelihood).
``pool.tsv``
    The unfiltered pools of oversampled strategies, same layout, rank = draw order.
``report.jsonl``
    One JSON object per prompt x strategy with its metrics.
``summary.tsv``
    Prompt-averaged metrics per strategy.
``provenance.json``
    Config hash, seed, package/numpy versions and kernel backend.
"""
from concurrent.futures import ProcessPoolExecutor
import configparser
from dataclasses import dataclass, field, fields, replace
import hashlib
from importlib import resources
import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .beam import BeamConfig, beam_search, iterative_beam_search
from .cluster import (HashedEmbeddings, load_word_vectors, pdc_filter, rank_filter,
                      sequence_embedder)
from .errors import ParseError, ValidationError
from .hypothesis import ScoredHypothesis
from .metrics import compute_metrics
from .model import build_ngram_model, load_table_model, tokenize
from .rng import mix, name_key
from .samplers import SamplerConfig, greedy_decode, sample_candidates

KINDS = ("greedy", "sample", "beam", "iterative")
OVERSAMPLE = ("none", "rank", "pdc")
SUMMARY_COLUMNS = ("ppl", "dist1", "dist2", "ent2", "ent4", "mean_score")
COLUMN_ALIASES = {"ppl": "ppl", "dist-1": "dist1", "dist-2": "dist2", "ent-2": "ent2",
                  "ent-4": "ent4", "mean_score": "mean_score", "score": "mean_score"}


@dataclass(frozen=True)
class StrategyConfig:
    name: str
    kind: str = "sample"
    temperature: float = 1.0
    top_s: Optional[int] = None
    variant: str = "standard"
    g: Optional[int] = None
    hamming_lambda: float = 0.0
    sigma0: float = 0.0
    clusters: int = 1
    iterations: int = 1
    beam_width: Optional[int] = None
    oversample: str = "none"
    pool: int = 100
    pdc_k: Optional[int] = None
    max_len: Optional[int] = None

    def validate(self, m: int):
        if self.kind not in KINDS:
            raise ValidationError(f"strategy {self.name}: unknown kind {self.kind!r}")
        if self.oversample not in OVERSAMPLE:
            raise ValidationError(f"strategy {self.name}: unknown oversample mode {self.oversample!r}")
        if self.oversample != "none" and not self.pool >= m >= 1:
            raise ValidationError(f"strategy {self.name}: need pool >= m >= 1 (pool={self.pool}, m={m})")
        if self.kind == "greedy" and self.oversample != "none":
            raise ValidationError(f"strategy {self.name}: greedy decoding cannot oversample")
        if self.kind == "iterative" and self.iterations < 1:
            raise ValidationError(f"strategy {self.name}: iterations must be >= 1")
        if self.pdc_k is not None and self.pdc_k < 1:
            raise ValidationError(f"strategy {self.name}: pdc_k must be >= 1")
        if self.kind == "sample":
            SamplerConfig(self.temperature, self.top_s, 1, self.max_len or 1).validate()
        if self.kind in ("beam", "iterative"):
            self.beam_config(m, 1, 0).validate()
        return self

    def width(self, m):
        if self.oversample != "none":
            return self.pool
        return self.beam_width or m

    def beam_config(self, m, max_len, seed):
        return BeamConfig(beam_width=self.width(m), variant=self.variant, g=self.g,
                          hamming_lambda=self.hamming_lambda, sigma0=self.sigma0,
                          clusters=self.clusters, max_len=self.max_len or max_len, seed=seed)


@dataclass
class ExperimentConfig:
    model: str = "ngram"
    corpus: Optional[str] = None
    table: Optional[str] = None
    n: int = 3
    alpha: float = 0.01
    unit: str = "word"
    prompts: Optional[str] = None
    strategies: List[StrategyConfig] = field(default_factory=list)
    m: int = 10
    max_len: int = 40
    seed: int = 0
    embedding: str = "hashed:32"
    output: Optional[str] = None
    jobs: int = 1
    base_dir: str = "."
    source_bytes: bytes = b""

    def resolve(self, ref):
        if ref is None:
            return None
        if ref.startswith("builtin:"):
            path = resources.files("divdecode") / "data" / (ref.split(":", 1)[1] + ".txt")
            return Path(str(path))
        p = Path(ref)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self):
        if self.model not in ("ngram", "table"):
            raise ValidationError(f"unknown model kind {self.model!r}")
        src = self.corpus if self.model == "ngram" else self.table
        if src is None:
            raise ValidationError(f"{self.model} model needs a "
                                  f"{'corpus' if self.model == 'ngram' else 'table'} file")
        for ref in (src, self.prompts):
            if ref is None:
                raise ValidationError("a prompts file is required")
            if not self.resolve(ref).is_file():
                raise ValidationError(f"file not found: {self.resolve(ref)}")
        if self.m < 1 or self.max_len < 1 or self.seed < 0 or self.jobs < 1:
            raise ValidationError("m, max_len, jobs must be >= 1 and seed >= 0")
        if not self.strategies:
            raise ValidationError("no strategies configured")
        names = [s.name for s in self.strategies]
        if len(set(names)) != len(names):
            raise ValidationError(f"strategy names must be unique: {names}")
        for s in self.strategies:
            s.validate(self.m)
        if not (self.embedding.startswith("hashed:") or self.resolve(self.embedding).is_file()):
            raise ValidationError(f"embedding must be 'hashed:DIM' or a vector file, got {self.embedding!r}")
        return self

    def digest(self):
        return hashlib.sha256(self.source_bytes).hexdigest()


_EXPERIMENT_KEYS = {f.name for f in fields(ExperimentConfig)}
_STRATEGY_FIELDS = {f.name for f in fields(StrategyConfig)} - {"name"}
_INT_KEYS = {"n", "m", "max_len", "seed", "jobs", "top_s", "g", "clusters", "iterations",
             "beam_width", "pool", "pdc_k"}
_FLOAT_KEYS = {"alpha", "temperature", "hamming_lambda", "sigma0"}
_KEY_ALIASES = {"lambda": "hamming_lambda", "sigma": "sigma0", "c": "clusters", "b": "beam_width",
                "s": "top_s", "t": "temperature", "filter": "oversample", "k": "pdc_k"}


def _coerce(section, key, value):
    try:
        if value.lower() in ("none", ""):
            return None
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise ValidationError(f"[{section}] {key}: cannot parse {value!r}") from None
    return value


def parse_config(text: str, base_dir=".", overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParseError(str(exc)) from None
    exp = {}
    strategies = []
    for section in cp.sections():
        items = {_KEY_ALIASES.get(k, k): v for k, v in cp.items(section)}
        if section == "experiment":
            for k, v in items.items():
                if k not in _EXPERIMENT_KEYS or k in ("strategies", "base_dir", "source_bytes"):
                    raise ValidationError(f"[experiment] unknown key {k!r}")
                exp[k] = _coerce(section, k, v)
        elif section.startswith("strategy"):
            name = section[len("strategy"):].strip()
            if not name:
                raise ValidationError("strategy sections need a name: [strategy NAME]")
            kw = {}
            for k, v in items.items():
                if k not in _STRATEGY_FIELDS:
                    raise ValidationError(f"[{section}] unknown key {k!r}")
                kw[k] = _coerce(section, k, v)
            if kw.get("oversample") is None:
                kw.pop("oversample", None)
            strategies.append(StrategyConfig(name=name, **kw))
        else:
            raise ValidationError(f"unknown section [{section}]")
    for key, value in (overrides or {}).items():
        key = _KEY_ALIASES.get(key, key)
        if key not in _EXPERIMENT_KEYS:
            raise ValidationError(f"unknown override {key!r}")
        exp[key] = _coerce("override", key, str(value))
    cfg = ExperimentConfig(strategies=strategies, base_dir=str(base_dir),
                           source_bytes=text.encode("utf-8"), **exp)
    return cfg


def load_config(path, overrides=None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), path.parent, overrides)


# --------------------------------------------------------------------------
# decoding


def build_model(cfg: ExperimentConfig):
    if cfg.model == "ngram":
        return build_ngram_model(cfg.resolve(cfg.corpus), cfg.n, cfg.alpha, unit=cfg.unit)
    return load_table_model(cfg.resolve(cfg.table))


def build_embedder(cfg: ExperimentConfig, vocab):
    if cfg.embedding.startswith("hashed:"):
        try:
            dim = int(cfg.embedding.split(":", 1)[1])
        except ValueError:
            raise ValidationError(f"bad embedding spec {cfg.embedding!r}") from None
        provider = HashedEmbeddings(dim)
    else:
        provider = load_word_vectors(cfg.resolve(cfg.embedding))
    return sequence_embedder(provider, vocab)


def read_prompts(path) -> List[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def decode_prompt(model, x, strat: StrategyConfig, m: int, max_len: int, seed: int,
                  embed=None) -> Tuple[List[ScoredHypothesis], Optional[List[ScoredHypothesis]]]:
    """Produce (final candidates, pool) for one prompt; pool is None without oversampling."""
    L = strat.max_len or max_len
    width = strat.width(m)
    if strat.kind == "greedy":
        return [greedy_decode(model, x, L)], None
    if strat.kind == "sample":
        pool = sample_candidates(model, x, SamplerConfig(strat.temperature, strat.top_s, width, L, seed))
    elif strat.kind == "beam":
        pool = beam_search(model, x, strat.beam_config(m, L, seed), embed=embed)
    else:
        pool = iterative_beam_search(model, x, width, strat.iterations, L)

    mode = strat.oversample
    if strat.kind == "iterative" and mode == "none":
        # the union of runs is itself a pool; reduce it to m by likelihood
        mode = "rank"
    if mode == "none":
        return pool, None
    target = min(m, len(pool))
    if mode == "rank":
        final = rank_filter(pool, target)
    else:
        final = pdc_filter(pool, target, k=min(strat.pdc_k or m, len(pool)), embed=embed,
                           seed=mix(seed, 0x504443))
    return final, pool


@dataclass
class PromptResult:
    prompt_id: int
    prompt: str
    strategy: str
    candidates: List[ScoredHypothesis]
    pool: Optional[List[ScoredHypothesis]]
    metrics: Dict[str, Optional[float]]


@dataclass
class RunReport:
    config: ExperimentConfig
    results: List[PromptResult]
    vocab: object = None

    def averages(self) -> Dict[str, Dict[str, Optional[float]]]:
        """Per strategy, the mean of each metric over prompts where it is defined."""
        out = {}
        for s in self.config.strategies:
            rows = [r.metrics for r in self.results if r.strategy == s.name]
            avg = {}
            for col in SUMMARY_COLUMNS:
                vals = [r[col] for r in rows if r.get(col) is not None]
                avg[col] = math.fsum(vals) / len(vals) if vals else None
            avg["prompts"] = len(rows)
            out[s.name] = avg
        return out

    def provenance(self):
        return {
            "config_sha256": self.config.digest(),
            "seed": self.config.seed,
            "package_version": __version__,
            "numpy_version": np.__version__,
            "kernel_backend": BACKEND,
        }


_worker = {}


def _init_worker(cfg):
    model = build_model(cfg)
    _worker["cfg"] = cfg
    _worker["model"] = model
    _worker["embed"] = build_embedder(cfg, model.vocab)


def _run_prompt(args):
    pid, prompt = args
    cfg, model, embed = _worker["cfg"], _worker["model"], _worker["embed"]
    x = model.encode(prompt) if hasattr(model, "encode") else model.vocab.encode(tokenize(prompt, cfg.unit))
    out = []
    for strat in cfg.strategies:
        seed = mix(cfg.seed, pid, name_key(strat.name))
        final, pool = decode_prompt(model, x, strat, cfg.m, cfg.max_len, seed, embed)
        rep = compute_metrics(final, dist_orders=(1, 2), ent_orders=(2, 4))
        out.append(PromptResult(pid, prompt, strat.name, final, pool, rep.as_record()))
    return out


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunReport:
    """Decode all prompts with all strategies; write outputs if ``cfg.output`` is set."""
    cfg.validate()
    prompts = read_prompts(cfg.resolve(cfg.prompts))
    if not prompts:
        raise ValidationError("prompts file is empty")
    work = list(enumerate(prompts))
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs, initializer=_init_worker, initargs=(cfg,)) as ex:
            chunks = list(ex.map(_run_prompt, work, chunksize=max(1, len(work) // (4 * cfg.jobs))))
        _init_worker(cfg)
    else:
        _init_worker(cfg)
        chunks = [_run_prompt(w) for w in work]
    results = [r for chunk in chunks for r in chunk]
    report = RunReport(cfg, results, _worker["model"].vocab)
    if write and cfg.output:
        write_report(report, cfg.resolve(cfg.output))
    return report


# --------------------------------------------------------------------------
# persistence


CANDIDATE_HEADER = "#prompt_id\tstrategy\trank\tscore\tfinished\ttokens\n"


@dataclass(frozen=True)
class CandidateRecord:
    """One persisted candidate; tokens are strings."""

    prompt_id: int
    strategy: str
    rank: int
    score: float
    finished: bool
    tokens: Tuple[str, ...]

    @property
    def base_score(self):
        return self.score

    @property
    def full_ids(self):
        return self.tokens + ("</s>",) if self.finished else self.tokens


def format_candidates(rows) -> str:
    lines = [CANDIDATE_HEADER]
    for pid, strategy, rank, h, toks in rows:
        lines.append(f"{pid}\t{strategy}\t{rank}\t{h.base_score!r}\t{int(h.finished)}\t{' '.join(toks)}\n")
    return "".join(lines)


def read_candidates(path) -> List[CandidateRecord]:
    out = []
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if raw.startswith("#") or not raw.strip():
                continue
            parts = raw.rstrip("\n").split("\t")
            if len(parts) != 6:
                raise ParseError(f"expected 6 tab-separated fields, got {len(parts)}", lineno, path)
            try:
                rec = CandidateRecord(int(parts[0]), parts[1], int(parts[2]), float(parts[3]),
                                      parts[4] == "1", tuple(parts[5].split()))
            except ValueError as exc:
                raise ParseError(str(exc), lineno, path) from None
            out.append(rec)
    return out


def group_records(records) -> Dict[Tuple[int, str], List[CandidateRecord]]:
    groups: Dict[Tuple[int, str], List[CandidateRecord]] = {}
    for r in records:
        groups.setdefault((r.prompt_id, r.strategy), []).append(r)
    for g in groups.values():
        g.sort(key=lambda r: r.rank)
    return groups


def write_report(report: RunReport, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    decode = report.vocab.decode
    cand_rows, pool_rows = [], []
    with open(outdir / "report.jsonl", "w", encoding="utf-8") as fh:
        for r in report.results:
            cand_rows.extend((r.prompt_id, r.strategy, i, h, decode(h.tokens))
                             for i, h in enumerate(r.candidates))
            if r.pool is not None:
                pool_rows.extend((r.prompt_id, r.strategy, i, h, decode(h.tokens))
                                 for i, h in enumerate(r.pool))
            obj = {"prompt_id": r.prompt_id, "prompt": r.prompt, "strategy": r.strategy,
                   "n_candidates": len(r.candidates),
                   "pool_size": None if r.pool is None else len(r.pool), "metrics": r.metrics}
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
    (outdir / "candidates.tsv").write_text(format_candidates(cand_rows), encoding="utf-8")
    if pool_rows:
        (outdir / "pool.tsv").write_text(format_candidates(pool_rows), encoding="utf-8")
    (outdir / "summary.tsv").write_text(compare_strategies(report), encoding="utf-8")
    (outdir / "provenance.json").write_text(json.dumps(report.provenance(), indent=2, sort_keys=True) + "\n",
                                            encoding="utf-8")


def _fmt(v):
    return "nan" if v is None else f"{v:.4f}"


def summary_table(averages: Dict[str, Dict[str, Optional[float]]], sort_by: Optional[str] = None,
                  descending: bool = True) -> str:
    col = None
    if sort_by is not None:
        col = COLUMN_ALIASES.get(sort_by.lower())
        if col is None:
            raise ValidationError(f"unknown sort column {sort_by!r}; choose from {sorted(COLUMN_ALIASES)}")
    names = list(averages)
    if col is not None:
        missing = -math.inf if descending else math.inf
        names.sort(key=lambda n: averages[n][col] if averages[n][col] is not None else missing,
                   reverse=descending)
    lines = ["strategy\tPpl\tDist-1\tDist-2\tEnt-2\tEnt-4\tMeanScore"]
    for n in names:
        a = averages[n]
        lines.append("\t".join([n] + [_fmt(a[c]) for c in SUMMARY_COLUMNS]))
    return "\n".join(lines) + "\n"


def compare_strategies(report: RunReport, sort_by: Optional[str] = None, descending: bool = True) -> str:
    """Tab-delimited table: one row per strategy with prompt-averaged metrics."""
    return summary_table(report.averages(), sort_by, descending)


def averages_from_records(records) -> Dict[str, Dict[str, Optional[float]]]:
    """Recompute prompt-averaged metrics from persisted candidate records."""
    per_strategy: Dict[str, List[Dict]] = {}
    for (pid, strategy), recs in sorted(group_records(records).items()):
        per_strategy.setdefault(strategy, []).append(compute_metrics(recs).as_record())
    out = {}
    for s, rows in per_strategy.items():
        avg = {}
        for col in SUMMARY_COLUMNS:
            vals = [r[col] for r in rows if r.get(col) is not None]
            avg[col] = math.fsum(vals) / len(vals) if vals else None
        avg["prompts"] = len(rows)
        out[s] = avg
    return out


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
