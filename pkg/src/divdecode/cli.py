"""Command line entry point: ``divdecode {decode,sweep,metrics,pdc,oracle-check}``.

Exit status: 0 on success, 1 for invalid input or configuration, 2 when
decoding itself fails.
"""
import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .beam import BeamConfig, beam_search
from .cluster import (HashedEmbeddings, embed_sequence, load_precomputed_embeddings,
                      load_word_vectors, pdc_filter)
from .errors import DecodeError, ValidationError
from .harness import (ExperimentConfig, StrategyConfig, averages_from_records, format_candidates,
                      group_records, load_config, read_candidates, run_experiment, summary_table)
from .model import random_table_model
from .oracle import exhaustive_topk
from .rng import generator

log = logging.getLogger("divdecode")


def _overrides(pairs):
    out = {}
    for p in pairs or ():
        if "=" not in p:
            raise ValidationError(f"--set expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_sweep(args):
    ov = _overrides(args.set)
    for key in ("seed", "jobs"):
        if getattr(args, key) is not None:
            ov[key] = str(getattr(args, key))
    cfg = load_config(args.config, ov)
    if args.output is not None:
        # command-line paths are relative to the working directory
        cfg.output = str(Path(args.output).resolve())
    if cfg.output is None:
        raise ValidationError("no output directory: set 'output' in [experiment] or pass --output")
    report = run_experiment(cfg)
    sys.stdout.write(summary_table(report.averages(), args.sort_by))
    return 0


def cmd_decode(args):
    strat = StrategyConfig(
        name=args.name or args.kind, kind=args.kind, temperature=args.temperature,
        top_s=args.top_s, variant=args.variant, g=args.g, hamming_lambda=args.hamming_lambda,
        sigma0=args.sigma0, clusters=args.clusters, iterations=args.iterations,
        beam_width=args.beam_width, oversample=args.oversample, pool=args.pool, pdc_k=args.pdc_k)
    model = "table" if args.table else "ngram"
    cfg = ExperimentConfig(
        model=model, corpus=args.corpus, table=args.table, n=args.n, alpha=args.alpha,
        unit=args.unit, prompts=args.prompts, strategies=[strat], m=args.m,
        max_len=args.max_len, seed=args.seed, embedding=args.embedding,
        output=str(Path(args.output).resolve()) if args.output else None,
        base_dir=str(Path.cwd()),
        source_bytes=repr(sorted(vars(args).items(), key=lambda kv: kv[0])).encode())
    report = run_experiment(cfg)
    if not args.output:
        rows = [(r.prompt_id, r.strategy, i, h, report.vocab.decode(h.tokens))
                for r in report.results for i, h in enumerate(r.candidates)]
        sys.stdout.write(format_candidates(rows))
    else:
        sys.stdout.write(summary_table(report.averages()))
    return 0


def cmd_metrics(args):
    records = read_candidates(args.candidates)
    if not records:
        raise ValidationError(f"{args.candidates}: no candidate records")
    sys.stdout.write(summary_table(averages_from_records(records), args.sort_by))
    return 0


def cmd_pdc(args):
    records = read_candidates(args.candidates)
    if not records:
        raise ValidationError(f"{args.candidates}: no candidate records")
    index_of = {id(r): i for i, r in enumerate(records)}
    precomputed = load_precomputed_embeddings(args.embeddings) if args.embeddings else None
    provider = None
    if precomputed is None:
        provider = load_word_vectors(args.vectors) if args.vectors else HashedEmbeddings(args.hashed_dim)
    rows = []
    for (pid, strategy), recs in sorted(group_records(records).items()):
        if precomputed is not None:
            missing = [index_of[id(r)] for r in recs if index_of[id(r)] not in precomputed]
            if missing:
                raise ValidationError(f"no precomputed embedding for candidate rows {missing[:5]}")
            points = np.stack([precomputed[index_of[id(r)]] for r in recs])
        else:
            points = np.stack([embed_sequence(provider, r.tokens) for r in recs])
        m = min(args.m, len(recs))
        k = min(args.k or m, len(recs))
        chosen = pdc_filter(recs, m, k=k, embeddings=points, seed=args.seed)
        name = strategy + args.strategy_suffix
        rows.extend((pid, name, i, r, r.tokens) for i, r in enumerate(chosen))
    text = format_candidates(rows)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_oracle_check(args):
    rng = generator(args.seed)
    failures = 0
    b = args.vocab ** args.max_len if args.beam_width is None else args.beam_width
    for i in range(args.models):
        model = random_table_model(rng, n_emit=args.vocab, max_len=args.max_len)
        got = beam_search(model, (), BeamConfig(beam_width=b, max_len=args.max_len))
        want = exhaustive_topk(model, (), args.max_len, b)
        same = len(got) == len(want) and all(
            g.full_ids == w.full_ids and abs(g.base_score - w.base_score) <= 1e-9
            for g, w in zip(got, want))
        failures += not same
        print(f"model {i:3d}: {'ok' if same else 'MISMATCH'} ({len(got)} candidates)")
    print(f"{args.models - failures}/{args.models} models agree with exhaustive enumeration")
    return 0 if failures == 0 else 2


def build_parser():
    ap = argparse.ArgumentParser(prog="divdecode", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sweep", help="run every strategy of a config file over its prompts")
    sp.add_argument("config")
    sp.add_argument("--output")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--sort-by")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override an [experiment] key")
    sp.set_defaults(func=cmd_sweep)

    dp = sub.add_parser("decode", help="decode prompts with a single strategy")
    src = dp.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", help="training corpus for an n-gram model (or builtin:toy_corpus)")
    src.add_argument("--table", help="table-model file")
    dp.add_argument("--prompts", required=True)
    dp.add_argument("--n", type=int, default=3)
    dp.add_argument("--alpha", type=float, default=0.01)
    dp.add_argument("--unit", choices=("word", "char"), default="word")
    dp.add_argument("--kind", choices=("greedy", "sample", "beam", "iterative"), default="sample")
    dp.add_argument("--name")
    dp.add_argument("--temperature", type=float, default=1.0)
    dp.add_argument("--top-s", type=int)
    dp.add_argument("--variant", default="standard",
                    choices=("standard", "top_g_cap", "hamming", "npad", "clustered"))
    dp.add_argument("--g", type=int)
    dp.add_argument("--hamming-lambda", type=float, default=0.0)
    dp.add_argument("--sigma0", type=float, default=0.0)
    dp.add_argument("--clusters", type=int, default=1)
    dp.add_argument("--iterations", type=int, default=1)
    dp.add_argument("--beam-width", type=int)
    dp.add_argument("--oversample", choices=("none", "rank", "pdc"), default="none")
    dp.add_argument("--pool", type=int, default=100)
    dp.add_argument("--pdc-k", type=int)
    dp.add_argument("--m", type=int, default=10)
    dp.add_argument("--max-len", type=int, default=40)
    dp.add_argument("--seed", type=int, default=0)
    dp.add_argument("--embedding", default="hashed:32")
    dp.add_argument("--output")
    dp.set_defaults(func=cmd_decode)

    mp = sub.add_parser("metrics", help="summarise a persisted candidates file")
    mp.add_argument("candidates")
    mp.add_argument("--sort-by")
    mp.set_defaults(func=cmd_metrics)

    pp = sub.add_parser("pdc", help="post-decoding clustering over a persisted candidate pool")
    pp.add_argument("candidates")
    pp.add_argument("--m", type=int, default=10)
    pp.add_argument("--k", type=int)
    pp.add_argument("--seed", type=int, default=0)
    emb = pp.add_mutually_exclusive_group()
    emb.add_argument("--embeddings", help="precomputed 'row_index v1 .. vd' file")
    emb.add_argument("--vectors", help="word-vector text file")
    pp.add_argument("--hashed-dim", type=int, default=32)
    pp.add_argument("--strategy-suffix", default="")
    pp.add_argument("--output")
    pp.set_defaults(func=cmd_pdc)

    op = sub.add_parser("oracle-check", help="beam search vs exhaustive enumeration on random tables")
    op.add_argument("--models", type=int, default=20)
    op.add_argument("--vocab", type=int, default=3, help="emittable tokens, EOS included")
    op.add_argument("--max-len", type=int, default=3)
    op.add_argument("--beam-width", type=int)
    op.add_argument("--seed", type=int, default=0)
    op.set_defaults(func=cmd_oracle_check)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        sys.stdout = open(os.devnull, "w")
        return 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DecodeError as exc:
        print(f"decode error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # unexpected failure during decoding
        log.debug("unhandled exception", exc_info=True)
        print(f"decode error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
