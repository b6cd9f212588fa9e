"""Command-line interface: ``tpekit <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 input/format error,
4 capacity/integrity error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .base_bpe import BaseTokenizer, dumps_canonical, read_json, tokenizer_from_dict
from .codec import FRAME_MAGIC, format_ids, medtpe_decode, medtpe_encode, pack_frame, parse_ids, unpack_frame
from .corpus import FORMATS, load_corpus, synthetic_clinical_corpus, write_lines
from .embeddings import (
    apply_surgery_to_matrix,
    build_split,
    read_embeddings,
    write_embeddings,
    write_manifest,
)
from .errors import ConfigError, FormatError, TpeError
from .evaluation import (
    EncodedCorpus,
    bench,
    budget_sweep,
    build_pipeline,
    compression_report,
    format_stats,
    token_stats,
)
from .mining import (
    CandidateTable,
    MiningConfig,
    count_ngrams,
    dumps_candidate_tsv,
    read_candidate_tsv,
    write_candidate_tsv,
)
from .surgery import MedTpeVocabulary, dependency_aware_replacement, medtpe_from_dict
from .training import DEFAULT_SPECIAL, synthetic_base_tokenizer, train_bpe


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_global(p: argparse.ArgumentParser, suppress: bool) -> None:
    # Registered on the top-level parser (real defaults) and on every
    # subparser (suppressed defaults), so the flags work on either side of
    # the command name.
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--tokenizer", default=d(None), help="tokenizer JSON (base or extended)")
    p.add_argument("--corpus", default=d(None), help="corpus file, one document per line")
    p.add_argument("--format", default=d("lines"), choices=FORMATS, help="corpus format")
    p.add_argument("--out", default=d(None), help="output path (stdout if omitted)")
    p.add_argument("--n-max", type=int, default=d(2), help="largest n-gram length (default 2)")
    p.add_argument("--budget", type=int, default=d(5000), help="tokens to replace (default 5000)")
    p.add_argument("--min-freq", type=int, default=d(2), help="minimum n-gram count (default 2)")
    p.add_argument("--alpha", type=float, default=d(0.5), help="embedding norm scale (default 0.5)")
    p.add_argument("--threads", type=int, default=d(1), help="worker processes")
    p.add_argument("--seed", type=int, default=d(0), help="corpus generator seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tpekit", description=__doc__.splitlines()[0])
    _add_global(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def cmd(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help, description=help)
        _add_global(p, suppress=True)
        return p

    p = cmd("gen-corpus", "write the seeded synthetic clinical-style corpus")
    p.add_argument("--size", type=int, default=10_000_000, help="approximate size in bytes")

    p = cmd("train-base", "train a base BPE tokenizer (synthetic mix if --corpus is omitted)")
    p.add_argument("--vocab-size", type=int, default=16384)

    cmd("mine", "count n-gram candidates and write them as TSV")

    p = cmd("build", "run the vocabulary surgery and write the extended tokenizer")
    p.add_argument("--candidates", help="reuse a candidate TSV instead of mining")

    p = cmd("encode", "encode text to ids")
    p.add_argument("--input", help="text file (stdin if omitted)")
    p.add_argument("--binary", action="store_true", help="write an MTPE binary frame")

    p = cmd("decode", "decode ids (text list or MTPE frame) to text")
    p.add_argument("--input", help="id file (stdin if omitted)")

    p = cmd("report", "compression report as JSON")
    p.add_argument("--prompt-file", help="task prompt appended to each document")
    p.add_argument("--include-prompt", action="store_true", help="count prompt tokens in the totals")
    p.add_argument("--timing", action="store_true", help="include encode wall time (non-deterministic)")
    p.add_argument("--no-per-doc", action="store_true", help="omit per-document lengths")
    p.add_argument("--table", action="store_true", help="print a human-readable table instead")

    p = cmd("sweep", "compression rate over an (n_max, budget) grid")
    p.add_argument("--n-max-list", type=_int_list, default=[2, 3, 4, 5])
    p.add_argument("--budget-list", type=_int_list, default=[100, 500, 1000, 5000])
    p.add_argument("--tsv", help="also write the grid as TSV here")

    p = cmd("stats", "most frequently emitted inserted tokens")
    p.add_argument("--top-k", type=int, default=10)

    p = cmd("init-embeddings", "initialize rows for inserted tokens")
    p.add_argument("--embeddings-in", required=True, help="MEMB binary or .npy matrix")
    p.add_argument("--manifest", help="write trainable row ids here")
    p.add_argument("--fallback-first", action="store_true",
                   help="use the first constituent when the mean direction is zero")

    p = cmd("bench", "encode throughput at several input sizes")
    p.add_argument("--sizes", type=_int_list, default=[1 << 20, 2 << 20, 4 << 20, 8 << 20])
    p.add_argument("--repeats", type=int, default=5)
    return parser


# -- helpers ------------------------------------------------------------------

def _require(args: argparse.Namespace, *names: str) -> None:
    for n in names:
        if getattr(args, n) is None:
            raise ConfigError(f"--{n.replace('_', '-')} is required for '{args.command}'")


def _config(args: argparse.Namespace) -> MiningConfig:
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return MiningConfig(n_max=args.n_max, budget_m=args.budget, min_freq=args.min_freq)


def _load_any(path: str) -> MedTpeVocabulary:
    """Extended tokenizer, or a base tokenizer wrapped as the identity surgery."""
    data = read_json(path)
    if "tpe_merges" in data:
        return medtpe_from_dict(data, path)
    base = tokenizer_from_dict(data, path)
    return dependency_aware_replacement(base, CandidateTable(), None, MiningConfig(budget_m=0), freqs={})


def _load_base(path: str) -> BaseTokenizer:
    return tokenizer_from_dict(read_json(path), path)


def _emit_text(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _read_input(path: str | None) -> bytes:
    if path is None:
        return sys.stdin.buffer.read()
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror or exc}") from exc


def _load_matrix(path: str) -> np.ndarray:
    if path.endswith(".npy"):
        try:
            return np.load(path, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise FormatError(f"{path}: {exc}") from exc
    return read_embeddings(path)


# -- commands -----------------------------------------------------------------

def run(args: argparse.Namespace) -> int:
    c = args.command
    if c == "gen-corpus":
        if args.size < 0:
            raise ConfigError("--size must be non-negative")
        docs = synthetic_clinical_corpus(args.size, seed=args.seed)
        if args.out is None:
            sys.stdout.write("".join(d + "\n" for d in docs))
        else:
            write_lines(docs, args.out)
        return 0

    if c == "train-base":
        _require(args, "out")
        if args.corpus is None:
            tok = synthetic_base_tokenizer(args.vocab_size, seed=args.seed)
        else:
            tok = train_bpe(load_corpus(args.corpus, args.format), args.vocab_size, [DEFAULT_SPECIAL])
        tok.save(args.out)
        return 0

    if c == "mine":
        _require(args, "tokenizer", "corpus")
        cfg = _config(args)
        table = count_ngrams(_load_base(args.tokenizer), load_corpus(args.corpus, args.format), cfg,
                             workers=args.threads)
        if args.out is None:
            sys.stdout.write(dumps_candidate_tsv(table))
        else:
            write_candidate_tsv(table, args.out)
        return 0

    if c == "build":
        _require(args, "tokenizer", "corpus")
        cfg = _config(args)
        base = _load_base(args.tokenizer)
        docs = load_corpus(args.corpus, args.format)
        table = read_candidate_tsv(args.candidates) if args.candidates else None
        v = build_pipeline(base, docs, cfg, table=table)
        _emit_text(v.dumps(), args.out)
        return 0

    if c == "encode":
        _require(args, "tokenizer")
        v = _load_any(args.tokenizer)
        raw = _read_input(args.input)
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"input is not valid UTF-8 ({exc.reason} at byte {exc.start})") from exc
        ids = medtpe_encode(v, text).ids
        if args.binary:
            frame = pack_frame(ids)
            if args.out is None:
                sys.stdout.buffer.write(frame)
            else:
                Path(args.out).write_bytes(frame)
        else:
            _emit_text(format_ids(ids), args.out)
        return 0

    if c == "decode":
        _require(args, "tokenizer")
        v = _load_any(args.tokenizer)
        raw = _read_input(args.input)
        ids = unpack_frame(raw) if raw.startswith(FRAME_MAGIC) else parse_ids(raw.decode("utf-8", "replace"))
        try:
            text = medtpe_decode(v, ids)
        except UnicodeDecodeError as exc:
            raise FormatError(f"ids do not decode to valid UTF-8: {exc.reason}") from exc
        if args.out is None:
            sys.stdout.buffer.write(text.encode("utf-8"))
        else:
            Path(args.out).write_bytes(text.encode("utf-8"))
        return 0

    if c == "report":
        _require(args, "tokenizer", "corpus")
        _config(args)
        v = _load_any(args.tokenizer)
        prompt = None
        if args.prompt_file:
            prompt = _read_input(args.prompt_file).decode("utf-8", "strict")
        rep = compression_report(v, load_corpus(args.corpus, args.format), prompt,
                                 args.include_prompt, workers=args.threads)
        if args.table:
            _emit_text(rep.table(), args.out)
        else:
            body = rep.to_dict(include_timing=args.timing, include_per_doc=not args.no_per_doc)
            _emit_text(dumps_canonical(body), args.out)
        return 0

    if c == "sweep":
        _require(args, "tokenizer", "corpus")
        if not args.n_max_list or not args.budget_list:
            raise ConfigError("--n-max-list and --budget-list must be non-empty")
        for n in args.n_max_list:
            MiningConfig(n_max=n, min_freq=args.min_freq)
        for m in args.budget_list:
            MiningConfig(budget_m=m)
        base = _load_base(args.tokenizer)
        enc = EncodedCorpus.build(base, load_corpus(args.corpus, args.format))
        res = budget_sweep(base, enc, args.n_max_list, args.budget_list, args.min_freq)
        _emit_text(dumps_canonical(res.to_dict()), args.out)
        if args.tsv:
            Path(args.tsv).write_text(res.to_tsv(), encoding="utf-8")
        return 0

    if c == "stats":
        _require(args, "tokenizer", "corpus")
        if args.top_k < 1:
            raise ConfigError("--top-k must be >= 1")
        v = _load_any(args.tokenizer)
        rows = token_stats(v, load_corpus(args.corpus, args.format), args.top_k)
        _emit_text(format_stats(rows), args.out)
        return 0

    if c == "init-embeddings":
        _require(args, "tokenizer", "out")
        if not args.alpha > 0:
            raise ConfigError("--alpha must be positive")
        v = _load_any(args.tokenizer)
        E = _load_matrix(args.embeddings_in)
        write_embeddings(apply_surgery_to_matrix(E, v, args.alpha, args.fallback_first), args.out)
        if args.manifest:
            write_manifest(build_split(v), args.manifest)
        return 0

    if c == "bench":
        _require(args, "tokenizer")
        if args.repeats < 1 or any(s < 0 for s in args.sizes):
            raise ConfigError("--repeats must be >= 1 and sizes non-negative")
        v = _load_any(args.tokenizer)
        if args.corpus:
            docs = load_corpus(args.corpus, args.format)
        else:
            docs = synthetic_clinical_corpus(max(args.sizes, default=0), seed=args.seed)
        rows = bench(v, args.sizes, docs, args.repeats)
        out = [{"bytes": r.n, "seconds": r.seconds, "tokens": r.tokens,
                "tokens_per_sec": r.tokens_per_sec} for r in rows]
        _emit_text(json.dumps(out, indent=1) + "\n", args.out)
        return 0

    raise ConfigError(f"unknown command {c!r}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return run(args)
    except TpeError as exc:
        print(f"tpekit: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except UnicodeDecodeError as exc:
        print(f"tpekit: error: invalid UTF-8 input: {exc.reason}", file=sys.stderr)
        return FormatError.exit_code


if __name__ == "__main__":
    sys.exit(main())
