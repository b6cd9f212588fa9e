"""Pipeline orchestration and the compression / throughput reports."""

from __future__ import annotations

import gc
import statistics
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .base_bpe import BaseTokenizer, token_to_str
from .codec import _compiled, medtpe_encode, merge_layer
from .corpus import corpus_digest
from .errors import CapacityError
from .mining import CandidateTable, MiningConfig, count_ngram_ids, table_from_counts
from .surgery import MedTpeVocabulary, dependency_aware_replacement, frequencies_from_id_counts


@dataclass
class EncodedCorpus:
    """Base encoding of a corpus, kept around so sweeps encode only once."""

    tok: BaseTokenizer
    docs_ids: list[list[int]]
    digest: str

    @classmethod
    def build(cls, tok: BaseTokenizer, docs: Sequence[str]) -> "EncodedCorpus":
        return cls(tok, [tok.encode(d) for d in docs], corpus_digest(docs))

    @property
    def base_tokens(self) -> int:
        return sum(map(len, self.docs_ids))

    def frequencies(self) -> dict[bytes, int]:
        counts: Counter = Counter()
        for ids in self.docs_ids:
            counts.update(ids)
        return frequencies_from_id_counts(self.tok, counts)

    def mine(self, n_max: int, min_freq: int = 2) -> CandidateTable:
        specials = self.tok.vocab.specials
        barriers = frozenset(self.tok.vocab.token_to_id[s] for s in specials)
        return table_from_counts(self.tok, count_ngram_ids(self.docs_ids, n_max, barriers), min_freq)


def build_pipeline(
    base: BaseTokenizer,
    docs: Sequence[str],
    cfg: MiningConfig,
    encoded: EncodedCorpus | None = None,
    table: CandidateTable | None = None,
) -> MedTpeVocabulary:
    """Mine, rank, and run the surgery on one corpus."""
    enc = encoded or EncodedCorpus.build(base, docs)
    if table is None:
        table = enc.mine(cfg.n_max, cfg.min_freq)
    return dependency_aware_replacement(
        base, table, None, cfg, freqs=enc.frequencies(), meta={"corpus_digest": enc.digest}
    )


@dataclass
class CompressionReport:
    docs: int
    base_tokens: int
    medtpe_tokens: int
    cr: float
    per_doc: list[tuple[int, int]]
    elapsed_encode_seconds: float = 0.0
    prompt_tokens: tuple[int, int] | None = None

    def to_dict(self, include_timing: bool = False, include_per_doc: bool = True) -> dict:
        out: dict = {
            "docs": self.docs,
            "base_tokens": self.base_tokens,
            "medtpe_tokens": self.medtpe_tokens,
            "cr": self.cr,
        }
        if self.prompt_tokens is not None:
            out["prompt_tokens"] = {"base": self.prompt_tokens[0], "medtpe": self.prompt_tokens[1]}
        if include_timing:
            out["elapsed_encode_seconds"] = self.elapsed_encode_seconds
        if include_per_doc:
            out["per_doc"] = [list(p) for p in self.per_doc]
        return out

    def table(self) -> str:
        return (
            f"documents        {self.docs:>14,}\n"
            f"base tokens      {self.base_tokens:>14,}\n"
            f"medtpe tokens    {self.medtpe_tokens:>14,}\n"
            f"compression rate {self.cr:>14.4%}\n"
        )


def compression_rate(base_tokens: int, new_tokens: int) -> float:
    return 1.0 - new_tokens / base_tokens if base_tokens > 0 else 0.0


_worker_v: MedTpeVocabulary | None = None


def _init_worker(v: MedTpeVocabulary) -> None:
    global _worker_v
    _worker_v = v


def _lengths(docs: list[str]) -> list[tuple[int, int]]:
    v = _worker_v
    assert v is not None
    return [(len(v.base.encode(d)), len(medtpe_encode(v, d).ids)) for d in docs]


def compression_report(
    v: MedTpeVocabulary,
    corpus: Iterable[str],
    prompt: str | None = None,
    include_prompt: bool = False,
    workers: int = 1,
) -> CompressionReport:
    """Encode each document with both tokenizers and compare lengths.

    A prompt, when given, is appended to every document. Its tokens count
    towards the totals only if ``include_prompt`` is set. With ``workers > 1``
    documents are encoded in a process pool and gathered in input order; the
    recorded time then covers both passes.
    """
    docs = list(corpus)
    _compiled(v)
    if workers > 1 and len(docs) > 1:
        size = max(1, -(-len(docs) // (4 * workers)))
        chunks = [docs[i:i + size] for i in range(0, len(docs), size)]
        t0 = time.perf_counter()
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(v,)) as pool:
            pairs = [p for part in pool.map(_lengths, chunks) for p in part]
        elapsed = time.perf_counter() - t0
        base_lens = [b for b, _ in pairs]
        new_lens = [n for _, n in pairs]
    else:
        base_lens = [len(v.base.encode(d)) for d in docs]
        t0 = time.perf_counter()
        new_lens = [len(medtpe_encode(v, d).ids) for d in docs]
        elapsed = time.perf_counter() - t0
    prompt_tokens = None
    if prompt is not None:
        prompt_tokens = (len(v.base.encode(prompt)), len(medtpe_encode(v, prompt).ids))
        if include_prompt:
            base_lens = [b + prompt_tokens[0] for b in base_lens]
            new_lens = [n + prompt_tokens[1] for n in new_lens]
    base_total, new_total = sum(base_lens), sum(new_lens)
    return CompressionReport(
        docs=len(docs),
        base_tokens=base_total,
        medtpe_tokens=new_total,
        cr=compression_rate(base_total, new_total),
        per_doc=list(zip(base_lens, new_lens)),
        elapsed_encode_seconds=elapsed,
        prompt_tokens=prompt_tokens,
    )


@dataclass
class SweepCell:
    n_max: int
    budget_m: int
    cr: float | None
    inserted: int = 0
    status: str = "ok"


@dataclass
class SweepResult:
    grid: list[SweepCell]
    corpus_digest: str
    min_freq: int = 2

    def cell(self, n_max: int, budget_m: int) -> SweepCell:
        for c in self.grid:
            if c.n_max == n_max and c.budget_m == budget_m:
                return c
        raise KeyError((n_max, budget_m))

    def to_dict(self) -> dict:
        return {
            "corpus_digest": self.corpus_digest,
            "min_freq": self.min_freq,
            "grid": [
                {"n_max": c.n_max, "budget_m": c.budget_m, "cr": c.cr,
                 "inserted": c.inserted, "status": c.status}
                for c in self.grid
            ],
        }

    def to_tsv(self) -> str:
        lines = ["n_max\tbudget_m\tcr\tinserted\tstatus"]
        for c in self.grid:
            cr = "" if c.cr is None else repr(c.cr)
            lines.append(f"{c.n_max}\t{c.budget_m}\t{cr}\t{c.inserted}\t{c.status}")
        return "\n".join(lines) + "\n"


def corpus_cr(v: MedTpeVocabulary, enc: EncodedCorpus) -> float:
    fb = _compiled(v).fallback
    new_total = 0
    for ids in enc.docs_ids:
        if fb and not fb.keys().isdisjoint(ids):
            ids = [p for t in ids for p in fb.get(t, (t,))]
        new_total += len(merge_layer(v, ids))
    return compression_rate(enc.base_tokens, new_total)


def budget_sweep(
    base: BaseTokenizer,
    corpus: Sequence[str] | EncodedCorpus,
    n_max_list: Sequence[int],
    budget_list: Sequence[int],
    min_freq: int = 2,
) -> SweepResult:
    """CR for every (n_max, budget) cell.

    The corpus is base-encoded once and mined once at the largest n_max.
    Smaller n_max tables are filtered views, which count the same as
    re-mining.
    """
    if not n_max_list or not budget_list:
        raise ValueError("n_max_list and budget_list must be non-empty")
    enc = corpus if isinstance(corpus, EncodedCorpus) else EncodedCorpus.build(base, corpus)
    freqs = enc.frequencies()
    full = enc.mine(max(n_max_list), min_freq)
    grid: list[SweepCell] = []
    for n_max in n_max_list:
        table = full.filter(n_max=n_max)
        for m in budget_list:
            cfg = MiningConfig(n_max=n_max, budget_m=m, min_freq=min_freq)
            try:
                v = dependency_aware_replacement(base, table, None, cfg, freqs=freqs)
            except CapacityError as exc:
                grid.append(SweepCell(n_max, m, None, 0, f"infeasible: max budget {exc.max_feasible}"))
                continue
            grid.append(SweepCell(n_max, m, corpus_cr(v, enc), v.m))
    return SweepResult(grid, enc.digest, min_freq)


def token_stats(v: MedTpeVocabulary, corpus: Iterable[str], top_k: int = 10) -> list[tuple[bytes, int]]:
    """Most frequently emitted inserted tokens, count desc then surface asc."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    inserted = set(v.insertion_ids)
    counts: Counter = Counter()
    for doc in corpus:
        counts.update(t for t in medtpe_encode(v, doc).ids if t in inserted)
    table = v.vocab.id_to_token
    ranked = sorted(((table[i], c) for i, c in counts.items()), key=lambda r: (-r[1], r[0]))
    return ranked[:top_k]


def format_stats(rows: Sequence[tuple[bytes, int]]) -> str:
    lines = ["rank\ttoken\tcount"]
    lines += [f"{k}\t{token_to_str(t)}\t{c}" for k, (t, c) in enumerate(rows, 1)]
    return "\n".join(lines) + "\n"


@dataclass
class BenchRow:
    n: int
    seconds: float
    tokens: int
    runs: list[float] = field(default_factory=list)

    @property
    def tokens_per_sec(self) -> float:
        return self.tokens / self.seconds if self.seconds > 0 else 0.0


def sample_text(docs: Sequence[str], n_bytes: int) -> str:
    """Join documents with newlines, cycling, and cut to ``n_bytes`` UTF-8 bytes."""
    if n_bytes <= 0 or not docs:
        return ""
    pieces, size = [], 0
    while size < n_bytes:
        for d in docs:
            pieces.append(d)
            size += len(d.encode("utf-8")) + 1
            if size >= n_bytes:
                break
    raw = "\n".join(pieces).encode("utf-8")[:n_bytes]
    return raw.decode("utf-8", errors="ignore")


def _time_once(v: MedTpeVocabulary, text: str) -> tuple[float, int]:
    gc_was = gc.isenabled()
    gc.disable()
    try:
        t0 = time.perf_counter()
        n = len(medtpe_encode(v, text).ids)
        return time.perf_counter() - t0, n
    finally:
        if gc_was:
            gc.enable()


def bench(
    v: MedTpeVocabulary, sizes: Sequence[int], docs: Sequence[str], repeats: int = 5
) -> list[BenchRow]:
    """Median encode wall time per input size.

    Every size gets one warm-up run. Timed runs then go round-robin over the
    sizes, so a slow stretch on a shared machine hits all sizes alike instead
    of inflating one of them.
    """
    texts = [sample_text(docs, n) for n in sizes]
    for text in texts:
        _time_once(v, text)
    runs: list[list[float]] = [[] for _ in sizes]
    tokens = [0] * len(sizes)
    for _ in range(repeats):
        for k, text in enumerate(texts):
            dt, tokens[k] = _time_once(v, text)
            runs[k].append(dt)
    return [BenchRow(n, statistics.median(r), t, r) for n, r, t in zip(sizes, runs, tokens)]
