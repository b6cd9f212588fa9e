"""N-gram mining over base-token streams and candidate ranking."""

from __future__ import annotations

import csv
import io
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .base_bpe import BaseTokenizer, str_to_token, token_to_str
from .errors import ConfigError, FormatError

N_MAX_RANGE = (2, 8)
UNIT_SEP = "\x1f"


@dataclass(frozen=True)
class MiningConfig:
    n_max: int = 2
    budget_m: int = 5000
    min_freq: int = 2

    def __post_init__(self) -> None:
        lo, hi = N_MAX_RANGE
        if not isinstance(self.n_max, int) or not lo <= self.n_max <= hi:
            raise ConfigError(f"n_max must be an integer in [{lo}, {hi}], got {self.n_max!r}")
        # budget 0 is accepted as the identity surgery
        if not isinstance(self.budget_m, int) or self.budget_m < 0:
            raise ConfigError(f"budget_m must be a non-negative integer, got {self.budget_m!r}")
        if not isinstance(self.min_freq, int) or self.min_freq < 1:
            raise ConfigError(f"min_freq must be an integer >= 1, got {self.min_freq!r}")


@dataclass(frozen=True)
class TpeCandidate:
    constituents: tuple[bytes, ...]
    freq: int
    surface: bytes = field(init=False)
    score: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "constituents", tuple(self.constituents))
        if len(self.constituents) < 2:
            raise ValueError("a candidate needs at least two constituents")
        object.__setattr__(self, "surface", b"".join(self.constituents))
        object.__setattr__(self, "score", self.freq * len(self.constituents))

    @property
    def n(self) -> int:
        return len(self.constituents)

    def sort_key(self) -> tuple:
        return (-self.score, -self.freq, self.surface, self.constituents)


@dataclass(frozen=True)
class CandidateTable:
    """Candidates in canonical order: score desc, freq desc, surface asc, split asc."""

    rows: tuple[TpeCandidate, ...] = ()

    @classmethod
    def from_rows(cls, rows: Iterable[TpeCandidate]) -> "CandidateTable":
        return cls(tuple(sorted(rows, key=TpeCandidate.sort_key)))

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def filter(self, n_max: int | None = None, min_freq: int = 1) -> "CandidateTable":
        """Sub-table; ordering is inherited so no re-sort is needed."""
        return CandidateTable(tuple(
            r for r in self.rows
            if r.freq >= min_freq and (n_max is None or r.n <= n_max)
        ))


def _split_at(ids: Sequence[int], barriers: frozenset[int]) -> list[Sequence[int]]:
    if not barriers or barriers.isdisjoint(ids):
        return [ids]
    segs, cur = [], []
    for t in ids:
        if t in barriers:
            segs.append(cur)
            cur = []
        else:
            cur.append(t)
    segs.append(cur)
    return segs


def count_ngram_ids(
    docs_ids: Iterable[Sequence[int]], n_max: int, barriers: frozenset[int] = frozenset()
) -> Counter:
    """Overlapping counts of every id n-gram, 2 <= n <= n_max, within each document."""
    counts: Counter = Counter()
    for ids in docs_ids:
        for seg in _split_at(ids, barriers):
            for n in range(2, n_max + 1):
                if len(seg) < n:
                    break
                counts.update(zip(*(seg[k:] for k in range(n))))
    return counts


_worker_tok: BaseTokenizer | None = None


def _init_worker(tok: BaseTokenizer) -> None:
    global _worker_tok
    _worker_tok = tok


def _count_chunk(args: tuple[list[str], int]) -> Counter:
    docs, n_max = args
    tok = _worker_tok
    assert tok is not None
    barriers = frozenset(tok.vocab.token_to_id[s] for s in tok.vocab.specials)
    return count_ngram_ids((tok.encode(d) for d in docs), n_max, barriers)


def _chunks(docs: Iterable[str], size: int) -> Iterable[list[str]]:
    buf: list[str] = []
    for d in docs:
        buf.append(d)
        if len(buf) >= size:
            yield buf
            buf = []
    if buf:
        yield buf


def table_from_counts(tok: BaseTokenizer, counts: Counter, min_freq: int) -> CandidateTable:
    id_to_token = tok.vocab.id_to_token
    rows = [
        TpeCandidate(tuple(id_to_token[i] for i in key), c)
        for key, c in counts.items()
        if c >= min_freq
    ]
    return CandidateTable.from_rows(rows)


def count_ngrams(
    tok: BaseTokenizer,
    corpus: Iterable[str],
    cfg: MiningConfig,
    workers: int = 1,
    chunk_docs: int = 512,
) -> CandidateTable:
    """Mine base-token n-grams from ``corpus`` (one string per document).

    With ``workers > 1`` documents are counted in a process pool; partial
    counters are summed, so the result does not depend on scheduling.
    """
    if workers <= 1:
        barriers = frozenset(tok.vocab.token_to_id[s] for s in tok.vocab.specials)
        counts = count_ngram_ids((tok.encode(d) for d in corpus), cfg.n_max, barriers)
    else:
        counts = Counter()
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(tok,)) as pool:
            jobs = ((chunk, cfg.n_max) for chunk in _chunks(corpus, chunk_docs))
            for part in pool.map(_count_chunk, jobs):
                counts.update(part)
    return table_from_counts(tok, counts, cfg.min_freq)


def score_candidates(table: CandidateTable | Iterable[TpeCandidate]) -> CandidateTable:
    """Recompute ``score = freq * N``, drop zero-frequency rows, restore canonical order."""
    return CandidateTable.from_rows(
        TpeCandidate(r.constituents, r.freq) for r in table if r.freq > 0
    )


def select_insertion_set(
    table: CandidateTable, m: int, exclude: Iterable[bytes] = ()
) -> list[TpeCandidate]:
    """First ``m`` rows in canonical order with unique surfaces.

    Surfaces listed in ``exclude`` (typically tokens the base vocabulary
    already holds) are skipped.
    """
    if m < 0:
        raise ConfigError(f"insertion budget must be non-negative, got {m}")
    skip = set(exclude)
    picked: list[TpeCandidate] = []
    for row in table.rows:
        if len(picked) >= m:
            break
        if row.surface in skip:
            continue
        skip.add(row.surface)
        picked.append(row)
    return picked


# -- TSV export ---------------------------------------------------------------

TSV_HEADER = ("surface", "N", "freq", "score", "constituents")


def dumps_candidate_tsv(table: Iterable[TpeCandidate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE, escapechar=None)
    w.writerow(TSV_HEADER)
    for r in table:
        w.writerow((
            token_to_str(r.surface), r.n, r.freq, r.score,
            UNIT_SEP.join(token_to_str(c) for c in r.constituents),
        ))
    return buf.getvalue()


def write_candidate_tsv(table: Iterable[TpeCandidate], path: str | Path) -> None:
    Path(path).write_text(dumps_candidate_tsv(table), encoding="utf-8")


def read_candidate_tsv(path: str | Path) -> CandidateTable:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.rstrip("\n").split("\t")
            if lineno == 1:
                if tuple(fields) != TSV_HEADER:
                    raise FormatError(f"{path}: line 1: expected header {TSV_HEADER}")
                continue
            if len(fields) != 5:
                raise FormatError(f"{path}: line {lineno}: expected 5 columns, got {len(fields)}")
            try:
                n, freq, score = int(fields[1]), int(fields[2]), int(fields[3])
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: {exc}") from exc
            parts = tuple(str_to_token(c) for c in fields[4].split(UNIT_SEP))
            row = TpeCandidate(parts, freq)
            if row.n != n or row.score != score or token_to_str(row.surface) != fields[0]:
                raise FormatError(f"{path}: line {lineno}: columns disagree with constituents")
            rows.append(row)
    return CandidateTable.from_rows(rows)
