"""Vocabulary surgery: swap rare base tokens for mined composite tokens.

The resulting vocabulary keeps the base size exactly. Inserted tokens reuse the
ids of the evicted ones, so an embedding matrix keeps its shape.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .base_bpe import (
    BaseTokenizer,
    Vocabulary,
    dumps_canonical,
    read_json,
    str_to_token,
    token_to_str,
    tokenizer_from_dict,
)
from .errors import CapacityError, FormatError, IntegrityError
from .mining import CandidateTable, MiningConfig, TpeCandidate, select_insertion_set

Pair = tuple[bytes, bytes]


@dataclass(frozen=True)
class MergePath:
    pairs: tuple[Pair, ...]

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


@dataclass(frozen=True)
class TpeMergeTable:
    pairs: tuple[Pair, ...] = ()
    origin: Mapping[Pair, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair: object) -> bool:
        return pair in self.origin


def build_merge_path(constituents: TpeCandidate | Sequence[bytes]) -> MergePath:
    """Left fold: ``[(x1, x2), (x1x2, x3), ..., (x1..x{N-1}, xN)]``."""
    parts = constituents.constituents if isinstance(constituents, TpeCandidate) else tuple(constituents)
    if len(parts) < 2:
        raise ValueError("a merge path needs at least two constituents")
    pairs = []
    prefix = parts[0]
    for nxt in parts[1:]:
        pairs.append((prefix, nxt))
        prefix += nxt
    return MergePath(tuple(pairs))


def build_tpe_merge_table(insertion: Iterable[TpeCandidate | Sequence[bytes]]) -> TpeMergeTable:
    pairs: list[Pair] = []
    origin: dict[Pair, int] = {}
    for rank, cand in enumerate(insertion):
        for pair in build_merge_path(cand):
            if pair not in origin:
                origin[pair] = rank
                pairs.append(pair)
    return TpeMergeTable(tuple(pairs), origin)


def _constituents(c: TpeCandidate | Sequence[bytes]) -> tuple[bytes, ...]:
    return c.constituents if isinstance(c, TpeCandidate) else tuple(c)


def dependent_set(insertion: Iterable[TpeCandidate | Sequence[bytes]], base: BaseTokenizer) -> set[bytes]:
    """Every vocabulary token a merge path touches, closed under base derivations."""
    vocab = base.vocab
    direct: set[bytes] = set()
    for cand in insertion:
        parts = _constituents(cand)
        for t in parts:
            if t not in vocab:
                raise IntegrityError(f"constituent {token_to_str(t)!r} is not a base token")
        direct.update(parts)
        for left, _ in build_merge_path(parts):
            if left in vocab:
                direct.add(left)
    closed = set(direct)
    for t in direct:
        for left, right in base.merge_path(t):
            closed.add(left)
            closed.add(right)
    return closed


def token_frequencies(tok: BaseTokenizer, corpus: Iterable[str]) -> dict[bytes, int]:
    counts: Counter = Counter()
    for doc in corpus:
        counts.update(tok.encode(doc))
    return frequencies_from_id_counts(tok, counts)


def frequencies_from_id_counts(tok: BaseTokenizer, counts: Mapping[int, int]) -> dict[bytes, int]:
    return {t: counts.get(i, 0) for i, t in enumerate(tok.vocab.id_to_token)}


def select_eviction(
    base: BaseTokenizer, protected: Iterable[bytes], freqs: Mapping[bytes, int], m: int
) -> list[bytes]:
    """The ``m`` least frequent unprotected tokens.

    Ties go to the longer surface, then the lexicographically smaller one.
    """
    keep = set(protected)
    vocab = base.vocab
    unprotected = [t for t in vocab.id_to_token if t not in keep and not vocab.is_protected(t)]
    if len(unprotected) < m:
        raise CapacityError(
            f"budget {m} exceeds the {len(unprotected)} evictable tokens; "
            f"max feasible budget is {len(unprotected)}",
            max_feasible=len(unprotected),
        )
    unprotected.sort(key=lambda t: (freqs.get(t, 0), -len(t), t))
    return unprotected[:m]


def _decompose(base: BaseTokenizer, evicted: set[bytes]) -> dict[bytes, tuple[bytes, ...]]:
    """Shallowest expansion of each evicted token into preserved tokens."""
    memo: dict[bytes, tuple[bytes, ...]] = {}

    def expand(t: bytes, visiting: frozenset[bytes]) -> tuple[bytes, ...]:
        if t in memo:
            return memo[t]
        if t in visiting:
            raise IntegrityError(f"cyclic producer chain through {token_to_str(t)!r}")
        rule = base.producer_index.get(t)
        if rule is None:
            raise IntegrityError(f"evicted token {token_to_str(t)!r} has no producing merge")
        parts: list[bytes] = []
        for side in (rule.left, rule.right):
            if side in evicted:
                parts.extend(expand(side, visiting | {t}))
            else:
                parts.append(side)
        memo[t] = tuple(parts)
        return memo[t]

    return {t: expand(t, frozenset()) for t in sorted(evicted)}


@dataclass(eq=False)
class MedTpeVocabulary:
    """Base tokenizer plus the composite-token layer.

    ``insertion[k]`` owns the id that ``eviction[k]`` held in the base vocabulary.
    """

    base: BaseTokenizer
    insertion: tuple[TpeCandidate, ...]
    eviction: tuple[bytes, ...]
    tpe_merges: TpeMergeTable
    decomposition: dict[bytes, tuple[bytes, ...]]
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.insertion = tuple(self.insertion)
        self.eviction = tuple(self.eviction)
        if len(self.insertion) != len(self.eviction):
            raise IntegrityError(
                f"{len(self.insertion)} insertions but {len(self.eviction)} evictions"
            )
        base_vocab = self.base.vocab
        tokens = list(base_vocab.id_to_token)
        for cand, old in zip(self.insertion, self.eviction):
            if old not in base_vocab:
                raise IntegrityError(f"evicted token {token_to_str(old)!r} not in base vocabulary")
            tokens[base_vocab.token_to_id[old]] = cand.surface
        self.vocab = Vocabulary(tokens, base_vocab.specials)

    @property
    def m(self) -> int:
        return len(self.insertion)

    @cached_property
    def insertion_ids(self) -> tuple[int, ...]:
        return tuple(self.vocab.token_to_id[c.surface] for c in self.insertion)

    @cached_property
    def evicted_set(self) -> frozenset[bytes]:
        return frozenset(self.eviction)

    def __len__(self) -> int:
        return len(self.vocab)

    def __getstate__(self) -> dict:
        state = self.__dict__.copy()
        state.pop("_codec", None)
        return state

    def check_invariants(self) -> None:
        """Raise IntegrityError unless every structural invariant holds."""
        base, vocab = self.base, self.vocab
        if len(vocab) != len(base.vocab):
            raise IntegrityError("vocabulary size changed")
        surfaces = [c.surface for c in self.insertion]
        if len(set(surfaces)) != len(surfaces):
            raise IntegrityError("duplicate insertion surface")
        evicted = self.evicted_set
        if len(evicted) != len(self.eviction):
            raise IntegrityError("duplicate eviction entry")
        if evicted & set(surfaces):
            raise IntegrityError("a token is both inserted and evicted")
        guarded = dependent_set(self.insertion, base)
        for t in self.eviction:
            if t in guarded or base.vocab.is_protected(t):
                raise IntegrityError(f"protected token {token_to_str(t)!r} was evicted")
        # merge table: pairs walk forward from preserved base tokens
        preserved = {t for t in base.vocab.id_to_token if t not in evicted}
        producible: set[bytes] = set()
        for k, (left, right) in enumerate(self.tpe_merges.pairs):
            if right not in preserved:
                raise IntegrityError(f"tpe_merges[{k}] right side {token_to_str(right)!r} not preserved")
            if left not in preserved and left not in producible:
                raise IntegrityError(f"tpe_merges[{k}] left side {token_to_str(left)!r} not resolvable")
            producible.add(left + right)
        for cand in self.insertion:
            if any(p not in self.tpe_merges for p in build_merge_path(cand)):
                raise IntegrityError(
                    f"merge path of {token_to_str(cand.surface)!r} missing from tpe_merges"
                )
        if set(self.decomposition) != evicted:
            raise IntegrityError("decomposition keys differ from the eviction set")
        for t, parts in self.decomposition.items():
            if b"".join(parts) != t:
                raise IntegrityError(f"decomposition of {token_to_str(t)!r} does not concatenate back")
            for p in parts:
                if p not in preserved:
                    raise IntegrityError(
                        f"decomposition of {token_to_str(t)!r} uses unavailable token {token_to_str(p)!r}"
                    )

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        out = self.base.to_dict()
        out["tpe_merges"] = [[token_to_str(a), token_to_str(b)] for a, b in self.tpe_merges.pairs]
        out["insertion"] = [[token_to_str(p) for p in c.constituents] for c in self.insertion]
        out["insertion_freq"] = [c.freq for c in self.insertion]
        out["eviction"] = [token_to_str(t) for t in self.eviction]
        out["decomposition"] = {
            token_to_str(t): [token_to_str(p) for p in self.decomposition[t]]
            for t in sorted(self.decomposition)
        }
        out["meta"] = dict(self.meta)
        return out

    def dumps(self) -> str:
        return dumps_canonical(self.to_dict())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def _string_array(data: Mapping, key: str, source: str) -> list:
    val = data.get(key)
    if not isinstance(val, list):
        raise FormatError(f"{source}: field {key!r} must be an array")
    return val


def medtpe_from_dict(data: Mapping, source: str = "<tokenizer>") -> MedTpeVocabulary:
    base = tokenizer_from_dict(data, source)
    merges_raw = _string_array(data, "tpe_merges", source)
    pairs = []
    for k, e in enumerate(merges_raw):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(s, str) for s in e)):
            raise FormatError(f"{source}: field 'tpe_merges[{k}]' must be a two-element string array")
        pairs.append((str_to_token(e[0]), str_to_token(e[1])))
    ins_raw = _string_array(data, "insertion", source)
    freqs = data.get("insertion_freq", [0] * len(ins_raw))
    if not isinstance(freqs, list) or len(freqs) != len(ins_raw):
        raise FormatError(f"{source}: field 'insertion_freq' must match 'insertion' in length")
    insertion = []
    for k, (e, f) in enumerate(zip(ins_raw, freqs)):
        if not (isinstance(e, list) and len(e) >= 2 and all(isinstance(s, str) for s in e)):
            raise FormatError(f"{source}: field 'insertion[{k}]' must be an array of >= 2 strings")
        if not isinstance(f, int) or f < 0:
            raise FormatError(f"{source}: field 'insertion_freq[{k}]' must be a non-negative integer")
        insertion.append(TpeCandidate(tuple(str_to_token(s) for s in e), f))
    ev_raw = _string_array(data, "eviction", source)
    if not all(isinstance(s, str) for s in ev_raw):
        raise FormatError(f"{source}: field 'eviction' must be an array of strings")
    dec_raw = data.get("decomposition")
    if not isinstance(dec_raw, dict):
        raise FormatError(f"{source}: field 'decomposition' must be an object")
    decomposition = {}
    for key, parts in dec_raw.items():
        if not isinstance(parts, list) or not all(isinstance(s, str) for s in parts):
            raise FormatError(f"{source}: field 'decomposition[{key!r}]' must be an array of strings")
        decomposition[str_to_token(key)] = tuple(str_to_token(s) for s in parts)
    meta = data.get("meta", {})
    if not isinstance(meta, dict):
        raise FormatError(f"{source}: field 'meta' must be an object")
    table = TpeMergeTable(tuple(pairs), {p: 0 for p in pairs})
    if len(table.origin) != len(pairs):
        raise IntegrityError(f"{source}: duplicate pair in 'tpe_merges'")
    # origin ranks are not stored; recover them from the insertion order
    rebuilt = build_tpe_merge_table(insertion)
    origin = {p: rebuilt.origin.get(p, -1) for p in pairs}
    try:
        v = MedTpeVocabulary(
            base, tuple(insertion), tuple(str_to_token(s) for s in ev_raw),
            TpeMergeTable(tuple(pairs), origin), decomposition, meta,
        )
        v.check_invariants()
    except IntegrityError as exc:
        raise IntegrityError(f"{source}: {exc}") from exc
    return v


def load_medtpe(path: str | Path) -> MedTpeVocabulary:
    return medtpe_from_dict(read_json(path), str(path))


def dependency_aware_replacement(
    base: BaseTokenizer,
    table: CandidateTable,
    corpus: Iterable[str] | None,
    cfg: MiningConfig,
    freqs: Mapping[bytes, int] | None = None,
    meta: Mapping | None = None,
) -> MedTpeVocabulary:
    """Build the extended vocabulary with budget ``cfg.budget_m``.

    Token frequencies come from ``freqs`` when given, otherwise from
    base-encoding ``corpus``. If fewer eligible candidates than the budget
    exist, every eligible candidate is inserted and the same number of tokens
    is evicted.
    """
    eligible = table.filter(n_max=cfg.n_max, min_freq=cfg.min_freq)
    insertion = select_insertion_set(eligible, cfg.budget_m, exclude=base.vocab.token_to_id)
    guarded = dependent_set(insertion, base)
    if freqs is None:
        freqs = token_frequencies(base, corpus or ())
    eviction = select_eviction(base, guarded, freqs, len(insertion))
    decomposition = _decompose(base, set(eviction))
    info = {"n_max": cfg.n_max, "budget_m": cfg.budget_m, "min_freq": cfg.min_freq}
    info.update(meta or {})
    v = MedTpeVocabulary(
        base,
        tuple(insertion),
        tuple(eviction),
        build_tpe_merge_table(insertion),
        decomposition,
        info,
    )
    v.check_invariants()
    return v
