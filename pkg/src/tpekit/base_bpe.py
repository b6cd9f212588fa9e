"""Byte-level BPE core: vocabulary, merge table, encode/decode, file format.

Tokens are handled as ``bytes`` everywhere. The JSON file stores them as text,
with bytes that are not part of a printable UTF-8 character written as
``<0xNN>``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import FormatError, IntegrityError, TokenLookupError

BYTE_ALPHABET: frozenset[bytes] = frozenset(bytes([b]) for b in range(256))

_ESCAPE_RE = re.compile(r"<0x([0-9A-F]{2})>")
_PRETOKEN_RE = re.compile(r"\s*\S+|\s+")
_CACHE_LIMIT = 1 << 18


def token_to_str(tok: bytes) -> str:
    """Render token bytes as the escaped text used in tokenizer files."""
    text = tok.decode("utf-8", errors="surrogateescape")
    out: list[str] = []
    for i, ch in enumerate(text):
        if "\udc80" <= ch <= "\udcff":
            out.append(f"<0x{ord(ch) - 0xDC00:02X}>")
        elif ch == "<" and _ESCAPE_RE.match(text, i):
            # a literal "<0xNN>" would otherwise read back as an escape
            out.append("<0x3C>")
        elif ch.isprintable():
            out.append(ch)
        else:
            out.extend(f"<0x{b:02X}>" for b in ch.encode("utf-8"))
    return "".join(out)


def str_to_token(s: str) -> bytes:
    parts = _ESCAPE_RE.split(s)
    buf = bytearray()
    for k, part in enumerate(parts):
        if k % 2:
            buf.append(int(part, 16))
        else:
            buf += part.encode("utf-8")
    return bytes(buf)


def as_token(t: bytes | str) -> bytes:
    return t.encode("utf-8") if isinstance(t, str) else bytes(t)


class Vocabulary:
    """Bidirectional token <-> id map over a dense id range ``[0, len)``."""

    __slots__ = ("id_to_token", "token_to_id", "specials")

    def __init__(self, id_to_token: Sequence[bytes], specials: Iterable[bytes] = ()):
        self.id_to_token: tuple[bytes, ...] = tuple(id_to_token)
        self.token_to_id: dict[bytes, int] = {}
        for i, tok in enumerate(self.id_to_token):
            if not tok:
                raise IntegrityError(f"token id {i} is empty")
            if tok in self.token_to_id:
                raise IntegrityError(
                    f"duplicate token {token_to_str(tok)!r} at ids "
                    f"{self.token_to_id[tok]} and {i}"
                )
            self.token_to_id[tok] = i
        self.specials: frozenset[bytes] = frozenset(specials)
        missing = [t for t in self.specials if t not in self.token_to_id]
        if missing:
            raise IntegrityError(f"special token {token_to_str(missing[0])!r} not in vocab")
        missing_bytes = [b for b in range(256) if bytes([b]) not in self.token_to_id]
        if missing_bytes:
            raise IntegrityError(f"byte token <0x{missing_bytes[0]:02X}> not in vocab")

    @classmethod
    def from_mapping(cls, mapping: Mapping[bytes, int], specials: Iterable[bytes] = ()) -> "Vocabulary":
        n = len(mapping)
        slots: list[bytes | None] = [None] * n
        for tok, i in mapping.items():
            if not isinstance(i, int) or isinstance(i, bool) or not 0 <= i < n:
                raise IntegrityError(f"token {token_to_str(tok)!r} has id {i!r} outside [0, {n})")
            if slots[i] is not None:
                raise IntegrityError(f"id {i} assigned to more than one token")
            slots[i] = tok
        return cls(slots, specials)  # type: ignore[arg-type]

    byte_alphabet = BYTE_ALPHABET

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, tok: object) -> bool:
        return tok in self.token_to_id

    def __getitem__(self, tok: bytes) -> int:
        try:
            return self.token_to_id[tok]
        except KeyError:
            raise TokenLookupError(f"token {token_to_str(tok)!r} not in vocabulary") from None

    def token(self, token_id: int) -> bytes:
        if not 0 <= token_id < len(self.id_to_token):
            raise TokenLookupError(f"token id {token_id} outside [0, {len(self)})")
        return self.id_to_token[token_id]

    def is_protected(self, tok: bytes) -> bool:
        return tok in BYTE_ALPHABET or tok in self.specials


@dataclass(frozen=True)
class MergeRule:
    left: bytes
    right: bytes
    rank: int

    @property
    def result(self) -> bytes:
        return self.left + self.right


def pretokenize(text: str) -> list[bytes]:
    """Split at whitespace boundaries; each whitespace run prefixes the next piece.

    >>> pretokenize("heart rate")
    [b'heart', b' rate']
    """
    return [m.group().encode("utf-8") for m in _PRETOKEN_RE.finditer(text)]


@dataclass(eq=False)
class BaseTokenizer:
    vocab: Vocabulary
    merges: tuple[MergeRule, ...]
    producer_index: dict[bytes, MergeRule] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.merges = tuple(self.merges)
        v = self.vocab
        producer: dict[bytes, MergeRule] = {}
        available = set(BYTE_ALPHABET)
        pair_ranks: dict[tuple[int, int], tuple[int, int]] = {}
        for rank, rule in enumerate(self.merges):
            if rule.rank != rank:
                raise IntegrityError(f"merge {rank} carries rank {rule.rank}")
            where = f"merges[{rank}]"
            for side in (rule.left, rule.right):
                if side not in v:
                    raise IntegrityError(f"{where} references unknown token {token_to_str(side)!r}")
                if side not in available:
                    raise IntegrityError(
                        f"{where} uses {token_to_str(side)!r} before any merge produces it"
                    )
            out = rule.result
            if out not in v:
                raise IntegrityError(f"{where} produces {token_to_str(out)!r} which is not in vocab")
            if out in v.specials:
                raise IntegrityError(f"{where} produces special token {token_to_str(out)!r}")
            if out in producer:
                raise IntegrityError(
                    f"{where} produces {token_to_str(out)!r}, already produced by "
                    f"merges[{producer[out].rank}]"
                )
            producer[out] = rule
            available.add(out)
            pair_ranks[(v.token_to_id[rule.left], v.token_to_id[rule.right])] = (rank, v.token_to_id[out])
        for tok in v.id_to_token:
            if tok not in producer and not v.is_protected(tok):
                raise IntegrityError(f"token {token_to_str(tok)!r} has no producing merge")
        self.producer_index = producer
        self._pair_ranks = pair_ranks
        self._byte_ids = [v.token_to_id[bytes([b])] for b in range(256)]
        self._cache: dict[bytes, tuple[int, ...]] = {}
        if v.specials:
            alts = sorted((re.escape(t.decode("utf-8", "surrogateescape")) for t in v.specials),
                          key=len, reverse=True)
            self._special_re: re.Pattern[str] | None = re.compile("(" + "|".join(alts) + ")")
        else:
            self._special_re = None

    @classmethod
    def from_merges(
        cls, merges: Iterable[tuple[bytes | str, bytes | str]], specials: Iterable[bytes | str] = ()
    ) -> "BaseTokenizer":
        """Byte tokens take ids 0..255, merge results follow in rank order, then specials."""
        tokens = [bytes([b]) for b in range(256)]
        rules = []
        for rank, (left, right) in enumerate(merges):
            left, right = as_token(left), as_token(right)
            rules.append(MergeRule(left, right, rank))
            tokens.append(left + right)
        spec = [as_token(s) for s in specials]
        return cls(Vocabulary(tokens + spec, spec), tuple(rules))

    def __len__(self) -> int:
        return len(self.vocab)

    def __getstate__(self) -> dict:
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state

    # -- encoding ---------------------------------------------------------

    def _encode_chunk(self, chunk: bytes) -> tuple[int, ...]:
        cached = self._cache.get(chunk)
        if cached is not None:
            return cached
        byte_ids = self._byte_ids
        ids = [byte_ids[b] for b in chunk]
        ranks = self._pair_ranks
        while len(ids) > 1:
            best = None
            for pair in zip(ids, ids[1:]):
                hit = ranks.get(pair)
                if hit is not None and (best is None or hit[0] < best[0]):
                    best = hit
                    best_pair = pair
            if best is None:
                break
            a, b = best_pair
            new_id = best[1]
            merged = []
            i, n = 0, len(ids)
            while i < n:
                if i < n - 1 and ids[i] == a and ids[i + 1] == b:
                    merged.append(new_id)
                    i += 2
                else:
                    merged.append(ids[i])
                    i += 1
            ids = merged
        out = tuple(ids)
        if len(self._cache) >= _CACHE_LIMIT:
            self._cache.clear()
        self._cache[chunk] = out
        return out

    def _segments(self, text: str) -> Iterator[tuple[bool, str]]:
        if self._special_re is None:
            yield False, text
            return
        for k, piece in enumerate(self._special_re.split(text)):
            if piece:
                yield bool(k % 2), piece

    def iter_chunks(self, text: str) -> Iterator[tuple[int, ...]]:
        """Token ids of ``text`` one pre-token (or special token) at a time."""
        for is_special, piece in self._segments(text):
            if is_special:
                yield (self.vocab.token_to_id[piece.encode("utf-8")],)
                continue
            for m in _PRETOKEN_RE.finditer(piece):
                yield self._encode_chunk(m.group().encode("utf-8"))

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for chunk in self.iter_chunks(text):
            ids.extend(chunk)
        return ids

    def decode_bytes(self, ids: Iterable[int]) -> bytes:
        ids = list(ids)
        table = self.vocab.id_to_token
        n = len(table)
        try:
            return b"".join([table[i] if i >= 0 else table[n] for i in ids])
        except (IndexError, TypeError):
            bad = next(i for i in ids if not (isinstance(i, int) and 0 <= i < n))
            raise TokenLookupError(f"token id {bad} outside [0, {n})") from None

    def decode(self, ids: Iterable[int], errors: str = "strict") -> str:
        return self.decode_bytes(ids).decode("utf-8", errors=errors)

    def merge_path(self, tok: bytes | str) -> list[tuple[bytes, bytes]]:
        tok = as_token(tok)
        if tok not in self.vocab:
            raise TokenLookupError(f"token {token_to_str(tok)!r} not in vocabulary")
        path: list[tuple[bytes, bytes]] = []
        stack: list[tuple[bytes, bool]] = [(tok, False)]
        producer = self.producer_index
        while stack:
            t, expanded = stack.pop()
            rule = producer.get(t)
            if rule is None:
                continue
            if expanded:
                path.append((rule.left, rule.right))
            else:
                stack.append((t, True))
                stack.append((rule.right, False))
                stack.append((rule.left, False))
        return path

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        v = self.vocab
        return {
            "vocab": {token_to_str(t): i for i, t in enumerate(v.id_to_token)},
            "merges": [[token_to_str(r.left), token_to_str(r.right)] for r in self.merges],
            "special_tokens": sorted(token_to_str(t) for t in v.specials),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(dumps_canonical(self.to_dict()), encoding="utf-8")


def dumps_canonical(obj: object) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=1) + "\n"


def _reject_duplicate_keys(pairs: list[tuple[str, object]]) -> dict:
    out: dict = {}
    for k, val in pairs:
        if k in out:
            raise IntegrityError(f"duplicate key {k!r}")
        out[k] = val
    return out


def read_json(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not valid UTF-8 ({exc.reason} at byte {exc.start})") from exc
    try:
        data = json.loads(text, object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except IntegrityError as exc:
        raise IntegrityError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise FormatError(f"{path}: top level must be a JSON object")
    return data


def tokenizer_from_dict(data: Mapping, source: str = "<tokenizer>") -> BaseTokenizer:
    vocab_raw = data.get("vocab")
    if not isinstance(vocab_raw, dict):
        raise FormatError(f"{source}: field 'vocab' must be an object")
    mapping: dict[bytes, int] = {}
    for key, idx in vocab_raw.items():
        if not isinstance(idx, int) or isinstance(idx, bool):
            raise FormatError(f"{source}: field 'vocab[{key!r}]' must be an integer")
        tok = str_to_token(key)
        if tok in mapping:
            raise IntegrityError(f"{source}: duplicate token string {key!r} in 'vocab'")
        mapping[tok] = idx

    specials_raw = data.get("special_tokens", [])
    if not isinstance(specials_raw, list) or not all(isinstance(s, str) for s in specials_raw):
        raise FormatError(f"{source}: field 'special_tokens' must be an array of strings")

    merges_raw = data.get("merges")
    if not isinstance(merges_raw, list):
        raise FormatError(f"{source}: field 'merges' must be an array")
    rules = []
    for rank, entry in enumerate(merges_raw):
        if not (isinstance(entry, list) and len(entry) == 2 and all(isinstance(s, str) for s in entry)):
            raise FormatError(f"{source}: field 'merges[{rank}]' must be a two-element string array")
        rules.append(MergeRule(str_to_token(entry[0]), str_to_token(entry[1]), rank))
    try:
        vocab = Vocabulary.from_mapping(mapping, (str_to_token(s) for s in specials_raw))
        return BaseTokenizer(vocab, tuple(rules))
    except IntegrityError as exc:
        raise IntegrityError(f"{source}: {exc}") from exc


def load_base_tokenizer(path: str | Path) -> BaseTokenizer:
    return tokenizer_from_dict(read_json(path), str(path))


def bpe_encode(tok: BaseTokenizer, text: str) -> list[int]:
    return tok.encode(text)


def bpe_decode(tok: BaseTokenizer, ids: Iterable[int], errors: str = "strict") -> str:
    """Decode ids back to text.

    Invalid UTF-8 raises ``UnicodeDecodeError`` unless ``errors="replace"``.
    """
    return tok.decode(ids, errors=errors)


def token_merge_path(tok: BaseTokenizer, t: bytes | str) -> list[tuple[bytes, bytes]]:
    """Full recursive derivation of ``t`` down to byte leaves, in application order."""
    return tok.merge_path(t)
