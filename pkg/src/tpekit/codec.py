"""Layered encoder/decoder over an extended vocabulary.

Encoding runs three passes: base BPE, replacement of evicted tokens by their
decompositions, then a greedy left-to-right scan that emits the longest span
whose merge path lies in the composite merge table and whose surface is an
inserted token.

The scan is driven by a small automaton compiled from the merge table. Each
state is a surface string. A pair ``(left, right)`` becomes the edge
``state(left) --id(right)--> state(left + right)``, and lookahead stops when a
state has no edge for the next token. States are keyed by string rather than
by id sequence so that the automaton accepts exactly the spans whose pairwise
merge path is in the table; :func:`reference_encode` checks that condition
literally.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import FormatError, TokenLookupError
from .surgery import MedTpeVocabulary

FRAME_MAGIC = b"MTPE"
FRAME_VERSION = 1


@dataclass(frozen=True)
class EncodedSequence:
    ids: tuple[int, ...]
    surface_len: int

    @property
    def token_len(self) -> int:
        return len(self.ids)

    def __len__(self) -> int:
        return len(self.ids)


class _Compiled:
    __slots__ = ("fallback", "start", "trans", "emit", "max_depth")

    def __init__(self, v: MedTpeVocabulary):
        vocab = v.vocab
        base_ids = v.base.vocab.token_to_id
        self.fallback: dict[int, tuple[int, ...]] = {
            base_ids[t]: tuple(vocab.token_to_id[p] for p in parts)
            for t, parts in v.decomposition.items()
        }
        state_of: dict[bytes, int] = {}
        trans: list[dict[int, int]] = []

        def state(s: bytes) -> int:
            k = state_of.get(s)
            if k is None:
                k = state_of[s] = len(trans)
                trans.append({})
            return k

        for left, right in v.tpe_merges.pairs:
            src = state(left)
            trans[src][vocab.token_to_id[right]] = state(left + right)

        emit = [-1] * len(trans)
        for cand, tid in zip(v.insertion, v.insertion_ids):
            k = state_of.get(cand.surface)
            if k is not None:
                emit[k] = tid
        inserted = set(v.insertion_ids)
        self.start: dict[int, int] = {}
        for s, k in state_of.items():
            tid = vocab.token_to_id.get(s)
            if tid is not None and tid not in inserted and trans[k]:
                self.start[tid] = k
        self.trans = trans
        self.emit = emit
        self.max_depth = _longest_chain(trans, self.start.values())


def _longest_chain(trans: list[dict[int, int]], roots: Iterable[int]) -> int:
    depth: dict[int, int] = {}

    def walk(k: int) -> int:
        d = depth.get(k)
        if d is None:
            d = 1 + max((walk(n) for n in trans[k].values()), default=0)
            depth[k] = d
        return d

    return max((walk(r) for r in roots), default=1)


def _compiled(v: MedTpeVocabulary) -> _Compiled:
    c = v.__dict__.get("_codec")
    if c is None:
        c = v.__dict__["_codec"] = _Compiled(v)
    return c


def intermediate_ids(v: MedTpeVocabulary, text: str) -> list[int]:
    """Base encoding with evicted tokens replaced by their decompositions."""
    ids = v.base.encode(text)
    fb = _compiled(v).fallback
    if not fb or fb.keys().isdisjoint(ids):
        return ids
    out: list[int] = []
    for t in ids:
        parts = fb.get(t)
        if parts is None:
            out.append(t)
        else:
            out.extend(parts)
    return out


def _scan(c: _Compiled, seq: Sequence[int], out: list[int], final: bool) -> int:
    """Greedy longest match over ``seq``, appending to ``out``.

    Returns the position where scanning stopped. Unless ``final`` is set, it
    stops once fewer than ``max_depth`` tokens remain, because a match from
    there might extend into input not seen yet.
    """
    start, trans, emit = c.start, c.trans, c.emit
    append = out.append
    n = len(seq)
    stop = n if final else n - c.max_depth + 1
    i = 0
    while i < stop:
        t = seq[i]
        k = start.get(t)
        if k is None:
            append(t)
            i += 1
            continue
        best, best_end = t, i
        j = i + 1
        while j < n:
            k = trans[k].get(seq[j])
            if k is None:
                break
            if emit[k] >= 0:
                best, best_end = emit[k], j
            j += 1
        append(best)
        i = best_end + 1
    return i


def merge_layer(v: MedTpeVocabulary, seq: Sequence[int]) -> list[int]:
    """Greedy longest-match over an intermediate id sequence."""
    out: list[int] = []
    _scan(_compiled(v), seq, out, final=True)
    return out


_BLOCK = 1 << 14


def _encode_stream(v: MedTpeVocabulary, text: str) -> list[int]:
    # Feeds the scan in blocks so no full-length intermediate list is built;
    # the carried tail makes the result identical to a single scan.
    c = _compiled(v)
    fb = c.fallback
    out: list[int] = []
    buf: list[int] = []
    for chunk in v.base.iter_chunks(text):
        if fb and not fb.keys().isdisjoint(chunk):
            for t in chunk:
                buf.extend(fb.get(t, (t,)))
        else:
            buf.extend(chunk)
        if len(buf) >= _BLOCK:
            done = _scan(c, buf, out, final=False)
            del buf[:done]
    _scan(c, buf, out, final=True)
    return out


def medtpe_encode(v: MedTpeVocabulary, text: str) -> EncodedSequence:
    return EncodedSequence(tuple(_encode_stream(v, text)), len(text.encode("utf-8")))


def medtpe_decode(v: MedTpeVocabulary, ids: Iterable[int], errors: str = "strict") -> str:
    table = v.vocab.id_to_token
    n = len(table)
    ids = list(ids)
    for i in ids:
        if not (isinstance(i, int) and 0 <= i < n):
            raise TokenLookupError(f"token id {i} outside [0, {n})")
    return b"".join([table[i] for i in ids]).decode("utf-8", errors=errors)


def reference_encode(v: MedTpeVocabulary, text: str) -> EncodedSequence:
    """Naive scan used as a test oracle; no automaton, just set lookups."""
    surfaces = {c.surface: tid for c, tid in zip(v.insertion, v.insertion_ids)}
    pairs = set(v.tpe_merges.pairs)
    longest = max((len(s) for s in surfaces), default=0)
    table = v.vocab.id_to_token
    seq = intermediate_ids(v, text)
    toks = [table[t] for t in seq]
    out: list[int] = []
    i, n = 0, len(seq)
    while i < n:
        # widest window whose byte length can still match an inserted surface
        end, size = i, len(toks[i])
        while end + 1 < n and size + len(toks[end + 1]) <= longest:
            end += 1
            size += len(toks[end])
        chosen = None
        for k in range(end, i, -1):
            surface = b"".join(toks[i:k + 1])
            if surface not in surfaces:
                continue
            if all((b"".join(toks[i:m + 1]), toks[m + 1]) in pairs for m in range(i, k)):
                chosen = k
                break
        if chosen is None:
            out.append(seq[i])
            i += 1
        else:
            out.append(surfaces[b"".join(toks[i:chosen + 1])])
            i = chosen + 1
    return EncodedSequence(tuple(out), len(text.encode("utf-8")))


# -- wire formats -------------------------------------------------------------

def pack_frame(ids: Sequence[int]) -> bytes:
    return FRAME_MAGIC + bytes([FRAME_VERSION]) + struct.pack(f"<I{len(ids)}I", len(ids), *ids)


def unpack_frame(data: bytes) -> list[int]:
    if len(data) < 9 or data[:4] != FRAME_MAGIC:
        raise FormatError("not an MTPE frame (bad magic)")
    if data[4] != FRAME_VERSION:
        raise FormatError(f"unsupported MTPE frame version {data[4]}")
    (count,) = struct.unpack_from("<I", data, 5)
    if len(data) != 9 + 4 * count:
        raise FormatError(f"MTPE frame declares {count} ids but carries {(len(data) - 9) / 4:g}")
    return list(struct.unpack_from(f"<{count}I", data, 9))


def format_ids(ids: Iterable[int]) -> str:
    return " ".join(map(str, ids)) + "\n"


def parse_ids(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split()]
    except ValueError as exc:
        raise FormatError(f"id list: {exc}") from exc
