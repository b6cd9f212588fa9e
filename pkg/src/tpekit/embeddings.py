"""Initial embeddings for inserted tokens and the frozen/trainable row split."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateDirectionError, FormatError, ShapeError
from .surgery import MedTpeVocabulary

EMB_MAGIC = b"MEMB"
EMB_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class EmbeddingSplit:
    fixed_ids: frozenset[int]
    trainable_ids: frozenset[int]

    def trainable_fraction(self) -> float:
        return len(self.trainable_ids) / (len(self.fixed_ids) + len(self.trainable_ids))


def _as_matrix(E: np.ndarray) -> np.ndarray:
    E = np.asarray(E)
    if E.ndim != 2 or E.shape[1] < 1:
        raise ShapeError(f"embedding matrix must be 2-D with dim >= 1, got shape {E.shape}")
    return E


def mean_vocab_norm(E: np.ndarray) -> float:
    """Unweighted mean of row L2 norms over the original vocabulary."""
    E = _as_matrix(E)
    if E.shape[0] == 0:
        raise ValueError("mean norm of an empty embedding matrix is undefined")
    return float(np.linalg.norm(E.astype(np.float64), axis=1).mean())


def init_tpe_embedding(
    E: np.ndarray,
    constituents: Sequence[int],
    alpha: float = 0.5,
    mu: float | None = None,
    fallback_first: bool = False,
) -> np.ndarray:
    """Mean of the constituent rows rescaled to norm ``alpha * mu``.

    If the mean is the zero vector this raises DegenerateDirectionError, unless
    ``fallback_first`` is set, in which case the first constituent's direction
    is used instead.
    """
    E = _as_matrix(E)
    if len(constituents) == 0:
        raise ValueError("constituents must be non-empty")
    if mu is None:
        mu = mean_vocab_norm(E)
    rows = E[np.asarray(constituents)].astype(np.float64)
    direction = rows.mean(axis=0)
    norm = np.linalg.norm(direction)
    if not norm > 0:
        if not fallback_first:
            raise DegenerateDirectionError(
                f"constituent embeddings {list(constituents)} average to the zero vector"
            )
        direction = rows[0]
        norm = np.linalg.norm(direction)
        if not norm > 0:
            raise DegenerateDirectionError(f"first constituent {constituents[0]} has a zero embedding")
    return alpha * mu * direction / norm


def build_split(v: MedTpeVocabulary) -> EmbeddingSplit:
    trainable = frozenset(v.insertion_ids)
    fixed = frozenset(range(len(v.vocab))) - trainable
    return EmbeddingSplit(fixed, trainable)


def apply_surgery_to_matrix(
    E: np.ndarray, v: MedTpeVocabulary, alpha: float = 0.5, fallback_first: bool = False
) -> np.ndarray:
    """Copy of ``E`` with each inserted token's row initialized from its constituents.

    Rows outside the insertion ids are returned bit-identical. ``mu`` is
    computed on the input matrix, i.e. over the original vocabulary.
    """
    E = _as_matrix(E)
    if E.shape[0] != len(v.base.vocab):
        raise ShapeError(f"embedding matrix has {E.shape[0]} rows, vocabulary has {len(v.base.vocab)}")
    out = E.copy()
    if not v.insertion:
        return out
    mu = mean_vocab_norm(E)
    base_ids = v.base.vocab.token_to_id
    for cand, tid in zip(v.insertion, v.insertion_ids):
        parts = [base_ids[c] for c in cand.constituents]
        out[tid] = init_tpe_embedding(E, parts, alpha, mu, fallback_first)
    return out


# -- file formats -------------------------------------------------------------

def write_embeddings(E: np.ndarray, path: str | Path) -> None:
    E = _as_matrix(E)
    data = np.ascontiguousarray(E, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EMB_MAGIC, EMB_VERSION, E.shape[0], E.shape[1]))
        fh.write(data.tobytes())


def read_embeddings(path: str | Path) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror or exc}") from exc
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, rows, dim = _HEADER.unpack_from(raw)
    if magic != EMB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != EMB_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * rows * dim
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {rows}x{dim}, found {len(raw)}")
    E = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(rows, dim).astype(np.float32)
    if not np.isfinite(E).all():
        raise FormatError(f"{path}: non-finite entries")
    return E


def write_text_embeddings(E: np.ndarray, path: str | Path) -> None:
    np.savetxt(path, _as_matrix(E), fmt="%.9g")


def write_manifest(split: EmbeddingSplit, path: str | Path) -> None:
    Path(path).write_text("".join(f"{i}\n" for i in sorted(split.trainable_ids)), encoding="utf-8")


def read_manifest(path: str | Path) -> list[int]:
    try:
        return [int(line) for line in Path(path).read_text(encoding="utf-8").split()]
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
