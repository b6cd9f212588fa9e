"""Compress domain text by swapping rarely used base tokens for frequent multi-token patterns.

The extended vocabulary keeps the base size: every inserted pattern takes over
the id of an evicted token, and evicted tokens stay encodable through their
decomposition into preserved tokens.
"""

from .base_bpe import BaseTokenizer, Vocabulary, bpe_decode, bpe_encode, load_base_tokenizer, token_merge_path
from .codec import EncodedSequence, medtpe_decode, medtpe_encode, reference_encode
from .embeddings import EmbeddingSplit, apply_surgery_to_matrix, build_split, init_tpe_embedding, mean_vocab_norm
from .errors import (
    CapacityError,
    ConfigError,
    DegenerateDirectionError,
    FormatError,
    IntegrityError,
    ShapeError,
    TokenLookupError,
    TpeError,
)
from .evaluation import CompressionReport, SweepResult, bench, budget_sweep, build_pipeline, compression_report, token_stats
from .mining import CandidateTable, MiningConfig, TpeCandidate, count_ngrams, score_candidates, select_insertion_set
from .surgery import (
    MedTpeVocabulary,
    build_merge_path,
    build_tpe_merge_table,
    dependency_aware_replacement,
    dependent_set,
    load_medtpe,
)

__version__ = "0.1.0"

__all__ = [
    "BaseTokenizer", "Vocabulary", "bpe_encode", "bpe_decode", "load_base_tokenizer", "token_merge_path",
    "EncodedSequence", "medtpe_encode", "medtpe_decode", "reference_encode",
    "EmbeddingSplit", "apply_surgery_to_matrix", "build_split", "init_tpe_embedding", "mean_vocab_norm",
    "TpeError", "ConfigError", "FormatError", "IntegrityError", "CapacityError", "TokenLookupError",
    "DegenerateDirectionError", "ShapeError",
    "CompressionReport", "SweepResult", "bench", "budget_sweep", "build_pipeline", "compression_report",
    "token_stats",
    "CandidateTable", "MiningConfig", "TpeCandidate", "count_ngrams", "score_candidates", "select_insertion_set",
    "MedTpeVocabulary", "build_merge_path", "build_tpe_merge_table", "dependency_aware_replacement",
    "dependent_set", "load_medtpe",
]
