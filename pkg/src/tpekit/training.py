"""Greedy pair-frequency BPE training.

Only used to produce base tokenizers for tests and the synthetic benchmark;
real deployments load a pre-trained tokenizer file instead.
"""

from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from typing import Iterable

from .base_bpe import BaseTokenizer, as_token, pretokenize

DEFAULT_SPECIAL = "<|endoftext|>"


def train_bpe(
    texts: Iterable[str],
    vocab_size: int,
    special_tokens: Iterable[bytes | str] = (),
    min_pair_count: int = 2,
) -> BaseTokenizer:
    """Learn merges until the vocabulary (bytes + merges + specials) reaches ``vocab_size``.

    Pairs are picked by highest count; ties go to the lexicographically
    smallest ``(left, right)`` so training is deterministic.
    """
    specials = [as_token(s) for s in special_tokens]
    budget = vocab_size - 256 - len(specials)

    word_counts = Counter(chunk for text in texts for chunk in pretokenize(text))
    words: list[list[bytes]] = []
    freqs: list[int] = []
    for w, c in sorted(word_counts.items()):
        words.append([bytes([b]) for b in w])
        freqs.append(c)

    pair_counts: dict[tuple[bytes, bytes], int] = defaultdict(int)
    where: dict[tuple[bytes, bytes], set[int]] = defaultdict(set)
    for idx, w in enumerate(words):
        f = freqs[idx]
        for pair in zip(w, w[1:]):
            pair_counts[pair] += f
            where[pair].add(idx)

    heap = [(-c, p) for p, c in pair_counts.items()]
    heapq.heapify(heap)

    merges: list[tuple[bytes, bytes]] = []
    produced: set[bytes] = set()
    banned: set[tuple[bytes, bytes]] = set()
    while len(merges) < budget and heap:
        neg, pair = heapq.heappop(heap)
        count = pair_counts.get(pair, 0)
        if count != -neg:
            continue  # stale heap entry
        if count < min_pair_count:
            break
        a, b = pair
        new = a + b
        if new in produced or new in specials:
            # each token must have exactly one producing rule
            banned.add(pair)
            continue
        merges.append(pair)
        produced.add(new)
        touched: set[tuple[bytes, bytes]] = set()
        for idx in where.pop(pair, ()):
            w = words[idx]
            f = freqs[idx]
            for p in zip(w, w[1:]):
                pair_counts[p] -= f
                touched.add(p)
            merged: list[bytes] = []
            i = 0
            while i < len(w):
                if i < len(w) - 1 and w[i] == a and w[i + 1] == b:
                    merged.append(new)
                    i += 2
                else:
                    merged.append(w[i])
                    i += 1
            words[idx] = merged
            for p in zip(merged, merged[1:]):
                pair_counts[p] += f
                where[p].add(idx)
                touched.add(p)
        pair_counts.pop(pair, None)
        for p in touched:
            c = pair_counts.get(p, 0)
            if c > 0 and p not in banned:
                heapq.heappush(heap, (-c, p))
            else:
                pair_counts.pop(p, None)
    return BaseTokenizer.from_merges(merges, specials)


def synthetic_base_tokenizer(
    vocab_size: int = 16384,
    general_bytes: int = 3_000_000,
    clinical_bytes: int = 2_000_000,
    seed: int = 0,
) -> BaseTokenizer:
    """A stand-in for a pre-trained general tokenizer.

    Trained mostly on general text with some clinical-style text mixed in,
    the way web-scale training data contains some medical writing. The
    clinical sample uses a different seed from the default evaluation corpus.
    """
    from .corpus import synthetic_clinical_corpus, synthetic_general_corpus

    texts = synthetic_general_corpus(general_bytes, seed=seed)
    texts += synthetic_clinical_corpus(clinical_bytes, seed=seed + 99)
    return train_bpe(texts, vocab_size, [DEFAULT_SPECIAL])
