from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tpekit.errors import ConfigError, FormatError
from tpekit.mining import (
    CandidateTable,
    MiningConfig,
    TpeCandidate,
    count_ngrams,
    read_candidate_tsv,
    score_candidates,
    select_insertion_set,
    write_candidate_tsv,
)
from tpekit.training import train_bpe

from conftest import toy_tokenizer


def naive_counts(tok, docs, n_max, min_freq):
    """Nested-loop oracle: every window of every document, specials excluded."""
    specials = tok.vocab.specials
    counts = Counter()
    for doc in docs:
        toks = [tok.vocab.token(i) for i in tok.encode(doc)]
        for i in range(len(toks)):
            for n in range(2, n_max + 1):
                window = toks[i:i + n]
                if len(window) == n and not any(t in specials for t in window):
                    counts[tuple(window)] += 1
    return {k: c for k, c in counts.items() if c >= min_freq}


def as_dict(table):
    return {r.constituents: r.freq for r in table}


HEART = toy_tokenizer([
    ("h", "e"), ("he", "a"), ("hea", "r"), ("hear", "t"), (" ", "heart"),
    ("r", "a"), ("ra", "t"), ("rat", "e"), (" ", "rate"),
])


class TestConfig:
    @pytest.mark.parametrize("kw", [{"n_max": 1}, {"n_max": 9}, {"budget_m": -1}, {"min_freq": 0}])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            MiningConfig(**kw)

    def test_defaults(self):
        cfg = MiningConfig()
        assert (cfg.n_max, cfg.budget_m, cfg.min_freq) == (2, 5000, 2)


class TestCounting:
    def test_heart_rate_example(self):
        table = count_ngrams(HEART, ["heart rate heart rate heart rate"], MiningConfig(n_max=2, min_freq=1))
        got = as_dict(table)
        assert got[(b" heart", b" rate")] == 2
        assert got[(b"heart", b" rate")] == 1
        assert got[(b" rate", b" heart")] == 2

    def test_single_token_document(self):
        assert len(count_ngrams(HEART, ["heart"], MiningConfig(min_freq=1))) == 0

    def test_empty_corpus(self):
        assert len(count_ngrams(HEART, [], MiningConfig())) == 0

    def test_overlapping_runs(self):
        table = count_ngrams(toy_tokenizer([]), ["aaa"], MiningConfig(n_max=3, min_freq=1))
        assert as_dict(table) == {(b"a", b"a"): 2, (b"a", b"a", b"a"): 1}

    def test_specials_are_barriers(self):
        tok = toy_tokenizer([], specials=["<|s|>"])
        got = as_dict(count_ngrams(tok, ["ab<|s|>cd"], MiningConfig(min_freq=1)))
        assert got == {(b"a", b"b"): 1, (b"c", b"d"): 1}

    def test_matches_naive_oracle(self, small_base, small_corpus):
        docs = small_corpus[:150]
        got = as_dict(count_ngrams(small_base, docs, MiningConfig(n_max=4, min_freq=2)))
        assert got == naive_counts(small_base, docs, 4, 2)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.lists(st.sampled_from(["a", "b", " ", "c", "<s>"]), max_size=20).map("".join), max_size=6),
        st.integers(2, 5),
    )
    def test_matches_naive_oracle_fuzz(self, docs, n_max):
        tok = toy_tokenizer([("a", "b"), ("ab", "c"), (" ", "a")], specials=["<s>"])
        got = as_dict(count_ngrams(tok, docs, MiningConfig(n_max=n_max, min_freq=1)))
        assert got == naive_counts(tok, docs, n_max, 1)

    def test_parallel_equals_serial(self, small_base, small_corpus):
        docs = small_corpus[:200]
        cfg = MiningConfig(n_max=3)
        serial = count_ngrams(small_base, docs, cfg)
        parallel = count_ngrams(small_base, docs, cfg, workers=2, chunk_docs=17)
        assert serial == parallel

    def test_boundary_law(self, small_base, small_corpus):
        a, b = small_corpus[0], small_corpus[1]
        cfg = MiningConfig(n_max=3, min_freq=1)
        split = as_dict(count_ngrams(small_base, [a, b], cfg))
        separate = Counter(as_dict(count_ngrams(small_base, [a], cfg)))
        separate.update(as_dict(count_ngrams(small_base, [b], cfg)))
        assert split == dict(separate)

    def test_monotone_pruning(self, small_base, small_corpus):
        low = count_ngrams(small_base, small_corpus[:100], MiningConfig(n_max=3, min_freq=2))
        high = count_ngrams(small_base, small_corpus[:100], MiningConfig(n_max=3, min_freq=5))
        assert set(as_dict(high)) <= set(as_dict(low))
        assert len(high) <= len(low)


class TestScoring:
    def test_score_law(self):
        assert TpeCandidate((b"a", b"b", b"c"), 10).score == 30

    def test_zero_freq_dropped(self):
        table = score_candidates([TpeCandidate((b"a", b"b"), 0), TpeCandidate((b"c", b"d"), 1)])
        assert [r.surface for r in table] == [b"cd"]

    def test_tie_broken_by_freq(self):
        tri = TpeCandidate((b"x", b"y", b"z"), 4)
        bi = TpeCandidate((b"p", b"q"), 6)
        table = score_candidates([tri, bi])
        assert [r.score for r in table] == [12, 12]
        assert table[0].constituents == (b"p", b"q")
        assert select_insertion_set(table, 1) == [bi]

    def test_then_surface_then_split(self):
        rows = [
            TpeCandidate((b"b", b"a"), 3),
            TpeCandidate((b"a", b"b"), 3),
            TpeCandidate((b"", b"ab"), 3),
        ]
        got = [r.constituents for r in CandidateTable.from_rows(rows)]
        assert got == [(b"", b"ab"), (b"a", b"b"), (b"b", b"a")]

    def test_order_is_total(self, small_base, small_corpus):
        table = count_ngrams(small_base, small_corpus[:80], MiningConfig(n_max=4))
        keys = [r.sort_key() for r in table]
        assert keys == sorted(keys)
        assert len(set(keys)) == len(keys)


class TestSelection:
    def test_m_larger_than_table(self):
        table = CandidateTable.from_rows([TpeCandidate((b"a", b"b"), 3)])
        assert len(select_insertion_set(table, 10)) == 1

    def test_duplicate_surface_keeps_higher_ranked_split(self):
        abc1 = TpeCandidate((b"AB", b"C"), 5)
        abc2 = TpeCandidate((b"A", b"BC"), 4)
        picked = select_insertion_set(CandidateTable.from_rows([abc2, abc1]), 5)
        assert picked == [abc1]

    def test_exclusion(self):
        table = CandidateTable.from_rows([TpeCandidate((b"a", b"b"), 9), TpeCandidate((b"c", b"d"), 1)])
        assert [r.surface for r in select_insertion_set(table, 2, exclude={b"ab"})] == [b"cd"]

    def test_negative_m(self):
        with pytest.raises(ConfigError):
            select_insertion_set(CandidateTable(), -1)


class TestTsv:
    def test_round_trip(self, tmp_path, small_base, small_corpus):
        table = count_ngrams(small_base, small_corpus[:50], MiningConfig(n_max=3))
        p = tmp_path / "c.tsv"
        write_candidate_tsv(table, p)
        assert read_candidate_tsv(p) == table

    def test_awkward_bytes(self, tmp_path):
        rows = [TpeCandidate((b"\t", b"\xff", b" x"), 2), TpeCandidate((b"<0x41>", b"\n"), 7)]
        p = tmp_path / "c.tsv"
        write_candidate_tsv(CandidateTable.from_rows(rows), p)
        assert list(read_candidate_tsv(p)) == list(CandidateTable.from_rows(rows))

    def test_inconsistent_row(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("surface\tN\tfreq\tscore\tconstituents\nab\t2\t3\t7\ta\x1fb\n", encoding="utf-8")
        with pytest.raises(FormatError, match="line 2"):
            read_candidate_tsv(p)


def test_trained_tokenizer_mines_cross_word_pairs():
    tok = train_bpe(["heart rate"] * 20, 270)
    table = count_ngrams(tok, ["heart rate heart rate"], MiningConfig(n_max=2, min_freq=1))
    assert any(b" " in r.surface[1:] for r in table)
