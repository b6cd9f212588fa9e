import json

import pytest

from tpekit.base_bpe import token_to_str
from tpekit.errors import CapacityError, IntegrityError
from tpekit.mining import CandidateTable, MiningConfig, TpeCandidate
from tpekit.surgery import (
    build_merge_path,
    build_tpe_merge_table,
    dependency_aware_replacement,
    dependent_set,
    load_medtpe,
    select_eviction,
    token_frequencies,
)

from conftest import SPIROMETRY_MERGES, toy_tokenizer


def closure_oracle(base, insertion):
    """Recursive walk over producer rules, written independently of dependent_set."""
    out = set()

    def visit(t):
        if t in out:
            return
        out.add(t)
        rule = base.producer_index.get(t)
        if rule is not None:
            visit(rule.left)
            visit(rule.right)

    for cand in insertion:
        prefix = b""
        for part in cand.constituents:
            if prefix in base.vocab:
                visit(prefix)
            visit(part)
            prefix += part
    return out


TOY = [("a", "t"), ("C", "at"), ("h", "e"), ("x", "y")]


class TestMergePath:
    def test_spirometry(self):
        assert build_merge_path([b"Spi", b"rom", b"etry"]).pairs == ((b"Spi", b"rom"), (b"Spirom", b"etry"))

    def test_bigram(self):
        assert build_merge_path([b"heart", b" rate"]).pairs == ((b"heart", b" rate"),)

    def test_fold(self):
        path = build_merge_path([b"a", b"b", b"c", b"d"])
        assert path.pairs == ((b"a", b"b"), (b"ab", b"c"), (b"abc", b"d"))
        assert len(path) == 3

    def test_too_short(self):
        with pytest.raises(ValueError):
            build_merge_path([b"a"])


class TestMergeTable:
    def test_dedup(self):
        table = build_tpe_merge_table([[b"A", b"B"], [b"A", b"B", b"C"]])
        assert table.pairs == ((b"A", b"B"), (b"AB", b"C"))
        assert table.origin == {(b"A", b"B"): 0, (b"AB", b"C"): 1}

    def test_empty(self):
        assert build_tpe_merge_table([]).pairs == ()

    def test_disjoint_in_rank_order(self):
        assert build_tpe_merge_table([[b"x", b"y"], [b"p", b"q"]]).pairs == ((b"x", b"y"), (b"p", b"q"))


class TestDependentSet:
    def test_spirometry_closure(self):
        base = toy_tokenizer(SPIROMETRY_MERGES)
        got = dependent_set([[b"Spi", b"rom", b"etry"]], base)
        assert {b"Spi", b"rom", b"etry", b"Sp", b"i"} <= got
        assert {b"S", b"p", b"r", b"o", b"m", b"e", b"t", b"y", b"et", b"etr", b"ro"} <= got
        assert b"Spirom" not in got

    def test_byte_constituents(self):
        assert dependent_set([[b"a", b"b"]], toy_tokenizer([])) == {b"a", b"b"}

    def test_empty(self):
        assert dependent_set([], toy_tokenizer([])) == set()

    def test_composite_left_that_is_a_token(self):
        base = toy_tokenizer([("a", "b"), ("ab", "c")])
        # prefix "ab" is itself in the vocabulary, so it is protected too
        assert b"ab" in dependent_set([[b"a", b"b", b"c"]], base)

    def test_unknown_constituent(self):
        with pytest.raises(IntegrityError):
            dependent_set([[b"zz", b"a"]], toy_tokenizer([]))

    def test_matches_oracle(self, small_medtpe):
        v = small_medtpe
        assert dependent_set(v.insertion, v.base) == closure_oracle(v.base, v.insertion)


class TestEviction:
    def test_distinct_frequencies(self):
        base = toy_tokenizer(TOY)
        freqs = {b"at": 5, b"Cat": 1, b"he": 3, b"xy": 2}
        assert select_eviction(base, set(), freqs, 2) == [b"Cat", b"xy"]

    def test_all_zero_tie_break(self):
        base = toy_tokenizer([("a", "b"), ("c", "d"), ("ab", "c"), ("b", "a")])
        assert select_eviction(base, set(), {}, 4) == [b"abc", b"ab", b"ba", b"cd"]

    def test_whole_unprotected_set(self):
        base = toy_tokenizer(TOY)
        assert sorted(select_eviction(base, {b"he"}, {}, 3)) == [b"Cat", b"at", b"xy"]

    def test_capacity_error(self):
        base = toy_tokenizer(TOY)
        with pytest.raises(CapacityError) as err:
            select_eviction(base, {b"he"}, {}, 4)
        assert err.value.max_feasible == 3

    def test_specials_and_bytes_never_evicted(self):
        base = toy_tokenizer(TOY, specials=["<|end|>"])
        got = select_eviction(base, set(), {}, 4)
        assert b"<|end|>" not in got and all(len(t) > 1 for t in got)


class TestFrequencies:
    def test_empty_corpus(self):
        assert set(token_frequencies(toy_tokenizer(TOY), []).values()) == {0}

    def test_bytes(self):
        assert token_frequencies(toy_tokenizer([]), ["aa"])[b"a"] == 2


class TestReplacement:
    def test_toy_size_preservation(self):
        base = toy_tokenizer(TOY)
        assert len(base.vocab) == 260
        table = CandidateTable.from_rows([TpeCandidate((b"he", b"at"), 4)])
        v = dependency_aware_replacement(base, table, ["heat heat"], MiningConfig(budget_m=1))
        assert len(v.vocab) == 260
        assert v.eviction == (b"Cat",)
        assert v.decomposition == {b"Cat": (b"C", b"at")}
        assert v.vocab.token(base.vocab[b"Cat"]) == b"heat"

    def test_decomposition_to_bytes_when_child_evicted(self):
        base = toy_tokenizer(TOY)
        table = CandidateTable.from_rows([TpeCandidate((b"h", b"e", b"x"), 4), TpeCandidate((b"x", b"z"), 2)])
        v = dependency_aware_replacement(base, table, [], MiningConfig(n_max=3, budget_m=2), freqs={})
        assert set(v.eviction) == {b"Cat", b"at"}
        assert v.decomposition[b"Cat"] == (b"C", b"a", b"t")

    def test_budget_zero_is_identity(self, small_base, small_corpus):
        v = dependency_aware_replacement(small_base, CandidateTable(), small_corpus[:5], MiningConfig(budget_m=0))
        assert v.m == 0 and v.vocab.id_to_token == small_base.vocab.id_to_token

    def test_budget_larger_than_pool_uses_pool(self):
        base = toy_tokenizer(TOY)
        table = CandidateTable.from_rows([TpeCandidate((b"he", b"at"), 4)])
        v = dependency_aware_replacement(base, table, [], MiningConfig(budget_m=2))
        assert v.m == 1

    def test_capacity_error_propagates(self):
        base = toy_tokenizer(TOY)
        rows = [TpeCandidate((b"h", bytes([c])), 3) for c in b"0123456"]
        with pytest.raises(CapacityError):
            dependency_aware_replacement(base, CandidateTable.from_rows(rows), [], MiningConfig(budget_m=7))

    def test_surface_already_in_vocab_skipped(self):
        base = toy_tokenizer(TOY)
        table = CandidateTable.from_rows([TpeCandidate((b"a", b"t"), 9), TpeCandidate((b"he", b"at"), 2)])
        v = dependency_aware_replacement(base, table, [], MiningConfig(budget_m=1))
        assert [c.surface for c in v.insertion] == [b"heat"]

    def test_invariants_on_real_build(self, small_medtpe):
        v = small_medtpe
        v.check_invariants()
        assert len(v.vocab) == len(v.base.vocab)
        assert v.m == len(v.eviction) == 300
        guarded = closure_oracle(v.base, v.insertion)
        for t in v.eviction:
            assert t not in guarded and len(t) > 1 and t not in v.base.vocab.specials
        for t, parts in v.decomposition.items():
            assert b"".join(parts) == t
            assert all(p in v.vocab and p not in v.evicted_set for p in parts)

    def test_ids_reused_in_rank_order(self, small_medtpe):
        v = small_medtpe
        for cand, old in zip(v.insertion, v.eviction):
            assert v.vocab[cand.surface] == v.base.vocab[old]


class TestFile:
    def test_round_trip(self, tmp_path, small_medtpe):
        p, q = tmp_path / "m.json", tmp_path / "m2.json"
        small_medtpe.save(p)
        loaded = load_medtpe(p)
        loaded.save(q)
        assert p.read_bytes() == q.read_bytes()
        assert loaded.vocab.id_to_token == small_medtpe.vocab.id_to_token

    def test_merges_stored_as_arrays(self, tmp_path, small_medtpe):
        data = small_medtpe.to_dict()
        assert all(isinstance(e, list) and len(e) == 2 for e in data["tpe_merges"])
        assert {"n_max", "budget_m", "corpus_digest"} <= set(data["meta"])

    def test_corrupt_eviction_rejected(self, tmp_path, small_medtpe):
        data = small_medtpe.to_dict()
        protected = data["insertion"][0][0]
        data["eviction"][0] = protected
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(data), encoding="utf-8")
        with pytest.raises(IntegrityError):
            load_medtpe(p)

    def test_missing_merge_pair_rejected(self, tmp_path, small_medtpe):
        data = small_medtpe.to_dict()
        data["tpe_merges"] = data["tpe_merges"][1:]
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(data), encoding="utf-8")
        with pytest.raises(IntegrityError):
            load_medtpe(p)

    def test_determinism(self, small_base, small_corpus):
        from tpekit.evaluation import build_pipeline

        cfg = MiningConfig(n_max=3, budget_m=100)
        a = build_pipeline(small_base, small_corpus[:100], cfg).dumps()
        b = build_pipeline(small_base, small_corpus[:100], cfg).dumps()
        assert a == b


def test_token_to_str_for_report():
    assert token_to_str(b"heat") == "heat"
