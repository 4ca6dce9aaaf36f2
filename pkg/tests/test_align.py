import math

import pytest
from hypothesis import given, strategies as st

from codeswitch.align import (FLOOR, NULL, SentenceAlignment, TranslationTable,
                              corpus_log_likelihood, import_pharaoh, read_pharaoh, train_ibm1,
                              viterbi_align, write_pharaoh)
from codeswitch.corpus import ParallelPair, Sentence


def pair(a, b):
    return ParallelPair(Sentence.parse(a), Sentence.parse(b))


def test_single_pair_forced_mass():
    t = train_ibm1([pair("a", "x")], iterations=1)
    assert t.prob("x", "a") == 1.0


def test_the_das_example():
    t = train_ibm1([pair("the house", "das haus"), pair("the", "das")], iterations=5)
    assert t.prob("das", "the") > t.prob("haus", "the")


def test_initial_rows_uniform():
    pairs = [pair("a b", "x y z")]
    t = train_ibm1(pairs, iterations=1)
    # one pair: every co-occurring word gets the same expected count
    for q in ("a", "b", NULL):
        assert t.rows[q] == pytest.approx({"x": 1 / 3, "y": 1 / 3, "z": 1 / 3}, abs=1e-15)


def test_errors():
    with pytest.raises(ValueError):
        train_ibm1([])
    with pytest.raises(ValueError):
        train_ibm1([pair("a", "b")], iterations=0)


def _ll_oracle(table, pairs):
    total = 0.0
    for p in pairs:
        qs = [NULL] + p.l1.surfaces
        for e in p.l2.surfaces:
            total += math.log(sum(table.prob(e, q) for q in qs) / len(qs))
    return total


def test_log_likelihood_non_decreasing_on_toy(toy_pairs):
    pairs, _ = toy_pairs
    t = train_ibm1(pairs, iterations=10)
    ll = t.log_likelihood
    assert len(ll) == 10
    assert all(b >= a - 1e-9 for a, b in zip(ll, ll[1:]))
    assert corpus_log_likelihood(t, pairs) >= ll[-1] - 1e-9
    assert corpus_log_likelihood(t, pairs) == pytest.approx(_ll_oracle(t, pairs), rel=1e-12)


@pytest.mark.parametrize("bias", [0.0, 2.0])
def test_rows_normalized(toy_pairs, bias):
    pairs, _ = toy_pairs
    for it in (1, 3):
        t = train_ibm1(pairs[:50], iterations=it, diagonal_bias=bias)
        for q, s in t.row_sums().items():
            assert abs(s - 1.0) <= 1e-9, q
        assert all(v >= 0 for r in t.rows.values() for v in r.values())


def test_toy_alignment_quality(toy_pairs):
    pairs, gold = toy_pairs
    t = train_ibm1(pairs, iterations=10)
    hit = total = 0
    for p, g in zip(pairs, gold):
        a = viterbi_align(p, t)
        hit += len(set(a.links) & set(g.links))
        total += len(g.links)
    assert hit / total > 0.9


def test_viterbi_examples():
    ident = TranslationTable({"a": {"a": 1.0}, "b": {"b": 1.0}, NULL: {"a": 0.5, "b": 0.5}})
    a = viterbi_align(pair("a b", "a b"), ident)
    assert a.links == ((0, 0), (1, 1)) and a.u == [0, 1] and a.v == [0, 1]
    t = TranslationTable({"a": {"x": 0.9, "y": 0.1}})
    assert viterbi_align(pair("a", "y x"), t).links == ((0, 1),)
    null_wins = TranslationTable({"a": {"x": 0.1, "y": 0.9}, NULL: {"x": 0.9, "y": 0.1}})
    a = viterbi_align(pair("a", "x"), null_wins)
    assert a.links == () and a.u == [] and a.v == []


def test_viterbi_unknown_words_use_floor():
    t = TranslationTable({"a": {"x": 1.0}})
    assert t.prob("zzz", "a") == FLOOR
    a = viterbi_align(pair("a q", "x w"), t)
    assert (0, 0) in a.links


def test_pharaoh_examples():
    p = pair("a b", "c d")
    a = import_pharaoh("0-0 1-1", p)
    assert (a.u, a.v) == ([0, 1], [0, 1])
    a = import_pharaoh("0-1 1-0", p)
    assert (a.u, a.v) == ([0, 1], [1, 0])
    with pytest.raises(ValueError, match="0-5"):
        import_pharaoh("0-5", p)
    with pytest.raises(ValueError, match="x-1"):
        import_pharaoh("x-1", p)


links = st.integers(1, 6).flatmap(lambda m: st.integers(1, 6).flatmap(
    lambda n: st.tuples(st.just(m), st.just(n),
                        st.sets(st.tuples(st.integers(0, m - 1), st.integers(0, n - 1))))))


@given(links)
def test_pharaoh_roundtrip(case):
    m, n, ls = case
    p = ParallelPair(Sentence.from_surfaces(["w"] * m), Sentence.from_surfaces(["v"] * n))
    a = SentenceAlignment(tuple(ls), m, n)
    assert import_pharaoh(a.to_pharaoh(), p) == a


def test_pharaoh_file_roundtrip(tmp_path, toy_pairs):
    pairs, gold = toy_pairs
    write_pharaoh(tmp_path / "a.txt", gold)
    assert read_pharaoh(tmp_path / "a.txt", pairs) == gold


def test_table_roundtrip(tmp_path, toy_pairs):
    pairs, _ = toy_pairs
    t = train_ibm1(pairs[:30], iterations=2)
    t.save(tmp_path / "t.tsv")
    assert TranslationTable.load(tmp_path / "t.tsv").rows == t.rows


def test_viterbi_invariants(toy_pairs):
    pairs, _ = toy_pairs
    t = train_ibm1(pairs[:40], iterations=3, diagonal_bias=4.0)
    for p in pairs[:40]:
        a = viterbi_align(p, t)
        assert a.u == sorted(set(a.u))
        assert all(0 <= j < len(p.l2) for j in a.v)


def test_diagonal_bias_prefers_diagonal_links():
    pairs = [pair("a b", "x y")]
    plain = train_ibm1(pairs, iterations=3)
    biased = train_ibm1(pairs, iterations=3, diagonal_bias=5.0)
    assert plain.prob("x", "a") == pytest.approx(plain.prob("y", "a"))
    assert biased.prob("x", "a") > biased.prob("y", "a")
    assert biased.prob("y", "b") > biased.prob("x", "b")
