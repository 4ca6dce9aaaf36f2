import numpy as np
import pytest
from hypothesis import given, strategies as st

from codeswitch.align import SentenceAlignment
from codeswitch.corpus import ParallelPair, Sentence
from codeswitch.ecgen import (EcGenConfig, SwitchSpan, check_substitution, generate_ec,
                              generate_ec_corpus, permissible_spans, sample_switches, substitute,
                              violates_ec)
from codeswitch.metrics import count_switch_points

from oracles import all_alignments, brute_force_spans


def align(links, m, n):
    return SentenceAlignment(tuple(links), m, n)


def words(m, n):
    return ParallelPair(Sentence.from_surfaces([f"w{i}" for i in range(m)]),
                        Sentence.from_surfaces(["一二三四五六七八"[j] for j in range(n)]))


def spans_of(a):
    return {(s.l1_start, s.l1_end, s.l2_start, s.l2_end) for s in permissible_spans(a)}


def test_violates_ec_examples():
    mono = align([(0, 0), (1, 1)], 2, 2)
    cross = align([(0, 1), (1, 0)], 2, 2)
    assert not violates_ec(mono, 0, 1)
    assert violates_ec(cross, 0, 1)
    assert violates_ec(cross, 1, 0)
    assert not violates_ec(cross, 0, 0)


def test_monotone_three_tokens_gives_all_intervals():
    a = align([(0, 0), (1, 1), (2, 2)], 3, 3)
    assert spans_of(a) == {(s, e, s, e) for s in range(3) for e in range(s, 3)}


def test_reversed_alignment():
    # links within the reversed block cross each other; only the full span
    # has no crossing between an inside and an outside link
    a = align([(0, 2), (1, 1), (2, 0)], 3, 3)
    assert spans_of(a) == {(0, 2, 0, 2)}
    assert spans_of(a) == brute_force_spans(a.links, 3, 3)


def test_empty_links():
    assert permissible_spans(align([], 2, 2)) == []


def test_oracle_agreement_exhaustive_small():
    n = 0
    for a in all_alignments(cap=1500, max_len=5):
        assert spans_of(a) == brute_force_spans(a.links, a.l1_len, a.l2_len), a
        n += 1
    assert n == 1500


def test_spans_are_valid_and_self_consistent(toy_pairs):
    _, gold = toy_pairs
    for a in gold:
        for sp in permissible_spans(a):
            assert check_substitution(a, [sp])


def test_generate_examples():
    p = ParallelPair(Sentence.parse("a"), Sentence.parse("x"))
    a = align([(0, 0)], 1, 1)
    assert generate_ec(p, a, EcGenConfig(max_switches=0)) == []
    out = generate_ec(p, a, EcGenConfig(max_switches=2, samples_per_pair=1))
    assert [s.surfaces for s in out] == [["x"]]
    assert generate_ec(p, align([], 1, 1), EcGenConfig()) == []


def test_crossing_only_alignment():
    p = words(2, 2)
    a = align([(0, 1), (1, 0)], 2, 2)
    out = generate_ec(p, a, EcGenConfig(max_switches=1, samples_per_pair=5))
    assert [s.surfaces for s in out] == [p.l2.surfaces]


def test_substitute_keeps_outside_order():
    p = words(4, 3)
    s = substitute(p, [SwitchSpan(1, 2, 0, 1)])
    assert s.surfaces == ["w0", "一", "二", "w3"]


def test_check_substitution_rejects_bad_sets():
    a = align([(0, 0), (1, 1), (2, 2)], 3, 3)
    assert not check_substitution(a, [SwitchSpan(0, 1, 1, 2)])
    assert not check_substitution(a, [SwitchSpan(0, 1, 0, 1), SwitchSpan(1, 2, 1, 2)])
    cross = align([(0, 1), (1, 0)], 2, 2)
    assert not check_substitution(cross, [SwitchSpan(0, 0, 1, 1)])


def test_generated_outputs_validate(toy_pairs):
    pairs, gold = toy_pairs
    cfg = EcGenConfig(max_switches=2, samples_per_pair=4, rng_seed=3)
    for p, a in zip(pairs, gold):
        spans = permissible_spans(a)
        for s in generate_ec(p, a, cfg, np.random.default_rng(1)):
            assert s.surfaces != p.l1.surfaces
            assert count_switch_points(s) <= 2 * cfg.max_switches
            assert _recover(p, a, spans, s)


def _recover(pair, a, spans, sent):
    """Find a span set (<= 2 spans) reproducing ``sent`` that validates."""
    for x in spans:
        if substitute(pair, [x]).surfaces == sent.surfaces and check_substitution(a, [x]):
            return True
        for y in spans:
            if x < y and not x.overlaps(y):
                if substitute(pair, [x, y]).surfaces == sent.surfaces \
                        and check_substitution(a, [x, y]):
                    return True
    return False


def test_generation_deterministic(toy_pairs):
    pairs, gold = toy_pairs
    cfg = EcGenConfig(rng_seed=11)
    first = generate_ec_corpus(pairs[:50], gold[:50], cfg)
    assert first == generate_ec_corpus(pairs[:50], gold[:50], cfg)
    other = generate_ec_corpus(pairs[:50], gold[:50], EcGenConfig(rng_seed=12))
    assert first != other


def test_outputs_distinct_and_within_quota(toy_pairs):
    pairs, gold = toy_pairs
    for group in generate_ec_corpus(pairs, gold, EcGenConfig(samples_per_pair=3)):
        assert len(group) <= 3
        assert len({tuple(s.surfaces) for s in group}) == len(group)


def test_config_validation():
    with pytest.raises(ValueError):
        EcGenConfig(max_switches=-1)


perm = st.integers(1, 7).flatmap(lambda n: st.permutations(list(range(n))))


@given(perm, st.integers(0, 2 ** 7 - 1))
def test_oracle_agreement_on_partial_permutations(p, drop):
    links = [(i, j) for i, j in enumerate(p) if not drop >> i & 1]
    a = align(links, len(p), len(p))
    assert spans_of(a) == brute_force_spans(a.links, len(p), len(p))


def test_spans_sharing_an_unaligned_word_overlap():
    left, right = SwitchSpan(0, 1, 0, 0), SwitchSpan(1, 2, 1, 1)
    assert left.overlaps(right) and right.overlaps(left)
    a = SentenceAlignment(((0, 0), (2, 1)), 3, 2)
    assert not check_substitution(a, [left, right])
    p = ParallelPair(Sentence.parse("x y z"), Sentence.parse("一 二"))
    for _ in range(20):
        for sent, spans in sample_switches(p, a, EcGenConfig(max_switches=2, samples_per_pair=4)):
            assert check_substitution(a, spans)
