"""Rouge-L scoring and the pruned reference-index equivalence oracle."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from errloop.rouge import (
    ReferenceIndex,
    lcs_length,
    max_rouge_brute_force,
    rouge_l,
    tokenize,
)


def oracle_lcs(a, b):
    """Plain full-table DP, kept independent of the production rolling-row."""
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def oracle_f1(a, b):
    if not a or not b:
        return 0.0
    lcs = oracle_lcs(a, b)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(a), lcs / len(b)
    return 2 * p * r / (p + r)


def test_tokenize_rules():
    assert tokenize("The cat, the CAT!") == ("the", "cat", "the", "cat")
    assert tokenize("  a  b ") == ("a", "b")
    assert tokenize("--- ...") == ()


def test_hand_case_six_sevenths():
    # LCS("a c d", "a b c d") = 3; P = 1, R = 3/4, F1 = 6/7
    score = rouge_l(("a", "c", "d"), ("a", "b", "c", "d"))
    assert score == pytest.approx(6 / 7, abs=1e-12)


def test_identical_sequences_score_one():
    seq = tokenize("how many apples does maria have left")
    assert rouge_l(seq, seq) == 1.0


def test_disjoint_vocabulary_scores_zero():
    assert rouge_l(("a", "b"), ("c", "d")) == 0.0


def test_empty_sides_score_zero():
    assert rouge_l((), ("a",)) == 0.0
    assert rouge_l(("a",), ()) == 0.0


def test_randomized_pairs_match_oracle():
    rng = random.Random(20240)
    vocabulary = [f"w{i}" for i in range(30)]
    for _ in range(500):
        a = tuple(rng.choices(vocabulary, k=rng.randint(1, 60)))
        b = tuple(rng.choices(vocabulary, k=rng.randint(1, 60)))
        assert rouge_l(a, b) == pytest.approx(oracle_f1(a, b), abs=1e-12)


@given(
    st.lists(st.sampled_from("abcdef"), max_size=40),
    st.lists(st.sampled_from("abcdef"), max_size=40),
)
@settings(max_examples=200, deadline=None)
def test_lcs_matches_oracle(a, b):
    assert lcs_length(a, b) == oracle_lcs(a, b)


@given(
    st.lists(st.sampled_from("abcdef"), min_size=1, max_size=30),
    st.lists(st.sampled_from("abcdef"), min_size=1, max_size=30),
)
@settings(max_examples=200, deadline=None)
def test_f1_symmetric_and_bounded(a, b):
    forward = rouge_l(a, b)
    backward = rouge_l(b, a)
    assert forward == pytest.approx(backward, abs=1e-12)
    assert 0.0 <= forward <= 1.0


def _random_corpus(rng, n, vocab_size=40, max_len=25):
    vocabulary = [f"tok{i}" for i in range(vocab_size)]
    return [tuple(rng.choices(vocabulary, k=rng.randint(1, max_len))) for _ in range(n)]


@pytest.mark.parametrize("threshold", [0.3, 0.5, 0.7, 0.9])
def test_index_decision_matches_brute_force(threshold):
    rng = random.Random(99)
    refs = _random_corpus(rng, 120)
    candidates = _random_corpus(rng, 200)
    index = ReferenceIndex(refs)
    for cand in candidates:
        brute = max_rouge_brute_force(cand, refs)
        score, exceeded = index.max_score(cand, threshold)
        assert exceeded == (brute > threshold)
        if not exceeded:
            # recorded max never exceeds the true max and stays under threshold
            assert score <= brute + 1e-12
            assert score <= threshold + 1e-12
        else:
            # above the threshold the recorded score is the exact max
            assert score == pytest.approx(brute, abs=1e-12)


def test_index_exact_identity_hit():
    refs = [tokenize("what is two plus two in total")]
    index = ReferenceIndex(refs)
    score, exceeded = index.max_score(refs[0], 0.7)
    assert exceeded and score == 1.0


def test_index_empty_and_disjoint():
    index = ReferenceIndex([tokenize("alpha beta gamma")])
    assert index.max_score((), 0.7) == (0.0, False)
    assert index.max_score(tokenize("delta epsilon"), 0.7) == (0.0, False)


def test_index_grows_incrementally():
    index = ReferenceIndex()
    cand = tokenize("one two three")
    assert index.max_score(cand, 0.7) == (0.0, False)
    index.add_text("one two three")
    score, exceeded = index.max_score(cand, 0.7)
    assert exceeded and score == 1.0
