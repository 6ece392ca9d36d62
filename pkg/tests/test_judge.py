from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from restoresched.degrade import DegradationKind, DegradationStep, apply_step
from restoresched.errors import ArgumentError
from restoresched.judge import Preference, compare, prefer, run_tournament, tournament

scores = st.floats(1.0, 5.0)


def test_compare_examples(checker):
    noisy = apply_step(checker, DegradationStep(DegradationKind.NOISE, "gaussian", {"sigma": 50.0}, 0))
    assert compare(checker, checker) is Preference.TIE
    assert compare(checker, noisy) is Preference.A
    assert compare(noisy, checker) is Preference.B
    assert tournament([(noisy, 1.0), (checker, 1.0), (noisy, 1.0)]) == 1


def test_tournament_examples(checker):
    res = run_tournament([(checker, 4.0)])
    assert (res.winner, res.comparisons) == (0, 0)
    assert tournament([(checker, 5.0), (checker, 2.0), (checker, 3.0)]) == 1


def test_tournament_errors(checker):
    with pytest.raises(ArgumentError):
        tournament([])
    with pytest.raises(ArgumentError):
        tournament([(checker, 0.0)])


@given(scores, scores)
def test_prefer_antisymmetric(a, b):
    flip = {Preference.A: Preference.B, Preference.B: Preference.A, Preference.TIE: Preference.TIE}
    assert prefer(b, a) is flip[prefer(a, b)]


@given(st.lists(st.tuples(scores, st.floats(0.1, 20)), min_size=1, max_size=8))
def test_tournament_counts_and_winner_quality(items):
    # scores stand in for videos: the scorer reads them back out
    res = run_tournament([(s, rt) for s, rt in items], scorer=float)
    assert res.comparisons == len(items) - 1
    best = max(s for s, _ in items)
    # a winner can lose to the best by at most one tie band per step
    assert items[res.winner][0] >= best - 0.05 * len(items)
