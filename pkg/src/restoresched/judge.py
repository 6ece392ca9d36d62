"""Pairwise preference between restored candidates and tournament selection."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import ArgumentError
from .videoio import Video

TIE_EPSILON = 0.05

Scorer = Callable[[Video], float]


class Preference(str, enum.Enum):
    A = "A"
    B = "B"
    TIE = "Tie"


def _default_scorer(video: Video) -> float:
    from .perception import score_quality

    return float(score_quality(video))


def prefer(qa: float, qb: float, eps: float = TIE_EPSILON) -> Preference:
    """Decision rule on two scalar scores."""
    if qa - qb > eps:
        return Preference.A
    if qb - qa > eps:
        return Preference.B
    return Preference.TIE


def compare(a: Video, b: Video, scorer: Scorer | None = None, eps: float = TIE_EPSILON) -> Preference:
    scorer = scorer or _default_scorer
    return prefer(float(scorer(a)), float(scorer(b)), eps)


@dataclass(frozen=True)
class TournamentResult:
    winner: int
    comparisons: int
    scores: tuple[float, ...]


def run_tournament(candidates: Sequence[tuple[Video, float]], scorer: Scorer | None = None,
                   eps: float = TIE_EPSILON) -> TournamentResult:
    """Left-fold single elimination; the incumbent defends against each challenger.

    A challenger takes the title on a B verdict, or on a Tie when its runtime
    is strictly smaller. Each candidate is scored once.
    """
    if len(candidates) == 0:
        raise ArgumentError("tournament needs at least one candidate")
    for _, rt in candidates:
        if not (isinstance(rt, (int, float)) and math.isfinite(rt) and rt > 0):
            raise ArgumentError(f"runtime must be a positive real, got {rt!r}")
    scorer = scorer or _default_scorer
    scores = tuple(float(scorer(v)) for v, _ in candidates)
    champ, comparisons = 0, 0
    for i in range(1, len(candidates)):
        verdict = prefer(scores[champ], scores[i], eps)
        comparisons += 1
        if verdict is Preference.B or (verdict is Preference.TIE and candidates[i][1] < candidates[champ][1]):
            champ = i
    return TournamentResult(champ, comparisons, scores)


def tournament(candidates: Sequence[tuple[Video, float]], scorer: Scorer | None = None,
               eps: float = TIE_EPSILON) -> int:
    return run_tournament(candidates, scorer, eps).winner
