from __future__ import annotations

import json
import math
from importlib import resources

import pytest
from hypothesis import given
from hypothesis import strategies as st

from restoresched.errors import ArgumentError
from restoresched.harness import (TEXTURES, FixtureSpec, band_fixture, calibrate_thresholds,
                                  calibration_samples, degraded_corpus, enumerate_trajectories, make_fixture,
                                  oracle_best)
from restoresched.operators import SUBTASK_ORDER, OperatorPool, SubTask, Trajectory, builtin_pool
from restoresched.perception import score_quality
from restoresched.scheduler import greedy_search


@pytest.mark.parametrize("texture", TEXTURES)
def test_fixtures_are_deterministic(texture):
    spec = FixtureSpec(texture, 24, 16, 3, seed=9)
    a, b = make_fixture(spec), make_fixture(spec)
    assert a == b
    assert (a.width, a.height, a.frame_count) == (24, 16, 3)
    with pytest.raises(ArgumentError):
        FixtureSpec("plaid")


def test_enumeration_examples():
    pool = builtin_pool()
    trajs = enumerate_trajectories([SubTask.BNC_SR, SubTask.DERAIN], OperatorPool(
        tuple(pool.get(i) for i in ("temporal_median", "directional_open", "sr_only", "fast_restore",
                                    "heavy_restore"))))
    assert len(trajs) == 6
    assert trajs[0].operator_ids == ("directional_open", "fast_restore")
    assert enumerate_trajectories([], pool) == [Trajectory()]


@given(st.integers(0, 10_000))
def test_enumeration_count_matches_product(seed):
    fx = band_fixture(seed, width=8, height=8, frames=1, max_subtasks=4, max_candidates=4)
    trajs = enumerate_trajectories(fx.subtasks, fx.pool)
    assert len(trajs) == math.prod(len(fx.pool.for_subtask(t)) for t in fx.subtasks)
    assert len(set(trajs)) == len(trajs)
    for t in trajs:
        t.check_pool(fx.pool)
        assert t.subtasks == tuple(sorted(fx.subtasks, key=lambda s: s.rank))


def test_oracle_examples(checker):
    pool = builtin_pool()
    single = [Trajectory(((SubTask.LOW_LIGHT, "adaptive_gamma"),))]
    assert oracle_best(checker, single, pool)[0] == single[0]
    trajs = enumerate_trajectories([SubTask.LOW_LIGHT], pool)
    best, _ = oracle_best(checker, trajs, pool, scorer=lambda v: 1.0)
    assert best == trajs[0]
    with pytest.raises(ArgumentError):
        oracle_best(checker, [], pool)


def test_oracle_dominates_greedy_on_group2():
    base = builtin_pool()
    pool = OperatorPool(tuple(base.get(i) for i in ("temporal_median", "directional_open", "fast_restore",
                                                    "sr_only")))
    subtasks = [SubTask.DERAIN, SubTask.BNC_SR]
    scorer = lambda v: float(score_quality(v))  # noqa: E731
    for _, _, deg, _ in degraded_corpus(6, seed=31, kinds_fn=lambda rng: ("rain", "low_resolution")):
        g = greedy_search(deg, subtasks, pool, scorer=scorer)
        _, best = oracle_best(deg, enumerate_trajectories(subtasks, pool), pool, scorer=scorer)
        assert best >= scorer(g.video) - 1e-12


def test_band_fixture_is_decomposable():
    fx = band_fixture(3, max_subtasks=3, max_candidates=3)
    assert set(fx.subtasks) <= set(SUBTASK_ORDER)
    for t in fx.subtasks:
        ops = fx.pool.for_subtask(t)
        levels = sorted(op.strength["level"] for op in ops)
        assert all(b - a >= 0.1 - 1e-12 for a, b in zip(levels, levels[1:]))


def test_shipped_thresholds_reproduce():
    shipped = json.loads(resources.files("restoresched").joinpath("data/perception.json").read_text())
    assert calibrate_thresholds(calibration_samples()) == shipped["thresholds"]
