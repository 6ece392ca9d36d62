"""Reward functions for score, degradation and comparison outputs, and the
group-relative advantage and clipped-objective arithmetic.

Only the arithmetic lives here; there is no policy or training loop.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .degrade import DegradationLabel
from .errors import ArgumentError

DEGENERATE_STD = 1e-12


@dataclass(frozen=True)
class RewardConfig:
    delta: float = 1e-6
    tau_abs: float = 0.2
    w_cont: float = 0.6
    w_bin: float = 0.4

    def __post_init__(self):
        if self.delta <= 0 or self.tau_abs <= 0:
            raise ArgumentError("delta and tau_abs must be positive")
        if abs(self.w_cont + self.w_bin - 1.0) > 1e-12:
            raise ArgumentError("w_cont + w_bin must equal 1")


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    clip_delta: float = 0.2
    kl_beta: float = 0.001

    def __post_init__(self):
        if self.group_size < 2:
            raise ArgumentError("group_size must be at least 2")
        if not 0 < self.clip_delta < 1:
            raise ArgumentError("clip_delta must lie in (0, 1)")


DEFAULT_REWARDS = RewardConfig()


def reward_cont(s_pred: float, s_gt: float, cfg: RewardConfig = DEFAULT_REWARDS) -> float:
    rel = abs(s_pred - s_gt) / (abs(s_gt) + cfg.delta)
    return 1.0 - min(max(rel, 0.0), 1.0)


def reward_bin(s_pred: float, s_gt: float, cfg: RewardConfig = DEFAULT_REWARDS) -> float:
    return 1.0 if abs(s_pred - s_gt) < cfg.tau_abs else 0.0


def reward_score(s_pred: float, s_gt: float, cfg: RewardConfig = DEFAULT_REWARDS) -> float:
    return cfg.w_cont * reward_cont(s_pred, s_gt, cfg) + cfg.w_bin * reward_bin(s_pred, s_gt, cfg)


def reward_deg(d_pred: DegradationLabel, d_gt: DegradationLabel) -> float:
    return 1.0 if d_pred.bits() == d_gt.bits() else 0.0


def reward_cmp(selected: int, preferred: int, n_candidates: int | None = None) -> float:
    for name, idx in (("selected", selected), ("preferred", preferred)):
        if idx < 0 or (n_candidates is not None and idx >= n_candidates):
            raise ArgumentError(f"{name} index {idx} out of range")
    return 1.0 if selected == preferred else 0.0


def grpo_advantages(rewards: Sequence[float]) -> np.ndarray:
    """(r - mean) / std with the population std; all-equal groups give zeros."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ArgumentError("need a 1-D group of at least two rewards")
    if not np.all(np.isfinite(r)):
        raise ArgumentError("rewards must be finite")
    centred = r - r.mean()
    std = float(np.sqrt(np.mean(centred ** 2)))
    if std <= DEGENERATE_STD * max(1.0, float(np.abs(r).max())):
        return np.zeros_like(r)
    return centred / std


def grpo_clipped_term(ratio: float, advantage: float, clip_delta: float) -> float:
    if not ratio > 0:
        raise ArgumentError("ratio must be positive")
    if not 0 < clip_delta < 1:
        raise ArgumentError("clip_delta must lie in (0, 1)")
    clipped = min(max(ratio, 1.0 - clip_delta), 1.0 + clip_delta)
    return float(min(ratio * advantage, clipped * advantage))
