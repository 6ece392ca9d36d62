"""Fixtures and brute-force oracles used by tests, calibration and the bench.

Nothing here is on the scheduling hot path. The oracles deliberately avoid
the code paths they check: retrieval is re-done with plain Python loops,
trajectories are enumerated with ``itertools.product``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .degrade import DegradationKind, DegradationRecipe, apply_recipe, sample_recipe
from .errors import ArgumentError
from .videoio import Video

TEXTURES = ("checker", "gradient", "noise-texture")

# Degradation groups used by the end-to-end checks.
GROUPS: dict[str, tuple[str, ...]] = {
    "group1": ("dark", "rain", "bnc", "low_resolution"),
    "group2": ("rain", "low_resolution"),
    "group3": ("dark", "bnc", "low_frame"),
}


@dataclass(frozen=True)
class FixtureSpec:
    texture: str = "checker"
    width: int = 32
    height: int = 32
    frames: int = 8
    seed: int = 0
    frame_rate: float = 30.0

    def __post_init__(self):
        if self.texture not in TEXTURES:
            raise ArgumentError(f"unknown texture {self.texture!r}; choose from {TEXTURES}")
        if min(self.width, self.height, self.frames) < 1:
            raise ArgumentError("fixture dimensions must be positive")


def _color(rng: np.random.Generator, lum_lo: float, lum_hi: float) -> np.ndarray:
    """Random RGB colour whose BT.601 luma falls in [lum_lo, lum_hi].

    The chroma tint is kept small enough that no channel clips, so the luma
    is exact.
    """
    target = rng.uniform(lum_lo, lum_hi)
    amp = min(40.0, 255.0 - target, target) / 2
    tint = rng.uniform(-amp, amp, size=3)
    tint -= tint @ np.array([0.299, 0.587, 0.114])
    return np.clip(target + tint, 0, 255)


SUPERSAMPLE = 4


def make_fixture(spec: FixtureSpec) -> Video:
    """Deterministic static fixture video with structured texture.

    Periods are real-valued and edges are box-filtered over a 4x4 subpixel
    grid, so texture edges do not lock onto the 8x8 coding grid. Colours model
    a well-exposed scene: shadows at luma 30-55, highlights at 220-245.
    """
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    s = SUPERSAMPLE
    yy, xx = (np.mgrid[0:h * s, 0:w * s].astype(np.float64) + 0.5) / s
    bright = _color(rng, 220, 245)
    dark = _color(rng, 30, 55)

    if spec.texture == "checker":
        size = rng.uniform(max(3.0, w / 8), max(4.0, w / 4))
        oy, ox = rng.uniform(0, size, size=2)
        mix = (np.floor((yy + oy) / size) + np.floor((xx + ox) / size)) % 2
    elif spec.texture == "gradient":
        theta = rng.uniform(0, 2 * math.pi)
        ramp = np.cos(theta) * xx / w + np.sin(theta) * yy / h
        mix = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-9)
        period = rng.uniform(max(4.0, w / 6), max(5.0, w / 3))
        phase = rng.uniform(0, period)
        axis = xx if rng.random() < 0.5 else yy
        bars = ((axis + phase) % period) < period / 3
        accent = float(rng.random() < 0.5)
        mix = np.where(bars, accent, mix)
    else:
        field = rng.normal(size=(h, w))
        field = ndimage.gaussian_filter(field, sigma=max(1.5, w / 16), mode="wrap")
        field = ndimage.zoom(field, s, order=1, mode="grid-wrap", grid_mode=True)
        field = (field - field.min()) / max(field.max() - field.min(), 1e-9)
        mix = 0.6 * (field > 0.5) + 0.4 * field

    mix = mix.reshape(h, s, w, s).mean(axis=(1, 3))
    img = mix[..., None] * bright + (1 - mix[..., None]) * dark
    frame = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return Video(np.repeat(frame[None], spec.frames, axis=0), spec.frame_rate)


def fixture_corpus(count: int, *, width: int = 32, height: int = 32, frames: int = 8,
                   seed: int = 0) -> list[tuple[Video, FixtureSpec]]:
    """Clean fixtures cycling through the textures."""
    out = []
    for i in range(count):
        spec = FixtureSpec(TEXTURES[i % len(TEXTURES)], width, height, frames, seed * 100_003 + i)
        out.append((make_fixture(spec), spec))
    return out


def random_kinds(rng: np.random.Generator) -> tuple[str, ...]:
    """A mix of the three groups, single kinds, pairs and clean samples."""
    r = rng.random()
    if r < 0.45:
        return GROUPS[("group1", "group2", "group3")[int(rng.integers(3))]]
    if r < 0.55:
        return ()
    pool = ["dark", "rain", "bnc", "low_resolution", "low_frame"]
    n = 1 if r < 0.8 else 2
    picks = rng.choice(len(pool), size=n, replace=False)
    kinds = [pool[int(i)] for i in sorted(picks)]
    # a single bnc member is as likely as the others
    return tuple(str(rng.choice(["blur", "noise", "compression"])) if k == "bnc" else k for k in kinds)


def degraded_corpus(count: int, *, width: int = 32, height: int = 32, frames: int = 8,
                    seed: int = 0, kinds_fn: Callable | None = None):
    """Clean fixture, recipe, degraded video and label for ``count`` samples.

    Samples whose kind set is empty come back clean with an empty recipe
    (``None``) and an all-false label.
    """
    from .degrade import DegradationLabel

    rng = np.random.default_rng(seed)
    kinds_fn = kinds_fn or random_kinds
    out = []
    for i, (clean, spec) in enumerate(fixture_corpus(count, width=width, height=height,
                                                     frames=frames, seed=seed)):
        kinds = kinds_fn(rng)
        if not kinds:
            out.append((clean, None, clean, DegradationLabel()))
            continue
        recipe = sample_recipe(kinds, int(rng.integers(0, 2 ** 63)), width=width, height=height,
                               frame_count=frames)
        degraded, label = apply_recipe(clean, recipe)
        out.append((clean, recipe, degraded, label))
    return out


# --------------------------------------------------------------------------
# detector calibration
# --------------------------------------------------------------------------

CALIBRATION_SEED = 7_919  # kept apart from every seed the tests evaluate on


def _best_cut(values: np.ndarray, truth: np.ndarray, above: bool) -> tuple[float, float]:
    """Threshold maximising accuracy of ``value > cut`` (or ``<``) against truth."""
    vals = np.unique(values)
    if vals.size == 0:
        return math.nan, 0.0
    cands = np.concatenate([[vals[0] - 1.0], (vals[1:] + vals[:-1]) / 2, [vals[-1] + 1.0]])
    best = (math.nan, -1.0)
    for c in cands:
        pred = values > c if above else values < c
        acc = float(np.mean(pred == truth))
        if acc > best[1]:
            best = (float(c), acc)
    return best


def calibrate_thresholds(samples, cfg=None) -> dict:
    """Fit detector thresholds on (degraded video, label) pairs.

    Each bit is fitted on its own, separately for the full and low resolution
    regimes. Blur is fitted on noise-free samples only, matching how the
    detector reads it. Returns a ``thresholds`` mapping for the config file;
    a regime whose best cut is no better than a constant answer gets ``None``.
    """
    from .perception import default_config, video_features

    cfg = cfg or default_config()
    feats = [(video_features(v, cfg), lab) for v, lab in samples]
    out: dict[str, dict[str, float | None]] = {}

    def fit(name, attr, bit, above, keep=lambda f, lab: True):
        out[name] = {}
        for regime, lr in (("full_res", False), ("low_res", True)):
            sel = [(f, lab) for f, lab in feats if f.low_res == lr and keep(f, lab)]
            if not sel:
                out[name][regime] = None
                continue
            x = np.array([getattr(f, attr) for f, _ in sel])
            y = np.array([getattr(lab, bit) for _, lab in sel])
            cut, acc = _best_cut(x, y, above)
            base = max(y.mean(), 1 - y.mean())
            out[name][regime] = round(cut, 4) if acc > base + 0.02 else None

    fit("noise_sigma", "noise", "noise", True)
    fit("streak", "streak", "rain", True)
    fit("blockiness", "blockiness", "compression", True)
    fit("blur_sharpness", "sharpness", "blur", False, keep=lambda f, lab: not lab.noise)

    # dark combines three cuts, searched jointly on a coarse grid
    for name in ("dark_highlight", "dark_shadow", "dark_highlight_flat"):
        out[name] = {}
    for regime, lr in (("full_res", False), ("low_res", True)):
        sel = [(f, lab) for f, lab in feats if f.low_res == lr]
        lo = np.array([f.brightness_p01 for f, _ in sel])
        hi = np.array([f.brightness_p99 for f, _ in sel])
        y = np.array([lab.dark for _, lab in sel])
        best = (-1.0, 0.0, 0.0, 0.0)
        for a in np.arange(150.0, 250.0, 2.0):
            dim = hi < a
            for c in np.arange(100.0, 200.0, 4.0):
                flat = hi < c
                for b in np.arange(10.0, 60.0, 2.0):
                    acc = float(np.mean((dim & ((lo < b) | flat)) == y))
                    if acc > best[0]:
                        best = (acc, a, b, c)
        out["dark_highlight"][regime] = best[1]
        out["dark_shadow"][regime] = best[2]
        out["dark_highlight_flat"][regime] = best[3]
    return out


def calibration_samples(count: int = 600, seed: int = CALIBRATION_SEED):
    """Calibration pairs drawn at 32 and 64 pixels in equal measure."""
    half = count // 2
    pairs = []
    for size, n, s in ((32, half, seed), (64, count - half, seed + 1)):
        pairs += [(deg, lab) for _, _, deg, lab in degraded_corpus(n, width=size, height=size, seed=s)]
    return pairs


# --------------------------------------------------------------------------
# trajectory oracles
# --------------------------------------------------------------------------

def enumerate_trajectories(subtasks, pool) -> list:
    """Every trajectory over ``subtasks``, lexicographic by (sub-task, operator id)."""
    from .operators import SubTask, Trajectory

    order = sorted((SubTask(t) for t in subtasks), key=lambda t: t.rank)
    choices = [sorted(op.id for op in pool.for_subtask(t)) for t in order]
    return [Trajectory(tuple(zip(order, combo))) for combo in itertools.product(*choices)]


def oracle_best(video: Video, trajectories: Sequence, pool, executor=None, scorer=None):
    """Run every trajectory from ``video``; highest score wins, earliest on ties.

    The order of ``trajectories`` is the tie-break, so pass them in
    lexicographic order (as ``enumerate_trajectories`` emits them).
    """
    from .operators import run_operator
    from .perception import score_quality

    if not trajectories:
        raise ArgumentError("oracle_best needs at least one trajectory")
    executor = executor or run_operator
    scorer = scorer or (lambda v: float(score_quality(v)))
    best, best_score = None, -math.inf
    for traj in trajectories:
        out = video
        for _, op_id in traj.assignments:
            out = executor(pool.get(op_id), out)
        s = float(scorer(out))
        if s > best_score:
            best, best_score = traj, s
    return best, best_score


def linear_scan_topk(entries: Sequence[Sequence[float]], mean: Sequence[float], std: Sequence[float],
                     query: Sequence[float], k: int) -> list[tuple[int, float]]:
    """Top-k cosine retrieval written with plain loops, as an oracle."""
    def z(vec):
        return [(v - m) / s for v, m, s in zip(vec, mean, std)]

    def cos(a, b):
        na = math.sqrt(math.fsum(x * x for x in a))
        nb = math.sqrt(math.fsum(x * x for x in b))
        if na == 0 or nb == 0:
            return 0.0
        return math.fsum(x * y for x, y in zip(a, b)) / (na * nb)

    q = z(query)
    scored = [(i, cos(z(e), q)) for i, e in enumerate(entries)]
    picked = []
    remaining = list(scored)
    while remaining and len(picked) < k:
        best = remaining[0]
        for cand in remaining[1:]:
            if cand[1] > best[1] or (cand[1] == best[1] and cand[0] < best[0]):
                best = cand
        picked.append(best)
        remaining.remove(best)
    return picked


def hamming_select_oracle(neighbours: Sequence[tuple[int, float]], labels: Sequence[tuple[bool, ...]],
                          query: tuple[bool, ...]) -> int:
    """Index (into the library) of the neighbour chosen by agreement, then similarity."""
    best_rank = 0
    def agree(idx):
        return sum(1 for a, b in zip(labels[idx], query) if a == b)
    for rank in range(1, len(neighbours)):
        i, s = neighbours[rank]
        bi, bs = neighbours[best_rank]
        if agree(i) > agree(bi) or (agree(i) == agree(bi) and s > bs):
            best_rank = rank
    return neighbours[best_rank][0]


# --------------------------------------------------------------------------
# score-decomposable fixtures for greedy-vs-exhaustive checks
# --------------------------------------------------------------------------

BAND_AMPLITUDE = 100.0


@dataclass(frozen=True)
class BandFixture:
    """A video split into one horizontal band per sub-task.

    Each synthetic operator rewrites only its sub-task's band, setting the
    contrast of a checker pattern to its ``level``. The scorer sums the band
    contrasts, so the best operator of one sub-task does not depend on the
    choices made for the others.
    """

    video: Video
    subtasks: tuple
    pool: object

    def executor(self, op, video: Video) -> Video:
        k = self.subtasks.index(op.sub_task)
        data = video.data.astype(np.float64)
        rows = _band_rows(video.height, len(self.subtasks), k)
        pattern = _band_pattern(video.height, video.width)[rows]
        data[:, rows] = 128.0 + op.strength["level"] * BAND_AMPLITUDE * pattern[None, ..., None]
        return video.with_data(data)

    def scorer(self, video: Video) -> float:
        y = video.data.astype(np.float64).mean(axis=3)
        pattern = _band_pattern(video.height, video.width)
        total = 0.0
        for k in range(len(self.subtasks)):
            rows = _band_rows(video.height, len(self.subtasks), k)
            band = y[:, rows] - 128.0
            total += float(np.mean(band * pattern[rows][None])) / BAND_AMPLITUDE
        return 1.0 + total


def _band_rows(height: int, bands: int, k: int) -> slice:
    edges = np.linspace(0, height, bands + 1).astype(int)
    return slice(int(edges[k]), int(edges[k + 1]))


def _band_pattern(height: int, width: int) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    return np.where(((yy // 2) + (xx // 2)) % 2 == 0, 1.0, -1.0)


def band_fixture(seed: int, *, width: int = 32, height: int = 32, frames: int = 8,
                 max_subtasks: int = 3, max_candidates: int = 3) -> BandFixture:
    """Random band fixture with 1..max_subtasks sub-tasks and 1..max_candidates each.

    Candidate levels are distinct multiples of 0.1, so scores differ by more
    than the judge's tie band and the argmax is unique.
    """
    from .operators import SUBTASK_KINDS, SUBTASK_ORDER, OperatorDescriptor, OperatorPool

    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, max_subtasks + 1))
    picks = sorted(rng.choice(len(SUBTASK_ORDER), size=k, replace=False))
    subtasks = tuple(SUBTASK_ORDER[int(i)] for i in picks)
    ops = []
    for t in subtasks:
        n = int(rng.integers(1, max_candidates + 1))
        levels = rng.choice(np.arange(1, 10), size=n, replace=False) / 10.0
        caps = sorted(c.value for c in SUBTASK_KINDS[t])
        for j, lvl in enumerate(levels):
            cost = float(np.round(rng.uniform(0.5, 16.0), 2))
            ops.append(OperatorDescriptor(f"{t.value}_{j}", t, caps, {"level": float(lvl)}, cost,
                                          impl="band"))
    base = make_fixture(FixtureSpec("checker", width, height, frames, seed))
    return BandFixture(base, subtasks, OperatorPool(tuple(ops)))
