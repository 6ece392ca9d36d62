"""Restoration operators: sub-tasks, descriptors, trajectories and execution.

Every operator is a classical, deterministic filter standing in for a learned
restorer of the same role. Costs are the nominal per-video runtimes used by the
cost model, not measurements of these filters.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Sequence

import cv2
import numpy as np
from scipy import ndimage

from .degrade import BNC_KINDS, DegradationKind
from .errors import ConfigurationError, FormatError, ResourceError, ValidationError
from .videoio import Video, luminance, resize_frames

UPSCALE = 4
FRAMES_PER_GAP = 3
# Largest output a single operator may produce, in bytes of uint8 RGB data.
MAX_OUTPUT_BYTES = 1 << 30


class SubTask(str, enum.Enum):
    DERAIN = "derain"
    LOW_LIGHT = "low_light"
    BNC_SR = "bnc_sr"
    FRAME_INTERP = "frame_interp"

    @property
    def rank(self) -> int:
        return SUBTASK_ORDER.index(self)


SUBTASK_ORDER = (SubTask.DERAIN, SubTask.LOW_LIGHT, SubTask.BNC_SR, SubTask.FRAME_INTERP)

# which degradations each sub-task can repair
SUBTASK_KINDS: dict[SubTask, frozenset[DegradationKind]] = {
    SubTask.DERAIN: frozenset({DegradationKind.RAIN}),
    SubTask.LOW_LIGHT: frozenset({DegradationKind.DARK}),
    SubTask.BNC_SR: frozenset(BNC_KINDS) | {DegradationKind.LOW_RESOLUTION},
    SubTask.FRAME_INTERP: frozenset({DegradationKind.LOW_FRAME}),
}


def parse_subtask(value: str | SubTask) -> SubTask:
    try:
        return SubTask(value)
    except ValueError:
        raise ValidationError(f"unknown sub-task {value!r}") from None


@dataclass(frozen=True)
class OperatorDescriptor:
    """Static description of one operator.

    ``impl`` names the filter that runs it; builtin operators use their own
    id, extension operators may reuse any builtin filter with new strengths.
    """

    id: str
    sub_task: SubTask
    capabilities: frozenset
    strength: Mapping[str, float]
    nominal_cost_s: float
    impl: str = ""

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError("operator id must be a non-empty string")
        object.__setattr__(self, "sub_task", parse_subtask(self.sub_task))
        try:
            caps = frozenset(DegradationKind(c) for c in self.capabilities)
        except ValueError as exc:
            raise ValidationError(f"operator {self.id}: {exc}") from None
        if not caps:
            raise ValidationError(f"operator {self.id}: capabilities must be non-empty")
        bad = caps - SUBTASK_KINDS[self.sub_task]
        if bad:
            names = sorted(k.value for k in bad)
            raise ValidationError(f"operator {self.id}: {names} not repairable at {self.sub_task.value}")
        cost = float(self.nominal_cost_s)
        if not math.isfinite(cost) or cost <= 0:
            raise ValidationError(f"operator {self.id}: nominal_cost_s must be positive")
        strength = {str(k): float(v) for k, v in dict(self.strength).items()}
        impl = self.impl or self.id
        object.__setattr__(self, "capabilities", caps)
        object.__setattr__(self, "strength", MappingProxyType(strength))
        object.__setattr__(self, "nominal_cost_s", cost)
        object.__setattr__(self, "impl", impl)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "sub_task": self.sub_task.value,
            "capabilities": sorted(k.value for k in self.capabilities),
            "strength": dict(self.strength),
            "nominal_cost_s": self.nominal_cost_s,
            "impl": self.impl,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "OperatorDescriptor":
        missing = {"id", "sub_task", "capabilities", "nominal_cost_s"} - set(doc)
        if missing:
            raise FormatError(f"operator descriptor missing fields {sorted(missing)}")
        return cls(doc["id"], doc["sub_task"], doc["capabilities"], doc.get("strength", {}),
                   doc["nominal_cost_s"], doc.get("impl", ""))


@dataclass(frozen=True)
class Trajectory:
    """Ordered (sub-task, operator id) assignments, one per sub-task at most."""

    assignments: tuple[tuple[SubTask, str], ...] = ()

    def __post_init__(self):
        pairs = tuple((parse_subtask(t), str(op)) for t, op in self.assignments)
        ranks = [t.rank for t, _ in pairs]
        if any(b <= a for a, b in zip(ranks, ranks[1:])):
            raise ValidationError("trajectory sub-tasks must be strictly increasing in canonical order")
        object.__setattr__(self, "assignments", pairs)

    @property
    def subtasks(self) -> tuple[SubTask, ...]:
        return tuple(t for t, _ in self.assignments)

    @property
    def operator_ids(self) -> tuple[str, ...]:
        return tuple(op for _, op in self.assignments)

    def __len__(self) -> int:
        return len(self.assignments)

    def get(self, subtask: SubTask) -> str | None:
        return dict(self.assignments).get(subtask)

    def check_pool(self, pool: "OperatorPool"):
        for t, op in self.assignments:
            desc = pool.get(op)
            if desc.sub_task is not t:
                raise ValidationError(f"operator {op} serves {desc.sub_task.value}, not {t.value}")

    def to_list(self) -> list[list[str]]:
        return [[t.value, op] for t, op in self.assignments]

    @classmethod
    def from_list(cls, items: Iterable) -> "Trajectory":
        try:
            return cls(tuple((t, op) for t, op in items))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise FormatError(f"malformed trajectory: {exc}") from None


# --------------------------------------------------------------------------
# filters
# --------------------------------------------------------------------------

def _as_float(video: Video) -> np.ndarray:
    return video.data.astype(np.float64)


def _unsharp(x: np.ndarray, amount: float, sigma: float) -> np.ndarray:
    if amount <= 0:
        return x
    blurred = ndimage.gaussian_filter(x, sigma=(0, sigma, sigma, 0), mode="reflect")
    return x + amount * (x - blurred)


def _upscale(data: np.ndarray) -> np.ndarray:
    f, h, w, _ = data.shape
    return resize_frames(np.clip(np.rint(data), 0, 255).astype(np.uint8), w * UPSCALE, h * UPSCALE)


def _bilateral(data: np.ndarray, sigma_color: float, sigma_space: float, passes: int = 1) -> np.ndarray:
    out = np.clip(np.rint(data), 0, 255).astype(np.uint8)
    d = max(3, 2 * int(math.ceil(1.5 * sigma_space)) + 1)
    for _ in range(passes):
        out = np.stack([cv2.bilateralFilter(np.ascontiguousarray(fr), d, sigma_color, sigma_space) for fr in out])
    return out.astype(np.float64)


def _temporal_window_median(x: np.ndarray, radius: int) -> np.ndarray:
    f = x.shape[0]
    out = np.empty_like(x)
    for i in range(f):
        idx = np.clip(np.arange(i - radius, i + radius + 1), 0, f - 1)
        out[i] = np.median(x[idx], axis=0)
    return out


def temporal_median(video: Video, strength: Mapping[str, float]) -> Video:
    """Per-pixel median over a sliding window of frames (3 by default)."""
    radius = int(strength.get("radius", 1))
    return video.with_data(_temporal_window_median(_as_float(video), radius))


def estimate_streak_angle(y: np.ndarray) -> float:
    """Dominant streak angle in degrees from vertical, from the bright residual.

    The residual over a per-pixel temporal minimum (or a spatial opening for
    short clips) isolates additive streaks; its structure tensor gives the
    orientation.
    """
    if y.shape[0] >= 3:
        res = y - _temporal_window_median(y, 1).min(axis=0, keepdims=True)
    else:
        res = y - ndimage.grey_opening(y, size=(1, 3, 3))
    res = np.maximum(res, 0)
    gy = ndimage.sobel(res, axis=1)
    gx = ndimage.sobel(res, axis=2)
    jxx, jyy, jxy = (gx * gx).sum(), (gy * gy).sum(), (gx * gy).sum()
    # gradient orientation is across the streaks; streak direction is normal to it
    theta = 0.5 * math.atan2(2 * jxy, jxx - jyy)
    ang = math.degrees(theta)
    return float(max(-45.0, min(45.0, ang)))


def _line_footprint(length: int, angle_deg: float) -> np.ndarray:
    """Binary line of ``length`` pixels at ``angle_deg`` from the horizontal."""
    r = length // 2
    fp = np.zeros((2 * r + 1, 2 * r + 1), dtype=bool)
    t = math.radians(angle_deg)
    for s in np.linspace(-r, r, 4 * length + 1):
        fp[int(round(r - s * math.sin(t))), int(round(r + s * math.cos(t)))] = True
    return fp


def directional_open(video: Video, strength: Mapping[str, float]) -> Video:
    """Remove thin bright structures that run along the estimated streak angle.

    A short opening across the streaks gives the bright top-hat; opening that
    top-hat with a line along the streaks keeps only elongated, streak-like
    parts, which are then subtracted.
    """
    across_len = int(strength.get("across", 3))
    along_len = int(strength.get("length", 7))
    x = _as_float(video)
    ang = estimate_streak_angle(luminance(video.data))
    # streak angle is measured from vertical; footprint angles from horizontal
    along = _line_footprint(along_len, 90.0 - ang)
    across = _line_footprint(across_len, -ang)
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        for c in range(3):
            ch = x[i, ..., c]
            tophat = ch - ndimage.grey_opening(ch, footprint=across, mode="reflect")
            out[i, ..., c] = ch - ndimage.grey_opening(tophat, footprint=along, mode="reflect")
    return video.with_data(out)


def adaptive_gamma(video: Video, strength: Mapping[str, float]) -> Video:
    """Global gamma chosen to move mean luminance towards a target level."""
    target = strength.get("target", 0.45)
    lo, hi = strength.get("min_gamma", 0.3), 1.0
    x = _as_float(video) / 255.0
    mean = float(luminance(video.data).mean()) / 255.0
    if 0.0 < mean < target:
        g = min(hi, max(lo, math.log(target) / math.log(mean)))
    else:
        g = 1.0
    return video.with_data(255.0 * x ** g)


def hist_stretch(video: Video, strength: Mapping[str, float]) -> Video:
    """Linear stretch of the luminance percentiles onto the full range."""
    lo_p, hi_p = strength.get("low_pct", 1.0), strength.get("high_pct", 99.0)
    y = luminance(video.data)
    lo, hi = np.percentile(y, [lo_p, hi_p])
    if hi - lo < 1.0:
        return video
    x = (_as_float(video) - lo) * (255.0 / (hi - lo))
    return video.with_data(x)


def strong_enhance(video: Video, strength: Mapping[str, float]) -> Video:
    """Gamma lift followed by CLAHE on the lightness channel."""
    lifted = adaptive_gamma(video, {"target": strength.get("target", 0.5)})
    clip = strength.get("clip_limit", 2.0)
    tiles = int(strength.get("tiles", 4))
    clahe = cv2.createCLAHE(clipLimit=clip, tileGridSize=(tiles, tiles))
    out = np.empty_like(lifted.data)
    for i, fr in enumerate(lifted.data):
        lab = cv2.cvtColor(np.ascontiguousarray(fr), cv2.COLOR_RGB2LAB)
        lab[..., 0] = clahe.apply(np.ascontiguousarray(lab[..., 0]))
        out[i] = cv2.cvtColor(lab, cv2.COLOR_LAB2RGB)
    mix = strength.get("mix", 0.7)
    return video.with_data(mix * out.astype(np.float64) + (1 - mix) * lifted.data.astype(np.float64))


def sr_only(video: Video, strength: Mapping[str, float]) -> Video:
    return Video(_upscale(_as_float(video)), video.frame_rate)


def fast_restore(video: Video, strength: Mapping[str, float]) -> Video:
    """Bicubic upsample and a light unsharp mask."""
    up = _upscale(_as_float(video)).astype(np.float64)
    return video.with_data(_unsharp(up, strength.get("sharpen", 0.5), strength.get("sharpen_sigma", 1.5)))


def balanced_restore(video: Video, strength: Mapping[str, float]) -> Video:
    """Edge-preserving denoise at input scale, bicubic upsample, unsharp mask."""
    x = _bilateral(_as_float(video), strength.get("sigma_color", 30.0), strength.get("sigma_space", 1.5))
    up = _upscale(x).astype(np.float64)
    return video.with_data(_unsharp(up, strength.get("sharpen", 0.6), strength.get("sharpen_sigma", 2.0)))


def heavy_restore(video: Video, strength: Mapping[str, float]) -> Video:
    """Temporal averaging plus strong bilateral denoise, upsample, deblur sharpening."""
    x = _as_float(video)
    radius = int(strength.get("temporal_radius", 2))
    if x.shape[0] > 1 and radius > 0:
        x = _temporal_window_median(x, radius)
    x = _bilateral(x, strength.get("sigma_color", 40.0), strength.get("sigma_space", 1.5),
                   passes=int(strength.get("passes", 1)))
    up = _upscale(x).astype(np.float64)
    up = _unsharp(up, strength.get("sharpen", 0.8), strength.get("sharpen_sigma", 2.0))
    return video.with_data(up)


def linear_blend(video: Video, strength: Mapping[str, float]) -> Video:
    """Insert three linearly blended frames in every gap; frame rate x4."""
    x = _as_float(video)
    n = FRAMES_PER_GAP
    if x.shape[0] == 1:
        return Video(video.data, video.frame_rate * (n + 1))
    out = [x[0]]
    for a, b in zip(x[:-1], x[1:]):
        for j in range(1, n + 1):
            w = j / (n + 1)
            out.append((1 - w) * a + w * b)
        out.append(b)
    return video.with_data(np.stack(out), frame_rate=video.frame_rate * (n + 1))


IMPLEMENTATIONS: dict[str, Callable[[Video, Mapping[str, float]], Video]] = {
    "temporal_median": temporal_median,
    "directional_open": directional_open,
    "adaptive_gamma": adaptive_gamma,
    "hist_stretch": hist_stretch,
    "strong_enhance": strong_enhance,
    "fast_restore": fast_restore,
    "balanced_restore": balanced_restore,
    "heavy_restore": heavy_restore,
    "sr_only": sr_only,
    "linear_blend": linear_blend,
}

# impl -> (output width factor, frame count law); used to pre-check budgets
_SPATIAL_X4 = {"fast_restore", "balanced_restore", "heavy_restore", "sr_only"}


def output_shape(op: OperatorDescriptor, video: Video) -> tuple[int, int, int]:
    """(frames, height, width) that ``run_operator`` will produce."""
    f, h, w = video.frame_count, video.height, video.width
    if op.impl in _SPATIAL_X4:
        return f, h * UPSCALE, w * UPSCALE
    if op.impl == "linear_blend":
        return (f - 1) * (FRAMES_PER_GAP + 1) + 1 if f > 1 else 1, h, w
    return f, h, w


def run_operator(op: OperatorDescriptor, video: Video) -> Video:
    if op.impl not in IMPLEMENTATIONS:
        raise ConfigurationError(f"operator {op.id}: no implementation named {op.impl!r}")
    f, h, w = output_shape(op, video)
    if f * h * w * 3 > MAX_OUTPUT_BYTES:
        raise ResourceError(f"operator {op.id}: output {f}x{h}x{w} exceeds the {MAX_OUTPUT_BYTES}-byte budget")
    return IMPLEMENTATIONS[op.impl](video, op.strength)


# --------------------------------------------------------------------------
# pools
# --------------------------------------------------------------------------

_K = DegradationKind
_BNC_SR_CAPS = (_K.BLUR, _K.NOISE, _K.COMPRESSION, _K.LOW_RESOLUTION)

_BUILTIN = (
    ("temporal_median", SubTask.DERAIN, (_K.RAIN,), {"radius": 1}, 0.56),
    ("directional_open", SubTask.DERAIN, (_K.RAIN,), {"across": 3, "length": 7}, 4.24),
    ("adaptive_gamma", SubTask.LOW_LIGHT, (_K.DARK,), {"target": 0.45, "min_gamma": 0.3}, 0.85),
    ("hist_stretch", SubTask.LOW_LIGHT, (_K.DARK,), {"low_pct": 1.0, "high_pct": 99.0}, 1.13),
    ("strong_enhance", SubTask.LOW_LIGHT, (_K.DARK,), {"target": 0.5, "clip_limit": 2.0, "tiles": 4, "mix": 0.7},
     4.24),
    ("fast_restore", SubTask.BNC_SR, _BNC_SR_CAPS, {"sharpen": 0.5, "sharpen_sigma": 1.5}, 3.28),
    ("balanced_restore", SubTask.BNC_SR, _BNC_SR_CAPS,
     {"sigma_color": 30.0, "sigma_space": 1.5, "sharpen": 0.6, "sharpen_sigma": 2.0}, 10.42),
    ("heavy_restore", SubTask.BNC_SR, _BNC_SR_CAPS,
     {"temporal_radius": 2, "sigma_color": 40.0, "sigma_space": 1.5, "passes": 1, "sharpen": 0.8,
      "sharpen_sigma": 2.0}, 15.75),
    ("sr_only", SubTask.BNC_SR, _BNC_SR_CAPS, {}, 0.94),
    ("linear_blend", SubTask.FRAME_INTERP, (_K.LOW_FRAME,), {}, 5.23),
)


@dataclass(frozen=True)
class OperatorPool:
    """Immutable id -> descriptor mapping, iterated in insertion order."""

    operators: tuple[OperatorDescriptor, ...] = field(default_factory=tuple)

    def __post_init__(self):
        ids = [op.id for op in self.operators]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ConfigurationError(f"duplicate operator ids: {dupes}")

    def __iter__(self):
        return iter(self.operators)

    def __len__(self) -> int:
        return len(self.operators)

    def __contains__(self, op_id: str) -> bool:
        return any(op.id == op_id for op in self.operators)

    def get(self, op_id: str) -> OperatorDescriptor:
        for op in self.operators:
            if op.id == op_id:
                return op
        raise ConfigurationError(f"unknown operator id {op_id!r}")

    def for_subtask(self, subtask: SubTask) -> list[OperatorDescriptor]:
        """Candidates for a sub-task, in pool order."""
        return [op for op in self.operators if op.sub_task is subtask]

    def cheapest(self, subtask: SubTask) -> OperatorDescriptor:
        cands = self.for_subtask(subtask)
        if not cands:
            raise ConfigurationError(f"no operator serves {subtask.value}")
        return min(cands, key=lambda op: (op.nominal_cost_s, op.id))

    def extended(self, extra: Sequence[OperatorDescriptor]) -> "OperatorPool":
        return OperatorPool(self.operators + tuple(extra))


def builtin_pool() -> OperatorPool:
    return OperatorPool(tuple(OperatorDescriptor(i, t, caps, s, c) for i, t, caps, s, c in _BUILTIN))


def load_pool_extension(path: str | Path, base: OperatorPool | None = None) -> OperatorPool:
    """Merge a JSON array of descriptors over ``base`` (the builtin pool by default).

    Ids must be unique across the file and the base pool, and every ``impl``
    must name a known filter.
    """
    base = base or builtin_pool()
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"pool file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"pool file is not valid JSON: {exc}") from None
    if not isinstance(doc, list):
        raise ConfigurationError("pool file must hold a JSON array of descriptors")
    try:
        extra = [OperatorDescriptor.from_dict(d) for d in doc]
    except (FormatError, ValidationError, TypeError, AttributeError) as exc:
        raise ConfigurationError(f"bad descriptor in {p}: {exc}") from None
    for op in extra:
        if op.impl not in IMPLEMENTATIONS:
            raise ConfigurationError(f"operator {op.id}: no implementation named {op.impl!r}")
    return base.extended(extra)
