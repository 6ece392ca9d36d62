"""Seeded synthesis of the seven degradation kinds.

Every parameter is drawn once per video by :func:`sample_recipe`; applying a
recipe never draws new parameters, only per-frame noise realisations from the
step's own seed.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from scipy import fft, ndimage, signal

from .errors import ArgumentError, FormatError, ValidationError
from .videoio import Video, resize_frames

SCALE_FACTOR = 4
FRAME_STRIDE = 4
RAIN_DENSITY = 0.003
RAIN_LENGTH = 15
RAIN_SEED_SIGMA = 0.75
DEFOCUS_SMOOTH_SIGMA = 0.5


class DegradationKind(str, enum.Enum):
    DARK = "dark"
    RAIN = "rain"
    BLUR = "blur"
    COMPRESSION = "compression"
    NOISE = "noise"
    LOW_RESOLUTION = "low_resolution"
    LOW_FRAME = "low_frame"
    BNC = "bnc"

    def __str__(self) -> str:
        return self.value


K = DegradationKind
BNC_KINDS = (K.BLUR, K.NOISE, K.COMPRESSION)
# application order; blur/noise/compression share one slot in practice
CANONICAL_ORDER = (K.DARK, K.RAIN, K.BLUR, K.NOISE, K.COMPRESSION, K.LOW_RESOLUTION, K.LOW_FRAME)
LABEL_KEYS = ("dark", "rain", "blur", "compression", "noise", "low_resolution", "low_frame")

# (kind, variant) -> {param: (low, high)}
PARAM_RANGES: dict[tuple[DegradationKind, str], dict[str, tuple[float, float]]] = {
    (K.DARK, "constant"): {"shift": (30.0, 50.0)},
    (K.DARK, "gamma"): {"gamma": (0.5, 0.7)},
    (K.DARK, "linear"): {"target_max": (100.0, 150.0)},
    (K.RAIN, "streak"): {"angle_deg": (-30.0, 30.0), "intensity": (50.0, 100.0)},
    (K.BLUR, "gaussian"): {"sigma": (0.6, 8.0)},
    (K.BLUR, "defocus"): {"radius": (3.0, 35.0)},
    (K.COMPRESSION, "jpeg"): {"quality": (10.0, 30.0)},
    (K.NOISE, "gaussian"): {"sigma": (20.0, 50.0)},
    (K.NOISE, "poisson"): {"scale": (1.0, 3.0)},
    (K.LOW_RESOLUTION, "bicubic"): {"factor": (4.0, 4.0)},
    (K.LOW_FRAME, "stride"): {"stride": (4.0, 4.0)},
}

VARIANTS: dict[DegradationKind, tuple[str, ...]] = {}
for _kind, _variant in PARAM_RANGES:
    VARIANTS.setdefault(_kind, ())
    VARIANTS[_kind] += (_variant,)


def parse_kind(value) -> DegradationKind:
    if isinstance(value, DegradationKind):
        return value
    try:
        return DegradationKind(str(value).strip().lower())
    except ValueError:
        raise ArgumentError(f"unknown degradation kind: {value!r}") from None


@dataclass(frozen=True)
class DegradationStep:
    kind: DegradationKind
    variant: str
    params: Mapping[str, float]
    seed: int

    def __post_init__(self):
        kind = parse_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", dict(self.params))
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def validate(self):
        if self.kind is K.BNC:
            raise ArgumentError("bnc must be resolved to blur, noise or compression before application")
        ranges = PARAM_RANGES.get((self.kind, self.variant))
        if ranges is None:
            raise ArgumentError(f"unknown variant {self.variant!r} for kind {self.kind}")
        if set(self.params) != set(ranges):
            raise ArgumentError(
                f"{self.kind}/{self.variant} expects params {sorted(ranges)}, got {sorted(self.params)}")
        for name, (lo, hi) in ranges.items():
            v = self.params[name]
            if not (lo <= v <= hi):
                raise ArgumentError(f"{self.kind}/{self.variant}: {name}={v} outside [{lo}, {hi}]")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "variant": self.variant,
                "params": dict(self.params), "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DegradationStep":
        return cls(parse_kind(doc["kind"]), str(doc["variant"]),
                   {k: float(v) for k, v in doc["params"].items()}, int(doc["seed"]))


@dataclass(frozen=True)
class DegradationLabel:
    dark: bool = False
    rain: bool = False
    blur: bool = False
    compression: bool = False
    noise: bool = False
    low_resolution: bool = False
    low_frame: bool = False

    @classmethod
    def from_bits(cls, bits: Iterable) -> "DegradationLabel":
        bits = [bool(b) for b in bits]
        if len(bits) != len(LABEL_KEYS):
            raise ArgumentError(f"label needs {len(LABEL_KEYS)} bits, got {len(bits)}")
        return cls(*bits)

    @classmethod
    def from_kinds(cls, kinds: Iterable) -> "DegradationLabel":
        names = {parse_kind(k).value for k in kinds}
        if "bnc" in names:
            raise ArgumentError("labels are defined over resolved kinds only")
        return cls(**{k: k in names for k in LABEL_KEYS})

    def bits(self) -> tuple[bool, ...]:
        return tuple(getattr(self, k) for k in LABEL_KEYS)

    def kinds(self) -> list[DegradationKind]:
        return [DegradationKind(k) for k in LABEL_KEYS if getattr(self, k)]

    def count(self) -> int:
        return sum(self.bits())

    def any(self) -> bool:
        return any(self.bits())

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in LABEL_KEYS}


@dataclass(frozen=True)
class DegradationRecipe:
    steps: tuple[DegradationStep, ...]
    source_width: int
    source_height: int
    source_frame_count: int

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        kinds = [s.kind for s in self.steps]
        if len(set(kinds)) != len(kinds):
            raise ValidationError("a recipe holds at most one step per kind")
        for name in ("source_width", "source_height", "source_frame_count"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be positive")

    @property
    def label(self) -> DegradationLabel:
        return DegradationLabel.from_kinds(s.kind for s in self.steps)

    def to_dict(self) -> dict:
        return {
            "source_width": self.source_width,
            "source_height": self.source_height,
            "source_frame_count": self.source_frame_count,
            "steps": [s.to_dict() for s in self.steps],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DegradationRecipe":
        try:
            return cls(tuple(DegradationStep.from_dict(s) for s in doc["steps"]),
                       int(doc["source_width"]), int(doc["source_height"]),
                       int(doc["source_frame_count"]))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed recipe document: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "DegradationRecipe":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"recipe is not valid JSON: {exc}") from None
        return cls.from_dict(doc)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

def _draw_param(rng: np.random.Generator, lo: float, hi: float) -> float:
    """Single choke point for parameter draws (one call per parameter per video)."""
    if lo == hi:
        return float(lo)
    return float(rng.uniform(lo, hi))


def _resolve_kinds(kinds: Iterable, rng: np.random.Generator) -> list[DegradationKind]:
    requested = {parse_kind(k) for k in kinds}
    if not requested:
        raise ArgumentError("at least one degradation kind is required")
    if K.BNC in requested:
        requested.discard(K.BNC)
        free = [k for k in BNC_KINDS if k not in requested]
        if not free:
            raise ArgumentError("bnc requested together with blur, noise and compression")
        requested.add(free[int(rng.integers(len(free)))])
    return [k for k in CANONICAL_ORDER if k in requested]


def sample_recipe(kinds: Iterable, rng_seed: int, *, width: int = 64, height: int = 64,
                  frame_count: int = 8) -> DegradationRecipe:
    """Draw one step per kind with video-level parameters.

    ``bnc`` resolves uniformly to one of blur/noise/compression that was not
    requested explicitly.
    """
    rng = np.random.default_rng(int(rng_seed))
    steps = []
    for kind in _resolve_kinds(kinds, rng):
        variants = VARIANTS[kind]
        variant = variants[int(rng.integers(len(variants)))] if len(variants) > 1 else variants[0]
        ranges = PARAM_RANGES[(kind, variant)]
        params = {name: _draw_param(rng, *ranges[name]) for name in sorted(ranges)}
        seed = int(rng.integers(0, 2 ** 64, dtype=np.uint64))
        steps.append(DegradationStep(kind, variant, params, seed))
    return DegradationRecipe(tuple(steps), width, height, frame_count)


def recipe_for(video: Video, kinds: Iterable, rng_seed: int) -> DegradationRecipe:
    return sample_recipe(kinds, rng_seed, width=video.width, height=video.height,
                         frame_count=video.frame_count)


# --------------------------------------------------------------------------
# per-kind kernels
# --------------------------------------------------------------------------

def _jpeg_table(base: np.ndarray, quality: float) -> np.ndarray:
    # IJG quality scaling, continuous in quality
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    table = np.floor((base * scale + 50.0) / 100.0)
    return np.clip(table, 1.0, 255.0)


_LUMA_Q = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

_CHROMA_Q = np.full((8, 8), 99.0)
_CHROMA_Q[:4, :4] = [[17, 18, 24, 47], [18, 21, 26, 66], [24, 26, 56, 99], [47, 66, 99, 99]]

_RGB2YCC = np.array([[0.299, 0.587, 0.114],
                     [-0.168736, -0.331264, 0.5],
                     [0.5, -0.418688, -0.081312]])
_YCC2RGB = np.linalg.inv(_RGB2YCC)


def _quantize_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    """8x8 block DCT quantisation of a (F, H, W) plane with H, W multiples of 8."""
    f, h, w = plane.shape
    blocks = plane.reshape(f, h // 8, 8, w // 8, 8).transpose(0, 1, 3, 2, 4)
    coeffs = fft.dctn(blocks - 128.0, type=2, norm="ortho", axes=(-2, -1))
    coeffs = np.round(coeffs / table) * table
    rec = fft.idctn(coeffs, type=2, norm="ortho", axes=(-2, -1)) + 128.0
    return rec.transpose(0, 1, 3, 2, 4).reshape(f, h, w)


def jpeg_proxy(data: np.ndarray, quality: float) -> np.ndarray:
    f, h, w, _ = data.shape
    ph, pw = (-h) % 8, (-w) % 8
    x = np.pad(data.astype(np.float64), ((0, 0), (0, ph), (0, pw), (0, 0)), mode="edge")
    ycc = x @ _RGB2YCC.T
    ycc[..., 1:] += 128.0
    out = np.empty_like(ycc)
    out[..., 0] = _quantize_plane(ycc[..., 0], _jpeg_table(_LUMA_Q, quality))
    for c in (1, 2):
        out[..., c] = _quantize_plane(ycc[..., c], _jpeg_table(_CHROMA_Q, quality))
    out[..., 1:] -= 128.0
    rgb = out @ _YCC2RGB.T
    return rgb[:, :h, :w, :]


def disk_kernel(radius: float) -> np.ndarray:
    r = int(math.ceil(radius))
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    k = (x * x + y * y <= radius * radius).astype(np.float64)
    return k / k.sum()


def convolve_frames(data: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Reflect-padded 2-D convolution of an (F, H, W, C) float stack."""
    ry, rx = kernel.shape[0] // 2, kernel.shape[1] // 2
    padded = np.pad(data, ((0, 0), (ry, ry), (rx, rx), (0, 0)), mode="symmetric")
    return signal.fftconvolve(padded, kernel[None, :, :, None], mode="valid", axes=(1, 2))


def line_kernel(angle_deg: float, length: int = RAIN_LENGTH) -> np.ndarray:
    """Bilinearly splatted line of unit samples; angle measured from vertical."""
    half = (length - 1) / 2.0
    size = int(math.ceil(half)) * 2 + 3
    c = size // 2
    k = np.zeros((size, size))
    th = math.radians(angle_deg)
    for t in np.linspace(-half, half, length):
        y, x = c + t * math.cos(th), c + t * math.sin(th)
        y0, x0 = int(math.floor(y)), int(math.floor(x))
        fy, fx = y - y0, x - x0
        k[y0, x0] += (1 - fy) * (1 - fx)
        k[y0 + 1, x0] += fy * (1 - fx)
        k[y0, x0 + 1] += (1 - fy) * fx
        k[y0 + 1, x0 + 1] += fy * fx
    return k


def rain_layer(shape: tuple[int, int, int], angle_deg: float, rng: np.random.Generator) -> np.ndarray:
    """Streak map in [0, 1] of shape (F, H, W); one random seed map per frame."""
    f, h, w = shape
    seeds = (rng.random((f, h, w)) < RAIN_DENSITY).astype(np.float64)
    seeds = ndimage.gaussian_filter(seeds, sigma=(0, RAIN_SEED_SIGMA, RAIN_SEED_SIGMA))
    # after the line kernel, a lone streak peaks at ~1 across its width
    seeds *= math.sqrt(2 * math.pi) * RAIN_SEED_SIGMA
    k = line_kernel(angle_deg)
    streaks = signal.fftconvolve(seeds, k[None], mode="same", axes=(1, 2))
    return np.clip(streaks, 0.0, 1.0)


# --------------------------------------------------------------------------
# application
# --------------------------------------------------------------------------

def apply_step(video: Video, step: DegradationStep) -> Video:
    step.validate()
    p = step.params
    x = video.data.astype(np.float64)
    kind, variant = step.kind, step.variant

    if kind is K.DARK:
        if variant == "constant":
            x = x - p["shift"]
        elif variant == "gamma":
            # exponent 1/gamma > 1 darkens for gamma in [0.5, 0.7]
            x = 255.0 * (x / 255.0) ** (1.0 / p["gamma"])
        else:
            peak = float(x.max())
            if peak > 0:
                x = x * min(1.0, p["target_max"] / peak)
        return video.with_data(x)

    if kind is K.NOISE:
        rng = np.random.default_rng(step.seed)
        if variant == "gaussian":
            x = x + rng.normal(0.0, p["sigma"], size=x.shape)
        else:
            x = x + p["scale"] * (rng.poisson(x) - x)
        return video.with_data(x)

    if kind is K.COMPRESSION:
        return video.with_data(jpeg_proxy(video.data, p["quality"]))

    if kind is K.BLUR:
        if variant == "gaussian":
            s = p["sigma"]
            x = ndimage.gaussian_filter(x, sigma=(0, s, s, 0), radius=(0, math.ceil(3 * s), math.ceil(3 * s), 0),
                                        mode="reflect")
        else:
            x = convolve_frames(x, disk_kernel(p["radius"]))
            x = ndimage.gaussian_filter(x, sigma=(0, DEFOCUS_SMOOTH_SIGMA, DEFOCUS_SMOOTH_SIGMA, 0),
                                        mode="reflect")
        return video.with_data(x)

    if kind is K.RAIN:
        rng = np.random.default_rng(step.seed)
        layer = rain_layer(x.shape[:3], p["angle_deg"], rng)
        return video.with_data(x + p["intensity"] * layer[..., None])

    if kind is K.LOW_RESOLUTION:
        if video.width < SCALE_FACTOR or video.height < SCALE_FACTOR:
            raise ArgumentError(f"frame {video.width}x{video.height} too small for {SCALE_FACTOR}x downsampling")
        data = resize_frames(video.data, video.width // SCALE_FACTOR, video.height // SCALE_FACTOR)
        return Video(data, video.frame_rate)

    # low_frame
    return Video(video.data[::FRAME_STRIDE], video.frame_rate / FRAME_STRIDE)


def apply_recipe(video: Video, recipe: DegradationRecipe) -> tuple[Video, DegradationLabel]:
    if not recipe.steps:
        raise ArgumentError("recipe has no steps")
    if (recipe.source_width, recipe.source_height, recipe.source_frame_count) != (
            video.width, video.height, video.frame_count):
        raise ArgumentError(
            f"recipe expects a {recipe.source_width}x{recipe.source_height}x{recipe.source_frame_count} "
            f"source, got {video.width}x{video.height}x{video.frame_count}")
    positions = [CANONICAL_ORDER.index(s.kind) if s.kind in CANONICAL_ORDER else -1 for s in recipe.steps]
    if positions != sorted(positions) or -1 in positions:
        raise ArgumentError("recipe steps are not in canonical application order")
    out = video
    for step in recipe.steps:
        out = apply_step(out, step)
    return out, recipe.label
