"""Classical stand-ins for degradation detection, quality scoring and embedding.

All three views share one feature extractor. Videos larger than the nominal
analysis resolution are box-downsampled to it first, so an upscaled restoration
is judged at the same viewing scale as its input.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from PIL import Image
from scipy import fft, ndimage
from scipy.stats import norm

from .degrade import DegradationLabel
from .errors import ArgumentError, FormatError
from .videoio import Video, luminance, sample_indices

EMBED_DIM = 16
DEFAULT_EMBED_FRAMES = 8
CONFIG_VERSION = "1"

_DCT_AC = (np.add.outer(np.arange(8), np.arange(8)) >= 1)
# rounding each RGB channel to an integer leaves this variance in BT.601 luma
_ROUNDING_VAR = float(np.sum(np.array([0.299, 0.587, 0.114]) ** 2)) / 12.0
_LAPLACE_GAIN = 20.0  # squared-coefficient sum of the 5-point Laplacian
SHARP_GATE = 4.0
_IMMERKAER = np.array([[1, -2, 1], [-2, 4, -2], [1, -2, 1]], dtype=np.float64)


@dataclass(frozen=True)
class QualityScore:
    value: float

    def __post_init__(self):
        if not (1.0 <= self.value <= 5.0) or math.isnan(self.value):
            raise ArgumentError(f"quality score must lie in [1, 5], got {self.value}")

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class Embedding:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != EMBED_DIM:
            raise ArgumentError(f"embedding must have {EMBED_DIM} entries, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise ArgumentError("embedding entries must be finite")
        object.__setattr__(self, "values", vals)

    def array(self) -> np.ndarray:
        return np.array(self.values)


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PerceptionConfig:
    """Frozen detector thresholds and scoring weights (see data/perception.json)."""

    version: str
    nominal_resolution: int
    low_frame_fps: float
    thresholds: Mapping[str, Any]
    score: Mapping[str, Any]

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PerceptionConfig":
        if "version" not in doc:
            raise FormatError("perception config requires a 'version' field")
        if str(doc["version"]) != CONFIG_VERSION:
            raise FormatError(f"unsupported perception config version {doc['version']!r}")
        try:
            return cls(str(doc["version"]), int(doc["nominal_resolution"]),
                       float(doc["low_frame_fps"]), dict(doc["thresholds"]), dict(doc["score"]))
        except KeyError as exc:
            raise FormatError(f"perception config missing field {exc}") from exc

    def to_dict(self) -> dict:
        return {"version": self.version, "nominal_resolution": self.nominal_resolution,
                "low_frame_fps": self.low_frame_fps, "thresholds": dict(self.thresholds),
                "score": dict(self.score)}


def load_config(path: str | Path | None = None) -> PerceptionConfig:
    if path is None:
        return default_config()
    p = Path(path)
    if not p.is_file():
        raise FormatError(f"perception config not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"perception config is not valid JSON: {exc}") from exc
    return PerceptionConfig.from_dict(doc)


@functools.lru_cache(maxsize=1)
def default_config() -> PerceptionConfig:
    text = resources.files("restoresched").joinpath("data/perception.json").read_text()
    return PerceptionConfig.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# low-level measurements on luminance planes
# --------------------------------------------------------------------------

def analysis_luma(video: Video, nominal: int, upsample: bool = False) -> np.ndarray:
    """(F, H, W) luminance with the short side brought to ``nominal``.

    Larger frames are always box-downsampled. Smaller frames are bicubic
    upsampled only when ``upsample`` is set, which puts videos of different
    sizes on one measurement grid.
    """
    data = video.data
    short = min(video.width, video.height)
    if short > nominal or (upsample and short < nominal):
        w = max(1, round(video.width * nominal / short))
        h = max(1, round(video.height * nominal / short))
        method = Image.BOX if short > nominal else Image.BICUBIC
        data = np.stack([np.asarray(Image.fromarray(f).resize((w, h), method)) for f in data])
    return luminance(data)


def temporal_base(y: np.ndarray) -> np.ndarray:
    """Static-background estimate: temporal median, pair minimum, or 3x3 opening."""
    if y.shape[0] >= 3:
        return np.median(y, axis=0)
    if y.shape[0] == 2:
        return y.min(axis=0)
    return ndimage.grey_opening(y[0], size=(3, 3))


def spatial_noise(plane: np.ndarray) -> float:
    """Immerkaer's fast noise-sigma estimate for one plane."""
    h, w = plane.shape
    if h < 3 or w < 3:
        return 0.0
    r = ndimage.correlate(plane, _IMMERKAER, mode="reflect")[1:-1, 1:-1]
    return float(math.sqrt(math.pi / 2) * np.abs(r).sum() / (6.0 * (w - 2) * (h - 2)))


def noise_sigma(y: np.ndarray) -> float:
    """Noise estimate exploiting the static background when frames allow it.

    With three or more frames each pixel's lower half of temporal order
    statistics is used: the gap between the smallest and the median-rank
    sample, normalised for a Gaussian with Blom's approximation. Rain only
    brightens pixels in a minority of frames, so it leaves the lower half alone.
    """
    f = y.shape[0]
    if f >= 3:
        k = f // 2
        s = np.sort(y, axis=0)
        scale = norm.ppf((k - 0.375) / (f + 0.25)) - norm.ppf(0.625 / (f + 0.25))
        return float((s[k - 1] - s[0]).mean() / scale)
    if f == 2:
        d = (y[1] - y[0]).ravel()
        return float(np.median(np.abs(d)) / 0.6745 / math.sqrt(2))
    return spatial_noise(y[0])


def sharpness(plane: np.ndarray) -> float:
    """RMS Laplacian over RMS gradient, gated by gradient strength.

    The ratio falls as edges widen and ignores contrast, but on nearly flat
    planes 8-bit rounding steps dominate it, so the expected rounding energy
    is subtracted from both terms and planes with under ``SHARP_GATE`` grey
    levels per pixel of gradient are scaled down in proportion.
    """
    gy, gx = np.gradient(plane)
    g2 = float(np.mean(gx * gx + gy * gy)) - _ROUNDING_VAR
    if g2 < 1e-6:
        return 0.0
    lap = ndimage.laplace(plane, mode="reflect")
    l2 = max(float(np.mean(lap * lap)) - _LAPLACE_GAIN * _ROUNDING_VAR, 0.0)
    return math.sqrt(l2 / g2) * min(1.0, math.sqrt(g2) / SHARP_GATE)


def _zero_ac_fraction(plane: np.ndarray, offset: int) -> float | None:
    x = plane[offset:, offset:]
    h, w = (x.shape[0] // 8) * 8, (x.shape[1] // 8) * 8
    if h == 0 or w == 0:
        return None
    blocks = x[:h, :w].reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3).reshape(-1, 8, 8)
    ac = fft.dctn(blocks, norm="ortho", axes=(-2, -1))[:, _DCT_AC]
    busy = np.abs(ac).max(axis=1) > 8.0
    if not busy.any():
        return None
    return float((np.abs(ac[busy]) < 1.0).mean())


def blockiness(plane: np.ndarray) -> float:
    """Excess of vanishing DCT AC terms on the 8x8 grid over a 4-pixel-shifted grid.

    Block transform coding zeroes coefficients only in grid-aligned blocks, so
    the difference is near zero for uncoded content, blurred or not.
    """
    if min(plane.shape) < 16:
        return 0.0
    a = _zero_ac_fraction(plane, 0)
    b = _zero_ac_fraction(plane, 4)
    if a is None or b is None:
        return 0.0
    return a - b


def streak_energy(residual: np.ndarray) -> float:
    """Near-vertical autocorrelation of the positive residual stack (F, H, W).

    Rain leaves thin bright lines within 30 degrees of vertical; isotropic noise
    decorrelates after two pixels.
    """
    p = np.maximum(residual - 8.0, 0.0)
    if p.ndim == 2:
        p = p[None]
    _, h, w = p.shape
    denom = float((p * p).mean())
    if denom < 1e-9 or h < 3:
        return 0.0
    best = 0.0
    for dx in (-1, 0, 1):
        a = p[:, 2:, max(dx, 0):w + min(dx, 0)]
        b = p[:, :h - 2, max(-dx, 0):w + min(-dx, 0)]
        best = max(best, float((a * b).mean()) / denom)
    return best


# --------------------------------------------------------------------------
# video-level features
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VideoFeatures:
    width: int
    height: int
    frame_rate: float
    brightness_mean: float
    brightness_p01: float
    brightness_p99: float
    noise: float
    sharpness: float
    blockiness: float
    streak: float
    low_res: bool


def _features(video: Video, y: np.ndarray, block: float, low_res: bool) -> VideoFeatures:
    base = temporal_base(y)
    level = np.median(y, axis=0) if y.shape[0] >= 3 else y.mean(axis=0)
    residual = y - base[None] if y.shape[0] >= 2 else y[0] - base
    return VideoFeatures(
        width=video.width,
        height=video.height,
        frame_rate=video.frame_rate,
        brightness_mean=float(level.mean()),
        brightness_p01=float(np.percentile(level, 1)),
        brightness_p99=float(np.percentile(level, 99)),
        noise=noise_sigma(y),
        sharpness=sharpness(base),
        blockiness=block,
        streak=streak_energy(residual),
        low_res=low_res,
    )


def video_features(video: Video, cfg: PerceptionConfig | None = None) -> VideoFeatures:
    """Detection features, measured at native size (downsampled if large)."""
    cfg = cfg or default_config()
    y = analysis_luma(video, cfg.nominal_resolution)
    low_res = 3 * min(video.width, video.height) <= cfg.nominal_resolution
    return _features(video, y, blockiness(temporal_base(y)), low_res)


def quality_features(video: Video, cfg: PerceptionConfig | None = None,
                     native: VideoFeatures | None = None) -> VideoFeatures:
    """Scoring features, measured with every video resampled to the nominal size.

    Only blockiness is taken from the native grid, where coding blocks live.
    ``native`` may pass in already computed detection features.
    """
    cfg = cfg or default_config()
    native = native or video_features(video, cfg)
    if min(video.width, video.height) == cfg.nominal_resolution:
        return native
    y = analysis_luma(video, cfg.nominal_resolution, upsample=True)
    return _features(video, y, native.blockiness, native.low_res)


def _threshold(t: Mapping, name: str, low_res: bool) -> float | None:
    entry = t[name]
    if isinstance(entry, Mapping):
        entry = entry["low_res" if low_res else "full_res"]
    return None if entry is None else float(entry)


def _above(value: float, t: Mapping, name: str, low_res: bool) -> bool:
    thr = _threshold(t, name, low_res)
    return thr is not None and value > thr


def _below(value: float, t: Mapping, name: str, low_res: bool) -> bool:
    thr = _threshold(t, name, low_res)
    return thr is not None and value < thr


def label_from_features(f: VideoFeatures, cfg: PerceptionConfig) -> DegradationLabel:
    t = cfg.thresholds
    lr = f.low_res
    # dim highlights mean dark unless the shadows were lifted too, which is
    # what heavy blur does to a well-exposed scene
    dark = _below(f.brightness_p99, t, "dark_highlight", lr) and (
        _below(f.brightness_p01, t, "dark_shadow", lr)
        or _below(f.brightness_p99, t, "dark_highlight_flat", lr))
    noise = _above(f.noise, t, "noise_sigma", lr)
    # noise inflates the Laplacian, so blur is only read on noise-free input
    blur = not noise and _below(f.sharpness, t, "blur_sharpness", lr)
    return DegradationLabel(
        dark=dark,
        rain=_above(f.streak, t, "streak", lr),
        blur=blur,
        compression=_above(f.blockiness, t, "blockiness", lr),
        noise=noise,
        low_resolution=lr,
        low_frame=f.frame_rate <= cfg.low_frame_fps,
    )


def detect_degradations(video: Video, cfg: PerceptionConfig | None = None) -> DegradationLabel:
    cfg = cfg or default_config()
    return label_from_features(video_features(video, cfg), cfg)


def quality_from_features(f: VideoFeatures, cfg: PerceptionConfig) -> float:
    """Logistic map of weighted artefact penalties onto [1, 5]."""
    s = cfg.score
    short = min(f.width, f.height)
    penalties = {
        "blur": max(0.0, math.log2(s["sharpness_ref"] / max(f.sharpness, 1e-3))),
        "noise": f.noise / s["noise_scale"],
        "blockiness": max(0.0, f.blockiness) / s["blockiness_scale"],
        "brightness": abs(f.brightness_mean - s["brightness_center"]) / s["brightness_scale"],
        "rain": f.streak,
        "resolution": max(0.0, math.log2(cfg.nominal_resolution / short)),
        "frame_rate": max(0.0, math.log2(s["frame_rate_ref"] / f.frame_rate)),
    }
    z = s["bias"] - sum(s["weights"][k] * v for k, v in penalties.items())
    return 1.0 + 4.0 / (1.0 + math.exp(-z))


def score_quality(video: Video, cfg: PerceptionConfig | None = None) -> QualityScore:
    cfg = cfg or default_config()
    return QualityScore(quality_from_features(quality_features(video, cfg), cfg))


def perceive(video: Video, cfg: PerceptionConfig | None = None) -> tuple[DegradationLabel, QualityScore]:
    """Detection and scoring, sharing the native-grid measurements."""
    cfg = cfg or default_config()
    f = video_features(video, cfg)
    q = quality_features(video, cfg, f)
    return label_from_features(f, cfg), QualityScore(quality_from_features(q, cfg))


# --------------------------------------------------------------------------
# embedding
# --------------------------------------------------------------------------

def frame_features(video: Video, index: int, nominal: int = 64) -> np.ndarray:
    """16 quality-aware features of one frame (the per-frame embedding)."""
    rgb = video.data[index].astype(np.float64)
    y = luminance(rgb)
    gy, gx = np.gradient(y)
    grad = np.hypot(gx, gy)
    lap = ndimage.laplace(y, mode="reflect")
    hist = np.histogram(y, bins=4, range=(0.0, 256.0))[0] / y.size

    rg = rgb[..., 0] - rgb[..., 1]
    yb = 0.5 * (rgb[..., 0] + rgb[..., 1]) - rgb[..., 2]
    colorfulness = math.hypot(rg.std(), yb.std()) + 0.3 * math.hypot(rg.mean(), yb.mean())
    cmax, cmin = rgb.max(axis=2), rgb.min(axis=2)
    saturation = np.where(cmax > 0, (cmax - cmin) / np.maximum(cmax, 1e-9), 0.0).mean()

    tophat = y - ndimage.grey_opening(y, size=(3, 3))
    if video.frame_count > 1:
        other = index + 1 if index + 1 < video.frame_count else index - 1
        motion = np.abs(y - luminance(video.data[other].astype(np.float64))).mean()
    else:
        motion = 0.0
    short = min(video.width, video.height)

    return np.array([
        y.mean() / 255.0,
        y.std() / 128.0,
        *hist,
        grad.mean() / 64.0,
        grad.std() / 64.0,
        math.log1p(lap.var()) / 10.0,
        spatial_noise(y) / 32.0,
        blockiness(y),
        colorfulness / 100.0,
        float(saturation),
        streak_energy(tophat),
        motion / 32.0,
        min(short / nominal, 2.0),
    ])


def embed(video: Video, n: int = DEFAULT_EMBED_FRAMES, nominal: int | None = None) -> Embedding:
    """Component-wise mean of per-frame features over ``n`` uniformly sampled frames."""
    if n < 1 or n > video.frame_count:
        raise ArgumentError(f"n must lie in [1, {video.frame_count}], got {n}")
    nominal = nominal or default_config().nominal_resolution
    total = np.zeros(EMBED_DIM)
    idx = sample_indices(video.frame_count, n)
    for i in idx:
        total = total + frame_features(video, i, nominal)
    return Embedding(tuple(total / len(idx)))
