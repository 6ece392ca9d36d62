"""Frames, videos, the PNG manifest format, and full-reference metrics."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ArgumentError, FormatError, ValidationError

PSNR_CAP = 100.0
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

SSIM_SIGMA = 1.5
SSIM_WINDOW = 11
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DATA_RANGE = 255.0


def _frozen_uint8(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.uint8, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Frame:
    """One RGB frame stored as an (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValidationError(f"frame must be (H, W, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValidationError("frame dimensions must be positive")
        if px.dtype != np.uint8:
            if np.issubdtype(px.dtype, np.floating) and not np.all(np.isfinite(px)):
                raise ValidationError("frame contains non-finite values")
            if px.min() < 0 or px.max() > 255:
                raise ValidationError("channel value out of range [0, 255]")
            if np.issubdtype(px.dtype, np.floating) and np.any(px != np.round(px)):
                raise ValidationError("channel values must be integers")
        object.__setattr__(self, "pixels", _frozen_uint8(px))

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class Video:
    """An immutable stack of equally sized RGB frames.

    ``data`` has shape (frames, height, width, 3) and dtype uint8.
    """

    data: np.ndarray
    frame_rate: float

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 4 or arr.shape[3] != 3:
            raise ValidationError(f"video data must be (F, H, W, 3), got {arr.shape}")
        if arr.shape[0] == 0:
            raise ValidationError("video must contain at least one frame")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValidationError("frame dimensions must be positive")
        if arr.dtype != np.uint8 and (arr.min() < 0 or arr.max() > 255):
            raise ValidationError("channel value out of range [0, 255]")
        rate = float(self.frame_rate)
        if not math.isfinite(rate) or rate <= 0:
            raise ValidationError(f"frame_rate must be positive, got {self.frame_rate}")
        object.__setattr__(self, "data", _frozen_uint8(arr))
        object.__setattr__(self, "frame_rate", rate)

    @classmethod
    def from_frames(cls, frames: Sequence[Frame], frame_rate: float) -> "Video":
        if len(frames) == 0:
            raise ValidationError("video must contain at least one frame")
        shapes = {f.pixels.shape for f in frames}
        if len(shapes) != 1:
            raise ValidationError(f"frames have mismatched dimensions: {sorted(shapes)}")
        return cls(np.stack([f.pixels for f in frames]), frame_rate)

    @property
    def frames(self) -> tuple[Frame, ...]:
        return tuple(Frame(f) for f in self.data)

    @property
    def frame_count(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    def with_data(self, data: np.ndarray, frame_rate: float | None = None) -> "Video":
        """Build a new video, clipping and rounding float data to uint8."""
        arr = np.asarray(data)
        if arr.dtype != np.uint8:
            arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
        return Video(arr, self.frame_rate if frame_rate is None else frame_rate)

    def __eq__(self, other):
        if not isinstance(other, Video):
            return NotImplemented
        return self.frame_rate == other.frame_rate and np.array_equal(self.data, other.data)


# --------------------------------------------------------------------------
# manifest I/O
# --------------------------------------------------------------------------

def frame_filename(index: int) -> str:
    """Zero-padded, one-based frame file name."""
    return f"frame_{index + 1:06d}.png"


def load_video(manifest_path: str | Path) -> Video:
    path = Path(manifest_path)
    if not path.is_file():
        raise FormatError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {path}: {exc}") from exc
    if not isinstance(doc, dict) or "frame_rate" not in doc or "frames" not in doc:
        raise FormatError(f"manifest must have 'frame_rate' and 'frames': {path}")
    names = doc["frames"]
    if not isinstance(names, list):
        raise FormatError("'frames' must be a list of relative paths")
    if not names:
        raise ValidationError("manifest lists no frames")
    frames = []
    for name in names:
        fpath = path.parent / name
        if not fpath.is_file():
            raise FormatError(f"frame file not found: {fpath}")
        with Image.open(fpath) as img:
            if img.mode in ("I", "I;16", "I;16B") and np.asarray(img).max() > 255:
                raise ValidationError(f"frame {fpath}: channel value out of range [0, 255]")
            if img.mode != "RGB":
                raise FormatError(f"frame {fpath} is {img.mode}, expected 8-bit RGB")
            frames.append(Frame(np.asarray(img)))
    return Video.from_frames(frames, doc["frame_rate"])


def save_video(video: Video, manifest_path: str | Path) -> Path:
    """Write frames as PNGs next to the manifest and the manifest itself."""
    path = Path(manifest_path)
    if not isinstance(video, Video):
        raise ValidationError("save_video expects a Video")
    path.parent.mkdir(parents=True, exist_ok=True)
    names = []
    for i, frame in enumerate(video.data):
        name = frame_filename(i)
        Image.fromarray(frame, mode="RGB").save(path.parent / name)
        names.append(name)
    doc = {"frame_rate": video.frame_rate, "frames": names}
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


# --------------------------------------------------------------------------
# sampling and resizing helpers
# --------------------------------------------------------------------------

def sample_indices(frame_count: int, n: int) -> list[int]:
    if n < 1 or n > frame_count:
        raise ArgumentError(f"n must lie in [1, {frame_count}], got {n}")
    if n == 1:
        return [(frame_count - 1) // 2]
    return [i * (frame_count - 1) // (n - 1) for i in range(n)]


def sample_frames(video: Video, n: int) -> list[Frame]:
    return [Frame(video.data[i]) for i in sample_indices(video.frame_count, n)]


def luminance(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma of an (..., 3) array, as float64 on [0, 255]."""
    return np.asarray(rgb, dtype=np.float64) @ LUMA_WEIGHTS


def resize_frames(data: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bicubic resize of an (F, H, W, 3) uint8 stack."""
    if width < 1 or height < 1:
        raise ArgumentError("target dimensions must be positive")
    if data.shape[1] == height and data.shape[2] == width:
        return np.array(data, copy=True)
    out = np.empty((data.shape[0], height, width, 3), dtype=np.uint8)
    for i, frame in enumerate(data):
        img = Image.fromarray(np.ascontiguousarray(frame), mode="RGB")
        out[i] = np.asarray(img.resize((width, height), Image.BICUBIC))
    return out


def align_video(video: Video, like: Video) -> Video:
    """Resample ``video`` onto the grid of ``like`` for full-reference comparison.

    Spatially bicubic. Temporally, target frame ``t`` (at time t / rate) takes
    the latest source frame whose timestamp is not after it, which is a
    sample-and-hold on the shared time axis.
    """
    data = resize_frames(video.data, like.width, like.height)
    t = np.arange(like.frame_count) / like.frame_rate
    idx = np.floor(t * video.frame_rate + 1e-9).astype(int)
    idx = np.clip(idx, 0, data.shape[0] - 1)
    return Video(data[idx], like.frame_rate)


# --------------------------------------------------------------------------
# full-reference metrics
# --------------------------------------------------------------------------

def _check_pair(reference: Video, candidate: Video):
    if reference.data.shape != candidate.data.shape:
        raise ArgumentError(
            f"shape mismatch: {reference.data.shape} vs {candidate.data.shape}")


def psnr(reference: Video, candidate: Video) -> float:
    _check_pair(reference, candidate)
    a = reference.data.astype(np.float64)
    b = candidate.data.astype(np.float64)
    mse = ((a - b) ** 2).reshape(a.shape[0], -1).mean(axis=1)
    if np.all(mse == 0):
        return PSNR_CAP
    vals = [PSNR_CAP if m == 0 else 10.0 * math.log10(DATA_RANGE ** 2 / m) for m in mse]
    return float(np.mean(vals))


def _gaussian_window_1d() -> np.ndarray:
    r = SSIM_WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-(x ** 2) / (2 * SSIM_SIGMA ** 2))
    return w / w.sum()


def _filter_valid(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(img, w, axis=0, mode="reflect")
    out = ndimage.correlate1d(out, w, axis=1, mode="reflect")
    r = SSIM_WINDOW // 2
    return out[r:-r, r:-r]


def ssim_frame(x: np.ndarray, y: np.ndarray) -> float:
    """SSIM between two luminance planes (float, [0, 255])."""
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ArgumentError(f"frame smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    w = _gaussian_window_1d()
    c1 = (SSIM_K1 * DATA_RANGE) ** 2
    c2 = (SSIM_K2 * DATA_RANGE) ** 2
    mx = _filter_valid(x, w)
    my = _filter_valid(y, w)
    sxx = _filter_valid(x * x, w) - mx * mx
    syy = _filter_valid(y * y, w) - my * my
    sxy = _filter_valid(x * y, w) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(reference: Video, candidate: Video) -> float:
    _check_pair(reference, candidate)
    ya = luminance(reference.data)
    yb = luminance(candidate.data)
    return float(np.mean([ssim_frame(a, b) for a, b in zip(ya, yb)]))
