"""Trajectory library: embeddings, labels and best trajectories of reference videos.

Retrieval ranks entries by cosine similarity of z-scored embeddings; selection
picks, among the top K, the entry whose label agrees with the query on the
most bits.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .degrade import LABEL_KEYS, DegradationLabel, DegradationRecipe
from .errors import ArgumentError, FormatError, StateError
from .operators import Trajectory
from .perception import EMBED_DIM, Embedding
from .videoio import Video

LIBRARY_VERSION = "1"


@dataclass(frozen=True)
class RagEntry:
    source_id: str
    embedding: Embedding
    label: DegradationLabel
    trajectory: Trajectory

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "embedding": list(self.embedding.values),
            "label": [int(b) for b in self.label.bits()],
            "trajectory": self.trajectory.to_list(),
        }

    @classmethod
    def from_dict(cls, doc) -> "RagEntry":
        try:
            bits = doc["label"]
            if len(bits) != len(LABEL_KEYS) or any(b not in (0, 1) for b in bits):
                raise FormatError(f"label must be {len(LABEL_KEYS)} bits, got {bits!r}")
            return cls(str(doc["source_id"]), Embedding(tuple(doc["embedding"])),
                       DegradationLabel.from_bits([bool(b) for b in bits]),
                       Trajectory.from_list(doc["trajectory"]))
        except (KeyError, TypeError, ArgumentError) as exc:
            raise FormatError(f"malformed library entry: {exc!r}") from None


@dataclass(frozen=True)
class FeatureStats:
    mean: tuple[float, ...]
    std: tuple[float, ...]

    def __post_init__(self):
        mean = tuple(float(v) for v in self.mean)
        std = tuple(float(v) for v in self.std)
        if len(mean) != EMBED_DIM or len(std) != EMBED_DIM:
            raise FormatError(f"feature stats must have {EMBED_DIM} entries")
        if not all(math.isfinite(v) for v in mean) or not all(math.isfinite(s) and s > 0 for s in std):
            raise FormatError("feature stats must be finite with positive std")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def from_embeddings(cls, embeddings: Sequence[Embedding]) -> "FeatureStats":
        x = np.array([e.values for e in embeddings])
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        # a constant feature carries no information; unit std keeps it inert
        std = np.where(std > 1e-12, std, 1.0)
        return cls(tuple(mean), tuple(std))

    def zscore(self, values: np.ndarray) -> np.ndarray:
        return (values - np.array(self.mean)) / np.array(self.std)


@dataclass(frozen=True)
class RagLibrary:
    entries: tuple[RagEntry, ...]
    feature_stats: FeatureStats
    version: str = LIBRARY_VERSION

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def normalized(self) -> np.ndarray:
        """Z-scored entry embeddings, shape (entries, D)."""
        if not self.entries:
            return np.zeros((0, EMBED_DIM))
        return self.feature_stats.zscore(np.array([e.embedding.values for e in self.entries]))

    # ---- persistence -----------------------------------------------------

    def dumps(self) -> str:
        header = {"version": self.version, "dim": EMBED_DIM,
                  "feature_stats": {"mean": list(self.feature_stats.mean), "std": list(self.feature_stats.std)}}
        lines = [json.dumps(header)] + [json.dumps(e.to_dict()) for e in self.entries]
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.dumps())
        return p

    @classmethod
    def loads(cls, text: str) -> "RagLibrary":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise FormatError("library file is empty")
        try:
            header = json.loads(lines[0])
            rows = [json.loads(ln) for ln in lines[1:]]
        except json.JSONDecodeError as exc:
            raise FormatError(f"library is not valid JSON Lines: {exc}") from None
        if not isinstance(header, dict) or header.get("version") != LIBRARY_VERSION:
            raise FormatError(f"unsupported library version {header.get('version') if isinstance(header, dict) else None!r}")
        if header.get("dim") != EMBED_DIM:
            raise FormatError(f"library dimension {header.get('dim')!r} != {EMBED_DIM}")
        try:
            stats = FeatureStats(header["feature_stats"]["mean"], header["feature_stats"]["std"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"library header lacks feature stats: {exc!r}") from None
        return cls(tuple(RagEntry.from_dict(r) for r in rows), stats, LIBRARY_VERSION)

    @classmethod
    def load(cls, path: str | Path) -> "RagLibrary":
        p = Path(path)
        if not p.is_file():
            raise FormatError(f"library file not found: {p}")
        return cls.loads(p.read_text())


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def retrieve_topk(lib: RagLibrary, query: Embedding, k: int) -> list[tuple[int, float]]:
    """(entry index, similarity) pairs by descending similarity, index ascending on ties."""
    if k < 1:
        raise ArgumentError(f"k must be positive, got {k}")
    if len(lib) == 0:
        raise StateError("library is empty")
    z = lib.normalized()
    q = lib.feature_stats.zscore(query.array())
    qn = float(np.linalg.norm(q))
    norms = np.linalg.norm(z, axis=1)
    denom = norms * qn
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = np.where(denom > 0, (z @ q) / np.where(denom > 0, denom, 1.0), 0.0)
    order = sorted(range(len(sims)), key=lambda i: (-sims[i], i))
    return [(i, float(sims[i])) for i in order[:k]]


def label_agreement(a: DegradationLabel, b: DegradationLabel) -> int:
    return sum(x == y for x, y in zip(a.bits(), b.bits()))


def select_trajectory(topk: Sequence[tuple[int, float]], lib: RagLibrary,
                      query_label: DegradationLabel) -> Trajectory:
    """Trajectory of the neighbour with the most agreeing label bits.

    Ties go to the higher retrieval similarity, then to the earlier rank.
    """
    if not topk:
        raise ArgumentError("select_trajectory needs at least one neighbour")
    best = max(enumerate(topk),
               key=lambda r: (label_agreement(query_label, lib.entries[r[1][0]].label), r[1][1], -r[0]))
    return lib.entries[best[1][0]].trajectory


def build_library(corpus: Sequence[tuple[Video, DegradationRecipe | None]], pool, *,
                  source_ids: Sequence[str] | None = None, embed_frames: int = 8,
                  search: Callable | None = None, detector: Callable | None = None,
                  embedder: Callable | None = None) -> RagLibrary:
    """Run greedy search on each corpus video and store the result.

    ``search`` maps (video, subtasks, pool) to a trajectory and defaults to
    live greedy search with the builtin judge. ``detector`` and ``embedder``
    default to the perception module.
    """
    from .perception import detect_degradations, embed
    from .scheduler import canonical_subtasks, greedy_search

    if len(corpus) == 0:
        raise ArgumentError("corpus is empty")
    if source_ids is not None and len(source_ids) != len(corpus):
        raise ArgumentError("source_ids must match the corpus length")
    detector = detector or detect_degradations
    embedder = embedder or (lambda v: embed(v, min(embed_frames, v.frame_count)))
    search = search or (lambda v, subtasks, p: greedy_search(v, subtasks, p, mode="live").trajectory)
    entries = []
    for i, (video, _recipe) in enumerate(corpus):
        label = detector(video)
        traj = search(video, canonical_subtasks(label), pool)
        sid = source_ids[i] if source_ids is not None else f"video_{i:04d}"
        entries.append(RagEntry(sid, embedder(video), label, traj))
    stats = FeatureStats.from_embeddings([e.embedding for e in entries])
    return RagLibrary(tuple(entries), stats)
