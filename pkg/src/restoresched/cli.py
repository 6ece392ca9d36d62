"""Command-line entry point.

Exit codes: 0 success, 2 usage, 3 invalid or malformed data, 4 state
(e.g. empty library), 5 configuration, 6 resource budget.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Sequence

from . import errors
from .degrade import DegradationRecipe, apply_recipe, recipe_for
from .harness import GROUPS, degraded_corpus, random_kinds
from .judge import compare
from .operators import builtin_pool, load_pool_extension
from .perception import PerceptionConfig, default_config, detect_degradations, embed, load_config, perceive, \
    score_quality
from .raglib import RagLibrary, build_library
from .scheduler import DEFAULT_EMBED_FRAMES, DEFAULT_TAU, DEFAULT_TOP_K, CostModel, ExecMode, Scheduler, \
    greedy_search, threshold_sweep
from .videoio import load_video, save_video

log = logging.getLogger("restoresched")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_STATE = 4
EXIT_CONFIG = 5
EXIT_RESOURCE = 6

MANIFEST = "manifest.json"
RECIPE = "recipe.json"
REPORT = "report.json"
DEFAULT_TAUS = (2.4, 2.6, 3.0, 3.6)


class UsageError(errors.RestoreError):
    pass


@dataclass(frozen=True)
class RunConfig:
    tau: float = DEFAULT_TAU
    embed_frames: int = DEFAULT_EMBED_FRAMES
    top_k: int = DEFAULT_TOP_K
    seed: int = 0
    mode: str = ExecMode.LIVE.value
    pool: str | None = None
    library: str | None = None
    perception: str | None = None

    def __post_init__(self):
        if math.isnan(self.tau):
            raise UsageError("tau must be a number")
        if self.embed_frames < 1 or self.top_k < 1:
            raise UsageError("embed_frames and top_k must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise UsageError("seed must be a 64-bit unsigned integer")
        if self.mode not in (m.value for m in ExecMode):
            raise UsageError(f"mode must be live or simulated, got {self.mode!r}")

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls()
        p = Path(path)
        try:
            doc = json.loads(p.read_text())
        except FileNotFoundError:
            raise errors.ConfigurationError(f"config file not found: {p}") from None
        except json.JSONDecodeError as exc:
            raise errors.ConfigurationError(f"config is not valid JSON: {exc}") from None
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise errors.ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "tau" in doc:
            doc["tau"] = float(doc["tau"])
        # relative paths in the config file resolve against its directory
        for key in ("pool", "library", "perception"):
            if doc.get(key):
                doc[key] = str((p.parent / doc[key]).resolve())
        return cls(**doc)


def _write_json(doc, path: Path | None = None):
    text = json.dumps(doc, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _parse_real(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    if t in ("-inf", "-infinity"):
        return -math.inf
    try:
        v = float(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if math.isnan(v):
        raise argparse.ArgumentTypeError("NaN is not allowed")
    return v


def _parse_taus(text: str) -> list[float]:
    return [_parse_real(t) for t in text.split(",") if t.strip()]


def _corpus_dirs(root: str) -> list[Path]:
    p = Path(root)
    if not p.is_dir():
        raise UsageError(f"corpus directory not found: {p}")
    dirs = sorted(d for d in p.iterdir() if (d / MANIFEST).is_file())
    if not dirs:
        raise UsageError(f"corpus directory has no videos: {p}")
    return dirs


# --------------------------------------------------------------------------
# run context
# --------------------------------------------------------------------------

def _resolve(args) -> RunConfig:
    cfg = RunConfig.load(getattr(args, "config", None))
    overrides = {}
    for name in ("tau", "embed_frames", "top_k", "seed", "mode", "pool", "library", "perception"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    return replace(cfg, **overrides)


def _perception(cfg: RunConfig) -> PerceptionConfig:
    return load_config(cfg.perception) if cfg.perception else default_config()


def _pool(cfg: RunConfig):
    return load_pool_extension(cfg.pool) if cfg.pool else builtin_pool()


def _scheduler(cfg: RunConfig, library: RagLibrary | None) -> Scheduler:
    pcfg = _perception(cfg)
    return Scheduler(
        pool=_pool(cfg), library=library, tau=cfg.tau, cost=CostModel(), mode=ExecMode(cfg.mode),
        top_k=cfg.top_k, embed_frames=cfg.embed_frames,
        scorer=lambda v: float(score_quality(v, pcfg)),
        perceiver=lambda v: perceive(v, pcfg),
        embedder=lambda v, n: embed(v, n, pcfg.nominal_resolution),
    )


def _library(cfg: RunConfig) -> RagLibrary | None:
    if not cfg.library:
        return None
    p = Path(cfg.library)
    if not p.exists():
        log.warning("library %s not found; retrieval falls back to greedy", p)
        return None
    return RagLibrary.load(p)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_degrade(args) -> int:
    cfg = _resolve(args)
    video = load_video(args.input)
    kinds = [k for k in args.kinds.split(",") if k.strip()]
    recipe = recipe_for(video, kinds, cfg.seed)
    out, _ = apply_recipe(video, recipe)
    outdir = Path(args.out)
    save_video(out, outdir / MANIFEST)
    (outdir / RECIPE).write_text(recipe.to_json())
    return EXIT_OK


def cmd_restore(args) -> int:
    cfg = _resolve(args)
    video = load_video(args.input)
    report, out = _scheduler(cfg, _library(cfg)).schedule(video)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if out is not None:
        save_video(out, outdir / MANIFEST)
    (outdir / REPORT).write_text(report.to_json())
    sys.stdout.write(report.to_json())
    return EXIT_OK


def cmd_build_rag(args) -> int:
    cfg = _resolve(args)
    dirs = _corpus_dirs(args.corpus)
    corpus = []
    for d in dirs:
        recipe = DegradationRecipe.from_json((d / RECIPE).read_text()) if (d / RECIPE).is_file() else None
        corpus.append((load_video(d / MANIFEST), recipe))
    pcfg = _perception(cfg)
    mode = ExecMode(cfg.mode)
    scorer = lambda v: float(score_quality(v, pcfg))  # noqa: E731
    lib = build_library(
        corpus, _pool(cfg), source_ids=[d.name for d in dirs], embed_frames=cfg.embed_frames,
        search=lambda v, subtasks, pool: greedy_search(v, subtasks, pool, mode=mode, scorer=scorer).trajectory,
        detector=lambda v: detect_degradations(v, pcfg),
        embedder=lambda v: embed(v, min(cfg.embed_frames, v.frame_count), pcfg.nominal_resolution),
    )
    lib.save(args.out)
    log.info("wrote %d entries to %s", len(lib), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _resolve(args)
    taus = args.taus if args.taus else list(DEFAULT_TAUS) + [-math.inf, math.inf]
    videos = [load_video(d / MANIFEST) for d in _corpus_dirs(args.corpus)]
    sched = _scheduler(cfg, _library(cfg))
    rows = threshold_sweep(videos, taus, sched)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau", "mean_quality", "mean_predicted_cost_s", "rho"])
    for r in rows:
        w.writerow([repr(r.tau) if math.isfinite(r.tau) else ("inf" if r.tau > 0 else "-inf"),
                    repr(r.mean_quality), repr(r.mean_cost_s), repr(r.rho)])
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _resolve(args)
    label = detect_degradations(load_video(args.input), _perception(cfg))
    _write_json(label.to_dict())
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = _resolve(args)
    _write_json({"score": score_quality(load_video(args.input), _perception(cfg)).value})
    return EXIT_OK


def cmd_embed(args) -> int:
    cfg = _resolve(args)
    video = load_video(args.input)
    e = embed(video, cfg.embed_frames, _perception(cfg).nominal_resolution)
    _write_json({"embedding": list(e.values)})
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _resolve(args)
    pcfg = _perception(cfg)
    pref = compare(load_video(args.a), load_video(args.b), lambda v: float(score_quality(v, pcfg)))
    _write_json({"preference": pref.value})
    return EXIT_OK


def cmd_make_corpus(args) -> int:
    """Write fixture videos (and their recipes) into numbered sub-directories."""
    cfg = _resolve(args)
    if args.count < 1:
        raise UsageError("count must be positive")
    kinds_fn = None
    if args.groups:
        groups = list(GROUPS.values())
        kinds_fn = lambda rng: groups[int(rng.integers(len(groups)))]  # noqa: E731
    elif args.clean:
        kinds_fn = lambda rng: ()  # noqa: E731
    else:
        kinds_fn = random_kinds
    root = Path(args.out)
    for i, (_, recipe, degraded, _) in enumerate(degraded_corpus(
            args.count, width=args.size, height=args.size, frames=args.frames, seed=cfg.seed,
            kinds_fn=kinds_fn)):
        d = root / f"video_{i:04d}"
        save_video(degraded, d / MANIFEST)
        if recipe is not None:
            (d / RECIPE).write_text(recipe.to_json())
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="run config JSON (tau, top_k, embed_frames, seed, mode, paths)")
    p.add_argument("--seed", type=int)
    p.add_argument("--tau", type=_parse_real)
    p.add_argument("--mode", choices=[m.value for m in ExecMode])
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--embed-frames", dest="embed_frames", type=int)
    p.add_argument("--pool", help="operator pool extension JSON")
    p.add_argument("--library", help="trajectory library (JSON Lines)")
    p.add_argument("--perception", help="detector and scorer constants JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="restoresched", description="Video restoration scheduling toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("degrade", help="apply a sampled degradation recipe")
    p.add_argument("input")
    p.add_argument("--kinds", required=True, help="comma-separated kinds, e.g. dark,rain,bnc,low_resolution")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("restore", help="schedule and run restoration")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("build-rag", help="build a trajectory library from a corpus directory")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_build_rag)

    p = sub.add_parser("bench", help="threshold sweep as CSV")
    p.add_argument("corpus")
    p.add_argument("--taus", type=_parse_taus, help="comma-separated thresholds; inf and -inf allowed")
    p.add_argument("--out")
    _common(p)
    p.set_defaults(func=cmd_bench)

    for name, func, help_ in (("detect", cmd_detect, "print the detected degradation label"),
                              ("score", cmd_score, "print the quality score"),
                              ("embed", cmd_embed, "print the embedding")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("input")
        _common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("compare", help="pairwise preference between two videos")
    p.add_argument("a")
    p.add_argument("b")
    _common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("make-corpus", help="generate a fixture corpus with recipes")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--frames", type=int, default=8)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--groups", action="store_true", help="only the three multi-degradation groups")
    g.add_argument("--clean", action="store_true", help="clean fixtures only")
    _common(p)
    p.set_defaults(func=cmd_make_corpus)
    return parser


_EXIT_CODES = (
    (UsageError, EXIT_USAGE),
    (errors.ArgumentError, EXIT_USAGE),
    (errors.ValidationError, EXIT_VALIDATION),
    (errors.FormatError, EXIT_VALIDATION),
    (errors.StateError, EXIT_STATE),
    (errors.ConfigurationError, EXIT_CONFIG),
    (errors.ResourceError, EXIT_RESOURCE),
)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return args.func(args)
    except errors.RestoreError as exc:
        for cls, code in _EXIT_CODES:
            if isinstance(exc, cls):
                print(f"error: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
