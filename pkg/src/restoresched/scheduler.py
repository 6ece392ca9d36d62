"""Threshold routing between retrieval and greedy search, plus the cost model.

Videos whose predicted quality falls below ``tau`` go through step-wise greedy
search: every candidate operator of a sub-task runs, a tournament picks the
winner, and its output feeds the next sub-task. The rest reuse a trajectory
retrieved from the library. Inputs with nothing detected pass through.
"""
from __future__ import annotations

import enum
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .degrade import DegradationLabel
from .errors import ArgumentError, ConfigurationError, FormatError, StateError
from .judge import TIE_EPSILON, Scorer, run_tournament
from .operators import (SUBTASK_ORDER, OperatorDescriptor, OperatorPool, SubTask, Trajectory,
                        parse_subtask, run_operator)
from .perception import QualityScore, embed, perceive
from .raglib import RagLibrary, retrieve_topk, select_trajectory
from .videoio import Video

DEFAULT_TAU = 2.6
DEFAULT_TOP_K = 3
DEFAULT_EMBED_FRAMES = 8

Executor = Callable[[OperatorDescriptor, Video], Video]


class Mode(str, enum.Enum):
    RETRIEVAL = "retrieval"
    GREEDY = "greedy"
    PASSTHROUGH = "passthrough"


class ExecMode(str, enum.Enum):
    LIVE = "live"
    SIMULATED = "simulated"


def _exec_mode(value) -> ExecMode:
    try:
        return ExecMode(value)
    except ValueError:
        raise ArgumentError(f"mode must be 'live' or 'simulated', got {value!r}") from None


# --------------------------------------------------------------------------
# cost model
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CostModel:
    """Nominal per-stage runtimes in seconds; operator costs come from descriptors."""

    t_det: float = 2.45
    t_cmp: float = 2.81
    t_rag: float = 0.35

    def __post_init__(self):
        for name in ("t_det", "t_cmp", "t_rag"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ArgumentError(f"{name} must be positive, got {v}")


def retrieval_cost(op_costs: Sequence[float], cost: CostModel = CostModel()) -> float:
    """Detection, one retrieval, then each selected operator once."""
    return cost.t_det + cost.t_rag + math.fsum(op_costs)


def greedy_cost(candidate_costs: Sequence[Sequence[float]], cost: CostModel = CostModel()) -> float:
    """Detection, then per sub-task N-1 comparisons and the slowest candidate.

    Candidates of one sub-task run in parallel, hence the max.
    """
    total = [cost.t_det]
    for cands in candidate_costs:
        if len(cands) == 0:
            raise ArgumentError("every sub-task needs at least one candidate")
        total.append((len(cands) - 1) * cost.t_cmp + max(cands))
    return math.fsum(total)


def expected_cost(rho: float, k: int, t_op: float, candidate_costs: Sequence[Sequence[float]],
                  cost: CostModel = CostModel()) -> float:
    """Population mean cost when a fraction ``rho`` takes the retrieval path.

    ``k`` operators of mean cost ``t_op`` on the retrieval path; the greedy
    path is described by per-sub-task candidate costs.
    """
    if not 0.0 <= rho <= 1.0:
        raise ArgumentError(f"rho must lie in [0, 1], got {rho}")
    greedy_part = greedy_cost(candidate_costs, cost) - cost.t_det
    return cost.t_det + rho * (cost.t_rag + k * t_op) + (1.0 - rho) * greedy_part


@dataclass(frozen=True)
class CostShape:
    """What a schedule decided, stripped down to what the cost depends on."""

    mode: Mode
    selected_costs: tuple[float, ...] = ()
    candidate_costs: tuple[tuple[float, ...], ...] = ()


def predicted_cost(shape: CostShape, cost: CostModel = CostModel()) -> float:
    if shape.mode is Mode.PASSTHROUGH:
        return cost.t_det
    if shape.mode is Mode.RETRIEVAL:
        return retrieval_cost(shape.selected_costs, cost)
    return greedy_cost(shape.candidate_costs, cost)


# --------------------------------------------------------------------------
# sub-tasks and greedy search
# --------------------------------------------------------------------------

def canonical_subtasks(label: DegradationLabel) -> list[SubTask]:
    wanted = {
        SubTask.DERAIN: label.rain,
        SubTask.LOW_LIGHT: label.dark,
        SubTask.BNC_SR: label.blur or label.noise or label.compression or label.low_resolution,
        SubTask.FRAME_INTERP: label.low_frame,
    }
    return [t for t in SUBTASK_ORDER if wanted[t]]


@dataclass(frozen=True)
class GreedyResult:
    trajectory: Trajectory
    video: Video | None
    comparisons: int
    candidate_costs: tuple[tuple[float, ...], ...]


def greedy_search(video: Video, subtasks: Sequence[SubTask], pool: OperatorPool, *,
                  mode: str | ExecMode = ExecMode.LIVE, executor: Executor = run_operator,
                  scorer: Scorer | None = None, eps: float = TIE_EPSILON) -> GreedyResult:
    """Step-wise search over sub-tasks in the given order.

    Live mode runs every candidate on the current intermediate video and keeps
    the tournament winner; runtimes for the tie-break are the nominal costs.
    Simulated mode does no pixel work and takes the cheapest candidate.
    """
    mode = _exec_mode(mode)
    current = video if mode is ExecMode.LIVE else None
    assignments, comparisons, cand_costs = [], 0, []
    for t in subtasks:
        t = parse_subtask(t)
        cands = pool.for_subtask(t)
        if not cands:
            raise ConfigurationError(f"no operator in the pool serves {t.value}")
        cand_costs.append(tuple(op.nominal_cost_s for op in cands))
        if mode is ExecMode.LIVE:
            outputs = [executor(op, current) for op in cands]
            res = run_tournament([(o, op.nominal_cost_s) for o, op in zip(outputs, cands)], scorer, eps)
            winner, current = cands[res.winner], outputs[res.winner]
            comparisons += res.comparisons
        else:
            winner = min(cands, key=lambda op: (op.nominal_cost_s, op.id))
            comparisons += len(cands) - 1
        assignments.append((t, winner.id))
    return GreedyResult(Trajectory(tuple(assignments)), current, comparisons, tuple(cand_costs))


def execute_trajectory(video: Video, trajectory: Trajectory, pool: OperatorPool,
                       executor: Executor = run_operator) -> Video:
    out = video
    for _, op_id in trajectory.assignments:
        out = executor(pool.get(op_id), out)
    return out


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScheduleReport:
    mode: Mode
    predicted_score: QualityScore
    detected_label: DegradationLabel
    trajectory: Trajectory
    comparisons_performed: int
    predicted_cost_s: float
    wall_time_s: float | None = None
    tau: float = DEFAULT_TAU
    fallback_reason: str | None = None
    patched_subtasks: tuple[SubTask, ...] = ()

    def satisfies_routing(self) -> bool:
        """Mode/score/label invariant; a recorded fallback exempts the greedy branch."""
        s = self.predicted_score.value
        if self.mode is Mode.PASSTHROUGH:
            return not self.detected_label.any()
        if not self.detected_label.any():
            return False
        if self.mode is Mode.RETRIEVAL:
            return s >= self.tau
        return s < self.tau or self.fallback_reason is not None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "predicted_score": self.predicted_score.value,
            "detected_label": self.detected_label.to_dict(),
            "trajectory": self.trajectory.to_list(),
            "comparisons_performed": self.comparisons_performed,
            "predicted_cost_s": self.predicted_cost_s,
            "wall_time_s": self.wall_time_s,
            "tau": _json_real(self.tau),
            "fallback_reason": self.fallback_reason,
            "patched_subtasks": [t.value for t in self.patched_subtasks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ScheduleReport":
        try:
            label = DegradationLabel(**{k: bool(v) for k, v in doc["detected_label"].items()})
            return cls(
                mode=Mode(doc["mode"]),
                predicted_score=QualityScore(doc["predicted_score"]),
                detected_label=label,
                trajectory=Trajectory.from_list(doc["trajectory"]),
                comparisons_performed=int(doc["comparisons_performed"]),
                predicted_cost_s=float(doc["predicted_cost_s"]),
                wall_time_s=None if doc.get("wall_time_s") is None else float(doc["wall_time_s"]),
                tau=_real_from_json(doc.get("tau", DEFAULT_TAU)),
                fallback_reason=doc.get("fallback_reason"),
                patched_subtasks=tuple(parse_subtask(t) for t in doc.get("patched_subtasks", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed schedule report: {exc!r}") from None

    @classmethod
    def from_json(cls, text: str) -> "ScheduleReport":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise FormatError(f"report is not valid JSON: {exc}") from None


def _json_real(x: float):
    # JSON has no infinities; spell them out so the file stays standard
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _real_from_json(x) -> float:
    return float(x)


# --------------------------------------------------------------------------
# scheduling
# --------------------------------------------------------------------------

@dataclass
class Scheduler:
    """Bundles the pool, library, threshold and injectable components."""

    pool: OperatorPool
    library: RagLibrary | None = None
    tau: float = DEFAULT_TAU
    cost: CostModel = field(default_factory=CostModel)
    mode: ExecMode = ExecMode.LIVE
    top_k: int = DEFAULT_TOP_K
    embed_frames: int = DEFAULT_EMBED_FRAMES
    executor: Executor = run_operator
    scorer: Scorer | None = None
    perceiver: Callable[[Video], tuple[DegradationLabel, QualityScore]] = perceive
    embedder: Callable[[Video, int], object] | None = None

    def __post_init__(self):
        self.mode = _exec_mode(self.mode)
        if math.isnan(self.tau):
            raise ArgumentError("tau must not be NaN")
        if self.top_k < 1 or self.embed_frames < 1:
            raise ArgumentError("top_k and embed_frames must be positive")

    # each path is exposed separately so a threshold sweep can reuse them

    def analyse(self, video: Video) -> tuple[DegradationLabel, QualityScore]:
        return self.perceiver(video)

    def library_problem(self) -> str | None:
        if self.library is None:
            return "library_absent"
        if len(self.library) == 0:
            return "library_empty"
        return None

    def retrieval_path(self, video: Video, label: DegradationLabel):
        """Retrieved trajectory restricted to the detected sub-tasks.

        Detected sub-tasks the neighbour lacks, or whose operator is not in
        the pool, get the pool's cheapest operator and are listed as patched.
        """
        problem = self.library_problem()
        if problem:
            raise StateError(problem)
        n = min(self.embed_frames, video.frame_count)
        emb = (self.embedder or (lambda v, k: embed(v, k)))(video, n)
        topk = retrieve_topk(self.library, emb, self.top_k)
        found = select_trajectory(topk, self.library, label)
        assignments, patched = [], []
        for t in canonical_subtasks(label):
            op_id = found.get(t)
            if op_id is None or op_id not in self.pool or self.pool.get(op_id).sub_task is not t:
                op_id = self.pool.cheapest(t).id
                patched.append(t)
            assignments.append((t, op_id))
        traj = Trajectory(tuple(assignments))
        out = None
        if self.mode is ExecMode.LIVE:
            out = execute_trajectory(video, traj, self.pool, self.executor)
        costs = tuple(self.pool.get(op).nominal_cost_s for op in traj.operator_ids)
        return traj, out, tuple(patched), CostShape(Mode.RETRIEVAL, selected_costs=costs)

    def greedy_path(self, video: Video, label: DegradationLabel):
        res = greedy_search(video, canonical_subtasks(label), self.pool, mode=self.mode,
                            executor=self.executor, scorer=self.scorer)
        return res, CostShape(Mode.GREEDY, candidate_costs=res.candidate_costs)

    def schedule(self, video: Video) -> tuple[ScheduleReport, Video | None]:
        start = time.perf_counter()
        label, score = self.analyse(video)
        live = self.mode is ExecMode.LIVE

        def report(mode, traj, comps, shape, out, **extra):
            wall = time.perf_counter() - start if live else None
            return ScheduleReport(mode, score, label, traj, comps, predicted_cost(shape, self.cost),
                                  wall, self.tau, **extra), out

        if not label.any():
            return report(Mode.PASSTHROUGH, Trajectory(), 0, CostShape(Mode.PASSTHROUGH),
                          video if live else None)
        fallback = None
        if score.value >= self.tau:
            fallback = self.library_problem()
            if fallback is None:
                traj, out, patched, shape = self.retrieval_path(video, label)
                return report(Mode.RETRIEVAL, traj, 0, shape, out, patched_subtasks=patched)
        res, shape = self.greedy_path(video, label)
        return report(Mode.GREEDY, res.trajectory, res.comparisons, shape, res.video, fallback_reason=fallback)


def schedule(video: Video, pool: OperatorPool, lib: RagLibrary | None = None, tau: float = DEFAULT_TAU,
             cost: CostModel | None = None, mode: str | ExecMode = ExecMode.LIVE,
             **kwargs) -> tuple[ScheduleReport, Video | None]:
    return Scheduler(pool, lib, tau, cost or CostModel(), _exec_mode(mode), **kwargs).schedule(video)


# --------------------------------------------------------------------------
# threshold sweep
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    tau: float
    mean_quality: float
    mean_cost_s: float
    rho: float


def threshold_sweep(videos: Sequence[Video], taus: Sequence[float], sched: Scheduler,
                    quality: Scorer | None = None) -> list[SweepRow]:
    """Mean output quality, mean predicted cost and retrieval share per threshold.

    Each video's two paths are computed at most once and reused across
    thresholds. rho is taken over videos that reach routing (passthrough
    excluded); quality is NaN in simulated mode, which produces no output.
    """
    from .perception import score_quality

    quality = quality or (lambda v: float(score_quality(v)))
    live = sched.mode is ExecMode.LIVE
    cache: list[dict] = []
    for v in videos:
        label, score = sched.analyse(v)
        cache.append({"video": v, "label": label, "score": score.value})

    def outcome(item, path):
        if path not in item:
            v, label = item["video"], item["label"]
            if path == "pass":
                res = (predicted_cost(CostShape(Mode.PASSTHROUGH), sched.cost), v if live else None)
            elif path == "retrieval":
                _, out, _, shape = sched.retrieval_path(v, label)
                res = (predicted_cost(shape, sched.cost), out)
            else:
                g, shape = sched.greedy_path(v, label)
                res = (predicted_cost(shape, sched.cost), g.video)
            c, out = res
            item[path] = (c, quality(out) if live else math.nan)
        return item[path]

    rows = []
    have_lib = sched.library_problem() is None
    for tau in taus:
        costs, quals, routed, retrieved = [], [], 0, 0
        for item in cache:
            if not item["label"].any():
                path = "pass"
            else:
                routed += 1
                path = "retrieval" if item["score"] >= tau and have_lib else "greedy"
                retrieved += path == "retrieval"
            c, q = outcome(item, path)
            costs.append(c)
            quals.append(q)
        rho = retrieved / routed if routed else 0.0
        mq = math.fsum(quals) / len(quals) if quals else math.nan
        rows.append(SweepRow(float(tau), mq, math.fsum(costs) / len(costs) if costs else math.nan, rho))
    return rows
