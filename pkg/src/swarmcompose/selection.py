"""Pick the composition with the lowest SLA latency among stable candidates."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

from swarmcompose.composition import (
    CompositionPlan,
    CostWeights,
    Strategy,
    TooFewDrones,
    compose,
)
from swarmcompose.core import Allocation, Topology
from swarmcompose.queueing import PlanEvaluation, PlanEvaluator, QueueConfig

ALPHA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
ALL_STRATEGIES = (Strategy.DIRECT, Strategy.CLUSTERED, Strategy.PARALLEL)


@dataclass(frozen=True)
class SlaSpec:
    latency_bound: float
    metric: str = "avg"
    rho_max: float = 0.95

    def __post_init__(self):
        if not self.latency_bound > 0:
            raise ValueError("latency bound must be positive")
        if self.metric not in ("avg", "max"):
            raise ValueError("metric must be 'avg' or 'max'")
        if not 0 < self.rho_max < 1:
            raise ValueError("rho_max must lie in (0, 1)")


@dataclass(frozen=True)
class CandidateFailure:
    """A strategy that could not be instantiated on this topology."""

    strategy: Strategy
    alpha: float
    reason: str


@dataclass(frozen=True)
class CandidateEvaluation:
    index: int
    strategy: Strategy
    alpha: float
    plan: CompositionPlan | None
    evaluation: PlanEvaluation | None
    feasible: bool
    meets_bound: bool
    latency_sla: float | None
    infeasibility_reason: str | None = None

    @property
    def latency(self):
        return None if self.evaluation is None else self.evaluation.latency

    @property
    def max_rho(self) -> float | None:
        return None if self.evaluation is None else self.evaluation.max_rho

    def sort_key(self):
        return (self.latency_sla, self.strategy.rank, self.index)


@dataclass(frozen=True)
class SelectionResult:
    winner: CandidateEvaluation | None
    table: tuple[CandidateEvaluation, ...]

    @property
    def no_feasible(self) -> bool:
        return self.winner is None


def enumerate_candidates(topology: Topology, allocation: Allocation,
                         weights: CostWeights = CostWeights(),
                         alpha_grid: Sequence[float] | None = None, seed: int = 0,
                         strategies: Iterable[Strategy] = ALL_STRATEGIES
                         ) -> list[CompositionPlan | CandidateFailure]:
    """One plan per strategy (times each grid alpha), in Direct, Clustered, Parallel order."""
    alphas = [weights.alpha] if alpha_grid is None else list(alpha_grid)
    wanted = set(Strategy(s) for s in strategies)
    out: list[CompositionPlan | CandidateFailure] = []
    for strategy in ALL_STRATEGIES:
        if strategy not in wanted:
            continue
        for a in alphas:
            try:
                out.append(compose(strategy, topology, allocation, weights, alpha=a, seed=seed))
            except TooFewDrones as exc:
                out.append(CandidateFailure(strategy, a, f"too few drones: {exc}"))
    return out


def evaluate_candidate(index: int, candidate: CompositionPlan | CandidateFailure, sla: SlaSpec,
                       topology: Topology, allocation: Allocation,
                       config: QueueConfig = QueueConfig(),
                       evaluator: PlanEvaluator | None = None) -> CandidateEvaluation:
    if isinstance(candidate, CandidateFailure):
        return CandidateEvaluation(index, candidate.strategy, candidate.alpha, None, None,
                                   False, False, None, candidate.reason)
    if evaluator is None:
        evaluator = PlanEvaluator(topology, allocation, config)
    ev = evaluator(candidate)
    reason = None
    if not allocation.respects_capacity(topology):
        reason = "capacity exceeded"
    elif not ev.feasible:
        unstable = sorted(d for d, nd in ev.delays.items() if not nd.stable)
        reason = "unstable nodes " + ",".join(map(str, unstable))
    feasible = reason is None
    lat = ev.latency.metric(sla.metric) if feasible else None
    meets = feasible and lat <= sla.latency_bound
    return CandidateEvaluation(index, candidate.strategy, candidate.alpha, candidate, ev,
                               feasible, meets, lat, reason)


def select_composition(candidates: Sequence[CompositionPlan | CandidateFailure], sla: SlaSpec,
                       topology: Topology, allocation: Allocation,
                       config: QueueConfig = QueueConfig(),
                       evaluator: PlanEvaluator | None = None) -> SelectionResult:
    """Evaluate every candidate; the winner is the feasible one with the lowest
    SLA latency that also meets the bound. Ties favour fewer hops (Direct,
    then Clustered, then Parallel) and then the earlier candidate.

    ``winner`` is ``None`` when nothing qualifies, which is the trigger for
    enforcement.
    """
    if not candidates:
        raise ValueError("no candidates to select from")
    if evaluator is None:
        evaluator = PlanEvaluator(topology, allocation, config)
    table = tuple(evaluate_candidate(i, c, sla, topology, allocation, config, evaluator)
                  for i, c in enumerate(candidates))
    return SelectionResult(best_of(table, require_bound=True), table)


def best_of(table: Iterable[CandidateEvaluation], require_bound: bool) -> CandidateEvaluation | None:
    pool = [c for c in table if c.feasible and (c.meets_bound or not require_bound)]
    return min(pool, key=CandidateEvaluation.sort_key, default=None)


TABLE_COLUMNS = ["strategy", "alpha", "L_avg", "L_max", "feasible", "reason"]


def evaluation_table_csv(table: Iterable[CandidateEvaluation]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for c in table:
        lat = c.latency
        writer.writerow([c.strategy.value, c.alpha,
                         "" if lat is None or lat.L_avg is None else repr(lat.L_avg),
                         "" if lat is None or lat.L_max is None else repr(lat.L_max),
                         c.feasible, c.infeasibility_reason or ""])
    return buf.getvalue()
