"""Capped brute-force baselines over direct and clustered compositions."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Sequence

from swarmcompose.composition import (
    CompositionPlan,
    Strategy,
    TooFewDrones,
    _clusters_by_kmeans,
    _mean_mu,
    clusters_to_plan,
    required_units,
)
from swarmcompose.core import Allocation, Topology
from swarmcompose.queueing import PlanEvaluator, QueueConfig
from swarmcompose.selection import CandidateEvaluation, SlaSpec, best_of, evaluate_candidate

DEFAULT_CAP = 200
K_SLACK = 2


@dataclass(frozen=True)
class BruteForceResult:
    best: CandidateEvaluation | None
    candidates_examined: int
    space_size: int
    table: tuple[CandidateEvaluation, ...]

    @property
    def meets_sla(self) -> bool:
        return self.best is not None and self.best.meets_bound


def sample_indices(space: int, cap: int, seed: int) -> list[int]:
    """All of ``range(space)`` if it fits under ``cap``, else ``cap`` distinct
    uniform draws, returned in ascending order."""
    if space <= cap:
        return list(range(space))
    rng = random.Random(seed)
    if space <= 1 << 62:
        return sorted(rng.sample(range(space), cap))
    chosen: set[int] = set()
    while len(chosen) < cap:
        chosen.add(rng.randrange(space))
    return sorted(chosen)


def _decode(index: int, radices: Sequence[int]) -> list[int]:
    digits = []
    for r in radices:
        index, rem = divmod(index, r)
        digits.append(rem)
    return digits


def _finish(evals, space) -> BruteForceResult:
    table = tuple(evals)
    return BruteForceResult(best_of(table, require_bound=False), len(table), space, table)


def brute_force_direct(topology: Topology, allocation: Allocation, sla: SlaSpec,
                       cap: int = DEFAULT_CAP, seed: int = 0,
                       config: QueueConfig = QueueConfig()) -> BruteForceResult:
    """Score drone-to-gateway assignment maps; the best is the feasible map with
    the lowest SLA latency (the bound is not required of it)."""
    gws = [g.id for g in topology.gateways]
    drones = [d.id for d in topology.non_gateway_drones]
    space = len(gws) ** len(drones)
    evaluator = PlanEvaluator(topology, allocation, config)
    evals = []
    for i, idx in enumerate(sample_indices(space, cap, seed)):
        forward: dict[int, int | None] = {g: None for g in gws}
        for d, digit in zip(drones, _decode(idx, [len(gws)] * len(drones))):
            forward[d] = gws[digit]
        plan = CompositionPlan(Strategy.DIRECT, forward, alpha=float("nan"))
        evals.append(evaluate_candidate(i, plan, sla, topology, allocation, config, evaluator))
    return _finish(evals, space)


def brute_force_clustered(topology: Topology, allocation: Allocation, sla: SlaSpec,
                          cap: int = DEFAULT_CAP, seed: int = 0,
                          config: QueueConfig = QueueConfig(),
                          k_range: Sequence[int] | None = None) -> BruteForceResult:
    """Score (k, head per cluster, gateway per cluster) combinations.

    Clusters for each k come from the same seeded k-means as the heuristic.
    By default k runs from the gateway count up to two above the demand-based
    cluster count, limited by the number of non-gateway drones.
    """
    gws = [g.id for g in topology.gateways]
    ng = topology.non_gateway_drones
    if k_range is None:
        rates = allocation.drone_rates(topology)
        k_formula = required_units(sum(rates.values()), _mean_mu(topology), len(gws))
        k_range = range(len(gws), min(len(ng), k_formula + K_SLACK) + 1)
    k_range = list(k_range)
    if not k_range or min(k_range) > len(ng):
        raise TooFewDrones(f"no cluster count fits {len(ng)} non-gateway drones")

    blocks = []
    for k in k_range:
        if k > len(ng):
            continue
        groups = [members for members, _ in _clusters_by_kmeans(topology, k, seed)]
        radices = []
        for members in groups:
            radices += [len(members), len(gws)]
        blocks.append((k, groups, radices, math.prod(radices)))
    space = sum(b[3] for b in blocks)

    evaluator = PlanEvaluator(topology, allocation, config)
    evals = []
    for i, idx in enumerate(sample_indices(space, cap, seed)):
        for k, groups, radices, size in blocks:
            if idx < size:
                break
            idx -= size
        digits = _decode(idx, radices)
        clusters, head_gateway = [], {}
        for j, members in enumerate(groups):
            head = members[digits[2 * j]]
            head_gateway[head] = gws[digits[2 * j + 1]]
            clusters.append((head,) + tuple(m for m in members if m != head))
        plan = clusters_to_plan(clusters, head_gateway, topology, alpha=float("nan"), seed=seed)
        evals.append(evaluate_candidate(i, plan, sla, topology, allocation, config, evaluator))
    return _finish(evals, space)
