"""Stability and SLA enforcement: ordered corrective edits, then scale-out or downgrade.

The controller keeps one working plan per strategy. Each cycle applies, in
order: gateway rebalancing of the direct plan, gateway rebalancing of the
clustered and parallel plans, cluster splitting, and path multiplication.
After every edit all working plans are re-evaluated and enforcement stops at
the first compliant state, returning the best compliant plan.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from swarmcompose.composition import (
    CompositionPlan,
    CostWeights,
    Strategy,
    chains_to_plan,
    clusters_to_plan,
    compose_clustered,
    compose_direct,
    cheapest,
)
from swarmcompose.core import Allocation, Position, Topology
from swarmcompose.queueing import PlanEvaluation, PlanEvaluator, QueueConfig, evaluate_plan, stability_check
from swarmcompose.selection import ALPHA_GRID, SelectionResult, SlaSpec


class NoSplitPossible(Exception):
    pass


class Edit(str, enum.Enum):
    GATEWAY_REBALANCE_DIRECT = "GatewayRebalanceDirect"
    GATEWAY_REBALANCE_AGGREGATE = "GatewayRebalanceAggregate"
    CLUSTER_SPLIT = "ClusterSplit"
    PATH_MULTIPLY = "PathMultiply"
    SCALE_OUT = "ScaleOut"
    SLA_DOWNGRADE = "SlaDowngrade"


EDIT_CYCLE = (Edit.GATEWAY_REBALANCE_DIRECT, Edit.GATEWAY_REBALANCE_AGGREGATE,
              Edit.CLUSTER_SPLIT, Edit.PATH_MULTIPLY)

_EDIT_TARGETS = {
    Edit.GATEWAY_REBALANCE_DIRECT: (Strategy.DIRECT,),
    Edit.GATEWAY_REBALANCE_AGGREGATE: (Strategy.CLUSTERED, Strategy.PARALLEL),
    Edit.CLUSTER_SPLIT: (Strategy.CLUSTERED,),
    Edit.PATH_MULTIPLY: (Strategy.PARALLEL,),
}


@dataclass(frozen=True)
class EditRecord:
    edit: Edit
    cycle: int
    applied: bool
    pre_max_rho: float | None = None
    post_max_rho: float | None = None
    pre_latency: float | None = None
    post_latency: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.edit.value, "cycle": self.cycle, "applied": self.applied,
            "pre_max_rho": self.pre_max_rho, "post_max_rho": self.post_max_rho,
            "pre_L_sla": self.pre_latency, "post_L_sla": self.post_latency, "note": self.note,
        }


@dataclass(frozen=True)
class ScaleOutSuggestion:
    added_gateways: int
    positions: tuple[Position, ...]


@dataclass(frozen=True)
class DowngradeSuggestion:
    """Either a looser latency bound that a stable plan meets, or the fraction
    of current demand the swarm can carry below ``rho_max``."""

    latency_bound: float | None = None
    demand_fraction: float | None = None


@dataclass(frozen=True)
class EnforcementOutcome:
    final_plan: CompositionPlan | None
    final_evaluation: PlanEvaluation | None
    edits: tuple[Edit, ...]
    trace: tuple[EditRecord, ...]
    compliant: bool
    cycles: int = 0
    downgrade_suggestion: DowngradeSuggestion | None = None
    scaleout_suggestion: ScaleOutSuggestion | None = None

    @property
    def stable(self) -> bool:
        return self.final_evaluation is not None and self.final_evaluation.feasible

    def to_dict(self) -> dict:
        ev = self.final_evaluation
        return {
            "compliant": self.compliant,
            "cycles": self.cycles,
            "edits": [e.value for e in self.edits],
            "trace": [r.to_dict() for r in self.trace],
            "final_plan": None if self.final_plan is None else self.final_plan.to_dict(),
            "final_L_avg": None if ev is None else ev.latency.L_avg,
            "final_L_max": None if ev is None else ev.latency.L_max,
            "final_max_rho": None if ev is None else ev.max_rho,
            "downgrade_suggestion": None if self.downgrade_suggestion is None else {
                "latency_bound": self.downgrade_suggestion.latency_bound,
                "demand_fraction": self.downgrade_suggestion.demand_fraction,
            },
            "scaleout_suggestion": None if self.scaleout_suggestion is None else {
                "added_gateways": self.scaleout_suggestion.added_gateways,
                "positions": [[p.x, p.y, p.altitude] for p in self.scaleout_suggestion.positions],
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def is_compliant(ev: PlanEvaluation, sla: SlaSpec) -> bool:
    if not ev.feasible:
        return False
    if not stability_check(ev.delays, sla.rho_max)[0]:
        return False
    return ev.latency.metric(sla.metric) <= sla.latency_bound


def rank_key(ev: PlanEvaluation, sla: SlaSpec):
    """Sort key: compliant first, then stable at rho_max, then rho < 1, then latency."""
    lat = ev.latency.metric(sla.metric) if ev.feasible else math.inf
    stable_max = ev.feasible and stability_check(ev.delays, sla.rho_max)[0]
    return (not is_compliant(ev, sla), not stable_max, not ev.feasible, lat, ev.max_rho)


@dataclass
class _Context:
    topology: Topology
    allocation: Allocation
    sla: SlaSpec
    weights: CostWeights
    config: QueueConfig
    alpha_grid: Sequence[float]
    evaluator: PlanEvaluator | None = None
    evaluated: list = field(default_factory=list)
    _direct: dict = field(default_factory=dict)
    _aggregate: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.evaluator is None:
            self.evaluator = PlanEvaluator(self.topology, self.allocation, self.config)

    def evaluate(self, plan: CompositionPlan) -> PlanEvaluation:
        ev = self.evaluator(plan)
        self.evaluated.append(ev)
        return ev

    def direct_plan(self, alpha: float) -> CompositionPlan:
        # direct assignment depends only on alpha, so later cycles reuse it
        if alpha not in self._direct:
            self._direct[alpha] = compose_direct(self.topology, self.allocation, self.weights, alpha=alpha)
        return self._direct[alpha]

    def better(self, new: PlanEvaluation, old: PlanEvaluation) -> bool:
        return rank_key(new, self.sla) < rank_key(old, self.sla)


def rebalance_gateways_direct(plan: CompositionPlan, topology: Topology, allocation: Allocation,
                              sla: SlaSpec, weights: CostWeights = CostWeights(),
                              config: QueueConfig = QueueConfig(),
                              alpha_grid: Sequence[float] = ALPHA_GRID) -> CompositionPlan:
    """Re-run direct assignment for each gateway weight on the grid; keep the
    best outcome, or ``plan`` itself if nothing is strictly better."""
    ctx = _Context(topology, allocation, sla, weights, config, alpha_grid)
    return _rebalance_direct(ctx, plan, ctx.evaluate(plan))[0]


def _rebalance_direct(ctx: _Context, plan, current: PlanEvaluation):
    if plan.strategy is not Strategy.DIRECT:
        raise ValueError("direct rebalancing needs a direct plan")
    if len(ctx.topology.gateways) < 2:
        return plan, current
    best_plan, best_ev = plan, current
    for a in ctx.alpha_grid:
        cand = ctx.direct_plan(a)
        if dict(cand.forward) == dict(best_plan.forward):
            continue
        ev = ctx.evaluate(cand)
        if ctx.better(ev, best_ev):
            best_plan, best_ev = cand, ev
    return best_plan, best_ev


def _aggregate_units(plan: CompositionPlan, rates: Mapping[int, float]):
    """(unit drone, aggregate rate) for every cluster head or chain anchor."""
    if plan.strategy is Strategy.CLUSTERED:
        return [(c[0], sum(rates[m] for m in c)) for c in plan.clusters]
    if plan.strategy is Strategy.PARALLEL:
        return [(c[-2], sum(rates[m] for m in c[:-1])) for c in plan.chains]
    raise ValueError("aggregate rebalancing needs a clustered or parallel plan")


def _reattach(plan: CompositionPlan, topology: Topology, unit_gateway: Mapping[int, int]) -> CompositionPlan:
    if plan.strategy is Strategy.CLUSTERED:
        return clusters_to_plan(plan.clusters, unit_gateway, topology, plan.alpha, plan.seed)
    chains = [c[:-1] + (unit_gateway[c[-2]],) for c in plan.chains]
    return chains_to_plan(chains, topology, plan.alpha)


def rebalance_gateways_aggregate(plan: CompositionPlan, topology: Topology, allocation: Allocation,
                                 sla: SlaSpec, weights: CostWeights = CostWeights(),
                                 config: QueueConfig = QueueConfig(),
                                 alpha_grid: Sequence[float] = ALPHA_GRID) -> CompositionPlan:
    """Move cluster heads or chain anchors between gateways; memberships stay fixed."""
    ctx = _Context(topology, allocation, sla, weights, config, alpha_grid)
    return _rebalance_aggregate(ctx, plan, ctx.evaluate(plan))[0]


def _rebalance_aggregate(ctx: _Context, plan, current: PlanEvaluation):
    topology = ctx.topology
    gws = [g.id for g in topology.gateways]
    if len(gws) < 2:
        return plan, current
    rates = ctx.evaluator.rates
    # heaviest units first so the last, smallest moves even out the gateways
    units = sorted(_aggregate_units(plan, rates), key=lambda u: (-u[1], u[0]))
    best_plan, best_ev = plan, current
    for a in ctx.alpha_grid:
        key = (plan.strategy, tuple(plan.forward.items()), a)
        cand = ctx._aggregate.get(key)
        if cand is None:
            routed = {g: 0.0 for g in gws}
            choice = {}
            for unit, rate in units:
                dists = [topology.distance(unit, g) for g in gws]
                loads = [routed[g] / topology.drone(g).service_rate_mu for g in gws]
                g = gws[cheapest(dists, loads, ctx.weights, a)]
                choice[unit] = g
                routed[g] += rate
            cand = ctx._aggregate[key] = _reattach(plan, topology, choice)
        if dict(cand.forward) == dict(best_plan.forward):
            continue
        ev = ctx.evaluate(cand)
        if ctx.better(ev, best_ev):
            best_plan, best_ev = cand, ev
    return best_plan, best_ev


def overloaded_heads(plan: CompositionPlan, ev: PlanEvaluation, rho_max: float) -> list[int]:
    return sorted(h for h in (plan.cluster_heads or ()) if ev.delays[h].rho > rho_max)


def split_cluster(plan: CompositionPlan, topology: Topology, allocation: Allocation,
                  weights: CostWeights = CostWeights(), config: QueueConfig = QueueConfig(),
                  rho_max: float = 0.95) -> CompositionPlan:
    """Raise the cluster count by one and re-cluster, if some head is overloaded.

    A head counts as overloaded when its utilization exceeds ``rho_max``.
    """
    if plan.strategy is not Strategy.CLUSTERED:
        raise ValueError("cluster splitting needs a clustered plan")
    ev = evaluate_plan(plan, topology, allocation, config)
    if not overloaded_heads(plan, ev, rho_max):
        return plan
    if plan.k >= len(topology.non_gateway_drones):
        raise NoSplitPossible(f"already {plan.k} clusters over {len(topology.non_gateway_drones)} drones")
    return compose_clustered(topology, allocation, weights, alpha=plan.alpha, k=plan.k + 1, seed=plan.seed)


def multiply_paths(plan: CompositionPlan, topology: Topology, allocation: Allocation,
                   weights: CostWeights = CostWeights()) -> CompositionPlan:
    """Cut the most utilized splittable chain in two.

    The upstream half keeps the original gateway (its last drone now forwards
    straight to it); the downstream half is re-anchored at the gateway with the
    best weighted cost under ``weights.alpha_g``.
    """
    if plan.strategy is not Strategy.PARALLEL:
        raise ValueError("path multiplication needs a parallel plan")
    rates = allocation.drone_rates(topology)
    best = None
    for idx, chain in enumerate(plan.chains):
        drones = chain[:-1]
        if len(drones) < 2:
            continue
        util = sum(rates[d] for d in drones) / topology.drone(drones[-1]).service_rate_mu
        if best is None or util > best[0]:
            best = (util, idx)
    if best is None:
        raise NoSplitPossible("every chain has a single drone")
    idx = best[1]
    chain = plan.chains[idx]
    drones, g = chain[:-1], chain[-1]
    cut = len(drones) // 2
    earlier, later = drones[:cut], drones[cut:]

    gws = [x.id for x in topology.gateways]
    routed = {x: 0.0 for x in gws}
    for i, c in enumerate(plan.chains):
        share = earlier if i == idx else c[:-1]
        routed[c[-1]] += sum(rates[d] for d in share)
    anchor = later[-1]
    dists = [topology.distance(anchor, x) for x in gws]
    loads = [routed[x] / topology.drone(x).service_rate_mu for x in gws]
    g_new = gws[cheapest(dists, loads, weights, weights.alpha_g)]

    chains = list(plan.chains)
    chains[idx] = tuple(earlier) + (g,)
    chains.insert(idx + 1, tuple(later) + (g_new,))
    return chains_to_plan(chains, topology, plan.alpha)


def recommend_scaleout_or_downgrade(topology: Topology, allocation: Allocation, sla: SlaSpec,
                                    evaluated: Sequence[PlanEvaluation],
                                    config: QueueConfig = QueueConfig(),
                                    reference: PlanEvaluation | None = None):
    """Suggest added gateways and/or a looser SLA after enforcement is exhausted.

    Returns ``(scaleout, downgrade)``; either may be ``None``. When some
    evaluated plan is stable at ``rho_max`` the downgrade is its lowest SLA
    latency and no scale-out is proposed. Otherwise the scale-out is the
    fewest extra gateways (at the swarm's mean gateway rate) that bring
    aggregate gateway utilization under ``rho_max``, and the downgrade is the
    fraction of demand the present gateways can carry.
    """
    stable = [ev for ev in evaluated
              if ev.feasible and stability_check(ev.delays, sla.rho_max)[0]]
    if stable:
        best = min(ev.latency.metric(sla.metric) for ev in stable)
        return None, DowngradeSuggestion(latency_bound=best)

    gws = topology.gateways
    mu_sum = sum(g.service_rate_mu for g in gws)
    mu_new = mu_sum / len(gws)
    rates = allocation.drone_rates(topology)
    data = sum(rates.values())
    # control packets are shorter; count their work in data-packet units
    work = data * (1.0 + config.control_fraction * config.control_size_ratio)
    needed = scaleout_count(work, mu_sum, mu_new, sla.rho_max)

    positions: tuple[Position, ...] = ()
    if reference is not None:
        hot = [d for d, nd in reference.delays.items() if nd.rho > sla.rho_max] or \
              [d for d in reference.delays]
        xs = [topology.drone(d).position for d in hot]
        centre = Position(float(np.mean([p.x for p in xs])), float(np.mean([p.y for p in xs])),
                          gws[0].position.altitude)
        positions = (centre,) * max(needed, 1)
    scale = ScaleOutSuggestion(max(needed, 1), positions)
    fraction = sla.rho_max * mu_sum / work if work > 0 else 1.0
    return scale, DowngradeSuggestion(demand_fraction=min(1.0, fraction))


def scaleout_count(work: float, mu_sum: float, mu_new: float, rho_max: float) -> int:
    """Smallest n >= 0 with work / (mu_sum + n * mu_new) < rho_max."""
    n = max(0, math.ceil((work / rho_max - mu_sum) / mu_new))
    while n > 0 and work / (mu_sum + (n - 1) * mu_new) < rho_max:
        n -= 1
    while not work / (mu_sum + n * mu_new) < rho_max:
        n += 1
    return n


def _working_set(ctx: _Context, selection: SelectionResult) -> dict[Strategy, tuple]:
    working: dict[Strategy, tuple] = {}
    for cand in selection.table:
        if cand.evaluation is None:
            continue
        ctx.evaluated.append(cand.evaluation)
        held = working.get(cand.strategy)
        if held is None or ctx.better(cand.evaluation, held[1]):
            working[cand.strategy] = (cand.plan, cand.evaluation)
    return working


def _best_compliant(working, sla):
    pool = [(plan, ev) for plan, ev in working.values() if is_compliant(ev, sla)]
    if not pool:
        return None
    return min(pool, key=lambda pe: (pe[1].latency.metric(sla.metric), pe[0].strategy.rank))


def _metric(ev: PlanEvaluation | None, sla: SlaSpec):
    return None if ev is None or not ev.feasible else ev.latency.metric(sla.metric)


def enforce(topology: Topology, allocation: Allocation, sla: SlaSpec, selection: SelectionResult,
            weights: CostWeights = CostWeights(), config: QueueConfig = QueueConfig(),
            max_cycles: int = 20, alpha_grid: Sequence[float] = ALPHA_GRID,
            evaluator: PlanEvaluator | None = None) -> EnforcementOutcome:
    """Repair a selection that produced no feasible, in-bound candidate.

    Cycles through the four edits until a compliant plan appears, a full
    cycle brings no improvement to any working plan, or ``max_cycles`` is hit.
    On exhaustion the final plan is the lowest-latency plan with every
    utilization below one (or, failing that, the least loaded plan) and a
    scale-out and/or downgrade is suggested.
    """
    ctx = _Context(topology, allocation, sla, weights, config, alpha_grid, evaluator)
    working = _working_set(ctx, selection)
    trace: list[EditRecord] = []

    def done(cycle):
        plan, ev = _best_compliant(working, sla)
        return EnforcementOutcome(plan, ev, tuple(r.edit for r in trace), tuple(trace),
                                  True, cycle)

    cycle = 0
    for cycle in range(1, max_cycles + 1):
        improved = False
        for edit in EDIT_CYCLE:
            targets = [s for s in _EDIT_TARGETS[edit] if s in working]
            if not targets:
                trace.append(EditRecord(edit, cycle, False, note="no matching plan"))
                continue
            pre = [working[s][1] for s in targets]
            notes = []
            for s in targets:
                plan, ev = working[s]
                try:
                    new_plan, new_ev = _apply(ctx, edit, plan, ev)
                except NoSplitPossible as exc:
                    notes.append(str(exc))
                    continue
                if new_plan is not plan:
                    if ctx.better(new_ev, ev):
                        improved = True
                    working[s] = (new_plan, new_ev)
            post = [working[s][1] for s in targets]
            trace.append(EditRecord(
                edit, cycle, any(a is not b for a, b in zip(pre, post)),
                pre_max_rho=min(e.max_rho for e in pre), post_max_rho=min(e.max_rho for e in post),
                pre_latency=min((m for m in (_metric(e, sla) for e in pre) if m is not None), default=None),
                post_latency=min((m for m in (_metric(e, sla) for e in post) if m is not None), default=None),
                note="; ".join(notes)))
            if _best_compliant(working, sla) is not None:
                return done(cycle)
        if not improved:
            break

    feasible = [ev for ev in ctx.evaluated if ev.feasible]
    if feasible:
        final = min(feasible, key=lambda ev: (ev.latency.metric(sla.metric), ev.plan.strategy.rank))
    elif ctx.evaluated:
        final = min(ctx.evaluated, key=lambda ev: (ev.max_rho, ev.plan.strategy.rank))
    else:
        final = None
    scale, downgrade = recommend_scaleout_or_downgrade(topology, allocation, sla, ctx.evaluated,
                                                       config, reference=final)
    if scale is not None:
        trace.append(EditRecord(Edit.SCALE_OUT, cycle, True,
                                note=f"add {scale.added_gateways} gateway(s)"))
    if downgrade is not None:
        trace.append(EditRecord(Edit.SLA_DOWNGRADE, cycle, True,
                                note=(f"latency bound {downgrade.latency_bound!r}"
                                      if downgrade.latency_bound is not None
                                      else f"demand fraction {downgrade.demand_fraction!r}")))
    return EnforcementOutcome(None if final is None else final.plan, final,
                              tuple(r.edit for r in trace), tuple(trace), False, cycle,
                              downgrade, scale)


def _apply(ctx: _Context, edit: Edit, plan: CompositionPlan, ev: PlanEvaluation):
    if edit is Edit.GATEWAY_REBALANCE_DIRECT:
        return _rebalance_direct(ctx, plan, ev)
    if edit is Edit.GATEWAY_REBALANCE_AGGREGATE:
        return _rebalance_aggregate(ctx, plan, ev)
    if edit is Edit.CLUSTER_SPLIT:
        if not overloaded_heads(plan, ev, ctx.sla.rho_max):
            return plan, ev
        new = split_cluster(plan, ctx.topology, ctx.allocation, ctx.weights, ctx.config, ctx.sla.rho_max)
        return new, ctx.evaluate(new)
    # chains are only cut while congestion persists, not to chase latency
    if stability_check(ev.delays, ctx.sla.rho_max)[0]:
        return plan, ev
    new = multiply_paths(plan, ctx.topology, ctx.allocation, ctx.weights)
    return new, ctx.evaluate(new)


@dataclass(frozen=True)
class FrameworkResult:
    """Outcome of selection followed, when needed, by enforcement."""

    selection: SelectionResult
    enforcement: EnforcementOutcome | None
    plan: CompositionPlan | None
    evaluation: PlanEvaluation | None
    compliant: bool

    @property
    def stable(self) -> bool:
        return self.evaluation is not None and self.evaluation.feasible

    @property
    def strategy(self) -> Strategy | None:
        return None if self.plan is None else self.plan.strategy


def run_framework(topology: Topology, allocation: Allocation, sla: SlaSpec,
                  weights: CostWeights = CostWeights(), config: QueueConfig = QueueConfig(),
                  seed: int = 0, max_cycles: int = 20,
                  alpha_grid: Sequence[float] = ALPHA_GRID) -> FrameworkResult:
    """Select a composition; fall back to enforcement when nothing qualifies."""
    from swarmcompose.selection import enumerate_candidates, select_composition

    evaluator = PlanEvaluator(topology, allocation, config)
    cands = enumerate_candidates(topology, allocation, weights, seed=seed)
    sel = select_composition(cands, sla, topology, allocation, config, evaluator)
    if sel.winner is not None:
        return FrameworkResult(sel, None, sel.winner.plan, sel.winner.evaluation, True)
    out = enforce(topology, allocation, sla, sel, weights, config, max_cycles, alpha_grid, evaluator)
    return FrameworkResult(sel, out, out.final_plan, out.final_evaluation, out.compliant)
