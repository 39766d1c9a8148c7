"""Two-class non-preemptive priority M/G/1 analysis of a composition plan.

Each drone is one queue. Control packets (high priority) and data packets
(low priority) arrive as Poisson streams; the per-node delays are summed
along each source-to-gateway path.

Two residual-time conventions are supported:

``paper``
    R = (lc * E[Xc^2] + ld * E[Xd^2]) / (2 (1 - rho)); used to reproduce the
    experiment curves.
``standard``
    R = (lc * E[Xc^2] + ld * E[Xd^2]) / 2, the textbook mean residual work;
    this is what the simulator converges to.

Both share Wc = R / (1 - rho_c) and Wd = R / ((1 - rho_c)(1 - rho)).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping

from swarmcompose.composition import CompositionPlan
from swarmcompose.core import Allocation, Topology

MODES = ("paper", "standard")
DISTRIBUTIONS = ("deterministic", "exponential")


class UnstablePath(ArithmeticError):
    """A path crosses a node with utilization >= 1; its latency is unbounded."""


@dataclass(frozen=True)
class QueueConfig:
    mode: str = "paper"
    distribution: str = "deterministic"
    control_fraction: float = 0.05
    data_packet_bits: int = 8192
    control_packet_bits: int = 256

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"distribution must be one of {DISTRIBUTIONS}")
        if self.control_fraction < 0:
            raise ValueError("control fraction must be non-negative")

    @property
    def control_size_ratio(self) -> float:
        return self.control_packet_bits / self.data_packet_bits

    def moments(self, mu: float) -> tuple[float, float, float, float]:
        """(xbar_c, x2_c, xbar_d, x2_d) for a drone whose data-packet rate is ``mu``."""
        xd = 1.0 / mu
        xc = self.control_size_ratio / mu
        factor = 1.0 if self.distribution == "deterministic" else 2.0
        return xc, factor * xc * xc, xd, factor * xd * xd


@dataclass(frozen=True)
class NodeQueueInput:
    lambda_c: float
    lambda_d: float
    xbar_c: float
    xbar_d: float
    x2_c: float
    x2_d: float

    def __post_init__(self):
        vals = (self.lambda_c, self.lambda_d, self.xbar_c, self.xbar_d, self.x2_c, self.x2_d)
        if any(v < 0 for v in vals):
            raise ValueError("queue inputs must be non-negative")
        tol = 1e-12
        if self.x2_c < self.xbar_c ** 2 * (1 - tol) or self.x2_d < self.xbar_d ** 2 * (1 - tol):
            raise ValueError("second moment below squared mean")


@dataclass(frozen=True)
class NodeDelay:
    """Per-node delays in seconds. Delay fields are ``None`` when unstable."""

    rho: float
    rho_c: float
    stable: bool
    R: float | None = None
    W_c: float | None = None
    W_d: float | None = None
    D_c: float | None = None
    D_d: float | None = None

    def sojourn(self, traffic_class: str) -> float | None:
        return self.D_c if traffic_class == "c" else self.D_d


def node_delay(inp: NodeQueueInput, mode: str = "paper") -> NodeDelay:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    rho_c = inp.lambda_c * inp.xbar_c
    rho = rho_c + inp.lambda_d * inp.xbar_d
    if rho >= 1.0:
        return NodeDelay(rho=rho, rho_c=rho_c, stable=False)
    work = inp.lambda_c * inp.x2_c + inp.lambda_d * inp.x2_d
    R = work / 2.0 if mode == "standard" else work / (2.0 * (1.0 - rho))
    W_c = R / (1.0 - rho_c)
    W_d = R / ((1.0 - rho_c) * (1.0 - rho))
    return NodeDelay(rho=rho, rho_c=rho_c, stable=True, R=R, W_c=W_c, W_d=W_d,
                     D_c=W_c + inp.xbar_c, D_d=W_d + inp.xbar_d)


def node_flows(plan: CompositionPlan, own: Mapping[int, float]) -> dict[int, float]:
    """Total rate through each node: own traffic plus everything forwarded into it."""
    fwd = plan.forward
    depth: dict[int, int] = {}
    for d in fwd:
        chain = []
        n = d
        while n not in depth and fwd[n] is not None:
            chain.append(n)
            n = fwd[n]
        base = depth.setdefault(n, 0)
        for i, m in enumerate(reversed(chain), start=1):
            depth[m] = base + i
    total = {d: own.get(d, 0.0) for d in fwd}
    for d in sorted(fwd, key=depth.__getitem__, reverse=True):
        nxt = fwd[d]
        if nxt is not None:
            total[nxt] += total[d]
    return total


def derive_node_arrivals(plan: CompositionPlan, topology: Topology, allocation: Allocation,
                         config: QueueConfig = QueueConfig()) -> dict[int, NodeQueueInput]:
    """Per-drone two-class arrival rates and service moments induced by ``plan``.

    Each drone emits control packets at ``config.control_fraction`` times its
    own device data rate; both classes follow the data's forwarding path.
    """
    return PlanEvaluator(topology, allocation, config).arrivals(plan)


def path_latency(path, node_delays: Mapping[int, NodeDelay], traffic_class: str = "d") -> float:
    total = 0.0
    for node in path:
        delay = node_delays[node]
        if not delay.stable:
            raise UnstablePath(f"node {node} has utilization {delay.rho:.4f}")
        total += delay.sojourn(traffic_class)
    return total


@dataclass(frozen=True)
class CompositionLatency:
    """End-to-end data latency. ``L_avg``/``L_max`` are ``None`` when infeasible."""

    per_path: Mapping[tuple[int, ...], float | None]
    omega: Mapping[tuple[int, ...], float]
    L_avg: float | None
    L_max: float | None
    feasible: bool
    max_rho: float

    def metric(self, name: str) -> float | None:
        return self.L_avg if name == "avg" else self.L_max


def composition_latency(plan: CompositionPlan, node_delays: Mapping[int, NodeDelay],
                        source_rates: Mapping[int, float]) -> CompositionLatency:
    """Aggregate node delays over the plan's traffic-carrying paths.

    Path weights are proportional to the data rate each source injects.
    Sources with no traffic carry zero weight and are left out.
    """
    carrying = [p for p in plan.paths if source_rates.get(p[0], 0.0) > 0]
    total = sum(source_rates[p[0]] for p in carrying)
    omega = {p: source_rates[p[0]] / total for p in carrying} if total > 0 else {}
    per_path: dict[tuple[int, ...], float | None] = {}
    for p in carrying:
        try:
            per_path[p] = path_latency(p, node_delays, "d")
        except UnstablePath:
            per_path[p] = None
    max_rho = max((nd.rho for nd in node_delays.values()), default=0.0)
    feasible = all(nd.stable for nd in node_delays.values())
    if not feasible:
        return CompositionLatency(per_path, omega, None, None, False, max_rho)
    if not carrying:
        return CompositionLatency(per_path, omega, 0.0, 0.0, True, max_rho)
    L_avg = sum(omega[p] * per_path[p] for p in carrying)
    L_max = max(per_path[p] for p in carrying)
    # float summation can leave L_avg a few ulps above L_max on one path
    L_avg = min(L_avg, L_max)
    return CompositionLatency(per_path, omega, L_avg, L_max, True, max_rho)


def stability_check(node_delays: Mapping[int, NodeDelay], rho_max: float) -> tuple[bool, list[int]]:
    offenders = sorted(d for d, nd in node_delays.items() if not nd.rho <= rho_max)
    return not offenders, offenders


@dataclass(frozen=True)
class PlanEvaluation:
    plan: CompositionPlan
    inputs: Mapping[int, NodeQueueInput]
    delays: Mapping[int, NodeDelay]
    latency: CompositionLatency

    @property
    def feasible(self) -> bool:
        return self.latency.feasible

    @property
    def max_rho(self) -> float:
        return self.latency.max_rho


class PlanEvaluator:
    """Evaluates plans on one topology and allocation, memoising by forwarding map."""

    def __init__(self, topology: Topology, allocation: Allocation, config: QueueConfig = QueueConfig()):
        self.topology = topology
        self.allocation = allocation
        self.config = config
        self.rates = allocation.drone_rates(topology)
        self._moments = {d.id: config.moments(d.service_rate_mu) for d in topology.drones}
        self._cache: dict = {}
        self.calls = 0

    def arrivals(self, plan: CompositionPlan) -> dict[int, NodeQueueInput]:
        own_c = {d: self.config.control_fraction * r for d, r in self.rates.items()}
        flow_d = node_flows(plan, self.rates)
        flow_c = node_flows(plan, own_c)
        out = {}
        for d in plan.forward:
            xc, x2c, xd, x2d = self._moments[d]
            out[d] = NodeQueueInput(flow_c[d], flow_d[d], xc, xd, x2c, x2d)
        return out

    def __call__(self, plan: CompositionPlan) -> "PlanEvaluation":
        key = tuple(plan.forward.items())
        hit = self._cache.get(key)
        if hit is not None:
            return hit if hit.plan is plan else PlanEvaluation(plan, hit.inputs, hit.delays, hit.latency)
        self.calls += 1
        inputs = self.arrivals(plan)
        delays = {d: node_delay(inp, self.config.mode) for d, inp in inputs.items()}
        latency = composition_latency(plan, delays, self.rates)
        ev = PlanEvaluation(plan, inputs, delays, latency)
        self._cache[key] = ev
        return ev


def evaluate_plan(plan: CompositionPlan, topology: Topology, allocation: Allocation,
                  config: QueueConfig = QueueConfig()) -> PlanEvaluation:
    return PlanEvaluator(topology, allocation, config)(plan)


DELAY_COLUMNS = ["drone_id", "rho", "rho_c", "R", "W_c", "W_d", "D_c", "D_d", "stable"]


def delay_table_csv(node_delays: Mapping[int, NodeDelay]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DELAY_COLUMNS)
    for d, nd in sorted(node_delays.items()):
        def fmt(v):
            return "inf" if v is None else repr(v)
        writer.writerow([d, repr(nd.rho), repr(nd.rho_c), fmt(nd.R), fmt(nd.W_c), fmt(nd.W_d),
                         fmt(nd.D_c), fmt(nd.D_d), nd.stable])
    return buf.getvalue()
