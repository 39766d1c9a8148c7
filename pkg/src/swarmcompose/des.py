"""Discrete-event simulation of a composition plan.

Every drone is a single server with two FIFO queues served under
non-preemptive priority (control before data). Devices emit Poisson data
streams; each drone emits a Poisson control stream at the configured
fraction of its own device data rate. Packets hop along the forwarding map
with no transit delay and leave the swarm after their gateway's service.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
import random
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Mapping

from swarmcompose.composition import CompositionPlan
from swarmcompose.core import Allocation, Topology
from swarmcompose.queueing import QueueConfig

CONTROL, DATA = 0, 1
_ARRIVAL, _CONTROL_GEN, _DEPARTURE = 0, 1, 2


@dataclass(frozen=True)
class SimConfig:
    duration: float = 120.0
    warmup: float = 10.0
    seed: int = 0
    service_distribution: str = "deterministic"

    def __post_init__(self):
        if not self.duration > self.warmup >= 0:
            raise ValueError("need duration > warmup >= 0")
        if self.service_distribution not in ("deterministic", "exponential"):
            raise ValueError("service distribution must be deterministic or exponential")


@dataclass(frozen=True)
class Summary:
    """Sample mean and variance; both ``None`` when no samples were taken."""

    count: int = 0
    mean: float | None = None
    variance: float | None = None

    @classmethod
    def of(cls, n: int, s: float, ss: float) -> "Summary":
        if n == 0:
            return cls()
        mean = s / n
        var = max(0.0, ss / n - mean * mean) if n > 1 else 0.0
        return cls(n, mean, var)


@dataclass(frozen=True)
class NodeStats:
    W_c: Summary
    W_d: Summary
    rho: float
    arrivals: int
    departures: int
    in_system: int


@dataclass(frozen=True)
class SimResult:
    per_node: Mapping[int, NodeStats]
    per_path: Mapping[int, Summary]
    L_avg: float | None
    L_max: float | None
    completed: Mapping[str, int]
    generated: Mapping[str, int]
    trace: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "per_node": {str(d): {"W_c": asdict(s.W_c), "W_d": asdict(s.W_d), "rho": s.rho,
                                  "arrivals": s.arrivals, "departures": s.departures,
                                  "in_system": s.in_system}
                         for d, s in self.per_node.items()},
            "per_path": {str(d): asdict(s) for d, s in self.per_path.items()},
            "L_avg": self.L_avg,
            "L_max": self.L_max,
            "completed": dict(self.completed),
            "generated": dict(self.generated),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def node_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["drone_id", "rho", "W_c_mean", "W_c_var", "n_c", "W_d_mean", "W_d_var", "n_d"])
        for d, s in sorted(self.per_node.items()):
            w.writerow([d, repr(s.rho), s.W_c.mean, s.W_c.variance, s.W_c.count,
                        s.W_d.mean, s.W_d.variance, s.W_d.count])
        return buf.getvalue()


def simulate(plan: CompositionPlan, topology: Topology, allocation: Allocation,
             config: SimConfig = SimConfig(), queue: QueueConfig = QueueConfig(),
             record_trace: bool = False) -> SimResult:
    """Run one replication; identical inputs give identical results.

    Waiting-time statistics cover packets that reached a node after the
    warm-up and left it before the horizon. End-to-end statistics cover data
    packets created after the warm-up that left the swarm before the horizon.
    With ``record_trace`` the result carries ``("start", t, node, cls,
    control_waiting, data_waiting)`` and ``("depart", t, node, queued)``
    tuples for invariant checks.
    """
    rng = random.Random(config.seed)
    horizon, warmup = config.duration, config.warmup
    exponential = config.service_distribution == "exponential"

    nodes = list(plan.forward)
    nxt = dict(plan.forward)
    xbar = {}
    for d in nodes:
        mu = topology.drone(d).service_rate_mu
        xbar[d] = (queue.control_size_ratio / mu, 1.0 / mu)

    dev_rate = []
    dev_node = []
    for dev in topology.devices:
        drone = allocation.assignment.get(dev.id)
        if drone is None or drone not in nxt:
            continue
        dev_rate.append(dev.arrival_rate_lambda)
        dev_node.append(drone)
    own = allocation.drone_rates(topology)
    ctrl_rate = {d: queue.control_fraction * own.get(d, 0.0) for d in nodes}

    events: list = []
    seq = 0
    for i, lam in enumerate(dev_rate):
        heapq.heappush(events, (rng.expovariate(lam), seq, _ARRIVAL, i))
        seq += 1
    for d in nodes:
        if ctrl_rate[d] > 0:
            heapq.heappush(events, (rng.expovariate(ctrl_rate[d]), seq, _CONTROL_GEN, d))
            seq += 1

    queues = {d: (deque(), deque()) for d in nodes}
    current = {d: None for d in nodes}
    busy = {d: 0.0 for d in nodes}
    arrivals = {d: 0 for d in nodes}
    departures = {d: 0 for d in nodes}
    wstats = {d: [[0, 0.0, 0.0], [0, 0.0, 0.0]] for d in nodes}
    path_stats: dict[int, list] = {}
    generated = [0, 0]
    completed = [0, 0]
    trace: list = []

    def start(node, t):
        nonlocal seq
        qc, qd = queues[node]
        if qc:
            pkt = qc.popleft()
        elif qd:
            pkt = qd.popleft()
        else:
            current[node] = None
            return
        if record_trace:
            trace.append(("start", t, node, pkt[0], len(qc), len(qd)))
        mean = xbar[node][pkt[0]]
        service = rng.expovariate(1.0 / mean) if exponential else mean
        pkt[4] = t - pkt[3]
        current[node] = pkt
        lo, hi = max(t, warmup), min(t + service, horizon)
        if hi > lo:
            busy[node] += hi - lo
        heapq.heappush(events, (t + service, seq, _DEPARTURE, node))
        seq += 1

    def arrive(node, pkt, t):
        pkt[3] = t
        arrivals[node] += 1
        queues[node][pkt[0]].append(pkt)
        if current[node] is None:
            start(node, t)

    while events:
        t, _, kind, payload = heapq.heappop(events)
        if t > horizon:
            break
        if kind == _ARRIVAL:
            node = dev_node[payload]
            generated[DATA] += 1
            # packet: [class, source drone, created, arrived at node, wait at node]
            arrive(node, [DATA, node, t, t, 0.0], t)
            heapq.heappush(events, (t + rng.expovariate(dev_rate[payload]), seq, _ARRIVAL, payload))
            seq += 1
        elif kind == _CONTROL_GEN:
            generated[CONTROL] += 1
            arrive(payload, [CONTROL, payload, t, t, 0.0], t)
            heapq.heappush(events, (t + rng.expovariate(ctrl_rate[payload]), seq, _CONTROL_GEN, payload))
            seq += 1
        else:
            node = payload
            pkt = current[node]
            departures[node] += 1
            cls = pkt[0]
            if pkt[3] >= warmup:
                acc = wstats[node][cls]
                acc[0] += 1
                acc[1] += pkt[4]
                acc[2] += pkt[4] * pkt[4]
            if record_trace:
                trace.append(("depart", t, node, len(queues[node][0]) + len(queues[node][1])))
            start(node, t)
            succ = nxt[node]
            if succ is None:
                if pkt[2] >= warmup:
                    completed[cls] += 1
                    if cls == DATA:
                        lat = t - pkt[2]
                        acc = path_stats.setdefault(pkt[1], [0, 0.0, 0.0])
                        acc[0] += 1
                        acc[1] += lat
                        acc[2] += lat * lat
            else:
                arrive(succ, pkt, t)

    window = horizon - warmup
    per_node = {}
    for d in sorted(nodes):
        in_sys = len(queues[d][0]) + len(queues[d][1]) + (current[d] is not None)
        per_node[d] = NodeStats(
            W_c=Summary.of(*wstats[d][CONTROL]), W_d=Summary.of(*wstats[d][DATA]),
            rho=min(1.0, busy[d] / window), arrivals=arrivals[d], departures=departures[d],
            in_system=in_sys)
    per_path = {src: Summary.of(*acc) for src, acc in sorted(path_stats.items())}
    n_all = sum(acc[0] for acc in path_stats.values())
    L_avg = sum(acc[1] for acc in path_stats.values()) / n_all if n_all else None
    L_max = max((s.mean for s in per_path.values()), default=None)
    return SimResult(per_node, per_path, L_avg, L_max,
                     {"control": completed[CONTROL], "data": completed[DATA]},
                     {"control": generated[CONTROL], "data": generated[DATA]},
                     tuple(trace))


def horizon_for(completions: int, slowest_rate: float, warmup: float = 10.0) -> float:
    """Duration giving roughly ``completions`` post-warm-up events of a stream at ``slowest_rate``."""
    if slowest_rate <= 0:
        return warmup + 1.0
    return warmup + math.ceil(completions / slowest_rate)
