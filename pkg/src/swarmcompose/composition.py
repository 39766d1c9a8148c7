"""Direct, clustered and parallel composition of per-drone services.

Every strategy produces a :class:`CompositionPlan`: a forwarding map in which
each non-gateway drone has exactly one successor and every chain of successors
ends at a gateway.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from swarmcompose.clustering import kmeans
from swarmcompose.core import Allocation, Topology


class TooFewDrones(Exception):
    """The strategy needs more non-gateway drones than the swarm has."""


class InvalidPlan(ValueError):
    pass


class Strategy(str, enum.Enum):
    DIRECT = "direct"
    CLUSTERED = "clustered"
    PARALLEL = "parallel"

    @property
    def rank(self) -> int:
        return _STRATEGY_RANK[self]


_STRATEGY_RANK = {Strategy.DIRECT: 0, Strategy.CLUSTERED: 1, Strategy.PARALLEL: 2}


@dataclass(frozen=True)
class CostWeights:
    """Proximity weights. ``alpha`` for composition, ``alpha_g`` for gateway
    re-selection during enforcement; ``1 - alpha`` weighs load."""

    alpha: float = 0.5
    alpha_g: float = 0.5
    normalize: bool = True

    def __post_init__(self):
        for name in ("alpha", "alpha_g"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


def _minmax(values: np.ndarray) -> np.ndarray:
    lo = values.min()
    span = values.max() - lo
    if span <= 0:
        return np.zeros_like(values)
    return (values - lo) / span


def weighted_cost(distances: Sequence[float], loads: Sequence[float],
                  weights: CostWeights = CostWeights(), alpha: float | None = None) -> np.ndarray:
    """Score candidates by ``alpha * dist + (1 - alpha) * load``; lower is better.

    With ``weights.normalize`` both terms are min-max scaled over the candidate
    set first, so a constant term contributes zero.
    """
    a = weights.alpha if alpha is None else alpha
    dist = np.asarray(distances, dtype=float)
    load = np.asarray(loads, dtype=float)
    if weights.normalize and dist.size:
        dist = _minmax(dist)
        load = _minmax(load)
    return a * dist + (1.0 - a) * load


def cheapest(distances: Sequence[float], loads: Sequence[float],
             weights: CostWeights = CostWeights(), alpha: float | None = None) -> int:
    """Index of the lowest ``weighted_cost``; the first one wins ties.

    Plain Python, since candidate sets are a handful of gateways or drones
    and numpy's per-call overhead dominates at that size.
    """
    a = weights.alpha if alpha is None else alpha
    dist = list(map(float, distances))
    load = list(map(float, loads))
    if not dist:
        raise ValueError("no candidates")
    if weights.normalize:
        dist = _scaled(dist)
        load = _scaled(load)
    costs = [a * d + (1.0 - a) * l for d, l in zip(dist, load)]
    return costs.index(min(costs))


def _scaled(values: list[float]) -> list[float]:
    lo = min(values)
    span = max(values) - lo
    if span <= 0:
        return [0.0] * len(values)
    return [(v - lo) / span for v in values]


def required_units(demand: float, mu: float, num_gateways: int) -> int:
    """max(|G|, ceil(total demand / mu))."""
    if mu <= 0:
        raise ValueError("service rate must be positive")
    if math.isinf(mu) or demand <= 0:
        return num_gateways
    ratio = demand / mu
    # 0.2 * 100 / 4 style products can land a hair above an integer
    units = math.ceil(ratio - 1e-9 * max(1.0, ratio))
    return max(num_gateways, units)


def cluster_count(num_devices: int, lam: float, mu: float, num_gateways: int) -> int:
    return required_units(num_devices * lam, mu, num_gateways)


def path_count(num_devices: int, lam: float, mu: float, num_gateways: int) -> int:
    return required_units(num_devices * lam, mu, num_gateways)


@dataclass(frozen=True)
class CompositionPlan:
    """Forwarding graph from entry drones to gateways.

    ``forward`` maps every drone in the plan to its successor; gateways map to
    ``None`` (the terrestrial sink). ``clusters`` holds clustered membership as
    ``(head, members...)`` tuples and ``chains`` holds parallel relay chains in
    traffic order, each ending with its gateway.
    """

    strategy: Strategy
    forward: Mapping[int, int | None]
    alpha: float = 0.5
    k: int | None = None
    cluster_heads: frozenset[int] | None = None
    clusters: tuple[tuple[int, ...], ...] | None = None
    chains: tuple[tuple[int, ...], ...] | None = None
    seed: int = 0
    paths: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        fwd = dict(sorted(self.forward.items()))
        object.__setattr__(self, "forward", MappingProxyType(fwd))
        if self.cluster_heads is not None:
            object.__setattr__(self, "cluster_heads", frozenset(self.cluster_heads))
        routes: dict[int, tuple[int, ...]] = {}
        for src in fwd:
            walk = []
            n = src
            while n not in routes:
                nxt = fwd.get(n, "missing")
                if nxt == "missing":
                    raise InvalidPlan(f"drone {n} has no entry in the forwarding map")
                walk.append(n)
                if nxt is None:
                    break
                if nxt in walk:
                    raise InvalidPlan(f"forwarding cycle through drone {nxt}")
                n = nxt
            tail = routes.get(n, ()) if n not in walk else ()
            for m in reversed(walk):
                tail = (m,) + tail
                routes[m] = tail
        paths = tuple(routes[src] for src, nxt in fwd.items() if nxt is not None)
        object.__setattr__(self, "paths", paths)

    @staticmethod
    def _route(src, fwd):
        seq = [src]
        seen = {src}
        while True:
            nxt = fwd.get(seq[-1], "missing")
            if nxt is None:
                return tuple(seq)
            if nxt == "missing":
                raise InvalidPlan(f"drone {seq[-1]} has no entry in the forwarding map")
            if nxt in seen:
                raise InvalidPlan(f"forwarding cycle through drone {nxt}")
            seen.add(nxt)
            seq.append(nxt)

    def route(self, drone_id: int) -> tuple[int, ...]:
        return self._route(drone_id, self.forward)

    @property
    def gateways(self) -> tuple[int, ...]:
        return tuple(d for d, n in self.forward.items() if n is None)

    def gateway_of(self, drone_id: int) -> int:
        return self.route(drone_id)[-1]

    def hop_counts(self) -> dict[int, int]:
        return {p[0]: len(p) - 1 for p in self.paths}

    def upstream(self) -> dict[int, list[int]]:
        ups: dict[int, list[int]] = {d: [] for d in self.forward}
        for d, n in self.forward.items():
            if n is not None:
                ups[n].append(d)
        return ups

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "alpha": self.alpha,
            "k": self.k,
            "seed": self.seed,
            "forward": {str(d): n for d, n in self.forward.items()},
            "paths": [list(p) for p in self.paths],
            "cluster_heads": None if self.cluster_heads is None else sorted(self.cluster_heads),
            "clusters": None if self.clusters is None else [list(c) for c in self.clusters],
            "chains": None if self.chains is None else [list(c) for c in self.chains],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CompositionPlan":
        def tuples(v):
            return None if v is None else tuple(tuple(x) for x in v)

        return cls(
            strategy=Strategy(data["strategy"]),
            forward={int(d): (None if n is None else int(n)) for d, n in data["forward"].items()},
            alpha=data.get("alpha", 0.5),
            k=data.get("k"),
            cluster_heads=None if data.get("cluster_heads") is None else frozenset(data["cluster_heads"]),
            clusters=tuples(data.get("clusters")),
            chains=tuples(data.get("chains")),
            seed=data.get("seed", 0),
        )


def check_plan(plan: CompositionPlan, topology: Topology) -> None:
    """Raise :class:`InvalidPlan` unless every non-gateway drone has one successor
    and reaches a gateway, and only gateways terminate."""
    gateways = {g.id for g in topology.gateways}
    for d in topology.non_gateway_drones:
        nxt = plan.forward.get(d.id)
        if nxt is None:
            raise InvalidPlan(f"drone {d.id} has no successor")
        if plan.route(d.id)[-1] not in gateways:
            raise InvalidPlan(f"drone {d.id} does not reach a gateway")
    for d, nxt in plan.forward.items():
        if nxt is None and d not in gateways:
            raise InvalidPlan(f"non-gateway drone {d} terminates a path")


def _utilization(rates: Mapping[int, float], topology: Topology, ids) -> list[float]:
    return [rates[i] / topology.drone(i).service_rate_mu for i in ids]


def _mean_mu(topology: Topology) -> float:
    return float(np.mean([d.service_rate_mu for d in topology.non_gateway_drones]))


def _gateway_forward(topology: Topology) -> dict[int, None]:
    return {g.id: None for g in topology.gateways}


def compose_direct(topology: Topology, allocation: Allocation,
                   weights: CostWeights = CostWeights(), alpha: float | None = None) -> CompositionPlan:
    """Attach every non-gateway drone straight to a gateway.

    Drones are processed in id order; each takes the gateway with the lowest
    weighted cost, and that gateway's load is updated before the next choice.
    """
    a = weights.alpha if alpha is None else alpha
    rates = allocation.drone_rates(topology)
    gws = [g.id for g in topology.gateways]
    routed = {g: 0.0 for g in gws}
    forward: dict[int, int | None] = _gateway_forward(topology)
    for d in topology.non_gateway_drones:
        dists = [topology.distance(d.id, g) for g in gws]
        loads = _utilization(routed, topology, gws)
        g = gws[cheapest(dists, loads, weights, a)]
        forward[d.id] = g
        routed[g] += rates[d.id]
    return CompositionPlan(Strategy.DIRECT, forward, alpha=a)


def _clusters_by_kmeans(topology: Topology, k: int, seed: int):
    ng = topology.non_gateway_drones
    pts = np.array([[d.position.x, d.position.y] for d in ng])
    labels, centers = kmeans(pts, k, seed=seed)
    groups = []
    for j in range(k):
        members = tuple(ng[i].id for i in np.flatnonzero(labels == j))
        groups.append((members, centers[j]))
    groups.sort(key=lambda g: g[0][0])
    return groups


def compose_clustered(topology: Topology, allocation: Allocation,
                      weights: CostWeights = CostWeights(), alpha: float | None = None,
                      k: int | None = None, seed: int = 0) -> CompositionPlan:
    """k-means the non-gateway drones, pick a gateway per cluster, then a head.

    Clusters are visited in order of their lowest member id. Gateway choice
    uses centroid distance and current gateway load; head choice uses distance
    to that gateway and the candidate's own load. Members forward to the head,
    the head forwards to the gateway.
    """
    a = weights.alpha if alpha is None else alpha
    ng = topology.non_gateway_drones
    rates = allocation.drone_rates(topology)
    gws = [g.id for g in topology.gateways]
    if k is None:
        k = required_units(sum(rates.values()), _mean_mu(topology), len(gws))
    if k > len(ng):
        raise TooFewDrones(f"{k} clusters requested but only {len(ng)} non-gateway drones")
    groups = _clusters_by_kmeans(topology, k, seed)

    routed = {g: 0.0 for g in gws}
    forward: dict[int, int | None] = _gateway_forward(topology)
    clusters = []
    for members, centroid in groups:
        cx, cy = centroid
        dists = [math.hypot(cx - topology.drone(g).position.x, cy - topology.drone(g).position.y)
                 for g in gws]
        g_star = gws[cheapest(dists, _utilization(routed, topology, gws), weights, a)]
        head_dists = [topology.distance(d, g_star) for d in members]
        head = members[cheapest(head_dists, _utilization(rates, topology, members),
                                         weights, a)]
        for m in members:
            forward[m] = head if m != head else g_star
        routed[g_star] += sum(rates[m] for m in members)
        clusters.append((head,) + tuple(m for m in members if m != head))
    return CompositionPlan(Strategy.CLUSTERED, forward, alpha=a, k=k,
                           cluster_heads=frozenset(c[0] for c in clusters),
                           clusters=tuple(clusters), seed=seed)


def compose_parallel(topology: Topology, allocation: Allocation,
                     weights: CostWeights = CostWeights(), alpha: float | None = None,
                     k: int | None = None) -> CompositionPlan:
    """Build ``k`` vertex-disjoint relay chains, each ending at a gateway.

    Each gateway first anchors one chain with its best unassigned drone. Extra
    chains (when ``k`` exceeds the gateway count) come from the cheapest
    drone-gateway pairs. Remaining drones then join one at a time, each step
    taking the cheapest (drone, chain) pair by distance to the chain's tail and
    the chain's current load.
    """
    a = weights.alpha if alpha is None else alpha
    ng = [d.id for d in topology.non_gateway_drones]
    rates = allocation.drone_rates(topology)
    gws = [g.id for g in topology.gateways]
    if k is None:
        k = required_units(sum(rates.values()), _mean_mu(topology), len(gws))
    if k > len(ng):
        raise TooFewDrones(f"{k} paths requested but only {len(ng)} non-gateway drones")

    unassigned = list(ng)
    chains: list[tuple[int, list[int]]] = []  # (gateway, members from anchor outward)
    for g in gws:
        if not unassigned:
            break
        dists = [topology.distance(d, g) for d in unassigned]
        d_star = unassigned[cheapest(dists, _utilization(rates, topology, unassigned),
                                             weights, a)]
        chains.append((g, [d_star]))
        unassigned.remove(d_star)

    if k > len(chains):
        pairs = [(d, g) for d in unassigned for g in gws]
        cost = weighted_cost([topology.distance(d, g) for d, g in pairs],
                             [rates[d] / topology.drone(d).service_rate_mu for d, _ in pairs], weights, a)
        for idx in np.argsort(cost, kind="stable"):
            if len(chains) >= k:
                break
            d, g = pairs[int(idx)]
            if d in unassigned:
                chains.append((g, [d]))
                unassigned.remove(d)

    chain_rate = [sum(rates[m] for m in members) for _, members in chains]
    while unassigned:
        pairs = [(d, p) for d in unassigned for p in range(len(chains))]
        dists = [topology.distance(d, chains[p][1][-1]) for d, p in pairs]
        loads = [chain_rate[p] / topology.drone(chains[p][1][0]).service_rate_mu for _, p in pairs]
        d, p = pairs[cheapest(dists, loads, weights, a)]
        chains[p][1].append(d)
        chain_rate[p] += rates[d]
        unassigned.remove(d)

    return _plan_from_chains(chains, topology, a, k)


def _plan_from_chains(chains, topology: Topology, alpha: float, k: int | None = None) -> CompositionPlan:
    forward: dict[int, int | None] = _gateway_forward(topology)
    seqs = []
    for g, members in chains:
        forward[members[0]] = g
        for up, down in zip(members[1:], members[:-1]):
            forward[up] = down
        seqs.append(tuple(reversed(members)) + (g,))
    return CompositionPlan(Strategy.PARALLEL, forward, alpha=alpha,
                           k=len(seqs) if k is None else k, chains=tuple(seqs))


def chains_to_plan(chains: Sequence[Sequence[int]], topology: Topology, alpha: float) -> CompositionPlan:
    """Rebuild a parallel plan from traffic-ordered chains ``(..., anchor, gateway)``."""
    return _plan_from_chains([(c[-1], list(reversed(c[:-1]))) for c in chains], topology, alpha)


def clusters_to_plan(clusters: Sequence[Sequence[int]], head_gateway: Mapping[int, int],
                     topology: Topology, alpha: float, seed: int = 0) -> CompositionPlan:
    """Rebuild a clustered plan from ``(head, members...)`` tuples."""
    forward: dict[int, int | None] = _gateway_forward(topology)
    for c in clusters:
        head = c[0]
        forward[head] = head_gateway[head]
        for m in c[1:]:
            forward[m] = head
    return CompositionPlan(Strategy.CLUSTERED, forward, alpha=alpha, k=len(clusters),
                           cluster_heads=frozenset(c[0] for c in clusters),
                           clusters=tuple(tuple(c) for c in clusters), seed=seed)


def compose(strategy: Strategy | str, topology: Topology, allocation: Allocation,
            weights: CostWeights = CostWeights(), alpha: float | None = None,
            seed: int = 0) -> CompositionPlan:
    strategy = Strategy(strategy)
    if strategy is Strategy.DIRECT:
        return compose_direct(topology, allocation, weights, alpha)
    if strategy is Strategy.CLUSTERED:
        return compose_clustered(topology, allocation, weights, alpha, seed=seed)
    return compose_parallel(topology, allocation, weights, alpha)


def with_alpha(plan: CompositionPlan, alpha: float) -> CompositionPlan:
    return replace(plan, alpha=alpha)
