"""Domain model: drones, devices, allocation, service validity and the registry."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping


class InsufficientCapacity(Exception):
    """A device could not be placed on any entry drone with spare capacity."""


class UnknownDrone(KeyError):
    pass


class Role(str, enum.Enum):
    ENTRY = "entry"
    RELAY = "relay"
    GATEWAY = "gateway"


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    altitude: float = 40.0

    def distance(self, other: "Position", use_3d: bool = False) -> float:
        dx = self.x - other.x
        dy = self.y - other.y
        if use_3d:
            dz = self.altitude - other.altitude
            return math.sqrt(dx * dx + dy * dy + dz * dz)
        return math.hypot(dx, dy)


@dataclass(frozen=True)
class Drone:
    id: int
    role: Role
    position: Position
    service_rate_mu: float
    capacity_Cd: int = 1

    def __post_init__(self):
        if not self.service_rate_mu > 0:
            raise ValueError(f"drone {self.id}: service rate must be positive")
        if self.capacity_Cd < 1:
            raise ValueError(f"drone {self.id}: capacity must be at least 1")

    @property
    def is_gateway(self) -> bool:
        return self.role is Role.GATEWAY


@dataclass(frozen=True)
class Device:
    id: int
    position: Position
    arrival_rate_lambda: float

    def __post_init__(self):
        if not self.arrival_rate_lambda > 0:
            raise ValueError(f"device {self.id}: arrival rate must be positive")


@dataclass(frozen=True)
class Topology:
    """A swarm snapshot. Drones and devices are kept sorted by id."""

    drones: tuple[Drone, ...]
    devices: tuple[Device, ...] = ()
    area: tuple[float, float] = (100.0, 100.0)

    def __post_init__(self):
        drones = tuple(sorted(self.drones, key=lambda d: d.id))
        devices = tuple(sorted(self.devices, key=lambda u: u.id))
        object.__setattr__(self, "drones", drones)
        object.__setattr__(self, "devices", devices)
        ids = [d.id for d in drones]
        if len(set(ids)) != len(ids):
            raise ValueError("drone ids must be unique")
        if len({u.id for u in devices}) != len(devices):
            raise ValueError("device ids must be unique")
        if not any(d.is_gateway for d in drones):
            raise ValueError("topology needs at least one gateway")
        if not any(d.role is Role.ENTRY for d in drones):
            raise ValueError("topology needs at least one entry drone")
        object.__setattr__(self, "_by_id", MappingProxyType({d.id: d for d in drones}))
        object.__setattr__(self, "_dist", {})

    def drone(self, drone_id: int) -> Drone:
        try:
            return self._by_id[drone_id]
        except KeyError:
            raise UnknownDrone(drone_id) from None

    def has_drone(self, drone_id: int) -> bool:
        return drone_id in self._by_id

    @property
    def gateways(self) -> tuple[Drone, ...]:
        return tuple(d for d in self.drones if d.is_gateway)

    @property
    def entry_drones(self) -> tuple[Drone, ...]:
        return tuple(d for d in self.drones if d.role is Role.ENTRY)

    @property
    def non_gateway_drones(self) -> tuple[Drone, ...]:
        return tuple(d for d in self.drones if not d.is_gateway)

    def with_devices(self, devices: Iterable[Device]) -> "Topology":
        return replace(self, devices=tuple(devices))

    def with_drones(self, drones: Iterable[Drone]) -> "Topology":
        return replace(self, drones=tuple(drones))

    def distance(self, a: int, b: int, use_3d: bool = False) -> float:
        key = (a, b, use_3d)
        d = self._dist.get(key)
        if d is None:
            d = self._dist[key] = self.drone(a).position.distance(self.drone(b).position, use_3d)
        return d

    @property
    def total_demand(self) -> float:
        return sum(u.arrival_rate_lambda for u in self.devices)


@dataclass(frozen=True)
class Allocation:
    """Device to entry-drone mapping."""

    assignment: Mapping[int, int]

    def __post_init__(self):
        object.__setattr__(self, "assignment", MappingProxyType(dict(sorted(self.assignment.items()))))
        # (topology, rates) for the last topology seen; planning calls this a lot
        object.__setattr__(self, "_rates", (None, None))

    def devices_of(self, drone_id: int) -> tuple[int, ...]:
        return tuple(u for u, d in self.assignment.items() if d == drone_id)

    def counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for d in self.assignment.values():
            out[d] = out.get(d, 0) + 1
        return out

    def drone_rates(self, topology: Topology) -> dict[int, float]:
        """Own data arrival rate (packets/s) per drone; every drone listed, zero if idle."""
        seen, cached = self._rates
        if seen is topology:
            return dict(cached)
        rates = {d.id: 0.0 for d in topology.drones}
        for dev in topology.devices:
            drone_id = self.assignment.get(dev.id)
            if drone_id is not None:
                rates[drone_id] += dev.arrival_rate_lambda
        object.__setattr__(self, "_rates", (topology, rates))
        return dict(rates)

    def respects_capacity(self, topology: Topology) -> bool:
        return all(n <= topology.drone(d).capacity_Cd for d, n in self.counts().items())


def allocate_devices(topology: Topology, radius: float | None = None,
                     use_3d: bool = False) -> Allocation:
    """Assign each device, in id order, to the nearest entry drone with spare capacity.

    Distance is measured on the ground plane unless ``use_3d`` is set; ties go to
    the lowest drone id. ``radius`` bounds how far a device may be placed.
    """
    entries = topology.entry_drones
    free = {d.id: d.capacity_Cd for d in entries}
    assignment: dict[int, int] = {}
    for dev in topology.devices:
        ground = Position(dev.position.x, dev.position.y, 0.0)
        best = None
        best_dist = math.inf
        for d in entries:
            if free[d.id] <= 0:
                continue
            dist = ground.distance(d.position, use_3d)
            if radius is not None and dist > radius:
                continue
            if dist < best_dist:
                best, best_dist = d.id, dist
        if best is None:
            raise InsufficientCapacity(f"device {dev.id} has no entry drone with spare capacity in range")
        assignment[dev.id] = best
        free[best] -= 1
    return Allocation(assignment)


@dataclass(frozen=True)
class AtomicService:
    drone_id: int
    device_links: frozenset[tuple[int, int]] = frozenset()
    relay_links: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "device_links", frozenset(self.device_links))
        object.__setattr__(self, "relay_links", frozenset(self.relay_links))
        if any(d != self.drone_id for _, d in self.device_links):
            raise ValueError("device links must terminate at the owning drone")
        if any(a != self.drone_id for a, _ in self.relay_links):
            raise ValueError("relay links must originate at the owning drone")

    @property
    def neighbors(self) -> tuple[int, ...]:
        return tuple(sorted(b for _, b in self.relay_links))


@dataclass(frozen=True)
class CompositeService:
    atomic_services: tuple[AtomicService, ...]
    plan: object = None

    @classmethod
    def from_plan(cls, plan, allocation: Allocation) -> "CompositeService":
        links: dict[int, set[tuple[int, int]]] = {}
        for dev, drone in allocation.assignment.items():
            links.setdefault(drone, set()).add((dev, drone))
        services = []
        for drone_id, nxt in sorted(plan.forward.items()):
            relay = {(drone_id, nxt)} if nxt is not None else set()
            services.append(AtomicService(drone_id, links.get(drone_id, set()), relay))
        return cls(tuple(services), plan)


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    paths: Mapping[int, tuple[int, ...] | None]
    unreachable: tuple[int, ...]

    def hops(self, device_id: int) -> int | None:
        """Drone-to-drone hop count for a device's path (device link excluded)."""
        path = self.paths.get(device_id)
        return None if path is None else len(path) - 1


def validate_composite(service: CompositeService, topology: Topology) -> ValidityReport:
    """Check that every device has a link path ending at a gateway.

    Paths are the shortest (fewest relay hops) found by breadth-first search
    over the union of the relay links.
    """
    adjacency: dict[int, set[int]] = {}
    owner: dict[int, int] = {}
    for svc in service.atomic_services:
        for a, b in svc.relay_links:
            adjacency.setdefault(a, set()).add(b)
        for dev, drone in svc.device_links:
            owner[dev] = drone
    gateways = {g.id for g in topology.gateways}

    cache: dict[int, tuple[int, ...] | None] = {}

    def route(start: int) -> tuple[int, ...] | None:
        if start in cache:
            return cache[start]
        parent = {start: None}
        queue = deque([start])
        found = None
        while queue:
            node = queue.popleft()
            if node in gateways:
                found = node
                break
            for nxt in sorted(adjacency.get(node, ())):
                if nxt not in parent:
                    parent[nxt] = node
                    queue.append(nxt)
        if found is None:
            cache[start] = None
        else:
            seq = [found]
            while parent[seq[-1]] is not None:
                seq.append(parent[seq[-1]])
            cache[start] = tuple(reversed(seq))
        return cache[start]

    paths = {}
    for dev in topology.devices:
        drone = owner.get(dev.id)
        paths[dev.id] = None if drone is None else route(drone)
    unreachable = tuple(u for u, p in paths.items() if p is None)
    return ValidityReport(not unreachable, MappingProxyType(paths), unreachable)


@dataclass(frozen=True)
class ServiceDescriptor:
    service: AtomicService
    role: Role
    neighbors: tuple[int, ...]
    gateway_reachable: bool
    service_rate_mu: float
    load: float = 0.0


@dataclass(frozen=True)
class ServiceRegistry:
    """In-process catalog of published atomic services, keyed by drone id."""

    topology: Topology
    catalog: Mapping[int, ServiceDescriptor] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "catalog", MappingProxyType(dict(sorted(self.catalog.items()))))

    def __len__(self):
        return len(self.catalog)


def publish(registry: ServiceRegistry, service: AtomicService, load: float = 0.0,
            gateway_reachable: bool | None = None) -> ServiceRegistry:
    """Return a registry with ``service`` added or overwritten."""
    if not registry.topology.has_drone(service.drone_id):
        raise UnknownDrone(service.drone_id)
    drone = registry.topology.drone(service.drone_id)
    if gateway_reachable is None:
        gw = {g.id for g in registry.topology.gateways}
        gateway_reachable = drone.is_gateway or any(n in gw for n in service.neighbors)
    desc = ServiceDescriptor(service, drone.role, service.neighbors, gateway_reachable,
                             drone.service_rate_mu, load)
    catalog = dict(registry.catalog)
    catalog[service.drone_id] = desc
    return replace(registry, catalog=catalog)


def discover(registry: ServiceRegistry, role: Role | None = None,
             gateway_reachable: bool | None = None) -> list[AtomicService]:
    out = []
    for _, desc in sorted(registry.catalog.items()):
        if role is not None and desc.role is not role:
            continue
        if gateway_reachable is not None and desc.gateway_reachable != gateway_reachable:
            continue
        out.append(desc.service)
    return out
