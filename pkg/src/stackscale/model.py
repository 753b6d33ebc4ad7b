"""Shared domain types for the two-tier autoscaler.

Everything here is plain data plus construction-time validation. Live
cluster state (``MicroService``, ``MacroPool``, instance/VM records) is
mutable and owned by the simulator; policies and samples are frozen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

WEIGHT_TOL = 1e-9


class ValidationError(ValueError):
    """Base class for topology and policy problems."""


class InvalidPolicy(ValidationError):
    pass


class UnknownReference(ValidationError):
    pass


class CyclicDependency(ValidationError):
    pass


class IllegalTransition(ValueError):
    pass


def clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


@dataclass(frozen=True)
class Weights:
    """Weights of cpu, memory, network and replication in the scaling score."""

    alpha: float
    beta: float
    gamma: float
    lambda_: float

    def __post_init__(self):
        parts = self.as_tuple()
        if any(not math.isfinite(w) or w < 0.0 for w in parts):
            raise InvalidPolicy(f"weights must be finite and non-negative, got {parts}")
        total = math.fsum(parts)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise InvalidPolicy(f"weights must sum to 1, got {total!r}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.alpha, self.beta, self.gamma, self.lambda_)

    @classmethod
    def normalized(cls, alpha, beta, gamma, lambda_, tol: float = 1e-3) -> "Weights":
        """Build weights, rescaling a sum that is off from 1 by at most ``tol``."""
        parts = (float(alpha), float(beta), float(gamma), float(lambda_))
        total = math.fsum(parts)
        if abs(total - 1.0) <= WEIGHT_TOL:
            return cls(*parts)
        if abs(total - 1.0) > tol or total <= 0.0:
            raise InvalidPolicy(f"weights sum to {total!r}; expected 1")
        return cls(*(p / total for p in parts))


@dataclass(frozen=True)
class UtilizationVector:
    cpu: float = 0.0
    mem: float = 0.0
    net: float = 0.0

    def __post_init__(self):
        # clamp at ingestion
        object.__setattr__(self, "cpu", clamp01(float(self.cpu)))
        object.__setattr__(self, "mem", clamp01(float(self.mem)))
        object.__setattr__(self, "net", clamp01(float(self.net)))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.cpu, self.mem, self.net)


ZERO_UTIL = UtilizationVector()


@dataclass(frozen=True)
class ReplicationSpec:
    """Desired own-replicas per replica of ``upstream_service``."""

    upstream_service: str
    target_ratio: float

    def __post_init__(self):
        if not self.upstream_service:
            raise InvalidPolicy("replication upstream must be named")
        if not (self.target_ratio > 0.0 and math.isfinite(self.target_ratio)):
            raise InvalidPolicy(f"target_ratio must be > 0, got {self.target_ratio!r}")

    def required(self, upstream_replicas: int) -> int:
        """Minimum own replicas needed for ``upstream_replicas`` upstream."""
        # guard against 0.1 * 30 == 3.0000000000000004 style round-up
        return math.ceil(self.target_ratio * upstream_replicas - 1e-9)


@dataclass(frozen=True)
class ServicePolicy:
    service_id: str
    auto_scale: bool = False
    weights: Weights = field(default_factory=lambda: Weights(0.25, 0.25, 0.25, 0.25))
    threshold_up: float = 0.7
    threshold_down: float = 0.4
    step_out: int = 1
    step_in: int = 1
    cooldown: int = 3
    min_replicas: int = 1
    max_replicas: int = 10
    replication: Optional[ReplicationSpec] = None

    def __post_init__(self):
        sid = self.service_id
        if not sid:
            raise InvalidPolicy("service_id must be non-empty")
        if not (0.0 <= self.threshold_down <= 1.0 and 0.0 <= self.threshold_up <= 1.0):
            raise InvalidPolicy(f"[{sid}] thresholds must lie in [0, 1]")
        if not self.threshold_down < self.threshold_up:
            raise InvalidPolicy(
                f"[{sid}] threshold_down ({self.threshold_down}) must be below "
                f"threshold_up ({self.threshold_up})"
            )
        if self.step_out < 1 or self.step_in < 1:
            raise InvalidPolicy(f"[{sid}] scaling steps must be >= 1")
        if self.cooldown < 0:
            raise InvalidPolicy(f"[{sid}] cooldown must be >= 0")
        if self.min_replicas < 0 or self.max_replicas < 1:
            raise InvalidPolicy(f"[{sid}] need min_replicas >= 0 and max_replicas >= 1")
        if self.min_replicas > self.max_replicas:
            raise InvalidPolicy(f"[{sid}] min_replicas exceeds max_replicas")
        if self.replication is not None and self.replication.upstream_service == sid:
            raise CyclicDependency(f"[{sid}] is pegged to itself")


@dataclass(frozen=True)
class MacroPolicy:
    pool_id: str
    vm_flavor: str
    auto_scale: bool = False
    containers_per_vm: dict = field(default_factory=dict)
    min_vms: int = 1
    max_vms: int = 10
    cooldown: int = 3
    provisioning_delay: tuple[float, float] = (50.0, 150.0)

    def __post_init__(self):
        pid = self.pool_id
        if not pid:
            raise InvalidPolicy("pool_id must be non-empty")
        if self.min_vms < 1 or self.max_vms < 1:
            raise InvalidPolicy(f"[{pid}] min_vms and max_vms must be >= 1")
        if self.min_vms > self.max_vms:
            raise InvalidPolicy(f"[{pid}] min_vms exceeds max_vms")
        if self.cooldown < 0:
            raise InvalidPolicy(f"[{pid}] cooldown must be >= 0")
        lo, hi = self.provisioning_delay
        if not (0.0 <= lo <= hi):
            raise InvalidPolicy(f"[{pid}] provisioning delay range [{lo}, {hi}] is invalid")
        for sid, cap in self.containers_per_vm.items():
            if int(cap) != cap or cap < 1:
                raise InvalidPolicy(f"[{pid}] containers_per_vm for {sid} must be >= 1")

    def __hash__(self):
        return hash((self.pool_id, self.vm_flavor, self.auto_scale,
                     tuple(sorted(self.containers_per_vm.items())),
                     self.min_vms, self.max_vms, self.cooldown, self.provisioning_delay))

    def cap_for(self, service_id: str) -> int:
        try:
            return int(self.containers_per_vm[service_id])
        except KeyError:
            raise UnknownReference(
                f"pool {self.pool_id} declares no containers_per_vm for {service_id}"
            ) from None


class State(Enum):
    PROVISIONING = "Provisioning"
    RUNNING = "Running"
    DRAINING = "Draining"
    FAILED = "Failed"
    REMOVED = "Removed"


_LEGAL = {
    State.PROVISIONING: {State.RUNNING},
    State.RUNNING: {State.DRAINING, State.FAILED},
    State.DRAINING: {State.REMOVED},
    State.FAILED: {State.REMOVED},
    State.REMOVED: set(),
}

LIVE_STATES = (State.PROVISIONING, State.RUNNING)


@dataclass
class _Lifecycle:
    id: str
    state: State
    started_at: float

    def transition(self, new: State) -> None:
        if new not in _LEGAL[self.state]:
            raise IllegalTransition(f"{self.id}: {self.state.value} -> {new.value}")
        self.state = new

    @property
    def live(self) -> bool:
        return self.state in LIVE_STATES


@dataclass
class InstanceState(_Lifecycle):
    service_id: str = ""
    host: str = ""
    # sim-time at which the instance starts absorbing load; None until Running
    absorbs_from: Optional[float] = None
    pinned: bool = False


@dataclass
class VmState(_Lifecycle):
    pool_id: str = ""
    flavor: str = ""


@dataclass
class MicroService:
    service_id: str
    pool_id: str
    policy: ServicePolicy
    container_type: str = ""
    replicas: list = field(default_factory=list)
    last_scale_tick: Optional[int] = None
    contribution_delay: float = 0.0

    def count(self, *states: State) -> int:
        return sum(1 for r in self.replicas if r.state in states)

    @property
    def live_count(self) -> int:
        return self.count(*LIVE_STATES)

    @property
    def running_count(self) -> int:
        return self.count(State.RUNNING)

    def running(self) -> list:
        return [r for r in self.replicas if r.state is State.RUNNING]


@dataclass
class MacroPool:
    pool_id: str
    policy: MacroPolicy
    vms: list = field(default_factory=list)
    last_scale_tick: Optional[int] = None

    def count(self, *states: State) -> int:
        return sum(1 for v in self.vms if v.state in states)

    @property
    def running_count(self) -> int:
        return self.count(State.RUNNING)

    @property
    def active_count(self) -> int:
        return self.count(*LIVE_STATES)

    def running(self) -> list:
        return [v for v in self.vms if v.state is State.RUNNING]


@dataclass(frozen=True)
class MetricSample:
    instance_id: str
    service_id: str
    at: float
    util: UtilizationVector


class Tier(Enum):
    MICRO = "Micro"
    MACRO = "Macro"


class Direction(Enum):
    OUT = "Out"
    IN = "In"
    NONE = "None"


class Reason(Enum):
    THRESHOLD_UP = "ThresholdUp"
    THRESHOLD_DOWN = "ThresholdDown"
    REPLICATION_REPAIR = "ReplicationRepair"
    PACKING_EXHAUSTED = "PackingExhausted"
    CAPACITY_CAP = "CapacityCap"
    COOLDOWN = "Cooldown"
    DISABLED = "Disabled"
    STEADY = "Steady"


@dataclass(frozen=True)
class ScalingDecision:
    tick: int
    service_or_pool: str
    tier: Tier
    direction: Direction
    magnitude: int
    score: float
    reason: Reason
    # replicas wanted but not placeable; feeds macro planning
    blocked: int = 0

    def __post_init__(self):
        if (self.direction is Direction.NONE) != (self.magnitude == 0):
            raise ValueError("direction None iff magnitude 0")
        if self.magnitude < 0 or self.blocked < 0:
            raise ValueError("magnitude and blocked must be non-negative")

    @classmethod
    def none(cls, tick, target, tier, score, reason, blocked=0) -> "ScalingDecision":
        return cls(tick, target, tier, Direction.NONE, 0, score, reason, blocked)


@dataclass
class Topology:
    services: dict
    pools: dict
    # upstream-first processing order
    order: list

    def upstream_of(self, service_id: str) -> Optional[str]:
        rep = self.services[service_id].policy.replication
        return rep.upstream_service if rep else None

    def services_in(self, pool_id: str) -> list:
        return [self.services[s] for s in self.order if self.services[s].pool_id == pool_id]


def topological_order(services: Iterable[MicroService]) -> list:
    """Order service ids so every upstream precedes its dependents.

    Ties keep declaration order. Raises CyclicDependency on a cycle.
    """
    services = list(services)
    ids = [s.service_id for s in services]
    upstream = {
        s.service_id: (s.policy.replication.upstream_service if s.policy.replication else None)
        for s in services
    }
    order: list = []
    done: set = set()
    for sid in ids:
        chain = []
        cur = sid
        while cur is not None and cur not in done:
            if cur in chain:
                cycle = chain[chain.index(cur):] + [cur]
                raise CyclicDependency("replication cycle: " + " -> ".join(cycle))
            chain.append(cur)
            cur = upstream.get(cur)
        for c in reversed(chain):
            done.add(c)
            order.append(c)
    return order


def validate_topology(services, pools) -> Topology:
    """Check cross-references, bounds and the replication graph.

    Policy-local invariants are already enforced when the policies are
    built; this adds everything that needs the whole topology.
    """
    services = list(services)
    pools = list(pools)
    pool_map = {}
    for p in pools:
        if p.pool_id in pool_map:
            raise InvalidPolicy(f"duplicate pool {p.pool_id}")
        if p.policy.pool_id != p.pool_id:
            raise UnknownReference(f"pool {p.pool_id} carries policy for {p.policy.pool_id}")
        pool_map[p.pool_id] = p
    svc_map = {}
    for s in services:
        if s.service_id in svc_map:
            raise InvalidPolicy(f"duplicate service {s.service_id}")
        if s.policy.service_id != s.service_id:
            raise UnknownReference(f"service {s.service_id} carries policy for {s.policy.service_id}")
        svc_map[s.service_id] = s

    for s in services:
        if s.pool_id not in pool_map:
            raise UnknownReference(f"service {s.service_id} references unknown pool {s.pool_id}")
        rep = s.policy.replication
        if rep is not None and rep.upstream_service not in svc_map:
            raise UnknownReference(
                f"service {s.service_id} is pegged to unknown service {rep.upstream_service}"
            )
        pool = pool_map[s.pool_id]
        cap = pool.policy.cap_for(s.service_id)
        live = s.live_count
        if live > s.policy.max_replicas:
            raise InvalidPolicy(
                f"service {s.service_id} has {live} replicas, above max_replicas "
                f"{s.policy.max_replicas}"
            )
        vm_ids = {v.id for v in pool.vms}
        per_vm: dict = {}
        for r in s.replicas:
            if r.state is State.PROVISIONING and not r.host:
                continue
            if r.host not in vm_ids:
                raise UnknownReference(
                    f"replica {r.id} of {s.service_id} is placed on {r.host!r}, "
                    f"not a VM of pool {s.pool_id}"
                )
            if r.live:
                per_vm[r.host] = per_vm.get(r.host, 0) + 1
        for host, n in per_vm.items():
            if n > cap:
                raise InvalidPolicy(f"VM {host} hosts {n} {s.service_id} containers, cap {cap}")

    for p in pools:
        active = p.active_count
        if active > p.policy.max_vms:
            raise InvalidPolicy(f"pool {p.pool_id} has {active} VMs, above max_vms {p.policy.max_vms}")
        if p.running_count < p.policy.min_vms:
            raise InvalidPolicy(
                f"pool {p.pool_id} has {p.running_count} running VMs, below min_vms {p.policy.min_vms}"
            )
        for sid in p.policy.containers_per_vm:
            if sid not in svc_map:
                raise UnknownReference(f"pool {p.pool_id} sets containers_per_vm for unknown {sid}")

    order = topological_order(services)
    return Topology(services=svc_map, pools=pool_map, order=order)
