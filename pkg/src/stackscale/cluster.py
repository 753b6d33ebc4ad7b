"""Deterministic discrete-event simulator of VM pools and their containers.

The simulator is the "cloud" the engine actuates against. It owns the live
:class:`MicroService` / :class:`MacroPool` objects, applies provisioning
delays drawn from seeded streams, emits metric beats and hands control to a
controller on every control tick. A run is a pure function of the topology,
the scheduled workload and the seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .events import EventKind, EventQueue, SimEvent
from .model import (
    InstanceState,
    MacroPool,
    MicroService,
    State,
    Topology,
    VmState,
)
from .workload import LoadModel, admits, beat_samples

log = logging.getLogger(__name__)

EPS = 1e-9


class NoCapacity(RuntimeError):
    pass


class AtCapacity(RuntimeError):
    pass


class UnknownInstance(KeyError):
    pass


class RuntimeFault(RuntimeError):
    """An internal invariant of the simulated cluster was violated."""


@dataclass(frozen=True)
class VmFlavor:
    name: str
    cpu_capacity: float
    mem_capacity: float  # MB
    net_capacity: float

    def __post_init__(self):
        if min(self.cpu_capacity, self.mem_capacity, self.net_capacity) <= 0:
            raise ValueError(f"flavor {self.name}: capacities must be > 0")


@dataclass(frozen=True)
class ContainerType:
    name: str
    mem: float  # MB
    cpu_quota: float  # fraction of the host VM's CPU
    network: str = "overlay"

    def __post_init__(self):
        if not 0.0 < self.cpu_quota <= 1.0:
            raise ValueError(f"container type {self.name}: cpu_quota must be in (0, 1]")
        if self.mem <= 0:
            raise ValueError(f"container type {self.name}: mem must be > 0")


# OpenStack flavors and the container types of the IoT deployment.
FLAVORS = {
    "m1.small": VmFlavor("m1.small", 1, 2048, 1),
    "m1.medium": VmFlavor("m1.medium", 2, 4096, 2),
    "m1.large": VmFlavor("m1.large", 4, 8192, 4),
    "m1.xlarge": VmFlavor("m1.xlarge", 8, 16384, 8),
}

CONTAINER_TYPES = {
    "Type_a": ContainerType("Type_a", 512, 0.25, "dedicated overlay"),
    "Type_b": ContainerType("Type_b", 1250, 0.33, "dedicated overlay"),
    "Type_c": ContainerType("Type_c", 3072, 0.50, "dedicated overlay"),
}


@dataclass
class VmLoad:
    """Live containers on one VM, summarised for placement checks."""

    by_service: dict = field(default_factory=dict)
    quota: float = 0.0
    mem: float = 0.0

    def add(self, service_id: str, ctype: ContainerType) -> None:
        self.by_service[service_id] = self.by_service.get(service_id, 0) + 1
        self.quota += ctype.cpu_quota
        self.mem += ctype.mem


def fits(load: VmLoad, flavor: VmFlavor, ctype: ContainerType, service_id: str, per_vm_cap: int) -> int:
    """How many more ``service_id`` containers this VM can take."""
    by_cap = per_vm_cap - load.by_service.get(service_id, 0)
    by_cpu = math.floor((1.0 - load.quota + EPS) / ctype.cpu_quota)
    by_mem = math.floor((flavor.mem_capacity - load.mem + EPS) / ctype.mem)
    return max(0, min(by_cap, by_cpu, by_mem))


def place_container(
    pool: MacroPool,
    ctype: ContainerType,
    per_vm_cap: int,
    *,
    service_id: str,
    loads: Mapping[str, VmLoad],
    flavors: Mapping[str, VmFlavor] = FLAVORS,
) -> str:
    """Pick the Running VM with the fewest ``service_id`` containers that has room.

    Ties go to the earliest-created VM. Raises NoCapacity if nothing fits.
    """
    best = None
    best_n = None
    for vm in pool.vms:
        if vm.state is not State.RUNNING:
            continue
        load = loads.get(vm.id) or VmLoad()
        if fits(load, flavors[vm.flavor], ctype, service_id, per_vm_cap) < 1:
            continue
        n = load.by_service.get(service_id, 0)
        if best_n is None or n < best_n:
            best, best_n = vm.id, n
    if best is None:
        raise NoCapacity(f"no VM in {pool.pool_id} can host another {service_id} container")
    return best


@dataclass(frozen=True)
class TraceRecord:
    time_s: float
    kind: str
    entity_id: str
    detail: str = ""

    def line(self) -> str:
        return f"{self.time_s:.6f}\t{self.kind}\t{self.entity_id}\t{self.detail}"


@dataclass(frozen=True)
class ProvisioningRecord:
    kind: str  # "vm" or "container"
    entity_id: str
    target: str
    requested_s: float
    ready_s: float

    @property
    def duration_s(self) -> float:
        return self.ready_s - self.requested_s


@dataclass(frozen=True)
class SimTiming:
    beat_interval: float = 15.0
    control_interval: float = 60.0
    container_delay: tuple = (0.05, 0.5)

    def __post_init__(self):
        if self.beat_interval <= 0 or self.control_interval <= 0:
            raise ValueError("beat and control intervals must be > 0")
        lo, hi = self.container_delay
        if not 0 <= lo <= hi:
            raise ValueError("container delay range is invalid")


@dataclass(frozen=True)
class CountSnapshot:
    tick: int
    time_s: float
    service_id: str
    pool_id: str
    containers: int
    vms: int


Controller = Callable[["ClusterSim", float, int], object]


class ClusterSim:
    """The simulated cloud.

    ``controller`` is called as ``controller(sim, now, tick)`` on every
    control tick, after failed instances are reaped and counts recorded.
    """

    def __init__(
        self,
        topology: Topology,
        *,
        seed: int = 0,
        load_model: Optional[LoadModel] = None,
        timing: SimTiming = SimTiming(),
        container_types: Mapping[str, ContainerType] = CONTAINER_TYPES,
        flavors: Mapping[str, VmFlavor] = FLAVORS,
        controller: Optional[Controller] = None,
    ):
        self.topology = topology
        self.services: dict = topology.services
        self.pools: dict = topology.pools
        self.load_model = load_model
        self.timing = timing
        self.container_types = dict(container_types)
        self.flavors = dict(flavors)
        self.controller = controller

        streams = np.random.SeedSequence(seed).spawn(4)
        self.rng_workload, self.rng_noise, self.rng_vm, self.rng_container = (
            np.random.default_rng(s) for s in streams
        )

        self.now = 0.0
        self.queue = EventQueue()
        self.trace: list = []
        self.metrics: list = []  # drained by the engine
        self.provisioning: list = []
        self.snapshots: list = []
        self.tick_index = 0
        self.rejected_sensors = 0
        self.last_departure_s: Optional[float] = None

        self._pending: dict = {}  # entity id -> request time
        self._doomed: set = set()
        self._instances: dict = {}
        self._seq: dict = {}
        self._started = False

        for svc in self.services.values():
            if svc.container_type not in self.container_types:
                raise KeyError(f"service {svc.service_id}: unknown container type {svc.container_type!r}")
            for r in svc.replicas:
                self._instances[r.id] = r
        for pool in self.pools.values():
            for vm in pool.vms:
                if vm.flavor not in self.flavors:
                    raise KeyError(f"VM {vm.id}: unknown flavor {vm.flavor!r}")
        self.audit()

    # -- bookkeeping ---------------------------------------------------

    def _next_id(self, prefix: str) -> str:
        n = self._seq.get(prefix, 0)
        while True:
            cand = f"{prefix}-{n}"
            n += 1
            if cand not in self._instances and not self._vm_exists(cand):
                break
        self._seq[prefix] = n
        return cand

    def _vm_exists(self, vm_id: str) -> bool:
        return any(v.id == vm_id for p in self.pools.values() for v in p.vms)

    def _record(self, kind: str, entity: str, detail: str = "") -> None:
        self.trace.append(TraceRecord(self.now, kind, entity, detail))

    def vm_loads(self) -> dict:
        loads: dict = {}
        for svc in self.services.values():
            ctype = self.container_types[svc.container_type]
            for r in svc.replicas:
                if r.live:
                    loads.setdefault(r.host, VmLoad()).add(svc.service_id, ctype)
        return loads

    def find_vm(self, vm_id: str) -> VmState:
        for p in self.pools.values():
            for v in p.vms:
                if v.id == vm_id:
                    return v
        raise KeyError(vm_id)

    @property
    def driver(self) -> Optional[MicroService]:
        if self.load_model is None:
            return None
        return self.services.get(self.load_model.driver)

    @property
    def live_sensors(self) -> int:
        d = self.driver
        return d.live_count if d is not None else 0

    # -- capacity -------------------------------------------------------

    def packing_headroom(self, service_id: str) -> int:
        svc = self.services[service_id]
        pool = self.pools[svc.pool_id]
        cap = pool.policy.cap_for(service_id)
        ctype = self.container_types[svc.container_type]
        loads = self.vm_loads()
        return sum(
            fits(loads.get(vm.id) or VmLoad(), self.flavors[vm.flavor], ctype, service_id, cap)
            for vm in pool.running()
        )

    # -- actuation -------------------------------------------------------

    def provision_vm(self, pool_id: str) -> VmState:
        pool = self.pools[pool_id]
        pol = pool.policy
        if pool.active_count >= pol.max_vms:
            raise AtCapacity(f"pool {pool_id} is at max_vms={pol.max_vms}")
        lo, hi = pol.provisioning_delay
        delay = lo if lo == hi else float(self.rng_vm.uniform(lo, hi))
        vm = VmState(self._next_id(f"{pool_id}-vm"), State.PROVISIONING, self.now,
                     pool_id=pool_id, flavor=pol.vm_flavor)
        pool.vms.append(vm)
        self._pending[vm.id] = self.now
        self.queue.push(SimEvent(self.now + delay, EventKind.PROVISION_VM_DONE, {"vm": vm.id}))
        self._record("ProvisionVm", vm.id, f"pool={pool_id} delay={delay:.6f}")
        return vm

    def provision_container(self, service_id: str, vm_id: str) -> InstanceState:
        svc = self.services[service_id]
        lo, hi = self.timing.container_delay
        delay = lo if lo == hi else float(self.rng_container.uniform(lo, hi))
        inst = InstanceState(self._next_id(service_id), State.PROVISIONING, self.now,
                             service_id=service_id, host=vm_id)
        svc.replicas.append(inst)
        self._instances[inst.id] = inst
        self._pending[inst.id] = self.now
        self.queue.push(
            SimEvent(self.now + delay, EventKind.PROVISION_CONTAINER_DONE, {"instance": inst.id})
        )
        self._record("ProvisionContainer", inst.id, f"host={vm_id} delay={delay:.6f}")
        return inst

    def place(self, service_id: str) -> str:
        svc = self.services[service_id]
        pool = self.pools[svc.pool_id]
        return place_container(
            pool,
            self.container_types[svc.container_type],
            pool.policy.cap_for(service_id),
            service_id=service_id,
            loads=self.vm_loads(),
            flavors=self.flavors,
        )

    def scale_out(self, service_id: str, n: int) -> list:
        return [self.provision_container(service_id, self.place(service_id)) for _ in range(n)]

    def _remove_instance(self, inst: InstanceState) -> None:
        inst.transition(State.DRAINING)
        inst.transition(State.REMOVED)
        self._record("RemoveContainer", inst.id, f"host={inst.host}")

    def scale_in(self, service_id: str, n: int) -> list:
        """Drain and remove the ``n`` newest Running replicas."""
        victims = [r for r in self.services[service_id].running() if not r.pinned][::-1][:n]
        for r in victims:
            self._remove_instance(r)
        return victims

    def remove_vm(self, vm_id: str) -> None:
        vm = self.find_vm(vm_id)
        if vm_id in self.vm_loads():
            raise RuntimeFault(f"refusing to remove non-empty VM {vm_id}")
        vm.transition(State.DRAINING)
        vm.transition(State.REMOVED)
        self._record("RemoveVm", vm_id, f"pool={vm.pool_id}")

    def inject_failure(self, instance_id: str, at: float) -> None:
        inst = self._instances.get(instance_id)
        if inst is None or inst.state is not State.RUNNING or instance_id in self._doomed:
            raise UnknownInstance(instance_id)
        if at < self.now:
            raise ValueError("cannot schedule a failure in the past")
        self._doomed.add(instance_id)
        self.queue.push(SimEvent(at, EventKind.INSTANCE_FAILURE, {"instance": instance_id}))

    def inject_service_failure(self, service_id: str, at: float) -> None:
        """Kill whichever replica of ``service_id`` is newest when ``at`` comes."""
        if service_id not in self.services:
            raise UnknownInstance(service_id)
        if at < self.now:
            raise ValueError("cannot schedule a failure in the past")
        self.queue.push(SimEvent(at, EventKind.INSTANCE_FAILURE, {"service": service_id}))

    def schedule(self, events) -> None:
        self.queue.extend(events)

    # -- event handlers ---------------------------------------------------

    def _on_vm_done(self, ev: SimEvent) -> None:
        vm = self.find_vm(ev.payload["vm"])
        vm.transition(State.RUNNING)
        req = self._pending.pop(vm.id)
        self.provisioning.append(ProvisioningRecord("vm", vm.id, vm.pool_id, req, self.now))
        self._record(ev.kind.value, vm.id, f"pool={vm.pool_id} took={self.now - req:.6f}")

    def _on_container_done(self, ev: SimEvent) -> None:
        inst = self._instances[ev.payload["instance"]]
        inst.transition(State.RUNNING)
        svc = self.services[inst.service_id]
        inst.absorbs_from = self.now + svc.contribution_delay
        req = self._pending.pop(inst.id)
        self.provisioning.append(
            ProvisioningRecord("container", inst.id, inst.service_id, req, self.now)
        )
        self._record(ev.kind.value, inst.id, f"service={inst.service_id} took={self.now - req:.6f}")

    def _on_failure(self, ev: SimEvent) -> None:
        if "service" in ev.payload:
            running = self.services[ev.payload["service"]].running()
            if not running:
                self._record(ev.kind.value, ev.payload["service"], "ignored no-running-replica")
                return
            ev = SimEvent(ev.at, ev.kind, {"instance": running[-1].id})
        iid = ev.payload["instance"]
        inst = self._instances[iid]
        self._doomed.discard(iid)
        if inst.state is not State.RUNNING:
            self._record(ev.kind.value, iid, f"ignored state={inst.state.value}")
            return
        inst.transition(State.FAILED)
        self._record(ev.kind.value, iid, f"service={inst.service_id}")

    def _on_arrival(self, ev: SimEvent) -> None:
        drv = self.driver
        if drv is None:
            self._record(ev.kind.value, "-", "ignored no-driver")
            return
        ok = drv.live_count < drv.policy.max_replicas and admits(
            self.services, self.live_sensors, self.load_model
        )
        vm_id = None
        if ok:
            try:
                vm_id = self.place(drv.service_id)
            except NoCapacity:
                ok = False
        if not ok:
            self.rejected_sensors += 1
            self._record(ev.kind.value, drv.service_id, "rejected")
            return
        inst = self.provision_container(drv.service_id, vm_id)
        self._record(ev.kind.value, inst.id, "accepted")

    def _on_departure(self, ev: SimEvent) -> None:
        drv = self.driver
        candidates = [r for r in drv.running() if not r.pinned] if drv else []
        if not candidates:
            self._record(ev.kind.value, "-", "no-op")
            return
        oldest = min(candidates, key=lambda r: r.started_at)
        self._remove_instance(oldest)
        self.last_departure_s = self.now
        self._record(ev.kind.value, oldest.id, "removed")

    def _on_beat(self, ev: SimEvent) -> None:
        samples = beat_samples(
            self.services.values(),
            self.live_sensors,
            self.load_model or LoadModel(driver=""),
            self.now,
            self.rng_noise,
        )
        self.metrics.extend(samples)
        self._record(ev.kind.value, "*", f"samples={len(samples)}")
        self.queue.push(SimEvent(self.now + self.timing.beat_interval, EventKind.BEAT))

    def _on_tick(self, ev: SimEvent) -> None:
        self.tick_index += 1
        tick = self.tick_index
        self._record(ev.kind.value, "*", f"tick={tick}")
        for svc in self.services.values():
            for r in svc.replicas:
                if r.state is State.FAILED:
                    r.transition(State.REMOVED)
        for sid in self.topology.order:
            svc = self.services[sid]
            pool = self.pools[svc.pool_id]
            self.snapshots.append(
                CountSnapshot(tick, self.now, sid, pool.pool_id, svc.running_count, pool.running_count)
            )
        if self.controller is not None:
            self.controller(self, self.now, tick)
        self.audit()
        self.queue.push(SimEvent(self.now + self.timing.control_interval, EventKind.CONTROL_TICK))

    _HANDLERS = {
        EventKind.PROVISION_VM_DONE: _on_vm_done,
        EventKind.PROVISION_CONTAINER_DONE: _on_container_done,
        EventKind.INSTANCE_FAILURE: _on_failure,
        EventKind.SENSOR_ARRIVAL: _on_arrival,
        EventKind.SENSOR_DEPARTURE: _on_departure,
        EventKind.BEAT: _on_beat,
        EventKind.CONTROL_TICK: _on_tick,
    }

    def run(self, until: float) -> list:
        """Process events up to and including ``until``; returns the trace."""
        if not self._started:
            self._started = True
            self.queue.push(SimEvent(self.timing.beat_interval, EventKind.BEAT))
            self.queue.push(SimEvent(self.timing.control_interval, EventKind.CONTROL_TICK))
        while self.queue.peek_time() <= until:
            ev = self.queue.pop()
            if ev.at < self.now:
                raise RuntimeFault("event queue went backwards in time")
            self.now = ev.at
            self._HANDLERS[ev.kind](self, ev)
        self.now = max(self.now, until)
        return self.trace

    # -- invariants -------------------------------------------------------

    def audit(self) -> None:
        """Raise RuntimeFault if any capacity or bound invariant is broken."""
        loads = self.vm_loads()
        for vm_id, load in loads.items():
            vm = self.find_vm(vm_id)
            if not vm.live:
                raise RuntimeFault(f"live container on {vm.state.value} VM {vm_id}")
            flavor = self.flavors[vm.flavor]
            if load.quota > 1.0 + EPS:
                raise RuntimeFault(f"VM {vm_id} CPU quota oversubscribed: {load.quota}")
            if load.mem > flavor.mem_capacity + EPS:
                raise RuntimeFault(f"VM {vm_id} memory oversubscribed: {load.mem}")
            pool = self.pools[vm.pool_id]
            for sid, n in load.by_service.items():
                if self.services[sid].pool_id != vm.pool_id:
                    raise RuntimeFault(f"{sid} container placed outside its pool on {vm_id}")
                if n > pool.policy.cap_for(sid):
                    raise RuntimeFault(f"VM {vm_id} hosts {n} {sid} containers")
        for svc in self.services.values():
            if svc.live_count > svc.policy.max_replicas:
                raise RuntimeFault(f"{svc.service_id} exceeds max_replicas")
        for pool in self.pools.values():
            if pool.active_count > pool.policy.max_vms:
                raise RuntimeFault(f"{pool.pool_id} exceeds max_vms")
            if pool.running_count < pool.policy.min_vms:
                raise RuntimeFault(f"{pool.pool_id} below min_vms")


def initial_placement(
    services, pools: Mapping[str, MacroPool], initial: Mapping[str, int],
    *,
    flavors: Mapping[str, VmFlavor] = FLAVORS,
    container_types: Mapping[str, ContainerType] = CONTAINER_TYPES,
    pinned: frozenset = frozenset(),
) -> None:
    """Place each service's initial Running replicas at time 0."""
    loads: dict = {}
    for svc in services:
        pool = pools[svc.pool_id]
        ctype = container_types[svc.container_type]
        cap = pool.policy.cap_for(svc.service_id)
        for i in range(initial.get(svc.service_id, 0)):
            vm_id = place_container(pool, ctype, cap, service_id=svc.service_id,
                                    loads=loads, flavors=flavors)
            loads.setdefault(vm_id, VmLoad()).add(svc.service_id, ctype)
            svc.replicas.append(
                InstanceState(f"{svc.service_id}-{i}", State.RUNNING, 0.0,
                              service_id=svc.service_id, host=vm_id, absorbs_from=0.0,
                              pinned=svc.service_id in pinned)
            )


def initial_vms(pool_id: str, flavor: str, n: int) -> list:
    return [VmState(f"{pool_id}-vm-{i}", State.RUNNING, 0.0, pool_id=pool_id, flavor=flavor)
            for i in range(n)]
