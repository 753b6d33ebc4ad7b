"""The monitor / analyze / plan / execute loop with a decision history.

:class:`Engine` is callable, so it plugs straight into
:class:`~stackscale.cluster.ClusterSim` as its controller. Each call runs
one iteration against the simulator's current state and records one
decision per service and per pool.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .model import (
    Direction,
    MetricSample,
    Reason,
    ScalingDecision,
    State,
    Tier,
    UtilizationVector,
    ZERO_UTIL,
)
from .policy import (
    ScoreInputs,
    decide_macro,
    decide_micro,
    empty_running_vms,
    pool_occupancy,
    score,
)

log = logging.getLogger(__name__)

WINDOWED = "windowed"
INSTANTANEOUS = "instantaneous"


class UtilizationWindow:
    """Samples of one service from the half-open interval (now - length, now].

    The aggregate averages over instances at each beat, then over beats.
    """

    def __init__(self, service_id: str, length: float = 60.0):
        self.service_id = service_id
        self.length = length
        self.samples: deque = deque()
        self._last_at: dict = {}

    def add(self, sample: MetricSample) -> None:
        if sample.service_id != self.service_id:
            raise ValueError(f"sample for {sample.service_id} fed to {self.service_id} window")
        prev = self._last_at.get(sample.instance_id)
        if prev is not None and sample.at < prev:
            raise ValueError(f"samples for {sample.instance_id} went backwards in time")
        self._last_at[sample.instance_id] = sample.at
        self.samples.append(sample)

    def evict(self, now: float) -> None:
        horizon = now - self.length
        while self.samples and self.samples[0].at <= horizon:
            self.samples.popleft()

    def aggregate(self, now: float, latest_only: bool = False) -> UtilizationVector:
        self.evict(now)
        beats: dict = {}
        for s in self.samples:
            if s.at > now:
                continue
            acc = beats.get(s.at)
            if acc is None:
                beats[s.at] = acc = [0.0, 0.0, 0.0, 0]
            u = s.util
            acc[0] += u.cpu
            acc[1] += u.mem
            acc[2] += u.net
            acc[3] += 1
        if not beats:
            return ZERO_UTIL
        if latest_only:
            acc = beats[max(beats)]
            return UtilizationVector(acc[0] / acc[3], acc[1] / acc[3], acc[2] / acc[3])
        k = len(beats)
        cpu = sum(a[0] / a[3] for a in beats.values()) / k
        mem = sum(a[1] / a[3] for a in beats.values()) / k
        net = sum(a[2] / a[3] for a in beats.values()) / k
        return UtilizationVector(cpu, mem, net)


@dataclass
class TickReport:
    tick: int
    decisions: list = field(default_factory=list)


class Engine:
    """Two-tier reactive autoscaler.

    Per tick: fold new metrics into windows, score every service upstream
    first, decide and execute micro actions one service at a time (so a
    dependent sees its upstream's new replica count), then turn blocked
    container demand into VM decisions per pool.
    """

    def __init__(self, window_len: float = 60.0, mode: str = WINDOWED):
        if mode not in (WINDOWED, INSTANTANEOUS):
            raise ValueError(f"unknown metric mode {mode!r}")
        self.window_len = window_len
        self.mode = mode
        self.windows: dict = {}
        self.decisions: list = []

    def __call__(self, sim, now: float, tick: int) -> TickReport:
        return self.tick(sim, now, tick)

    def window(self, service_id: str) -> UtilizationWindow:
        w = self.windows.get(service_id)
        if w is None:
            w = self.windows[service_id] = UtilizationWindow(service_id, self.window_len)
        return w

    def monitor(self, samples: Iterable[MetricSample]) -> None:
        for s in samples:
            self.window(s.service_id).add(s)

    def tick(self, sim, now: float, tick: int) -> TickReport:
        # Monitor
        self.monitor(sim.metrics)
        sim.metrics.clear()

        report = TickReport(tick)
        topo = sim.topology
        blocked: dict = {}

        # Analyze + plan + execute, micro tier
        for sid in topo.order:
            svc = topo.services[sid]
            util = self.window(sid).aggregate(now, latest_only=self.mode == INSTANTANEOUS)
            up_id = topo.upstream_of(sid)
            upstream = topo.services[up_id].live_count if up_id else 0
            rep = svc.policy.replication if upstream > 0 else None
            f = score(svc.policy.weights, ScoreInputs(util, svc.live_count, upstream), rep)
            headroom = sim.packing_headroom(sid) if svc.policy.auto_scale else 0
            d = decide_micro(svc, f, tick, headroom, upstream if up_id else None)
            if d.direction is Direction.OUT:
                sim.scale_out(sid, d.magnitude)
            elif d.direction is Direction.IN:
                sim.scale_in(sid, d.magnitude)
            if d.direction is not Direction.NONE:
                svc.last_scale_tick = tick
                log.info("tick %d: %s %s %d (%s, f=%.3f)", tick, sid, d.direction.value,
                         d.magnitude, d.reason.value, f)
            if d.reason is Reason.PACKING_EXHAUSTED:
                blocked.setdefault(svc.pool_id, {})[sid] = d.blocked
            report.decisions.append(d)

        # Plan + execute, macro tier
        for pid, pool in topo.pools.items():
            hosted = topo.services_in(pid)
            provisioning = pool.count(State.PROVISIONING)
            demand = {}
            for sid, n in blocked.get(pid, {}).items():
                # capacity already on its way counts against the shortfall
                net = n - provisioning * pool.policy.cap_for(sid)
                if net > 0:
                    demand[sid] = net
            empties = empty_running_vms(pool, hosted)
            d = decide_macro(pool, demand, pool.active_count, tick, empty_vms=len(empties),
                             score=pool_occupancy(pool, hosted))
            if d.direction is Direction.OUT:
                for _ in range(d.magnitude):
                    sim.provision_vm(pid)
            elif d.direction is Direction.IN:
                for vm in empties[: d.magnitude]:
                    sim.remove_vm(vm.id)
            if d.direction is not Direction.NONE:
                pool.last_scale_tick = tick
                log.info("tick %d: pool %s %s %d (%s)", tick, pid, d.direction.value,
                         d.magnitude, d.reason.value)
            report.decisions.append(d)

        # Knowledge
        self.decisions.extend(report.decisions)
        return report

    def history(
        self,
        service: Optional[str] = None,
        ticks: Optional[tuple] = None,
        reason: Optional[Reason] = None,
        tier: Optional[Tier] = None,
    ) -> list:
        """Recorded decisions matching every given filter, in tick order.

        ``ticks`` is an inclusive ``(first, last)`` range.
        """
        out = []
        for d in self.decisions:
            if service is not None and d.service_or_pool != service:
                continue
            if ticks is not None and not ticks[0] <= d.tick <= ticks[1]:
                continue
            if reason is not None and d.reason is not reason:
                continue
            if tier is not None and d.tier is not tier:
                continue
            out.append(d)
        return out


DECISION_FIELDS = ("tick", "id", "tier", "direction", "magnitude", "score", "reason")


def decision_row(d: ScalingDecision) -> tuple:
    return (d.tick, d.service_or_pool, d.tier.value, d.direction.value, d.magnitude,
            f"{d.score:.6f}", d.reason.value)
