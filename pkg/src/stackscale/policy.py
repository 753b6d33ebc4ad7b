"""Scaling score and the per-tick decision rules for services and VM pools.

All functions are pure: they read the state objects they are handed and
return a :class:`ScalingDecision`, never mutating anything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Union

from .model import (
    Direction,
    MacroPool,
    MicroService,
    ReplicationSpec,
    Reason,
    ScalingDecision,
    State,
    Tier,
    UtilizationVector,
    Weights,
)

# Upper bound on the replication ratio term; anything above 1/lambda already
# forces a threshold crossing, this just keeps the score finite.
RATIO_CAP = 10.0


@dataclass(frozen=True)
class ScoreInputs:
    util: UtilizationVector
    current_own_replicas: int
    current_upstream_replicas: int = 0

    def __post_init__(self):
        if self.current_own_replicas < 0 or self.current_upstream_replicas < 0:
            raise ValueError("replica counts must be non-negative")


def replication_ratio(
    replication: Optional[ReplicationSpec], own: int, upstream: int
) -> float:
    """Target over current replication factor, with current = own / upstream.

    Neutral (1.0) without a replication spec or without upstream replicas.
    """
    if replication is None or upstream <= 0:
        return 1.0
    if own <= 0:
        return RATIO_CAP
    return min(replication.target_ratio * upstream / own, RATIO_CAP)


def score(
    weights: Weights, inputs: ScoreInputs, replication: Optional[ReplicationSpec] = None
) -> float:
    u = inputs.util
    ratio = replication_ratio(
        replication, inputs.current_own_replicas, inputs.current_upstream_replicas
    )
    return (
        weights.alpha * u.cpu
        + weights.beta * u.mem
        + weights.gamma * u.net
        + weights.lambda_ * ratio
    )


def required_replicas(service: MicroService, upstream_replicas: Optional[int]) -> int:
    rep = service.policy.replication
    if rep is None or not upstream_replicas:
        return 0
    return rep.required(upstream_replicas)


def decide_micro(
    service: MicroService,
    score: float,
    tick: int,
    packing_headroom: int,
    upstream_replicas: Optional[int] = None,
) -> ScalingDecision:
    """Decide one service's action for this tick.

    Branches, first match wins:

    1. auto_scale off -> Disabled.
    2. Fewer live replicas than the replication spec requires -> Out by the
       deficit (capped by max_replicas and headroom). Ignores cooldown and
       utilization; with zero headroom this is PackingExhausted.
    3. Inside the cooldown window -> Cooldown.
    4. score > threshold_up below max_replicas -> Out by
       min(step_out, room, headroom), or PackingExhausted at zero headroom.
    5. score < threshold_down above the floor -> In by min(step_in, excess).
       The floor is the larger of min_replicas and the replication need.
    6. Steady.

    ``upstream_replicas`` is the live replica count of the upstream service,
    ignored when the policy has no replication spec.
    """
    pol = service.policy
    sid = service.service_id
    live = service.live_count
    none = lambda reason, blocked=0: ScalingDecision.none(  # noqa: E731
        tick, sid, Tier.MICRO, score, reason, blocked
    )

    if not pol.auto_scale:
        return none(Reason.DISABLED)

    need = required_replicas(service, upstream_replicas)
    deficit = min(need, pol.max_replicas) - live
    if deficit > 0:
        n = min(deficit, packing_headroom)
        if n <= 0:
            return none(Reason.PACKING_EXHAUSTED, blocked=deficit)
        return ScalingDecision(tick, sid, Tier.MICRO, Direction.OUT, n, score,
                               Reason.REPLICATION_REPAIR)

    if service.last_scale_tick is not None and tick - service.last_scale_tick < pol.cooldown:
        return none(Reason.COOLDOWN)

    if score > pol.threshold_up and live < pol.max_replicas:
        want = min(pol.step_out, pol.max_replicas - live)
        n = min(want, packing_headroom)
        if n <= 0:
            return none(Reason.PACKING_EXHAUSTED, blocked=want)
        return ScalingDecision(tick, sid, Tier.MICRO, Direction.OUT, n, score, Reason.THRESHOLD_UP)

    floor = max(pol.min_replicas, need)
    if score < pol.threshold_down and live > floor:
        n = min(pol.step_in, live - floor)
        return ScalingDecision(tick, sid, Tier.MICRO, Direction.IN, n, score, Reason.THRESHOLD_DOWN)

    return none(Reason.STEADY)


def empty_running_vms(pool: MacroPool, services: list) -> list:
    """Running VMs of ``pool`` hosting no live container, newest first."""
    occupied = set()
    for svc in services:
        for r in svc.replicas:
            if r.live:
                occupied.add(r.host)
    empty = [v for v in pool.vms if v.state is State.RUNNING and v.id not in occupied]
    return list(reversed(empty))


def pool_occupancy(pool: MacroPool, services: list) -> float:
    """Fraction of container slots in use across the pool's running VMs."""
    running = {v.id for v in pool.running()}
    if not running:
        return 0.0
    slots = used = 0
    for svc in services:
        slots += pool.policy.containers_per_vm.get(svc.service_id, 0) * len(running)
        used += sum(1 for r in svc.replicas if r.live and r.host in running)
    return used / slots if slots else 0.0


def decide_macro(
    pool: MacroPool,
    pending_micro_demand: Union[int, Mapping[str, int]],
    running_vms: int,
    tick: int,
    empty_vms: int = 0,
    score: float = 0.0,
) -> ScalingDecision:
    """Decide one VM pool's action for this tick.

    ``pending_micro_demand`` maps service id to containers blocked for want
    of space (a bare int is accepted for single-service pools).
    ``running_vms`` counts VMs toward the cap, i.e. Running plus
    Provisioning. ``empty_vms`` is the number of Running VMs with no live
    container.

    With demand, scale out by enough VMs to host every blocked container,
    capped at ``max_vms``; at the cap the reason is CapacityCap. Without
    demand, release the empty VMs down to ``min_vms``.
    """
    pol = pool.policy
    pid = pool.pool_id
    none = lambda reason: ScalingDecision.none(tick, pid, Tier.MACRO, score, reason)  # noqa: E731

    if not pol.auto_scale:
        return none(Reason.DISABLED)

    if isinstance(pending_micro_demand, Mapping):
        demand = {s: d for s, d in pending_micro_demand.items() if d > 0}
    elif pending_micro_demand > 0:
        if len(pol.containers_per_vm) != 1:
            raise ValueError("bare demand count needs a single-service pool")
        (only,) = pol.containers_per_vm
        demand = {only: pending_micro_demand}
    else:
        demand = {}

    in_cooldown = pool.last_scale_tick is not None and tick - pool.last_scale_tick < pol.cooldown

    if demand:
        need = max(math.ceil(d / pol.cap_for(s)) for s, d in demand.items())
        room = pol.max_vms - running_vms
        if room <= 0:
            return none(Reason.CAPACITY_CAP)
        if in_cooldown:
            return none(Reason.COOLDOWN)
        return ScalingDecision(tick, pid, Tier.MACRO, Direction.OUT, min(need, room), score,
                               Reason.PACKING_EXHAUSTED)

    if in_cooldown:
        return none(Reason.COOLDOWN)
    removable = min(empty_vms, pool.running_count - pol.min_vms)
    if removable > 0:
        return ScalingDecision(tick, pid, Tier.MACRO, Direction.IN, removable, score,
                               Reason.THRESHOLD_DOWN)
    return none(Reason.STEADY)
