import pytest

from stackscale.cluster import ClusterSim, initial_placement, initial_vms
from stackscale.model import (
    InstanceState,
    MacroPolicy,
    MacroPool,
    MicroService,
    ServicePolicy,
    State,
    VmState,
    Weights,
    validate_topology,
)
from stackscale.report import simulate

AGG = Weights(0.5, 0.1, 0.1, 0.3)


def make_service(sid="kafka", live=1, *, pool="kafka-vms", auto=True, up=0.7, down=0.4,
                 step_out=1, step_in=1, cooldown=3, lo=1, hi=48, replication=None,
                 last=None, weights=AGG, host="kafka-vms-vm-0"):
    pol = ServicePolicy(sid, auto_scale=auto, weights=weights, threshold_up=up,
                        threshold_down=down, step_out=step_out, step_in=step_in,
                        cooldown=cooldown, min_replicas=lo, max_replicas=hi,
                        replication=replication)
    svc = MicroService(sid, pool, pol, container_type="Type_a", last_scale_tick=last)
    svc.replicas = [InstanceState(f"{sid}-{i}", State.RUNNING, 0.0, service_id=sid, host=host,
                                  absorbs_from=0.0) for i in range(live)]
    return svc


def make_pool(pid="kafka-vms", running=1, *, provisioning=0, auto=True, cap=None, lo=1, hi=12,
              cooldown=3, flavor="m1.small", last=None, delay=(50.0, 150.0)):
    pol = MacroPolicy(pid, flavor, auto_scale=auto, containers_per_vm=cap or {"kafka": 4},
                      min_vms=lo, max_vms=hi, cooldown=cooldown, provisioning_delay=delay)
    vms = initial_vms(pid, flavor, running)
    vms += [VmState(f"{pid}-vm-p{i}", State.PROVISIONING, 0.0, pool_id=pid, flavor=flavor)
            for i in range(provisioning)]
    return MacroPool(pid, pol, vms=vms, last_scale_tick=last)


def kafka_sim(initial=1, vms=1, *, max_vms=12, cap=4, seed=0, controller=None, load_model=None,
              delay=(50.0, 150.0), auto=True, **svc_kw):
    pool = make_pool(running=vms, hi=max_vms, cap={"kafka": cap}, delay=delay)
    svc = make_service(live=0, auto=auto, **svc_kw)
    initial_placement([svc], {pool.pool_id: pool}, {"kafka": initial})
    topo = validate_topology([svc], [pool])
    return ClusterSim(topo, seed=seed, controller=controller, load_model=load_model)


@pytest.fixture(scope="session")
def baseline():
    """One run of the bundled iot-baseline scenario, shared across tests."""
    return simulate("iot-baseline")


@pytest.fixture(scope="session")
def baseline_rerun():
    return simulate("iot-baseline")


ACCEPTANCE: list = []


def record(n, title, ok, detail=""):
    """Note one acceptance criterion outcome; printed again in the summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE.append((n, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)
