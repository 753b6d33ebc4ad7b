"""
The scaling score and one service's decisions
=============================================

Each service gets one number per control tick: a weighted mix of its cpu,
memory and network use plus a replication term. The decision rules then
compare that number against two thresholds.
"""

from stackscale import ReplicationSpec, ScoreInputs, UtilizationVector, Weights, score
from stackscale.policy import decide_micro
from stackscale.model import InstanceState, MicroService, ServicePolicy, State

# The aggregator is cpu heavy, so cpu gets half the weight.
agg = Weights(0.5, 0.1, 0.1, 0.3)
busy = ScoreInputs(UtilizationVector(0.8, 0.2, 0.1), current_own_replicas=1)
print("aggregator score at 80% cpu:", round(score(agg, busy), 6))

# The replication term is neutral (1) when the service has exactly the
# replicas its upstream asks for, and grows when replicas go missing.
rep = ReplicationSpec("sensors", 0.1)
for own in (3, 2, 1, 0):
    s = score(agg, ScoreInputs(UtilizationVector(), own, 30), rep)
    print(f"idle, {own} replicas for 30 sensors -> f = {s:.3f}")

# A service record to feed the decision rules.
pol = ServicePolicy("kafka", auto_scale=True, weights=agg, max_replicas=48, cooldown=1)
svc = MicroService("kafka", "kafka-vms", pol)
svc.replicas = [InstanceState(f"kafka-{i}", State.RUNNING, 0.0, host="vm-0") for i in range(2)]

for f, headroom in [(0.73, 5), (0.73, 0), (0.55, 5), (0.2, 5)]:
    d = decide_micro(svc, f, tick=10, packing_headroom=headroom)
    print(f"f={f:.2f} headroom={headroom}: {d.direction.value} {d.magnitude} ({d.reason.value})")
