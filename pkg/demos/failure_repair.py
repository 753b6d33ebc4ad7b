"""
Replacing a failed replica
==========================

The ``iot-failure`` scenario kills one of three Kafka replicas while
the system is idle. Utilization alone would never trigger a scale-out
here; the replication term does.
"""

from stackscale import Reason
from stackscale.scenario import build, read

scn = read("iot-failure")
sim, engine = build(scn)
sim.run(scn.duration)

for d in engine.history(service="kafka", ticks=(28, 32)):
    print(f"tick {d.tick}: {d.direction.value:4s} {d.magnitude} f={d.score:.3f} {d.reason.value}")

repairs = engine.history(reason=Reason.REPLICATION_REPAIR)
print("repair decisions:", [(d.tick, d.service_or_pool) for d in repairs])
print("kafka replicas at the end:", sim.services["kafka"].running_count)
