"""Walk through the single-operator scenario: how much does a lookup table
for channel activation help, and how close is the analytic model to the
simulator?

Run with ``python3 demos/isolation_single.py``; it takes a few seconds.
"""

import numpy as np

from slicewave import des, kpi, solver
from slicewave.scenario import load_scenario

sc = load_scenario("single_mvno").with_bs_power(48.0)
key = (0, 0)  # (SP, MVNO) positions

print("flow rate   delay random   delay table   reduction")
for lam in (2.0, 4.0, 6.0):
    point = sc.with_flow_rate(0, lam)
    rand = kpi.report(solver.solve_network(point, "random"))
    rates = solver.component_rates(point, "interference-aware")
    table = kpi.report(solver.solve_network(point, "interference-aware", rates=rates))
    d_r = rand.network[key].delay
    d_t = table.network[key].delay
    print(f"{lam:9.1f}   {d_r:12.3f}   {d_t:11.3f}   {1 - d_t / d_r:9.1%}")

# The simulator replays the same table flow by flow. Under the table the
# iterative solver can settle on the uncongested mode only, so its delay
# sits somewhat below the simulated one.
point = sc.with_flow_rate(0, 4.0)
rates = solver.component_rates(point, "interference-aware")
cfg = des.SimConfig(seed=1, num_flows=50_000, replications=4)
sim = des.run_des(point, "lookup", cfg, tables=[r.policy.table for r in rates])
ana = kpi.report(solver.solve_network(point, "interference-aware", rates=rates))
print()
print("slice   analytic delay   simulated delay (95% CI)")
for s, k in enumerate(ana.slices):
    lo, hi = sim.ci(s, "delay")
    print(f"{point.slices[s].id:5d}   {k.delay:14.3f}   {sim.mean.slices[s].delay:.3f} "
          f"[{lo:.3f}, {hi:.3f}]")

# Isolation: how far interference pushes the delay above its interference-free value.
res = kpi.sweep(sc, 0, np.arange(1.0, 6.0), policy="random")
dev = res.isolation()[key]
print()
print(f"random allocation, flow rate 1..5: ADD {dev.add:.3f}, VDD {dev.vdd:.3f}")
