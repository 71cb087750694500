"""Size of the allocation problem, and a look inside a lookup table.

Run with ``python3 demos/complexity_and_tables.py``; it finishes in seconds.
"""

import tempfile
from pathlib import Path

import numpy as np

from slicewave import allocation, solver
from slicewave.radio import code_bits
from slicewave.scenario import load_scenario

for name in ("single_mvno", "multi_mvno"):
    c = allocation.complexity_counts(load_scenario(name))
    print(f"{name}: greedy table {c.proposed:,} steps, exhaustive search {c.exhaustive:,}")

sc = load_scenario("toy_pair")
(rates,) = solver.component_rates(sc, "interference-aware")
table = rates.policy.table
print()
print(f"toy_pair: {table.space.size} states over channels {table.channels}")
for index in range(table.space.size):
    n = table.space.digits[:, index]
    bits = code_bits(int(table.data[index]), len(table.channels))
    print(f"  state {np.asarray(n).tolist()}: active {bits.astype(int).tolist()}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "toy_pair.swlt"
    allocation.dump_table(table, path)
    back = allocation.load_table(path)
    print()
    print(f"written {path.stat().st_size} bytes, round trip equal: "
          f"{np.array_equal(back.data, table.data)}")
