"""Two configurations, one 10x slower than the other, raced by SPC and by
the non-resuming doubling baseline.

Runtimes are in integer milliseconds so every charge printed below is exact.

    python3 demos/tenfold_gap_walkthrough.py
"""
import numpy as np

from spc.baseline import run_baseline
from spc.runners import RuntimeMatrix, SimulatedSource
from spc.scheduler import Scheduler

matrix = RuntimeMatrix(["fast", "slow"], ["only"], np.array([[100.0], [1000.0]]))
sched = Scheduler(matrix.config_ids, SimulatedSource(matrix), kappa0=1.0)

first_at_128 = {}
for _ in range(5000):
    charged_before = sched.charged_total
    event = sched.step()
    name = matrix.config_ids[event["config"]]
    if event["cap_s"] == 128 and name not in first_at_128:
        first_at_128[name] = (event["t"], charged_before)
        print(f"t={event['t']:5d}  {name} first tried at a 128 ms cap "
              f"after {charged_before:.0f} ms charged")

report = sched.report()
print("\nafter 5000 steps:", {k: report[k] for k in ("t", "charged_total_s", "winner")})
print("largest queue target:", max(t.q for t in sched.testers))

base = run_baseline(matrix, queue_size=7500, kappa0=1.0, budget=2_000_000)
spc_sep = max(c for _, c in first_at_128.values())
base_sep = base["charge_before_cap"][128.0]
print(f"\nbaseline charge before its 128 ms level: {base_sep:.0f} ms")
print(f"SPC charge before both configs reach 128 ms: {spc_sep:.0f} ms")
print(f"ratio: {base_sep / spc_sep:.1f}x")
