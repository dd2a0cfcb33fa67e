"""Search a pool of 2000 configurations where only 2% are fast.

Levels k = 1, 2, ... each sample about k 2^k configurations and get a share of
the budget proportional to 1/k^2.  A higher level switches on once the top
level has been charged enough to try each of its configurations once.  Small
levels often miss the fast configurations entirely; larger levels contain
some but need more budget per configuration before their winner settles.

    python3 demos/quantile_pool_demo.py
"""
import time

import numpy as np

from spc.pool import FinitePoolSampler, QuantilePool
from spc.runners import RuntimeMatrix, SimulatedSource

rng = np.random.default_rng(0)
n, m = 2000, 100
fast = rng.random(n) < 0.02
means = np.where(fast, rng.uniform(1.0, 1.9, n), rng.uniform(20.0, 200.0, n))
runtimes = np.where(fast[:, None], rng.uniform(1.0, 1.9, (n, m)),
                    means[:, None] * rng.uniform(0.5, 1.5, (n, m)))
matrix = RuntimeMatrix([str(i) for i in range(n)], [str(j) for j in range(m)], runtimes)

pool = QuantilePool(FinitePoolSampler(matrix.config_ids), SimulatedSource(matrix),
                    kappa0=1.0, max_level=4)
start = time.perf_counter()
for budget in (1e5, 1e6, 4e6):
    pool.run_until(budget)
    print(f"\ncharged {pool.total_charged:9.0f} s ({time.perf_counter() - start:.1f} s wall)")
    for k, share in pool.shares().items():
        level = pool.level(k)
        winner = pool.winner(k)
        n_fast = int(sum(fast[int(c)] for c in level.configs))
        print(f"  level {k}: share {share:.3f} (target {pool.target_shares()[k]:.3f}), "
              f"{len(level.configs)} configs ({n_fast} fast), winner {winner} "
              f"{'is' if fast[int(winner)] else 'is not'} fast")
