"""Fixed-queue uniform-doubling baseline in the style of Structured Procrastination.

Every configuration is run on ``queue_size`` instances at captime ``kappa0``,
then on ``queue_size`` instances at ``2 kappa0``, and so on.  The real SP
procedure lets its queue grow with the number of active instances; this
baseline keeps it fixed, which is enough to reproduce the cost arithmetic of
the two-configuration comparison.
"""
from __future__ import annotations

import math
from typing import Optional

from .runners import InstanceStream, RuntimeMatrix, SimulatedSource, stream_seed


def sp_queue_size(epsilon: float, zeta: float, n: int, beta_levels: int) -> int:
    """``ceil(12 eps^-2 ln(3 beta n / zeta))``."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 0 < zeta < 1:
        raise ValueError(f"zeta must lie in (0, 1), got {zeta}")
    if n < 1 or beta_levels < 1:
        raise ValueError("n and beta_levels must be >= 1")
    return math.ceil(12.0 / epsilon**2 * math.log(3.0 * beta_levels * n / zeta))


def run_baseline(matrix: RuntimeMatrix, queue_size: int, kappa0: float, budget: float,
                 seed: int = 0, multiplier: float = 2.0, max_levels: Optional[int] = None) -> dict:
    """Run the doubling baseline until ``budget`` seconds have been charged.

    Runs are non-resuming and every level uses fresh instances from each
    configuration's stream.

    Returns:
        A report with one entry per captime level (charge and completions per
        configuration), ``charge_before_cap`` (total charged before the first
        attempt at each captime), and ``separation_charge``: the charge before
        the first level at which any configuration completed a run.
    """
    if queue_size < 1:
        raise ValueError("queue_size must be >= 1")
    matrix.validate_floor(kappa0)
    source = SimulatedSource(matrix)
    streams = [InstanceStream(matrix.n_instances, stream_seed(seed, cid)) for cid in matrix.config_ids]
    charged = 0.0
    levels = []
    charge_before_cap = {}
    separation_charge = None
    cap = float(kappa0)
    a = 0
    exhausted = False
    while not exhausted and (max_levels is None or a < max_levels):
        charge_before_cap[cap] = charged
        per_config = []
        for cid, stream in zip(matrix.config_ids, streams):
            level_charge, completions, runs = 0.0, 0, 0
            for _ in range(queue_size):
                if charged >= budget:
                    exhausted = True
                    break
                instance, inst_seed = stream.next_instance()
                res = source.run(cid, instance, inst_seed, cap)
                charged += res.charged
                level_charge += res.charged
                completions += res.completed
                runs += 1
            per_config.append({"config_id": cid, "runs": runs, "completions": completions,
                               "charged_s": level_charge})
            if exhausted:
                break
        levels.append({"cap_s": cap, "configs": per_config})
        if separation_charge is None and any(c["completions"] for c in per_config):
            separation_charge = charge_before_cap[cap]
        cap *= multiplier
        a += 1
    return {
        "queue_size": queue_size,
        "charged_total_s": charged,
        "levels": levels,
        "charge_before_cap": charge_before_cap,
        "separation_charge": separation_charge,
    }
