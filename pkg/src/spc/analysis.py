"""Offline analyses: incumbent trajectories from event logs and the
(epsilon, delta)-optimality profile of a runtime matrix."""
from __future__ import annotations

import json
import math
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .runners import RuntimeMatrix


class LogFormatError(ValueError):
    pass


_REQUIRED = ("t", "config", "instance", "cap_s", "measured_s", "charged_total_s")


def read_events(path) -> List[dict]:
    events = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"{path}:{lineno}: not JSON ({exc})") from None
            missing = [key for key in _REQUIRED if key not in event]
            if missing:
                raise LogFormatError(f"{path}:{lineno}: missing fields {missing}")
            events.append(event)
    return events


class LogReplay:
    """Rebuilds per-configuration state (active count, latest capped values)
    from an event log prefix."""

    def __init__(self):
        self.values: Dict[int, list] = {}
        self.ids: Dict[int, object] = {}
        self.charged_total = 0.0

    def apply(self, event: dict) -> None:
        idx = int(event["config"])
        vals = self.values.setdefault(idx, [])
        self.ids.setdefault(idx, event.get("config_id", idx))
        ordinal = int(event["instance"])
        value = min(float(event["measured_s"]), float(event["cap_s"]))
        if ordinal == len(vals) + 1:
            vals.append(value)
        elif 1 <= ordinal <= len(vals):
            vals[ordinal - 1] = value
        else:
            raise LogFormatError(f"event t={event['t']}: instance ordinal {ordinal} out of order")
        self.charged_total = float(event["charged_total_s"])

    def incumbent(self) -> Optional[int]:
        """Most active instances, ties by smaller capped mean then lower index."""
        if not self.values:
            return None
        best_key, best = None, None
        for idx, vals in self.values.items():
            key = (-len(vals), math.fsum(vals) / len(vals), idx)
            if best_key is None or key < best_key:
                best_key, best = key, idx
        return best

    def capped_mean(self, idx: int) -> float:
        vals = self.values[idx]
        return math.fsum(vals) / len(vals)


def trajectory(events: Sequence[dict], grid: Iterable[float]) -> List[dict]:
    """Incumbent at each charged-time grid point.

    Each row reflects every event whose ``charged_total_s`` is at most the
    grid value.  Before the first event the incumbent is configuration 0
    with no capped mean.
    """
    grid = sorted(float(g) for g in grid)
    ids = {}
    for e in events:
        ids.setdefault(int(e["config"]), e.get("config_id", int(e["config"])))
    replay = LogReplay()
    rows = []
    pos = 0
    for g in grid:
        while pos < len(events) and float(events[pos]["charged_total_s"]) <= g:
            replay.apply(events[pos])
            pos += 1
        inc = replay.incumbent()
        if inc is None:
            rows.append({"charged_time_s": g, "incumbent": 0, "incumbent_id": ids.get(0, 0),
                         "incumbent_capped_mean_s": None})
        else:
            rows.append({"charged_time_s": g, "incumbent": inc, "incumbent_id": ids[inc],
                         "incumbent_capped_mean_s": replay.capped_mean(inc)})
    return rows


def quantile_cap(runtimes: np.ndarray, delta: float) -> float:
    """Smallest observed runtime ``theta`` with empirical ``Pr(R > theta) <= delta``."""
    x = np.sort(np.asarray(runtimes, dtype=float))
    n = x.size
    allowed = math.floor(delta * n * (1 + 1e-12))
    return float(x[n - 1 - allowed])


def eps_delta_profile(matrix: RuntimeMatrix, deltas: Sequence[float],
                      max_cap: Optional[float] = None) -> List[dict]:
    """Smallest ``eps`` for which each configuration is ``(eps, delta)``-optimal.

    For each ``delta`` and configuration, ``theta*`` is the empirical
    ``(1 - delta)``-quantile of its runtimes and
    ``eps_min = max(0, mean(min(R, theta*)) / OPT - 1)`` with ``OPT`` the
    smallest mean runtime in the matrix (capped at ``max_cap`` when given).
    Rows also carry ``cdf``: the fraction of configurations whose
    ``eps_min`` is at most this row's.
    """
    for d in deltas:
        if not 0 < d < 1:
            raise ValueError(f"delta must lie in (0, 1), got {d}")
    data = matrix.runtimes if max_cap is None else np.minimum(matrix.runtimes, max_cap)
    opt = float(data.mean(axis=1).min())
    rows = []
    for d in deltas:
        eps = []
        for cid, row in zip(matrix.config_ids, data):
            theta = quantile_cap(row, d)
            capped = float(np.minimum(row, theta).mean())
            eps.append((cid, theta, capped, max(0.0, capped / opt - 1.0)))
        values = np.sort([e[3] for e in eps])
        n = len(eps)
        for cid, theta, capped, e in eps:
            rows.append({
                "delta": d,
                "config_id": cid,
                "theta_star_s": theta,
                "capped_mean_s": capped,
                "epsilon_min": e,
                "cdf": int(np.searchsorted(values, e, side="right")) / n,
            })
    return rows
