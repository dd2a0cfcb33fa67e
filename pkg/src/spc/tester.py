"""Per-configuration tester: instance stream, pending queue, captime doubling."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .lcb import EmpiricalCdf, lcb_from_profiles, lcb_profile
from .runners import InstanceStream, RunnerError


class StepError(RuntimeError):
    """A backend failure while executing one tester step."""

    def __init__(self, config, instance, cap, cause):
        super().__init__(f"run of configuration {config!r} on instance ordinal {instance} "
                         f"with cap {cap!r} failed: {cause}")
        self.config = config
        self.instance = instance
        self.cap = cap


@dataclass(frozen=True)
class CappedObservation:
    instance_ordinal: int
    capped_value: float
    completed: bool
    cap_used: float


@dataclass(frozen=True)
class PendingRun:
    instance_ordinal: int
    next_cap: float


@dataclass(frozen=True)
class StepOutcome:
    ordinal: int
    instance: int
    cap: float
    measured: float
    completed: bool
    charged: float
    failed: bool = False


def target_queue_size(r: int, t: int) -> int:
    """Pending-queue target ``ceil(25 log2(t log2 r))``, clamped to be >= 1.

    ``t`` is clamped to at least 2 and ``log2 r`` to at least 1, so the
    startup values (``r`` in {0, 1}, ``t`` in {0, 1}) stay well defined.
    """
    inner = max(t, 2) * max(1.0, math.log2(max(r, 2)))
    return max(1, math.ceil(25.0 * math.log2(inner)))


class _SortedBuffer:
    """Ascending float multiset in a growable numpy array."""

    __slots__ = ("buf", "n")

    def __init__(self, values=()):
        values = np.sort(np.asarray(values, dtype=float))
        self.buf = np.empty(max(16, 2 * values.size))
        self.buf[:values.size] = values
        self.n = values.size

    def view(self) -> np.ndarray:
        return self.buf[:self.n]

    def insert(self, x: float) -> None:
        n = self.n
        if n == self.buf.size:
            grown = np.empty(2 * n)
            grown[:n] = self.buf
            self.buf = grown
        buf = self.buf
        i = int(buf[:n].searchsorted(x, "right"))
        buf[i + 1:n + 1] = buf[i:n]
        buf[i] = x
        self.n = n + 1

    def replace(self, old: float, new: float) -> None:
        buf, n = self.buf, self.n
        i = int(buf[:n].searchsorted(old, "left"))
        if new >= old:
            j = int(buf[:n].searchsorted(new, "right")) - 1
            buf[i:j] = buf[i + 1:j + 1]
        else:
            j = int(buf[:n].searchsorted(new, "right"))
            buf[j + 1:i + 1] = buf[j:i]
        buf[j] = new


class ConfigurationTester:
    """Tests one configuration on its own i.i.d. instance stream.

    Each step either activates the next instance from the stream at the
    current captime ``theta`` (when fewer than ``q`` runs are pending) or
    retries the run at the head of the pending queue.  A run that hits its
    captime is re-queued at the tail with the captime multiplied by
    ``multiplier``.

    Args:
        config_id: identifier handed to the runtime source.
        kappa0: minimum possible runtime; the initial captime and LCB floor.
        stream: instance stream for this configuration.
        multiplier: captime growth factor, > 1.
        max_cap: optional captime that is never exceeded; a run censored at
            ``max_cap`` is recorded as finished at ``max_cap``.
    """

    def __init__(self, config_id, kappa0: float, stream: InstanceStream,
                 multiplier: float = 2.0, max_cap: Optional[float] = None):
        if not kappa0 > 0:
            raise ValueError(f"kappa0 must be positive, got {kappa0!r}")
        if not multiplier > 1:
            raise ValueError(f"multiplier must exceed 1, got {multiplier!r}")
        if max_cap is not None and max_cap < kappa0:
            raise ValueError(f"max_cap {max_cap!r} is below kappa0 {kappa0!r}")
        self.config_id = config_id
        self.kappa0 = float(kappa0)
        self.multiplier = float(multiplier)
        self.max_cap = None if max_cap is None else float(max_cap)
        self.stream = stream
        self.r = 0
        self.theta = self.kappa0
        self.q = 1
        self.max_q = 1
        self.queue: deque = deque()
        self.cumulative_charged = 0.0
        # per-ordinal tables, index l - 1
        self.values: list = []
        self.completed: list = []
        self.cap_used: list = []
        self.instances: list = []
        self.seeds: list = []
        self.instance_charge: list = []
        self._sorted = _SortedBuffer()
        self._profile: Optional[np.ndarray] = None

    # -- queries ---------------------------------------------------------
    def num_active(self) -> int:
        return self.r

    def profile(self) -> np.ndarray:
        if self._profile is None:
            self._profile = lcb_profile(self._sorted.view())
        return self._profile

    def get_lcb(self, t: int) -> float:
        if self.r == 0:
            return self.kappa0
        return float(lcb_from_profiles(self.profile()[None, :], [self.r], t, self.kappa0)[0])

    def empirical_cdf(self) -> EmpiricalCdf:
        return EmpiricalCdf(self._sorted.view().copy())

    def capped_mean(self) -> float:
        if self.r == 0:
            return math.inf
        return math.fsum(self.values) / self.r

    def observations(self) -> Dict[int, CappedObservation]:
        return {
            ell: CappedObservation(ell, v, c, cap)
            for ell, (v, c, cap) in enumerate(
                zip(self.values, self.completed, self.cap_used), start=1)
        }

    def pending(self) -> list:
        return [PendingRun(ell, cap) for ell, cap in self.queue]

    # -- the step --------------------------------------------------------
    def execute_step(self, t: int, source) -> StepOutcome:
        """Run one instance and update the state; ``t`` is the new iteration."""
        if len(self.queue) < self.q:
            ell = self.r + 1
            instance, seed = self.stream.draw(ell)
            cap = self.theta
            prev_cap = 0.0
            fresh = True
        else:
            ell, cap = self.queue[0]
            instance, seed = self.instances[ell - 1], self.seeds[ell - 1]
            prev_cap = self.cap_used[ell - 1]
            fresh = False
        try:
            result = source.run(self.config_id, instance, seed, cap, prev_cap)
        except RunnerError as exc:
            raise StepError(self.config_id, ell, cap, exc) from exc

        # state changes only after the run succeeded
        if fresh:
            self.stream.cursor = ell
            self.r = ell
            self.values.append(0.0)
            self.completed.append(False)
            self.cap_used.append(0.0)
            self.instances.append(instance)
            self.seeds.append(seed)
            self.instance_charge.append(0.0)
        else:
            self.queue.popleft()
            self.theta = cap

        completed = result.completed
        if completed:
            value = min(result.measured, cap)
        elif self.max_cap is not None and cap >= self.max_cap:
            value, completed = self.max_cap, True
        else:
            value = cap
            next_cap = cap * self.multiplier
            if self.max_cap is not None and next_cap > self.max_cap:
                next_cap = self.max_cap
            self.queue.append((ell, next_cap))

        i = ell - 1
        if fresh:
            self._sorted.insert(value)
        else:
            self._sorted.replace(self.values[i], value)
        self._profile = None
        self.values[i] = value
        self.completed[i] = completed
        self.cap_used[i] = cap
        self.instance_charge[i] += result.charged
        self.cumulative_charged += result.charged

        self.q = target_queue_size(self.r, t)
        if self.q > self.max_q:
            self.max_q = self.q
        return StepOutcome(ell, instance, cap, result.measured, result.completed,
                           result.charged, result.failed)

    # -- persistence -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "config_id": self.config_id,
            "kappa0": self.kappa0,
            "multiplier": self.multiplier,
            "max_cap": self.max_cap,
            "stream": {"pool_size": self.stream.pool_size, "seed": self.stream.seed,
                       "cursor": self.stream.cursor},
            "r": self.r,
            "theta": self.theta,
            "q": self.q,
            "max_q": self.max_q,
            "queue": [[ell, cap] for ell, cap in self.queue],
            "cumulative_charged": self.cumulative_charged,
            "values": list(self.values),
            "completed": list(self.completed),
            "cap_used": list(self.cap_used),
            "instances": list(self.instances),
            "seeds": [str(s) for s in self.seeds],
            "instance_charge": list(self.instance_charge),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ConfigurationTester":
        s = doc["stream"]
        tester = cls(doc["config_id"], doc["kappa0"],
                     InstanceStream(s["pool_size"], s["seed"], s["cursor"]),
                     doc["multiplier"], doc["max_cap"])
        tester.r = int(doc["r"])
        tester.theta = float(doc["theta"])
        tester.q = int(doc["q"])
        tester.max_q = int(doc["max_q"])
        tester.queue = deque((int(ell), float(cap)) for ell, cap in doc["queue"])
        tester.cumulative_charged = float(doc["cumulative_charged"])
        tester.values = [float(v) for v in doc["values"]]
        tester.completed = [bool(c) for c in doc["completed"]]
        tester.cap_used = [float(c) for c in doc["cap_used"]]
        tester.instances = [int(j) for j in doc["instances"]]
        tester.seeds = [int(s) for s in doc["seeds"]]
        tester.instance_charge = [float(c) for c in doc["instance_charge"]]
        if not (len(tester.values) == len(tester.completed) == len(tester.cap_used)
                == len(tester.instances) == len(tester.seeds) == tester.r):
            raise ValueError(f"tester {tester.config_id!r}: observation table does not match r")
        tester._sorted = _SortedBuffer(tester.values)
        return tester
