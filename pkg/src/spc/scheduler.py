"""Anytime argmin-LCB scheduler over a pool of configuration testers."""
from __future__ import annotations

import json
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .lcb import NUM_LEVELS, lcb_from_profiles, min_samples_for_nontrivial
from .runners import InstanceStream, stream_seed
from .tester import ConfigurationTester

CHECKPOINT_FORMAT = "spc-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Certificate:
    epsilon: float
    delta: float
    lam: float
    confidence: float
    r_winner: int
    t: int


def _certificate_gap(delta: float, r: int, t: int, eps: float, lam: float) -> float:
    log_term = max(1.0, math.log2(1.0 / delta))
    return eps * eps * delta - 72.0 * lam * math.log2(max(t, 2) * log_term) / r


def certificate_holds(delta: float, r: int, t: int, eps: float, lam: float) -> bool:
    """``eps^2 delta >= 72 lam log2(t log2(1/delta)) / r`` with the usual clamps."""
    return _certificate_gap(delta, r, t, eps, lam) >= 0.0


def certify_delta(r_winner: int, t: int, epsilon: float, lam: float = 1.0,
                  rtol: float = 1e-10) -> Optional[Certificate]:
    """Smallest ``delta`` for which the winner is certified ``(epsilon, delta)``-optimal.

    The certificate holds with probability at least ``1 - exp(-2 lam)``.
    Returns ``None`` when no ``delta <= 1/2`` satisfies the inequality.
    """
    if r_winner < 1:
        raise ValueError(f"r_winner must be >= 1, got {r_winner}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not lam >= 1:
        raise ValueError(f"lambda must be >= 1, got {lam}")
    hi = 0.5
    if not certificate_holds(hi, r_winner, t, epsilon, lam):
        return None
    lo = 0.25
    while certificate_holds(lo, r_winner, t, epsilon, lam):
        hi, lo = lo, lo / 2
        if lo < 1e-300:
            break
    if lo >= 1e-300:
        # invariant: lo fails, hi holds
        while hi / lo - 1.0 > rtol:
            mid = math.sqrt(lo * hi)
            if not lo < mid < hi:
                break
            if certificate_holds(mid, r_winner, t, epsilon, lam):
                hi = mid
            else:
                lo = mid
    return Certificate(epsilon=float(epsilon), delta=hi, lam=float(lam),
                       confidence=1.0 - math.exp(-2.0 * lam), r_winner=int(r_winner), t=int(t))


def suboptimality_bound(t: int, eps: float, delta: float) -> float:
    """``eps^-2 delta^-1 log2(t log2(1/delta))``, the active-instance growth curve."""
    return math.log2(max(t, 2) * max(1.0, math.log2(1.0 / delta))) / (eps * eps * delta)


class Scheduler:
    """Structured procrastination with confidence over a finite configuration set.

    Each step polls every tester's lower confidence bound, hands control to
    the tester with the smallest bound (exact ties rotate round-robin) and
    logs the outcome.  The run can be stopped after any step; the current
    answer is the configuration with the most active instances.

    Args:
        config_ids: configurations, in index order.
        source: runtime source (see :mod:`spc.runners`).
        kappa0: minimum runtime; initial captime and bound floor.
        seed: master seed; every tester derives its own instance stream.
        multiplier: captime growth factor.
        max_cap: optional captime never exceeded.
    """

    def __init__(self, config_ids: Sequence, source, kappa0: float, seed: int = 0,
                 multiplier: float = 2.0, max_cap: Optional[float] = None,
                 _testers: Optional[List[ConfigurationTester]] = None):
        if len(config_ids) == 0:
            raise ValueError("need at least one configuration")
        self.config_ids = list(config_ids)
        self.source = source
        self.kappa0 = float(kappa0)
        self.seed = int(seed)
        self.multiplier = float(multiplier)
        self.max_cap = None if max_cap is None else float(max_cap)
        if _testers is None:
            _testers = [
                ConfigurationTester(cid, kappa0,
                                    InstanceStream(source.n_instances, stream_seed(seed, cid)),
                                    multiplier, max_cap)
                for cid in self.config_ids
            ]
        self.testers = _testers
        self.t = 0
        self.charged_total = 0.0
        self.elapsed_wall = 0.0
        self._rr = 0
        n = len(self.testers)
        self._r = np.array([tr.r for tr in self.testers], dtype=float)
        self._profiles = np.zeros((n, NUM_LEVELS))
        self._stale = set(range(n))
        self._max_r = max(tr.r for tr in self.testers)

    @property
    def n(self) -> int:
        return len(self.testers)

    def spent(self) -> float:
        """Budget consumed: charged virtual time, or wall time for real backends."""
        if getattr(self.source, "clock", "virtual") == "wall":
            return self.elapsed_wall
        return self.charged_total

    # -- selection -------------------------------------------------------
    def lcbs(self, t: Optional[int] = None) -> np.ndarray:
        """Current lower confidence bounds of all testers at iteration ``t``."""
        t = self.t if t is None else t
        out = np.full(self.n, self.kappa0)
        # below this many samples every bound is exactly kappa0
        threshold = min_samples_for_nontrivial(t) * (1.0 - 1e-12)
        cand = np.flatnonzero(self._r >= threshold)
        if cand.size:
            for i in self._stale.intersection(cand.tolist()):
                self._profiles[i] = self.testers[i].profile()
                self._stale.discard(i)
            out[cand] = lcb_from_profiles(self._profiles[cand], self._r[cand], t, self.kappa0)
        return out

    def _choose(self):
        if self._max_r < min_samples_for_nontrivial(self.t) * (1.0 - 1e-12):
            # every bound is kappa0: plain round-robin
            return self._rr, self.kappa0
        bounds = self.lcbs()
        tied = np.flatnonzero(bounds == bounds.min())
        pos = int(np.searchsorted(tied, self._rr))
        idx = int(tied[pos] if pos < tied.size else tied[0])
        return idx, float(bounds[idx])

    def select_next(self) -> int:
        """Index of the tester with the smallest bound; advances the tie pointer."""
        idx, _ = self._choose()
        self._rr = (idx + 1) % self.n
        return idx

    def step(self) -> dict:
        """Run one iteration and return its event record."""
        start = time.perf_counter()
        idx, bound = self._choose()
        tester = self.testers[idx]
        t = self.t + 1
        out = tester.execute_step(t, self.source)
        self.t = t
        self._rr = (idx + 1) % self.n
        self.charged_total += out.charged
        self._r[idx] = tester.r
        if tester.r > self._max_r:
            self._max_r = tester.r
        self._stale.add(idx)
        self.elapsed_wall += time.perf_counter() - start
        return {
            "t": t,
            "config": idx,
            "config_id": tester.config_id,
            "instance": out.ordinal,
            "cap_s": out.cap,
            "measured_s": out.measured,
            "completed": out.completed,
            "failed": out.failed,
            "charge_s": out.charged,
            "lcb_s": bound,
            "r": tester.r,
            "q": tester.q,
            "charged_total_s": self.charged_total,
        }

    def run_until(self, budget: float, sink: Optional[Callable[[dict], None]] = None,
                  checkpoint: Optional[Callable[["Scheduler"], None]] = None,
                  checkpoint_every: int = 0, stop: Optional[Callable[[], bool]] = None,
                  max_steps: Optional[int] = None) -> dict:
        """Step until ``budget`` seconds have been spent (or until stopped).

        ``budget`` is absolute: a restored scheduler continues toward the
        same total.  ``checkpoint`` is called every ``checkpoint_every``
        iterations; ``stop`` is polled between steps.
        """
        if not budget > 0:
            raise ValueError(f"budget must be positive, got {budget!r}")
        steps = 0
        while self.spent() < budget:
            if stop is not None and stop():
                break
            if max_steps is not None and steps >= max_steps:
                break
            event = self.step()
            steps += 1
            if sink is not None:
                sink(event)
            if checkpoint is not None and checkpoint_every and self.t % checkpoint_every == 0:
                checkpoint(self)
        return self.report()

    # -- answers ---------------------------------------------------------
    def current_winner(self) -> int:
        """Index with the most active instances; ties by capped mean, then index."""
        best, best_key = 0, None
        for i, tr in enumerate(self.testers):
            key = (-tr.r, tr.capped_mean(), i)
            if best_key is None or key < best_key:
                best, best_key = i, key
        return best

    def certify(self, epsilon: float, lam: float = 1.0) -> Optional[Certificate]:
        winner = self.testers[self.current_winner()]
        if winner.r < 1:
            return None
        return certify_delta(winner.r, self.t, epsilon, lam)

    def report(self) -> dict:
        bounds = self.lcbs()
        winner = self.current_winner()
        configs = []
        for i, tr in enumerate(self.testers):
            mean = tr.capped_mean()
            configs.append({
                "config_id": tr.config_id,
                "r": tr.r,
                "lcb_s": float(bounds[i]),
                "capped_mean_s": None if math.isinf(mean) else mean,
                "charged_s": tr.cumulative_charged,
            })
        return {
            "winner": winner,
            "winner_id": self.testers[winner].config_id,
            "t": self.t,
            "charged_total_s": self.charged_total,
            "configs": configs,
        }

    # -- persistence -----------------------------------------------------
    def snapshot(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "t": self.t,
            "rr": self._rr,
            "charged_total": self.charged_total,
            "elapsed_wall": self.elapsed_wall,
            "seed": self.seed,
            "kappa0": self.kappa0,
            "multiplier": self.multiplier,
            "max_cap": self.max_cap,
            "config_ids": self.config_ids,
            "backend": self.source.describe() if hasattr(self.source, "describe") else {},
            "testers": [tr.to_dict() for tr in self.testers],
        }

    @classmethod
    def restore(cls, doc: dict, source) -> "Scheduler":
        check_checkpoint(doc)
        try:
            testers = [ConfigurationTester.from_dict(d) for d in doc["testers"]]
            sched = cls(doc["config_ids"], source, doc["kappa0"], doc["seed"],
                        doc["multiplier"], doc["max_cap"], _testers=testers)
            sched.t = int(doc["t"])
            sched._rr = int(doc["rr"])
            sched.charged_total = float(doc["charged_total"])
            sched.elapsed_wall = float(doc["elapsed_wall"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
        if len(testers) != len(sched.config_ids):
            raise CheckpointError("corrupt checkpoint: tester count mismatch")
        return sched


def check_checkpoint(doc) -> None:
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not an SPC checkpoint document")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {doc.get('version')!r} is not supported "
            f"(expected {CHECKPOINT_VERSION})")


def dump_checkpoint(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def write_checkpoint(path, doc: dict) -> None:
    """Atomically replace ``path`` with ``doc``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(dump_checkpoint(doc))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_checkpoint(path) -> dict:
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from exc
    check_checkpoint(doc)
    return doc


def event_line(event: dict) -> str:
    return json.dumps(event, separators=(",", ":"))


def certificate_dict(cert: Certificate) -> dict:
    return asdict(cert)
