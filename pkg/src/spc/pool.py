"""Parallel SPC levels over doubling sample sizes for very large configuration pools.

Level ``k`` runs SPC on about ``c * k * 2**k`` configurations drawn from the
pool, which targets the top ``2**-k`` quantile of mean runtimes.  Levels share
one virtual processor: a deficit counter gives level ``k`` a share of charged
time proportional to ``1/k**2`` among the active levels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from .runners import _digest
from .scheduler import Scheduler


class FinitePoolSampler:
    """Uniform draws, with replacement, from a finite list of configuration ids."""

    def __init__(self, config_ids: Sequence):
        if len(config_ids) == 0:
            raise ValueError("configuration pool is empty")
        self.config_ids = list(config_ids)

    @property
    def size(self) -> int:
        return len(self.config_ids)

    def draw(self, rng: np.random.Generator, n: int) -> list:
        return [self.config_ids[i] for i in rng.integers(self.size, size=n)]


def level_size(k: int, c: float = 1.0) -> int:
    """Target sample size ``ceil(c * k * 2**k)`` of level ``k``."""
    if k < 1:
        raise ValueError(f"level must be >= 1, got {k}")
    return math.ceil(c * k * 2**k)


def level_seed(seed: int, k: int) -> int:
    return int.from_bytes(_digest("level", int(seed), int(k))[:8], "little") >> 1


@dataclass
class LevelState:
    k: int
    configs: list
    scheduler: Scheduler
    charged: float = 0.0
    deficit: float = 0.0
    spawned_next: bool = False

    @property
    def weight(self) -> float:
        return 1.0 / (self.k * self.k)

    @property
    def activation_threshold(self) -> float:
        return self.scheduler.kappa0 * len(self.configs)


class QuantilePool:
    """Time-shares SPC runs at levels ``k = 1, 2, ...``.

    Args:
        sampler: object with ``draw(rng, n) -> list of config ids``.  If it
            has a ``size`` attribute the pool is treated as finite: draws are
            de-duplicated within a level and topped up until the level reaches
            its target size or exhausts the pool.
        source: runtime source able to run every id the sampler can return.
        kappa0: minimum runtime.
        seed: master seed for sampling and instance streams.
        sample_constant: ``c`` in the level size ``ceil(c k 2**k)``.
        levels: levels active from the start (default: just level 1).
        max_level: highest level ever activated; ``None`` for unbounded.
            Set ``max_level`` to the largest of ``levels`` to disable lazy
            activation.
    """

    def __init__(self, sampler, source, kappa0: float, seed: int = 0,
                 sample_constant: float = 1.0, multiplier: float = 2.0,
                 max_cap: Optional[float] = None, levels: Iterable[int] = (1,),
                 max_level: Optional[int] = None):
        if not sample_constant > 0:
            raise ValueError("sample_constant must be positive")
        self.sampler = sampler
        self.source = source
        self.kappa0 = float(kappa0)
        self.seed = int(seed)
        self.sample_constant = float(sample_constant)
        self.multiplier = multiplier
        self.max_cap = max_cap
        self.max_level = max_level
        self.levels: List[LevelState] = []
        self.total_charged = 0.0
        for k in sorted(set(levels)):
            self.activate_level(k)
        if not self.levels:
            raise ValueError("at least one level must be active")

    def _sample(self, k: int) -> list:
        target = level_size(k, self.sample_constant)
        rng = np.random.default_rng([self.seed, k])
        limit = getattr(self.sampler, "size", None)
        if limit is None:
            return list(self.sampler.draw(rng, target))
        target = min(target, limit)
        chosen, seen = [], set()
        while len(chosen) < target:
            for cid in self.sampler.draw(rng, target - len(chosen)):
                if cid not in seen:
                    seen.add(cid)
                    chosen.append(cid)
        return chosen

    def activate_level(self, k: int) -> LevelState:
        """Sample level ``k``'s configurations and start a fresh SPC run on them."""
        if any(lv.k == k for lv in self.levels):
            raise ValueError(f"level {k} is already active")
        configs = self._sample(k)
        sched = Scheduler(configs, self.source, self.kappa0, seed=level_seed(self.seed, k),
                          multiplier=self.multiplier, max_cap=self.max_cap)
        level = LevelState(k=k, configs=configs, scheduler=sched)
        self.levels.append(level)
        self.levels.sort(key=lambda lv: lv.k)
        return level

    def level(self, k: int) -> LevelState:
        for lv in self.levels:
            if lv.k == k:
                return lv
        raise KeyError(f"level {k} is not active")

    def step(self) -> dict:
        """Give one SPC step to the level with the largest deficit."""
        chosen = self.levels[0]
        for lv in self.levels[1:]:
            if lv.deficit > chosen.deficit:
                chosen = lv
        event = chosen.scheduler.step()
        charge = event["charge_s"]
        total_weight = sum(lv.weight for lv in self.levels)
        for lv in self.levels:
            lv.deficit += charge * lv.weight / total_weight
        chosen.deficit -= charge
        chosen.charged += charge
        self.total_charged += charge

        top = self.levels[-1]
        if (chosen is top and not top.spawned_next
                and top.charged >= top.activation_threshold
                and (self.max_level is None or top.k < self.max_level)):
            top.spawned_next = True
            self.activate_level(top.k + 1)
        return {"level": chosen.k, **event}

    def run_until(self, budget: float, sink: Optional[Callable[[dict], None]] = None,
                  max_steps: Optional[int] = None) -> dict:
        steps = 0
        while self.total_charged < budget:
            if max_steps is not None and steps >= max_steps:
                break
            event = self.step()
            steps += 1
            if sink is not None:
                sink(event)
        return self.report()

    def winner(self, k: int):
        """Current answer of level ``k``'s SPC run (a configuration id)."""
        try:
            lv = self.level(k)
        except KeyError:
            raise ValueError(f"level {k} is not active") from None
        sched = lv.scheduler
        return sched.config_ids[sched.current_winner()]

    def shares(self) -> dict:
        if self.total_charged == 0:
            return {lv.k: 0.0 for lv in self.levels}
        return {lv.k: lv.charged / self.total_charged for lv in self.levels}

    def target_shares(self) -> dict:
        total = sum(lv.weight for lv in self.levels)
        return {lv.k: lv.weight / total for lv in self.levels}

    def report(self) -> dict:
        return {
            "total_charged_s": self.total_charged,
            "levels": [
                {
                    "k": lv.k,
                    "n_configs": len(lv.configs),
                    "charged_s": lv.charged,
                    "t": lv.scheduler.t,
                    "winner_id": self.winner(lv.k),
                }
                for lv in self.levels
            ],
        }
