"""Configuration samplers for the quantile pool's real backend."""
from __future__ import annotations

import shlex
import subprocess

import numpy as np

from .runners import ProcessSource, RunnerError


class GeneratorCommandSampler:
    """Draws configurations by calling a user-supplied generator command.

    The command template may use ``{seed}`` and ``{count}``.  It must print
    ``count`` lines of the form ``<config_id><TAB><command template>``; each
    template is registered with ``source`` so the pool can run it.  The pool
    is treated as unbounded (no ``size`` attribute), so duplicates are kept.
    """

    def __init__(self, command: str, source: ProcessSource, timeout: float = 600.0):
        self.command = command
        self.source = source
        self.timeout = timeout

    def draw(self, rng: np.random.Generator, n: int) -> list:
        seed = int(rng.integers(2**63))
        argv = shlex.split(self.command.replace("{seed}", str(seed)).replace("{count}", str(n)))
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise RunnerError(f"configuration generator failed: {exc}") from exc
        if proc.returncode != 0:
            raise RunnerError(f"configuration generator exited with status {proc.returncode}: "
                              f"{proc.stderr.strip()[:200]}")
        ids = []
        for lineno, line in enumerate(proc.stdout.splitlines(), start=1):
            if not line.strip():
                continue
            cid, sep, template = line.partition("\t")
            if not sep or not template.strip():
                raise RunnerError(f"generator output line {lineno}: expected '<id>\\t<template>'")
            known = self.source.commands.get(cid)
            if known is not None and known != template:
                raise RunnerError(f"generator gave two templates for configuration {cid!r}")
            self.source.commands[cid] = template
            ids.append(cid)
        if len(ids) != n:
            raise RunnerError(f"generator printed {len(ids)} configurations, expected {n}")
        return ids
