"""Execution backends and instance streams.

A runtime source answers one question: run configuration ``config`` on
instance ``instance`` (with instance seed ``seed``) under captime ``cap``.
Two sources ship here: :class:`SimulatedSource` looks runtimes up in a
pre-computed :class:`RuntimeMatrix`, and :class:`ProcessSource` spawns a real
command and kills it at the captime.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import os
import shlex
import signal
import subprocess
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

NON_RESUMING = "non-resuming"
RESUMING = "resuming"
CHARGE_MODES = (NON_RESUMING, RESUMING)


class RunnerError(RuntimeError):
    """A backend could not produce a measurement."""


class MatrixFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RunResult:
    measured: float
    completed: bool
    charged: float
    failed: bool = False


@dataclass
class RuntimeMatrix:
    """True runtimes in seconds, one row per configuration."""

    config_ids: List[str]
    instance_ids: List[str]
    runtimes: np.ndarray
    _row: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.config_ids = [str(c) for c in self.config_ids]
        self.instance_ids = [str(j) for j in self.instance_ids]
        self.runtimes = np.asarray(self.runtimes, dtype=float)
        n, m = len(self.config_ids), len(self.instance_ids)
        if self.runtimes.shape != (n, m):
            raise MatrixFormatError(
                f"runtime table has shape {self.runtimes.shape}, expected {(n, m)}")
        if len(set(self.config_ids)) != n:
            raise MatrixFormatError("duplicate configuration ids")
        if not np.all(np.isfinite(self.runtimes)) or np.any(self.runtimes < 0):
            raise MatrixFormatError("runtimes must be finite and non-negative")
        self._row = {c: i for i, c in enumerate(self.config_ids)}

    @property
    def n_configs(self) -> int:
        return len(self.config_ids)

    @property
    def n_instances(self) -> int:
        return len(self.instance_ids)

    def row(self, config_id) -> int:
        try:
            return self._row[str(config_id)]
        except KeyError:
            raise RunnerError(f"unknown configuration {config_id!r}") from None

    def validate_floor(self, kappa0: float) -> None:
        low = np.argwhere(self.runtimes < kappa0)
        if low.size:
            i, j = low[0]
            raise MatrixFormatError(
                f"runtime {self.runtimes[i, j]!r} for ({self.config_ids[i]}, "
                f"{self.instance_ids[j]}) is below kappa0={kappa0!r}")

    def mean_runtimes(self, max_cap: Optional[float] = None) -> np.ndarray:
        data = self.runtimes if max_cap is None else np.minimum(self.runtimes, max_cap)
        return data.mean(axis=1)

    def scaled(self, factor: float) -> "RuntimeMatrix":
        return RuntimeMatrix(self.config_ids, self.instance_ids, self.runtimes * factor)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["config_id", *self.instance_ids])
            for cid, row in zip(self.config_ids, self.runtimes):
                writer.writerow([cid, *(repr(float(x)) for x in row)])


def load_matrix(path, kappa0: float) -> RuntimeMatrix:
    """Read a runtime matrix CSV and check every entry against ``kappa0``.

    The header is ``config_id,<instance_1>,...``; each following row holds a
    configuration id and its runtimes in decimal seconds.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [row for row in rows if row and any(cell.strip() for cell in row)]
    if not rows:
        raise MatrixFormatError(f"{path}: empty matrix file")
    header = [cell.strip() for cell in rows[0]]
    if len(header) < 2:
        raise MatrixFormatError(f"{path}: header needs at least one instance column")
    instance_ids = header[1:]
    config_ids, table = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise MatrixFormatError(
                f"{path}:{lineno}: expected {len(header)} cells, found {len(row)}")
        values = []
        for col, cell in enumerate(row[1:], start=2):
            try:
                values.append(float(cell))
            except ValueError:
                raise MatrixFormatError(
                    f"{path}:{lineno}: column {col} is not numeric: {cell!r}") from None
        config_ids.append(row[0].strip())
        table.append(values)
    if not table:
        raise MatrixFormatError(f"{path}: no configuration rows")
    matrix = RuntimeMatrix(config_ids, instance_ids, np.array(table, dtype=float))
    matrix.validate_floor(kappa0)
    return matrix


def run_simulated(matrix: RuntimeMatrix, config, instance: int, cap: float,
                  prev_cap: float = 0.0, mode: str = NON_RESUMING) -> RunResult:
    """Capped lookup ``min(R(i, j), cap)`` with the chosen charge model.

    Non-resuming runs pay the full capped time; resuming runs pay only
    ``min(R, cap) - min(R, prev_cap)``, i.e. they continue where the previous
    attempt on the same instance stopped.
    """
    if cap <= 0:
        raise ValueError(f"cap must be positive, got {cap}")
    row = matrix.row(config)
    if not 0 <= instance < matrix.n_instances:
        raise RunnerError(f"unknown instance index {instance}")
    true = float(matrix.runtimes[row, instance])
    measured = min(true, cap)
    if mode == NON_RESUMING:
        charged = measured
    elif mode == RESUMING:
        charged = measured - min(true, prev_cap)
    else:
        raise ValueError(f"unknown charge mode {mode!r}")
    return RunResult(measured=measured, completed=true <= cap, charged=charged)


class SimulatedSource:
    """Runtime source backed by a :class:`RuntimeMatrix`."""

    clock = "virtual"

    def __init__(self, matrix: RuntimeMatrix, mode: str = NON_RESUMING):
        if mode not in CHARGE_MODES:
            raise ValueError(f"unknown charge mode {mode!r}")
        self.matrix = matrix
        self.mode = mode
        self._runtimes = matrix.runtimes
        self._row = matrix._row

    @property
    def n_instances(self) -> int:
        return self.matrix.n_instances

    def instance_name(self, instance: int) -> str:
        return self.matrix.instance_ids[instance]

    def run(self, config, instance: int, seed: int, cap: float, prev_cap: float = 0.0) -> RunResult:
        # Inlined run_simulated: this is on the scheduler's hot path.
        try:
            true = float(self._runtimes[self._row[config], instance])
        except (KeyError, IndexError):
            raise RunnerError(f"no runtime for configuration {config!r}, instance {instance}") from None
        measured = true if true < cap else cap
        if self.mode == NON_RESUMING:
            charged = measured
        else:
            charged = measured - (true if true < prev_cap else prev_cap)
        return RunResult(measured, true <= cap, charged)

    def describe(self) -> dict:
        return {"kind": "matrix", "charge_mode": self.mode}


def substitute(template: str, instance: str, seed: int, cap: float) -> str:
    return (template.replace("{instance}", shlex.quote(str(instance)))
            .replace("{seed}", str(int(seed)))
            .replace("{cutoff}", repr(float(cap))))


def run_process(command_template: str, instance_path: str, seed: int, cap: float,
                nonzero_policy: str = "completed") -> RunResult:
    """Run a real command under a wall-clock captime.

    The placeholders ``{instance}``, ``{seed}`` and ``{cutoff}`` are replaced
    literally.  The child runs in its own process group, which is killed
    when the captime elapses.

    Args:
        nonzero_policy: ``"completed"`` records a nonzero exit before the cap
            as a completed (but failed) run; ``"timeout"`` records it as
            censored at the cap.

    Raises:
        RunnerError: the command could not be spawned.
    """
    if cap <= 0:
        raise ValueError(f"cap must be positive, got {cap}")
    if nonzero_policy not in ("completed", "timeout"):
        raise ValueError(f"unknown nonzero-exit policy {nonzero_policy!r}")
    argv = shlex.split(substitute(command_template, instance_path, seed, cap))
    start = time.perf_counter()
    try:
        proc = subprocess.Popen(argv, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
                                start_new_session=True)
    except OSError as exc:
        raise RunnerError(f"could not start {argv[0]!r}: {exc}") from exc
    try:
        returncode = proc.wait(timeout=cap)
    except subprocess.TimeoutExpired:
        _kill_group(proc)
        elapsed = time.perf_counter() - start
        return RunResult(measured=cap, completed=False, charged=elapsed)
    elapsed = time.perf_counter() - start
    measured = min(elapsed, cap)
    if returncode != 0:
        logger.warning("command exited with status %d on %s", returncode, instance_path)
        if nonzero_policy == "timeout":
            return RunResult(measured=cap, completed=False, charged=elapsed, failed=True)
        return RunResult(measured=measured, completed=True, charged=elapsed, failed=True)
    return RunResult(measured=measured, completed=True, charged=elapsed)


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except ProcessLookupError:
        pass
    proc.wait()


class ProcessSource:
    """Runtime source that executes one command template per configuration."""

    clock = "wall"

    def __init__(self, commands: Dict[str, str], instances: Sequence[str],
                 nonzero_policy: str = "completed"):
        if not instances:
            raise ValueError("instance pool is empty")
        self.commands = dict(commands)
        self.instances = list(instances)
        self.nonzero_policy = nonzero_policy

    @property
    def n_instances(self) -> int:
        return len(self.instances)

    def instance_name(self, instance: int) -> str:
        return self.instances[instance]

    def run(self, config, instance: int, seed: int, cap: float, prev_cap: float = 0.0) -> RunResult:
        try:
            template = self.commands[config]
        except KeyError:
            raise RunnerError(f"unknown configuration {config!r}") from None
        return run_process(template, self.instances[instance], seed, cap, self.nonzero_policy)

    def describe(self) -> dict:
        return {"kind": "process", "commands": self.commands, "instances": self.instances,
                "nonzero_policy": self.nonzero_policy}


def list_instances(directory) -> List[str]:
    names = sorted(os.listdir(directory))
    return [os.path.join(directory, name) for name in names
            if os.path.isfile(os.path.join(directory, name))]


def _digest(*parts) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x00")
    return h.digest()


def stream_seed(master_seed: int, config_id) -> int:
    """64-bit stream seed derived from the master seed and a configuration id."""
    return int.from_bytes(_digest("stream", int(master_seed), str(config_id))[:8], "little")


class InstanceStream:
    """I.i.d. uniform draws from an instance pool, addressable by ordinal.

    Ordinal ``l`` maps to ``(instance index, instance seed)`` through a keyed
    hash of ``(seed, l)``, so the stream needs no hidden generator state: the
    cursor alone is enough to checkpoint and resume it.
    """

    def __init__(self, pool_size: int, seed: int, cursor: int = 0):
        if pool_size < 1:
            raise ValueError("instance pool is empty")
        self.pool_size = int(pool_size)
        self.seed = int(seed)
        self.cursor = int(cursor)

    def draw(self, ordinal: int) -> Tuple[int, int]:
        d = _digest(self.seed, int(ordinal))
        index = int.from_bytes(d[:8], "little") % self.pool_size
        return index, int.from_bytes(d[8:], "little")

    def next_instance(self) -> Tuple[int, int]:
        self.cursor += 1
        return self.draw(self.cursor)
