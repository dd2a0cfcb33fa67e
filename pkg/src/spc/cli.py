"""Command-line interface: ``spc run|resume|trajectory|certificate|analyze|baseline|pool``.

All times are decimal seconds.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import signal
import sys
import threading
from typing import List, Optional

from .analysis import LogFormatError, eps_delta_profile, read_events, trajectory
from .baseline import run_baseline, sp_queue_size
from .pool import FinitePoolSampler, QuantilePool
from .runners import (CHARGE_MODES, NON_RESUMING, MatrixFormatError, ProcessSource,
                      RunnerError, SimulatedSource, list_instances, load_matrix)
from .samplers import GeneratorCommandSampler
from .scheduler import (CheckpointError, Scheduler, certificate_dict, event_line,
                        read_checkpoint, write_checkpoint)
from .tester import StepError

logger = logging.getLogger("spc")

EXIT_INTERRUPTED = 130


class UsageError(Exception):
    pass


def _positive(kind):
    def parse(text):
        value = kind(text)
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text}") from None


def _add_backend(p):
    p.add_argument("--matrix", help="runtime matrix CSV (simulated backend)")
    p.add_argument("--command", action="append", default=[],
                   help="command template with {instance} {seed} {cutoff}; repeat once per "
                        "configuration (real backend)")
    p.add_argument("--instances", help="directory of instance files (real backend)")
    p.add_argument("--nonzero-exit", choices=("completed", "timeout"), default="completed",
                   help="how a nonzero exit before the cap is recorded (real backend)")


def _add_search(p, budget_required=True):
    p.add_argument("--kappa0", type=_positive(float), required=True)
    p.add_argument("--multiplier", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget-seconds", type=_positive(float), required=budget_required)
    p.add_argument("--charge-mode", choices=CHARGE_MODES, default=NON_RESUMING)
    p.add_argument("--max-cap", type=_positive(float))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run SPC on a configuration set")
    _add_backend(p)
    _add_search(p)
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--checkpoint", help="checkpoint path (default: OUTPUT/checkpoint.json)")
    p.add_argument("--checkpoint-every", type=int, default=1000, help="iterations between checkpoints")
    p.add_argument("--max-steps", type=int, help="stop after this many iterations (as if interrupted)")

    p = sub.add_parser("resume", help="continue a run from its checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--budget-seconds", type=_positive(float), help="override the stored budget")
    p.add_argument("--output", help="output directory (default: the original one)")
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--max-steps", type=int)

    p = sub.add_parser("trajectory", help="incumbent over charged time from an event log")
    p.add_argument("--events", required=True)
    p.add_argument("--grid", type=_float_list, help="comma-separated charged-time grid")
    p.add_argument("--grid-step", type=_positive(float), help="regular grid spacing")
    p.add_argument("--grid-max", type=_positive(float), help="end of the regular grid (default: log end)")
    p.add_argument("--output", help="CSV path (default: stdout)")

    p = sub.add_parser("certificate", help="(epsilon, delta) guarantee for a checkpointed run")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--epsilon", type=_positive(float), required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)

    p = sub.add_parser("analyze", help="(epsilon, delta)-optimality profile of a runtime matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--delta", type=_float_list, action="append", required=True,
                   help="delta value(s); comma-separated and/or repeated")
    p.add_argument("--max-cap", type=_positive(float))
    p.add_argument("--output", help="CSV path (default: stdout)")

    p = sub.add_parser("baseline", help="fixed-queue doubling baseline on a runtime matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--kappa0", type=_positive(float), required=True)
    p.add_argument("--budget-seconds", type=_positive(float), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--queue-size", type=int)
    p.add_argument("--epsilon", type=float, help="derive the queue size from epsilon/zeta/beta")
    p.add_argument("--zeta", type=float, default=0.1)
    p.add_argument("--beta-levels", type=int)
    p.add_argument("--output", help="report JSON path (default: stdout)")

    p = sub.add_parser("pool", help="quantile pool over a large configuration space")
    p.add_argument("--matrix", help="sample configurations uniformly from the matrix rows")
    p.add_argument("--config-generator",
                   help="command printing '<id>\\t<template>' lines; placeholders {seed} {count}")
    p.add_argument("--instances", help="instance directory (with --config-generator)")
    p.add_argument("--nonzero-exit", choices=("completed", "timeout"), default="completed")
    _add_search(p)
    p.add_argument("--sample-constant", type=_positive(float), default=1.0)
    p.add_argument("--max-level", type=int)
    p.add_argument("--output", required=True, help="output directory")
    return parser


# -- helpers ---------------------------------------------------------------

def _source_from_args(args):
    if args.matrix and args.command:
        raise UsageError("use either --matrix or --command, not both")
    if args.matrix:
        matrix = load_matrix(args.matrix, args.kappa0)
        return matrix.config_ids, SimulatedSource(matrix, args.charge_mode), {
            "matrix": os.path.abspath(args.matrix), "charge_mode": args.charge_mode}
    if args.command:
        if not args.instances:
            raise UsageError("--command needs --instances")
        if args.charge_mode != NON_RESUMING:
            raise UsageError("real runs cannot resume; use --charge-mode non-resuming")
        commands = {str(i): cmd for i, cmd in enumerate(args.command)}
        instances = list_instances(args.instances)
        if not instances:
            raise UsageError(f"no instance files in {args.instances}")
        return list(commands), ProcessSource(commands, instances, args.nonzero_exit), {}
    raise UsageError("one of --matrix or --command is required")


def _source_from_doc(doc: dict):
    run = doc.get("run", {})
    backend = doc.get("backend", {})
    if backend.get("kind") == "matrix":
        matrix = load_matrix(run["matrix"], doc["kappa0"])
        return SimulatedSource(matrix, backend.get("charge_mode", NON_RESUMING))
    if backend.get("kind") == "process":
        return ProcessSource(backend["commands"], backend["instances"],
                             backend.get("nonzero_policy", "completed"))
    raise CheckpointError("checkpoint does not describe a known backend")


def _write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _write_csv(path, rows: List[dict], fields: List[str]) -> None:
    fh = sys.stdout if path is None else open(path, "w", newline="")
    try:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in fields})
    finally:
        if fh is not sys.stdout:
            fh.close()


class _StopFlag:
    """Set by SIGINT/SIGTERM; polled by the scheduler between steps."""

    def __init__(self):
        self.event = threading.Event()
        self._old = {}

    def __enter__(self):
        if threading.current_thread() is threading.main_thread():
            for sig in (signal.SIGINT, signal.SIGTERM):
                self._old[sig] = signal.signal(sig, self._handle)
        return self

    def _handle(self, signum, frame):
        logger.warning("signal %d received; stopping at the next step boundary", signum)
        self.event.set()

    def __exit__(self, *exc):
        for sig, old in self._old.items():
            signal.signal(sig, old)

    def __call__(self):
        return self.event.is_set()


def _drive(sched: Scheduler, run: dict, output: str, checkpoint_path: str,
           max_steps: Optional[int]) -> int:
    """Common loop of ``run`` and ``resume``; returns the exit status."""
    events_path = os.path.join(output, "events.jsonl")
    mode = "r+" if os.path.exists(events_path) else "w"
    with open(events_path, mode) as log, _StopFlag() as stop:
        log.seek(run.get("events_offset", 0))
        log.truncate()

        def sink(event):
            log.write(event_line(event) + "\n")

        def checkpoint(s):
            log.flush()
            run["events_offset"] = log.tell()
            doc = s.snapshot()
            doc["run"] = run
            write_checkpoint(checkpoint_path, doc)

        try:
            report = sched.run_until(run["budget"], sink=sink, checkpoint=checkpoint,
                                     checkpoint_every=run["checkpoint_every"], stop=stop,
                                     max_steps=max_steps)
        except StepError as exc:
            logger.error("%s; state preserved in %s", exc, checkpoint_path)
            return 3
        checkpoint(sched)
    interrupted = sched.spent() < run["budget"]
    report["interrupted"] = interrupted
    report["checkpoint"] = os.path.abspath(checkpoint_path)
    _write_json(os.path.join(output, "report.json"), report)
    return EXIT_INTERRUPTED if interrupted and stop() else 0


# -- subcommands -----------------------------------------------------------

def cmd_run(args) -> int:
    if not args.multiplier > 1:
        raise UsageError("--multiplier must exceed 1")
    config_ids, source, run = _source_from_args(args)
    os.makedirs(args.output, exist_ok=True)
    checkpoint_path = args.checkpoint or os.path.join(args.output, "checkpoint.json")
    sched = Scheduler(config_ids, source, args.kappa0, seed=args.seed,
                      multiplier=args.multiplier, max_cap=args.max_cap)
    run.update({"budget": args.budget_seconds, "checkpoint_every": args.checkpoint_every,
                "output": os.path.abspath(args.output), "events_offset": 0})
    return _drive(sched, run, args.output, checkpoint_path, args.max_steps)


def cmd_resume(args) -> int:
    doc = read_checkpoint(args.checkpoint)
    run = dict(doc.get("run") or {})
    if "budget" not in run:
        raise CheckpointError("checkpoint has no run section; it was not written by `spc run`")
    source = _source_from_doc(doc)
    sched = Scheduler.restore(doc, source)
    if args.budget_seconds is not None:
        run["budget"] = args.budget_seconds
    if args.checkpoint_every is not None:
        run["checkpoint_every"] = args.checkpoint_every
    output = args.output or run["output"]
    if args.output and os.path.abspath(args.output) != run["output"]:
        os.makedirs(output, exist_ok=True)
        old = os.path.join(run["output"], "events.jsonl")
        with open(old, "rb") as src, open(os.path.join(output, "events.jsonl"), "wb") as dst:
            dst.write(src.read(run["events_offset"]))
        run["output"] = os.path.abspath(output)
    return _drive(sched, run, output, args.checkpoint, args.max_steps)


def cmd_trajectory(args) -> int:
    events = read_events(args.events)
    if args.grid is not None:
        grid = args.grid
    elif args.grid_step is not None:
        end = args.grid_max or (events[-1]["charged_total_s"] if events else 0.0)
        n = int(end // args.grid_step)
        grid = [args.grid_step * i for i in range(1, n + 1)]
    else:
        grid = []
    rows = trajectory(events, grid)
    _write_csv(args.output, rows,
               ["charged_time_s", "incumbent", "incumbent_id", "incumbent_capped_mean_s"])
    return 0


def cmd_certificate(args) -> int:
    doc = read_checkpoint(args.checkpoint)
    sched = Scheduler.restore(doc, source=None)
    if args.lam < 1:
        raise UsageError("--lambda must be >= 1")
    winner = sched.current_winner()
    cert = sched.certify(args.epsilon, args.lam)
    if cert is None:
        print(f"no certificate at these parameters (epsilon={args.epsilon}, lambda={args.lam}, "
              f"r={sched.testers[winner].r}, t={sched.t})")
        return 2
    out = certificate_dict(cert)
    out["winner_id"] = sched.testers[winner].config_id
    _write_json(None, out)
    return 0


def cmd_analyze(args) -> int:
    deltas = [d for group in args.delta for d in group]
    matrix = load_matrix(args.matrix, 0.0)
    rows = eps_delta_profile(matrix, deltas, args.max_cap)
    _write_csv(args.output, rows,
               ["delta", "config_id", "theta_star_s", "capped_mean_s", "epsilon_min", "cdf"])
    return 0


def cmd_baseline(args) -> int:
    matrix = load_matrix(args.matrix, args.kappa0)
    if args.queue_size is not None:
        queue = args.queue_size
    elif args.epsilon is not None:
        if args.beta_levels is None:
            raise UsageError("--epsilon needs --beta-levels")
        queue = sp_queue_size(args.epsilon, args.zeta, matrix.n_configs, args.beta_levels)
    else:
        raise UsageError("give --queue-size or --epsilon/--beta-levels")
    report = run_baseline(matrix, queue, args.kappa0, args.budget_seconds, seed=args.seed)
    report["charge_before_cap"] = [{"cap_s": cap, "charged_s": charge}
                                   for cap, charge in report["charge_before_cap"].items()]
    _write_json(args.output, report)
    return 0


def cmd_pool(args) -> int:
    if args.matrix and args.config_generator:
        raise UsageError("use either --matrix or --config-generator, not both")
    if args.matrix:
        matrix = load_matrix(args.matrix, args.kappa0)
        sampler = FinitePoolSampler(matrix.config_ids)
        source = SimulatedSource(matrix, args.charge_mode)
    elif args.config_generator:
        if not args.instances:
            raise UsageError("--config-generator needs --instances")
        source = ProcessSource({}, list_instances(args.instances), args.nonzero_exit)
        sampler = GeneratorCommandSampler(args.config_generator, source)
    else:
        raise UsageError("one of --matrix or --config-generator is required")
    os.makedirs(args.output, exist_ok=True)
    pool = QuantilePool(sampler, source, args.kappa0, seed=args.seed,
                        sample_constant=args.sample_constant, multiplier=args.multiplier,
                        max_cap=args.max_cap, max_level=args.max_level)
    with open(os.path.join(args.output, "events.jsonl"), "w") as log, _StopFlag() as stop:
        steps_done = 0
        try:
            while pool.total_charged < args.budget_seconds and not stop():
                log.write(event_line(pool.step()) + "\n")
                steps_done += 1
        except StepError as exc:
            logger.error("%s", exc)
            return 3
    report = pool.report()
    report["shares"] = {str(k): v for k, v in pool.shares().items()}
    _write_json(os.path.join(args.output, "report.json"), report)
    return 0


COMMANDS = {
    "run": cmd_run,
    "resume": cmd_resume,
    "trajectory": cmd_trajectory,
    "certificate": cmd_certificate,
    "analyze": cmd_analyze,
    "baseline": cmd_baseline,
    "pool": cmd_pool,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except FileNotFoundError as exc:
        print(f"spc {args.cmd}: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except (UsageError, MatrixFormatError, CheckpointError, LogFormatError, RunnerError,
            ValueError) as exc:
        print(f"spc {args.cmd}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
