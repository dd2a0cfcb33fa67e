import numpy as np
import pytest

from spc.runners import RuntimeMatrix


def make_matrix(runtimes, config_prefix="c", instance_prefix="j"):
    runtimes = np.asarray(runtimes, dtype=float)
    n, m = runtimes.shape
    return RuntimeMatrix([f"{config_prefix}{i}" for i in range(n)],
                         [f"{instance_prefix}{j}" for j in range(m)], runtimes)


def random_matrix(rng, n=None, m=None, kappa0=0.01):
    """Random runtimes >= kappa0 drawn from a mix of shapes."""
    n = int(rng.integers(1, 6)) if n is None else n
    m = int(rng.integers(5, 60)) if m is None else m
    kind = int(rng.integers(3))
    if kind == 0:
        runtimes = kappa0 * (1 + rng.exponential(rng.uniform(1, 50), (n, m)))
    elif kind == 1:
        runtimes = kappa0 * np.exp(rng.normal(rng.uniform(0, 4), rng.uniform(0.1, 2), (n, m))).clip(1)
    else:
        runtimes = kappa0 * rng.choice([1.0, 3.0, 30.0, 300.0], size=(n, m))
    return make_matrix(runtimes)


@pytest.fixture
def tenfold_ms():
    # two constant-runtime configurations, in milliseconds
    return RuntimeMatrix(["fast", "slow"], ["j0"], np.array([[100.0], [1000.0]]))


@pytest.fixture
def tenfold_s():
    return RuntimeMatrix(["fast", "slow"], ["j0"], np.array([[0.1], [1.0]]))


def invariant_violations(tr):
    """Invariants (1)-(3) of a tester plus queue uniqueness; returns messages."""
    out = []
    r = tr.r
    obs = tr.observations()
    if sorted(obs) != list(range(1, r + 1)):
        out.append(f"active ordinals are not 1..{r}")
    if len(tr.queue) > tr.q:
        out.append(f"queue length {len(tr.queue)} > q={tr.q}")
    caps = [cap for _, cap in tr.queue]
    if any(a > b for a, b in zip(caps, caps[1:])):
        out.append("queue caps decrease")
    if caps and caps[-1] > tr.multiplier * caps[0] * (1 + 1e-12):
        out.append("tail cap exceeds multiplier * head cap")
    if any(c > tr.multiplier * tr.theta * (1 + 1e-12) for c in tr.cap_used):
        out.append("a recorded cap exceeds multiplier * theta")
    ordinals = [ell for ell, _ in tr.queue]
    if len(set(ordinals)) != len(ordinals):
        out.append("instance queued twice")
    for ell, ob in obs.items():
        if ob.capped_value > ob.cap_used or ob.capped_value < 0:
            out.append(f"observation {ell} outside [0, cap]")
    return out


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
