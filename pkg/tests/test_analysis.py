import json

import numpy as np
import pytest

from spc.analysis import (LogFormatError, LogReplay, eps_delta_profile, quantile_cap, read_events,
                          trajectory)
from spc.runners import SimulatedSource
from spc.scheduler import Scheduler, event_line

from conftest import make_matrix, random_matrix


def test_tenfold_profile(tenfold_s):
    rows = eps_delta_profile(tenfold_s, [0.1])
    assert [r["epsilon_min"] for r in rows] == [0.0, 9.0]
    assert [r["cdf"] for r in rows] == [0.5, 1.0]


def test_identical_rows_all_zero():
    m = make_matrix(np.tile(np.linspace(1, 5, 20), (6, 1)))
    for row in eps_delta_profile(m, [0.05, 0.1, 0.5, 0.9]):
        assert row["epsilon_min"] == 0.0


def test_quantile_cap_definition():
    x = np.arange(1, 11, dtype=float)
    assert quantile_cap(x, 0.1) == 9.0  # one of ten above 9
    assert quantile_cap(x, 0.0999) == 10.0
    assert quantile_cap(x, 0.35) == 7.0
    # tiny delta: no runtime may be censored, so the cap is the max observed
    assert quantile_cap(x, 1e-6) == 10.0


def test_profile_matches_brute_force():
    rng = np.random.default_rng(0)
    runtimes = rng.lognormal(0, 1, (5, 40))
    m = make_matrix(runtimes)
    opt = runtimes.mean(axis=1).min()
    for row in eps_delta_profile(m, [0.2]):
        i = m.config_ids.index(row["config_id"])
        x = runtimes[i]
        theta = min(v for v in x if np.mean(x > v) <= 0.2)
        assert row["theta_star_s"] == theta
        assert row["epsilon_min"] == pytest.approx(max(0, np.minimum(x, theta).mean() / opt - 1))


def test_max_cap_respected():
    m = make_matrix(np.array([[1.0, 100.0], [2.0, 2.0]]))
    rows = eps_delta_profile(m, [0.4], max_cap=10.0)
    # capped rows (1, 10) and (2, 2): OPT = 2; with two samples and delta 0.4
    # nothing may be censored, so row 0 keeps theta* = 10 and mean 5.5
    assert rows[0]["theta_star_s"] == 10.0
    assert rows[0]["epsilon_min"] == pytest.approx(1.75)
    assert rows[1]["epsilon_min"] == 0.0


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.5])
def test_delta_range(delta, tenfold_s):
    with pytest.raises(ValueError):
        eps_delta_profile(tenfold_s, [delta])


def run_log(tmp_path, matrix, kappa0, budget, seed=0):
    s = Scheduler(matrix.config_ids, SimulatedSource(matrix), kappa0, seed=seed)
    path = tmp_path / "events.jsonl"
    with open(path, "w") as fh:
        s.run_until(budget, sink=lambda e: fh.write(event_line(e) + "\n"))
    return path, s


def test_trajectory_single_config(tmp_path):
    path, _ = run_log(tmp_path, make_matrix([[0.3, 0.2]]), 0.01, 20)
    rows = trajectory(read_events(path), [1, 5, 10, 20])
    assert {r["incumbent"] for r in rows} == {0}


def test_trajectory_empty_grid(tmp_path):
    path, _ = run_log(tmp_path, make_matrix([[0.3]]), 0.01, 1)
    assert trajectory(read_events(path), []) == []


def test_trajectory_tenfold_settles_on_fast(tmp_path, tenfold_s):
    path, _ = run_log(tmp_path, tenfold_s, 0.001, 400)
    events = read_events(path)
    rows = trajectory(events, np.arange(1, 401, 1.0))
    ids = [r["incumbent_id"] for r in rows]
    last_slow = max((i for i, x in enumerate(ids) if x == "slow"), default=-1)
    assert ids[-1] == "fast"
    assert all(x == "fast" for x in ids[last_slow + 1:])
    assert last_slow < 150  # separation well before 150 s


def test_trajectory_matches_winner_on_prefix(tmp_path):
    rng = np.random.default_rng(1)
    m = random_matrix(rng, n=4, m=30)
    path, _ = run_log(tmp_path, m, 0.01, 80, seed=2)
    events = read_events(path)
    grid = np.linspace(0, 80, 17)
    rows = trajectory(events, grid)
    for g, row in zip(grid, rows):
        s = Scheduler(m.config_ids, SimulatedSource(m), 0.01, seed=2)
        while s.t < len(events) and events[s.t]["charged_total_s"] <= g:
            s.step()
        if s.t == 0:
            assert row["incumbent"] == 0 and row["incumbent_capped_mean_s"] is None
            continue
        assert row["incumbent"] == s.current_winner()
        assert row["incumbent_capped_mean_s"] == pytest.approx(s.testers[s.current_winner()].capped_mean())


def test_replay_rejects_gaps():
    rep = LogReplay()
    with pytest.raises(LogFormatError):
        rep.apply({"t": 1, "config": 0, "instance": 2, "cap_s": 1, "measured_s": 1,
                   "charged_total_s": 1})


def test_read_events_errors(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"t": 1}\n')
    with pytest.raises(LogFormatError, match="missing"):
        read_events(bad)
    bad.write_text("not json\n")
    with pytest.raises(LogFormatError, match=":1:"):
        read_events(bad)


def test_events_roundtrip(tmp_path):
    path, _ = run_log(tmp_path, make_matrix([[0.3], [0.5]]), 0.01, 5)
    lines = path.read_text().splitlines()
    assert [event_line(e) for e in read_events(path)] == lines
    assert all(json.loads(x) for x in lines)
