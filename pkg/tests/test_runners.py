import sys

import numpy as np
import pytest
from scipy import stats

from spc.runners import (NON_RESUMING, RESUMING, InstanceStream, MatrixFormatError, ProcessSource,
                         RunnerError, SimulatedSource, load_matrix, run_process, run_simulated,
                         stream_seed, substitute)

from conftest import make_matrix


def write(tmp_path, text, name="m.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_example_matrix(tmp_path):
    m = load_matrix(write(tmp_path, "config_id,i1\nfast,0.1\nslow,1.0\n"), kappa0=0.001)
    assert m.config_ids == ["fast", "slow"]
    assert m.instance_ids == ["i1"]
    assert m.runtimes.tolist() == [[0.1], [1.0]]


def test_load_rejects_entry_below_floor(tmp_path):
    with pytest.raises(MatrixFormatError, match="kappa0"):
        load_matrix(write(tmp_path, "config_id,a\nc,0.0005\n"), kappa0=0.001)


def test_load_rejects_ragged(tmp_path):
    with pytest.raises(MatrixFormatError, match=r"m\.csv:3:"):
        load_matrix(write(tmp_path, "config_id,a,b\nc,1,2\nd,1\n"), kappa0=0.1)


def test_load_reports_bad_cell(tmp_path):
    with pytest.raises(MatrixFormatError) as err:
        load_matrix(write(tmp_path, "config_id,a,b\nc,1,oops\n"), kappa0=0.1)
    assert "m.csv:2:" in str(err.value) and "column 3" in str(err.value)


@pytest.mark.parametrize("text", ["", "config_id,a\n", "config_id,a\nc,inf\n", "config_id,a\nc,-1\n"])
def test_load_rejects_degenerate(tmp_path, text):
    with pytest.raises(MatrixFormatError):
        load_matrix(write(tmp_path, text), kappa0=0.0)


def test_load_rejects_duplicate_config(tmp_path):
    with pytest.raises(MatrixFormatError):
        load_matrix(write(tmp_path, "config_id,a\nc,1\nc,2\n"), kappa0=0.1)


def test_matrix_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    m = make_matrix(rng.uniform(0.1, 5, (4, 7)))
    path = tmp_path / "out.csv"
    m.to_csv(path)
    back = load_matrix(path, 0.1)
    assert back.config_ids == m.config_ids and back.instance_ids == m.instance_ids
    assert np.array_equal(back.runtimes, m.runtimes)


def test_run_simulated_examples():
    m = make_matrix([[100.0]])
    r = run_simulated(m, "c0", 0, cap=64.0)
    assert (r.measured, r.completed, r.charged) == (64.0, False, 64.0)
    r = run_simulated(m, "c0", 0, cap=128.0, prev_cap=64.0, mode=RESUMING)
    assert (r.measured, r.completed, r.charged) == (100.0, True, 36.0)
    with pytest.raises(RunnerError):
        run_simulated(m, "nope", 0, cap=1.0)
    with pytest.raises(RunnerError):
        run_simulated(m, "c0", 5, cap=1.0)


def test_slow_config_charge_before_128():
    src = SimulatedSource(make_matrix([[1000.0]]))
    total = sum(src.run("c0", 0, 0, float(2**a)).charged for a in range(7))
    assert total == 127.0


def test_source_agrees_with_reference_function():
    rng = np.random.default_rng(2)
    m = make_matrix(rng.uniform(1, 20, (3, 5)))
    for mode in (NON_RESUMING, RESUMING):
        src = SimulatedSource(m, mode)
        for _ in range(200):
            c, j = f"c{rng.integers(3)}", int(rng.integers(5))
            prev = float(rng.choice([0.0, 2.0, 4.0]))
            cap = prev * 2 if prev else 1.0
            assert src.run(c, j, 0, cap, prev) == run_simulated(m, c, j, cap, prev, mode)


@pytest.mark.parametrize("mode", [NON_RESUMING, RESUMING])
def test_doubling_charge_matches_replay_oracle(mode):
    rng = np.random.default_rng(3)
    kappa0 = 0.5
    for true in rng.uniform(0.5, 300, 100):
        src = SimulatedSource(make_matrix([[true]]), mode)
        caps = [kappa0 * 2**b for b in range(12)]
        total, prev = 0.0, 0.0
        for cap in caps:
            res = src.run("c0", 0, 0, cap, prev)
            total += res.charged
            prev = cap
            if res.completed:
                break
        used = caps[: caps.index(prev) + 1]
        if mode == NON_RESUMING:
            assert total == pytest.approx(sum(min(true, c) for c in used), rel=1e-12)
        else:
            assert total == pytest.approx(min(true, prev), rel=1e-12)


def test_substitute_is_literal():
    cmd = substitute("solve --in {instance} --seed {seed} -t {cutoff} {other}", "a b.cnf", 7, 0.25)
    assert cmd == "solve --in 'a b.cnf' --seed 7 -t 0.25 {other}"


SLEEP = f"{sys.executable} -c 'import time; time.sleep(0.1)'"


def test_process_completes_under_cap(tmp_path):
    res = run_process(SLEEP, str(tmp_path), seed=1, cap=1.0)
    assert res.completed and not res.failed
    assert res.measured == pytest.approx(0.1, abs=0.05 + 0.1)  # interpreter start-up on a loaded box
    assert res.charged == pytest.approx(res.measured, abs=1e-3)


def test_process_killed_at_cap(tmp_path):
    res = run_process(f"{sys.executable} -c 'import time; time.sleep(5)'", str(tmp_path), 1, 0.05)
    assert not res.completed
    assert res.measured == 0.05
    assert res.charged == pytest.approx(0.05, abs=0.05)


def test_process_missing_binary(tmp_path):
    with pytest.raises(RunnerError):
        run_process("/nonexistent/solver {instance}", str(tmp_path), 1, 1.0)


def test_nonzero_exit_policies(tmp_path):
    cmd = f"{sys.executable} -c 'import sys; sys.exit(3)'"
    res = run_process(cmd, str(tmp_path), 1, 2.0)
    assert res.completed and res.failed
    res = run_process(cmd, str(tmp_path), 1, 2.0, nonzero_policy="timeout")
    assert not res.completed and res.failed and res.measured == 2.0


def test_process_receives_placeholders(tmp_path):
    out = tmp_path / "seen.txt"
    inst = tmp_path / "inst.cnf"
    inst.write_text("x")
    cmd = f"{sys.executable} -c 'import sys; open(\"{out}\", \"w\").write(\" \".join(sys.argv[1:]))' {{instance}} {{seed}} {{cutoff}}"
    src = ProcessSource({"a": cmd}, [str(inst)])
    assert src.run("a", 0, 42, 3.0).completed
    assert out.read_text() == f"{inst} 42 3.0"


def test_stream_single_instance_pool():
    s = InstanceStream(1, seed=99)
    assert {s.next_instance()[0] for _ in range(50)} == {0}


def test_stream_replay_and_cursor():
    a, b = InstanceStream(20, 5), InstanceStream(20, 5)
    seq = [a.next_instance() for _ in range(100)]
    assert seq == [b.next_instance() for _ in range(100)]
    resumed = InstanceStream(20, 5, cursor=40)
    assert [resumed.next_instance() for _ in range(60)] == seq[40:]
    assert a.cursor == 100
    with pytest.raises(ValueError):
        InstanceStream(0, 1)


def test_stream_uniformity_chi_square():
    s = InstanceStream(20, seed=stream_seed(0, "c0"))
    counts = np.bincount([s.next_instance()[0] for _ in range(100_000)], minlength=20)
    assert stats.chisquare(counts).pvalue > 0.01


def test_stream_seeds_differ_per_config():
    assert stream_seed(0, "a") != stream_seed(0, "b")
    assert stream_seed(0, "a") != stream_seed(1, "a")
    assert stream_seed(3, "a") == stream_seed(3, "a")
