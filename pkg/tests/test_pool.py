import numpy as np
import pytest

from spc.pool import FinitePoolSampler, QuantilePool, level_seed, level_size
from spc.runners import SimulatedSource
from spc.scheduler import Scheduler, event_line

from conftest import make_matrix


def cheap_pool_matrix(seed, n=3000, m=50):
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.02, 0.5, n)
    return make_matrix(np.maximum(rng.exponential(means[:, None], (n, m)), 0.01))


@pytest.mark.parametrize("k,c,size", [(1, 1, 2), (3, 1, 24), (5, 2, 320), (2, 0.3, 3)])
def test_level_size(k, c, size):
    assert level_size(k, c) == size


def test_level_size_rejects():
    with pytest.raises(ValueError):
        level_size(0)


def test_sampled_level_sizes():
    m = cheap_pool_matrix(0)
    pool = QuantilePool(FinitePoolSampler(m.config_ids), SimulatedSource(m), 0.01,
                        levels=(1, 2, 3, 4, 5), max_level=5, sample_constant=2)
    for lv in pool.levels:
        assert len(lv.configs) == level_size(lv.k, 2)
        assert len(set(lv.configs)) == len(lv.configs)


def test_small_finite_pool_tops_out():
    m = make_matrix(np.ones((5, 3)))
    pool = QuantilePool(FinitePoolSampler(m.config_ids), SimulatedSource(m), 0.5, levels=(3,))
    assert sorted(pool.level(3).configs) == sorted(m.config_ids)


def test_single_level_matches_standalone():
    m = cheap_pool_matrix(1)
    src = SimulatedSource(m)
    pool = QuantilePool(FinitePoolSampler(m.config_ids), src, 0.01, seed=5, levels=(4,), max_level=4)
    lv = pool.level(4)
    alone = Scheduler(lv.configs, src, 0.01, seed=level_seed(5, 4))
    for _ in range(3000):
        e = pool.step()
        assert e.pop("level") == 4
        assert event_line(e) == event_line(alone.step())


def test_levels_evolve_independently():
    # a level's trace against its own charge does not depend on the other levels
    m = cheap_pool_matrix(2)
    src = SimulatedSource(m)
    sampler = FinitePoolSampler(m.config_ids)
    multi = QuantilePool(sampler, src, 0.01, seed=7, levels=(1, 2, 3), max_level=3)
    alone = QuantilePool(sampler, src, 0.01, seed=7, levels=(3,), max_level=3)
    a = [e for e in (multi.step() for _ in range(6000)) if e["level"] == 3]
    b = [alone.step() for _ in range(len(a))]
    assert a
    assert [e["instance"] for e in a] == [e["instance"] for e in b]
    assert [e["config_id"] for e in a] == [e["config_id"] for e in b]
    assert multi.winner(3) == alone.winner(3)


def coarse_pool_matrix(seed, n=500, m=50):
    # runtimes in units where one step charges ~0.1-5 s, so 1e4 s is a short run
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.2, 5.0, n)
    return make_matrix(np.maximum(rng.exponential(means[:, None], (n, m)), 0.1))


def test_two_level_shares():
    m = coarse_pool_matrix(3)
    pool = QuantilePool(FinitePoolSampler(m.config_ids), SimulatedSource(m), 0.1,
                        levels=(1, 2), max_level=2)
    pool.run_until(10_000)
    ratio = pool.level(1).charged / pool.level(2).charged
    assert ratio == pytest.approx(4.0, rel=0.05)
    assert sum(lv.charged for lv in pool.levels) == pytest.approx(pool.total_charged, rel=1e-12)


def test_lazy_activation_once_per_level():
    m = cheap_pool_matrix(4)
    pool = QuantilePool(FinitePoolSampler(m.config_ids), SimulatedSource(m), 0.01, max_level=5)
    seen = []
    for _ in range(20000):
        before = [lv.k for lv in pool.levels]
        pool.step()
        after = [lv.k for lv in pool.levels]
        if after != before:
            seen.append(after[-1])
    assert seen == [2, 3, 4, 5]
    with pytest.raises(ValueError):
        pool.activate_level(3)


def test_activation_threshold():
    m = cheap_pool_matrix(5)
    pool = QuantilePool(FinitePoolSampler(m.config_ids), SimulatedSource(m), 0.01, max_level=2)
    while len(pool.levels) == 1:
        pool.step()
    lv1 = pool.level(1)
    assert lv1.charged >= 0.01 * len(lv1.configs)


def test_winner_errors_and_k1():
    m = cheap_pool_matrix(6)
    pool = QuantilePool(FinitePoolSampler(m.config_ids), SimulatedSource(m), 0.01, max_level=1)
    pool.run_until(50)
    assert pool.winner(1) in pool.level(1).configs
    with pytest.raises(ValueError):
        pool.winner(4)


def test_empty_inputs_rejected():
    with pytest.raises(ValueError):
        FinitePoolSampler([])
    m = cheap_pool_matrix(7, n=10)
    with pytest.raises(ValueError):
        QuantilePool(FinitePoolSampler(m.config_ids), SimulatedSource(m), 0.01, levels=())


def test_pool_determinism():
    m = cheap_pool_matrix(8)
    logs = []
    for _ in range(2):
        pool = QuantilePool(FinitePoolSampler(m.config_ids), SimulatedSource(m), 0.01, seed=3)
        logs.append([event_line(pool.step()) for _ in range(4000)])
    assert logs[0] == logs[1]
