import math

import numpy as np
import pytest

import coss.harness as harness
from coss.errors import EmptyInput
from coss.harness import (
    Strategy,
    emit_histogram,
    histogram_csv,
    replicate,
    run_aa_test,
    run_study,
    summary_csv,
    summary_text,
)
from coss.simgen import SimulationConfig, generate_population

SMALL = SimulationConfig(population=2000, replications=200, swap_parity=True)


def test_thread_count_does_not_change_results():
    a = run_study(SMALL, threads=1)
    b = run_study(SMALL, threads=8)
    for s in Strategy:
        assert np.array_equal(a[s].deltas, b[s].deltas)
        assert np.array_equal(a[s].p_values, b[s].p_values)
        assert a[s].se == b[s].se and a[s].mean == b[s].mean


def test_seed_override_and_reproducibility():
    a = run_study(SMALL, seed=5)
    assert np.array_equal(a[Strategy.COSS].deltas, run_study(SMALL.replace(seed=5))[Strategy.COSS].deltas)
    assert not np.array_equal(a[Strategy.COSS].deltas, run_study(SMALL)[Strategy.COSS].deltas)


def test_single_replication_flags_se():
    res = run_study(SMALL.replace(replications=1))
    for s in Strategy:
        r = res[s]
        assert not r.se_defined and r.se == 0.0
        assert r.mean == r.deltas[0]
        assert not math.isnan(r.mean)
    assert "undefined" in summary_text(res)


def test_summary_invariants():
    res = run_study(SMALL)
    for r in res.values():
        assert r.se >= 0
        assert r.mean == pytest.approx(r.deltas.mean(), rel=1e-15)
        assert r.reject_rate_05 == np.mean(r.p_values < 0.05)
    assert res[Strategy.CUPED].mean_r_squared is not None
    assert res[Strategy.RCT].mean_r_squared is None


def test_strategies_share_one_sample(monkeypatch):
    calls = []
    original = harness.sample_indices

    def spy(*args):
        idx = original(*args)
        calls.append(idx)
        return idx

    monkeypatch.setattr(harness, "sample_indices", spy)
    pop = generate_population(SMALL)
    replicate(pop, SMALL, 1, 0, tuple(Strategy))
    assert len(calls) == 1


def test_strategy_subset_matches_full_run():
    pop = generate_population(SMALL)
    full = replicate(pop, SMALL, 3, 7, tuple(Strategy))
    for s in Strategy:
        assert replicate(pop, SMALL, 3, 7, (s,))[s] == full[s]
    res = run_study(SMALL, strategies=["coss"])
    assert list(res) == [Strategy.COSS]


def test_cuped_shares_rct_plan():
    # With y = x exactly, CUPED removes everything and RCT keeps the covariate imbalance.
    cfg = SMALL.replace(b=1.0, c=0.0, mu=0.0, eps0=0.0, eps1=0.0, replications=20)
    pop = generate_population(cfg)
    for k in range(20):
        row = replicate(pop, cfg, 0, k, tuple(Strategy))
        assert row[Strategy.CUPED][0] == pytest.approx(0.0, abs=1e-9)
        assert row[Strategy.CUPED][2] == pytest.approx(1.0, rel=1e-12)
        assert row[Strategy.RCT][0] != 0.0


def test_noiseless_null_rejects_nothing():
    cfg = SMALL.replace(b=0.0, c=3.0, mu=0.0, eps0=0.0, eps1=0.0, replications=50)
    res = run_aa_test(cfg)
    for r in res.values():
        assert np.all(r.deltas == 0.0)
        assert r.reject_rate_05 == 0.0


def test_aa_config_forces_null():
    cfg = harness.aa_config(SimulationConfig(mu=2.0, eps0=1.5, eps1=3.0))
    assert cfg.mu == 0.0 and cfg.eps1 == 1.5


def test_coss_mean_within_range_bound():
    # For x ~ U(-w, w), E[max] - E[min] over 2N draws is 2w (2N - 1) / (2N + 1).
    cfg = SimulationConfig(replications=1000, swap_parity=True)
    res = run_study(cfg, strategies=["coss"])[Strategy.COSS]
    n_pairs = cfg.sample_size // 2
    w = cfg.covariate.scale
    bound = abs(cfg.b) * 2 * w * (2 * n_pairs - 1) / (2 * n_pairs + 1) / n_pairs
    assert abs(res.mean - cfg.mu) <= 3 * res.se / math.sqrt(cfg.replications) + bound


def test_histogram_examples():
    assert emit_histogram([0, 0, 0], 1) == [(0.0, 3)]
    rows = emit_histogram([0, 1, 2, 3], 2)
    assert [n for _, n in rows] == [2, 2]
    assert [c for c, _ in rows] == [0.75, 2.25]
    with pytest.raises(EmptyInput):
        emit_histogram([], 3)
    with pytest.raises(ValueError):
        emit_histogram([1.0], 0)


def test_histogram_counts_sum():
    d = np.random.default_rng(1).normal(size=777)
    rows = emit_histogram(d, 40)
    assert len(rows) == 40 and sum(n for _, n in rows) == 777
    text = histogram_csv(rows)
    assert text.splitlines()[0] == "bin_center,count" and len(text.splitlines()) == 41


def test_coss_histogram_narrower_than_rct():
    res = run_study(SMALL.replace(replications=500))
    spread = {s: np.ptp(res[s].deltas) for s in (Strategy.RCT, Strategy.COSS)}
    assert spread[Strategy.COSS] < 0.6 * spread[Strategy.RCT]
    assert res[Strategy.COSS].se < 0.6 * res[Strategy.RCT].se


def test_summary_csv_layout():
    text = summary_csv(run_study(SMALL.replace(replications=10)))
    lines = text.splitlines()
    assert lines[0] == "strategy,mean,se,se_defined,reject_rate_05,replications"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["rct", "cuped", "coss"]
