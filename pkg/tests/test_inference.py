import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from coss.allocation import AllocationPlan, AllocationStrategy, Arm, coss_allocate, rct_allocate, units_from_mapping
from coss.errors import TooFewPairs, TooFewSamples, ZeroVariance
from coss.estimation import Method
from coss.inference import (
    TestFamily,
    bootstrap_independent,
    bootstrap_p,
    bootstrap_p_value,
    bootstrap_paired,
    bootstrap_variance,
    paired_resamples,
    t_test_independent,
    t_test_paired,
)
from coss.simgen import SimulationConfig, draw_sample, generate_population


def test_welch_identical_arms():
    r = t_test_independent([1, 2, 3], [1, 2, 3])
    assert r.statistic == 0.0 and r.p_value == 1.0
    assert r.family is TestFamily.T_INDEPENDENT


def test_welch_textbook():
    r = t_test_independent([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    assert r.statistic == pytest.approx(-1.0, rel=1e-12)
    assert r.df == pytest.approx(8.0, rel=1e-12)
    assert r.p_value == pytest.approx(0.34659350708733416, rel=1e-9)


def test_welch_antisymmetric():
    a, b = [0.3, 1.9, 2.2, 4.0], [1.0, 1.1, 5.5]
    ab, ba = t_test_independent(a, b), t_test_independent(b, a)
    assert ab.statistic == -ba.statistic
    assert ab.p_value == ba.p_value


@pytest.mark.filterwarnings("ignore:Precision loss:RuntimeWarning")
@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-100, 100), min_size=2, max_size=30),
    st.lists(st.floats(-100, 100), min_size=2, max_size=30),
)
def test_welch_matches_scipy(a, b):
    if np.ptp(a) < 1e-6 and np.ptp(b) < 1e-6:
        return
    ours = t_test_independent(a, b)
    ref = stats.ttest_ind(a, b, equal_var=False)
    assert ours.statistic == pytest.approx(ref.statistic, rel=1e-9, abs=1e-12)
    assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-15)


def test_welch_errors():
    with pytest.raises(TooFewSamples):
        t_test_independent([1.0], [1.0, 2.0])
    with pytest.raises(ZeroVariance):
        t_test_independent([1.0, 1.0], [2.0, 2.0])


def test_paired_hand_oracle():
    r = t_test_paired([(1, 0), (0, 1), (0, 0), (2, 0)])
    # differences {1, -1, 0, 2}: mean 0.5, sd sqrt(5/3), t = 0.5 / (sd / 2)
    assert r.statistic == pytest.approx(0.7745966692414834, rel=1e-12)
    assert r.df == 3.0
    assert r.p_value == pytest.approx(0.495025346059711, rel=1e-9)
    assert r.family is TestFamily.T_PAIRED


@pytest.mark.filterwarnings("ignore:Precision loss:RuntimeWarning")
@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=2, max_size=30))
def test_paired_matches_scipy(pairs):
    d = np.array([a - b for a, b in pairs])
    if np.ptp(d) < 1e-6:
        return
    ours = t_test_paired(pairs)
    ref = stats.ttest_rel([p[0] for p in pairs], [p[1] for p in pairs])
    assert ours.statistic == pytest.approx(ref.statistic, rel=1e-9, abs=1e-12)
    assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-15)


@pytest.mark.parametrize("pairs", [[(1, 1), (2, 2), (3, 3)], [(2, 1), (5, 4), (0, -1)]])
def test_paired_zero_variance_is_signalled(pairs):
    with pytest.raises(ZeroVariance):
        t_test_paired(pairs)


def test_paired_too_few():
    with pytest.raises(TooFewPairs):
        t_test_paired([(1, 0)])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=20), st.floats(0.01, 100))
def test_t_p_invariant_to_rescaling(values, k):
    a = np.array(values)
    b = a[::-1] + np.linspace(0, 1, a.size)
    if np.ptp(a) < 1e-3 or np.ptp(a - b) < 1e-3:
        return
    assert t_test_independent(k * a, k * b).p_value == pytest.approx(t_test_independent(a, b).p_value, rel=1e-7)
    pairs, scaled = list(zip(a, b)), list(zip(k * a, k * b))
    assert t_test_paired(scaled).p_value == pytest.approx(t_test_paired(pairs).p_value, rel=1e-7)


def test_bootstrap_p_value_definition():
    assert bootstrap_p_value(np.array([1.0, 2.0, 3.0])) == pytest.approx(2 * 1 / 4)
    assert bootstrap_p_value(np.array([-1.0, 1.0])) == 1.0
    assert bootstrap_p_value(np.array([-1.0, 2.0, 3.0, 4.0])) == pytest.approx(2 * 2 / 5)


def _paper_sample(seed=1):
    cfg = SimulationConfig(population=2000)
    pop = generate_population(cfg)
    sample = draw_sample(pop, 200, seed)
    return sample


def test_bootstrap_seeded_determinism():
    sample = _paper_sample()
    plan = coss_allocate(sample.units(), 0)
    out = sample.reveal_plan(plan)
    a = bootstrap_p(plan, out, paired=True, n_resamples=3000, seed=42)
    b = bootstrap_p(plan, out, paired=True, n_resamples=3000, seed=42)
    assert a == b
    assert a.family is TestFamily.BOOTSTRAP_PAIRED and a.n_resamples == 3000


def test_bootstrap_converges():
    # Binomial Monte Carlo error of 2*min(q, 1-q) is 2*sqrt(q(1-q)/B); for
    # p <= 0.1 the 10k-vs-40k difference has sd <= 0.0034, so 0.01 is ~3 sd.
    rng = np.random.default_rng(5)
    for shift in (0.25, 0.4):
        c = rng.normal(0.0, 1.0, 100)
        noise = rng.normal(0.0, 1.0, 100)
        t = c + shift + noise - noise.mean()
        p10 = bootstrap_paired(t, c, 10_000, seed=1).p_value
        p40 = bootstrap_paired(t, c, 40_000, seed=2).p_value
        assert p10 <= 0.1
        assert abs(p10 - p40) <= 0.01
        p10 = bootstrap_independent(t, c, 10_000, seed=1).p_value
        p40 = bootstrap_independent(t, c, 40_000, seed=2).p_value
        assert abs(p10 - p40) <= 0.01


def test_paired_resampler_keeps_pairs_intact():
    t = np.arange(50, dtype=float)
    c = 1000 + np.arange(50, dtype=float)
    for ts, cs in paired_resamples(t, c, 2500, seed=3):
        assert np.all(cs - ts == 1000)


def test_bootstrap_p_independent_family():
    sample = _paper_sample(2)
    plan = rct_allocate(sample.units(), 0)
    r = bootstrap_p(plan, sample.reveal_plan(plan), paired=False, n_resamples=2000, seed=0)
    assert r.family is TestFamily.BOOTSTRAP_INDEPENDENT
    assert 0.0 <= r.p_value <= 1.0


def test_bootstrap_variance_constant_outcomes():
    plan = coss_allocate(units_from_mapping({f"u{i}": float(i) for i in range(10)}))
    assert bootstrap_variance(plan, None, {f"u{i}": 3.0 for i in range(10)}, Method.DIFF_MEANS, 50, 0) == 0.0


def test_bootstrap_variance_minimal_case():
    plan = AllocationPlan(
        {"a": Arm.TREATMENT, "b": Arm.TREATMENT, "c": Arm.CONTROL, "d": Arm.CONTROL}, AllocationStrategy.RCT, 0
    )
    v = bootstrap_variance(plan, None, {"a": 1.0, "b": 5.0, "c": 0.0, "d": 2.0}, Method.DIFF_MEANS, 2, 4)
    assert np.isfinite(v) and v >= 0.0


def test_bootstrap_variance_two_resamples_positive():
    rng = np.random.default_rng(0)
    ids = [f"u{i}" for i in range(40)]
    cov = dict(zip(ids, rng.normal(size=40)))
    plan = coss_allocate(units_from_mapping(cov))
    out = dict(zip(ids, rng.normal(size=40)))
    v = bootstrap_variance(plan, cov, out, Method.DIFF_MEANS, 2, 0)
    assert np.isfinite(v) and v > 0


@pytest.mark.parametrize("method", list(Method))
def test_bootstrap_variance_methods_run(method):
    sample = _paper_sample(3)
    plan = rct_allocate(sample.units(), 0)
    cov = dict(zip(sample.ids, sample.x))
    v = bootstrap_variance(plan, cov, sample.reveal_plan(plan), method, 50, 0)
    assert v > 0


def test_bootstrap_variance_orders_coss_below_rct():
    cfg = SimulationConfig(population=10_000)
    pop = generate_population(cfg)
    wins = 0
    for k in range(100):
        sample = draw_sample(pop, 200, 1000 + k)
        coss = coss_allocate(sample.units(), k, swap_parity=True)
        rct = rct_allocate(sample.units(), k)
        v_coss = bootstrap_variance(coss, None, sample.reveal_plan(coss), Method.DIFF_MEANS, 200, k)
        v_rct = bootstrap_variance(rct, None, sample.reveal_plan(rct), Method.DIFF_MEANS, 200, k)
        wins += v_coss < v_rct
    assert wins >= 90
