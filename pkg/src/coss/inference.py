"""Hypothesis tests and bootstrap resampling for two-arm experiments.

Independent designs use Welch's t-test and per-arm bootstrap resampling.
COSS designs are analysed as paired samples: the unit of analysis is the
(treatment, control) pair sharing a ``pair_index``.

Bootstrap resamples are drawn in fixed-size blocks; block ``k`` uses the
stream derived from ``(seed, k)``, so results never depend on how blocks
are scheduled.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats

from coss._rng import generator
from coss.allocation import AllocationPlan, AllocationStrategy
from coss.errors import MissingCovariate, MissingOutcome, TooFewPairs, TooFewSamples, ZeroVariance
from coss.estimation import Method, cuped_fit, diff_in_means, regression_effect

BLOCK = 1000


class TestFamily(str, enum.Enum):
    __test__ = False  # not a pytest class

    T_INDEPENDENT = "t_independent"
    T_PAIRED = "t_paired"
    BOOTSTRAP_INDEPENDENT = "bootstrap_independent"
    BOOTSTRAP_PAIRED = "bootstrap_paired"


@dataclass(frozen=True)
class InferenceResult:
    statistic: float
    p_value: float
    family: TestFamily
    df: float | None = None
    n_resamples: int | None = None


def _constant(a: np.ndarray) -> bool:
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    return float(np.ptp(a)) <= 1e-12 * max(scale, 1e-300)


def t_test_independent(treat: Sequence[float], control: Sequence[float]) -> InferenceResult:
    """Welch two-sample t-test, two-sided."""
    t = np.asarray(treat, dtype=float)
    c = np.asarray(control, dtype=float)
    if t.size < 2 or c.size < 2:
        raise TooFewSamples(f"each arm needs at least 2 values, got {t.size} and {c.size}")
    if _constant(t) and _constant(c):
        raise ZeroVariance("both arms are constant")
    vt = np.var(t, ddof=1) / t.size
    vc = np.var(c, ddof=1) / c.size
    se = math.sqrt(vt + vc)
    stat = float((t.mean() - c.mean()) / se)
    df = float((vt + vc) ** 2 / (vt**2 / (t.size - 1) + vc**2 / (c.size - 1)))
    p = float(min(1.0, 2.0 * stats.t.sf(abs(stat), df)))
    return InferenceResult(stat, p, TestFamily.T_INDEPENDENT, df=df)


def t_test_paired(pairs: Sequence[tuple[float, float]]) -> InferenceResult:
    """One-sample t-test on within-pair differences ``treat - control``."""
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return _paired_from_diffs(arr[:, 0] - arr[:, 1])


def _paired_from_diffs(d: np.ndarray) -> InferenceResult:
    n = d.size
    if n < 2:
        raise TooFewPairs(f"need at least 2 pairs, got {n}")
    if _constant(d):
        raise ZeroVariance("all within-pair differences are equal")
    stat = float(d.mean() / (np.std(d, ddof=1) / math.sqrt(n)))
    df = float(n - 1)
    p = float(min(1.0, 2.0 * stats.t.sf(abs(stat), df)))
    return InferenceResult(stat, p, TestFamily.T_PAIRED, df=df)


def _blocks(n_resamples: int) -> Iterator[tuple[int, int]]:
    for k, start in enumerate(range(0, n_resamples, BLOCK)):
        yield k, min(BLOCK, n_resamples - start)


def resample_indices(n: int, n_resamples: int, seed: int, stream: str) -> Iterator[np.ndarray]:
    """Yield ``(block_size, n)`` arrays of with-replacement indices into ``range(n)``."""
    for k, size in _blocks(n_resamples):
        yield generator(seed, "bootstrap", stream, k).integers(0, n, size=(size, n))


def paired_resamples(
    treat: np.ndarray, control: np.ndarray, n_resamples: int, seed: int
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield blocks of resampled (treatment, control) rows with whole pairs as atoms."""
    treat = np.asarray(treat, dtype=float)
    control = np.asarray(control, dtype=float)
    for idx in resample_indices(treat.size, n_resamples, seed, "pairs"):
        yield treat[idx], control[idx]


def independent_resamples(
    treat: np.ndarray, control: np.ndarray, n_resamples: int, seed: int
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    treat = np.asarray(treat, dtype=float)
    control = np.asarray(control, dtype=float)
    it = resample_indices(treat.size, n_resamples, seed, "treat")
    ic = resample_indices(control.size, n_resamples, seed, "control")
    for a, b in zip(it, ic):
        yield treat[a], control[b]


def bootstrap_p_value(deltas: np.ndarray) -> float:
    """Two-sided percentile p-value ``2 min(P(d <= 0), P(d >= 0))`` with +1 smoothing."""
    b = deltas.size
    lo = (np.count_nonzero(deltas <= 0) + 1) / (b + 1)
    hi = (np.count_nonzero(deltas >= 0) + 1) / (b + 1)
    return float(min(1.0, 2.0 * min(lo, hi)))


def bootstrap_paired(treat: np.ndarray, control: np.ndarray, n_resamples: int = 10_000, seed: int = 0) -> InferenceResult:
    treat = np.asarray(treat, dtype=float)
    control = np.asarray(control, dtype=float)
    stat = _paired_from_diffs(treat - control).statistic
    deltas = np.concatenate([(t - c).mean(axis=1) for t, c in paired_resamples(treat, control, n_resamples, seed)])
    return InferenceResult(stat, bootstrap_p_value(deltas), TestFamily.BOOTSTRAP_PAIRED, n_resamples=n_resamples)


def bootstrap_independent(
    treat: np.ndarray, control: np.ndarray, n_resamples: int = 10_000, seed: int = 0
) -> InferenceResult:
    stat = t_test_independent(treat, control).statistic
    deltas = np.concatenate(
        [t.mean(axis=1) - c.mean(axis=1) for t, c in independent_resamples(treat, control, n_resamples, seed)]
    )
    return InferenceResult(stat, bootstrap_p_value(deltas), TestFamily.BOOTSTRAP_INDEPENDENT, n_resamples=n_resamples)


# -- plan level ----------------------------------------------------------------


def _lookup(ids: Sequence[str], values: Mapping[str, float], error) -> np.ndarray:
    missing = [i for i in ids if i not in values]
    if missing:
        raise error(missing)
    return np.array([values[i] for i in ids], dtype=float)


def paired_outcomes(plan: AllocationPlan, outcomes: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray]:
    pairs = plan.pairs()
    t = _lookup([p[0] for p in pairs], outcomes, MissingOutcome)
    c = _lookup([p[1] for p in pairs], outcomes, MissingOutcome)
    return t, c


def t_test(plan: AllocationPlan, outcomes: Mapping[str, float], paired: bool) -> InferenceResult:
    if paired:
        t, c = paired_outcomes(plan, outcomes)
        return _paired_from_diffs(t - c)
    return t_test_independent(
        _lookup(plan.treatment_ids, outcomes, MissingOutcome), _lookup(plan.control_ids, outcomes, MissingOutcome)
    )


def bootstrap_p(
    plan: AllocationPlan,
    outcomes: Mapping[str, float],
    paired: bool,
    n_resamples: int = 10_000,
    seed: int = 0,
) -> InferenceResult:
    """Bootstrap p-value for a zero treatment effect.

    With ``paired`` the resampling atoms are COSS pairs (the leftover unit of
    an odd-sized plan is ignored); otherwise each arm is resampled on its own.
    """
    if n_resamples < 1:
        raise ValueError("n_resamples must be positive")
    if paired:
        t, c = paired_outcomes(plan, outcomes)
        return bootstrap_paired(t, c, n_resamples, seed)
    t = _lookup(plan.treatment_ids, outcomes, MissingOutcome)
    c = _lookup(plan.control_ids, outcomes, MissingOutcome)
    return bootstrap_independent(t, c, n_resamples, seed)


def _estimator(method: Method):
    if method is Method.DIFF_MEANS:
        return lambda yt, yc, xt, xc: diff_in_means(yt, yc)[0]

    if method is Method.CUPED:

        def cuped(yt, yc, xt, xc):
            adj = cuped_fit(np.concatenate([xt, xc]), np.concatenate([yt, yc]))
            return diff_in_means(adj.apply(xt, yt), adj.apply(xc, yc))[0]

        return cuped

    def regression(yt, yc, xt, xc):
        treat = np.r_[np.ones(yt.size, dtype=bool), np.zeros(yc.size, dtype=bool)]
        return regression_effect(np.concatenate([yt, yc]), treat, np.concatenate([xt, xc]))[0]

    return regression


def bootstrap_variance(
    plan: AllocationPlan,
    covariates: Mapping[str, float] | None,
    outcomes: Mapping[str, float],
    method: Method | str = Method.DIFF_MEANS,
    n_resamples: int = 200,
    seed: int = 0,
) -> float:
    """Bootstrap variance of an effect estimate.

    COSS plans resample whole pairs; RCT plans resample each arm. CUPED
    refits its coefficient on every resample.
    """
    method = Method(method)
    if n_resamples < 2:
        raise ValueError("n_resamples must be at least 2")
    if plan.strategy is AllocationStrategy.COSS:
        pairs = plan.pairs()
        t_ids, c_ids = [p[0] for p in pairs], [p[1] for p in pairs]
    else:
        t_ids, c_ids = plan.treatment_ids, plan.control_ids
    yt, yc = _lookup(t_ids, outcomes, MissingOutcome), _lookup(c_ids, outcomes, MissingOutcome)
    if method is Method.DIFF_MEANS:
        xt, xc = np.zeros_like(yt), np.zeros_like(yc)
    else:
        if covariates is None:
            raise MissingCovariate(t_ids + c_ids)
        xt, xc = _lookup(t_ids, covariates, MissingCovariate), _lookup(c_ids, covariates, MissingCovariate)
    est = _estimator(method)
    deltas = []
    if plan.strategy is AllocationStrategy.COSS:
        for idx in resample_indices(yt.size, n_resamples, seed, "pairs"):
            deltas.extend(est(yt[i], yc[i], xt[i], xc[i]) for i in idx)
    else:
        it = resample_indices(yt.size, n_resamples, seed, "treat")
        ic = resample_indices(yc.size, n_resamples, seed, "control")
        for a, b in zip(it, ic):
            deltas.extend(est(yt[i], yc[j], xt[i], xc[j]) for i, j in zip(a, b))
    return float(np.var(np.asarray(deltas), ddof=1))
