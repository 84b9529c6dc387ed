"""Treatment-effect estimators: difference in means, CUPED and regression adjustment.

The effect is always the difference of arm means, ``mean(T) - mean(C)``.
Standard errors use unpooled arm variances (denominator ``n - 1``).
"""

from __future__ import annotations

import enum
import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from coss.allocation import AllocationPlan
from coss.errors import (
    DegenerateCovariate,
    DegenerateDesign,
    EmptyArm,
    MissingCovariate,
    MissingOutcome,
    TooFewUnits,
)


class Method(str, enum.Enum):
    DIFF_MEANS = "diff_means"
    CUPED = "cuped"
    REGRESSION = "regression"


@dataclass(frozen=True)
class EffectEstimate:
    delta: float
    se: float
    method: Method
    n_treat: int
    n_control: int


@dataclass(frozen=True)
class CupedAdjustment:
    theta: float
    covariate_mean: float
    r_squared: float

    def apply(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float) - self.theta * (np.asarray(x, dtype=float) - self.covariate_mean)


@dataclass(frozen=True)
class RegressionFit:
    beta0: float
    beta1: float
    residual_variance: float


# -- array level -------------------------------------------------------------


def _var(a: np.ndarray) -> float:
    # A single observation carries no spread information; count it as zero.
    return float(np.var(a, ddof=1)) if a.size > 1 else 0.0


def diff_in_means(y_treat: np.ndarray, y_control: np.ndarray) -> tuple[float, float]:
    """Return ``(delta, se)`` for two outcome arrays."""
    t = np.asarray(y_treat, dtype=float)
    c = np.asarray(y_control, dtype=float)
    if t.size == 0 or c.size == 0:
        raise EmptyArm("both arms need at least one outcome")
    delta = float(t.mean() - c.mean())
    se = math.sqrt(_var(t) / t.size + _var(c) / c.size)
    return delta, se


def cuped_fit(x: np.ndarray, y: np.ndarray) -> CupedAdjustment:
    """Fit the variance-minimizing CUPED coefficient on pooled data."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise TooFewUnits(f"CUPED needs at least 3 units, got {x.size}")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    if sxx <= 0.0:
        raise DegenerateCovariate("covariate has zero variance")
    sxy = float(xc @ yc)
    syy = float(yc @ yc)
    theta = sxy / sxx
    r2 = 0.0 if syy <= 0.0 else min(1.0, sxy * sxy / (sxx * syy))
    return CupedAdjustment(theta, float(x.mean()), r2)


def ols(design: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Ordinary least squares: ``(coef, coef_covariance, residual_variance)``."""
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = design.shape
    if np.linalg.matrix_rank(design) < p:
        raise DegenerateDesign("design matrix is singular")
    if n <= p:
        raise DegenerateDesign(f"need more than {p} units to estimate the residual variance, got {n}")
    q, r = np.linalg.qr(design)
    coef = np.linalg.solve(r, q.T @ y)
    resid = y - design @ coef
    sigma2 = float(resid @ resid) / (n - p)
    r_inv = np.linalg.inv(r)
    return coef, sigma2 * (r_inv @ r_inv.T), sigma2


def regression_effect(y: np.ndarray, is_treatment: np.ndarray, x: np.ndarray) -> tuple[float, float]:
    """Coefficient and standard error of the treatment indicator in ``y ~ 1 + T + x``."""
    t = np.asarray(is_treatment, dtype=float)
    design = np.column_stack([np.ones_like(t), t, np.asarray(x, dtype=float)])
    coef, cov, _ = ols(design, y)
    return float(coef[1]), math.sqrt(max(float(cov[1, 1]), 0.0))


def fit_regression(x: np.ndarray, y: np.ndarray) -> RegressionFit:
    """Simple regression of the outcome on the covariate, ``y = beta0 + beta1 x + e``."""
    x = np.asarray(x, dtype=float)
    coef, _, sigma2 = ols(np.column_stack([np.ones_like(x), x]), y)
    return RegressionFit(float(coef[0]), float(coef[1]), sigma2)


# -- plan level ----------------------------------------------------------------


def _arm_values(plan: AllocationPlan, values: Mapping[str, float], missing_error) -> tuple[np.ndarray, np.ndarray]:
    missing = [uid for uid in plan.assignments if uid not in values]
    if missing:
        raise missing_error(missing)
    t = np.array([values[uid] for uid in plan.treatment_ids], dtype=float)
    c = np.array([values[uid] for uid in plan.control_ids], dtype=float)
    return t, c


def diff_means(plan: AllocationPlan, outcomes: Mapping[str, float]) -> EffectEstimate:
    yt, yc = _arm_values(plan, outcomes, MissingOutcome)
    delta, se = diff_in_means(yt, yc)
    return EffectEstimate(delta, se, Method.DIFF_MEANS, yt.size, yc.size)


def fit_cuped(covariates: Mapping[str, float], outcomes: Mapping[str, float]) -> CupedAdjustment:
    """Fit CUPED over every unit that has both a covariate and an outcome."""
    ids = [uid for uid in outcomes if uid in covariates]
    x = np.array([covariates[i] for i in ids], dtype=float)
    y = np.array([outcomes[i] for i in ids], dtype=float)
    return cuped_fit(x, y)


def cuped_estimate(
    plan: AllocationPlan,
    covariates: Mapping[str, float],
    outcomes: Mapping[str, float],
    adj: CupedAdjustment | None = None,
) -> EffectEstimate:
    """Difference in means of ``y - theta (x - mean x)``.

    ``adj`` defaults to a fit over the plan's own units.
    """
    yt, yc = _arm_values(plan, outcomes, MissingOutcome)
    xt, xc = _arm_values(plan, covariates, MissingCovariate)
    if adj is None:
        adj = cuped_fit(np.concatenate([xt, xc]), np.concatenate([yt, yc]))
    delta, se = diff_in_means(adj.apply(xt, yt), adj.apply(xc, yc))
    return EffectEstimate(delta, se, Method.CUPED, yt.size, yc.size)


def regression_adjust(
    plan: AllocationPlan,
    covariates: Mapping[str, float],
    outcomes: Mapping[str, float],
) -> EffectEstimate:
    yt, yc = _arm_values(plan, outcomes, MissingOutcome)
    xt, xc = _arm_values(plan, covariates, MissingCovariate)
    if yt.size == 0 or yc.size == 0:
        raise EmptyArm("both arms need at least one outcome")
    treat = np.r_[np.ones(yt.size, dtype=bool), np.zeros(yc.size, dtype=bool)]
    delta, se = regression_effect(np.concatenate([yt, yc]), treat, np.concatenate([xt, xc]))
    return EffectEstimate(delta, se, Method.REGRESSION, yt.size, yc.size)


def estimate(
    plan: AllocationPlan,
    outcomes: Mapping[str, float],
    method: Method | str = Method.DIFF_MEANS,
    covariates: Mapping[str, float] | None = None,
) -> EffectEstimate:
    method = Method(method)
    if method is Method.DIFF_MEANS:
        return diff_means(plan, outcomes)
    if covariates is None:
        raise MissingCovariate(list(plan.assignments))
    if method is Method.CUPED:
        return cuped_estimate(plan, covariates, outcomes)
    return regression_adjust(plan, covariates, outcomes)
