"""Bias and variance diagnostics for COSS.

The model is ``Y = f(X) + e`` with ``X`` standard normal, ``f`` monotone and
``e`` independent noise. Sorting ``2N`` units by ``X`` and alternating arms
gives a difference-in-means estimate

    delta = (1/N) * sum_i [Y(2i) - Y(2i+1)]

whose bias is at most ``(E[f(X(0))] - E[f(X(2N-1))]) / N``, the expected
range of ``f`` over the sample divided by ``N``. For a centered, symmetric
``f(X)`` this is ``2 E[max f] / N``.

Everything here is expressed for the difference-in-means estimator used by
:mod:`coss.estimation`, which is twice the half-sum normalisation
``(1/2N) (sum_T Y - sum_C Y)``; bounds and variances scale accordingly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from coss._rng import generator
from coss.errors import NTooSmall

_BLOCK = 1000


class Distribution(str, enum.Enum):
    UNIFORM = "uniform"
    NORMAL = "normal"
    SHIFTED_POISSON = "shifted_poisson"


@dataclass(frozen=True)
class BiasRateSpec:
    distribution: Distribution
    n: int

    def __post_init__(self):
        object.__setattr__(self, "distribution", Distribution(self.distribution))
        if self.n < 2:
            raise NTooSmall(f"n must be at least 2, got {self.n}")


def bias_rate(spec: BiasRateSpec) -> float:
    """Order of the COSS bias for ``N`` pairs when ``f(X)`` has the given distribution.

    Uniform ``1/N``, normal ``sqrt(2 log N)/N``, shifted Poisson
    ``log N / (N log log N)``. Requires ``N >= 3`` so that ``log log N > 0``.
    """
    n = spec.n
    if n < 3:
        raise NTooSmall(f"bias rate needs N >= 3, got {n}")
    if spec.distribution is Distribution.UNIFORM:
        return 1.0 / n
    if spec.distribution is Distribution.NORMAL:
        return math.sqrt(2.0 * math.log(n)) / n
    return math.log(n) / (n * math.log(math.log(n)))


_SHAPES = {
    "identity": (lambda x: x, 1.0),
    "constant": (lambda x: np.zeros_like(x), 0.0),
    "exp": (np.exp, math.e * (math.e - 1.0)),
    "cubic": (lambda x: x**3, 15.0),
}


@dataclass(frozen=True)
class DgpModel:
    """``Y = scale * g(X) + shift + N(0, noise_sd^2)`` with ``X ~ N(0, 1)``.

    ``shape`` names the monotone function ``g``: identity, constant, exp or cubic.
    """

    shape: str = "identity"
    scale: float = 1.0
    shift: float = 0.0
    noise_sd: float = 0.0

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; choose from {sorted(_SHAPES)}")
        if not self.noise_sd >= 0:
            raise ValueError("noise_sd must be >= 0")

    def f(self, x: np.ndarray) -> np.ndarray:
        return self.scale * _SHAPES[self.shape][0](np.asarray(x, dtype=float)) + self.shift

    @property
    def var_f(self) -> float:
        return self.scale**2 * _SHAPES[self.shape][1]

    @property
    def var_y(self) -> float:
        return self.var_f + self.noise_sd**2

    @property
    def r_squared(self) -> float:
        """Share of outcome variance explained by ``f(X)``."""
        return self.var_f / self.var_y if self.var_y > 0 else 0.0


class MonteCarloEstimate(NamedTuple):
    value: float
    mc_se: float


class VarianceDecomposition(NamedTuple):
    leading_term: float
    pair_term_bound: float


def _check(n_pairs: int, reps: int, min_reps: int) -> None:
    if n_pairs < 2:
        raise NTooSmall(f"n_pairs must be at least 2, got {n_pairs}")
    if reps < min_reps:
        raise ValueError(f"reps must be at least {min_reps}, got {reps}")


def sample_normal_max(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """Exact draws of the maximum of ``n`` iid standard normals by inverting ``Phi(x)^n``."""
    u = rng.random(size)
    # P(max > x) = 1 - u**(1/n), computed without cancellation.
    return -special.ndtri(-np.expm1(np.log1p(-u) / n))


def _extremes(model: DgpModel, n: int, reps: int, seed: int, stream: str) -> tuple[np.ndarray, np.ndarray]:
    """Draws of f at the largest and at the smallest of ``n`` covariates (independent draws)."""
    rng = generator(seed, stream)
    top = model.f(sample_normal_max(rng, n, reps))
    bottom = model.f(-sample_normal_max(rng, n, reps))
    return top, bottom


def bias_bound_mc(model: DgpModel, n_pairs: int, reps: int = 10_000, seed: int = 0) -> MonteCarloEstimate:
    """Monte Carlo value of ``(E[max f(X)] - E[min f(X)]) / N`` over ``2N`` draws."""
    _check(n_pairs, reps, 100)
    top, bottom = _extremes(model, 2 * n_pairs, reps, seed, "bias-bound")
    hi, lo = (top, bottom) if model.scale >= 0 else (bottom, top)
    value = (hi.mean() - lo.mean()) / n_pairs
    se = math.sqrt(hi.var(ddof=1) / reps + lo.var(ddof=1) / reps) / n_pairs
    return MonteCarloEstimate(float(value), float(se))


def coss_deltas(model: DgpModel, n_pairs: int, reps: int, seed: int, swap_parity: bool = False) -> np.ndarray:
    """COSS difference-in-means estimates on ``reps`` fresh samples with no treatment effect."""
    out = []
    for k, start in enumerate(range(0, reps, _BLOCK)):
        size = min(_BLOCK, reps - start)
        rng = generator(seed, "coss-deltas", k)
        x = rng.standard_normal((size, 2 * n_pairs))
        y = model.f(x) + model.noise_sd * rng.standard_normal(x.shape)
        order = np.argsort(-x, axis=1, kind="stable")
        ys = np.take_along_axis(y, order, axis=1)
        d = ys[:, 0::2].mean(axis=1) - ys[:, 1::2].mean(axis=1)
        out.append(-d if swap_parity else d)
    return np.concatenate(out)


def empirical_bias(model: DgpModel, n_pairs: int, reps: int = 1_000, seed: int = 0) -> MonteCarloEstimate:
    """Mean COSS estimate (true effect zero) with its Monte Carlo standard error."""
    _check(n_pairs, reps, 1_000)
    d = coss_deltas(model, n_pairs, reps, seed)
    return MonteCarloEstimate(float(d.mean()), float(d.std(ddof=1) / math.sqrt(reps)))


def variance_decomposition(model: DgpModel, n_pairs: int, reps: int = 10_000, seed: int = 0) -> VarianceDecomposition:
    """Leading and pair terms of ``Var(delta)`` for COSS.

    ``leading_term = 2 Var(Y) (1 - r^2) / N`` is the CUPED-like noise term and
    ``pair_term_bound = (Var f(X(0)) + Var f(X(2N-1))) / N^2`` bounds the
    contribution of the covariate gaps; the extreme-order variances are
    estimated by Monte Carlo.
    """
    _check(n_pairs, reps, 100)
    leading = 2.0 * model.var_y * (1.0 - model.r_squared) / n_pairs
    top, bottom = _extremes(model, 2 * n_pairs, reps, seed, "pair-term")
    pair = (top.var(ddof=1) + bottom.var(ddof=1)) / n_pairs**2
    return VarianceDecomposition(float(leading), float(pair))
