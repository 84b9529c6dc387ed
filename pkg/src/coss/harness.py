"""Monte Carlo studies comparing RCT, CUPED and COSS on simulated populations.

Each replication draws one sample and evaluates every requested strategy
on it:

* RCT: complete randomization, difference in means, Welch t-test.
* CUPED: the same randomization, outcomes adjusted with a coefficient fit
  on that sample, Welch t-test on the adjusted outcomes.
* COSS: covariate ordered allocation, difference in means, paired t-test.

Replication ``k`` draws all of its randomness from streams derived from
``(seed, k)``, so results are identical for any number of worker threads.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from coss._rng import generator
from coss.allocation import coss_pairs, rct_assign
from coss.errors import CossError, EmptyInput
from coss.estimation import cuped_fit, diff_in_means
from coss.inference import _paired_from_diffs, t_test_independent
from coss.simgen import Population, SimulationConfig, generate_population, sample_indices

ALPHA = 0.05


class Strategy(str, enum.Enum):
    RCT = "rct"
    CUPED = "cuped"
    COSS = "coss"


ALL_STRATEGIES = (Strategy.RCT, Strategy.CUPED, Strategy.COSS)


@dataclass(frozen=True, eq=False)
class ReplicationSummary:
    """Per-strategy aggregate over replications.

    ``se`` is the standard deviation of the deltas across replications. With a
    single replication it is undefined: ``se_defined`` is False and ``se`` 0.
    ``mean_r_squared`` is the mean squared sample covariate/outcome
    correlation, recorded for CUPED only.
    """

    strategy: Strategy
    deltas: np.ndarray
    p_values: np.ndarray
    mean: float
    se: float
    se_defined: bool
    reject_rate_05: float
    mean_r_squared: float | None = None

    @classmethod
    def from_arrays(cls, strategy: Strategy, deltas: np.ndarray, p_values: np.ndarray, r2=None) -> ReplicationSummary:
        n = deltas.size
        se_defined = n > 1
        return cls(
            strategy=strategy,
            deltas=deltas,
            p_values=p_values,
            mean=float(deltas.mean()),
            se=float(deltas.std(ddof=1)) if se_defined else 0.0,
            se_defined=se_defined,
            reject_rate_05=float(np.mean(p_values < ALPHA)),
            mean_r_squared=None if r2 is None else float(np.mean(r2)),
        )


def _p(test, *args) -> float:
    # Degenerate (zero-variance) samples count as non-rejections.
    try:
        return test(*args).p_value
    except CossError:
        return 1.0


def _paired_p(d: np.ndarray) -> float:
    return _p(_paired_from_diffs, d)


def replicate(
    population: Population,
    config: SimulationConfig,
    seed: int,
    k: int,
    strategies: Sequence[Strategy],
) -> dict[Strategy, tuple[float, float, float]]:
    """Run replication ``k``; returns ``strategy -> (delta, p, r_squared)``."""
    idx = sample_indices(len(population), config.sample_size, generator(seed, "sample", k))
    x = population.x[idx]
    y0 = population.y0[idx]
    y1 = population.y1[idx]
    out: dict[Strategy, tuple[float, float, float]] = {}

    if Strategy.RCT in strategies or Strategy.CUPED in strategies:
        treat = rct_assign(idx.size, generator(seed, "rct", k))
        y = np.where(treat, y1, y0)
        if Strategy.RCT in strategies:
            delta, _ = diff_in_means(y[treat], y[~treat])
            out[Strategy.RCT] = (delta, _p(t_test_independent, y[treat], y[~treat]), math.nan)
        if Strategy.CUPED in strategies:
            adj = cuped_fit(x, y)
            ya = adj.apply(x, y)
            delta, _ = diff_in_means(ya[treat], ya[~treat])
            out[Strategy.CUPED] = (delta, _p(t_test_independent, ya[treat], ya[~treat]), adj.r_squared)

    if Strategy.COSS in strategies:
        tiebreak = generator(seed, "coss-ties", k).permutation(idx.size)
        t_idx, c_idx = coss_pairs(x, tiebreak, config.swap_parity)
        d = y1[t_idx] - y0[c_idx]
        out[Strategy.COSS] = (float(d.mean()), _paired_p(d), math.nan)
    return out


def _normalize(strategies: Iterable[Strategy | str] | None) -> tuple[Strategy, ...]:
    if strategies is None:
        return ALL_STRATEGIES
    chosen = {Strategy(s) for s in strategies}
    return tuple(s for s in ALL_STRATEGIES if s in chosen)


def run_study(
    config: SimulationConfig,
    strategies: Iterable[Strategy | str] | None = None,
    seed: int | None = None,
    threads: int = 1,
    population: Population | None = None,
) -> dict[Strategy, ReplicationSummary]:
    """Replicate sample -> allocate -> reveal -> estimate -> test.

    ``seed`` overrides ``config.seed`` for both the population and the
    replications. ``threads`` only caps concurrency; it never changes results.
    """
    if seed is not None:
        config = config.replace(seed=seed)
    strategies = _normalize(strategies)
    if population is None:
        population = generate_population(config)
    reps = config.replications
    results = np.full((len(strategies), 3, reps), np.nan)

    def work(block: range) -> None:
        for k in block:
            row = replicate(population, config, config.seed, k, strategies)
            for j, s in enumerate(strategies):
                results[j, :, k] = row[s]

    size = max(1, math.ceil(reps / (4 * max(threads, 1))))
    blocks = [range(i, min(i + size, reps)) for i in range(0, reps, size)]
    if threads <= 1:
        for b in blocks:
            work(b)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, blocks))

    return {
        s: ReplicationSummary.from_arrays(
            s, results[j, 0].copy(), results[j, 1].copy(), results[j, 2] if s is Strategy.CUPED else None
        )
        for j, s in enumerate(strategies)
    }


def aa_config(config: SimulationConfig) -> SimulationConfig:
    return config.replace(mu=0.0, eps1=config.eps0)


def run_aa_test(
    config: SimulationConfig,
    strategies: Iterable[Strategy | str] | None = None,
    seed: int | None = None,
    threads: int = 1,
) -> dict[Strategy, ReplicationSummary]:
    """:func:`run_study` with no treatment effect and equal noise in both arms.

    ``reject_rate_05`` of each summary is the empirical type-1 error.
    """
    return run_study(aa_config(config), strategies, seed, threads)


def emit_histogram(deltas: Sequence[float], bins: int = 40) -> list[tuple[float, int]]:
    """Equal-width histogram over ``[min, max]`` as ``(bin_center, count)`` rows."""
    d = np.asarray(deltas, dtype=float)
    if d.size == 0:
        raise EmptyInput("no deltas to bin")
    if bins < 1:
        raise ValueError("bins must be at least 1")
    lo, hi = float(d.min()), float(d.max())
    # numpy widens a zero-width range to [lo - 0.5, lo + 0.5].
    counts, edges = np.histogram(d, bins=bins, range=(lo, hi))
    centers = (edges[:-1] + edges[1:]) / 2
    return [(float(c), int(n)) for c, n in zip(centers, counts)]


LABELS = {Strategy.RCT: "RCT(original)", Strategy.CUPED: "RCT(with CUPED)", Strategy.COSS: "COSS"}


def _fmt_se(s: ReplicationSummary) -> str:
    return f"{s.se:.3f}" if s.se_defined else "undefined"


def summary_rows(summaries: dict[Strategy, ReplicationSummary]) -> list[dict[str, str]]:
    return [
        {
            "strategy": s.value,
            "mean": f"{r.mean:.6f}",
            "se": f"{r.se:.6f}" if r.se_defined else "",
            "se_defined": str(r.se_defined).lower(),
            "reject_rate_05": f"{r.reject_rate_05:.6f}",
            "replications": str(r.deltas.size),
        }
        for s, r in summaries.items()
    ]


def summary_csv(summaries: dict[Strategy, ReplicationSummary]) -> str:
    buf = io.StringIO()
    rows = summary_rows(summaries)
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def summary_text(summaries: dict[Strategy, ReplicationSummary], title: str = "") -> str:
    lines = [title] if title else []
    lines.append(f"{'Strategy':<18}{'mean':>8}{'standard error':>16}{'reject@0.05':>13}")
    for s, r in summaries.items():
        lines.append(f"{LABELS[s]:<18}{r.mean:>8.3f}{_fmt_se(r):>16}{r.reject_rate_05:>13.3f}")
    return "\n".join(lines) + "\n"


def histogram_csv(rows: list[tuple[float, int]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bin_center", "count"])
    writer.writerows((f"{c:.6f}", n) for c, n in rows)
    return buf.getvalue()
