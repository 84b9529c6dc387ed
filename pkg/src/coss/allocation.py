"""Assignment of experimental units to treatment and control.

Two strategies are provided:

* COSS (covariate ordered systematic sampling): sort units by a
  pre-experiment covariate, highest first, and alternate T, C, T, C, ...
  Adjacent ranks ``(2i, 2i + 1)`` form pair ``i``.
* RCT: complete randomization, an exact equal split driven by the seed.

The array-level helpers (:func:`coss_order`, :func:`coss_assign`,
:func:`rct_assign`) are what the simulation harness calls in its inner
loop; :func:`coss_allocate` and :func:`rct_allocate` wrap them for
collections of :class:`ExperimentUnit`.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from coss._rng import check_seed, generator, keyed_hash
from coss.errors import DuplicateId, EmptyInput, NonFiniteCovariate


class Arm(str, enum.Enum):
    TREATMENT = "T"
    CONTROL = "C"


class AllocationStrategy(str, enum.Enum):
    COSS = "coss"
    RCT = "rct"


@dataclass(frozen=True)
class ExperimentUnit:
    id: str
    covariate: float
    outcome: float | None = None


@dataclass(frozen=True)
class AllocationPlan:
    """Deterministic unit -> arm map.

    ``assignments`` is ordered by covariate rank (highest first) for COSS
    plans and by id for RCT plans. ``pair_index`` is only set for COSS;
    an unpaired leftover unit (odd count) is absent from it.
    """

    assignments: dict[str, Arm]
    strategy: AllocationStrategy
    seed: int
    pair_index: dict[str, int] | None = None
    rank: dict[str, int] = field(default_factory=dict)
    swap_parity: bool = False

    @property
    def treatment_ids(self) -> list[str]:
        return [i for i, a in self.assignments.items() if a is Arm.TREATMENT]

    @property
    def control_ids(self) -> list[str]:
        return [i for i, a in self.assignments.items() if a is Arm.CONTROL]

    @property
    def unpaired_ids(self) -> list[str]:
        if self.pair_index is None:
            return list(self.assignments)
        return [i for i in self.assignments if i not in self.pair_index]

    def pairs(self) -> list[tuple[str, str]]:
        """(treatment id, control id) for each pair, in pair-index order."""
        if self.pair_index is None:
            raise ValueError(f"{self.strategy.value} plans have no pairs")
        slots: dict[int, dict[Arm, str]] = {}
        for uid, k in self.pair_index.items():
            slots.setdefault(k, {})[self.assignments[uid]] = uid
        return [(slots[k][Arm.TREATMENT], slots[k][Arm.CONTROL]) for k in sorted(slots)]

    def rows(self) -> list[tuple[str, str, int | None, int | None]]:
        """(id, arm, pair_index, rank) rows in plan order."""
        pairs = self.pair_index or {}
        return [(uid, arm.value, pairs.get(uid), self.rank.get(uid)) for uid, arm in self.assignments.items()]


def coss_order(covariates: np.ndarray, tiebreak: np.ndarray | None = None) -> np.ndarray:
    """Indices sorting ``covariates`` in descending order.

    Ties are resolved by ascending ``tiebreak`` keys, then by position.
    """
    x = np.asarray(covariates, dtype=float)
    if tiebreak is None:
        return np.argsort(-x, kind="stable")
    return np.lexsort((np.asarray(tiebreak), -x))


def coss_assign(
    covariates: np.ndarray,
    tiebreak: np.ndarray | None = None,
    swap_parity: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(is_treatment, pair_index)`` arrays aligned with ``covariates``.

    ``pair_index`` is -1 for the unpaired leftover unit when the count is odd;
    that unit always goes to treatment.
    """
    order = coss_order(covariates, tiebreak)
    n = order.size
    ranks = np.arange(n)
    treat_by_rank = (ranks % 2 == 1) if swap_parity else (ranks % 2 == 0)
    pair_by_rank = ranks // 2
    if n % 2:
        treat_by_rank[-1] = True
        pair_by_rank[-1] = -1
    is_treatment = np.empty(n, dtype=bool)
    pair_index = np.empty(n, dtype=np.int64)
    is_treatment[order] = treat_by_rank
    pair_index[order] = pair_by_rank
    return is_treatment, pair_index


def coss_pairs(
    covariates: np.ndarray,
    tiebreak: np.ndarray | None = None,
    swap_parity: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """(treatment indices, control indices) of the COSS pairs, in pair order."""
    order = coss_order(covariates, tiebreak)
    m = order.size // 2 * 2
    hi, lo = order[0:m:2], order[1:m:2]
    return (lo, hi) if swap_parity else (hi, lo)


def rct_assign(n: int, rng: np.random.Generator) -> np.ndarray:
    """Complete randomization: exactly ``n // 2`` controls, the rest treated."""
    is_treatment = np.ones(n, dtype=bool)
    is_treatment[rng.permutation(n)[: n // 2]] = False
    return is_treatment


def _validate(units: Iterable[ExperimentUnit]) -> list[ExperimentUnit]:
    units = list(units)
    if not units:
        raise EmptyInput("no units")
    seen: set[str] = set()
    for u in units:
        if u.id in seen:
            raise DuplicateId(f"duplicate unit id {u.id!r}")
        seen.add(u.id)
        if not math.isfinite(u.covariate):
            raise NonFiniteCovariate(f"unit {u.id!r} has non-finite covariate {u.covariate!r}")
    return units


def _ranks(units: Sequence[ExperimentUnit], seed: int) -> list[int]:
    # Keyed id hashes make tie order independent of input order.
    x = np.array([u.covariate for u in units], dtype=float)
    keys = np.array([keyed_hash(seed, u.id) for u in units], dtype=np.uint64)
    return coss_order(x, keys).tolist()


def coss_allocate(units: Iterable[ExperimentUnit], seed: int = 0, swap_parity: bool = False) -> AllocationPlan:
    """Allocate units by covariate ordered systematic sampling.

    Units are ranked by covariate, highest first. Even ranks go to treatment
    and odd ranks to control (``swap_parity`` reverses this). Tied
    covariates are ordered by a seed-keyed hash of the unit id. With an odd
    count the lowest-ranked unit is treated and left unpaired.
    """
    seed = check_seed(seed)
    units = _validate(units)
    order = _ranks(units, seed)
    n = len(order)
    assignments: dict[str, Arm] = {}
    pair_index: dict[str, int] = {}
    rank: dict[str, int] = {}
    for r, i in enumerate(order):
        uid = units[i].id
        rank[uid] = r
        if n % 2 and r == n - 1:
            assignments[uid] = Arm.TREATMENT
            continue
        treated = (r % 2 == 1) if swap_parity else (r % 2 == 0)
        assignments[uid] = Arm.TREATMENT if treated else Arm.CONTROL
        pair_index[uid] = r // 2
    return AllocationPlan(assignments, AllocationStrategy.COSS, seed, pair_index, rank, swap_parity)


def rct_allocate(units: Iterable[ExperimentUnit], seed: int = 0) -> AllocationPlan:
    """Allocate units by complete randomization.

    Units are put in id order before shuffling, so the plan depends only on
    the set of units and the seed. ``n // 2`` units go to control.
    """
    seed = check_seed(seed)
    units = sorted(_validate(units), key=lambda u: u.id)
    is_treatment = rct_assign(len(units), generator(seed, "rct"))
    # Informational covariate rank; ties fall back to id order.
    order = coss_order(np.array([u.covariate for u in units], dtype=float))
    rank = {units[i].id: r for r, i in enumerate(order.tolist())}
    assignments = {u.id: Arm.TREATMENT if t else Arm.CONTROL for u, t in zip(units, is_treatment)}
    return AllocationPlan(assignments, AllocationStrategy.RCT, seed, None, rank)


def allocate(
    units: Iterable[ExperimentUnit],
    strategy: AllocationStrategy | str,
    seed: int = 0,
    swap_parity: bool = False,
) -> AllocationPlan:
    strategy = AllocationStrategy(strategy)
    if strategy is AllocationStrategy.COSS:
        return coss_allocate(units, seed, swap_parity)
    return rct_allocate(units, seed)


def units_from_mapping(covariates: Mapping[str, float]) -> list[ExperimentUnit]:
    return [ExperimentUnit(str(k), float(v)) for k, v in covariates.items()]
