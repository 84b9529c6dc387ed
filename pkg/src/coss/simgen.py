"""Simulated populations with treated and untreated potential outcomes.

Each population unit carries a covariate ``x`` and two potential outcomes::

    y0 = a x^2 + b x + c + N(0, eps0^2)
    y1 = a x^2 + b x + c + N(mu, eps1^2)

(``a`` is ignored for the linear relationship). ``eps0`` and ``eps1`` are
standard deviations and the two noise draws are independent.

The covariate is drawn from a :class:`CovariateSpec`, uniform on
``[loc - scale, loc + scale]`` by default. A width-10 uniform window
reproduces the reference simulation scale (see the bundled presets).

A :class:`Sample` hides the potential outcomes: the only way to read an
outcome is :meth:`Sample.reveal`, which returns ``y1`` for treated and
``y0`` for control units.
"""

from __future__ import annotations

import enum
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field, fields

import numpy as np

from coss._rng import check_seed, generator
from coss.allocation import ExperimentUnit
from coss.errors import ConfigError, SampleTooLarge

DEFAULT_SEED = 2024


class Relationship(str, enum.Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class CovariateSpec:
    dist: str = "uniform"
    loc: float = 0.0
    scale: float = 5.0

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.dist == "uniform":
            return rng.uniform(self.loc - self.scale, self.loc + self.scale, size=n)
        return rng.normal(self.loc, self.scale, size=n)


@dataclass(frozen=True)
class SimulationConfig:
    relationship: Relationship = Relationship.LINEAR
    a: float = 1.0
    b: float = 2.0
    c: float = 1.0
    mu: float = 1.0
    eps0: float = 1.0
    eps1: float = 3.0
    population: int = 10_000
    sample_size: int = 200
    replications: int = 5_000
    seed: int = DEFAULT_SEED
    covariate: CovariateSpec = field(default_factory=CovariateSpec)
    swap_parity: bool = False

    def __post_init__(self):
        object.__setattr__(self, "relationship", Relationship(self.relationship))
        if isinstance(self.covariate, dict):
            object.__setattr__(self, "covariate", CovariateSpec(**self.covariate))
        validate(self)

    def replace(self, **changes) -> SimulationConfig:
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return SimulationConfig(**values)

    def mean_function(self, x: np.ndarray) -> np.ndarray:
        f = self.b * x + self.c
        if self.relationship is Relationship.QUADRATIC:
            f = f + self.a * x * x
        return f


def validate(cfg: SimulationConfig) -> None:
    for name in ("a", "b", "c", "mu", "eps0", "eps1"):
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            raise ConfigError(name, f"must be a finite number, got {v!r}")
    for name in ("eps0", "eps1"):
        if getattr(cfg, name) < 0:
            raise ConfigError(name, "must be >= 0")
    for name in ("population", "sample_size", "replications"):
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
            raise ConfigError(name, f"must be a positive integer, got {v!r}")
    if cfg.sample_size % 2:
        raise ConfigError("sample_size", "must be even")
    if cfg.sample_size > cfg.population:
        raise ConfigError("sample_size", f"must not exceed population ({cfg.population})")
    if cfg.sample_size < 4:
        raise ConfigError("sample_size", "must be at least 4")
    try:
        check_seed(cfg.seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError("seed", str(exc)) from None
    cov = cfg.covariate
    if cov.dist not in ("uniform", "normal"):
        raise ConfigError("covariate.dist", f"must be 'uniform' or 'normal', got {cov.dist!r}")
    if not np.isfinite(cov.loc):
        raise ConfigError("covariate.loc", "must be finite")
    if not (np.isfinite(cov.scale) and cov.scale > 0):
        raise ConfigError("covariate.scale", "must be a positive number")


@dataclass(frozen=True)
class PopulationUnit:
    id: str
    x: float
    y0: float
    y1: float


@dataclass(frozen=True, eq=False)
class Population(Sequence):
    x: np.ndarray
    y0: np.ndarray
    y1: np.ndarray

    def __len__(self) -> int:
        return self.x.size

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return PopulationUnit(unit_id(i), float(self.x[i]), float(self.y0[i]), float(self.y1[i]))

    def __iter__(self) -> Iterator[PopulationUnit]:
        return (self[i] for i in range(len(self)))


def unit_id(i: int) -> str:
    return f"u{int(i):06d}"


def generate_population(config: SimulationConfig) -> Population:
    rng = generator(config.seed, "population")
    n = config.population
    x = config.covariate.draw(rng, n)
    f = config.mean_function(x)
    y0 = f + rng.normal(0.0, 1.0, n) * config.eps0
    y1 = f + config.mu + rng.normal(0.0, 1.0, n) * config.eps1
    return Population(x, y0, y1)


class Sample:
    """Units drawn from a population. Potential outcomes are private."""

    def __init__(self, population: Population, index: np.ndarray):
        self.index = index
        self.x = population.x[index]
        self._y0 = population.y0[index]
        self._y1 = population.y1[index]

    def __len__(self) -> int:
        return self.index.size

    @property
    def ids(self) -> list[str]:
        return [unit_id(i) for i in self.index]

    def units(self) -> list[ExperimentUnit]:
        return [ExperimentUnit(uid, float(x)) for uid, x in zip(self.ids, self.x)]

    def reveal(self, is_treatment: np.ndarray) -> np.ndarray:
        return np.where(is_treatment, self._y1, self._y0)

    def reveal_plan(self, plan) -> dict[str, float]:
        """Observed outcomes keyed by id for an :class:`~coss.allocation.AllocationPlan`."""
        pos = {uid: k for k, uid in enumerate(self.ids)}
        return {
            uid: float(self._y1[pos[uid]] if arm.value == "T" else self._y0[pos[uid]])
            for uid, arm in plan.assignments.items()
        }


def sample_indices(population_size: int, sample_size: int, rng: np.random.Generator) -> np.ndarray:
    if sample_size > population_size:
        raise SampleTooLarge(f"cannot draw {sample_size} units from a population of {population_size}")
    return rng.choice(population_size, size=sample_size, replace=False)


def draw_sample(population: Population, sample_size: int, seed: int) -> Sample:
    """Uniform sample without replacement, deterministic in ``seed``."""
    return Sample(population, sample_indices(len(population), sample_size, generator(seed, "sample")))
