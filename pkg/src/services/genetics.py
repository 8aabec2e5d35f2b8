"""
Chromosomes, the learning roulette wheel and the genetic operators.

A chromosome is a minimal sample: m distinct indices into a Dataset.
Selection probabilities follow the adaptive formulas

    norm_i = (f_i - min f) / (max f - min f)
    Pc_i   = norm_i ** gamma
    Pm_i   = exp(-norm_i / delta)

so fit individuals recombine and unfit ones are re-drawn. Full mutation
draws replacement genes from a roulette wheel whose weights are trained
toward the genes of selected parents.
"""

from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class Chromosome:
    genes: Tuple[int, ...]
    fitness: Optional[int] = None
    dirty: bool = True

    def __post_init__(self):
        genes = tuple(int(g) for g in self.genes)
        if len(set(genes)) != len(genes):
            raise ValueError(f"chromosome genes must be distinct, got {genes}")
        if any(g < 0 for g in genes):
            raise ValueError(f"chromosome genes must be non-negative, got {genes}")
        object.__setattr__(self, "genes", genes)

    @property
    def m(self) -> int:
        return len(self.genes)

    @property
    def score(self) -> int:
        """Fitness used for ranking; unevaluated chromosomes rank last."""
        return -1 if self.fitness is None else self.fitness

    def evaluated(self, fitness: int) -> "Chromosome":
        return replace(self, fitness=int(fitness), dirty=False)


@dataclass
class Population:
    members: List[Chromosome]
    generation: int = 0

    def fitnesses(self) -> np.ndarray:
        return np.array([c.score for c in self.members], dtype=float)

    def best(self) -> Chromosome:
        return max(self.members, key=lambda c: c.score)


@dataclass(frozen=True)
class AdaptiveParams:
    """Parameters of the adaptive engine.

    Args:
        gamma: crossover power factor, Pc = norm ** gamma
        delta: mutation decay factor, Pm = exp(-norm / delta)
        population_size: chromosomes per generation (B)
        elitism: best chromosomes exempt from mutation each generation
    """

    gamma: float = 3.0
    delta: float = 0.2
    population_size: int = 10
    elitism: int = 1

    def __post_init__(self):
        if not self.gamma >= 1:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must be in (0, 1], got {self.delta}")
        if self.population_size < 4:
            raise ValueError(f"population_size must be >= 4, got {self.population_size}")
        if not 1 <= self.elitism < self.population_size:
            raise ValueError(f"elitism must be in [1, population_size), got {self.elitism}")


@dataclass(frozen=True, eq=False)
class RouletteWheel:
    """Positive weight per dataset index; draw probability is weight / total."""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("roulette wheel needs a non-empty weight vector")
        if not np.all(weights > 0):
            raise ValueError("roulette wheel weights must be positive")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, n: int) -> "RouletteWheel":
        return cls(np.ones(n))

    @property
    def n(self) -> int:
        return self.weights.size

    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def probability_of(self, genes: Iterable[int]) -> float:
        return float(self.probabilities()[list(genes)].sum())

    def draw(self, rng: np.random.Generator, exclude: Iterable[int] = ()) -> int:
        """Draw one index, renormalizing over the indices not excluded."""
        weights = self.weights.copy()
        excluded = list(exclude)
        if excluded:
            weights[excluded] = 0.0
        total = weights.sum()
        if total <= 0:
            raise ValueError("no index left to draw from the roulette wheel")
        return int(rng.choice(self.n, p=weights / total))


def normalize_fitness(fitnesses: Sequence[float]) -> np.ndarray:
    """Min-max rescale fitnesses to [0, 1]; a flat generation maps to all zeros."""
    f = np.asarray(fitnesses, dtype=float)
    if f.size == 0:
        raise ValueError("cannot normalize an empty fitness vector")
    lo, hi = f.min(), f.max()
    if hi == lo:
        return np.zeros_like(f)
    return (f - lo) / (hi - lo)


def crossover_probability(norm_fitness, gamma: float):
    return np.power(norm_fitness, gamma)


def mutation_probability(norm_fitness, delta: float):
    return np.exp(-np.asarray(norm_fitness, dtype=float) / delta)


def gasac_mutation_rate(m: int) -> float:
    """Per-gene mutation probability of the GASAC baseline."""
    return 1.0 / (2 * m)


def random_chromosome(n: int, m: int, rng: np.random.Generator) -> Chromosome:
    if n < m:
        raise ValueError(f"cannot draw {m} distinct indices from {n}")
    return Chromosome(tuple(int(g) for g in rng.choice(n, size=m, replace=False)))


def _repair(draft: Sequence[int], wheel: RouletteWheel, rng: np.random.Generator) -> Tuple[int, ...]:
    genes = list(draft)
    seen = set()
    for i, gene in enumerate(genes):
        if gene in seen:
            others = set(genes[:i]) | set(genes[i + 1:])
            genes[i] = wheel.draw(rng, exclude=others)
        seen.add(genes[i])
    return tuple(genes)


def recombine(a: Chromosome, b: Chromosome, take_first: Sequence[bool],
              wheel: RouletteWheel, rng: np.random.Generator) -> Tuple[Chromosome, Chromosome]:
    """Build two children from a per-position parent choice.

    Position i of the first child comes from `a` when take_first[i] is true
    and from `b` otherwise; the second child takes the other gene. Duplicates
    inside a child are re-drawn from the wheel.
    """
    if a.m != b.m or len(take_first) != a.m:
        raise ValueError("parents and mask must have the same length")
    draft1 = [ga if first else gb for ga, gb, first in zip(a.genes, b.genes, take_first)]
    draft2 = [gb if first else ga for ga, gb, first in zip(a.genes, b.genes, take_first)]
    return Chromosome(_repair(draft1, wheel, rng)), Chromosome(_repair(draft2, wheel, rng))


def uniform_crossover(a: Chromosome, b: Chromosome, rng: np.random.Generator,
                      wheel: RouletteWheel) -> Tuple[Chromosome, Chromosome]:
    """Each child gene comes from either parent with probability 1/2."""
    take_first = rng.random(a.m) < 0.5
    return recombine(a, b, take_first, wheel, rng)


def mutate_full(c: Chromosome, wheel: RouletteWheel, rng: np.random.Generator) -> Chromosome:
    """Replace every gene with sequential draws without replacement from the wheel."""
    if wheel.n < c.m:
        raise ValueError(f"wheel over {wheel.n} indices cannot fill {c.m} genes")
    genes: List[int] = []
    for _ in range(c.m):
        genes.append(wheel.draw(rng, exclude=genes))
    return Chromosome(tuple(genes))


def mutate_per_gene(c: Chromosome, n: int, rate: float,
                    rng: np.random.Generator) -> Tuple[Chromosome, int]:
    """GASAC mutation: each gene is swapped for a uniform unused index with probability `rate`.

    Returns:
        The (possibly unchanged) chromosome and the number of genes replaced
    """
    flips = rng.random(c.m) < rate
    if not flips.any() or n <= c.m:
        return c, 0
    wheel = RouletteWheel.uniform(n)
    genes = list(c.genes)
    for i in np.flatnonzero(flips):
        genes[i] = wheel.draw(rng, exclude=genes)
    return Chromosome(tuple(genes)), int(flips.sum())


def train_wheel(wheel: RouletteWheel, parents: Iterable[Tuple[Chromosome, float]]) -> RouletteWheel:
    """Add each parent's normalized fitness to the weight of every gene it carries."""
    weights = wheel.weights.copy()
    for chromosome, norm_fitness in parents:
        if not 0.0 <= norm_fitness <= 1.0:
            raise ValueError(f"normalized fitness must be in [0, 1], got {norm_fitness}")
        weights[list(chromosome.genes)] += float(norm_fitness)
    return RouletteWheel(weights)
