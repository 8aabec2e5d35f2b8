"""
Sample consensus engines sharing one evaluation-budget contract.

1. run_ransac         - one uniform minimal sample per model
2. run_gasac          - best half as parents, per-gene mutation at 1/(2m)
3. run_adaptive_gasac - adaptive crossover/mutation probabilities and a
                        learning roulette wheel for mutation replacements

Every fresh fit consumes one unit of the Budget and appends one tick to the
RunTrace, so traces from all three engines share the same x-axis: the
number of generated models. The genetic engines never pay twice for a gene
set: offspring whose sample was already scored in the run are re-drawn.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Set, Tuple

from services.errors import BudgetExhausted, DegenerateSample, InsufficientData
from services.estimators import Dataset, EstimatorSpec, Model, count_inliers
from services.genetics import (
    AdaptiveParams,
    Chromosome,
    Population,
    RouletteWheel,
    crossover_probability,
    gasac_mutation_rate,
    mutate_full,
    mutate_per_gene,
    mutation_probability,
    normalize_fitness,
    random_chromosome,
    train_wheel,
    uniform_crossover,
)
from utils.rng import make_rng

logger = logging.getLogger(__name__)

GenerationHook = Optional[Callable[[Population], None]]

# attempts at finding an unscored gene set before a duplicate is accepted
MAX_REDRAWS = 100


@dataclass
class Budget:
    max_models: int
    used: int = 0

    def __post_init__(self):
        if self.max_models <= 0:
            raise ValueError(f"max_models must be > 0, got {self.max_models}")

    @property
    def exhausted(self) -> bool:
        return self.used >= self.max_models

    @property
    def remaining(self) -> int:
        return self.max_models - self.used

    def consume(self) -> int:
        if self.exhausted:
            raise BudgetExhausted(f"model budget of {self.max_models} is used up")
        self.used += 1
        return self.used


@dataclass
class RunTrace:
    """Best inlier count after every generated model.

    `scored` remembers the fitness of every gene set fitted in the run.
    """

    series: List[Tuple[int, int]] = field(default_factory=list)
    best_chromosome: Optional[Chromosome] = None
    best_model: Optional[Model] = None
    scored: Dict[FrozenSet[int], int] = field(default_factory=dict, repr=False, compare=False)

    @property
    def best_inliers(self) -> int:
        return self.series[-1][1] if self.series else 0

    @property
    def models_generated(self) -> int:
        return self.series[-1][0] if self.series else 0

    def record(self, models_generated: int, chromosome: Chromosome, model: Optional[Model]) -> None:
        if self.best_chromosome is None or chromosome.fitness > self.best_inliers:
            self.best_chromosome = chromosome
            self.best_model = model
        self.series.append((models_generated, max(self.best_inliers, chromosome.fitness)))


def evaluate(c: Chromosome, spec: EstimatorSpec, data: Dataset, budget: Budget,
             trace: Optional[RunTrace] = None, reuse: bool = True) -> Chromosome:
    """Fit the model encoded by `c` and score it by its H-inlier count.

    Clean chromosomes are returned as they are without spending budget. With
    `reuse`, a gene set already scored in `trace` takes its cached fitness
    for free as well.

    Raises:
        BudgetExhausted: if no evaluation is left
    """
    if not c.dirty:
        return c
    key = frozenset(c.genes)
    if reuse and trace is not None and key in trace.scored:
        return c.evaluated(trace.scored[key])

    tick = budget.consume()
    try:
        model = spec.fit(data.subset(c.genes))
        fitness = count_inliers(spec, model, data)
    except DegenerateSample:
        model, fitness = None, 0
    evaluated = c.evaluated(fitness)
    if trace is not None:
        trace.scored[key] = fitness
        trace.record(tick, evaluated, model)
    return evaluated


def ransac_iteration_bound(inlier_fraction: float, m: int, confidence: float) -> float:
    """Iterations needed to draw one all-inlier sample with the given confidence.

    Returns math.inf when no inlier has been seen yet.
    """
    _check_confidence(confidence)
    if inlier_fraction <= 0:
        return math.inf
    p_good = inlier_fraction ** m
    if p_good >= 1:
        return 1
    return math.ceil(math.log(1 - confidence) / math.log(1 - p_good))


def _check_confidence(confidence: float) -> None:
    if not 0 < confidence < 1:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")


def _check_inputs(spec: EstimatorSpec, data: Dataset, budget: Budget, population_size: int = 1) -> None:
    spec.check_dataset(data)
    if data.n < spec.minimal_sample_size:
        raise InsufficientData(
            f"dataset has {data.n} observations, {spec.name} needs at least {spec.minimal_sample_size}"
        )
    if budget.max_models < population_size:
        raise ValueError(f"budget of {budget.max_models} models is smaller than the population {population_size}")


def _evaluate_all(members: List[Chromosome], spec, data, budget, trace) -> List[Chromosome]:
    """Evaluate dirty members in order; BudgetExhausted propagates mid-list."""
    return [evaluate(c, spec, data, budget, trace) for c in members]


def _unscored(members: List[Chromosome], trace: RunTrace,
              redraw: Callable[[], Chromosome]) -> List[Chromosome]:
    """Re-draw dirty members whose gene set was scored before or repeats within `members`."""
    taken: Set[FrozenSet[int]] = set()
    result = []
    for c in members:
        if c.dirty:
            for _ in range(MAX_REDRAWS):
                key = frozenset(c.genes)
                if key not in trace.scored and key not in taken:
                    break
                c = redraw()
            taken.add(frozenset(c.genes))
        result.append(c)
    return result


def _rank(members: List[Chromosome], elites: List[Chromosome]) -> List[Chromosome]:
    """Sort by fitness, elites first among equals."""
    elite_ids = {id(c) for c in elites}
    return sorted(members, key=lambda c: (-c.score, id(c) not in elite_ids))


def run_ransac(spec: EstimatorSpec, data: Dataset, budget: Budget, seed: int,
               confidence: Optional[float] = None,
               on_generation: GenerationHook = None) -> RunTrace:
    """Classic RANSAC: uniform minimal samples until the budget is used up.

    With a `confidence` in (0, 1) the run also stops once the iteration
    bound for the best inlier fraction so far is reached; None spends the
    whole budget.
    """
    _check_inputs(spec, data, budget)
    if confidence is not None:
        _check_confidence(confidence)
    rng = make_rng(seed)
    trace = RunTrace()
    m = spec.minimal_sample_size
    bound = math.inf
    iterations = 0

    while not budget.exhausted and iterations < bound:
        c = evaluate(random_chromosome(data.n, m, rng), spec, data, budget, trace, reuse=False)
        iterations += 1
        if confidence is not None and trace.best_chromosome is c:
            bound = ransac_iteration_bound(trace.best_inliers / data.n, m, confidence)
        if on_generation is not None:
            on_generation(Population([trace.best_chromosome], generation=iterations))

    logger.debug(f"ransac stopped after {iterations} models, best {trace.best_inliers}")
    return trace


def _initial_population(size: int, n: int, m: int, trace: RunTrace, rng) -> Population:
    members = [random_chromosome(n, m, rng) for _ in range(size)]
    return Population(_unscored(members, trace, lambda: random_chromosome(n, m, rng)))


def run_gasac(spec: EstimatorSpec, data: Dataset, population_size: int, budget: Budget, seed: int,
              on_generation: GenerationHook = None) -> RunTrace:
    """GASAC baseline.

    The best half of each generation become parents and survive; uniform
    crossover children refill the other half; every gene of every non-elite
    member mutates to a uniform random index with probability 1/(2m).
    Offspring repeating a scored gene set are replaced by uniform samples.
    """
    _check_inputs(spec, data, budget, population_size)
    rng = make_rng(seed)
    trace = RunTrace()
    m = spec.minimal_sample_size
    rate = gasac_mutation_rate(m)
    uniform = RouletteWheel.uniform(data.n)
    n_parents = max(2, population_size // 2)

    def redraw() -> Chromosome:
        return random_chromosome(data.n, m, rng)

    population = _initial_population(population_size, data.n, m, trace, rng)
    try:
        population.members = _evaluate_all(population.members, spec, data, budget, trace)
        while not budget.exhausted:
            if on_generation is not None:
                on_generation(population)

            parents = _rank(population.members, [])[:n_parents]
            elite = parents[0]

            children: List[Chromosome] = []
            while len(children) < population_size - n_parents:
                order = rng.permutation(n_parents)
                for i, j in zip(order[0::2], order[1::2]):
                    children.extend(uniform_crossover(parents[i], parents[j], rng, uniform))
            members = parents + children[:population_size - n_parents]

            mutated = [elite]
            for c in members[1:]:
                mutated.append(mutate_per_gene(c, data.n, rate, rng)[0])

            used = budget.used
            population = Population(_unscored(mutated, trace, redraw), population.generation + 1)
            population.members = _evaluate_all(population.members, spec, data, budget, trace)
            logger.debug(f"gasac generation {population.generation}: best {trace.best_inliers}")
            if budget.used == used:
                logger.debug("gasac found no unscored sample, stopping")
                break
    except BudgetExhausted:
        pass

    return trace


def run_adaptive_gasac(spec: EstimatorSpec, data: Dataset, params: AdaptiveParams, budget: Budget,
                       seed: int, on_generation: GenerationHook = None) -> RunTrace:
    """Adaptive genetic sample consensus.

    Per generation:
    1. normalize fitnesses; Pc_i = norm_i ** gamma, Pm_i = exp(-norm_i / delta)
    2. parents join the pool with probability Pc_i (top two forced in when fewer are drawn)
    3. the roulette wheel adds each pool member's normalized fitness to its genes
    4. random disjoint pool pairs produce uniform crossover children
    5. each non-elite member is fully re-drawn from the wheel with probability Pm_i
    6. offspring repeating a scored gene set are re-drawn from the wheel
    7. survivors and children are scored and truncated to the population size
    """
    _check_inputs(spec, data, budget, params.population_size)
    rng = make_rng(seed)
    trace = RunTrace()
    m = spec.minimal_sample_size
    size = params.population_size
    wheel = RouletteWheel.uniform(data.n)

    population = _initial_population(size, data.n, m, trace, rng)
    try:
        population.members = _evaluate_all(population.members, spec, data, budget, trace)
        while not budget.exhausted:
            if on_generation is not None:
                on_generation(population)

            members = _rank(population.members, [])
            norm = normalize_fitness([c.score for c in members])
            pc = crossover_probability(norm, params.gamma)
            pm = mutation_probability(norm, params.delta)

            pool = [i for i in range(size) if rng.random() < pc[i]]
            if len(pool) < 2:
                pool = sorted(set(pool) | {0, 1})
            wheel = train_wheel(wheel, [(members[i], norm[i]) for i in pool])

            children: List[Chromosome] = []
            order = rng.permutation(pool)
            for i, j in zip(order[0::2], order[1::2]):
                children.extend(uniform_crossover(members[i], members[j], rng, wheel))

            elites = members[:params.elitism]
            survivors = list(elites)
            for i in range(params.elitism, size):
                if rng.random() < pm[i]:
                    survivors.append(mutate_full(members[i], wheel, rng))
                else:
                    survivors.append(members[i])

            template = members[0]
            offspring = _unscored(survivors + children, trace, lambda: mutate_full(template, wheel, rng))
            used = budget.used
            merged = _evaluate_all(offspring, spec, data, budget, trace)
            population = Population(_rank(merged, elites)[:size], population.generation + 1)
            logger.debug(
                f"adaptive generation {population.generation}: pool {len(pool)}, "
                f"children {len(children)}, best {trace.best_inliers}"
            )
            if budget.used == used:
                logger.debug("adaptive found no unscored sample, stopping")
                break
    except BudgetExhausted:
        pass

    return trace
