"""
Comparison solvers: greedy LOS construction, a genetic algorithm and exhaustive search.
"""

import itertools
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from rsuplan.core.config import GaConfig, required_tiles
from rsuplan.core.coverage import evaluate_deployment
from rsuplan.core.exceptions import (
    InfeasibleDeploymentError,
    NoCandidatesError,
    SearchSpaceTooLargeError,
)
from rsuplan.core.models import Deployment, VisibilityTable

logger = logging.getLogger(__name__)


def solve_gc(
    table: VisibilityTable,
    tau: float,
    rss_th_dbm: Optional[float] = None,
) -> Deployment:
    """
    Greedy construction: repeatedly add the candidate seeing the most uncovered tiles.

    The RSS threshold plays no part in the selection; it is only used to fill in
    the mean-RSS verdict of the returned report.

    Args:
        table: Visibility table
        tau: Tolerance
        rss_th_dbm: Threshold for the report only

    Returns:
        Deployment meeting the coverage constraint

    Raises:
        InfeasibleDeploymentError: If coverage cannot reach ⌈τ|N|⌉
    """
    required = required_tiles(tau, table.n_reference)
    covered = np.zeros(table.n_reference, dtype=bool)
    chosen: List[int] = []
    trace: List[Dict] = []

    while int(covered.sum()) < required:
        gains = (table.los & ~covered).sum(axis=1)
        if chosen:
            gains[chosen] = -1
        best = int(np.argmax(gains)) if gains.size else 0
        if not gains.size or gains[best] <= 0:
            raise InfeasibleDeploymentError(
                "coverage target unreachable by greedy construction",
                coverage_rate=float(covered.mean()) if covered.size else 0.0,
            )
        chosen.append(best)
        covered |= table.los[best]
        trace.append({"step": len(chosen), "candidate": best, "covered": int(covered.sum())})

    report = evaluate_deployment(table, chosen, tau, rss_th_dbm)
    logger.info(f"GC chose {len(chosen)} sites; mean-RSS constraint met: {report.rss_ok}")
    return Deployment.from_ids(chosen, table.n_candidates, report, "gc", trace=trace)


class GaFitness:
    """
    Penalized fitness of selection chromosomes against a fixed visibility table.

    Feasible chromosomes score Σe. Infeasible ones score Σe + W·(coverage shortfall
    fraction + mean-RSS shortfall in dB), plus |C| when ``feasibility_offset`` is on,
    which makes every infeasible chromosome worse than any feasible one. Uncovered
    tiles enter the RSS shortfall at the weakest finite RSS of the table.
    """

    def __init__(
        self,
        table: VisibilityTable,
        tau: float,
        rss_th_dbm: Optional[float],
        penalty_weight: float,
        feasibility_offset: bool = True,
    ):
        self.table = table
        self.tau = tau
        self.rss_th_dbm = rss_th_dbm
        self.penalty_weight = penalty_weight
        self.offset = float(table.n_candidates) if feasibility_offset else 0.0
        self.required = required_tiles(tau, table.n_reference)
        finite = table.rss[np.isfinite(table.rss)]
        if finite.size:
            self.floor_dbm = float(finite.min())
        else:
            self.floor_dbm = (rss_th_dbm if rss_th_dbm is not None else 0.0) - 100.0
        self._cache: Dict[bytes, Tuple[float, bool]] = {}

    def shortfalls(self, chromosome: np.ndarray) -> Tuple[float, float]:
        """(coverage shortfall fraction, RSS shortfall in dB), each 0 when met."""
        n = self.table.n_reference
        if self.required == 0:
            return 0.0, 0.0
        ids = np.flatnonzero(chromosome)
        if ids.size:
            best = self.table.rss[ids].max(axis=0)
        else:
            best = np.full(n, -np.inf)
        covered = int(np.isfinite(best).sum())
        coverage_short = max(0, self.required - covered) / n

        rss_short = 0.0
        if self.rss_th_dbm is not None:
            filled = np.where(np.isfinite(best), best, self.floor_dbm)
            top = np.sort(filled)[n - self.required :]
            rss_short = max(0.0, self.rss_th_dbm - float(top.mean()))
        return coverage_short, rss_short

    def __call__(self, chromosome: np.ndarray) -> Tuple[float, bool]:
        """
        Fitness (lower is better) and feasibility of one chromosome.

        Args:
            chromosome: Boolean vector over C

        Returns:
            (fitness, feasible)
        """
        key = np.packbits(chromosome.astype(bool)).tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit

        size = float(np.count_nonzero(chromosome))
        coverage_short, rss_short = self.shortfalls(chromosome)
        feasible = coverage_short == 0.0 and rss_short == 0.0
        if feasible:
            result = (size, True)
        else:
            penalty = self.offset + self.penalty_weight * (coverage_short + rss_short)
            result = (size + penalty, False)
        self._cache[key] = result
        return result


def _tournament(rng: np.random.Generator, fitness: np.ndarray, size: int) -> int:
    entrants = rng.integers(0, fitness.size, size=size)
    return int(entrants[np.argmin(fitness[entrants])])


def solve_ga(
    table: VisibilityTable,
    tau: float,
    rss_th_dbm: Optional[float],
    config: Optional[GaConfig] = None,
) -> Deployment:
    """
    Genetic algorithm over binary selection chromosomes.

    The initial population draws every gene with probability 0.5, replaces the
    first individual by the greedy-construction solution when one exists and the
    second by the full candidate set, so a feasible instance always starts with a
    feasible chromosome. Each generation keeps the elite, then fills up with
    tournament-selected parents, uniform crossover and per-bit mutation. The best
    feasible chromosome seen in any generation is returned.

    Args:
        table: Visibility table
        tau: Tolerance
        rss_th_dbm: Mean-RSS threshold, None when disabled
        config: GA settings; the seed fixes every random draw

    Returns:
        Deployment with a per-generation trace

    Raises:
        NoCandidatesError: If the table has no candidates
        InfeasibleDeploymentError: If no feasible chromosome was ever found
    """
    config = config or GaConfig()
    n = table.n_candidates
    if n == 0:
        raise NoCandidatesError()

    rng = np.random.default_rng(config.seed)
    fitness_of = GaFitness(table, tau, rss_th_dbm, config.penalty(n), config.feasibility_offset)
    mutation = config.mutation_rate(n)
    size = config.population_size

    population = rng.random((size, n)) < 0.5
    try:
        population[0] = np.array(solve_gc(table, tau).selection, dtype=bool)
    except InfeasibleDeploymentError:
        logger.debug("GC seed unavailable; starting from a random population")
    population[1] = True

    best: Optional[np.ndarray] = None
    best_fitness = np.inf
    lowest_seen = np.inf
    trace: List[Dict] = []

    for generation in range(config.generations + 1):
        if generation > 0:
            order = np.argsort(scores, kind="stable")
            offspring = [population[k].copy() for k in order[: config.elitism]]
            while len(offspring) < size:
                p1 = population[_tournament(rng, scores, config.tournament_size)]
                p2 = population[_tournament(rng, scores, config.tournament_size)]
                if rng.random() < config.crossover_prob:
                    mask = rng.random(n) < 0.5
                    children = [np.where(mask, p1, p2), np.where(mask, p2, p1)]
                else:
                    children = [p1.copy(), p2.copy()]
                for child in children:
                    flips = rng.random(n) < mutation
                    offspring.append(child ^ flips)
            population = np.array(offspring[:size], dtype=bool)

        results = [fitness_of(ind) for ind in population]
        scores = np.array([r[0] for r in results])
        feasible = np.array([r[1] for r in results])
        lowest_seen = min(lowest_seen, float(scores.min()))

        if feasible.any():
            k = int(np.flatnonzero(feasible)[np.argmin(scores[feasible])])
            if scores[k] < best_fitness:
                best_fitness = float(scores[k])
                best = population[k].copy()

        trace.append(
            {
                "generation": generation,
                "best_fitness": float(scores.min()),
                "mean_fitness": float(scores.mean()),
                "feasible": bool(feasible.any()),
                "best_feasible_size": None if best is None else int(best.sum()),
            }
        )

    if best is None:
        raise InfeasibleDeploymentError(
            "genetic algorithm found no feasible chromosome", best_fitness=lowest_seen
        )

    ids = np.flatnonzero(best).tolist()
    report = evaluate_deployment(table, ids, tau, rss_th_dbm)
    logger.info(f"GA (seed {config.seed}) chose {len(ids)} sites after {config.generations} generations")
    return Deployment.from_ids(ids, n, report, "ga", trace=trace)


def solve_exhaustive(
    table: VisibilityTable,
    tau: float,
    rss_th_dbm: Optional[float],
    max_candidates: int = 20,
) -> Deployment:
    """
    Minimum-cardinality feasible subset by enumeration.

    Subsets are visited by size, then in lexicographic id order, so ties resolve to
    the lexicographically smallest set.

    Args:
        table: Visibility table
        tau: Tolerance
        rss_th_dbm: Mean-RSS threshold, None when disabled
        max_candidates: Refuse larger instances

    Returns:
        Optimal deployment

    Raises:
        SearchSpaceTooLargeError: If |C| exceeds max_candidates
        InfeasibleDeploymentError: If no subset is feasible
    """
    n = table.n_candidates
    if n > max_candidates:
        raise SearchSpaceTooLargeError(n, max_candidates)

    everything = evaluate_deployment(table, range(n), tau, rss_th_dbm)
    if not everything.feasible:
        raise InfeasibleDeploymentError(
            "no subset of the candidates is feasible",
            coverage_rate=everything.coverage_rate,
            mean_top_rss=everything.mean_top_rss,
        )

    checked = 0
    for k in range(n + 1):
        for subset in itertools.combinations(range(n), k):
            checked += 1
            report = evaluate_deployment(table, subset, tau, rss_th_dbm)
            if report.feasible:
                logger.info(f"Exhaustive optimum |D| = {k} after {checked} subsets")
                return Deployment.from_ids(subset, n, report, "exhaustive")

    # Unreachable: the full set was feasible
    raise InfeasibleDeploymentError("no subset of the candidates is feasible")
