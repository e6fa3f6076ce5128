"""
Agile three-phase RSU placement.

Phase 1 greedily covers tiles using each candidate's RSS-feasible service list,
phase 2 repairs the mean-RSS constraint, and phase 3 swaps chosen and rejected
sites while the deployment keeps improving, then drops and merges sites that the
constraints no longer need.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from rsuplan.core.config import PlanningConfig, required_tiles
from rsuplan.core.coverage import best_rss_of, build_grid, build_visibility, evaluate_deployment
from rsuplan.core.exceptions import InfeasibleDeploymentError, InvalidParameterError
from rsuplan.core.geometry import Scene
from rsuplan.core.models import CandidateSite, Deployment, ServiceList, VisibilityTable

logger = logging.getLogger(__name__)

AGILE = "agile"
# Minimum mean-RSS gain (dB) that counts as an improvement in phase 3
SWAP_EPSILON_DB = 1e-9


def compute_service_lists(table: VisibilityTable, rss_th_dbm: Optional[float]) -> ServiceList:
    """
    For every candidate, the tiles k_i′ it can serve while honoring the RSS target.

    LOS tiles are ranked by RSS descending (ties by tile index) and k_i′ is the
    longest prefix whose running mean stays at or above the threshold. Without a
    threshold every LOS tile is kept.

    Args:
        table: Visibility table
        rss_th_dbm: Mean-RSS threshold, None when disabled

    Returns:
        ServiceList aligned with candidate ids
    """
    lists: List[np.ndarray] = []
    for i in range(table.n_candidates):
        tiles = table.los_tiles(i)
        values = table.rss[i, tiles]
        order = np.lexsort((tiles, -values))
        tiles, values = tiles[order], values[order]
        if rss_th_dbm is not None and tiles.size:
            means = np.cumsum(values) / np.arange(1, values.size + 1)
            tiles = tiles[: int(np.count_nonzero(means >= rss_th_dbm))]
        lists.append(tiles)
    return ServiceList(tiles=lists)


def _membership(lists: ServiceList, n_reference: int) -> np.ndarray:
    matrix = np.zeros((len(lists), n_reference), dtype=bool)
    for i, tiles in enumerate(lists.tiles):
        matrix[i, tiles] = True
    return matrix


def _deployment(
    table: VisibilityTable,
    ids: Sequence[int],
    tau: float,
    rss_th_dbm: Optional[float],
    phases: Dict[int, int],
    trace: List[Dict],
) -> Deployment:
    report = evaluate_deployment(table, ids, tau, rss_th_dbm)
    return Deployment.from_ids(
        ids,
        table.n_candidates,
        report,
        AGILE,
        added_in_phase={i: phases[i] for i in ids if i in phases},
        trace=trace,
    )


def _trace_row(phase: int, action: str, candidate: int, deployment: Deployment) -> Dict:
    return {
        "phase": phase,
        "action": action,
        "candidate": candidate,
        "n_deployed": deployment.objective,
        "covered": deployment.report.covered_count,
        "mean_top_rss": deployment.report.mean_top_rss,
    }


def _infeasible(table: VisibilityTable, reason: str, ids: Sequence[int], tau: float) -> InfeasibleDeploymentError:
    report = evaluate_deployment(table, ids, tau, None)
    return InfeasibleDeploymentError(
        reason,
        coverage_rate=report.coverage_rate,
        mean_top_rss=report.mean_top_rss,
    )


def phase1(
    table: VisibilityTable,
    lists: ServiceList,
    tau: float,
    rss_th_dbm: Optional[float],
) -> Deployment:
    """
    Greedy coverage on service lists until ⌈τ|N|⌉ tiles are in LOS.

    Each round adds the candidate whose k_i′ holds the most tiles not yet served by
    the chosen ones (lowest id on ties). When every list is exhausted but coverage is
    still short, raw LOS marginal gain takes over; such picks are logged as warnings
    and traced with the action ``los-fallback``. The error is raised only when no
    remaining candidate sees an uncovered tile at all.

    Args:
        table: Visibility table
        lists: Service lists from compute_service_lists
        tau: Tolerance
        rss_th_dbm: Mean-RSS threshold, None when disabled

    Returns:
        Partial deployment meeting the coverage constraint

    Raises:
        InfeasibleDeploymentError: If no remaining candidate sees an uncovered tile
    """
    required = required_tiles(tau, table.n_reference)
    service = _membership(lists, table.n_reference)
    los = table.los

    served = np.zeros(table.n_reference, dtype=bool)
    covered = np.zeros(table.n_reference, dtype=bool)
    chosen: List[int] = []
    phases: Dict[int, int] = {}
    trace: List[Dict] = []

    while int(covered.sum()) < required:
        gains = (service & ~served).sum(axis=1)
        if chosen:
            gains[chosen] = -1
        best = int(np.argmax(gains))
        action = "add"
        if gains[best] <= 0:
            gains = (los & ~covered).sum(axis=1)
            if chosen:
                gains[chosen] = -1
            best = int(np.argmax(gains))
            if gains[best] <= 0:
                raise _infeasible(table, "coverage target unreachable in phase 1", chosen, tau)
            action = "los-fallback"
            logger.warning(
                f"Service lists exhausted at {int(covered.sum())}/{required} covered tiles; "
                f"adding {best} by raw LOS gain"
            )

        chosen.append(best)
        phases[best] = 1
        served |= service[best]
        covered |= los[best]
        trace.append(
            {
                "phase": 1,
                "action": action,
                "candidate": best,
                "n_deployed": len(chosen),
                "covered": int(covered.sum()),
                "mean_top_rss": None,
            }
        )
        logger.debug(f"Phase 1 added {best} (gain {int(gains[best])}, covered {int(covered.sum())}/{required})")

    deployment = _deployment(table, chosen, tau, rss_th_dbm, phases, trace)
    logger.info(f"Phase 1 chose {len(chosen)} sites, covering {deployment.report.covered_count} tiles")
    return deployment


def _mean_top_fast(best: np.ndarray, required: int) -> float:
    """Top-mean via partition for inner loops; -inf when undefined."""
    if required <= 0:
        return -np.inf
    top = np.partition(best, best.size - required)[best.size - required :]
    if not np.all(np.isfinite(top)):
        return -np.inf
    return float(top.mean())


def phase2(
    table: VisibilityTable,
    deployment: Deployment,
    tau: float,
    rss_th_dbm: Optional[float],
) -> Deployment:
    """
    Add sites until both constraints hold.

    Uncovered tiles are targeted first (candidate covering most of them); once every
    reachable tile is covered, the candidate giving the largest mean top RSS is added.
    Skipped when the deployment is already feasible.

    Args:
        table: Visibility table
        deployment: Deployment from phase 1
        tau: Tolerance
        rss_th_dbm: Mean-RSS threshold, None when disabled

    Returns:
        Feasible deployment

    Raises:
        InfeasibleDeploymentError: If every candidate is deployed and the constraints still fail
    """
    if deployment.report.feasible:
        logger.debug("Phase 2 skipped; constraints already met")
        return deployment

    required = required_tiles(tau, table.n_reference)
    chosen = list(deployment.chosen)
    phases = dict(deployment.added_in_phase)
    trace = list(deployment.trace)
    best = best_rss_of(table, chosen)
    current = deployment

    while not current.report.feasible:
        in_d = set(chosen)
        remaining = [k for k in range(table.n_candidates) if k not in in_d]
        if not remaining:
            raise InfeasibleDeploymentError(
                "all candidates deployed but constraints unmet",
                coverage_rate=current.report.coverage_rate,
                mean_top_rss=current.report.mean_top_rss,
            )

        uncovered = ~np.isfinite(best)
        pick: Optional[int] = None
        if uncovered.any():
            gains = table.los[remaining][:, uncovered].sum(axis=1)
            if gains.max() > 0:
                pick = remaining[int(np.argmax(gains))]
        if pick is None:
            scores = np.array(
                [_mean_top_fast(np.maximum(best, table.rss[k]), required) for k in remaining]
            )
            if not np.isfinite(scores.max()):
                raise InfeasibleDeploymentError(
                    "no remaining candidate improves the deployment",
                    coverage_rate=current.report.coverage_rate,
                    mean_top_rss=current.report.mean_top_rss,
                )
            pick = remaining[int(np.argmax(scores))]

        chosen.append(pick)
        phases[pick] = 2
        best = np.maximum(best, table.rss[pick])
        current = _deployment(table, chosen, tau, rss_th_dbm, phases, trace)
        trace.append(_trace_row(2, "add", pick, current))
        logger.debug(f"Phase 2 added {pick}; mean top RSS {current.report.mean_top_rss}")

    logger.info(f"Phase 2 finished with {current.objective} sites")
    return current


def _swap_key(best: np.ndarray, required: int) -> Tuple[int, float]:
    return (int(np.isfinite(best).sum()), _mean_top_fast(best, required))


def _key_feasible(key: Tuple[int, float], required: int, rss_th_dbm: Optional[float]) -> bool:
    if key[0] < required:
        return False
    return rss_th_dbm is None or required == 0 or key[1] >= rss_th_dbm


def _best_drop(
    table: VisibilityTable,
    chosen: List[int],
    required: int,
    rss_th_dbm: Optional[float],
) -> Optional[Tuple[int, Tuple[int, float]]]:
    """The site whose removal keeps feasibility with the best remaining key (lowest id on ties)."""
    found: Optional[Tuple[int, Tuple[int, float]]] = None
    for i in chosen:
        key = _swap_key(best_rss_of(table, [j for j in chosen if j != i]), required)
        if _key_feasible(key, required, rss_th_dbm) and (found is None or key > found[1]):
            found = (i, key)
    return found


def _first_merge(
    table: VisibilityTable,
    chosen: List[int],
    outside: np.ndarray,
    required: int,
    rss_th_dbm: Optional[float],
) -> Optional[Tuple[int, int, int, Tuple[int, float]]]:
    """
    The first chosen pair (a, b) that one rejected site k can replace.

    Pairs are scanned in ascending order; among the replacements of that pair the
    best (covered, mean top RSS) wins, then the lowest id.
    """
    n_reference = table.n_reference
    rows = table.rss[outside]
    for x, a in enumerate(chosen):
        for b in chosen[x + 1 :]:
            base = best_rss_of(table, [j for j in chosen if j != a and j != b])
            trial = np.maximum(base[None, :], rows)
            covered = np.isfinite(trial).sum(axis=1)
            ok = covered >= required
            if required > 0:
                top = np.partition(trial, n_reference - required, axis=1)[:, n_reference - required :]
                means = top.mean(axis=1)
                if rss_th_dbm is not None:
                    ok &= means >= rss_th_dbm
            else:
                means = np.full(len(outside), -np.inf)
            if not ok.any():
                continue
            idx = np.flatnonzero(ok)
            order = np.lexsort((outside[idx], -means[idx], -covered[idx]))
            pick = int(idx[order[0]])
            return (a, b, int(outside[pick]), (int(covered[pick]), float(means[pick])))
    return None


def _phase3_row(action: str, candidate: int, n_deployed: int, key: Tuple[int, float]) -> Dict:
    return {
        "phase": 3,
        "action": action,
        "candidate": candidate,
        "n_deployed": n_deployed,
        "covered": key[0],
        "mean_top_rss": key[1] if np.isfinite(key[1]) else None,
    }


def phase3(
    table: VisibilityTable,
    deployment: Deployment,
    tau: float,
    rss_th_dbm: Optional[float],
    max_passes: int = 50,
) -> Deployment:
    """
    Improve a feasible deployment by swaps, then shrink it by drops and merges.

    A swap replaces one chosen site with a rejected one and is accepted only when
    the result stays feasible and (covered, mean top RSS) compares lexicographically
    greater. Swap passes repeat until one makes no swap. Once swaps settle, a
    redundant site is dropped if one exists, otherwise two chosen sites are merged
    into a single rejected site that keeps both constraints; every reduction is
    followed by fresh swap passes. Swap passes are capped at ``max_passes`` in
    total.

    Args:
        table: Visibility table
        deployment: Feasible deployment
        tau: Tolerance
        rss_th_dbm: Mean-RSS threshold, None when disabled
        max_passes: Swap pass cap; hitting it logs a warning

    Returns:
        Feasible deployment no larger than the input
    """
    required = required_tiles(tau, table.n_reference)
    chosen = sorted(deployment.chosen)
    if not chosen:
        return deployment

    phases = dict(deployment.added_in_phase)
    trace = list(deployment.trace)
    rss = table.rss
    useful = table.los.any(axis=1)
    key = _swap_key(best_rss_of(table, chosen), required)
    swaps = 0
    reductions = 0
    passes = 0
    capped = False

    while True:
        while not capped:
            if passes == max_passes:
                capped = True
                logger.warning(f"Phase 3 stopped swapping at the cap of {max_passes} passes")
                break
            passes += 1
            changed = False
            for i in list(chosen):
                rest = [j for j in chosen if j != i]
                without = best_rss_of(table, rest)
                in_d = set(chosen)
                for k in range(table.n_candidates):
                    if k in in_d or not useful[k]:
                        continue
                    trial = np.maximum(without, rss[k])
                    covered = int(np.isfinite(trial).sum())
                    if covered < key[0] or covered < required:
                        continue
                    mean_top = _mean_top_fast(trial, required)
                    if rss_th_dbm is not None and required > 0 and mean_top < rss_th_dbm:
                        continue
                    if covered == key[0] and not mean_top > key[1] + SWAP_EPSILON_DB:
                        continue

                    chosen = sorted(rest + [k])
                    phases.pop(i, None)
                    phases[k] = 3
                    key = (covered, mean_top)
                    swaps += 1
                    changed = True
                    trace.append(_phase3_row(f"swap {i}->{k}", k, len(chosen), key))
                    logger.debug(f"Phase 3 swapped {i} for {k}: covered {covered}, mean {mean_top:.3f}")
                    break
            if not changed:
                break

        drop = _best_drop(table, chosen, required, rss_th_dbm)
        if drop is not None:
            i, key = drop
            chosen = [j for j in chosen if j != i]
            phases.pop(i, None)
            trace.append(_phase3_row(f"drop {i}", i, len(chosen), key))
            logger.debug(f"Phase 3 dropped redundant site {i}")
            reductions += 1
            continue

        in_d = set(chosen)
        outside = np.array(
            [k for k in range(table.n_candidates) if k not in in_d and useful[k]], dtype=int
        )
        merge = _first_merge(table, chosen, outside, required, rss_th_dbm) if outside.size else None
        if merge is None:
            break
        a, b, k, key = merge
        chosen = sorted([j for j in chosen if j != a and j != b] + [k])
        phases.pop(a, None)
        phases.pop(b, None)
        phases[k] = 3
        trace.append(_phase3_row(f"merge {a},{b}->{k}", k, len(chosen), key))
        logger.debug(f"Phase 3 merged {a} and {b} into {k}")
        reductions += 1

    logger.info(f"Phase 3 made {swaps} swaps and {reductions} reductions")
    result = _deployment(table, chosen, tau, rss_th_dbm, phases, trace)
    if not result.report.feasible:
        # Moves are screened for feasibility; fall back if the exact check disagrees
        logger.warning("Phase 3 result failed the exact re-check; keeping the phase 2 deployment")
        return deployment
    return result


def prune_redundant(
    table: VisibilityTable,
    deployment: Deployment,
    tau: float,
    rss_th_dbm: Optional[float],
) -> Deployment:
    """
    Drop deployed sites whose removal keeps both constraints, highest id first.

    Args:
        table: Visibility table
        deployment: Feasible deployment
        tau: Tolerance
        rss_th_dbm: Mean-RSS threshold, None when disabled

    Returns:
        Deployment with |D| no larger than the input
    """
    chosen = list(deployment.chosen)
    trace = list(deployment.trace)
    for i in sorted(chosen, reverse=True):
        trial = [j for j in chosen if j != i]
        if evaluate_deployment(table, trial, tau, rss_th_dbm).feasible:
            chosen = trial
            trace.append({"phase": 4, "action": "prune", "candidate": i, "n_deployed": len(chosen)})
            logger.debug(f"Pruned redundant site {i}")
    if len(chosen) == deployment.objective:
        return deployment
    return _deployment(table, chosen, tau, rss_th_dbm, dict(deployment.added_in_phase), trace)


def solve_agile(
    scene: Scene,
    candidates: Sequence[CandidateSite],
    config: Optional[PlanningConfig] = None,
    table: Optional[VisibilityTable] = None,
) -> Deployment:
    """
    Run the three placement phases.

    Args:
        scene: Scene
        candidates: Candidate set C
        config: Planning configuration (defaults when None)
        table: Precomputed visibility table; built from the scene when None

    Returns:
        Feasible deployment

    Raises:
        InfeasibleDeploymentError: If even all of C violates a constraint
    """
    config = config or PlanningConfig()
    if table is None:
        grid = build_grid(scene, config.tile_size_m, config.border_margin_m)
        table = build_visibility(
            scene, grid, candidates, config.radio, config.strict_boundary, config.workers
        )
    if table.n_candidates != len(candidates):
        raise InvalidParameterError(
            "table", table.n_candidates, f"expected {len(candidates)} candidate rows"
        )

    tau, rss_th = config.tau, config.rss_th_dbm
    everything = evaluate_deployment(table, range(table.n_candidates), tau, rss_th)
    if not everything.feasible:
        raise InfeasibleDeploymentError(
            "the full candidate set violates the constraints",
            coverage_rate=everything.coverage_rate,
            mean_top_rss=everything.mean_top_rss,
        )

    lists = compute_service_lists(table, rss_th)
    deployment = phase1(table, lists, tau, rss_th)
    deployment = phase2(table, deployment, tau, rss_th)
    deployment = phase3(table, deployment, tau, rss_th, config.phase3_max_passes)
    if config.prune_redundant:
        deployment = prune_redundant(table, deployment, tau, rss_th)

    logger.info(
        f"Agile placement: {deployment.objective} of {table.n_candidates} sites, "
        f"coverage {deployment.report.coverage_rate:.4f}"
    )
    return deployment
