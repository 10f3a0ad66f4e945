"""Assignment of exactly two attributes per instance under prior-based bounds.

The assignment problem is a bipartite b-matching, solved exactly as a
min-cost flow:

* every instance supplies `ROW_SUM` units
* instance -> attribute arcs have capacity 1 and a cost falling with the score
* attribute `j` demands `lower[j]` units and can pass `upper[j] - lower[j]`
  more on to a sink, which absorbs the rest
"""

import logging
import math
from itertools import combinations

import numpy as np
from ortools.graph.python import min_cost_flow

from qualpipe.errors import InfeasibleError, TooFewAttributesError, TooLargeError
from qualpipe.model import (
    ROW_SUM,
    SCORE_MAX,
    AffinityMatrix,
    AssignmentMatrix,
    AttributeSet,
    LpBounds,
)

logger = logging.getLogger(__package__)

MAX_EPSILON = 0.99
FIRST_WIDENING = 0.05
BRUTE_FORCE_LIMIT = 10**7
# absorbs float noise such as 2 * 100 * 0.3 * 1.1 == 66.00000000000001
ROUNDING_TOLERANCE = 1e-9


def _bounds_at(priors: list[float], n: int, epsilon: float) -> LpBounds:
    total = ROW_SUM * n
    lower = [
        min(n, math.floor(total * p * (1 - epsilon) + ROUNDING_TOLERANCE))
        for p in priors
    ]
    upper = [
        min(n, math.ceil(total * p * (1 + epsilon) - ROUNDING_TOLERANCE))
        for p in priors
    ]
    return LpBounds(tuple(lower), tuple(upper), epsilon)


def compute_bounds(priors: AttributeSet, n_instances: int, epsilon: float) -> LpBounds:
    """Integer column bounds `2 n p_j (1 -/+ epsilon)`, rounded outwards.

    Bounds are capped at `n_instances`, since an instance is assigned to an
    attribute at most once. When no assignment fits the bounds, `epsilon` is
    doubled (up to `MAX_EPSILON`) until one does.
    """
    if not priors.has_priors:
        msg = f"{priors.kind} attribute set has no priors"
        raise ValueError(msg)
    if not 0.0 <= epsilon < 1.0:
        msg = f"epsilon must be in [0, 1), got {epsilon}"
        raise ValueError(msg)
    if n_instances < 1:
        msg = f"need at least one instance, got {n_instances}"
        raise ValueError(msg)
    p = [float(a.prior or 0.0) for a in priors.attributes]
    eps = epsilon
    while True:
        bounds = _bounds_at(p, n_instances, eps)
        if bounds.is_feasible(n_instances):
            break
        if eps >= MAX_EPSILON:
            msg = (
                f"{priors.kind} bounds infeasible at epsilon {eps}: "
                f"sum of lower bounds {sum(bounds.lower)}, "
                f"sum of upper bounds {sum(bounds.upper)}, "
                f"required {ROW_SUM * n_instances}"
            )
            raise InfeasibleError(msg)
        eps = min(MAX_EPSILON, eps * 2 if eps > 0 else FIRST_WIDENING)
    if eps != epsilon:
        logger.warning(
            "%s bounds infeasible at epsilon %s, widened to %s",
            priors.kind,
            epsilon,
            eps,
        )
    return LpBounds(bounds.lower, bounds.upper, eps, epsilon)


def _check_inputs(aff: AffinityMatrix, bounds: LpBounds) -> tuple[int, int]:
    n, m = aff.shape
    if m < ROW_SUM:
        raise TooFewAttributesError(aff.kind, m, ROW_SUM)
    if len(bounds.lower) != m:
        msg = f"{len(bounds.lower)} bounds for {m} attributes"
        raise ValueError(msg)
    return n, m


def solve_assignment(aff: AffinityMatrix, bounds: LpBounds) -> AssignmentMatrix:
    """Maximize the total affinity of the assigned cells.

    Among optimal assignments, earlier instances get the earlier attributes:
    the one pushed off a contested attribute is the last competing instance.
    """
    n, m = _check_inputs(aff, bounds)
    lower = np.array(bounds.lower, dtype=np.int64)
    upper = np.array(bounds.upper, dtype=np.int64)
    if not bounds.is_feasible(n):
        msg = (
            f"{aff.kind} bounds infeasible: sum of lower bounds {lower.sum()}, "
            f"capped upper bounds {np.minimum(upper, n).sum()}, "
            f"required {ROW_SUM * n}"
        )
        raise InfeasibleError(msg)

    # the index term breaks ties and sums to less than one score unit
    scale = ROW_SUM * n * n * m + 1
    rows, cols = np.divmod(np.arange(n * m, dtype=np.int64), m)
    costs = (SCORE_MAX - aff.scores.reshape(-1)) * scale + cols * (n - rows)
    sink = n + m
    start_nodes = np.concatenate([rows, n + np.arange(m, dtype=np.int64)])
    end_nodes = np.concatenate([n + cols, np.full(m, sink, dtype=np.int64)])
    capacities = np.concatenate([np.ones(n * m, dtype=np.int64), upper - lower])
    unit_costs = np.concatenate([costs, np.zeros(m, dtype=np.int64)])
    supplies = np.concatenate(
        [np.full(n, ROW_SUM, dtype=np.int64), -lower, [-(ROW_SUM * n - lower.sum())]]
    )

    smcf = min_cost_flow.SimpleMinCostFlow()
    arcs = smcf.add_arcs_with_capacity_and_unit_cost(
        start_nodes, end_nodes, capacities, unit_costs
    )
    smcf.set_nodes_supplies(np.arange(n + m + 1), supplies)
    status = smcf.solve()
    if status != smcf.OPTIMAL:
        msg = f"no {aff.kind} assignment satisfies the bounds (solver status {status})"
        raise InfeasibleError(msg)

    assign = smcf.flows(arcs[: n * m]).reshape(n, m)
    objective = float((assign * aff.scores).sum())
    logger.info("assigned %s %s, objective %s", n, aff.kind.plural, objective)
    return AssignmentMatrix(
        aff.kind, aff.instance_ids, aff.attributes, assign, bounds, objective
    )


def brute_force_assignment(aff: AffinityMatrix, bounds: LpBounds) -> AssignmentMatrix:
    """Search every choice of attribute pairs for a best feasible assignment.

    Meant for checking `solve_assignment` on small instances.
    """
    n, m = _check_inputs(aff, bounds)
    pairs = list(combinations(range(m), ROW_SUM))
    if len(pairs) ** n > BRUTE_FORCE_LIMIT:
        msg = f"{len(pairs)}^{n} combinations exceed {BRUTE_FORCE_LIMIT}"
        raise TooLargeError(msg)

    scores = [[int(s) for s in row] for row in aff.scores]
    lower, upper = bounds.lower, bounds.upper
    # best possible contribution of the rows from i on
    row_best = [sum(sorted(row, reverse=True)[:ROW_SUM]) for row in scores]
    rest = [sum(row_best[i:]) for i in range(n + 1)]

    counts = [0] * m
    chosen: list[tuple[int, ...]] = []
    best_value = -1
    best_choice: None | list[tuple[int, ...]] = None

    def search(i: int, value: int) -> None:
        nonlocal best_value, best_choice
        if value + rest[i] <= best_value:
            return
        left = n - i
        if sum(max(0, lo - c) for lo, c in zip(lower, counts, strict=True)) > (
            ROW_SUM * left
        ):
            return
        if any(c + left < lo for lo, c in zip(lower, counts, strict=True)):
            return
        if i == n:
            best_value = value
            best_choice = list(chosen)
            return
        for pair in pairs:
            if any(counts[j] >= upper[j] for j in pair):
                continue
            for j in pair:
                counts[j] += 1
            chosen.append(pair)
            search(i + 1, value + sum(scores[i][j] for j in pair))
            chosen.pop()
            for j in pair:
                counts[j] -= 1

    search(0, 0)
    if best_choice is None:
        msg = f"no {aff.kind} assignment satisfies the bounds"
        raise InfeasibleError(msg)
    assign = np.zeros((n, m), dtype=np.int8)
    for i, pair in enumerate(best_choice):
        assign[i, list(pair)] = 1
    return AssignmentMatrix(
        aff.kind, aff.instance_ids, aff.attributes, assign, bounds, float(best_value)
    )
