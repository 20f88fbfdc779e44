"""Robust aggregation rules applied by the server each round"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from models.aggregator_state import GAS_BASE_KINDS, AggregatorState, ClientUpdate
from models.param_vector import ParamVector
from utils.errors import DimensionError, EmptyInputError, InfeasibleAggregationError, InvalidParameterError


@dataclass(frozen=True)
class AggregationResult:
    """Aggregate, state to carry into the next round, and ids picked by selection rules"""

    vector: ParamVector
    state: AggregatorState
    selected_ids: Optional[Tuple[int, ...]] = None


def _as_matrix(updates: Sequence[ClientUpdate]) -> Tuple[np.ndarray, np.ndarray, ParamVector]:
    """Rows ordered by client id; also returns a template vector for the output layout"""
    if len(updates) == 0:
        raise EmptyInputError("No client updates to aggregate")
    ordered = sorted(updates, key=lambda u: u.client_id)
    d = ordered[0].momentum.dim
    for u in ordered:
        if u.momentum.dim != d:
            raise DimensionError(f"Client {u.client_id} sent dimension {u.momentum.dim}, expected {d}")
    ids = np.array([u.client_id for u in ordered], dtype=np.int64)
    matrix = np.vstack([u.momentum.data for u in ordered])
    return ids, matrix, ordered[0].momentum


def _mean_rows(matrix: np.ndarray) -> np.ndarray:
    """Column means accumulated in row order; a constant column returns its value exactly"""
    total = np.zeros(matrix.shape[1], dtype=np.float64)
    for row in matrix:
        total += row
    lo, hi = matrix.min(axis=0), matrix.max(axis=0)
    return np.where(lo == hi, lo, total / matrix.shape[0])


# ---------------------------------------------------------------------------
# Matrix-level rules (rows = clients in id order)
# ---------------------------------------------------------------------------

def _krum_scores(matrix: np.ndarray, neighborhood: int) -> np.ndarray:
    k = matrix.shape[0]
    if not 1 <= neighborhood <= k - 1:
        raise InvalidParameterError(f"Krum neighborhood must lie in [1, {k - 1}], got {neighborhood}")
    scores = np.empty(k, dtype=np.float64)
    for i in range(k):
        diff = matrix - matrix[i]
        sq = np.sum(diff * diff, axis=1)
        others = np.sort(np.delete(sq, i))
        scores[i] = others[:neighborhood].sum()
    return scores


def _multikrum(matrix: np.ndarray, ids: np.ndarray, n_select: int, neighborhood: int) -> Tuple[np.ndarray, np.ndarray]:
    k = matrix.shape[0]
    if k < 3:
        raise InfeasibleAggregationError(f"Krum needs at least 3 updates, got {k}")
    if not 1 <= n_select <= k:
        raise InvalidParameterError(f"Multi-Krum selection must lie in [1, {k}], got {n_select}")
    scores = _krum_scores(matrix, neighborhood)
    order = np.lexsort((ids, scores))
    chosen = np.sort(order[:n_select])
    return _mean_rows(matrix[chosen]), ids[chosen]


def _bulyan(matrix: np.ndarray, ids: np.ndarray, k_m: int) -> Tuple[np.ndarray, np.ndarray]:
    k = matrix.shape[0]
    if k < 4 * k_m + 3:
        raise InfeasibleAggregationError(f"Bulyan needs k >= 4*k_m + 3, got k={k}, k_m={k_m}")
    theta = k - 2 * k_m
    pool = list(range(k))
    selected = []
    while len(selected) < theta:
        n = len(pool)
        if n == 1:
            winner = 0
        else:
            neighborhood = min(max(1, n - k_m - 2), n - 1)
            scores = _krum_scores(matrix[pool], neighborhood)
            winner = int(np.lexsort((ids[pool], scores))[0])
        selected.append(pool.pop(winner))

    selected = np.sort(np.array(selected, dtype=np.int64))
    chosen = matrix[selected]
    keep = theta - 2 * k_m
    median = np.median(chosen, axis=0)
    id_grid = np.broadcast_to(ids[selected][:, None], chosen.shape)
    # closest to the median first; ties by value, then client id
    order = np.lexsort((id_grid, chosen, np.abs(chosen - median)), axis=0)
    closest = np.take_along_axis(chosen, order[:keep], axis=0)
    return _mean_rows(closest), ids[selected]


def _trimmed_mean(matrix: np.ndarray, k_m: int) -> np.ndarray:
    k = matrix.shape[0]
    if k <= 2 * k_m:
        raise InfeasibleAggregationError(f"Trimmed mean needs k > 2*k_m, got k={k}, k_m={k_m}")
    ordered = np.sort(matrix, axis=0)
    return _mean_rows(ordered[k_m:k - k_m])


def _geometric_median(matrix: np.ndarray, eps: float, max_iters: int, tol: float) -> np.ndarray:
    def objective(x):
        return float(np.linalg.norm(matrix - x, axis=1).sum())

    x = _mean_rows(matrix)
    best, best_obj = x, objective(x)
    for iteration in range(max_iters):
        dist = np.maximum(eps, np.linalg.norm(matrix - x, axis=1))
        weights = 1.0 / dist
        x_new = weights @ matrix / weights.sum()
        obj = objective(x_new)
        if obj < best_obj:
            best, best_obj = x_new, obj
        step = float(np.linalg.norm(x_new - x))
        x = x_new
        if step < tol:
            break
    else:
        logger.debug(f"[AGG] RFA stopped after {max_iters} iterations without reaching tol {tol}")
    return best


def _signsgd(matrix: np.ndarray) -> np.ndarray:
    return np.sign(np.sign(matrix).sum(axis=0))


def _stateless(kind: str, matrix: np.ndarray, ids: np.ndarray, state: AggregatorState) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    k = matrix.shape[0]
    if kind == "mean":
        return _mean_rows(matrix), None
    if kind in ("krum", "multikrum"):
        n_select = 1 if kind == "krum" else state.select_count(k)
        return _multikrum(matrix, ids, n_select, state.neighborhood(k))
    if kind == "bulyan":
        return _bulyan(matrix, ids, state.byzantine)
    if kind == "cm":
        return np.median(matrix, axis=0), None
    if kind == "tm":
        return _trimmed_mean(matrix, state.byzantine), None
    if kind == "rfa":
        return _geometric_median(matrix, state.rfa_eps, state.rfa_max_iters, state.rfa_tol), None
    if kind == "signsgd":
        return _signsgd(matrix), None
    raise InvalidParameterError(f"Aggregator '{kind}' is not stateless")


# ---------------------------------------------------------------------------
# Public rules over client updates
# ---------------------------------------------------------------------------

def agg_mean(updates: Sequence[ClientUpdate]) -> ParamVector:
    _, matrix, template = _as_matrix(updates)
    return template.with_data(_mean_rows(matrix))


def krum_scores(updates: Sequence[ClientUpdate], k_m: int, neighborhood: Optional[int] = None) -> List[float]:
    """
    Krum score of every update, in client-id order

    Args:
        updates: Client updates (k >= 3)
        k_m: Assumed Byzantine count
        neighborhood: Nearest neighbours summed per score (default k - k_m - 2)

    Returns:
        Sum of squared distances to the closest `neighborhood` other updates
    """
    ids, matrix, _ = _as_matrix(updates)
    k = matrix.shape[0]
    if k < 3:
        raise InfeasibleAggregationError(f"Krum needs at least 3 updates, got {k}")
    if neighborhood is None:
        neighborhood = AggregatorState(kind="krum", byzantine=k_m).neighborhood(k)
    return _krum_scores(matrix, neighborhood).tolist()


def agg_multikrum(
    updates: Sequence[ClientUpdate], k_m: int, n_select: Optional[int] = None, neighborhood: Optional[int] = None
) -> Tuple[ParamVector, Tuple[int, ...]]:
    """Average of the n_select lowest-scored updates (ties to the lower client id)"""
    ids, matrix, template = _as_matrix(updates)
    k = matrix.shape[0]
    state = AggregatorState(kind="multikrum", byzantine=k_m, multikrum_select=n_select)
    if neighborhood is None:
        neighborhood = state.neighborhood(k)
    vector, chosen = _multikrum(matrix, ids, state.select_count(k), neighborhood)
    return template.with_data(vector), tuple(int(i) for i in chosen)


def agg_bulyan(updates: Sequence[ClientUpdate], k_m: int) -> Tuple[ParamVector, Tuple[int, ...]]:
    ids, matrix, template = _as_matrix(updates)
    vector, chosen = _bulyan(matrix, ids, k_m)
    return template.with_data(vector), tuple(int(i) for i in chosen)


def clip_to_ball(m: ParamVector, ref: ParamVector, tau: float) -> ParamVector:
    """Project m onto the ball of radius tau around ref"""
    if tau <= 0:
        raise InvalidParameterError(f"Clipping radius tau must be > 0, got {tau}")
    if m.dim != ref.dim:
        raise DimensionError(f"Dimension mismatch: {m.dim} vs {ref.dim}")
    diff = m.data - ref.data
    norm = float(np.linalg.norm(diff))
    if norm == 0.0:
        return m
    return m.with_data(ref.data + min(1.0, tau / norm) * diff)


def agg_cc(updates: Sequence[ClientUpdate], state: AggregatorState) -> Tuple[ParamVector, AggregatorState]:
    """
    Centered clipping: l rounds of clip-to-ball then average around the reference.

    The returned aggregate is also the reference for the next round.
    It lies within tau of the incoming reference only when clip_iters is 1.
    """
    _, matrix, template = _as_matrix(updates)
    if state.tau <= 0:
        raise InvalidParameterError(f"Clipping radius tau must be > 0, got {state.tau}")
    ref = np.zeros(matrix.shape[1]) if state.reference is None else state.reference.data.copy()
    if ref.size != matrix.shape[1]:
        raise DimensionError(f"CC reference dimension {ref.size} does not match updates {matrix.shape[1]}")
    for _ in range(state.clip_iters):
        diff = matrix - ref
        norms = np.linalg.norm(diff, axis=1)
        scale = np.minimum(1.0, state.tau / np.where(norms > 0, norms, 1.0))
        ref = _mean_rows(ref + diff * scale[:, None])
    result = template.with_data(ref)
    return result, state.with_reference(result)


def agg_cm(updates: Sequence[ClientUpdate]) -> ParamVector:
    _, matrix, template = _as_matrix(updates)
    return template.with_data(np.median(matrix, axis=0))


def agg_tm(updates: Sequence[ClientUpdate], k_m: int) -> ParamVector:
    _, matrix, template = _as_matrix(updates)
    return template.with_data(_trimmed_mean(matrix, k_m))


def agg_rfa(updates: Sequence[ClientUpdate], eps: float = 1e-8, max_iters: int = 100, tol: float = 1e-6) -> ParamVector:
    """Smoothed Weiszfeld approximation of the geometric median, started at the mean"""
    if eps <= 0:
        raise InvalidParameterError(f"RFA eps must be > 0, got {eps}")
    _, matrix, template = _as_matrix(updates)
    return template.with_data(_geometric_median(matrix, eps, max_iters, tol))


def agg_signsgd(updates: Sequence[ClientUpdate]) -> ParamVector:
    _, matrix, template = _as_matrix(updates)
    return template.with_data(_signsgd(matrix))


def gas_chunks(d: int, p: int) -> List[np.ndarray]:
    """p contiguous index chunks; the first d mod p are one element longer"""
    if not 1 <= p <= d:
        raise InvalidParameterError(f"GAS chunk count must lie in [1, {d}], got {p}")
    return np.array_split(np.arange(d), p)


def agg_gas(updates: Sequence[ClientUpdate], p: int, base: AggregatorState) -> ParamVector:
    """Apply the base aggregator independently on each chunk and concatenate"""
    ids, matrix, template = _as_matrix(updates)
    if base.kind not in GAS_BASE_KINDS:
        raise InvalidParameterError(f"Aggregator '{base.kind}' cannot be used as a GAS base")
    out = np.empty(matrix.shape[1], dtype=np.float64)
    for chunk in gas_chunks(matrix.shape[1], p):
        out[chunk], _ = _stateless(base.kind, matrix[:, chunk], ids, base)
    return template.with_data(out)


def aggregate(updates: Sequence[ClientUpdate], state: AggregatorState) -> AggregationResult:
    """
    Dispatch to the aggregator named by state.kind

    Args:
        updates: All k client updates of the round
        state: Aggregator state (CC reference threaded through it)

    Returns:
        AggregationResult with the next-round state
    """
    if state.kind == "cc":
        vector, new_state = agg_cc(updates, state)
        return AggregationResult(vector, new_state)
    if state.kind == "gas":
        return AggregationResult(agg_gas(updates, state.p, state.base_state()), state)

    ids, matrix, template = _as_matrix(updates)
    vector, chosen = _stateless(state.kind, matrix, ids, state)
    selected = None if chosen is None else tuple(int(i) for i in chosen)
    return AggregationResult(template.with_data(vector), state, selected)
