"""Ground truth, planted bounded instances and forest evaluation."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from .errors import GenerationError, InvalidInputError, InvalidParameterError
from .forest import Forest, QueryResult, derive_params, partition_c_values, query_forest
from .metric import (BoundedInstanceParams, Dataset, as_point, distance_blocks, is_beta_bounded,
                     lp_distance, lp_distances_to, lp_norms)

log = logging.getLogger(__name__)


def brute_force_nn(P: Dataset, q) -> QueryResult:
    """Exact nearest neighbour; ties go to the smallest id."""
    if len(P) < 1:
        raise InvalidInputError("empty dataset")
    q = as_point(q, "query")
    if q.size != P.dim:
        raise InvalidInputError(f"query dimension {q.size} does not match dataset dimension {P.dim}")
    d = lp_distances_to(P.points, q, P.p_exp)
    i = int(np.argmin(d))  # argmin returns the first minimum
    return QueryResult(i, lp_distance(q, P.points[i], P.p_exp))


@dataclass
class PlantedInstance:
    dataset: Dataset
    queries: np.ndarray
    truth: list  # (query index, planted neighbour id, distance)
    c_approx: float
    beta: float


def _lp_unit_directions(rng, m, d, p_exp):
    g = rng.standard_normal((m, d))
    return g / lp_norms(g, p_exp)[:, None]


def plant_instance(n: int, d: int, p_exp: float, eps: float, seed: int,
                   n_queries: int = 100, max_rounds: int = 50) -> PlantedInstance:
    """Points on an l_p shell of radius beta*c/4 (r = 1) plus queries within distance 1.

    Every pairwise distance is at most twice the shell radius, so the upper
    bound beta*c holds by construction; points closer than 1 to an earlier
    point are resampled.
    """
    if n < 2 or d < 2:
        raise InvalidParameterError("plant_instance needs n >= 2 and d >= 2")
    params = derive_params(p_exp, eps, n)
    c, beta, r = params.c_approx, params.beta, 1.0
    radius = beta * c * r / 4.0
    rng = np.random.default_rng(seed)

    X = radius * _lp_unit_directions(rng, n, d, p_exp)
    for _ in range(max_rounds):
        bad = []
        for start, block in distance_blocks(X, p_exp):
            rows = start + np.arange(block.shape[0])
            # only the later point of a too-close pair is resampled
            close = (block < r) & (np.arange(n)[None, :] < rows[:, None])
            bad.append(rows[close.any(axis=1)])
        idx = np.concatenate(bad)
        if idx.size == 0:
            break
        X[idx] = radius * _lp_unit_directions(rng, idx.size, d, p_exp)
    else:
        raise GenerationError(f"could not separate {n} points on a shell in dimension {d}; "
                              "lower n or raise d")
    P = Dataset(X, p_exp)
    if not is_beta_bounded(P, BoundedInstanceParams(r, c, beta)):
        raise GenerationError("generated dataset is not beta-bounded")

    owners = rng.integers(0, n, size=n_queries)
    steps = r * rng.uniform(0.0, 1.0, size=n_queries)
    Q = X[owners] + steps[:, None] * _lp_unit_directions(rng, n_queries, d, p_exp)
    truth = []
    for i in range(n_queries):
        dist = lp_distance(Q[i], X[owners[i]], p_exp)
        if dist > r:
            raise GenerationError("planted neighbour drifted beyond r")
        truth.append((i, int(owners[i]), dist))
    return PlantedInstance(P, Q, truth, c, beta)


@dataclass
class EvalReport:
    n_queries: int
    success_rate: float
    all_within_c: bool
    ratio_mean: float
    ratio_max: float
    n_zero_nn: int
    build_ms: float
    mean_query_us: float
    c_emp_min: float
    c_emp_median: float
    c_emp_max: float
    n_partition_nodes: int

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "\n".join(f"{k:>18}: {v}" for k, v in self.as_dict().items())


def evaluate(forest: Forest, inst: PlantedInstance | np.ndarray, build_ms: float | None = None,
             answers: list | None = None) -> EvalReport:
    """Run every query through the forest and the brute-force oracle.

    The timing field ``mean_query_us`` holds the median per-query latency.
    ``answers``, when given, receives ``(query, forest result, exact result)`` tuples.
    """
    Q = inst.queries if isinstance(inst, PlantedInstance) else np.atleast_2d(inst)
    P = forest.dataset
    limit = forest.params.answer_radius
    times, ratios = [], []
    hits, zero = 0, 0
    within = True
    for i, q in enumerate(Q):
        t0 = time.perf_counter()
        res = query_forest(forest, q)
        times.append(time.perf_counter() - t0)
        exact = brute_force_nn(P, q)
        if answers is not None:
            answers.append((i, res, exact))
        if res is None:
            continue
        hits += 1
        if lp_distance(q, P.points[res.point_id], P.p_exp) > limit or res.distance > limit:
            within = False
        if exact.distance == 0:
            zero += 1
        else:
            ratios.append(res.distance / exact.distance)
    cvals = partition_c_values(forest)
    nq = len(Q)
    return EvalReport(
        n_queries=nq,
        success_rate=hits / nq if nq else 0.0,
        all_within_c=within,
        ratio_mean=float(np.mean(ratios)) if ratios else float("nan"),
        ratio_max=float(np.max(ratios)) if ratios else float("nan"),
        n_zero_nn=zero,
        build_ms=float(forest.build_ms if build_ms is None else build_ms),
        mean_query_us=float(np.median(times) * 1e6) if times else float("nan"),
        c_emp_min=float(cvals.min()) if cvals.size else float("nan"),
        c_emp_median=float(np.median(cvals)) if cvals.size else float("nan"),
        c_emp_max=float(cvals.max()) if cvals.size else float("nan"),
        n_partition_nodes=int(cvals.size),
    )
