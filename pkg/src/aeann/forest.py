"""Data-dependent ANN index: recursive dense-ball / embed-and-hash trees and their forest."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, UndefinedRatioError
from .lsh import LshFunction, calibrate_width, collision_probability, hash_many, sample_lsh
from .mazur import AvgEmbedding, center_scan, embed_many, verify_average_embedding
from .metric import (BoundedInstanceParams, Dataset, as_point, distance_blocks, lp_distance,
                     lp_distances_to, sum_sq_distances)

log = logging.getLogger(__name__)

BETA = 18.0
DENSE_FRACTION = 1.0 / 8.0
HASH_RETRIES = 3
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class IndexParams:
    eps: float
    D: float
    lambda_: float
    w: float
    c_approx: float
    beta: float
    r: float
    dense_frac_p: float
    leaf_size: int
    max_depth: int
    n_trees_T: int
    lsh_width_W: float
    p1: float
    p2: float
    seed: int

    def __post_init__(self):
        if not (1 - self.dense_frac_p) * self.lambda_ ** 2 >= 8 * self.w ** 2:
            raise InvalidParameterError("(1-p) lambda^2 >= 8 w^2 violated")
        if not self.beta * self.c_approx >= self.lambda_:
            raise InvalidParameterError("beta * c >= lambda violated")

    @property
    def ball_radius(self) -> float:
        return self.lambda_ * self.D

    @property
    def ball_query_radius(self) -> float:
        return self.lambda_ * self.D + self.r

    @property
    def answer_radius(self) -> float:
        return self.c_approx * self.r

    @property
    def lemma_bound(self) -> float:
        p = self.dense_frac_p
        return 1.0 - (1 - p) * self.lambda_ ** 2 / (4 * self.beta ** 2 * self.c_approx ** 2)


def derive_params(p_exp: float, eps: float, n: int, seed: int = 0, leaf_size: int = 8,
                  n_trees: int | None = None) -> IndexParams:
    """All index constants for exponent ``p_exp``, accuracy ``eps`` and ``n`` points."""
    if not p_exp >= 2:
        raise InvalidParameterError(f"p_exp must be >= 2, got {p_exp}")
    if not 0 < eps <= 1:
        raise InvalidParameterError(f"eps must lie in (0, 1], got {eps}")
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    D = float(p_exp) + 1.0
    w = 4.0 * D * D / eps
    lam = 4.0 * w
    c = 3.0 * lam * D

    # p1 and p2 are coupled through the width; iterate to a fixed point
    p1 = 0.99
    W = calibrate_width(D, p1)
    for _ in range(20):
        p2 = collision_probability(W, w * D)
        new_p1 = 1.0 - eps * (1.0 - p2) / (D * D)
        W = calibrate_width(D, new_p1)
        done = abs(new_p1 - p1) <= 1e-9
        p1 = new_p1
        if done:
            break
    else:
        log.warning("p1/p2 fixed point did not converge; using last iterate p1=%.12g", p1)
    p2 = collision_probability(W, w * D)

    T = int(math.ceil(3.0 * n ** eps)) if n_trees is None else int(n_trees)
    return IndexParams(eps=float(eps), D=D, lambda_=lam, w=w, c_approx=c, beta=BETA, r=1.0,
                       dense_frac_p=DENSE_FRACTION, leaf_size=int(leaf_size),
                       max_depth=int(math.ceil(100.0 * math.log(n))), n_trees_T=T,
                       lsh_width_W=W, p1=p1, p2=p2, seed=int(seed) & _MASK64)


# --- tree nodes -------------------------------------------------------------

@dataclass
class Leaf:
    ids: np.ndarray


@dataclass
class BallNode:
    center_x0: int
    representative_p0: int
    covered: np.ndarray
    child: "TreeNode" = None


@dataclass
class PartitionNode:
    embedding: AvgEmbedding
    hash: LshFunction
    children: dict = field(default_factory=dict)
    c_emp: float = float("nan")


TreeNode = Union[Leaf, BallNode, PartitionNode]


@dataclass(frozen=True)
class QueryResult:
    point_id: int
    distance: float


# --- seeding ----------------------------------------------------------------

def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def tree_seed(seed: int, tree_index: int) -> int:
    """Per-tree seed: splitmix64 of ``seed XOR tree_index``."""
    return splitmix64((int(seed) ^ int(tree_index)) & _MASK64)


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(tree_seed(seed, tree_index)))


# --- dense balls ------------------------------------------------------------

class BallGraph:
    """CSR lists of every point's closed ball of fixed radius."""

    def __init__(self, X: np.ndarray, p_exp: float, radius: float):
        self.radius = radius
        indptr = [0]
        cols = []
        self.min_distance, self.max_distance = math.inf, 0.0
        partials = []
        for start, block in distance_blocks(X, p_exp):
            partials.extend(np.sum(block * block, axis=1).tolist())
            self.max_distance = max(self.max_distance, float(block.max()))
            rows = np.arange(block.shape[0])
            diag = block[rows, start + rows].copy()
            block[rows, start + rows] = math.inf
            self.min_distance = min(self.min_distance, float(block.min()))
            block[rows, start + rows] = diag
            for row in block:
                nb = np.flatnonzero(row <= radius)
                cols.append(nb)
                indptr.append(indptr[-1] + nb.size)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.concatenate(cols).astype(np.int64) if cols else np.zeros(0, np.int64)
        self.n = X.shape[0]
        self.sum_sq_all = math.fsum(partials)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def ball_counts(self, ids: np.ndarray) -> np.ndarray:
        """|B(x, radius) ∩ ids| for every x in ids."""
        mask = np.zeros(self.n, dtype=np.int64)
        mask[ids] = 1
        hits = mask[self.indices]
        csum = np.concatenate(([0], np.cumsum(hits)))
        return csum[self.indptr[ids + 1]] - csum[self.indptr[ids]]


def find_dense_center(X: np.ndarray, ids, radius: float, p_exp: float,
                      fraction: float = DENSE_FRACTION) -> int | None:
    """Smallest id whose closed ball holds more than ``fraction`` of ``ids``; brute force."""
    ids = np.sort(np.asarray(ids, dtype=np.int64))
    if ids.size == 0:
        return None
    sub = X[ids]
    for start, block in distance_blocks(sub, p_exp):
        counts = np.sum(block <= radius, axis=1)
        hit = np.flatnonzero(counts > fraction * ids.size)
        if hit.size:
            return int(ids[start + hit[0]])
    return None


def _dense_center(graph: BallGraph, ids: np.ndarray, fraction: float) -> int | None:
    counts = graph.ball_counts(ids)
    hit = np.flatnonzero(counts > fraction * ids.size)
    return int(ids[hit[0]]) if hit.size else None


# --- construction -----------------------------------------------------------

class _BuildContext:
    def __init__(self, dataset: Dataset, params: IndexParams, graph: BallGraph | None = None):
        self.X = dataset.points
        self.p_exp = dataset.p_exp
        self.params = params
        self.graph = graph if graph is not None else BallGraph(self.X, self.p_exp, params.ball_radius)
        self._sum_sq: dict[bytes, float] = {
            np.arange(self.X.shape[0], dtype=np.int64).tobytes(): self.graph.sum_sq_all}

    def sum_sq(self, ids: np.ndarray) -> float:
        key = ids.tobytes()
        val = self._sum_sq.get(key)
        if val is None:
            val = sum_sq_distances(self.X[ids], self.p_exp)
            self._sum_sq[key] = val
        return val


def _make_partition(ctx: _BuildContext, ids: np.ndarray, rng: np.random.Generator):
    """Embedding + hash for ``ids``, or None when the node must become a leaf."""
    P = Dataset(ctx.X[ids], ctx.p_exp)
    try:
        scan = center_scan(P, rng=rng, r=ctx.params.r, denominator=ctx.sum_sq(ids))
    except UndefinedRatioError:
        log.warning("degenerate node of %d identical points; storing as leaf", ids.size)
        return None
    if scan.best_C < 1.0:
        log.warning("node of %d points: best noncontraction ratio %.4g < 1 (center %s); proceeding",
                    ids.size, scan.best_C, scan.best_label)
    emb = AvgEmbedding(ctx.p_exp, scan.best_z)
    F = embed_many(P.points, emb)
    width = ctx.params.lsh_width_W
    for _ in range(1 + HASH_RETRIES):
        h = sample_lsh(ctx.X.shape[1], width, rng)
        keys = hash_many(h, F)
        uniq, inverse = np.unique(keys, return_inverse=True)
        if uniq.size > 1:
            node = PartitionNode(emb, h, {}, scan.best_C)
            parts = [(int(k), ids[inverse == j]) for j, k in enumerate(uniq)]
            return node, parts
    log.debug("node of %d points hashed to a single bucket %d times; leaf", ids.size, 1 + HASH_RETRIES)
    return None


def _build(ctx: _BuildContext, ids: np.ndarray, rng: np.random.Generator) -> TreeNode:
    params = ctx.params
    holder: dict = {}
    # (ids, depth, parent, slot); parent None writes into holder
    stack = [(np.sort(np.asarray(ids, dtype=np.int64)), 0, holder, "root")]
    while stack:
        ids, depth, parent, slot = stack.pop()
        node: TreeNode
        if ids.size <= params.leaf_size or depth >= params.max_depth:
            node = Leaf(ids)
        else:
            x0 = _dense_center(ctx.graph, ids, params.dense_frac_p)
            if x0 is not None:
                nb = ctx.graph.neighbors(x0)
                covered = ids[np.isin(ids, nb)]
                d = lp_distances_to(ctx.X[covered], ctx.X[x0], ctx.p_exp)
                p0 = int(covered[np.lexsort((covered, d))[0]])
                node = BallNode(x0, p0, covered)
                stack.append((ids[~np.isin(ids, nb)], depth + 1, node, "child"))
            else:
                made = _make_partition(ctx, ids, rng)
                if made is None:
                    node = Leaf(ids)
                else:
                    node, parts = made
                    # reversed so buckets are expanded in ascending key order
                    for key, part in reversed(parts):
                        stack.append((part, depth + 1, node.children, key))
        if isinstance(parent, dict):
            parent[slot] = node
        else:
            setattr(parent, slot, node)
    return holder["root"]


def build_tree(dataset: Dataset, params: IndexParams, rng: np.random.Generator,
               ids=None, graph: BallGraph | None = None) -> TreeNode:
    if len(dataset) == 0:
        raise InvalidInputError("empty dataset")
    ids = np.arange(len(dataset)) if ids is None else np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise InvalidInputError("empty point set")
    return _build(_BuildContext(dataset, params, graph), ids, rng)


@dataclass
class Forest:
    trees: list
    params: IndexParams
    dataset: Dataset
    build_ms: float = float("nan")

    def query(self, q) -> QueryResult | None:
        return query_forest(self, q)


def build_forest(dataset: Dataset, params: IndexParams) -> Forest:
    if len(dataset) == 0:
        raise InvalidInputError("empty dataset")
    t0 = time.perf_counter()
    ctx = _BuildContext(dataset, params)
    if len(dataset) >= 2:
        bp = BoundedInstanceParams(params.r, params.c_approx, params.beta)
        if not (ctx.graph.min_distance >= bp.r and ctx.graph.max_distance <= bp.max_distance):
            log.warning("dataset is not beta-bounded at r=%g, c=%g, beta=%g; guarantees are recall-only",
                        params.r, params.c_approx, params.beta)
    ids = np.arange(len(dataset), dtype=np.int64)
    trees = [_build(ctx, ids, tree_rng(params.seed, t)) for t in range(params.n_trees_T)]
    return Forest(trees, params, dataset, (time.perf_counter() - t0) * 1e3)


# --- queries ----------------------------------------------------------------

def query_tree(tree: TreeNode, q, params: IndexParams, dataset: Dataset, stats: dict | None = None) -> QueryResult | None:
    q = as_point(q, "query")
    if q.size != dataset.dim:
        raise InvalidInputError(f"query dimension {q.size} does not match dataset dimension {dataset.dim}")
    X, p = dataset.points, dataset.p_exp
    node = tree
    visited = 0
    result = None
    while node is not None:
        visited += 1
        if isinstance(node, BallNode):
            if lp_distance(q, X[node.center_x0], p) <= params.ball_query_radius:
                p0 = node.representative_p0
                result = QueryResult(p0, lp_distance(q, X[p0], p))
                break
            node = node.child
        elif isinstance(node, PartitionNode):
            key = int(hash_many(node.hash, embed_many(q, node.embedding)))
            node = node.children.get(key)
        else:
            if node.ids.size:
                d = lp_distances_to(X[node.ids], q, p)
                j = int(np.lexsort((node.ids, d))[0])
                pid = int(node.ids[j])
                dist = lp_distance(q, X[pid], p)
                if dist <= params.answer_radius:
                    result = QueryResult(pid, dist)
            break
    if stats is not None:
        stats["visited"] = stats.get("visited", 0) + visited
    return result


def query_forest(forest: Forest, q, stats: dict | None = None) -> QueryResult | None:
    """First valid answer over the trees in order."""
    for tree in forest.trees:
        res = query_tree(tree, q, forest.params, forest.dataset, stats)
        if res is not None:
            return res
    return None


# --- introspection ----------------------------------------------------------

def iter_nodes(tree: TreeNode):
    stack = [(tree, 0)]
    while stack:
        node, depth = stack.pop()
        if node is None:
            continue
        yield node, depth
        if isinstance(node, BallNode):
            stack.append((node.child, depth + 1))
        elif isinstance(node, PartitionNode):
            stack.extend((c, depth + 1) for c in node.children.values())


def tree_depth(tree: TreeNode) -> int:
    return max(d for _, d in iter_nodes(tree))


def audit_tree(tree: TreeNode, n: int) -> np.ndarray:
    """Per-point multiplicity over leaves and ball-covered sets (all ones when sound)."""
    counts = np.zeros(n, dtype=np.int64)
    for node, _ in iter_nodes(tree):
        if isinstance(node, Leaf):
            np.add.at(counts, node.ids, 1)
        elif isinstance(node, BallNode):
            np.add.at(counts, node.covered, 1)
    return counts


def partition_c_values(forest: Forest) -> np.ndarray:
    return np.array([node.c_emp for t in forest.trees for node, _ in iter_nodes(t)
                     if isinstance(node, PartitionNode)])


# --- lemma check ------------------------------------------------------------

def lemma_alpha_check(P: Dataset, q, emb: AvgEmbedding, params: IndexParams,
                      n_pairs: int = 200, rng: np.random.Generator | None = None) -> dict:
    """Fraction of ``f(P)`` within ``wD`` of ``f(q)`` against the dense-ball lemma bound."""
    q = as_point(q, "query")
    X = P.points
    F = embed_many(X, emb)
    fq = embed_many(q, emb)
    alpha = float(np.mean(np.sqrt(np.sum((F - fq) ** 2, axis=1)) <= params.w * params.D))

    dense = find_dense_center(X, np.arange(len(P)), params.ball_radius, P.p_exp,
                              fraction=params.dense_frac_p) is not None
    diam = max(float(block.max()) for _, block in distance_blocks(X, P.p_exp))
    met = (not dense) and diam <= params.beta * params.c_approx
    if met:
        rep = verify_average_embedding(P, emb, n_pairs=n_pairs, rng=rng)
        met = rep.passed_lipschitz and rep.passed_noncontraction
    bound = params.lemma_bound
    return {"alpha": alpha, "bound": bound, "hypotheses_met": bool(met),
            "holds": bool((not met) or alpha <= bound + 1e-12)}
