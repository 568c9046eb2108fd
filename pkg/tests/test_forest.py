import logging
import math

import numpy as np
import pytest

from aeann import forest as forest_mod
from aeann.errors import InvalidInputError
from aeann.forest import (BallNode, Leaf, PartitionNode, audit_tree, build_forest, build_tree,
                          derive_params, find_dense_center, iter_nodes, lemma_alpha_check, query_forest,
                          query_tree, splitmix64, tree_depth, tree_rng)
from aeann.lsh import collision_probability
from aeann.mazur import AvgEmbedding, CenterScanResult, noncontraction_ratio
from aeann.metric import Dataset, lp_distance, pairwise_distance_stats

from test_mazur import adversarial_points


def test_derive_params_example():
    prm = derive_params(2.0, 0.5, 100)
    assert (prm.D, prm.w, prm.lambda_, prm.c_approx) == (3.0, 72.0, 288.0, 2592.0)
    assert prm.beta == 18 and prm.r == 1 and prm.dense_frac_p == 0.125 and prm.leaf_size == 8


def test_derive_params_scaling_in_eps():
    a, b = derive_params(4.0, 0.5, 100), derive_params(4.0, 0.25, 100)
    assert b.w == 2 * a.w and b.lambda_ == 2 * a.lambda_ and b.c_approx == 2 * a.c_approx


def test_derive_params_invariants():
    for p in (2.0, 3.0, 4.0, 8.0):
        for eps in (0.1, 0.5, 1.0):
            prm = derive_params(p, eps, 1000)
            assert (1 - prm.dense_frac_p) * prm.lambda_ ** 2 == pytest.approx(14 * prm.w ** 2)
            assert prm.beta * prm.c_approx >= prm.lambda_
            assert prm.c_approx == 3 * prm.lambda_ * prm.D
            # fixed point: p1 = 1 - eps (1 - p2) / D^2 with p1, p2 read off the calibrated width
            assert collision_probability(prm.lsh_width_W, prm.D) == pytest.approx(prm.p1, abs=1e-9)
            assert collision_probability(prm.lsh_width_W, prm.w * prm.D) == pytest.approx(prm.p2, abs=1e-12)
            assert prm.p1 == pytest.approx(1 - eps * (1 - prm.p2) / prm.D ** 2, abs=1e-9)
            assert 2 * prm.lambda_ * prm.D + prm.r <= prm.c_approx * prm.r


def test_derive_params_tree_count_and_depth():
    prm = derive_params(4.0, 0.5, 4096)
    assert prm.n_trees_T == 192
    assert prm.max_depth == math.ceil(100 * math.log(4096))


def test_splitmix_reference_values():
    # reference outputs of splitmix64 seeded with 0 (successive states 0, golden, 2*golden)
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def _brute_dense(X, ids, radius, p):
    for i in sorted(ids):
        cnt = sum(lp_distance(X[i], X[j], p) <= radius for j in ids)
        if cnt > len(ids) / 8:
            return i
    return None


def test_find_dense_center_examples(rng):
    X = np.ones((9, 3))
    assert find_dense_center(X, range(9), 1.0, 4) == 0
    Y = np.arange(12, dtype=float)[:, None] * np.array([[10.0, 0.0]])
    assert find_dense_center(Y, range(12), 4.0, 4) is None
    n = 40
    far = rng.standard_normal((n, 4)) * 1000
    cluster_ids = rng.choice(n, size=math.ceil(n / 4), replace=False)
    far[cluster_ids] = 5000 + rng.standard_normal((cluster_ids.size, 4))
    got = find_dense_center(far, range(n), 10.0, 4)
    assert got == int(cluster_ids.min()) == _brute_dense(far, list(range(n)), 10.0, 4)


def test_ball_graph_matches_brute(rng):
    X = rng.standard_normal((60, 3)) * 3
    g = forest_mod.BallGraph(X, 4.0, 2.0)
    ids = np.sort(rng.choice(60, size=30, replace=False))
    for frac in (0.05, 0.125, 0.3):
        fast = forest_mod._dense_center(g, ids, frac)
        brute = next((int(i) for i in ids
                      if sum(lp_distance(X[i], X[j], 4) <= 2.0 for j in ids) > frac * ids.size), None)
        assert fast == brute


def test_small_set_is_leaf():
    P = Dataset(np.random.default_rng(0).standard_normal((8, 3)), 4)
    t = build_tree(P, derive_params(4.0, 0.5, 8), np.random.default_rng(0))
    assert isinstance(t, Leaf) and list(t.ids) == list(range(8))


def _clustered(rng, n_cluster=20, n_far=40, d=4):
    cluster = 1e5 + rng.standard_normal((n_cluster, d)) * 3
    far = rng.standard_normal((n_far, d)) * 1e6
    X = np.vstack([far[:5], cluster, far[5:]])
    return Dataset(X, 4.0), np.arange(5, 5 + n_cluster)


def test_dominant_cluster_gives_ball_root(rng):
    P, cl = _clustered(rng)
    prm = derive_params(4.0, 0.5, len(P))
    t = build_tree(P, prm, np.random.default_rng(1))
    assert isinstance(t, BallNode)
    assert t.center_x0 == _brute_dense(P.points, list(range(len(P))), prm.ball_radius, 4) == cl[0]
    assert set(t.covered) == set(cl)
    assert lp_distance(P.points[t.center_x0], P.points[t.representative_p0], 4) <= prm.ball_radius
    assert (audit_tree(t, len(P)) == 1).all()


def test_ball_node_query_guarantee(rng):
    P, cl = _clustered(rng)
    prm = derive_params(4.0, 0.5, len(P))
    t = build_tree(P, prm, np.random.default_rng(1))
    q = P.points[cl[7]] + 0.5 / 4 ** 0.25 * np.ones(4) / 4 ** 0.0
    res = query_tree(t, q, prm, P)
    assert res is not None and res.point_id == t.representative_p0
    assert res.distance <= prm.c_approx * prm.r


def test_structural_audit_and_depth(small_forest):
    n = len(small_forest.dataset)
    for t in small_forest.trees:
        counts = audit_tree(t, n)
        assert (counts == 1).all()
        assert tree_depth(t) <= small_forest.params.max_depth
        for node, _ in iter_nodes(t):
            if isinstance(node, PartitionNode):
                assert len(node.children) >= 2


def test_partition_children_are_hash_preimages(small_forest):
    X = small_forest.dataset.points
    for t in small_forest.trees[:3]:
        for node, _ in iter_nodes(t):
            if not isinstance(node, PartitionNode):
                continue
            for key, child in node.children.items():
                ids = np.concatenate([c.ids for c, _ in iter_nodes(child) if isinstance(c, Leaf)] +
                                     [c.covered for c, _ in iter_nodes(child) if isinstance(c, BallNode)])
                F = node.embedding(X[ids])
                assert (node.hash(F) == key).all()


def test_single_tree_forest_equals_build_tree(small_instance):
    P = small_instance.dataset
    prm = derive_params(4.0, 0.5, len(P), seed=3, n_trees=1)
    f = build_forest(P, prm)
    t = build_tree(P, prm, tree_rng(prm.seed, 0))
    assert _signature(f.trees[0]) == _signature(t)
    for q in small_instance.queries[:10]:
        assert query_forest(f, q) == query_tree(t, q, prm, P)


def _signature(tree):
    out = []
    for node, depth in iter_nodes(tree):
        if isinstance(node, Leaf):
            out.append(("L", depth, tuple(node.ids)))
        elif isinstance(node, BallNode):
            out.append(("B", depth, node.center_x0, node.representative_p0, tuple(node.covered)))
        else:
            out.append(("P", depth, node.embedding.center_z.tobytes(), node.hash.direction_a.tobytes(),
                        node.hash.offset_b, tuple(sorted(node.children))))
    return out


def test_same_seed_same_forest(small_instance):
    P = small_instance.dataset
    prm = derive_params(4.0, 0.5, len(P), seed=77, n_trees=4)
    a, b = build_forest(P, prm), build_forest(P, prm)
    assert [_signature(t) for t in a.trees] == [_signature(t) for t in b.trees]
    c = build_forest(P, derive_params(4.0, 0.5, len(P), seed=78, n_trees=4))
    assert [_signature(t) for t in a.trees] != [_signature(t) for t in c.trees]


def test_empty_dataset_rejected():
    with pytest.raises(InvalidInputError):
        build_forest(Dataset(np.zeros((0, 3)), 4), derive_params(4.0, 0.5, 10))


def test_query_dataset_point_found(small_forest):
    P = small_forest.dataset
    for i in (0, 17, 123):
        res = query_tree(small_forest.trees[0], P.points[i], small_forest.params, P)
        assert res is not None and res.point_id == i and res.distance == 0


def test_far_query_returns_none(small_forest):
    P = small_forest.dataset
    q = np.full(P.dim, 1e9)
    for t in small_forest.trees:
        assert query_tree(t, q, small_forest.params, P) is None
    assert query_forest(small_forest, q) is None


def test_query_dimension_mismatch(small_forest):
    with pytest.raises(InvalidInputError):
        query_forest(small_forest, np.zeros(small_forest.dataset.dim + 1))


def test_hard_guarantee_and_work_bound(small_forest, small_instance):
    prm = small_forest.params
    P = small_forest.dataset
    rng = np.random.default_rng(8)
    queries = np.vstack([small_instance.queries,
                         P.points[rng.integers(0, len(P), 40)] + rng.standard_normal((40, P.dim)) * 3000])
    for q in queries:
        stats = {}
        res = query_forest(small_forest, q, stats)
        assert stats["visited"] <= prm.n_trees_T * prm.max_depth
        if res is not None:
            assert res.distance == lp_distance(q, P.points[res.point_id], P.p_exp)
            assert res.distance <= prm.c_approx * prm.r


def test_single_tree_query_equals_forest(small_instance):
    P = small_instance.dataset
    prm = derive_params(4.0, 0.5, len(P), seed=9, n_trees=1)
    f = build_forest(P, prm)
    for q in small_instance.queries:
        assert query_forest(f, q) == query_tree(f.trees[0], q, prm, P)


def test_build_warns_on_contracting_embedding(monkeypatch, caplog):
    X, C = adversarial_points()
    assert C < 1
    # spread the points so no ball of radius lambda*D holds more than one of them
    P = Dataset(X * (1e6 / pairwise_distance_stats(Dataset(X, 4.0))["min"]), 4.0)

    def origin_policy(P, rng=None, r=1.0, denominator=None, **kw):
        z = np.zeros(P.dim)
        return CenterScanResult(z, noncontraction_ratio(P, AvgEmbedding(P.p_exp, z), denominator), "origin")

    monkeypatch.setattr(forest_mod, "center_scan", origin_policy)
    prm = derive_params(4.0, 0.5, len(P), leaf_size=1, n_trees=1)
    ctx = forest_mod._BuildContext(P, prm)
    with caplog.at_level(logging.WARNING, logger="aeann.forest"):
        out = forest_mod._make_partition(ctx, np.arange(len(P)), np.random.default_rng(0))
    assert any("noncontraction ratio" in r.getMessage() for r in caplog.records)
    # the node is still built and splits the points
    node, parts = out
    assert node.c_emp == pytest.approx(C) and len(parts) >= 2
    assert sorted(np.concatenate([ids for _, ids in parts])) == list(range(len(P)))


def test_lemma_vacuous_when_hypotheses_fail(rng):
    P, _ = _clustered(rng)
    prm = derive_params(4.0, 0.5, len(P))
    out = lemma_alpha_check(P, P.points[0], AvgEmbedding.at_origin(4, P.dim), prm)
    assert out["hypotheses_met"] is False and out["holds"] is True


def test_lemma_zero_alpha(small_instance):
    P = small_instance.dataset
    prm = derive_params(4.0, 0.5, len(P))
    emb = AvgEmbedding(4.0, P.points[0])
    q = P.points[0] + 1e6
    out = lemma_alpha_check(P, q, emb, prm)
    assert out["alpha"] == 0.0 and out["holds"]
    assert out["bound"] == pytest.approx(1 - (7 / 8) * prm.lambda_ ** 2 / (4 * 18 ** 2 * prm.c_approx ** 2))
