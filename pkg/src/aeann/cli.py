"""Experiment command line.

Exit codes: 0 success, 1 validation error, 2 internal assertion failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys

import numpy as np

from . import plotting
from .dataio import read_dataset, read_truth, write_dataset, write_truth
from .errors import AeannError
from .evaluation import PlantedInstance, evaluate, plant_instance
from .forest import build_forest, derive_params, query_forest
from .lsh import collision_probability, monte_carlo_collision
from .mazur import AvgEmbedding, center_scan, verify_average_embedding
from .metric import Dataset
from .persist import load_forest, save_forest

log = logging.getLogger("aeann")


class CliError(Exception):
    """Validation failure; the message names the offending flag."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {s}")
    return v


def _positive_float(s):
    v = float(s)
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be a finite positive number, got {s}")
    return v


def _p_exp(s):
    v = float(s)
    if not (math.isfinite(v) and v >= 2):
        raise argparse.ArgumentTypeError(f"must be >= 2, got {s}")
    return v


def _eps(s):
    v = float(s)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {s}")
    return v


def _seed(s):
    v = int(s)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"must be an unsigned 64-bit integer, got {s}")
    return v


def _load_queries(path, p_exp, flag="--queries") -> np.ndarray:
    Q = read_dataset(path)
    if Q.p_exp != p_exp:
        raise CliError(f"{flag}: file has p={Q.p_exp:g} but the index uses p={p_exp:g}")
    return Q


def _check_dims(Q: Dataset, d: int, flag: str):
    if Q.dim != d:
        raise CliError(f"{flag}: dimension mismatch, file has d={Q.dim} but the index has d={d}")


# --- subcommands ------------------------------------------------------------

def cmd_gen(a):
    inst = plant_instance(a.n, a.d, a.p, a.eps, a.seed, n_queries=a.n_queries)
    write_dataset(inst.dataset, a.out_data)
    write_dataset(Dataset(inst.queries, a.p), a.out_queries)
    write_truth(inst.truth, a.out_truth)
    print(f"wrote {a.n} points (d={a.d}, p={a.p:g}) and {a.n_queries} queries; c={inst.c_approx:g}, beta={inst.beta:g}")
    return 0


def cmd_build(a):
    P = read_dataset(a.data)
    if len(P) < 2:
        raise CliError("--data: need at least 2 points")
    scale = a.radius
    if scale != 1.0:
        P = P.scaled(1.0 / scale)
    params = derive_params(P.p_exp, a.eps, len(P), seed=a.seed, leaf_size=a.leaf_size, n_trees=a.n_trees)
    forest = build_forest(P, params)
    ms = forest.build_ms
    save_forest(forest, a.out_index, scale=scale)
    print(f"built {params.n_trees_T} trees over {len(P)} points in {ms:.0f} ms; c={params.c_approx:g}, "
          f"W={params.lsh_width_W:.6g}, p1={params.p1:.6g}, p2={params.p2:.6g}")
    return 0


def cmd_query(a):
    forest, scale = load_forest(a.index)
    Q = _load_queries(a.queries, forest.dataset.p_exp)
    _check_dims(Q, forest.dataset.dim, "--queries")
    with open(a.out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["query_id", "point_id", "distance"])
        for i, q in enumerate(Q.points):
            res = query_forest(forest, q / scale)
            if res is None:
                wr.writerow([i, "", ""])
            else:
                wr.writerow([i, res.point_id, repr(res.distance * scale)])
    print(f"answered {len(Q)} queries -> {a.out}")
    return 0


def cmd_eval(a):
    forest, scale = load_forest(a.index)
    P = read_dataset(a.data)
    _check_dims(P, forest.dataset.dim, "--data")
    if len(P) != len(forest.dataset) or not np.array_equal(P.points / scale, forest.dataset.points):
        raise CliError("--data: dataset does not match the one the index was built from")
    Q = _load_queries(a.queries, forest.dataset.p_exp)
    _check_dims(Q, forest.dataset.dim, "--queries")
    truth = read_truth(a.truth)
    if len(truth) != len(Q) or any(not (0 <= qi < len(Q) and 0 <= nn < len(P) and dist >= 0)
                                   for qi, nn, dist in truth):
        raise CliError("--truth: rows do not match the query and dataset files")
    inst = PlantedInstance(forest.dataset, Q.points / scale, truth, forest.params.c_approx, forest.params.beta)
    answers = []
    rep = evaluate(forest, inst, answers=answers)
    with open(a.out, "w") as fh:
        json.dump(rep.as_dict(), fh, indent=1)
    print(rep.to_text())
    if not a.no_plot:
        exact = [e.distance for _, _, e in answers]
        got = [np.nan if r is None else r.distance for _, r, _ in answers]
        plotting.plot_eval(exact, got, forest.params.answer_radius, plotting.figure_path(a.out))
    if not rep.all_within_c:
        log.error("hard guarantee violated: a returned point lies beyond c*r")
        return 2
    return 0


def cmd_verify_embed(a):
    P = read_dataset(a.data)
    if len(P) < 2:
        raise CliError("--data: need at least 2 points")
    rng = np.random.default_rng(a.seed)
    if a.center == "origin":
        z = np.zeros(P.dim)
    elif a.center == "mean":
        z = P.points.mean(axis=0)
    elif a.center == "median":
        z = np.median(P.points, axis=0)
    else:
        z = center_scan(P, rng=rng).best_z
    rep = verify_average_embedding(P, AvgEmbedding(P.p_exp, z), n_pairs=a.pairs, rng=rng)
    for k, v in vars(rep).items():
        print(f"{k:>24}: {v}")
    return 0


def cmd_conjecture_scan(a):
    P = read_dataset(a.data)
    if len(P) < 2:
        raise CliError("--data: need at least 2 points")
    res = center_scan(P, rng=np.random.default_rng(a.seed), r=a.radius)
    with open(a.out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["candidate", "C"])
        for label, C in res.candidates:
            wr.writerow([label, repr(C)])
    print(f"best center: {res.best_label}  C = {res.best_C:.9g}  ({len(res.candidates)} candidates)")
    if not a.no_plot:
        plotting.plot_center_scores([C for _, C in res.candidates], plotting.figure_path(a.out),
                                    title=f"best {res.best_label}: C={res.best_C:.4g}")
    return 0


def cmd_lsh_curve(a):
    if a.smax < a.smin:
        raise CliError("--smax: must be >= --smin")
    rng = np.random.default_rng(a.seed)
    s_vals = np.linspace(a.smin, a.smax, a.steps)
    rows = []
    for W in a.width:
        for s in s_vals:
            mc = monte_carlo_collision(W, float(s), a.trials, rng) if a.trials else float("nan")
            rows.append({"W": W, "s": float(s), "p_analytic": collision_probability(W, float(s)),
                         "p_montecarlo": mc, "n_trials": a.trials})
    with open(a.out, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=["W", "s", "p_analytic", "p_montecarlo", "n_trials"])
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    print(f"wrote {len(rows)} rows -> {a.out}")
    if not a.no_plot:
        plotting.plot_lsh_curve(rows, plotting.figure_path(a.out))
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aeann", description="Average-embedding ANN experiments for l_p spaces.")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a planted beta-bounded instance")
    g.add_argument("--n", type=_positive_int, default=1024)
    g.add_argument("--d", type=_positive_int, default=16)
    g.add_argument("--p", type=_p_exp, default=4.0)
    g.add_argument("--eps", type=_eps, default=0.5)
    g.add_argument("--seed", type=_seed, default=0)
    g.add_argument("--n-queries", type=_positive_int, default=100)
    g.add_argument("--out-data", required=True)
    g.add_argument("--out-queries", required=True)
    g.add_argument("--out-truth", required=True)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("build", help="build and persist a forest")
    b.add_argument("--data", required=True)
    b.add_argument("--eps", type=_eps, default=0.5)
    b.add_argument("--seed", type=_seed, default=0)
    b.add_argument("--radius", type=_positive_float, default=1.0,
                   help="near radius r of the data; coordinates are divided by it before indexing")
    b.add_argument("--n-trees", type=_positive_int, default=None, help="override ceil(3 n^eps)")
    b.add_argument("--leaf-size", type=_positive_int, default=8)
    b.add_argument("--out-index", required=True)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="answer queries with a persisted index")
    q.add_argument("--index", required=True)
    q.add_argument("--queries", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_query)

    e = sub.add_parser("eval", help="evaluate an index against brute force")
    e.add_argument("--index", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--queries", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--no-plot", action="store_true")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify-embed", help="check both average-embedding conditions")
    v.add_argument("--data", required=True)
    v.add_argument("--pairs", type=_positive_int, default=10000)
    v.add_argument("--center", choices=["origin", "mean", "median", "scan"], default="scan")
    v.add_argument("--seed", type=_seed, default=0)
    v.set_defaults(func=cmd_verify_embed)

    c = sub.add_parser("conjecture-scan", help="search centres maximising the noncontraction ratio")
    c.add_argument("--data", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--radius", type=_positive_float, default=1.0)
    c.add_argument("--seed", type=_seed, default=0)
    c.add_argument("--no-plot", action="store_true")
    c.set_defaults(func=cmd_conjecture_scan)

    lc = sub.add_parser("lsh-curve", help="analytic vs Monte-Carlo collision curve")
    lc.add_argument("--width", type=_positive_float, nargs="+", required=True)
    lc.add_argument("--smin", type=float, default=0.0)
    lc.add_argument("--smax", type=_positive_float, required=True)
    lc.add_argument("--steps", type=_positive_int, default=21)
    lc.add_argument("--trials", type=int, default=100000)
    lc.add_argument("--seed", type=_seed, default=0)
    lc.add_argument("--out", required=True)
    lc.add_argument("--no-plot", action="store_true")
    lc.set_defaults(func=cmd_lsh_curve)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "smin", 0.0) < 0:
            raise CliError("--smin: must be >= 0")
        if getattr(args, "trials", 0) < 0:
            raise CliError("--trials: must be >= 0")
    except CliError as exc:
        print(f"aeann: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, AeannError, OSError) as exc:
        print(f"aeann {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except AssertionError as exc:
        print(f"aeann {args.command}: internal assertion failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
