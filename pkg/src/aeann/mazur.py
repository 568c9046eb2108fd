"""Explicit average embedding of l_p into l_2 built on the Mazur map.

``h(x)_i = sign(x_i) |x_i|^{p/2}`` sends the l_p unit sphere onto the l_2
unit sphere.  ``f`` normalises its input, applies ``h`` and rescales so that
``||f(x)||_2 = ||x||_p``.  The data-dependent part is the translation
``x -> f(x - z)``; :func:`center_scan` searches for a good ``z``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, UndefinedRatioError
from .metric import Dataset, as_point, lp_norms, sum_sq_distances, distance_blocks

log = logging.getLogger(__name__)

LIPSCHITZ_SLACK = 1e-9
NONCONTRACTION_SLACK = 1e-12


def _signed_power(x: np.ndarray, k: float) -> np.ndarray:
    """sign(x)|x|^k via exp(k ln|x|), exact at 0; k in {1, 2} use exact products."""
    x = np.asarray(x, dtype=np.float64)
    if k == 1.0:
        return x.copy()
    a = np.abs(x)
    if k == 2.0:
        return x * a
    logs = np.log(a, out=np.full_like(a, -np.inf), where=a > 0)
    return np.copysign(np.exp(k * logs), x)


def mazur_h(x, p_exp: float) -> np.ndarray:
    return _signed_power(x, p_exp / 2.0)


def mazur_h_inverse(y, p_exp: float) -> np.ndarray:
    return _signed_power(y, 2.0 / p_exp)


@dataclass(frozen=True)
class AvgEmbedding:
    """The map ``x -> f(x - center_z)`` for a fixed exponent."""

    p_exp: float
    center_z: np.ndarray
    lip_const_D: float = field(init=False)

    def __post_init__(self):
        if not (math.isfinite(self.p_exp) and self.p_exp >= 2):
            raise InvalidParameterError(f"p_exp must be >= 2, got {self.p_exp}")
        z = as_point(self.center_z, "center_z").copy()
        z.setflags(write=False)
        object.__setattr__(self, "p_exp", float(self.p_exp))
        object.__setattr__(self, "center_z", z)
        object.__setattr__(self, "lip_const_D", float(self.p_exp) + 1.0)

    @classmethod
    def at_origin(cls, p_exp: float, dim: int) -> "AvgEmbedding":
        return cls(p_exp, np.zeros(dim))

    @property
    def dim(self) -> int:
        return int(self.center_z.size)

    def __call__(self, X) -> np.ndarray:
        return embed_many(X, self)


def _f_rows(V: np.ndarray, p_exp: float) -> np.ndarray:
    # f(v) = ||v||_p * h(u)/||h(u)||_2 with u = v/||v||_p; normalising first avoids overflow
    norms = lp_norms(V, p_exp)
    out = np.zeros_like(V)
    nz = norms > 0
    if not np.any(nz):
        return out
    U = V[nz] / norms[nz, None]
    H = mazur_h(U, p_exp)
    hn = np.sqrt(np.sum(H * H, axis=1))
    out[nz] = H * (norms[nz] / hn)[:, None]
    return out


def embed_many(X, emb: AvgEmbedding) -> np.ndarray:
    """Apply ``f(x - z)`` to every row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    squeeze = X.ndim == 1
    X2 = np.atleast_2d(X)
    if X2.shape[1] != emb.dim:
        raise InvalidInputError(f"dimension mismatch: {X2.shape[1]} vs embedding dim {emb.dim}")
    out = _f_rows(X2 - emb.center_z, emb.p_exp)
    return out[0] if squeeze else out


def embed_f(x, emb: AvgEmbedding) -> np.ndarray:
    return embed_many(as_point(x, "x"), emb)


def lipschitz_ratios(emb: AvgEmbedding, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Per-pair ``||f(x-z) - f(y-z)||_2 / ||x - y||_p``; NaN where x == y."""
    fx = embed_many(X, emb)
    fy = embed_many(Y, emb)
    num = np.sqrt(np.sum((fx - fy) ** 2, axis=1))
    den = lp_norms(np.asarray(X) - np.asarray(Y), emb.p_exp)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


PairSource = Callable[[int], "tuple[np.ndarray, np.ndarray]"]


def mixed_scale_pairs(dim: int, rng: np.random.Generator, exponents=range(-3, 4)) -> PairSource:
    """Pair sampler: standard normal coordinates times 10**k, k drawn per point."""
    exps = np.asarray(list(exponents), dtype=np.float64)

    def sample(n: int):
        kx = 10.0 ** rng.choice(exps, size=n)
        ky = 10.0 ** rng.choice(exps, size=n)
        X = rng.standard_normal((n, dim)) * kx[:, None]
        Y = rng.standard_normal((n, dim)) * ky[:, None]
        return X, Y

    return sample


def lipschitz_probe(emb: AvgEmbedding, pair_source: PairSource, n_pairs: int, chunk: int = 20000) -> float:
    """Largest observed Lipschitz ratio of ``f`` over ``n_pairs`` sampled pairs."""
    if n_pairs < 1:
        raise InvalidParameterError("n_pairs must be >= 1")
    best, skipped, done = 0.0, 0, 0
    while done < n_pairs:
        m = min(chunk, n_pairs - done)
        X, Y = pair_source(m)
        ratios = lipschitz_ratios(emb, X, Y)
        bad = np.isnan(ratios)
        skipped += int(bad.sum())
        if not bad.all():
            best = max(best, float(np.nanmax(ratios)))
        done += m
    if skipped:
        log.debug("lipschitz_probe skipped %d identical pairs", skipped)
    return best


def _embedded_sum_sq(F: np.ndarray) -> float:
    # sum_{i,j} ||F_i - F_j||^2 = 2n sum_i ||F_i - mean||^2; centring first limits cancellation
    n = F.shape[0]
    G = F - F.mean(axis=0)
    return 2.0 * n * math.fsum(np.sum(G * G, axis=1).tolist())


def noncontraction_ratio(P: Dataset, emb: AvgEmbedding, denominator: float | None = None) -> float:
    """Empirical constant C = sum ||f(x_i-z)-f(x_j-z)||_2^2 / sum ||x_i-x_j||_p^2."""
    if len(P) < 2:
        raise InvalidInputError("need at least 2 points")
    if P.p_exp != emb.p_exp:
        raise InvalidInputError(f"dataset p={P.p_exp} does not match embedding p={emb.p_exp}")
    den = sum_sq_distances(P.points, P.p_exp) if denominator is None else denominator
    if den <= 0:
        raise UndefinedRatioError("all points identical: noncontraction ratio undefined")
    return _embedded_sum_sq(embed_many(P.points, emb)) / den


@dataclass
class CenterScanResult:
    best_z: np.ndarray
    best_C: float
    best_label: str
    candidates: list = field(default_factory=list)  # (label, C) in evaluation order


def center_candidates(P: Dataset, rng: np.random.Generator, r: float = 1.0,
                      n_sample: int = 64, n_perturb: int = 64) -> list[tuple[str, np.ndarray]]:
    """Fixed-order candidate centres.

    mean, median, up to ``n_sample`` dataset points drawn without replacement,
    then ``n_perturb`` random l_p-unit perturbations of the median at radii
    ``r * 2**k``, with k cycling through 0..K-1 where ``r * 2**(K-1)`` reaches
    the largest median-to-point distance.
    """
    X = P.points
    n = X.shape[0]
    mean = X.mean(axis=0)
    median = np.median(X, axis=0)
    out = [("mean", mean), ("median", median)]
    m = min(n_sample, n)
    for i in np.sort(rng.choice(n, size=m, replace=False)) if m < n else range(n):
        out.append((f"point:{int(i)}", X[i]))
    spread = float(np.max(lp_norms(X - median, P.p_exp)))
    K = max(1, int(math.ceil(math.log2(spread / r))) + 1) if spread > r else 1
    if n_perturb:
        dirs = rng.standard_normal((n_perturb, X.shape[1]))
        dirs /= lp_norms(dirs, P.p_exp)[:, None]
        for j in range(n_perturb):
            k = j % K
            out.append((f"median+pert:{j}:2^{k}", median + r * 2.0 ** k * dirs[j]))
    return out


def center_scan(P: Dataset, p_exp: float | None = None, rng: np.random.Generator | None = None,
                r: float = 1.0, n_sample: int = 64, n_perturb: int = 64,
                denominator: float | None = None) -> CenterScanResult:
    """Evaluate the noncontraction ratio over the candidate centres and keep the best."""
    if len(P) < 2:
        raise InvalidInputError("need at least 2 points")
    if p_exp is not None and float(p_exp) != P.p_exp:
        P = Dataset(P.points, p_exp)
    rng = np.random.default_rng(0) if rng is None else rng
    den = sum_sq_distances(P.points, P.p_exp) if denominator is None else denominator
    if den <= 0:
        raise UndefinedRatioError("all points identical: no centre has a defined ratio")
    cands = center_candidates(P, rng, r=r, n_sample=n_sample, n_perturb=n_perturb)
    scores = _batched_scores(P.points, np.array([z for _, z in cands]), P.p_exp) / den
    scored = [(label, float(C)) for (label, _), C in zip(cands, scores)]
    best = int(np.argmax(scores))  # first maximum on ties
    return CenterScanResult(np.array(cands[best][1]), float(scores[best]), cands[best][0], scored)


def _batched_scores(X: np.ndarray, Z: np.ndarray, p_exp: float, max_elems: int = 1 << 22) -> np.ndarray:
    """Embedded double sum of squares for each candidate centre in ``Z``."""
    n, d = X.shape
    out = np.empty(Z.shape[0])
    step = max(1, max_elems // (n * d))
    for s in range(0, Z.shape[0], step):
        zs = Z[s:s + step]
        F = _f_rows((X[None, :, :] - zs[:, None, :]).reshape(-1, d), p_exp).reshape(zs.shape[0], n, d)
        G = F - F.mean(axis=1, keepdims=True)
        out[s:s + zs.shape[0]] = 2.0 * n * np.sum(G * G, axis=(1, 2))
    return out


@dataclass
class EmbedVerifyReport:
    max_lip_ratio: float
    noncontraction_ratio_C: float
    pairs_probed: int
    passed_lipschitz: bool
    passed_noncontraction: bool


def verify_average_embedding(P: Dataset, emb: AvgEmbedding, n_pairs: int = 1000,
                             rng: np.random.Generator | None = None) -> EmbedVerifyReport:
    """Check both average-embedding conditions of ``emb`` on ``P``.

    The Lipschitz side probes every dataset pair plus ``n_pairs`` random pairs
    drawn around dataset points at mixed scales relative to the data spread,
    so the report is invariant under uniform rescaling of ``P``.
    """
    if len(P) < 2:
        raise InvalidInputError("need at least 2 points")
    rng = np.random.default_rng(0) if rng is None else rng
    X = P.points
    C = noncontraction_ratio(P, emb)

    F = embed_many(X, emb)
    best = 0.0
    probed = 0
    for start, dX in distance_blocks(X, P.p_exp):
        rows = F[start:start + dX.shape[0]]
        dF = np.sqrt(np.sum((rows[:, None, :] - F[None, :, :]) ** 2, axis=-1))
        mask = dX > 0
        probed += int(mask.sum())
        if mask.any():
            best = max(best, float(np.max(dF[mask] / dX[mask])))

    if n_pairs > 0:
        n = X.shape[0]
        sigma = float(np.sqrt(np.mean((X - X.mean(axis=0)) ** 2)))
        sigma = sigma if sigma > 0 else 1.0
        ia = rng.integers(0, n, size=n_pairs)
        ib = rng.integers(0, n, size=n_pairs)
        kx = 10.0 ** rng.integers(-3, 4, size=n_pairs)
        ky = 10.0 ** rng.integers(-3, 4, size=n_pairs)
        A = X[ia] + sigma * kx[:, None] * rng.standard_normal((n_pairs, X.shape[1]))
        B = X[ib] + sigma * ky[:, None] * rng.standard_normal((n_pairs, X.shape[1]))
        ratios = lipschitz_ratios(emb, A, B)
        ok = ~np.isnan(ratios)
        probed += int(ok.sum())
        if ok.any():
            best = max(best, float(np.max(ratios[ok])))

    return EmbedVerifyReport(
        max_lip_ratio=best,
        noncontraction_ratio_C=C,
        pairs_probed=probed,
        passed_lipschitz=best <= emb.lip_const_D * (1 + LIPSCHITZ_SLACK),
        passed_noncontraction=C >= 1.0 - NONCONTRACTION_SLACK,
    )
