"""l_p geometry: points, datasets, distances and bounded-instance checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import InvalidInputError, InvalidParameterError

# rows per block for the O(n^2 d) pairwise scans; keeps temporaries near 64 MB at d=32
_BLOCK_ELEMS = 1 << 23


def as_point(x, name: str = "point") -> np.ndarray:
    """Coerce to a finite 1-d float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise InvalidInputError(f"{name} must be a non-empty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite coordinates")
    return arr


def _check_p(p_exp: float, lower: float = 1.0) -> float:
    p_exp = float(p_exp)
    if not math.isfinite(p_exp) or p_exp < lower:
        raise InvalidParameterError(f"p_exp must be >= {lower}, got {p_exp}")
    return p_exp


def abs_pow(a: np.ndarray, p_exp: float) -> np.ndarray:
    """|a|**p with exact multiply paths for p in {2, 4}."""
    if p_exp == 2.0:
        return a * a
    if p_exp == 4.0:
        a2 = a * a
        return a2 * a2
    return np.abs(a) ** p_exp


@dataclass(frozen=True)
class Dataset:
    """Row-major point matrix with its l_p exponent. Point ids are row indices."""

    points: np.ndarray
    p_exp: float
    dim: int = field(init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise InvalidInputError(f"dataset must be an (n, d) matrix with d >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("dataset has non-finite coordinates")
        p = _check_p(self.p_exp, 2.0)
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "p_exp", p)
        object.__setattr__(self, "dim", int(pts.shape[1]))

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def subset(self, ids) -> "Dataset":
        return Dataset(self.points[np.asarray(ids, dtype=np.int64)], self.p_exp)

    def scaled(self, t: float) -> "Dataset":
        return Dataset(self.points * float(t), self.p_exp)


@dataclass(frozen=True)
class BoundedInstanceParams:
    r: float
    c: float
    beta: float

    def __post_init__(self):
        if not self.r > 0:
            raise InvalidParameterError(f"r must be > 0, got {self.r}")
        if not self.c > 1:
            raise InvalidParameterError(f"c must be > 1, got {self.c}")
        if not self.beta >= 1:
            raise InvalidParameterError(f"beta must be >= 1, got {self.beta}")

    @property
    def max_distance(self) -> float:
        return self.beta * self.c * self.r


_SAFE_LO, _SAFE_HI = 1e-60, 1e60


def _row_norms(A: np.ndarray, p_exp: float) -> np.ndarray:
    """l_p norms along the last axis; rescales by the row max only when powers could under/overflow."""
    m = np.max(np.abs(A), axis=-1)
    nz = m > 0
    if np.all((m[nz] > _SAFE_LO) & (m[nz] < _SAFE_HI)):
        return np.sum(abs_pow(A, p_exp), axis=-1) ** (1.0 / p_exp)
    safe = np.where(nz, m, 1.0)
    return safe * np.sum(abs_pow(A / safe[..., None], p_exp), axis=-1) ** (1.0 / p_exp)


def lp_norm(x, p_exp: float) -> float:
    x = as_point(x, "x")
    return float(_row_norms(x, _check_p(p_exp)))


def lp_distance(x, y, p_exp: float) -> float:
    x = as_point(x, "x")
    y = as_point(y, "y")
    if x.shape != y.shape:
        raise InvalidInputError(f"dimension mismatch: {x.size} vs {y.size}")
    return float(_row_norms(x - y, _check_p(p_exp)))


def lp_distances_to(X: np.ndarray, q: np.ndarray, p_exp: float) -> np.ndarray:
    """Distances from every row of X to q."""
    if X.shape[-1] != q.shape[-1]:
        raise InvalidInputError(f"dimension mismatch: {X.shape[-1]} vs {q.shape[-1]}")
    return _row_norms(X - q, p_exp)


def lp_norms(X: np.ndarray, p_exp: float) -> np.ndarray:
    return _row_norms(np.asarray(X, dtype=np.float64), p_exp)


def distance_blocks(X: np.ndarray, p_exp: float, Y: np.ndarray | None = None) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(row_start, D)`` with ``D[i, j] = ||X[row_start+i] - Y[j]||_p``."""
    Y = X if Y is None else Y
    n, d = X.shape
    m = Y.shape[0]
    rows = max(1, _BLOCK_ELEMS // max(1, m * d))
    for start in range(0, n, rows):
        diff = X[start:start + rows, None, :] - Y[None, :, :]
        yield start, np.sum(abs_pow(diff, p_exp), axis=-1) ** (1.0 / p_exp)


def pairwise_distances(X: np.ndarray, p_exp: float) -> np.ndarray:
    n = X.shape[0]
    out = np.empty((n, n))
    for start, block in distance_blocks(X, p_exp):
        out[start:start + block.shape[0]] = block
    return out


def pairwise_distance_stats(P: Dataset, include_self: bool = False) -> dict:
    """Min/max over ordered pairs and the full double sum of squared distances.

    ``min``/``max`` range over pairs of distinct ids unless ``include_self``
    is set.  ``sum_sq`` always runs over every ordered pair; the diagonal
    contributes zero.
    """
    n = len(P)
    if n < 2:
        raise InvalidInputError(f"need at least 2 points, got {n}")
    lo, hi = math.inf, -math.inf
    partials = []
    for start, block in distance_blocks(P.points, P.p_exp):
        partials.extend(np.sum(block * block, axis=1).tolist())
        if not include_self:
            rows = np.arange(block.shape[0])
            block = block.copy()
            block[rows, start + rows] = np.nan
        lo = min(lo, float(np.nanmin(block)))
        hi = max(hi, float(np.nanmax(block)))
    return {"min": lo, "max": hi, "sum_sq": math.fsum(partials)}


def sum_sq_distances(X: np.ndarray, p_exp: float) -> float:
    """Sum of squared l_p distances over all ordered pairs of rows."""
    partials = []
    for _, block in distance_blocks(X, p_exp):
        partials.extend(np.sum(block * block, axis=1).tolist())
    return math.fsum(partials)


def is_beta_bounded(P: Dataset, bp: BoundedInstanceParams) -> bool:
    """True iff every pair of distinct points lies in [r, beta*c*r] (inclusive)."""
    stats = pairwise_distance_stats(P)
    return stats["min"] >= bp.r and stats["max"] <= bp.max_distance
