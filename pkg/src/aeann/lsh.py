"""Gaussian (2-stable) LSH for l_2: ``floor((<a, v> + b) / W)``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, InvalidInputError, InvalidParameterError

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class LshFunction:
    direction_a: np.ndarray
    offset_b: float
    width_W: float

    def __post_init__(self):
        if not self.width_W > 0:
            raise InvalidParameterError(f"width_W must be > 0, got {self.width_W}")
        if not 0 <= self.offset_b < self.width_W:
            raise InvalidParameterError("offset_b must lie in [0, width_W)")
        a = np.asarray(self.direction_a, dtype=np.float64).copy()
        a.setflags(write=False)
        object.__setattr__(self, "direction_a", a)

    @property
    def dim(self) -> int:
        return int(self.direction_a.size)

    def __call__(self, X) -> np.ndarray:
        return hash_many(self, X)


@dataclass(frozen=True)
class LshParams:
    p1: float
    p2: float
    near_r: float
    far_cr: float
    width_W: float
    rho: float = field(init=False)

    def __post_init__(self):
        if not self.near_r < self.far_cr:
            raise InvalidParameterError("near_r must be smaller than far_cr")
        object.__setattr__(self, "rho", lsh_exponent(self.p1, self.p2))

    @classmethod
    def from_width(cls, width_W: float, near_r: float, far_cr: float) -> "LshParams":
        return cls(collision_probability(width_W, near_r), collision_probability(width_W, far_cr),
                   near_r, far_cr, width_W)


def sample_lsh(dim: int, width_W: float, rng: np.random.Generator) -> LshFunction:
    if dim < 1:
        raise InvalidParameterError(f"dim must be >= 1, got {dim}")
    if not width_W > 0:
        raise InvalidParameterError(f"width_W must be > 0, got {width_W}")
    a = rng.standard_normal(dim)
    b = float(rng.uniform(0.0, width_W))
    return LshFunction(a, b, float(width_W))


def hash_many(h: LshFunction, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != h.dim:
        raise InvalidInputError(f"dimension mismatch: {X.shape[-1]} vs hash dim {h.dim}")
    return np.floor((X @ h.direction_a + h.offset_b) / h.width_W).astype(np.int64)


def lsh_hash(h: LshFunction, v) -> int:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise InvalidInputError("lsh_hash expects a single vector")
    return int(hash_many(h, v))


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def collision_probability(width_W: float, dist_s: float) -> float:
    """Probability that two points at l_2 distance ``s`` share a bucket."""
    if not width_W > 0:
        raise InvalidParameterError(f"width_W must be > 0, got {width_W}")
    if dist_s < 0:
        raise InvalidParameterError(f"dist_s must be >= 0, got {dist_s}")
    if dist_s == 0:
        return 1.0
    t = width_W / dist_s
    p = 1.0 - 2.0 * _norm_cdf(-t) + (2.0 / (_SQRT2PI * t)) * math.expm1(-0.5 * t * t)
    return min(1.0, max(0.0, p))


def calibrate_width(near_r: float, target_p1: float) -> float:
    """Width ``W`` with ``collision_probability(W, near_r) == target_p1``."""
    if not 0 < target_p1 < 1:
        raise InvalidParameterError(f"target_p1 must lie in (0, 1), got {target_p1}")
    if not near_r > 0:
        raise InvalidParameterError(f"near_r must be > 0, got {near_r}")
    lo, hi = 1e-6 * near_r, 1e6 * near_r
    if not collision_probability(lo, near_r) <= target_p1 <= collision_probability(hi, near_r):
        raise CalibrationError(f"target_p1={target_p1} not reachable for W in [{lo:g}, {hi:g}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if collision_probability(mid, near_r) < target_p1:
            lo = mid
        else:
            hi = mid
    W = 0.5 * (lo + hi)
    if abs(collision_probability(W, near_r) - target_p1) > 1e-9:
        raise CalibrationError(f"bisection stalled at W={W:g}")
    return W


def lsh_exponent(p1: float, p2: float) -> float:
    if not 0 < p2 < p1 < 1:
        raise InvalidParameterError(f"need 0 < p2 < p1 < 1, got p1={p1}, p2={p2}")
    return math.log(1.0 / p1) / math.log(1.0 / p2)


def monte_carlo_collision(width_W: float, dist_s: float, n_trials: int,
                          rng: np.random.Generator, dim: int = 8) -> float:
    """Empirical collision frequency of freshly sampled hashes on pairs at distance ``s``."""
    A = rng.standard_normal((n_trials, dim))
    b = rng.uniform(0.0, width_W, size=n_trials)
    x = rng.standard_normal((n_trials, dim))
    u = rng.standard_normal((n_trials, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    y = x + dist_s * u
    hx = np.floor((np.einsum("ij,ij->i", A, x) + b) / width_W)
    hy = np.floor((np.einsum("ij,ij->i", A, y) + b) / width_W)
    return float(np.mean(hx == hy))
