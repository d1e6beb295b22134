"""Scalar helpers, multi-indices, evaluation grids and C^k grid norms."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from itertools import combinations_with_replacement
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

MultiIndex = Tuple[int, ...]


class MissingDerivativeError(KeyError):
    pass


@dataclass(frozen=True)
class Params:
    """Exponents of the operator and the space dimension."""

    s: float
    p: float
    d: int = 1

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not (1.0 < self.p < math.inf):
            raise ValueError(f"p must lie in (1, inf), got {self.p}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        object.__setattr__(self, "d", int(self.d))

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Tolerances:
    quad_rel: float = 1e-12
    quad_abs: float = 1e-14
    jet_residual: float = 1e-8
    fd_step: float = 1e-4

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"tolerance {name} must be positive, got {value}")

    def to_dict(self):
        return asdict(self)


def falling_factorial(s: float, m: int) -> float:
    """Return s (s-1) ... (s-m+1); the empty product for m = 0 is 1."""
    if m < 0:
        raise ValueError("m must be non-negative")
    out = 1.0
    for j in range(m):
        out *= s - j
    return out


def beta(a: float, b: float) -> float:
    if a <= 0 or b <= 0:
        raise ValueError(f"beta requires positive arguments, got ({a}, {b})")
    return math.exp(gammaln(a) + gammaln(b) - gammaln(a + b))


def sphere_measure(n: int) -> float:
    """Surface measure of the unit sphere in R^n, i.e. 2 pi^(n/2) / Gamma(n/2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 2.0 * math.exp(0.5 * n * math.log(math.pi) - gammaln(0.5 * n))


def mi_order(alpha: Sequence[int]) -> int:
    return int(sum(alpha))


def mi_factorial(alpha: Sequence[int]) -> int:
    out = 1
    for a in alpha:
        out *= math.factorial(int(a))
    return out


def multiindices_of_order(d: int, n: int) -> list[MultiIndex]:
    """All alpha with |alpha| = n, lexicographically descending."""
    out = []
    for combo in combinations_with_replacement(range(d), n):
        alpha = [0] * d
        for i in combo:
            alpha[i] += 1
        out.append(tuple(alpha))
    return sorted(set(out), reverse=True)


def enumerate_multiindices(d: int, m: int) -> list[MultiIndex]:
    """All multi-indices with |alpha| <= m in graded lexicographic order.

    >>> enumerate_multiindices(2, 1)
    [(0, 0), (1, 0), (0, 1)]
    """
    if d < 1 or m < 0:
        raise ValueError("need d >= 1 and m >= 0")
    out: list[MultiIndex] = []
    for n in range(m + 1):
        out.extend(multiindices_of_order(d, n))
    return out


def n_multiindices(d: int, m: int) -> int:
    return math.comb(d + m, d)


def monomial(X: np.ndarray, gamma: Sequence[int]) -> np.ndarray:
    X = np.atleast_2d(X)
    return np.prod(X ** np.asarray(gamma, dtype=float), axis=1)


def monomial_derivative(X: np.ndarray, gamma: Sequence[int], alpha: Sequence[int]) -> np.ndarray:
    """D^alpha x^gamma evaluated at the rows of X."""
    X = np.atleast_2d(X)
    coef = 1.0
    powers = []
    for g, a in zip(gamma, alpha):
        if a > g:
            return np.zeros(X.shape[0])
        coef *= math.factorial(g) / math.factorial(g - a)
        powers.append(g - a)
    return coef * np.prod(X ** np.asarray(powers, dtype=float), axis=1)


@dataclass(frozen=True)
class EvalGrid:
    """Deterministic sample of the open ball of the given radius."""

    points: np.ndarray
    radius: float
    resolution: int
    n_shell: int

    def __post_init__(self):
        norms = np.linalg.norm(self.points, axis=1)
        if np.any(norms >= self.radius):
            raise ValueError("grid points must lie strictly inside the ball")

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def metadata(self) -> dict:
        return {
            "d": self.d,
            "radius": self.radius,
            "resolution": self.resolution,
            "n_shell": self.n_shell,
            "n_points": len(self),
        }


SHELL_GAP = 1e-9


def _shell(d: int, n: int) -> np.ndarray:
    if d == 1:
        return np.array([[-1.0], [1.0]])
    if d == 2:
        theta = 2 * np.pi * np.arange(n) / n
        return np.column_stack([np.cos(theta), np.sin(theta)])
    # Fibonacci lattice on S^{d-1}, embedded in the first three coordinates
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(1 - z**2)
    phi = np.pi * (3 - np.sqrt(5)) * i
    pts = np.zeros((n, d))
    pts[:, 0] = r * np.cos(phi)
    pts[:, 1] = r * np.sin(phi)
    pts[:, 2] = z
    return pts


def make_grid(d: int, resolution: int = 41, radius: float = 1.0, n_shell: int | None = None) -> EvalGrid:
    """Tensor grid intersected with the ball, plus points just inside the boundary.

    The grid is a deterministic function of ``(d, resolution, radius, n_shell)``.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    inner = radius * (1 - SHELL_GAP)
    axis = np.linspace(-radius, radius, resolution)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    mesh = mesh[np.linalg.norm(mesh, axis=1) < inner]
    if n_shell is None:
        n_shell = 2 if d == 1 else 4 * resolution * (d - 1)
    shell = inner * _shell(d, n_shell) if n_shell else np.zeros((0, d))
    points = np.vstack([mesh, shell])
    return EvalGrid(points=points, radius=float(radius), resolution=resolution, n_shell=len(shell))


def ck_grid_norm(derivative_table: Mapping[MultiIndex, np.ndarray], k: int, d: int | None = None) -> float:
    """Sum over |alpha| <= k of the grid maximum of |D^alpha|.

    This underestimates the true C^k norm; it increases towards it as the
    grid is refined.
    """
    if d is None:
        if not derivative_table:
            raise MissingDerivativeError("empty derivative table")
        d = len(next(iter(derivative_table)))
    total = 0.0
    for alpha in enumerate_multiindices(d, k):
        if alpha not in derivative_table:
            raise MissingDerivativeError(f"no entry for derivative {alpha}")
        values = np.asarray(derivative_table[alpha], dtype=float)
        if values.size:
            total += float(np.max(np.abs(values)))
    return total


def derivative_table(fn, X: np.ndarray, k: int) -> Dict[MultiIndex, np.ndarray]:
    """Tabulate ``fn(alpha, X)`` for every |alpha| <= k."""
    X = np.atleast_2d(X)
    return {alpha: np.asarray(fn(alpha, X), dtype=float) for alpha in enumerate_multiindices(X.shape[1], k)}
