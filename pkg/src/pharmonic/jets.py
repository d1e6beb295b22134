"""Jet matching: combinations of atoms with a prescribed derivative jet at 0.

At x = 0 the derivatives of H_xi are s(s-1)...(s-|alpha|+1) xi^alpha, so the
jets of sum_j a_j H_{xi_j} are the image of the coefficient vector under a
generalized Vandermonde matrix. Given enough well-spread directions this
matrix has full row rank and every jet is reachable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np
from scipy.stats import qmc
from scipy.special import ndtri

from .blocks import Atom, AtomSum
from .core import (
    MultiIndex,
    enumerate_multiindices,
    falling_factorial,
    mi_factorial,
    mi_order,
    n_multiindices,
)

MAGNITUDES = (0.3, 0.5, 0.7, 0.9)
RANK_RTOL = 1e-10
MAX_CONDITION = 1e12
SPARSIFY_RTOL = 1e-12


class JetError(RuntimeError):
    pass


class RankDeficientError(JetError):
    pass


class ResidualError(JetError):
    pass


@dataclass
class Jet:
    """Derivative values at 0 for every multi-index of order <= m."""

    m: int
    d: int
    values: Dict[MultiIndex, float] = field(default_factory=dict)

    def __post_init__(self):
        index = enumerate_multiindices(self.d, self.m)
        vals = {tuple(int(a) for a in k): float(v) for k, v in self.values.items()}
        extra = set(vals) - set(index)
        if extra:
            raise ValueError(f"jet entries beyond order {self.m}: {sorted(extra)}")
        self.values = {alpha: vals.get(alpha, 0.0) for alpha in index}

    @classmethod
    def canonical(cls, gamma: Sequence[int], m: int) -> "Jet":
        """gamma! at gamma and zero elsewhere: the jet of x^gamma."""
        gamma = tuple(int(g) for g in gamma)
        return cls(m, len(gamma), {gamma: float(mi_factorial(gamma))})

    @classmethod
    def from_vector(cls, vec, d: int, m: int) -> "Jet":
        return cls(m, d, dict(zip(enumerate_multiindices(d, m), vec)))

    def vector(self) -> np.ndarray:
        return np.array([self.values[a] for a in enumerate_multiindices(self.d, self.m)])

    def __len__(self):
        return len(self.values)


def lattice_directions(d: int) -> np.ndarray:
    dirs = [v for v in itertools.product((1, 0, -1), repeat=d) if any(v)]
    dirs = np.array(dirs, dtype=float)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def default_directions(d: int, m: int, budget: int | None = None, seed: int = 0) -> np.ndarray:
    """Deterministic direction set of size ``budget`` with all norms < 1.

    Normalized lattice directions from {-1, 0, 1}^d at magnitudes 0.3, 0.5,
    0.7, 0.9 (magnitude-major order), topped up with scrambled Halton
    directions whose magnitudes lie in [0.2, 0.95]. For d >= 2 at least a
    quarter of the budget goes to the Halton directions.
    """
    n_jet = n_multiindices(d, m)
    if budget is None:
        budget = 2 * n_jet
    if budget < n_jet:
        raise ValueError(f"budget {budget} is below the jet size N_m = {n_jet}")
    units = lattice_directions(d)
    cand = [mag * u for mag in MAGNITUDES for u in units]
    # the lattice spans few distinct lines; keep a quarter of the budget for
    # quasi-random directions so high-degree jets stay reachable
    n_lattice = budget if d == 1 else budget - budget // 4
    out = cand[:n_lattice]
    short = budget - len(out)
    if short > 0:
        sample = qmc.Halton(d=d + 1, scramble=True, seed=seed).random(short)
        g = ndtri(np.clip(sample[:, :d], 1e-12, 1 - 1e-12))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        mags = 0.2 + 0.75 * sample[:, d]
        out.extend(g * mags[:, None])
    return np.array(out).reshape(budget, d)


@dataclass
class JetSystem:
    directions: np.ndarray
    s: float
    m: int
    matrix: np.ndarray
    rank: int
    condition: float
    singular_values: np.ndarray

    @property
    def d(self) -> int:
        return self.directions.shape[1]

    @property
    def index(self) -> list[MultiIndex]:
        return enumerate_multiindices(self.d, self.m)


def jet_matrix(directions: np.ndarray, s: float, m: int) -> np.ndarray:
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    rows = []
    for alpha in enumerate_multiindices(directions.shape[1], m):
        ff = falling_factorial(s, mi_order(alpha))
        rows.append(ff * np.prod(directions ** np.asarray(alpha, dtype=float), axis=1))
    return np.array(rows)


def build_jet_system(directions, s: float, m: int) -> JetSystem:
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if np.any(np.linalg.norm(directions, axis=1) == 0):
        raise ValueError("directions must be nonzero")
    A = jet_matrix(directions, s, m)
    sv = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv.size else 0
    full = min(A.shape)
    cond = float(sv[0] / sv[full - 1]) if rank == full and sv[full - 1] > 0 else math.inf
    return JetSystem(directions, float(s), int(m), A, rank, cond, sv)


@dataclass
class JetMatch:
    coefficients: np.ndarray
    directions: np.ndarray
    residual: float
    condition: float
    s: float

    def atoms(self) -> AtomSum:
        return AtomSum(
            [Atom(c, tuple(xi), self.s) for c, xi in zip(self.coefficients, self.directions)],
            s=self.s,
            d=self.directions.shape[1],
        )

    def to_dict(self) -> dict:
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "directions": [list(map(float, xi)) for xi in self.directions],
            "residual": self.residual,
            "condition": self.condition,
        }


def _residual(A, coef, target) -> float:
    return float(np.max(np.abs(A @ coef - target))) if target.size else 0.0


def solve_jet(system: JetSystem, target: Jet, tol: float = 1e-8) -> JetMatch:
    """Minimum-norm coefficients reproducing ``target`` on I_m.

    Coefficients below 1e-12 of the largest are dropped afterwards, provided
    the residual stays within ``tol``.
    """
    n_jet = system.matrix.shape[0]
    if target.m != system.m or target.d != system.d:
        raise ValueError("target jet does not match the system's order/dimension")
    if system.rank < n_jet:
        raise RankDeficientError(f"jet system has rank {system.rank} < N_m = {n_jet}")
    if system.condition > MAX_CONDITION:
        raise RankDeficientError(f"jet system condition {system.condition:.3g} exceeds {MAX_CONDITION:.0e}")
    A = system.matrix
    t = target.vector()
    coef, *_ = np.linalg.lstsq(A, t, rcond=None)
    res = _residual(A, coef, t)

    keep = np.abs(coef) >= SPARSIFY_RTOL * np.max(np.abs(coef)) if np.any(coef) else np.zeros(coef.size, bool)
    if not np.all(keep):
        trimmed = np.where(keep, coef, 0.0)
        trimmed_res = _residual(A, trimmed, t)
        if trimmed_res <= tol:
            coef, res = trimmed, trimmed_res
    keep = coef != 0.0
    if res > tol:
        raise ResidualError(f"jet residual {res:.3g} exceeds tolerance {tol:.3g}")
    return JetMatch(coef[keep], system.directions[keep], res, system.condition, system.s)


def central_difference(fn, alpha: MultiIndex, h: float, center=None) -> float:
    """Tensor-product central difference for D^alpha at ``center``, O(h^2)."""
    d = len(alpha)
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    axes = []
    for a in alpha:
        axes.append([((a / 2 - j) * h, (-1) ** j * math.comb(a, j)) for j in range(a + 1)])
    pts, wts = [], []
    for combo in itertools.product(*axes):
        pts.append([c[0] for c in combo])
        wts.append(math.prod(c[1] for c in combo))
    vals = np.asarray(fn(center + np.array(pts)), dtype=float)
    return float(np.dot(wts, vals) / h ** mi_order(alpha))


def fd_derivative(fn, alpha: MultiIndex, step: float = 1e-4, center=None, levels: int = 3) -> float:
    """Central differences on h, h/2, h/4 combined by Richardson extrapolation.

    The base step grows with the derivative order, h = max(step, 0.025 n),
    so that rounding in the n-th difference quotient stays below the
    truncation error of the extrapolated value.
    """
    n = mi_order(alpha)
    if n == 0:
        c = np.zeros((1, len(alpha))) if center is None else np.atleast_2d(center)
        return float(np.asarray(fn(c))[0])
    h = max(step, 0.025 * n)
    table = [central_difference(fn, alpha, h / 2**i, center) for i in range(levels)]
    for k in range(1, levels):
        table = [(4**k * table[i + 1] - table[i]) / (4**k - 1) for i in range(len(table) - 1)]
    return table[0]


def verify_jet_fd(match: JetMatch | AtomSum, target: Jet, step: float = 1e-4) -> float:
    """Largest finite-difference jet error, relative to max(1, |target|).

    Uses only pointwise evaluation of the assembled atom sum.
    """
    atoms = match.atoms() if isinstance(match, JetMatch) else match
    if np.any(np.linalg.norm(atoms.directions, axis=1) >= 1):
        raise ValueError("finite-difference check needs |xi| < 1 for every atom")
    worst = 0.0
    for alpha, want in target.values.items():
        got = fd_derivative(atoms, alpha, step)
        worst = max(worst, abs(got - want) / max(1.0, abs(want)))
    return worst
