"""Closed-form building blocks: W_1, W_d, sigma, reflections and the atoms H_xi.

An atom ``Atom(coeff, xi, s)`` is the function

    x -> coeff * max(0, 1 + <x, xi>)^s,

which is p-harmonic on the half-space ``{<x, xi> > -1}``; for ``|xi| <= 1``
this half-space contains the unit ball.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import MultiIndex, falling_factorial, mi_order

ANTIPODAL_TOL = 1e-12


class KinkDomainError(ValueError):
    """Raised when a derivative formula is requested at or past an atom's kink."""


def w1(t, s: float):
    return np.maximum(0.0, t) ** s


def wd(x, s: float):
    x = np.asarray(x, dtype=float)
    return w1(x[..., -1], s)


def sigma(t):
    return np.where(np.asarray(t) >= 0, 1.0, -1.0) if np.ndim(t) else (1.0 if t >= 0 else -1.0)


def reflect(x, xi) -> np.ndarray:
    """Reflection R_xi that maps xi onto |xi| e^d and preserves inner products."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    norm = np.linalg.norm(xi)
    if norm == 0:
        raise ValueError("direction must be nonzero")
    ed = np.zeros_like(xi)
    ed[-1] = 1.0
    w = norm * ed + xi
    wn2 = float(w @ w)
    if np.sqrt(wn2) < ANTIPODAL_TOL * norm:
        # xi = -|xi| e^d: reflect across {x_d = 0}
        return x - 2.0 * (x @ ed)[..., None] * ed if x.ndim > 1 else x - 2.0 * x[-1] * ed
    if x.ndim > 1:
        return (2.0 * (x @ w) / wn2)[:, None] * w - x
    return 2.0 * float(w @ x) / wn2 * w - x


@dataclass(frozen=True)
class Atom:
    coeff: float
    xi: tuple
    s: float

    def __post_init__(self):
        xi = tuple(float(v) for v in np.ravel(self.xi))
        if not any(xi):
            raise ValueError("atom direction must be nonzero")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "coeff", float(self.coeff))
        object.__setattr__(self, "s", float(self.s))

    @property
    def d(self) -> int:
        return len(self.xi)

    @property
    def direction(self) -> np.ndarray:
        return np.asarray(self.xi)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.xi))

    def to_dict(self) -> dict:
        return {"coeff": self.coeff, "xi": list(self.xi), "s": self.s}


def _affine(xi: np.ndarray, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return 1.0 + X @ xi


def atom_eval(a: Atom, x):
    """coeff * max(0, 1 + <x, xi>)^s; exactly zero on the dead zone."""
    return a.coeff * np.maximum(0.0, _affine(a.direction, x)) ** a.s


def atom_derivative(a: Atom, alpha: MultiIndex, x):
    """D^alpha of the atom at x, valid only where 1 + <x, xi> > 0."""
    z = _affine(a.direction, x)
    if np.any(z <= 0):
        raise KinkDomainError("derivative requested outside {1 + <x, xi> > 0}")
    n = mi_order(alpha)
    xi_pow = float(np.prod(a.direction ** np.asarray(alpha, dtype=float)))
    return a.coeff * falling_factorial(a.s, n) * xi_pow * z ** (a.s - n)


def atom_sup_derivative_bound(a: Atom, alpha: MultiIndex, r: float) -> float:
    """Exact sup of |D^alpha atom| over the closed ball of radius r.

    On that ball 1 + <x, xi> ranges over [1 - r|xi|, 1 + r|xi|]. The power
    s - |alpha| is positive only for alpha = 0, so the maximum sits at the
    upper end there and at the lower end otherwise.
    """
    rx = r * a.norm
    if rx >= 1:
        raise KinkDomainError(f"r*|xi| = {rx} >= 1: the ball reaches the kink")
    n = mi_order(alpha)
    xi_pow = float(np.prod(a.direction ** np.asarray(alpha, dtype=float)))
    if xi_pow == 0.0 or a.coeff == 0.0:
        return 0.0
    m = (1 + rx) ** a.s if n == 0 else (1 - rx) ** (a.s - n)
    return abs(a.coeff) * abs(falling_factorial(a.s, n)) * abs(xi_pow) * m


def atom_rescale(a: Atom, r: float) -> Atom:
    """Atom with direction r*xi, so that out(x) == a(r x)."""
    if not r > 0:
        raise ValueError("scale must be positive")
    return Atom(a.coeff, tuple(r * np.asarray(a.xi)), a.s)


class AtomSum:
    """Finite linear combination of atoms sharing the exponent s."""

    def __init__(self, atoms: Iterable[Atom] = (), s: float | None = None, d: int | None = None):
        self.atoms = tuple(atoms)
        if self.atoms:
            svals = {a.s for a in self.atoms}
            dvals = {a.d for a in self.atoms}
            if len(svals) != 1 or len(dvals) != 1:
                raise ValueError("atoms in a sum must share s and dimension")
            s = self.atoms[0].s if s is None else s
            d = self.atoms[0].d if d is None else d
        self.s = s
        self.d = d

    def __len__(self):
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    def __eq__(self, other):
        return isinstance(other, AtomSum) and self.atoms == other.atoms

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([a.coeff for a in self.atoms])

    @property
    def directions(self) -> np.ndarray:
        if not self.atoms:
            return np.zeros((0, self.d or 0))
        return np.array([a.xi for a in self.atoms])

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not self.atoms:
            return np.zeros(X.shape[0])
        Z = np.maximum(0.0, 1.0 + X @ self.directions.T)
        return (Z**self.s) @ self.coefficients

    def derivative(self, alpha: MultiIndex, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not self.atoms:
            return np.zeros(X.shape[0])
        Z = 1.0 + X @ self.directions.T
        if np.any(Z <= 0):
            raise KinkDomainError("an atom's dead zone meets the evaluation points")
        n = mi_order(alpha)
        xi_pow = np.prod(self.directions ** np.asarray(alpha, dtype=float), axis=1)
        w = self.coefficients * xi_pow * falling_factorial(self.s, n)
        return (Z ** (self.s - n)) @ w

    def scaled(self, factor: float) -> "AtomSum":
        return AtomSum([Atom(factor * a.coeff, a.xi, a.s) for a in self.atoms], self.s, self.d)

    def merged(self) -> "AtomSum":
        """Combine atoms with identical directions, keeping first-seen order."""
        acc: dict[tuple, float] = {}
        for a in self.atoms:
            acc[a.xi] = acc.get(a.xi, 0.0) + a.coeff
        return AtomSum([Atom(c, xi, self.s) for xi, c in acc.items()], self.s, self.d)

    def to_list(self) -> list[dict]:
        return [a.to_dict() for a in self.atoms]

    def to_json(self) -> str:
        return json.dumps(self.to_list())

    @classmethod
    def from_list(cls, items: Sequence[dict]) -> "AtomSum":
        return cls([Atom(it["coeff"], tuple(it["xi"]), it["s"]) for it in items])

    @classmethod
    def from_json(cls, text: str) -> "AtomSum":
        return cls.from_list(json.loads(text))

    def __repr__(self):
        return f"AtomSum(n_atoms={len(self.atoms)}, s={self.s}, d={self.d})"
