"""C^k approximation of a target on the unit ball by combinations of atoms.

Pipeline: fit a polynomial sum_i c_i x^gamma_i to f in the C^k sense; for
each monomial build an atom sum v_i whose jet at 0 equals that of x^gamma_i
up to order k + |gamma_i|; bound the Taylor remainder by c(gamma_i); shrink
every surrogate by a common scale r so the remainders fit in eps/2; add up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .blocks import Atom, AtomSum, atom_rescale, atom_sup_derivative_bound
from .core import (
    EvalGrid,
    MultiIndex,
    Params,
    ck_grid_norm,
    enumerate_multiindices,
    make_grid,
    mi_factorial,
    mi_order,
    monomial,
    monomial_derivative,
    multiindices_of_order,
    n_multiindices,
)
from .jets import Jet, JetError, JetMatch, build_jet_system, default_directions, fd_derivative, solve_jet
from .quadrature import QuadratureSpec, harmonicity_residual

MAX_FIT_CONDITION = 1e12
TERM_RTOL = 1e-10
SCALE_FLOOR = 1e-8
ROUNDING_FACTOR = 4 * float(np.finfo(float).eps)


class IllConditionedFitError(RuntimeError):
    pass


class PolynomialBudgetError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# targets


@dataclass
class Target:
    """A function on R^d with optional analytic derivatives.

    ``fn`` maps an (n, d) array to n values. ``derivative(alpha, X)`` returns
    D^alpha f on the rows of X; when absent, central differences are used.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    d: int
    derivative: Optional[Callable[[MultiIndex, np.ndarray], np.ndarray]] = None
    name: str = "custom"

    def __call__(self, X):
        return np.asarray(self.fn(np.atleast_2d(X)), dtype=float)

    def derivatives(self, alpha: MultiIndex, X, step: float = 1e-4) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if mi_order(alpha) == 0:
            return self(X)
        if self.derivative is not None:
            return np.asarray(self.derivative(alpha, X), dtype=float)
        return np.array([fd_derivative(self, alpha, step, center=x) for x in X])


@dataclass
class PolynomialTarget:
    terms: list  # [(coeff, gamma)]
    d: int

    def __post_init__(self):
        merged: Dict[MultiIndex, float] = {}
        for c, g in self.terms:
            g = tuple(int(v) for v in g)
            if len(g) != self.d:
                raise ValueError(f"exponent {g} does not have {self.d} entries")
            merged[g] = merged.get(g, 0.0) + float(c)
        order = {a: i for i, a in enumerate(enumerate_multiindices(self.d, max([sum(g) for g in merged] or [0])))}
        self.terms = [(c, g) for g, c in sorted(merged.items(), key=lambda kv: order[kv[0]]) if c != 0.0]

    def __len__(self):
        return len(self.terms)

    def __call__(self, X):
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0])
        for c, g in self.terms:
            out += c * monomial(X, g)
        return out

    def derivative(self, alpha: MultiIndex, X) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0])
        for c, g in self.terms:
            out += c * monomial_derivative(X, g, alpha)
        return out

    def as_target(self, name: str = "polynomial") -> Target:
        return Target(self, self.d, self.derivative, name)

    def to_list(self) -> list:
        return [{"coeff": c, "gamma": list(g)} for c, g in self.terms]


def polynomial_target(terms: Sequence, d: int, name: str = "polynomial") -> Target:
    return PolynomialTarget(list(terms), d).as_target(name)


def _unit(d, i):
    e = [0] * d
    e[i] = 1
    return tuple(e)


def _exp_x1(d: int) -> Target:
    def fn(X):
        return np.exp(X[:, 0])

    def der(alpha, X):
        if any(alpha[1:]):
            return np.zeros(X.shape[0])
        return np.exp(X[:, 0])

    return Target(fn, d, der, "exp(x1)")


def ridge_target(eta, s: float) -> Target:
    """(1 + <x, eta>)^s, itself a single atom; |eta| < 1 keeps it smooth on the ball."""
    eta = np.asarray(eta, dtype=float)
    atom = AtomSum([Atom(1.0, tuple(eta), s)])
    return Target(atom, eta.size, atom.derivative, f"ridge{tuple(eta.tolist())}")


def builtin_target(name: str, d: int) -> Target:
    """Named targets: '1', 'x1', 'x1^2', 'x1^2+x2', 'exp(x1)'."""
    key = name.replace(" ", "").replace("**", "^")
    if key in ("1", "one", "const"):
        return polynomial_target([(1.0, (0,) * d)], d, "1")
    if key == "x1":
        return polynomial_target([(1.0, _unit(d, 0))], d, "x1")
    if key == "x1^2":
        return polynomial_target([(1.0, tuple(2 * v for v in _unit(d, 0)))], d, "x1^2")
    if key == "x1^2+x2":
        if d < 2:
            raise ValueError("target x1^2+x2 needs d >= 2")
        return polynomial_target([(1.0, tuple(2 * v for v in _unit(d, 0))), (1.0, _unit(d, 1))], d, "x1^2+x2")
    if key in ("exp(x1)", "exp"):
        return _exp_x1(d)
    raise KeyError(f"unknown target {name!r}")


# --------------------------------------------------------------------------
# polynomial fit


@dataclass
class PolynomialFit:
    polynomial: PolynomialTarget
    fit_error: float
    degree: int
    condition: float


def fit_polynomial(target: Target, degree: int, k: int, grid: EvalGrid, fd_step: float = 1e-4) -> PolynomialFit:
    """Least-squares fit of all derivatives of order <= k at once.

    Rows stack D^alpha x^beta against D^alpha f for every |alpha| <= k and
    every grid point, so the fit is C^k- rather than C^0-close.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    d = grid.d
    X = grid.points
    basis = enumerate_multiindices(d, degree)
    alphas = enumerate_multiindices(d, k)
    f_tab = {a: target.derivatives(a, X, fd_step) for a in alphas}
    A = np.vstack([np.column_stack([monomial_derivative(X, b, a) for b in basis]) for a in alphas])
    rhs = np.concatenate([f_tab[a] for a in alphas])

    sv = np.linalg.svd(A, compute_uv=False)
    live = sv[sv > 1e-14 * sv[0]] if sv.size and sv[0] > 0 else sv
    cond = float(sv[0] / sv[-1]) if sv.size and sv[-1] > 0 else math.inf
    if cond > MAX_FIT_CONDITION:
        raise IllConditionedFitError(
            f"degree-{degree} basis is ill-conditioned on this grid (condition {cond:.3g}, "
            f"{len(live)}/{len(basis)} significant directions)"
        )
    coef, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    scale = max(1.0, float(np.max(np.abs(coef)))) if coef.size else 1.0
    terms = [(float(c), b) for c, b in zip(coef, basis) if abs(c) > TERM_RTOL * scale]
    poly = PolynomialTarget(terms, d)
    err = ck_grid_norm({a: f_tab[a] - poly.derivative(a, X) for a in alphas}, k, d)
    return PolynomialFit(poly, err, degree, cond)


# --------------------------------------------------------------------------
# per-monomial surrogates


@dataclass
class MonomialSurrogate:
    gamma: MultiIndex
    k: int
    match: JetMatch
    base_atoms: AtomSum
    scale: float = 1.0
    atoms: Optional[AtomSum] = None
    c_bound: Optional[float] = None
    g_norm_bound: Optional[float] = None

    def __post_init__(self):
        if self.atoms is None:
            self.atoms = self.base_atoms

    @property
    def jet_order(self) -> int:
        return self.k + mi_order(self.gamma)

    def to_dict(self) -> dict:
        return {
            "gamma": list(self.gamma),
            "jet_order": self.jet_order,
            "n_atoms": len(self.base_atoms),
            "jet_residual": self.match.residual,
            "condition": self.match.condition,
            "c_bound": self.c_bound,
            "scale": self.scale,
            "g_norm_bound": self.g_norm_bound,
        }


SHRINK_GRID = tuple(round(1.0 - 0.05 * i, 2) for i in range(17))  # 1.0 down to 0.2


def _surrogate_at(gamma, k, params, dirs, tol):
    m = k + mi_order(gamma)
    match = solve_jet(build_jet_system(dirs, params.s, m), Jet.canonical(gamma, m), tol)
    sur = MonomialSurrogate(gamma, k, match, match.atoms())
    sur.c_bound = c_gamma_bound(sur, k)
    return sur


def monomial_surrogate(gamma: Sequence[int], k: int, params: Params, budget: Optional[int] = None,
                       seed: int = 0, tol: float = 1e-8, shrink="auto") -> MonomialSurrogate:
    """Atom sum whose jet of order k + |gamma| at 0 is that of x^gamma.

    The default directions are multiplied by ``shrink``. With ``"auto"`` the
    factor is picked from SHRINK_GRID to minimize c(gamma): directions near
    the unit sphere inflate the high derivatives in the remainder bound,
    directions near 0 inflate the coefficients.
    """
    gamma = tuple(int(g) for g in gamma)
    if len(gamma) != params.d:
        raise ValueError("gamma has the wrong dimension")
    m = k + mi_order(gamma)
    dirs = default_directions(params.d, m, budget, seed)
    if shrink != "auto":
        return _surrogate_at(gamma, k, params, float(shrink) * dirs, tol)
    best, last_err = None, None
    for lam in SHRINK_GRID:
        try:
            sur = _surrogate_at(gamma, k, params, lam * dirs, tol)
        except JetError as exc:
            last_err = exc
            continue
        if best is None or sur.c_bound < best.c_bound:
            best = sur
    if best is None:
        raise last_err
    return best


def remainder_factor(gamma: Sequence[int]) -> float:
    """Sum of 1/beta! over |beta| = |gamma| + 1."""
    return sum(1.0 / mi_factorial(b) for b in multiindices_of_order(len(gamma), mi_order(gamma) + 1))


def c_gamma_bound(surrogate: MonomialSurrogate, k: int) -> float:
    """Taylor-remainder constant c(gamma) for the unscaled surrogate.

    (sum_{|beta|=|gamma|+1} 1/beta!) times the C^{k+|gamma|+1} norm of v over
    the closed unit ball, the norm bounded atom by atom in closed form.
    """
    atoms = surrogate.base_atoms
    if not len(atoms):
        return 0.0
    order = k + mi_order(surrogate.gamma) + 1
    norm = 0.0
    for alpha in enumerate_multiindices(atoms.d, order):
        norm += sum(atom_sup_derivative_bound(a, alpha, 1.0) for a in atoms)
    return remainder_factor(surrogate.gamma) * norm


def choose_scale(eps: float, target: PolynomialTarget, c_bounds: Sequence[float]) -> float:
    """Common shrink factor min(1, (eps/2) / sum_i |c_i| c(gamma_i))."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if any(c < 0 for c in c_bounds):
        raise ValueError("c bounds must be nonnegative")
    total = sum(abs(c) * b for (c, _), b in zip(target.terms, c_bounds))
    if total == 0:
        return 1.0
    return min(1.0, 0.5 * eps / total)


def rescale_surrogate(surrogate: MonomialSurrogate, scale: float) -> MonomialSurrogate:
    """x -> v(r x) / r^|gamma|, realized on the atoms as (a/r^|gamma|, r xi)."""
    if not 0 < scale <= 1:
        raise ValueError("scale must lie in (0, 1]")
    factor = scale ** (-mi_order(surrogate.gamma))
    atoms = AtomSum(
        [Atom(a.coeff * factor, atom_rescale(a, scale).xi, a.s) for a in surrogate.base_atoms],
        surrogate.base_atoms.s,
        surrogate.base_atoms.d,
    )
    g_bound = None if surrogate.c_bound is None else surrogate.c_bound * scale
    return MonomialSurrogate(surrogate.gamma, surrogate.k, surrogate.match, surrogate.base_atoms, scale, atoms,
                             surrogate.c_bound, g_bound)


# --------------------------------------------------------------------------
# error measurement


def difference_table(target: Target, u: AtomSum, k: int, grid: EvalGrid, fd_step: float = 1e-4):
    X = grid.points
    return {a: target.derivatives(a, X, fd_step) - u.derivative(a, X) for a in enumerate_multiindices(grid.d, k)}


def measure_ck_error(target, u: AtomSum, k: int, grid: EvalGrid, fd_step: float = 1e-4) -> float:
    """Grid estimate of ||f - u||_{C^k}; atom derivatives are analytic."""
    if not isinstance(target, Target):
        target = Target(target, grid.d, None)
    return ck_grid_norm(difference_table(target, u, k, grid, fd_step), k, grid.d)


def remainder_norm(surrogate: MonomialSurrogate, k: int, grid: EvalGrid) -> float:
    """Grid C^k norm of g = v_scaled - x^gamma."""
    X = grid.points
    table = {
        a: surrogate.atoms.derivative(a, X) - monomial_derivative(X, surrogate.gamma, a)
        for a in enumerate_multiindices(grid.d, k)
    }
    return ck_grid_norm(table, k, grid.d)


# --------------------------------------------------------------------------
# end to end


@dataclass
class ApproxConfig:
    max_degree: int = 10
    resolution: Optional[int] = None
    budget_factor: int = 2
    seed: int = 0
    jet_tol: float = 1e-8
    fd_step: float = 1e-4
    harmonicity_points: int = 5
    harmonicity_method: str = "reduced"
    check_harmonicity: bool = True
    shrink: object = "auto"

    def grid_resolution(self, d: int) -> int:
        if self.resolution is not None:
            return self.resolution
        return {1: 2001, 2: 61, 3: 21}.get(d, 9)

    def to_dict(self) -> dict:
        return asdict(self)


def harmonicity_points(d: int, n: int, seed: int, radius: float = 0.95) -> np.ndarray:
    """n seeded points drawn uniformly from the ball of the given radius."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / d)
    return g * r[:, None]


@dataclass
class ApproximationReport:
    target: str
    k: int
    eps: float
    params: Params
    config: ApproxConfig
    fit: PolynomialFit
    surrogates: list
    scale: float
    atoms: AtomSum
    measured_ck_error: float
    grid: dict
    harmonicity: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    rounding_floor: float = 0.0

    @property
    def success(self) -> bool:
        return self.measured_ck_error < self.eps

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "k": self.k,
            "eps": self.eps,
            "params": self.params.to_dict(),
            "config": self.config.to_dict(),
            "polynomial": {
                "degree": self.fit.degree,
                "terms": self.fit.polynomial.to_list(),
                "fit_error": self.fit.fit_error,
                "condition": self.fit.condition,
            },
            "surrogates": [s.to_dict() for s in self.surrogates],
            "scale": self.scale,
            "atoms": self.atoms.to_list(),
            "n_atoms": len(self.atoms),
            "measured_ck_error": self.measured_ck_error,
            "rounding_floor": self.rounding_floor,
            "success": self.success,
            "grid": self.grid,
            "harmonicity": self.harmonicity,
            "warnings": list(self.warnings),
        }


def fit_within(target: Target, k: int, budget: float, grid: EvalGrid, max_degree: int,
               fd_step: float = 1e-4) -> PolynomialFit:
    """Lowest-degree fit whose C^k grid error is below ``budget``."""
    best = None
    for degree in range(max_degree + 1):
        fit = fit_polynomial(target, degree, k, grid, fd_step)
        best = fit
        if fit.fit_error < budget:
            return fit
    raise PolynomialBudgetError(
        f"no polynomial of degree <= {max_degree} reaches C^{k} error {budget:.3g} "
        f"(best {best.fit_error:.3g})"
    )


def rounding_floor(u: AtomSum, k: int) -> float:
    """Float64 error scale of the C^k grid norm of an atom sum.

    A few ulps of every summand, i.e. 4 eps_mach times the sum over
    |alpha| <= k and over atoms of sup_{B_1} |D^alpha atom|. The rescaled
    surrogates cancel huge coefficients down to O(1) values, so this is the
    precision floor of the measured error.
    """
    if not len(u):
        return 0.0
    total = 0.0
    for alpha in enumerate_multiindices(u.d, k):
        total += sum(atom_sup_derivative_bound(a, alpha, 1.0) for a in u)
    return ROUNDING_FACTOR * total


def assemble(coeffs: Sequence[float], surrogates: Sequence[MonomialSurrogate], s: float, d: int) -> AtomSum:
    atoms = []
    for c, sur in zip(coeffs, surrogates):
        atoms.extend(Atom(c * a.coeff, a.xi, s) for a in sur.atoms)
    return AtomSum(atoms, s, d).merged()


def approximate(target: Target, k: int, eps: float, params: Params, config: ApproxConfig | None = None,
                spec: QuadratureSpec | None = None) -> ApproximationReport:
    """Build u in span{H_xi : |xi| < 1} with ||f - u||_{C^k(B_1)} < eps on the grid."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    config = config or ApproxConfig()
    d = params.d
    if target.d != d:
        raise ValueError("target dimension does not match params.d")
    grid = make_grid(d, config.grid_resolution(d))
    fit = fit_within(target, k, 0.5 * eps, grid, config.max_degree, config.fd_step)
    poly = fit.polynomial

    surrogates = []
    for _, gamma in poly.terms:
        m = k + mi_order(gamma)
        budget = config.budget_factor * n_multiindices(d, m)
        sur = monomial_surrogate(gamma, k, params, budget, config.seed, config.jet_tol, config.shrink)
        surrogates.append(sur)

    scale = choose_scale(eps, poly, [s_.c_bound for s_ in surrogates])
    warnings = []
    if scale < SCALE_FLOOR:
        warnings.append(f"scale underflow: r = {scale:.3g} < {SCALE_FLOOR:g}")
    surrogates = [rescale_surrogate(s_, scale) for s_ in surrogates]
    u = assemble([c for c, _ in poly.terms], surrogates, params.s, d)
    floor = rounding_floor(u, k)
    if floor > 0.1 * eps:
        warnings.append(f"float64 rounding floor {floor:.3g} is a sizeable part of eps")

    measured = measure_ck_error(target, u, k, grid, config.fd_step)

    harm = {}
    if config.check_harmonicity and len(u):
        pts = harmonicity_points(d, config.harmonicity_points, config.seed)
        gen = harmonicity_residual(u, pts, params, spec, config.harmonicity_method, normalize=True)
        weighted = harmonicity_residual(u, pts, params, spec, config.harmonicity_method)
        harm = {
            "method": config.harmonicity_method,
            "points": pts.tolist(),
            "max_residual": float(np.max(gen)),
            "per_atom": gen.tolist(),
            "max_weighted_residual": float(np.max(weighted)),
        }
    return ApproximationReport(
        target=target.name,
        k=k,
        eps=eps,
        params=params,
        config=config,
        fit=fit,
        surrogates=surrogates,
        scale=scale,
        atoms=u,
        measured_ck_error=measured,
        grid=grid.metadata(),
        harmonicity=harm,
        warnings=warnings,
        rounding_floor=floor,
    )


def pointwise_errors(report: ApproximationReport, target: Target) -> tuple[list[str], list[list[float]]]:
    """Header and rows of |D^alpha (f - u)| at every grid point, for CSV output."""
    d = report.params.d
    grid = make_grid(d, report.config.grid_resolution(d))
    table = difference_table(target, report.atoms, report.k, grid, report.config.fd_step)
    alphas = list(table)
    header = [f"x{i + 1}" for i in range(d)] + ["D" + "".join(map(str, a)) for a in alphas]
    rows = [list(map(float, x)) + [float(abs(table[a][i])) for a in alphas] for i, x in enumerate(grid.points)]
    return header, rows
