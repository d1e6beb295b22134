"""Fractional p-Laplacian toolkit: principal-value quadrature, p-harmonic
atoms (1 + <x, xi>)_+^s, jet matching, and C^k approximation on the unit
ball by combinations of those atoms."""

from .approximation import (
    ApproxConfig,
    ApproximationReport,
    MonomialSurrogate,
    PolynomialTarget,
    Target,
    approximate,
    builtin_target,
    c_gamma_bound,
    choose_scale,
    fit_polynomial,
    measure_ck_error,
    monomial_surrogate,
    polynomial_target,
    rescale_surrogate,
    ridge_target,
)
from .blocks import Atom, AtomSum, KinkDomainError, atom_derivative, atom_eval, reflect, sigma, w1, wd
from .core import EvalGrid, Params, Tolerances, ck_grid_norm, enumerate_multiindices, make_grid
from .estimators import PHarmonicApproximator
from .jets import Jet, JetMatch, build_jet_system, default_directions, solve_jet, verify_jet_fd
from .quadrature import (
    PVResult,
    QuadratureSpec,
    Ridge,
    frac_p_laplacian_1d,
    frac_p_laplacian_nd,
    harmonicity_residual,
    lemma1_rhs,
    lemma2_limit_check,
    lemma3_terms,
)

__version__ = "0.1.0"

__all__ = [
    "ApproxConfig",
    "ApproximationReport",
    "MonomialSurrogate",
    "PolynomialTarget",
    "Target",
    "approximate",
    "builtin_target",
    "c_gamma_bound",
    "choose_scale",
    "fit_polynomial",
    "measure_ck_error",
    "monomial_surrogate",
    "polynomial_target",
    "rescale_surrogate",
    "ridge_target",
    "PVResult",
    "QuadratureSpec",
    "Ridge",
    "frac_p_laplacian_1d",
    "frac_p_laplacian_nd",
    "harmonicity_residual",
    "lemma1_rhs",
    "lemma2_limit_check",
    "lemma3_terms",
    "Atom",
    "AtomSum",
    "KinkDomainError",
    "atom_derivative",
    "atom_eval",
    "reflect",
    "sigma",
    "w1",
    "wd",
    "EvalGrid",
    "Params",
    "Tolerances",
    "ck_grid_norm",
    "enumerate_multiindices",
    "make_grid",
    "PHarmonicApproximator",
    "Jet",
    "JetMatch",
    "build_jet_system",
    "default_directions",
    "solve_jet",
    "verify_jet_fd",
]
