import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pharmonic.approximation import (
    ApproxConfig,
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
    pointwise_errors,
    polynomial_target,
    remainder_norm,
    rescale_surrogate,
    ridge_target,
)
from pharmonic.blocks import Atom, AtomSum, KinkDomainError
from pharmonic.core import Params, make_grid, mi_order
from pharmonic.jets import Jet, JetMatch, fd_derivative, verify_jet_fd


def _surrogate_from_atoms(atoms, gamma=(0, 0), k=0):
    match = JetMatch(atoms.coefficients, atoms.directions, 0.0, 1.0, atoms.s)
    return MonomialSurrogate(gamma, k, match, atoms)


# ---------------------------------------------------------------- fitting


def test_fit_reproduces_a_polynomial():
    fit = fit_polynomial(builtin_target("x1^2", 2), 2, 1, make_grid(2, 21))
    assert fit.polynomial.terms == [(pytest.approx(1.0, abs=1e-12), (2, 0))]
    assert fit.fit_error < 1e-12


def test_fit_of_zero_is_empty():
    zero = Target(lambda X: np.zeros(len(X)), 2, lambda a, X: np.zeros(len(X)))
    fit = fit_polynomial(zero, 3, 1, make_grid(2, 15))
    assert fit.polynomial.terms == [] and fit.fit_error == 0.0


def test_fit_of_exponential():
    fit = fit_polynomial(builtin_target("exp(x1)", 1), 6, 1, make_grid(1, 2001))
    assert fit.fit_error < 1e-3


def test_fit_with_finite_difference_derivatives():
    f = Target(lambda X: np.sin(X[:, 0]), 1)  # no analytic derivatives supplied
    g = Target(lambda X: np.sin(X[:, 0]), 1, lambda a, X: np.sin(X[:, 0] + a[0] * np.pi / 2))
    grid = make_grid(1, 101)
    assert fit_polynomial(f, 5, 1, grid).fit_error == pytest.approx(fit_polynomial(g, 5, 1, grid).fit_error, abs=1e-7)


def test_polynomial_target_merges_terms():
    poly = PolynomialTarget([(1.0, (1, 0)), (2.0, (1, 0)), (-1.0, (0, 0))], 2)
    assert poly.terms == [(-1.0, (0, 0)), (3.0, (1, 0))]


# ---------------------------------------------------------------- surrogates


def test_constant_surrogate():
    sur = monomial_surrogate((0, 0), 0, Params(0.5, 2, 2))
    assert sur.match.residual < 1e-10
    assert sur.base_atoms(np.zeros((1, 2)))[0] == pytest.approx(1.0, abs=1e-10)


def test_linear_surrogate():
    sur = monomial_surrogate((1, 0), 1, Params(0.5, 2, 2))
    assert sur.match.residual < 1e-8
    assert verify_jet_fd(sur.base_atoms, Jet.canonical((1, 0), 2)) < 1e-4


def test_quadratic_surrogate_second_derivative():
    sur = monomial_surrogate((2, 0), 0, Params(0.5, 2, 2))
    assert sur.jet_order == 2
    assert fd_derivative(sur.base_atoms, (2, 0)) == pytest.approx(2.0, abs=1e-6)


def test_c_gamma_examples():
    one = AtomSum([Atom(1.0, (0.5, 0.0), 0.5)])
    assert c_gamma_bound(_surrogate_from_atoms(one), 0) == pytest.approx(2 * (1.5**0.5 + 0.5**0.5 / 2), rel=1e-12)
    assert c_gamma_bound(_surrogate_from_atoms(AtomSum([], 0.5, 2)), 0) == 0.0
    two = one.scaled(2.0)
    assert c_gamma_bound(_surrogate_from_atoms(two), 1) == pytest.approx(2 * c_gamma_bound(_surrogate_from_atoms(one), 1))


def test_choose_scale_examples():
    poly = PolynomialTarget([(1.0, (1,))], 1)
    assert choose_scale(0.1, poly, [10.0]) == pytest.approx(0.005)
    assert choose_scale(0.1, poly, [0.0]) == 1.0
    assert choose_scale(1e9, poly, [10.0]) == 1.0


def test_rescale_example():
    sur = _surrogate_from_atoms(AtomSum([Atom(2.0, (0.5, 0.0), 0.5)]), gamma=(1, 0))
    sur.c_bound = 3.0
    out = rescale_surrogate(sur, 0.5)
    assert out.atoms.atoms == (Atom(4.0, (0.25, 0.0), 0.5),)
    assert out.g_norm_bound == pytest.approx(1.5)
    same = rescale_surrogate(sur, 1.0)
    assert same.atoms == sur.base_atoms


@settings(max_examples=20)
@given(st.sampled_from([(0, 0), (1, 0), (0, 1), (2, 0), (1, 1)]), st.floats(0.01, 1.0), st.floats(0.1, 0.9))
def test_rescaling_is_exact(gamma, r, s):
    sur = monomial_surrogate(gamma, 0, Params(s, 2, 2))
    out = rescale_surrogate(sur, r)
    X = np.random.default_rng(3).uniform(-0.6, 0.6, (6, 2))
    want = r ** (-mi_order(gamma)) * sur.base_atoms(r * X)
    # "to rounding": relative to the size of the summands, not of the sum
    scale = np.sum(np.abs(out.atoms.coefficients)) * 2.0**s
    assert np.max(np.abs(out.atoms(X) - want)) <= 1e-14 * scale


@settings(max_examples=15)
@given(st.sampled_from([(0,), (1,), (2,)]), st.integers(0, 1), st.floats(0.1, 0.9), st.floats(1e-3, 1.0))
def test_remainder_bound_is_sound(gamma, k, s, r):
    sur = monomial_surrogate(gamma, k, Params(s, 2, 1))
    out = rescale_surrogate(sur, r)
    assert remainder_norm(out, k, make_grid(1, 1001)) <= out.g_norm_bound


# ---------------------------------------------------------------- errors


def test_measure_examples():
    grid = make_grid(2, 21)
    atom = AtomSum([Atom(1.3, (0.2, -0.4), 0.5)])
    assert measure_ck_error(ridge_target((0.2, -0.4), 0.5).__class__(atom, 2, atom.derivative), atom, 2, grid) == 0
    shifted = Target(lambda X: atom(X) + 0.25, 2, lambda a, X: atom.derivative(a, X))
    err = measure_ck_error(shifted, atom, 0, grid)
    assert err <= 0.25 * (1 + 1e-15) and err == pytest.approx(0.25, abs=1e-12)


def test_measure_refuses_kinks_on_the_grid():
    bad = AtomSum([Atom(1.0, (1.5, 0.0), 0.5)])
    with pytest.raises(KinkDomainError):
        measure_ck_error(builtin_target("1", 2), bad, 1, make_grid(2, 11))


# ---------------------------------------------------------------- end to end


@pytest.mark.xfail(strict=True, reason="the bound-driven scale leaves an O(r) error, about 1.6e-5 here")
def test_constant_target_to_1e8():
    rep = approximate(builtin_target("1", 1), 0, 0.1, Params(0.5, 2, 1))
    assert rep.measured_ck_error < 1e-8


def test_constant_target_within_eps():
    rep = approximate(builtin_target("1", 1), 0, 0.1, Params(0.5, 2, 1))
    assert rep.success and rep.measured_ck_error < 1e-4


def test_linear_target_in_the_plane():
    rep = approximate(builtin_target("x1", 2), 0, 0.1, Params(0.5, 2, 2))
    assert rep.measured_ck_error < 0.1


def test_mixed_target_certificate():
    rep = approximate(builtin_target("x1^2+x2", 2), 1, 0.5, Params(0.5, 3, 2))
    assert rep.measured_ck_error < 0.5
    assert np.all(np.linalg.norm(rep.atoms.directions, axis=1) < 1)
    assert max(rep.harmonicity["per_atom"]) < 1e-4


@pytest.mark.parametrize("name,d,k,eps", [("exp(x1)", 1, 1, 0.1), ("x1^2+x2", 2, 1, 0.1), ("exp(x1)", 1, 0, 0.1)])
def test_triangle_audit(name, d, k, eps):
    target = builtin_target(name, d)
    rep = approximate(target, k, eps, Params(0.5, 2, d))
    grid = make_grid(d, rep.config.grid_resolution(d))
    parts = sum(abs(c) * remainder_norm(sur, k, grid) for (c, _), sur in zip(rep.fit.polynomial.terms, rep.surrogates))
    # exact arithmetic gives the first two terms; the floor covers float64
    assert rep.measured_ck_error <= rep.fit.fit_error + parts + rep.rounding_floor
    for sur in rep.surrogates:
        assert remainder_norm(sur, k, grid) <= sur.g_norm_bound


def test_report_is_deterministic_and_reproducible():
    target = builtin_target("x1^2", 1)
    a = approximate(target, 1, 0.1, Params(0.25, 1.5, 1))
    b = approximate(target, 1, 0.1, Params(0.25, 1.5, 1))
    assert a.to_dict() == b.to_dict()
    # the error follows from the atoms, the target and the grid alone
    atoms = AtomSum.from_list(a.to_dict()["atoms"])
    grid = make_grid(1, a.config.grid_resolution(1))
    assert measure_ck_error(target, atoms, 1, grid) == a.measured_ck_error


def test_pointwise_csv_rows():
    target = builtin_target("x1", 1)
    rep = approximate(target, 1, 0.5, Params(0.5, 2, 1), ApproxConfig(resolution=51))
    header, rows = pointwise_errors(rep, target)
    assert header == ["x1", "D0", "D1"]
    assert len(rows) == 51
    assert max(max(r[1:]) for r in rows) <= rep.measured_ck_error


def test_polynomial_target_from_terms():
    t = polynomial_target([(2.0, (1, 1)), (-1.0, (0, 2))], 2)
    X = np.array([[0.5, -0.2]])
    assert t(X)[0] == pytest.approx(2 * 0.5 * -0.2 - 0.04)
    assert t.derivatives((1, 1), X)[0] == pytest.approx(2.0)


def test_unknown_builtin():
    with pytest.raises(KeyError):
        builtin_target("sin", 1)
