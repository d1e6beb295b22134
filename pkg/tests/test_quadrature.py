import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pharmonic.blocks import Atom, AtomSum, KinkDomainError
from pharmonic.core import Params, beta, sphere_measure
from pharmonic.quadrature import (
    GrowthError,
    PVConvergenceError,
    QuadratureSpec,
    Ridge,
    atom_residual,
    frac_p_laplacian_1d,
    frac_p_laplacian_nd,
    harmonicity_residual,
    lemma1_constant,
    lemma1_rhs,
    lemma2_limit_check,
    lemma2_quotient,
    lemma2_target,
    lemma3_terms,
    w1_minus_one_closed_form,
    w1_value,
)

W1 = lambda s: Ridge(1.0, 0.0, (1.0,), s)  # noqa: E731
W2 = lambda s: Ridge(1.0, 0.0, (0.0, 1.0), s)  # noqa: E731


def brute_force_1d(u, x, s, p, eps=1e-6, R=1e6, n=400_001):
    """Plain trapezoid on a log grid of the paired integrand; no extrapolation."""
    y = np.geomspace(eps, R, n)
    phi = lambda t: np.abs(t) ** (p - 2) * t  # noqa: E731
    ux = u(x)
    f = (phi(ux - u(x + y)) + phi(ux - u(x - y))) / y ** (1 + s * p)
    return float(np.trapezoid(f * y, np.log(y))) if hasattr(np, "trapezoid") else float(np.trapz(f * y, np.log(y)))


def test_constant_function_is_exactly_zero():
    res = frac_p_laplacian_1d(lambda t: 5.0, 0.3, Params(0.5, 2))
    assert res.value == 0.0 and res.converged


def test_w1_at_one_vanishes_within_estimate():
    res = W1(0.5).laplacian(1.0, Params(0.5, 3))
    assert res.converged
    assert abs(res.value) <= res.error_estimate


def test_w1_at_two_vanishes_against_brute_force():
    s, p = 0.5, 2.0
    res = W1(s).laplacian(2.0, Params(s, p))
    assert abs(res.value) <= res.error_estimate
    oracle = brute_force_1d(lambda t: np.maximum(t, 0.0) ** s, 2.0, s, p)
    # truncation at eps and R bounds the oracle's own error by a few 1e-3
    assert abs(oracle) < 5e-3


@pytest.mark.parametrize("s,p", [(0.25, 1.5), (0.5, 2.0), (0.75, 3.0), (0.5, 4.0)])
def test_w1_at_minus_one_matches_beta_closed_form(s, p):
    res = w1_value(-1.0, s, p)
    assert res.value == pytest.approx(w1_minus_one_closed_form(s, p), rel=1e-10)
    assert w1_minus_one_closed_form(s, p) == -beta(s, s * (p - 1) + 1)


def test_brute_force_agrees_on_a_nonzero_value():
    s, p = 0.5, 2.0
    oracle = brute_force_1d(lambda t: np.maximum(t, 0.0) ** s, -1.0, s, p)
    assert oracle == pytest.approx(w1_minus_one_closed_form(s, p), rel=5e-3)


def test_growth_declaration_checks():
    with pytest.raises(GrowthError):
        frac_p_laplacian_1d(lambda t: t * t, 0.0, Params(0.5, 2), growth=(1.0, 2.0))
    with pytest.raises(GrowthError):
        # declared bounded, but grows like |t|^0.5
        frac_p_laplacian_1d(lambda t: abs(t) ** 0.5, 0.0, Params(0.5, 2), growth=(1.0, 0.0))


def test_nonexistent_principal_value_is_flagged():
    # |t|^0.2 is not regular enough at 0 for sp = 1.5; the cutoff sequence diverges
    u = lambda t: abs(t) ** 0.2  # noqa: E731
    res = frac_p_laplacian_1d(u, 0.0, Params(0.75, 2), QuadratureSpec(kink_points=(0.0,)), growth=(1.0, 0.2))
    assert not res.converged
    with pytest.raises(PVConvergenceError):
        frac_p_laplacian_1d(u, 0.0, Params(0.75, 2), QuadratureSpec(kink_points=(0.0,)), growth=(1.0, 0.2),
                            strict=True)


def test_quadrature_spec_validation_and_roundtrip():
    spec = QuadratureSpec(tail_radius=500.0, n_angles=32)
    assert QuadratureSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        QuadratureSpec.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        QuadratureSpec(pv_epsilons=(1e-2, 1e-2, 1e-3))
    with pytest.raises(ValueError):
        QuadratureSpec(pv_epsilons=(1e-2, 1e-3))


# ---------------------------------------------------------------- d = 2, 3


def test_nd_zero_function():
    res = frac_p_laplacian_nd(lambda z: 0.0, np.array([0.2, 0.1]), Params(0.5, 2, 2))
    assert res.value == 0.0


def test_wd_above_the_plane_vanishes():
    res = W2(0.5).laplacian(np.array([0.3, 0.7]), Params(0.5, 2, 2))
    assert abs(res.value) <= max(res.error_estimate, 1e-12)


def test_wd_below_the_plane_matches_reduction():
    params = Params(0.5, 2, 2)
    x = np.array([0.3, -0.5])
    lhs = W2(0.5).laplacian(x, params)
    rhs = lemma1_rhs(x, params)
    assert lhs.value == pytest.approx(rhs.value, rel=1e-3)


def test_reduction_in_three_dimensions():
    params = Params(0.5, 2, 3)
    x = np.array([0.1, 0.2, -0.8])
    lhs = Ridge(1.0, 0.0, (0.0, 0.0, 1.0), 0.5).laplacian(x, params)
    assert lhs.value == pytest.approx(lemma1_rhs(x, params).value, rel=1e-3)


def test_lemma1_prefactors():
    assert lemma1_constant(Params(0.5, 2, 2)) == pytest.approx(2.0)
    assert lemma1_constant(Params(0.5, 2, 3)) == pytest.approx(math.pi)
    v_minus = w1_value(-1.0, 0.5, 2.0).value
    assert lemma1_rhs(np.array([0.4, -1.0]), Params(0.5, 2, 2)).value == pytest.approx(2 * v_minus)
    assert lemma1_rhs(np.array([0.0, 0.0, -1.0]), Params(0.5, 2, 3)).value == pytest.approx(math.pi * v_minus)
    assert abs(lemma1_rhs(np.array([0.4, 2.0]), Params(0.5, 2, 2)).value) < 1e-12
    # the generic constant formula
    p = Params(0.3, 2.5, 4)
    assert lemma1_constant(p) == pytest.approx(sphere_measure(3) / 2 * beta(1.5, (0.75 + 1) / 2))


def test_lemma1_rhs_refuses_the_plane():
    with pytest.raises(ValueError):
        lemma1_rhs(np.array([0.4, 0.0]), Params(0.5, 2, 2))


# ---------------------------------------------------------------- lemmas 2, 3


@pytest.mark.parametrize("s,p,want", [(0.5, 2, 0.25), (0.5, 3, 0.25), (0.25, 1.5, 0.1875)])
def test_quotient_limit(s, p, want):
    assert lemma2_target(s, p) == pytest.approx(want)
    assert lemma2_quotient(1e-6, s, p) == pytest.approx(want, rel=1e-5)


def test_quotient_at_p_one_is_zero():
    assert all(lemma2_quotient(e, 0.75, 1) == 0.0 for e in (0.5, 1e-3))
    rep = lemma2_limit_check(0.75, 1)
    assert rep["target"] == 0 and all(q == 0 for q in rep["quotients"])


@given(st.floats(0.05, 0.95), st.floats(1.1, 5.0), st.floats(1e-3, 0.5))
def test_quotient_matches_naive_formula_where_stable(s, p, e):
    naive = ((1 - (1 - e) ** s) ** (p - 1) - ((1 + e) ** s - 1) ** (p - 1)) / e**p
    assert lemma2_quotient(e, s, p) == pytest.approx(naive, rel=1e-7, abs=1e-9)


def test_limit_check_report():
    rep = lemma2_limit_check(0.5, 2, schedule=(1e-1, 1e-2, 1e-3, 1e-4))
    assert rep["final_relative_error"] < 1e-2 and rep["converged"]


@pytest.mark.parametrize("s,p", [(0.5, 2.0), (0.25, 4.0), (0.75, 1.5)])
def test_three_term_split(s, p):
    t = lemma3_terms(s, p)
    assert t.I1 == pytest.approx(1 / (s * p))
    assert abs(t.total) < 1e-6
    assert t.I2 == pytest.approx(t.I2_by_parts, rel=1e-9)


# ---------------------------------------------------------------- harmonicity


def test_single_atom_harmonic_at_random_points(rng):
    params = Params(0.5, 2, 2)
    g = rng.normal(size=(5, 2))
    pts = g / np.linalg.norm(g, axis=1, keepdims=True) * rng.uniform(0, 0.95, (5, 1))
    res = harmonicity_residual(Atom(1.0, (0.5, 0.0), 0.5), pts, params)
    assert np.all(res < 1e-5)


def test_reduced_and_direct_residuals_agree_in_size():
    params = Params(0.5, 3, 2)
    a = Atom(2.0, (0.4, -0.3), 0.5)
    x = np.array([0.2, 0.5])
    assert atom_residual(a, x, params, method="direct") < 1e-6
    assert atom_residual(a, x, params, method="reduced") < 1e-10


def test_residual_edge_cases():
    params = Params(0.5, 2, 2)
    assert harmonicity_residual(AtomSum([Atom(0.0, (0.5, 0.0), 0.5)]), np.zeros((1, 2)), params)[0] == 0.0
    xi = np.array([2.0, 0.0])
    with pytest.raises(KinkDomainError):
        harmonicity_residual(Atom(1.0, tuple(xi), 0.5), [-0.9 * xi / np.linalg.norm(xi)], params)


def test_normalized_residual_drops_the_coefficient():
    params = Params(0.5, 3, 1)
    a = Atom(1e6, (0.5,), 0.5)
    raw = harmonicity_residual(AtomSum([a]), [[0.1]], params)[0]
    unit = harmonicity_residual(AtomSum([a]), [[0.1]], params, normalize=True)[0]
    assert raw == pytest.approx(unit * 1e12)


# ---------------------------------------------------------------- invariants


def _profile(a, b, c):
    return lambda t: a * math.tanh(b * t + c)


@settings(max_examples=8)
@given(st.floats(0.5, 2), st.floats(0.5, 2), st.floats(-1, 1), st.sampled_from([(0.5, 2.0), (0.25, 3.0)]))
def test_odd_symmetry_is_exact(a, b, c, sp):
    s, p = sp
    u = _profile(a, b, c)
    plus = frac_p_laplacian_1d(u, 0.2, Params(s, p))
    minus = frac_p_laplacian_1d(lambda t: -u(t), 0.2, Params(s, p))
    assert minus.value == pytest.approx(-plus.value, rel=1e-12, abs=1e-15)


@settings(max_examples=8)
@given(st.floats(0.5, 2), st.floats(0.5, 2), st.floats(-1, 1), st.floats(0.3, 3))
def test_homogeneity_and_translation(a, b, c, lam):
    s, p = 0.5, 3.0
    u = _profile(a, b, c)
    base = frac_p_laplacian_1d(u, 0.2, Params(s, p))
    scaled = frac_p_laplacian_1d(lambda t: lam * u(t), 0.2, Params(s, p))
    tol = lam ** (p - 1) * base.error_estimate + scaled.error_estimate + 1e-12
    assert abs(scaled.value - lam ** (p - 1) * base.value) <= tol
    shifted = frac_p_laplacian_1d(lambda t: u(t + 0.7), -0.5, Params(s, p))
    assert abs(shifted.value - base.value) <= base.error_estimate + shifted.error_estimate + 1e-12


def test_ridge_scaling_law_in_x():
    # W_1(lam t) = lam^s W_1(t) makes the 1D value at x > 0 or x < 0 scale as |x|^(-s)
    s, p = 0.5, 2.0
    v1 = W1(s).laplacian(-1.0, Params(s, p)).value
    v4 = W1(s).laplacian(-4.0, Params(s, p)).value
    assert v4 == pytest.approx(v1 * 4 ** (-s), rel=1e-9)
