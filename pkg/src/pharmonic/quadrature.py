"""Principal-value quadrature for the fractional p-Laplacian.

The 1D operator at x is evaluated as

    int_0^inf [Phi_p(u(x) - u(x+y)) + Phi_p(u(x) - u(x-y))] / y^(1+sp) dy

with Phi_p(t) = |t|^(p-2) t. Pairing y with -y cancels the leading singular
parts before any cancellation in floating point can happen; what is left is
integrable at 0 and behaves like a power of y there. The integral over
[eps_j, inf) is computed for a decreasing cutoff schedule and the sequence is
extrapolated with Aitken's delta-squared process.

In d = 2, 3 the operator is written in polar coordinates as an integral over
a half-sphere of 1D paired radial integrals of the line profiles
t -> u(x + t w).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import IntegrationWarning, quad, trapezoid
from scipy.optimize import brentq

from .blocks import Atom, KinkDomainError
from .core import Params, beta, sphere_measure

DEFAULT_EPSILONS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7)
ZERO_DIFF = 1e-300


class PVConvergenceError(RuntimeError):
    pass


class GrowthError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    pv_epsilons: tuple = DEFAULT_EPSILONS
    tail_radius: float = 1e4
    kink_points: tuple = ()
    panel_tol: float = 1e-14
    max_subdivisions: int = 200
    quad_rel: float = 1e-12
    pv_tol: float = 1e-9
    n_angles: int = 48

    def __post_init__(self):
        eps = tuple(float(e) for e in self.pv_epsilons)
        if len(eps) < 3:
            raise ValueError("need at least three PV cutoffs for extrapolation")
        if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("pv_epsilons must be positive and strictly decreasing")
        kinks = tuple(float(k) for k in self.kink_points)
        if kinks and self.tail_radius <= max(abs(k) for k in kinks):
            raise ValueError("tail_radius must exceed every kink magnitude")
        if self.panel_tol <= 0 or self.max_subdivisions < 1:
            raise ValueError("panel_tol and max_subdivisions must be positive")
        object.__setattr__(self, "pv_epsilons", eps)
        object.__setattr__(self, "kink_points", kinks)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pv_epsilons"] = list(self.pv_epsilons)
        out["kink_points"] = list(self.kink_points)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "QuadratureSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown quadrature fields: {sorted(unknown)}")
        kw = dict(data)
        for key in ("pv_epsilons", "kink_points"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


@dataclass
class PVResult:
    value: float
    error_estimate: float
    tail_bound: float
    converged: bool
    extrapolants: list = field(default_factory=list)
    warnings: int = 0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "error_estimate": self.error_estimate,
            "tail_bound": self.tail_bound,
            "converged": self.converged,
        }

    def scaled(self, factor: float) -> "PVResult":
        f = abs(factor)
        return PVResult(
            factor * self.value,
            f * self.error_estimate,
            f * self.tail_bound,
            self.converged,
            [factor * e for e in self.extrapolants],
            self.warnings,
        )


def phi_p(t: float, p: float) -> float:
    if abs(t) < ZERO_DIFF:
        return 0.0
    return abs(t) ** (p - 2) * t


def _aitken(partial: Sequence[float]):
    """Aitken extrapolants of a sequence whose increments decay geometrically."""
    out = []
    for j in range(2, len(partial)):
        d1 = partial[j - 1] - partial[j - 2]
        d2 = partial[j] - partial[j - 1]
        if abs(d1) < ZERO_DIFF or abs(d2) < ZERO_DIFF:
            out.append(partial[j])
            continue
        rho = d2 / d1
        out.append(partial[j] + d2 * rho / (1 - rho) if 0 < rho < 1 else partial[j])
    return out


def _sign_changes(fn: Callable[[float], float], lo: float, hi: float, n: int = 400) -> list[float]:
    ys = np.geomspace(lo, hi, n)
    vals = np.array([fn(y) for y in ys])
    roots = []
    for a, b, fa, fb in zip(ys[:-1], ys[1:], vals[:-1], vals[1:]):
        if fa == 0.0 or fb == 0.0:
            continue
        if np.sign(fa) != np.sign(fb):
            roots.append(brentq(fn, a, b, xtol=1e-15 * max(1.0, b), rtol=4 * np.finfo(float).eps))
    return roots


def _check_growth(u, x, R, C, g):
    # sample far out on both sides; the declaration must dominate |u|
    for t in R * 2.0 ** np.arange(0, 21, 2):
        for tt in (x + t, x - t):
            if abs(u(tt)) > C * (1 + abs(tt) ** g) * (1 + 1e-9) + 1e-300:
                raise GrowthError(f"|u({tt:.3g})| exceeds the declared growth C(1+|t|^{g})")


MACHINE_EPS = float(np.finfo(float).eps)


def _rounding_estimate(plus, minus, ux, u, x, lo, hi, p, sp, exact_difference, n=200):
    """Effect of rounding in the differences, integrated over [lo, hi].

    A perturbation delta of a difference t moves Phi_p(t) by about
    (p-1) |t|^(p-2) delta. Without a cancellation-free difference, delta is
    the rounding of u itself; otherwise it is relative to t.
    """
    ys = np.geomspace(lo, hi, n)
    total = 0.0
    for diff, sign in ((plus, 1.0), (minus, -1.0)):
        t = np.array([diff(y) for y in ys])
        if exact_difference:
            delta = 4 * MACHINE_EPS * np.abs(t)
        else:
            delta = 4 * MACHINE_EPS * np.maximum(abs(ux), np.abs([u(x + sign * y) for y in ys]))
        live = delta > 0  # exact zeros, e.g. on a dead zone, carry no rounding
        mag = np.where(live, np.maximum(np.abs(t), delta), 1.0)
        vals = np.where(live, (p - 1) * mag ** (p - 2) * delta, 0.0) / ys**sp  # times y for d(log y)
        total += float(trapezoid(vals, np.log(ys)))
    return total


def frac_p_laplacian_1d(
    u: Callable[[float], float],
    x: float,
    params: Params,
    spec: QuadratureSpec | None = None,
    *,
    growth: tuple[float, float] | None = None,
    difference: Callable[[float], float] | None = None,
    strict: bool = False,
) -> PVResult:
    """Principal-value evaluation of (-Delta_p)^s u(x) in one dimension.

    ``spec.kink_points`` lists the points where u is not smooth. ``growth``
    is a declaration ``(C, g)`` with ``|u(t)| <= C (1 + |t|^g)``; it must
    satisfy ``g (p - 1) < s p`` for the tail to converge. Without a
    declaration u is taken to be bounded by its largest sampled magnitude.
    ``difference(y)``, when given, must return ``u(x) - u(x + y)`` for signed
    y; supplying a cancellation-free form keeps the small-y panels accurate.
    """
    spec = spec or QuadratureSpec()
    s, p = params.s, params.p
    sp = s * p
    x = float(x)
    ux = float(u(x))

    kink_dist = [abs(k - x) for k in spec.kink_points if abs(k - x) > 0]
    R = max(spec.tail_radius, 1.0, 2 * abs(x), *(2 * k for k in kink_dist))

    if growth is None:
        probe = np.concatenate([np.linspace(x - R, x + R, 401), x + R * 2.0 ** np.arange(0, 21, 2),
                                x - R * 2.0 ** np.arange(0, 21, 2)])
        C, g = max(abs(u(t)) for t in probe), 0.0
    else:
        C, g = float(growth[0]), float(growth[1])
    decay = sp - g * (p - 1)
    if decay <= 0:
        raise GrowthError("declared growth too fast: need g (p-1) < s p")
    _check_growth(u, x, R, C, g)

    if difference is None:
        def plus(y):
            return ux - u(x + y)

        def minus(y):
            return ux - u(x - y)
    else:
        def plus(y):
            return difference(y)

        def minus(y):
            return difference(-y)

    def pair(y):
        return (phi_p(plus(y), p) + phi_p(minus(y), p)) / y ** (1 + sp)

    eps = spec.pv_epsilons
    breaks = set(kink_dist)
    if p != 2:
        breaks.update(_sign_changes(plus, eps[-1], R))
        breaks.update(_sign_changes(minus, eps[-1], R))
    edges = sorted({*eps, R, *(b for b in breaks if eps[-1] < b < R)})

    err = 0.0
    n_warn = 0
    panel_vals = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            v, e = quad(pair, a, b, epsabs=spec.panel_tol, epsrel=spec.quad_rel, limit=spec.max_subdivisions)
            panel_vals.append((a, v))
            err += e

        # tail: y = R w^(-1/decay) maps [R, inf) onto (0, 1] and removes the
        # leading algebraic decay of the integrand
        def tail_integrand(w):
            if w <= 0.0:
                return 0.0
            y = R * w ** (-1.0 / decay)
            return pair(y) * y / (decay * w)

        tail, e = quad(tail_integrand, 0.0, 1.0, epsabs=spec.panel_tol, epsrel=spec.quad_rel,
                       limit=spec.max_subdivisions)
        err += e
        n_warn = sum(issubclass(w.category, IntegrationWarning) for w in caught)

    partial = []
    for e_j in eps:
        partial.append(tail + sum(v for a, v in panel_vals if a >= e_j))
    ext = _aitken(partial)
    value = ext[-1]
    extrap_err = abs(ext[-1] - ext[-2])
    mass = abs(tail) + sum(abs(v) for _, v in panel_vals)
    rounding = _rounding_estimate(plus, minus, ux, u, x, eps[-1], R, p, sp, difference is not None)
    # changes below the rounding floor carry no information
    converged = extrap_err <= max(spec.pv_tol, spec.quad_rel * mass, rounding)

    err += rounding

    K = 2.0 * (abs(ux) + C * (1 + 2.0**g)) ** (p - 1)
    tail_bound = K * R ** (-decay) / decay

    result = PVResult(float(value), float(extrap_err + err), float(tail_bound), bool(converged), ext, n_warn)
    if strict and not converged:
        raise PVConvergenceError(f"PV schedule exhausted without stabilization (change {extrap_err:.3g})")
    return result


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _frame(axis: np.ndarray) -> np.ndarray:
    """Orthonormal matrix whose last column is ``axis``."""
    d = axis.size
    Q, _ = np.linalg.qr(np.column_stack([axis, np.eye(d)]))
    Q = Q[:, :d]
    if Q[:, 0] @ axis < 0:
        Q[:, 0] *= -1
    return np.column_stack([Q[:, 1:], Q[:, 0]])


def half_sphere_rule(d: int, n: int, axis=None):
    """Directions w and weights integrating over {<w, axis> >= 0}.

    The polar angle is measured from ``axis`` (default e^d) and integrated by
    Gauss-Legendre, so functions singular on the equator are handled by the
    endpoint behaviour of the rule.
    """
    if d not in (2, 3):
        raise ValueError(f"direct quadrature supports d in {{2, 3}}, got {d}")
    axis = np.eye(d)[-1] if axis is None else _unit(axis)
    F = _frame(axis)
    if d == 2:
        t, w = np.polynomial.legendre.leggauss(n)
        theta = 0.5 * np.pi * (t + 1)
        local = np.column_stack([np.cos(theta), np.sin(theta)])
        weights = 0.5 * np.pi * w
    else:
        t, w = np.polynomial.legendre.leggauss(n)
        phi = 0.25 * np.pi * (t + 1)
        n_az = 2 * n
        az = 2 * np.pi * np.arange(n_az) / n_az
        P, A = np.meshgrid(phi, az, indexing="ij")
        local = np.column_stack([(np.sin(P) * np.cos(A)).ravel(), (np.sin(P) * np.sin(A)).ravel(),
                                 np.cos(P).ravel()])
        weights = ((0.25 * np.pi * w * np.sin(phi))[:, None] * np.full(n_az, 2 * np.pi / n_az)).ravel()
    return local @ F.T, weights


def frac_p_laplacian_nd(
    u: Callable[[np.ndarray], float],
    x,
    params: Params,
    spec: QuadratureSpec | None = None,
    *,
    kink_planes: Sequence[tuple] = (),
    growth: tuple[float, float] | None = None,
    line_difference: Callable[[np.ndarray, np.ndarray, float], float] | None = None,
    axis=None,
    strict: bool = False,
) -> PVResult:
    """(-Delta_p)^s u(x) for d in {2, 3} via polar coordinates.

    ``kink_planes`` holds pairs ``(normal, offset)`` describing hyperplanes
    ``<normal, z> = offset`` across which u is not smooth. The optional
    ``line_difference(x, w, y)`` returns ``u(x) - u(x + y w)``. The angular
    error is estimated by comparing against a rule with half as many polar
    nodes.
    """
    spec = spec or QuadratureSpec()
    x = np.asarray(x, dtype=float)
    d = x.size
    if d not in (2, 3) or params.d != d:
        raise ValueError(f"frac_p_laplacian_nd needs d in {{2, 3}} matching params, got {d}")

    base = replace(spec, kink_points=())
    scale_x = max(1.0, float(np.linalg.norm(x)))
    line_growth = None
    if growth is not None:
        C, g = growth
        line_growth = (C * (1 + (2 * scale_x) ** g), g)
    line_params = Params(params.s, params.p, 1)

    cache: dict = {}

    def line_value(w):
        key = tuple(np.round(w, 15))
        if key in cache:
            return cache[key]
        kinks = []
        for normal, offset in kink_planes:
            nw = float(np.dot(normal, w))
            if abs(nw) > 1e-14:
                kinks.append((offset - float(np.dot(normal, x))) / nw)
        R = max(spec.tail_radius, *(2 * abs(k) + 1 for k in kinks)) if kinks else spec.tail_radius
        line_spec = replace(base, kink_points=tuple(kinks), tail_radius=R)
        diff = None if line_difference is None else (lambda y: line_difference(x, w, y))
        res = frac_p_laplacian_1d(lambda t: u(x + t * w), 0.0, line_params, line_spec,
                                  growth=line_growth, difference=diff)
        cache[key] = res
        return res

    def integrate(n):
        dirs, wts = half_sphere_rule(d, n, axis)
        vals = [line_value(w) for w in dirs]
        return (
            float(sum(wt * r.value for wt, r in zip(wts, vals))),
            float(sum(wt * r.error_estimate for wt, r in zip(wts, vals))),
            float(sum(wt * r.tail_bound for wt, r in zip(wts, vals))),
            all(r.converged for r in vals),
        )

    n = spec.n_angles if d == 2 else max(4, spec.n_angles // 4)
    value, err, tail, conv = integrate(n)
    coarse, _, _, _ = integrate(max(2, n // 2))
    result = PVResult(value, err + abs(value - coarse), tail, conv)
    if strict and not conv:
        raise PVConvergenceError("a radial PV integral did not stabilize")
    return result


@dataclass(frozen=True)
class Ridge:
    """z -> coeff * W_1(offset + <normal, z>).

    W_1 is ``Ridge(1, 0, (1,))``, W_d is ``Ridge(1, 0, e^d)`` and the atom
    c H_xi is ``Ridge(c, 1, xi)``. Differences along lines are evaluated as
    ``-coeff a^s expm1(s log1p(b / a))`` on the live side of the kink, which
    keeps every digit for small steps.
    """

    coeff: float
    offset: float
    normal: tuple
    s: float

    @property
    def d(self) -> int:
        return len(self.normal)

    def _w(self, v: float) -> float:
        return self.coeff * max(v, 0.0) ** self.s

    def level(self, z) -> float:
        return self.offset + float(np.dot(self.normal, np.atleast_1d(z)))

    def __call__(self, z) -> float:
        return self._w(self.level(z))

    def step_difference(self, base: float, step: float) -> float:
        """W(base) - W(base + step) for the scalar ridge argument."""
        if base > 0 and base + step > 0:
            return -self.coeff * base**self.s * math.expm1(self.s * math.log1p(step / base))
        return self._w(base) - self._w(base + step)

    def growth(self) -> tuple[float, float]:
        # |c (a + <n, z>)_+^s| <= |c| (|a|^s + |n|^s |z|^s)
        nn = float(np.linalg.norm(self.normal))
        return abs(self.coeff) * max(abs(self.offset) ** self.s, nn**self.s, 1e-300), self.s

    def kink_planes(self):
        return [(np.asarray(self.normal, dtype=float), -self.offset)]

    def kink_points_1d(self):
        return (-self.offset / self.normal[0],)

    def line_difference(self, x, w, y) -> float:
        return self.step_difference(self.level(x), y * float(np.dot(self.normal, w)))

    def laplacian(self, x, params: Params, spec: QuadratureSpec | None = None, **kw) -> PVResult:
        spec = spec or QuadratureSpec()
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.d == 1:
            x0 = float(x[0])
            kinks = self.kink_points_1d()
            R = max(spec.tail_radius, *(2 * abs(k) + 1 for k in kinks))
            local = replace(spec, kink_points=kinks, tail_radius=R)
            base = self.level(x0)
            n0 = self.normal[0]
            return frac_p_laplacian_1d(lambda t: self(t), x0, params, local, growth=self.growth(),
                                       difference=lambda y: self.step_difference(base, n0 * y), **kw)
        return frac_p_laplacian_nd(self, x, params, spec, kink_planes=self.kink_planes(), growth=self.growth(),
                                   line_difference=self.line_difference, **kw)


def w1_profile(s: float):
    """W_1 as a scalar callable with its kink and growth declaration."""
    return (lambda t: max(t, 0.0) ** s), (0.0,), (1.0, s)


@lru_cache(maxsize=256)
def w1_value(sign: float, s: float, p: float, spec: QuadratureSpec | None = None) -> PVResult:
    """(-Delta_p)_1^s W_1 at +1 or -1."""
    return Ridge(1.0, 0.0, (1.0,), s).laplacian(float(sign), Params(s, p, 1), spec)


def lemma1_constant(params: Params) -> float:
    d, sp = params.d, params.s * params.p
    if d < 2:
        raise ValueError("the dimensional reduction needs d > 1")
    return 0.5 * sphere_measure(d - 1) * beta(0.5 * (d - 1), 0.5 * (sp + 1))


def lemma1_rhs(x, params: Params, spec: QuadratureSpec | None = None) -> PVResult:
    """C_d |x_d|^(-s) (-Delta_p)_1^s W_1(sigma(x_d)) for W_d at x."""
    x = np.asarray(x, dtype=float)
    xd = float(x[-1])
    if xd == 0.0:
        raise ValueError("the reduction formula needs x_d != 0")
    one_d = w1_value(1.0 if xd >= 0 else -1.0, params.s, params.p, spec)
    return one_d.scaled(lemma1_constant(params) * abs(xd) ** (-params.s))


def w1_minus_one_closed_form(s: float, p: float) -> float:
    """(-Delta_p)_1^s W_1(-1) = -B(s, s(p-1) + 1): only y > 1 contributes."""
    return -beta(s, s * (p - 1) + 1)


def lemma2_quotient(eps: float, s: float, p: float) -> float:
    """((1-(1-e)^s)^(p-1) - ((1+e)^s-1)^(p-1)) / e^p, evaluated without cancellation."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if p == 1:
        return 0.0
    lo = -math.expm1(s * math.log1p(-eps))  # 1 - (1-e)^s
    hi = math.expm1(s * math.log1p(eps))  # (1+e)^s - 1
    gap = lo - hi
    # lo^(p-1) - hi^(p-1) = hi^(p-1) * expm1((p-1) log(lo/hi))
    diff = hi ** (p - 1) * math.expm1((p - 1) * math.log1p(gap / hi))
    return diff / eps**p


def lemma2_target(s: float, p: float) -> float:
    return s ** (p - 1) * (p - 1) * (1 - s)


def lemma2_limit_check(s: float, p: float, schedule=(1e-1, 1e-2, 1e-3, 1e-4, 1e-5), rtol: float = 1e-2) -> dict:
    """Quotients along a decreasing schedule, compared against the closed-form limit."""
    schedule = [float(e) for e in schedule]
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be decreasing")
    target = lemma2_target(s, p)
    quotients = [lemma2_quotient(e, s, p) for e in schedule]
    errors = [abs(q - target) for q in quotients]
    scale = abs(target) if target != 0 else 1.0
    tail = errors[1:]
    monotone = all(b < a for a, b in zip(tail, tail[1:])) if target != 0 else all(e == 0 for e in errors)
    final_rel = errors[-1] / scale
    return {
        "s": s,
        "p": p,
        "schedule": schedule,
        "quotients": quotients,
        "errors": errors,
        "target": target,
        "final_relative_error": final_rel,
        "monotone_after_first": monotone,
        "converged": bool(monotone and final_rel < rtol),
    }


@dataclass
class Lemma3Terms:
    I1: float
    I2: float
    I3: float
    total: float
    error_estimate: float
    I2_by_parts: float

    def to_dict(self) -> dict:
        return asdict(self)


def _quad(fn, a, b, spec, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        return quad(fn, a, b, epsabs=spec.panel_tol, epsrel=spec.quad_rel, limit=spec.max_subdivisions, **kw)


def lemma3_terms(s: float, p: float, spec: QuadratureSpec | None = None) -> Lemma3Terms:
    """Split (-Delta_p)_1^s W_1(1) into I1 - I2 + I3 and evaluate each piece.

    I1 = 1/(sp) in closed form. I2 is integrated over v in (0, 1] after
    r = v^(-1/s), which turns the slowly decaying tail into a bounded
    integrand. I3 pairs r with -r on (0, 1); near 0 its integrand is
    r^(p-1-sp) times the small-eps quotient of :func:`lemma2_quotient`,
    again integrated with an algebraic weight. I2 is also evaluated a second way, after integration
    by parts on [1, inf), as an independent check.
    """
    spec = spec or QuadratureSpec()
    Params(s, p)  # validates ranges
    sp = s * p
    I1 = 1.0 / sp

    def i2_integrand(v):
        # r = v^(-1/s) maps [1, inf) onto (0, 1] and absorbs the r^(-1-s) decay
        return ((1 + v ** (1 / s)) ** s - v) ** (p - 1) / s

    I2, e2 = _quad(i2_integrand, 0.0, 1.0, spec)

    limit = lemma2_target(s, p)

    def i3_weighted(r):
        return limit if r == 0.0 else lemma2_quotient(r, s, p)

    def i3_plain(r):
        if r >= 1.0:
            return 1.0
        return ((1 - (1 - r) ** s) ** (p - 1) - ((1 + r) ** s - 1) ** (p - 1)) / r ** (1 + sp)

    a3, ea = _quad(i3_weighted, 0.0, 0.5, spec, weight="alg", wvar=(p - 1 - sp, 0.0))
    b3, eb = _quad(i3_plain, 0.5, 1.0, spec)
    I3 = a3 + b3

    def ibp(r):
        return (1 + r) ** (s - 1) * ((1 + r) ** s - 1) ** (p - 2) * r ** (-sp)

    J, ej = _quad(ibp, 1.0, np.inf, spec)
    I2_ibp = ((2**s - 1) ** (p - 1) + s * (p - 1) * J) / sp

    return Lemma3Terms(I1, I2, I3, I1 - I2 + I3, e2 + ea + eb, I2_ibp)


def atom_residual(a: Atom, x, params: Params, spec: QuadratureSpec | None = None, method: str = "reduced") -> float:
    """|(-Delta_p)^s (c H_xi)(x)| for one atom at one point of V_xi.

    ``method="direct"`` runs the quadrature on the atom itself (d <= 3).
    ``method="reduced"`` uses rotation and translation invariance plus the
    1D scaling law: the value is |c|^(p-1) C_d |xi|^(sp) (1 + <x, xi>)^(-s)
    times (-Delta_p)_1^s W_1(1), the latter computed once per (s, p).
    """
    spec = spec or QuadratureSpec()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = 1.0 + float(x @ a.direction)
    if z <= 0:
        raise KinkDomainError("evaluation point lies outside the atom's harmonicity region")
    if a.coeff == 0.0:
        return 0.0
    s, p, d = params.s, params.p, params.d
    if method == "reduced":
        const = 1.0 if d == 1 else lemma1_constant(params)
        v = w1_value(1.0, s, p, spec).value
        return abs(a.coeff) ** (p - 1) * const * a.norm ** (s * p) * z ** (-s) * abs(v)
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    ridge = Ridge(a.coeff, 1.0, a.xi, s)
    kw = {} if d == 1 else {"axis": a.direction}
    return abs(ridge.laplacian(x, params, spec, **kw).value)


def harmonicity_residual(u, points, params: Params, spec: QuadratureSpec | None = None,
                         method: str = "reduced", normalize: bool = False) -> np.ndarray:
    """Per-atom maxima of |(-Delta_p)^s atom| over the given points.

    Each atom is checked on its own: for p != 2 the operator is nonlinear
    and a sum of p-harmonic atoms need not be p-harmonic. With
    ``normalize=True`` the generator H_xi itself is checked (coefficient
    +-1); otherwise the residual carries the factor |coeff|^(p-1).
    """
    atoms = [u] if isinstance(u, Atom) else list(u)
    pts = getattr(points, "points", points)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if params.d == 1 and pts.shape[1] != 1:
        pts = pts.reshape(-1, 1)
    out = np.zeros(len(atoms))
    for i, a in enumerate(atoms):
        z = 1.0 + pts @ a.direction
        if np.any(z <= 0):
            raise KinkDomainError(f"atom {i} is not p-harmonic at every point: <xi, x> <= -1")
        if normalize and a.coeff != 0.0:
            a = Atom(math.copysign(1.0, a.coeff), a.xi, a.s)
        out[i] = max((atom_residual(a, x, params, spec, method) for x in pts), default=0.0)
    return out
