"""The acceptance suite, shared by the tests and ``pharmonic selftest``.

Each check returns a :class:`CheckResult` with a pass flag and the numbers
behind it. Nothing here loosens a tolerance to make a check pass.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .approximation import ApproxConfig, approximate, builtin_target, monomial_surrogate, remainder_norm, rescale_surrogate
from .core import Params, enumerate_multiindices, make_grid, n_multiindices
from .jets import Jet, build_jet_system, default_directions, solve_jet, verify_jet_fd
from .quadrature import (
    QuadratureSpec,
    Ridge,
    frac_p_laplacian_1d,
    lemma1_rhs,
    lemma2_limit_check,
    lemma3_terms,
)

S_GRID = (0.25, 0.5, 0.75)
P_GRID = (1.5, 2.0, 3.0, 4.0)


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: list = field(default_factory=list)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name} ({self.seconds:.1f}s)"

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "seconds": self.seconds, "details": self.details}


def _timed(name, fn) -> CheckResult:
    t0 = time.perf_counter()
    passed, details = fn()
    return CheckResult(name, bool(passed), details, time.perf_counter() - t0)


def check_w1_at_one(spec: QuadratureSpec | None = None) -> CheckResult:
    """(-Delta_p)_1^s W_1(1) vanishes, by direct PV quadrature and via I1 - I2 + I3."""

    def run():
        rows, ok = [], True
        for s, p in itertools.product(S_GRID, P_GRID):
            params = Params(s, p, 1)
            direct = Ridge(1.0, 0.0, (1.0,), s).laplacian(1.0, params, spec)
            terms = lemma3_terms(s, p, spec)
            good = abs(direct.value) < 1e-6 / (s * p) and abs(terms.total) < 1e-6
            ok &= good
            rows.append({"s": s, "p": p, "direct": direct.value, "split_sum": terms.total, "pass": good})
        return ok, rows

    return _timed("W1 is p-harmonic at 1 (quadrature and three-term split)", run)


def check_quotient_limit() -> CheckResult:
    def run():
        rows, ok = [], True
        for s, p in itertools.product(S_GRID, P_GRID):
            rep = lemma2_limit_check(s, p)
            q = rep["quotients"][rep["schedule"].index(1e-4)]
            rel = abs(q - rep["target"]) / abs(rep["target"])
            good = rel < 1e-2 and rep["monotone_after_first"]
            ok &= good
            rows.append({"s": s, "p": p, "target": rep["target"], "quotient_1e-4": q, "rel_error": rel,
                         "monotone": rep["monotone_after_first"], "pass": good})
        return ok, rows

    return _timed("small-eps quotient tends to s^(p-1)(p-1)(1-s)", run)


def check_dimension_reduction(spec: QuadratureSpec | None = None) -> CheckResult:
    def run():
        rows, ok = [], True
        below = ((0.3, -0.5), (0.7, -1.2))
        above = ((0.3, 0.5), (0.7, 1.2))
        for s, p in itertools.product((0.25, 0.5), (2.0, 3.0)):
            params = Params(s, p, 2)
            wd = Ridge(1.0, 0.0, (0.0, 1.0), s)
            for x in below + above:
                lhs = wd.laplacian(np.array(x), params, spec).value
                rhs = lemma1_rhs(np.array(x), params, spec).value
                if x[1] < 0:
                    metric = abs(lhs - rhs) / abs(rhs)
                    good = metric < 1e-3
                else:
                    metric = max(abs(lhs), abs(rhs))
                    good = metric < 1e-5
                ok &= good
                rows.append({"s": s, "p": p, "x": list(x), "direct": lhs, "reduced": rhs, "metric": metric,
                             "pass": good})
        return ok, rows

    return _timed("d=2 operator of W_d equals C_d |x_d|^-s times the 1D value", run)


def check_spanning() -> CheckResult:
    def run():
        rows, ok = [], True
        for d, m, s in itertools.product((1, 2, 3), range(5), S_GRID):
            n = n_multiindices(d, m)
            system = build_jet_system(default_directions(d, m, 2 * n), s, m)
            worst_res = worst_fd = 0.0
            full = system.rank == n
            if full:
                for gamma in enumerate_multiindices(d, min(m, 3)):
                    target = Jet.canonical(gamma, m)
                    match = solve_jet(system, target)
                    worst_res = max(worst_res, match.residual)
                    worst_fd = max(worst_fd, verify_jet_fd(match, target))
            good = full and worst_res < 1e-8 and worst_fd < 1e-4
            ok &= good
            rows.append({"d": d, "m": m, "s": s, "rank": system.rank, "N_m": n, "residual": worst_res,
                         "fd_error": worst_fd, "pass": good})
        return ok, rows

    return _timed("default directions span every jet (d<=3, m<=4)", run)


def check_remainder_bound() -> CheckResult:
    def run():
        rows, ok = [], True
        for d in (1, 2):
            grid = make_grid(d, 1001 if d == 1 else 41)
            for k, s in itertools.product((0, 1), S_GRID):
                for gamma in enumerate_multiindices(d, 2):
                    base = monomial_surrogate(gamma, k, Params(s, 2.0, d))
                    for r in (1.0, 0.5, 0.1, 0.01):
                        sur = rescale_surrogate(base, r)
                        measured = remainder_norm(sur, k, grid)
                        good = measured <= sur.g_norm_bound
                        ok &= good
                        rows.append({"d": d, "k": k, "s": s, "gamma": list(gamma), "scale": r,
                                     "measured": measured, "bound": sur.g_norm_bound, "n_points": len(grid),
                                     "pass": good})
        return ok, rows

    return _timed("measured C^k norm of each remainder stays below c(gamma) r", run)


END_TO_END_TARGETS = (("1", 1), ("x1", 1), ("x1^2", 1), ("x1^2+x2", 2), ("exp(x1)", 1))
END_TO_END_PARAMS = ((0.5, 2.0), (0.5, 3.0), (0.25, 1.5))


def check_end_to_end(config: ApproxConfig | None = None) -> CheckResult:
    def run():
        rows, ok = [], True
        for (name, d), k, eps, (s, p) in itertools.product(END_TO_END_TARGETS, (0, 1), (0.5, 0.1), END_TO_END_PARAMS):
            rep = approximate(builtin_target(name, d), k, eps, Params(s, p, d), config)
            inside = bool(np.all(np.linalg.norm(rep.atoms.directions, axis=1) < 1))
            harm = rep.harmonicity.get("max_residual", 0.0)
            good = rep.success and inside and harm < 1e-4
            ok &= good
            rows.append({"target": name, "d": d, "k": k, "eps": eps, "s": s, "p": p,
                         "measured": rep.measured_ck_error, "scale": rep.scale, "n_atoms": len(rep.atoms),
                         "harmonicity": harm, "pass": good})
        return ok, rows

    return _timed("end-to-end approximation within eps by p-harmonic atoms", run)


def invariant_test_functions(seed: int = 0, n: int = 3):
    """Seeded smooth bounded profiles a tanh(b t + c) + e exp(-(t - f)^2)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        a, b, c, e, f = rng.uniform([0.5, 0.5, -1, -1, -1], [1.5, 2.0, 1, 1, 1])
        out.append(lambda t, a=a, b=b, c=c, e=e, f=f: a * math.tanh(b * t + c) + e * math.exp(-((t - f) ** 2)))
    return out


def check_operator_invariants(seed: int = 0, spec: QuadratureSpec | None = None) -> CheckResult:
    """Constant shift, odd symmetry, scaling law and p=2 additivity."""

    def L(u, x, s, p):
        return frac_p_laplacian_1d(u, x, Params(s, p, 1), spec)

    def run():
        rows, ok = [], True
        funcs = invariant_test_functions(seed)
        x, lam, shift = 0.3, 2.0, 5.0
        for i, u in enumerate(funcs):
            for s, p in ((0.5, 2.0), (0.25, 3.0), (0.75, 1.5)):
                base = L(u, x, s, p)
                shifted = L(lambda t: u(t) + shift, x, s, p)
                neg = L(lambda t: -u(t), x, s, p)
                dil = L(lambda t: u(lam * t), x, s, p)
                at = L(u, lam * x, s, p)
                checks = {
                    "shift": (abs(shifted.value - base.value), base.error_estimate + shifted.error_estimate),
                    "odd": (abs(neg.value + base.value), base.error_estimate + neg.error_estimate),
                    "scaling": (abs(dil.value - lam ** (s * p) * at.value),
                                dil.error_estimate + lam ** (s * p) * at.error_estimate),
                }
                if p == 2.0:
                    v = funcs[(i + 1) % len(funcs)]
                    both = L(lambda t: u(t) + v(t), x, s, p)
                    other = L(v, x, s, p)
                    checks["additivity"] = (abs(both.value - base.value - other.value),
                                            both.error_estimate + base.error_estimate + other.error_estimate)
                for name, (gap, tol) in checks.items():
                    # the estimates are error bars, floored at rounding of the values
                    tol = max(tol, 1e-12 * max(1.0, abs(base.value)))
                    good = gap <= tol
                    ok &= good
                    rows.append({"function": i, "s": s, "p": p, "check": name, "gap": gap, "tolerance": tol,
                                 "pass": good})
        return ok, rows

    return _timed("operator invariants: shift, odd symmetry, scaling, additivity at p=2", run)


CHECKS = {
    1: check_w1_at_one,
    2: check_quotient_limit,
    3: check_dimension_reduction,
    4: check_spanning,
    5: check_remainder_bound,
    6: check_end_to_end,
    7: check_operator_invariants,
}


def run_all(selected=None) -> list[CheckResult]:
    keys = sorted(CHECKS) if selected is None else list(selected)
    return [CHECKS[k]() for k in keys]
