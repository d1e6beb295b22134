"""Command line: lemma checks, operator evaluation, approximation, selftest.

Exit status: 0 when every check passes, 1 when a check fails, 2 for a bad
configuration, 3 when a numerical routine does not converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import acceptance
from .approximation import (
    ApproxConfig,
    IllConditionedFitError,
    PolynomialBudgetError,
    approximate,
    builtin_target,
    pointwise_errors,
    polynomial_target,
)
from .blocks import AtomSum, KinkDomainError
from .core import Params, Tolerances
from .jets import JetError
from .quadrature import (
    PVConvergenceError,
    QuadratureSpec,
    Ridge,
    frac_p_laplacian_1d,
    frac_p_laplacian_nd,
    lemma1_rhs,
    lemma2_limit_check,
    lemma3_terms,
)

SCHEMA_VERSION = 1
COMMANDS = ("verify-lemma1", "verify-lemma2", "verify-lemma3", "evaluate", "approximate", "selftest")

LEMMA_TOL = 1e-6
REDUCTION_RTOL = 1e-3
REDUCTION_ATOL = 1e-5
HARMONICITY_TOL = 1e-4

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


# --------------------------------------------------------------------------
# configuration

DEFAULTS = {
    "params": {"s": 0.5, "p": 2.0, "d": 1},
    "tolerances": {},
    "quadrature": {},
    "seed": 0,
    "k": 0,
    "eps": 0.1,
    "target": "x1",
    "function": "w",
    "x": None,
    "budgets": {},
    "criteria": None,
    "jobs": 1,
    "output": None,
    "format": "json",
}

TOP_LEVEL = set(DEFAULTS) | {"schema_version", "command", "s", "p", "d", "f"}
BUDGET_KEYS = {"max_degree", "budget_factor", "resolution", "shrink"}


def _parse_value(text: str):
    """Numbers stay numbers; JSON arrays and objects are decoded."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    unknown = set(data) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then command-line flags."""
    file_cfg = load_config(args.config)
    if file_cfg.get("command", command) != command:
        raise ConfigError(f"config is for {file_cfg['command']!r}, not {command!r}")
    cfg = json.loads(json.dumps(DEFAULTS))
    params = dict(cfg["params"])
    if command == "verify-lemma1":
        params["d"] = 2  # the reduction is a statement about d >= 2
    params.update(file_cfg.get("params", {}))
    for key in ("s", "p", "d"):
        if key in file_cfg:
            params[key] = file_cfg[key]
    for key, value in file_cfg.items():
        if key in ("params", "s", "p", "d", "schema_version", "command"):
            continue
        cfg["target" if key == "f" else key] = value
    for key in ("s", "p", "d"):
        value = getattr(args, key, None)
        if value is not None:
            params[key] = _parse_value(value)
    for key in ("k", "eps", "seed", "target", "function", "x", "criteria", "jobs", "output", "format"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = _parse_value(value) if key in ("target", "x", "criteria") else value
    cfg["params"] = params
    cfg["command"] = command
    cfg["schema_version"] = SCHEMA_VERSION
    unknown = set(cfg["budgets"]) - BUDGET_KEYS
    if unknown:
        raise ConfigError(f"unknown budget keys: {sorted(unknown)}")
    if cfg["format"] not in ("json", "csv"):
        raise ConfigError("format must be json or csv")
    try:
        Tolerances(**cfg["tolerances"])
        QuadratureSpec.from_dict(cfg["quadrature"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


def sweep(cfg: dict) -> list[Params]:
    """Every (s, p, d) combination; scalar entries count as one-element lists."""
    p = cfg["params"]
    out = []
    try:
        for s, pp, d in itertools.product(_as_list(p["s"]), _as_list(p["p"]), _as_list(p["d"])):
            out.append(Params(float(s), float(pp), int(d)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return out


def quad_spec(cfg: dict) -> QuadratureSpec:
    spec = QuadratureSpec.from_dict(cfg["quadrature"])
    tol = cfg["tolerances"]
    if "quad_rel" in tol and "quad_rel" not in cfg["quadrature"]:
        spec = replace(spec, quad_rel=float(tol["quad_rel"]))
    return spec


# --------------------------------------------------------------------------
# commands; each returns (rows, passed) for one parameter combination


def _lemma3(params: Params, cfg: dict):
    spec = quad_spec(cfg)
    terms = lemma3_terms(params.s, params.p, spec)
    direct = Ridge(1.0, 0.0, (1.0,), params.s).laplacian(1.0, Params(params.s, params.p, 1), spec)
    if not direct.converged:
        raise NonConvergence(f"PV value at s={params.s}, p={params.p} did not stabilize")
    scale = terms.I1
    passed = abs(terms.total) < LEMMA_TOL and abs(direct.value) < LEMMA_TOL * scale
    row = {"s": params.s, "p": params.p, **terms.to_dict(), "pv_value": direct.value,
           "pv_error_estimate": direct.error_estimate, "tolerance": LEMMA_TOL, "pass": passed}
    return [row], passed


def _lemma2(params: Params, cfg: dict):
    rep = lemma2_limit_check(params.s, params.p)
    return [{**rep, "pass": rep["converged"]}], rep["converged"]


DEFAULT_LEMMA1_POINTS = ((0.3, -0.5), (0.7, -1.2), (0.3, 0.5), (0.7, 1.2))


def _points(cfg: dict, d: int, default):
    x = cfg["x"]
    if x is None:
        if default is None:
            raise ConfigError("--x is required")
        return [np.array(v, dtype=float) for v in default]
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim == 1:
        arr = arr[None, :] if arr.size == d else arr[:, None]
    if arr.shape[1] != d:
        raise ConfigError(f"points must have {d} coordinates")
    return list(arr)


def _lemma1(params: Params, cfg: dict):
    if params.d not in (2, 3):
        raise ConfigError("verify-lemma1 needs d in {2, 3}")
    spec = quad_spec(cfg)
    default = DEFAULT_LEMMA1_POINTS if params.d == 2 else tuple(v[:1] + (0.2,) + v[1:] for v in DEFAULT_LEMMA1_POINTS)
    rows, ok = [], True
    wd = Ridge(1.0, 0.0, tuple([0.0] * (params.d - 1) + [1.0]), params.s)
    for x in _points(cfg, params.d, default):
        if x[-1] == 0:
            raise ConfigError("points need x_d != 0")
        lhs = wd.laplacian(x, params, spec)
        rhs = lemma1_rhs(x, params, spec)
        if not (lhs.converged and rhs.converged):
            raise NonConvergence(f"PV value at x={x.tolist()} did not stabilize")
        if x[-1] < 0:
            metric = abs(lhs.value - rhs.value) / abs(rhs.value)
            good = metric < REDUCTION_RTOL
        else:
            metric = max(abs(lhs.value), abs(rhs.value))
            good = metric < REDUCTION_ATOL
        ok &= good
        rows.append({"s": params.s, "p": params.p, "d": params.d, "x": x.tolist(), "direct": lhs.value,
                     "direct_error_estimate": lhs.error_estimate, "reduced": rhs.value, "metric": metric,
                     "pass": good})
    return rows, ok


def _function(cfg: dict, params: Params):
    spec = cfg["function"]
    if spec in ("w", "W"):
        return Ridge(1.0, 0.0, tuple([0.0] * (params.d - 1) + [1.0]), params.s), "W"
    try:
        text = Path(spec).read_text() if isinstance(spec, str) and Path(spec).exists() else spec
        items = json.loads(text) if isinstance(text, str) else text
        atoms = AtomSum.from_list(items)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read atom sum: {exc}") from exc
    if atoms.d != params.d or atoms.s != params.s:
        raise ConfigError("atom sum does not match s and d")
    if len(atoms) == 1:
        a = atoms.atoms[0]
        return Ridge(a.coeff, 1.0, a.xi, a.s), "atom"
    return atoms, "atom-sum"


def _evaluate(params: Params, cfg: dict):
    spec = quad_spec(cfg)
    fn, kind = _function(cfg, params)
    rows, ok = [], True
    for x in _points(cfg, params.d, None):
        if isinstance(fn, Ridge):
            res = fn.laplacian(x, params, spec)
        else:
            ridges = [Ridge(a.coeff, 1.0, a.xi, a.s) for a in fn]
            growth = (float(sum(r.growth()[0] for r in ridges)), params.s)
            if params.d == 1:
                kinks = tuple(r.kink_points_1d()[0] for r in ridges)
                local = replace(spec, kink_points=kinks,
                                tail_radius=max(spec.tail_radius, *(2 * abs(k) + 1 for k in kinks)))
                x0 = float(x[0])
                res = frac_p_laplacian_1d(
                    lambda t: float(fn([[t]])[0]), x0, params, local, growth=growth,
                    difference=lambda y: sum(r.step_difference(r.level(x0), r.normal[0] * y) for r in ridges),
                )
            else:
                planes = [pl for r in ridges for pl in r.kink_planes()]
                res = frac_p_laplacian_nd(
                    lambda z: float(fn(z)[0]), x, params, spec, kink_planes=planes, growth=growth,
                    line_difference=lambda z, w, y: sum(r.line_difference(z, w, y) for r in ridges),
                )
        ok &= res.converged
        rows.append({"s": params.s, "p": params.p, "d": params.d, "function": kind, "x": list(map(float, x)),
                     **res.to_dict(), "pass": res.converged})
    if not ok:
        raise NonConvergence("a PV evaluation did not stabilize")
    return rows, ok


def _target(cfg: dict, d: int):
    t = cfg["target"]
    try:
        if isinstance(t, str):
            return builtin_target(t, d)
        if isinstance(t, (int, float)):
            return builtin_target(str(t), d)
        if isinstance(t, list):
            return polynomial_target([(item["coeff"], item["gamma"]) for item in t], d)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad target: {exc}") from exc
    raise ConfigError("target must be a builtin name or a list of {coeff, gamma} terms")


def _approx_config(cfg: dict) -> ApproxConfig:
    b = cfg["budgets"]
    tol = cfg["tolerances"]
    kw = {key: b[key] for key in BUDGET_KEYS if key in b}
    if "jet_residual" in tol:
        kw["jet_tol"] = float(tol["jet_residual"])
    if "fd_step" in tol:
        kw["fd_step"] = float(tol["fd_step"])
    return ApproxConfig(seed=int(cfg["seed"]), **kw)


def _approximate(params: Params, cfg: dict):
    k, eps = cfg["k"], cfg["eps"]
    if int(k) != k or k < 0 or not float(eps) > 0:
        raise ConfigError("need an integer k >= 0 and eps > 0")
    target = _target(cfg, params.d)
    rep = approximate(target, int(k), float(eps), params, _approx_config(cfg), quad_spec(cfg))
    inside = bool(np.all(np.linalg.norm(rep.atoms.directions, axis=1) < 1)) if len(rep.atoms) else True
    harm = rep.harmonicity.get("max_residual", 0.0)
    passed = rep.success and inside and harm < HARMONICITY_TOL
    row = {**rep.to_dict(), "pass": passed}
    if cfg["format"] == "csv":
        header, points = pointwise_errors(rep, target)
        row["_pointwise"] = (header, points)
    return [row], passed


RUNNERS = {
    "verify-lemma1": _lemma1,
    "verify-lemma2": _lemma2,
    "verify-lemma3": _lemma3,
    "evaluate": _evaluate,
    "approximate": _approximate,
}


def _run_one(job):
    command, params, cfg = job
    return RUNNERS[command](params, cfg)


def execute(cfg: dict):
    command = cfg["command"]
    if command == "selftest":
        selected = cfg["criteria"]
        if selected is not None:
            selected = [int(c) for c in _as_list(selected)]
            if any(c not in acceptance.CHECKS for c in selected):
                raise ConfigError(f"criteria must be among {sorted(acceptance.CHECKS)}")
        results = acceptance.run_all(selected)
        rows = [{"criterion": key, "name": r.name, "pass": r.passed, "details": r.details}
                for key, r in zip(selected or sorted(acceptance.CHECKS), results)]
        return rows, all(r.passed for r in results)
    jobs = [(command, params, cfg) for params in sweep(cfg)]
    n = max(1, int(cfg["jobs"]))
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    rows = [row for r, _ in results for row in r]
    return rows, all(ok for _, ok in results)


# --------------------------------------------------------------------------
# output


def _flatten(row: dict) -> dict:
    return {k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in row.items() if not k.startswith("_")}


def render(cfg: dict, rows: list, passed: bool) -> str:
    if cfg["format"] == "json":
        clean = [{k: v for k, v in r.items() if not k.startswith("_")} for r in rows]
        report = {"schema_version": SCHEMA_VERSION, "command": cfg["command"], "config": cfg,
                  "passed": passed, "rows": clean}
        return json.dumps(report, indent=2, default=float) + "\n"
    buf = io.StringIO()
    if rows and "_pointwise" in rows[0]:
        # one line per grid point and parameter combination
        header = rows[0]["_pointwise"][0]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["s", "p", *header])
        for r in rows:
            for values in r["_pointwise"][1]:
                writer.writerow([r["params"]["s"], r["params"]["p"], *(repr(v) for v in values)])
        return buf.getvalue()
    flat = [_flatten(r) for r in rows]
    fields = list(dict.fromkeys(k for r in flat for k in r))
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(flat)
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def summary(cfg: dict, rows: list, passed: bool) -> str:
    lines = []
    for r in rows:
        if cfg["command"] == "selftest":
            lines.append(f"[{'PASS' if r['pass'] else 'FAIL'}] criterion {r['criterion']}: {r['name']}")
        else:
            head = ", ".join(f"{k}={r[k]}" for k in ("s", "p", "x") if k in r)
            if "measured_ck_error" in r:
                head = f"s={r['params']['s']}, p={r['params']['p']}: error {r['measured_ck_error']:.3g} < {r['eps']}"
            lines.append(f"[{'PASS' if r['pass'] else 'FAIL'}] {cfg['command']} {head}")
    lines.append(f"{cfg['command']}: {'all checks passed' if passed else 'some checks FAILED'}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pharmonic", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--s", help="number or JSON array (sweep)")
        sp.add_argument("--p", help="number or JSON array (sweep)")
        sp.add_argument("--d", help="integer or JSON array")
        sp.add_argument("--k", type=int)
        sp.add_argument("--eps", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--output", metavar="PATH")
        sp.add_argument("--format", choices=("json", "csv"))
        sp.add_argument("--quiet", action="store_true")
        sp.add_argument("--jobs", type=int, help="worker processes for sweeps")
        if name == "approximate":
            sp.add_argument("--target", help="builtin name or JSON list of {coeff, gamma}")
        if name in ("evaluate", "verify-lemma1"):
            sp.add_argument("--x", help="JSON point or list of points")
        if name == "evaluate":
            sp.add_argument("--function", help="'w' for W_d, or an atom-sum JSON file/string")
        if name == "selftest":
            sp.add_argument("--criteria", help="JSON list of criterion numbers")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        rows, passed = execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergence, PVConvergenceError, JetError, IllConditionedFitError, PolynomialBudgetError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KinkDomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = render(cfg, rows, passed)
    if cfg["output"]:
        write_atomic(cfg["output"], text)
    else:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader went away (e.g. `| head`); silence the flush at exit
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    if not args.quiet:
        print(summary(cfg, rows, passed), file=sys.stderr)
    return EXIT_OK if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
