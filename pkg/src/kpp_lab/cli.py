"""``kpp-lab`` command line: scenarios, analyses and the counter-example checklist.

Every subcommand prints a short human summary on stdout and, with
``--json PATH`` (``-`` for stdout), a machine-readable report carrying
``schema_version``.  Reports are byte-identical across runs given the same
flags once ``--no-timestamp`` drops the generation time.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .discretization import assemble_linearized
from .errors import ConfigError, ConvergenceError, KppLabError, PositivityError
from .model import StateField, validate_spec
from .nonlinearity import cooperativity_box, falsify_uniform_monotonicity
from .parabolic import DEFAULT_SEED, Outcome, basin_scan, integrate, write_trajectory_csv
from .scenarios import BUILTIN, COUNTEREXAMPLE, counterexample_spec, load_scenario
from .spectral import Stability, principal_eigenpair
from .steady import (attach_stability, comparability_matrix, constant_seeds,
                     default_search_box, find_constant_states, multistart_search,
                     verify_counterexample)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2
EXIT_TIMEOUT = 3


# -- helpers -----------------------------------------------------------------

def _floats(text: str, name: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"{name}: expected comma-separated numbers, got {text!r}") from exc


def _vector(text, n: int, name: str, default=None) -> np.ndarray:
    if text is None:
        return np.asarray(default, dtype=float)
    vals = _floats(text, name)
    if len(vals) == 1:
        vals = vals * n
    if len(vals) != n:
        raise ConfigError(f"{name}: need 1 or {n} values, got {len(vals)}")
    return np.array(vals)


def _clean(obj):
    """Recursively convert numpy scalars and non-finite floats for strict JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def _scenario(args):
    sc = load_scenario(args.scenario)
    if args.grid_cells is not None:
        cells = [int(c) for c in _floats(args.grid_cells, "--grid-cells")]
        if any(c < 1 for c in cells):
            raise ConfigError("--grid-cells must be positive")
        if len(cells) not in (1, sc.grid.dimension):
            raise ConfigError(f"--grid-cells needs 1 or {sc.grid.dimension} values")
        sc = sc.with_grid(cells=cells)
    bad = validate_spec(sc.spec, sc.grid)
    if bad:
        raise ConfigError("scenario violates structural hypotheses: "
                          + ", ".join(f"{v.kind} {v.label} = {v.value:g}" for v in bad))
    return sc


def _report(args, command: str, scenario, body: dict) -> dict:
    out = {"schema_version": SCHEMA_VERSION, "command": command}
    if not args.no_timestamp:
        out["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    out["scenario"] = scenario.to_dict() if scenario is not None else None
    out.update(body)
    return _clean(out)


def _emit(args, report: dict) -> None:
    if not args.json:
        return
    text = json.dumps(report, indent=2) + "\n"
    if args.json == "-":
        sys.stdout.write(text)
    else:
        Path(args.json).write_text(text)


def _fmt(v) -> str:
    return "(" + ", ".join(f"{x:.10g}" for x in np.asarray(v).ravel()) + ")"


# -- eigen -------------------------------------------------------------------

def cmd_eigen(args) -> int:
    sc = _scenario(args)
    op = assemble_linearized(sc.spec, sc.grid)
    try:
        res = principal_eigenpair(op, tol=args.tol, max_iters=args.max_iters, method=args.method)
    except ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        _emit(args, _report(args, "eigen", sc, {"converged": False, "residual": exc.residual,
                                                "iterations": exc.iterations}))
        return EXIT_NOT_CONVERGED
    body = {"converged": True, **res.to_dict()}
    print(f"lambda1 = {res.lambda1:.15g}  residual = {res.residual:.3e}  "
          f"iterations = {res.iterations}")

    if args.sweep is not None:
        rows = []
        for mu in _floats(args.sweep, "--sweep"):
            shifted = sc.spec.shifted(mu)
            try:
                r = principal_eigenpair(assemble_linearized(shifted, sc.grid), tol=args.tol,
                                        max_iters=args.max_iters, method=args.method)
            except ConvergenceError as exc:
                print(f"not converged at shift {mu:g}: {exc}", file=sys.stderr)
                return EXIT_NOT_CONVERGED
            rows.append((mu, r.lambda1))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["shift", "lambda1"])
        for mu, lam in rows:
            w.writerow([f"{mu:.17g}", f"{lam:.17g}"])
        if args.csv:
            Path(args.csv).write_text(buf.getvalue())
        else:
            sys.stdout.write(buf.getvalue())
        body["sweep"] = [{"shift": mu, "lambda1": lam} for mu, lam in rows]
    _emit(args, _report(args, "eigen", sc, body))
    return EXIT_OK


# -- steady ------------------------------------------------------------------

def cmd_steady(args) -> int:
    sc = _scenario(args)
    spec, grid = sc.spec, sc.grid
    box = _vector(args.box, spec.n, "--box", default_search_box(spec))
    if np.any(box <= 0):
        raise ConfigError("--box must be positive")
    seeds = constant_seeds(grid, spec.n, box, args.lattice)
    states = multistart_search(spec, grid, seeds, tol=args.tol)
    unclassified = {}
    for st in states:
        try:
            attach_stability(spec, grid, st)
        except KppLabError as exc:
            unclassified[st.state_id] = str(exc)
    positive = [st for st in states if st.positive]
    cm = comparability_matrix(positive)

    files = []
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for st in states:
            p = out / f"{st.state_id}.csv"
            st.field.to_csv(p)
            files.append(p.name)

    print(f"{len(states)} steady states, {len(positive)} positive")
    for st in states:
        tag = st.stability.classification.value if st.stability else "?"
        shape = _fmt(st.node0) if st.is_constant else "nonconstant"
        print(f"  {st.state_id}: {shape}  residual {st.residual_norm:.2e}  {tag}"
              + ("  positive" if st.positive else ""))
    if len(positive) > 1:
        print("positive states pairwise incomparable: "
              + ("yes" if cm.all_incomparable else "no"))
    body = {"search_box": box, "lattice": args.lattice, "tol": args.tol,
            "states": [st.to_dict() for st in states],
            "positive_ids": [st.state_id for st in positive],
            "comparability": cm.to_dict(), "unclassified": unclassified, "files": files}
    _emit(args, _report(args, "steady", sc, body))
    return EXIT_OK


# -- coop-check --------------------------------------------------------------

def cmd_coop_check(args) -> int:
    sc = _scenario(args)
    spec = sc.spec
    box = _vector(args.box, spec.n, "--box", default_search_box(spec))
    if np.any(box < 0):
        raise ConfigError("--box must be nonnegative")
    lower = _vector(args.lower, spec.n, "--lower", np.ones(spec.n))
    upper = _vector(args.upper, spec.n, "--upper", 2 * np.ones(spec.n))
    coop = cooperativity_box(spec, box)
    ce = falsify_uniform_monotonicity(spec, lower, upper, epsilon=args.epsilon)

    if coop.cooperative:
        print(f"cooperative on [0, {_fmt(box)}]")
    else:
        w = coop.witness
        i, j = w["pair"]
        print(f"not cooperative on [0, {_fmt(box)}]: dF{i + 1}/du{j + 1} = {w['value']:.6g} "
              f"at {_fmt(w['point'])}")
    if coop.cooperative_box is not None:
        print(f"largest cooperative box: [0, {_fmt(coop.cooperative_box)}]")
    if ce is None:
        print("uniform monotonicity: no counterexample")
    else:
        print(f"uniform monotonicity violated: component {ce.component + 1} = {ce.value:.17g} "
              f"for eps = {ce.epsilon:g} along u{ce.direction + 1} (independent of M)")
    body = {"cooperativity": coop.to_dict(), "lower": lower, "upper": upper,
            "monotonicity_counterexample": None if ce is None else ce.to_dict()}
    _emit(args, _report(args, "coop-check", sc, body))
    return EXIT_OK


# -- simulate ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    sc = _scenario(args)
    spec, grid = sc.spec, sc.grid
    u0 = _vector(args.u0, spec.n, "--u0", np.full(spec.n, 0.5))
    if np.any(u0 < 0):
        raise ConfigError("--u0 must be nonnegative")
    U = StateField.constant(grid, u0).as_array()
    if args.perturb:
        rng = np.random.default_rng(args.seed)
        U = np.clip(U + args.perturb * rng.uniform(-1.0, 1.0, U.shape), 0.0, None)
    archive = find_constant_states(spec, grid=grid) if spec.is_constant else []
    log_every = args.log_every if args.csv else 0
    try:
        out = integrate(spec, grid, StateField.from_array(grid, U), dt=args.dt, t_max=args.t_max,
                        archive=archive, log_every=log_every)
    except PositivityError as exc:
        raise ConfigError(str(exc)) from exc
    if out.state is not None and out.state.stability is None:
        try:
            attach_stability(spec, grid, out.state)
        except KppLabError:
            pass
    if args.csv:
        write_trajectory_csv(out, spec.n, args.csv)
    label = out.tag.value + (f" {out.state_id}" if out.state_id else "")
    print(f"{label} at t = {out.final_time:.6g} after {out.steps} steps "
          f"(dt = {out.dt:g}, residual {out.final_residual:.2e})")
    if out.state is not None and out.state.is_constant:
        print(f"  limit {_fmt(out.state.node0)}")
    body = {"u0": u0, "perturb": args.perturb, "seed": args.seed, "dt": args.dt,
            "t_max": args.t_max, "outcome": out.to_dict()}
    _emit(args, _report(args, "simulate", sc, body))
    return EXIT_TIMEOUT if out.tag is Outcome.TIMEOUT else EXIT_OK


# -- verify-paper ------------------------------------------------------------

def _is_shipped(sc) -> bool:
    ref = counterexample_spec()
    s = sc.spec
    return (sc.name == COUNTEREXAMPLE and sc.provenance == BUILTIN[COUNTEREXAMPLE].provenance
            and s.n == ref.n and np.array_equal(s.d, ref.d)
            and np.array_equal(s.coupling, ref.coupling)
            and np.array_equal(s.competition, ref.competition))


def cmd_verify_paper(args) -> int:
    sc = _scenario(args)
    spec, grid = sc.spec, sc.grid
    rows = []

    def row(claim, passed, detail):
        rows.append({"claim": claim, "passed": bool(passed), "detail": detail})

    warning = None
    if not _is_shipped(sc):
        warning = (f"scenario {sc.name!r} ({sc.provenance}) differs from the shipped "
                   f"{COUNTEREXAMPLE}; checks use the listed counter-example states")

    report = verify_counterexample(spec, grid, tol=args.tol)
    labels = {"residual": "listed constant states solve the elliptic system",
              "distinct": "listed states are distinct",
              "stability": "(1,1) unstable, asymmetric states stable",
              "incomparable": "listed states are pairwise incomparable",
              "swap-symmetry": "system and state set symmetric under species swap"}
    for c in report.checks:
        row(labels.get(c.name, c.name), c.passed, c.detail)

    try:
        ce = falsify_uniform_monotonicity(spec, np.ones(spec.n), 2 * np.ones(spec.n))
    except ConfigError as exc:
        ce, err = None, str(exc)
    else:
        err = None
    row("uniform monotonicity fails on (1,1)->(2,2) for every M",
        ce is not None and ce.value < 0 and ce.m_coefficient == 0.0,
        {"counterexample": None if ce is None else ce.to_dict(), "error": err})

    try:
        eig = principal_eigenpair(assemble_linearized(spec, grid), tol=1e-12)
        lam, lam_detail = eig.lambda1, eig.to_dict()
    except ConvergenceError as exc:
        lam, lam_detail = math.nan, {"error": str(exc)}
    A = spec.coupling
    symmetric = bool(spec.is_constant and np.array_equal(A, A.T))
    row("symmetric A with negative principal eigenvalue", symmetric and lam < 0,
        {"lambda1": lam, "symmetric": symmetric, **lam_detail})

    box = _vector(args.box, spec.n, "--box", default_search_box(spec))
    try:
        archive = find_constant_states(spec, grid=grid) if spec.is_constant else []
        for st in archive:
            attach_stability(spec, grid, st)
        scan = basin_scan(spec, grid, args.lattice, box, dt=args.dt, t_max=args.t_max,
                          archive=archive)
        stable_pos = sorted({o.state_id for o in scan.outcomes
                             if o.tag is Outcome.CONVERGED and o.state.positive
                             and o.state.stability is not None
                             and o.state.stability.classification is Stability.STABLE})
        tally = {}
        for o in scan.outcomes:
            key = o.tag.value + (f" {o.state_id}" if o.state_id else "")
            tally[key] = tally.get(key, 0) + 1
        basin_detail = {"box": box, "lattice": args.lattice,
                        "attracting_stable_positive": stable_pos,
                        "tally": dict(sorted(tally.items())), **scan.to_dict()}
        basin_ok = len(stable_pos) >= 2
    except KppLabError as exc:
        basin_detail, basin_ok = {"error": str(exc)}, False
    row("two stable coexistence states attract open sets of initial data", basin_ok, basin_detail)

    all_pass = all(r["passed"] for r in rows)
    if warning:
        print(f"WARNING: {warning}")
    for r in rows:
        print(f"[{'PASS' if r['passed'] else 'FAIL'}] {r['claim']}")
    print(f"{sum(r['passed'] for r in rows)}/{len(rows)} checks passed")
    body = {"passed": all_pass, "provenance_warning": warning, "checks": rows}
    _emit(args, _report(args, "verify-paper", sc, body))
    return EXIT_OK if all_pass else EXIT_CONFIG


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default=COUNTEREXAMPLE,
                        help=f"shipped name ({', '.join(sorted(BUILTIN))}) or scenario file path")
    common.add_argument("--grid-cells", help="cells per axis, e.g. 32 or 16,16")
    common.add_argument("--json", help="write the JSON report here ('-' for stdout)")
    common.add_argument("--no-timestamp", action="store_true",
                        help="omit the generation time so reports are byte-reproducible")

    p = argparse.ArgumentParser(prog="kpp-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("eigen", parents=[common], help="principal eigenvalue at zero")
    e.add_argument("--tol", type=float, default=1e-10)
    e.add_argument("--max-iters", type=int, default=50_000)
    e.add_argument("--method", choices=["power", "shift-invert"], default="power")
    e.add_argument("--sweep", help="comma-separated shifts mu; emits CSV (shift, lambda1) for A - mu I")
    e.add_argument("--csv", help="write the sweep CSV here instead of stdout")
    e.set_defaults(func=cmd_eigen)

    s = sub.add_parser("steady", parents=[common], help="multistart steady-state search")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--lattice", type=int, default=9)
    s.add_argument("--box", help="upper corner of the constant seed lattice")
    s.add_argument("--out-dir", help="directory for one CSV per state")
    s.set_defaults(func=cmd_steady)

    c = sub.add_parser("coop-check", parents=[common],
                       help="cooperativity box and uniform-monotonicity falsifier")
    c.add_argument("--box", help="upper corner of the box [0, box] checked for cooperativity")
    c.add_argument("--lower", help="lower corner for the monotonicity falsifier (default 1)")
    c.add_argument("--upper", help="upper corner for the monotonicity falsifier (default 2)")
    c.add_argument("--epsilon", type=float, help="fixed falsifier step")
    c.set_defaults(func=cmd_coop_check)

    m = sub.add_parser("simulate", parents=[common], help="IMEX integration from constant data")
    m.add_argument("--u0", help="constant initial value(s), default 0.5")
    m.add_argument("--perturb", type=float, default=0.0, help="uniform noise amplitude")
    m.add_argument("--seed", type=int, default=DEFAULT_SEED)
    m.add_argument("--dt", type=float, default=0.01)
    m.add_argument("--t-max", type=float, default=500.0)
    m.add_argument("--csv", help="trajectory CSV (t, max/min/mean per species)")
    m.add_argument("--log-every", type=int, default=10)
    m.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify-paper", parents=[common],
                       help="checklist for the counter-example claims")
    v.add_argument("--tol", type=float, default=1e-12, help="residual tolerance for listed states")
    v.add_argument("--lattice", type=int, default=9, help="basin scan lattice per axis")
    v.add_argument("--box", help="basin scan upper corner")
    v.add_argument("--dt", type=float, default=0.01)
    v.add_argument("--t-max", type=float, default=500.0)
    v.set_defaults(func=cmd_verify_paper)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
