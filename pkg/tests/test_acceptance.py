"""Acceptance criteria 1-10, one PASS/FAIL line each on the terminal."""

import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from kpp_lab import dense
from kpp_lab.discretization import assemble_linearized, assemble_neumann_laplacian
from kpp_lab.model import DomainGrid, StateField, SystemSpec
from kpp_lab.nonlinearity import falsify_uniform_monotonicity
from kpp_lab.parabolic import Outcome, integrate_many, stability_probe
from kpp_lab.scenarios import BUILTIN, COUNTEREXAMPLE, COUNTEREXAMPLE_STATES
from kpp_lab.spectral import (Stability, dense_principal_eigenvalue, principal_eigenpair,
                              stability_of_constant_state)
from kpp_lab.steady import (attach_stability, comparability_matrix, constant_seeds,
                            default_search_box, multistart_search, mutation_continuation)

SCENARIO = BUILTIN[COUNTEREXAMPLE]
LISTED = [np.array(v) for v in COUNTEREXAMPLE_STATES]
ORACLE_SEEDS = list(range(20260, 20270))


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def _positive_states(spec, grid, tol=1e-12):
    seeds = constant_seeds(grid, spec.n, default_search_box(spec), 9)
    return [s for s in multistart_search(spec, grid, seeds, tol=tol) if s.positive]


@pytest.fixture(scope="module")
def coexistence():
    t0 = time.perf_counter()
    states = _positive_states(SCENARIO.spec, SCENARIO.grid)
    return states, time.perf_counter() - t0


def test_criterion_01_counterexample_roots(verdict, coexistence):
    states, elapsed = coexistence
    errs = [min(np.abs(s.node0 - v).max() for s in states) for v in LISTED]
    res = max(s.residual_norm for s in states)
    const = all(s.is_constant for s in states)
    ok = len(states) == 3 and max(errs) <= 1e-9 and res <= 1e-11 and const and elapsed < 1.0
    verdict(1, ok, f"{len(states)} positive states, max error {max(errs):.1e}, "
                   f"max residual {res:.1e}, {elapsed:.2f} s")


def test_criterion_02_symmetric_yet_not_unique(verdict, coexistence):
    t0 = time.perf_counter()
    A = SCENARIO.spec.coupling
    lams = {m: principal_eigenpair(assemble_linearized(SCENARIO.spec, DomainGrid.line(m))).lambda1
            for m in (1, 32, 64)}
    states, _ = coexistence
    distinct = {tuple(np.round(s.node0, 8)) for s in states}
    elapsed = time.perf_counter() - t0
    ok = (np.array_equal(A, A.T) and all(abs(lam + 1) <= 1e-8 for lam in lams.values())
          and len(distinct) >= 2 and elapsed < 5.0)
    verdict(2, ok, "A symmetric, lambda1 "
            + ", ".join(f"{lam:.12f} ({m} cells)" for m, lam in lams.items())
            + f", {len(distinct)} distinct positive states, {elapsed:.2f} s")


def test_criterion_03_monotonicity_falsified(verdict):
    spec = SCENARIO.spec
    ce = falsify_uniform_monotonicity(spec, [1.0, 1.0], [2.0, 2.0])
    fixed = falsify_uniform_monotonicity(spec, [1.0, 1.0], [2.0, 2.0], epsilon=0.1)
    exact = Fraction(1, 10) * (1 * (9 + 1)) - Fraction(1, 10) * (1 * (9 * Fraction(11, 10) + 1))
    ok = (ce is not None and ce.value < 0 and ce.m_coefficient == 0.0
          and ce.claim_component(0.0) == ce.claim_component(1e12)
          and exact == Fraction(-9, 100) and abs(fixed.value + 0.09) < 1e-15)
    verdict(3, ok, f"violation {ce.value!r} at eps {ce.epsilon}, M coefficient {ce.m_coefficient}, "
                   f"eps=0.1 gives {fixed.value!r}")


def test_criterion_04_incomparable(verdict, coexistence):
    states, _ = coexistence
    cm = comparability_matrix(states)
    off = [cm.relations[i][j].value for i in range(3) for j in range(3) if i != j]
    verdict(4, len(states) == 3 and cm.all_incomparable, f"off-diagonal relations {sorted(set(off))}")


def test_criterion_05_stability_pattern(verdict, coexistence):
    spec, grid = SCENARIO.spec, SCENARIO.grid
    sym = stability_of_constant_state(spec, grid, LISTED[0])
    asym = [stability_of_constant_state(spec, grid, v) for v in LISTED[1:]]
    spectral_ok = (sym.classification is Stability.UNSTABLE
                   and abs(sym.leading_growth_rate - 0.4) <= 1e-8
                   and all(r.classification is Stability.STABLE
                           and abs(r.mode_trace + 5) <= 1e-8
                           and abs(r.mode_determinant - 2.4) <= 1e-8 for r in asym))
    states, _ = coexistence
    probes = [stability_probe(spec, grid, attach_stability(spec, grid, s), trials=4) for s in states]
    agree = all(p.agrees for p in probes)
    verdict(5, spectral_ok and agree,
            f"(1,1) growth {sym.leading_growth_rate:.12f}; asymmetric trace "
            f"{[round(r.mode_trace, 12) for r in asym]}, det {[round(r.mode_determinant, 12) for r in asym]}; "
            f"probe verdicts {[p.verdict.value for p in probes]} agree={agree}")


def test_criterion_06_existence_sweep(verdict):
    t0 = time.perf_counter()
    grid = SCENARIO.grid
    lines, ok = [], True
    for mu in (0.0, 0.5, 0.9, 1.1, 1.5):
        spec = SCENARIO.spec.shifted(mu)
        lam = principal_eigenpair(assemble_linearized(spec, grid)).lambda1
        npos = len(_positive_states(spec, grid, tol=1e-10))
        good = abs(lam - (mu - 1)) <= 1e-8
        if mu > 1:
            starts = [StateField.constant(grid, p) for p in ([2.0, 0.5], [0.2, 6.0], [5.0, 5.0])]
            tags = [o.tag for o in integrate_many(spec, grid, starts, t_max=2000.0)]
            good &= npos == 0 and all(t is Outcome.EXTINCTION for t in tags)
            lines.append(f"mu={mu}: lambda1={lam:.10f}, {npos} positive, runs {[t.value for t in tags]}")
        else:
            good &= npos >= 1
            lines.append(f"mu={mu}: lambda1={lam:.10f}, {npos} positive")
        ok &= good
    elapsed = time.perf_counter() - t0
    verdict(6, ok and elapsed < 30.0, "; ".join(lines) + f"; {elapsed:.1f} s")


def test_criterion_07_second_order(verdict):
    d = 0.5
    errs = []
    for m in (8, 16, 32, 64):
        g = DomainGrid.line(m)
        op = -d * assemble_neumann_laplacian(g).toarray()
        ev = np.sort(dense.eigvals(op).real)
        errs.append(float(abs(ev[1] - d * np.pi ** 2)))
    ratios = [float(errs[k] / errs[k + 1]) for k in range(3)]
    ok = all(3.5 <= r <= 4.5 for r in ratios)
    verdict(7, ok, f"errors {[f'{e:.3e}' for e in errs]}, ratios {[round(r, 4) for r in ratios]}")


def _random_spec(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    if rng.random() < 0.5:
        grid = DomainGrid.line(int(rng.integers(2, 200 // n + 1)), float(rng.uniform(0.5, 3.0)))
    else:
        side = int(np.sqrt(200 // n))
        grid = DomainGrid.rectangle((int(rng.integers(2, side + 1)), int(rng.integers(2, side + 1))),
                                    tuple(rng.uniform(0.5, 3.0, 2)))
    N = grid.n_nodes
    A = rng.uniform(0.05, 1.0, (N, n, n))
    A[:, np.arange(n), np.arange(n)] = rng.uniform(-1.0, 1.0, (N, n))
    return SystemSpec(rng.uniform(0.01, 1.0, n), A, np.ones((n, n))), grid


def test_criterion_08_oracle_equivalence(verdict):
    worst, sizes = 0.0, []
    for seed in ORACLE_SEEDS:
        spec, grid = _random_spec(seed)
        op = assemble_linearized(spec, grid)
        assert op.shape[0] <= 200
        ref = dense_principal_eigenvalue(op)
        for method in ("power", "shift-invert"):
            lam = principal_eigenpair(op, method=method, max_iters=1_000_000).lambda1
            worst = max(worst, abs(lam - ref))
        sizes.append(op.shape[0])
    verdict(8, worst <= 1e-8, f"seeds {ORACLE_SEEDS[0]}..{ORACLE_SEEDS[-1]}, unknowns {sizes}, "
                              f"max |power - dense| {worst:.2e}")


def test_criterion_09_bistability_persistence(verdict):
    base = SCENARIO.spec.replace(coupling=np.diag(np.diag(SCENARIO.spec.coupling)))
    eps = np.linspace(0.01, 0.2, 20)
    branches = mutation_continuation(base, eps, grid=SCENARIO.grid)
    stable = all(br.terminated_at is None and len(br.points) == len(eps)
                 and all(p.state.positive and p.state.stability.classification is Stability.STABLE
                         for p in br.points) for br in branches)
    ends = [br.points[-1].state.node0 for br in branches]
    err = max(min(np.abs(e - v).max() for e in ends) for v in LISTED[1:])
    distinct = len(ends) == 2 and np.abs(ends[0] - ends[1]).max() > 1e-6
    verdict(9, stable and distinct and err <= 1e-6,
            f"{len(branches)} branches stable on eps in [{eps[0]}, {eps[-1]}], "
            f"endpoint error {err:.1e}")


def test_criterion_10_determinism(verdict, tmp_path):
    outs = []
    for k in range(2):
        p = tmp_path / f"r{k}.json"
        res = subprocess.run([sys.executable, "-m", "kpp_lab", "verify-paper", "--no-timestamp",
                              "--json", str(p)], capture_output=True)
        outs.append((res.returncode, res.stdout, p.read_bytes()))
    same = outs[0] == outs[1]
    verdict(10, same and outs[0][0] == 0,
            f"exit codes {[o[0] for o in outs]}, reports identical={same} ({len(outs[0][2])} bytes)")
