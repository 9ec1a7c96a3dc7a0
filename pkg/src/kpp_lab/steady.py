"""Coexistence states: Newton multistart, the explicit counter-example, comparability."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._parallel import ordered_map
from .discretization import assemble_neumann_laplacian, residual_array, residual_jacobian, solve
from .errors import (ConfigError, ConvergenceError, DivergenceError, KppLabError,
                     NotBistableError, NotSteadyError, SingularJacobianError)
from .model import DEFAULT_ORDER_TOL, DomainGrid, OrderRelation, StateField, SystemSpec, compare_states
from .scenarios import COUNTEREXAMPLE_STATES, counterexample_spec
from .spectral import Stability, StabilityResult, stability_of_constant_state, stability_of_state

POSITIVE_THRESHOLD = 1e-8
PDE_DEDUP = 1e-6
ALGEBRAIC_DEDUP = 1e-8
NEGATIVE_DISCARD = -1e-8
# relative size of the last Newton step required on top of a small residual;
# at a singular root the residual is ~ error**2 and alone would stop far too early
STEP_TOL = 1e-7
# roots closer than this are merged when the residual stays below tolerance
# on the segment joining them (a degenerate root is only fixed to ~eps**(1/3))
MERGE_REACH = 1e-3
MERGE_RESIDUAL = 1e-10


def _indistinguishable(resid, a, b, dedup, tol) -> bool:
    gap = float(np.abs(a - b).max())
    if gap <= dedup:
        return True
    if gap > MERGE_REACH:
        return False
    return all(_norm(resid(a + t * (b - a))) < tol for t in (0.25, 0.5, 0.75))


@dataclass
class SteadyState:
    field: StateField
    residual_norm: float
    positive: bool
    seed: Optional[np.ndarray] = None
    iterations: int = 0
    stability: Optional[StabilityResult] = None
    state_id: str = ""

    @property
    def node0(self) -> np.ndarray:
        return self.field.node_values(0)

    @property
    def is_constant(self) -> bool:
        U = self.field.as_array()
        return bool(np.all(np.abs(U - U[:, :1]) <= 1e-12 * (1 + np.abs(U[:, :1]))))

    def to_dict(self) -> dict:
        out = {"id": self.state_id, "residual": self.residual_norm, "positive": self.positive,
               "iterations": self.iterations,
               "stability": None if self.stability is None else self.stability.to_dict()}
        if self.is_constant:
            out["value"] = self.node0.tolist()
        else:
            U = self.field.as_array()
            out["min"] = U.min(axis=1).tolist()
            out["max"] = U.max(axis=1).tolist()
        if self.seed is not None:
            out["seed"] = np.asarray(self.seed).tolist()
        return out


def _norm(r) -> float:
    return float(np.abs(r).max()) if r.size else 0.0


def newton_steady(spec: SystemSpec, grid: DomainGrid, u0: StateField, tol: float = 1e-10,
                  max_iters: int = 50, max_halvings: int = 30,
                  step_tol: float = STEP_TOL) -> SteadyState:
    """Damped Newton on the discrete residual with the exact Jacobian.

    Converged when the max-norm residual is below ``tol`` and the last
    accepted step is below ``step_tol * (1 + max|u|)`` (a seed that already
    meets ``tol`` is accepted as is).  Each step is halved until the
    residual decreases; if that fails once the residual is below ``tol`` the
    iterate is at rounding level and is accepted.

    Raises :class:`DivergenceError` after ``max_halvings`` failed halvings,
    :class:`ConvergenceError` after ``max_iters`` steps and
    :class:`SingularJacobianError` on linear solver breakdown.
    """
    lap = assemble_neumann_laplacian(grid)
    U = np.array(u0.as_array(), dtype=float)
    R = residual_array(spec, grid, U, lap)
    norm = _norm(R)
    last = 0.0

    def done(it):
        fld = StateField.from_array(grid, U)
        return SteadyState(fld, norm, fld.is_positive(POSITIVE_THRESHOLD), u0.values.copy(), it)

    for it in range(max_iters + 1):
        if norm < tol and last <= step_tol * (1.0 + np.abs(U).max()):
            return done(it)
        if it == max_iters:
            break
        J = residual_jacobian(spec, grid, StateField.from_array(grid, U), lap)
        step = solve(J, -R.ravel(), grid.dimension).reshape(U.shape)
        lam = 1.0
        for _ in range(max_halvings + 1):
            trial = U + lam * step
            Rt = residual_array(spec, grid, trial, lap)
            nt = _norm(Rt)
            if nt < norm:
                last = lam * _norm(step)
                U, R, norm = trial, Rt, nt
                break
            lam *= 0.5
        else:
            if norm < tol:
                return done(it)
            raise DivergenceError(f"line search failed at residual {norm:.3e}", norm, it)
    raise ConvergenceError(f"Newton not converged in {max_iters} iterations", norm, max_iters)


def default_search_box(spec: SystemSpec) -> np.ndarray:
    """Twice the heuristic bound ``u_i <= max(sum_j a_ij) / c_ii``."""
    A = spec.coupling if spec.is_constant else spec.coupling.max(axis=0)
    rows = A.sum(axis=1).max()
    diag = np.diag(spec.competition)
    return 2.0 * np.maximum(rows, 1e-12) / np.where(diag > 0, diag, np.nan)


def constant_seeds(grid: DomainGrid, n: int, box, lattice: int):
    """Constant fields on the ``lattice**n`` points of ``[0, box]``."""
    box = np.broadcast_to(np.asarray(box, dtype=float), (n,))
    axes = [np.linspace(0.0, b, lattice) for b in box]
    return [StateField.constant(grid, p) for p in itertools.product(*axes)]


def _sort_key(state: SteadyState):
    U = state.field.as_array()
    return tuple(U[:, 0]) + tuple(state.field.values)


def multistart_search(spec: SystemSpec, grid: DomainGrid, seeds: Sequence[StateField],
                      tol: float = 1e-10, dedup: float = PDE_DEDUP) -> list:
    """Newton from every seed; keep distinct, essentially nonnegative roots.

    Failed Newton runs are dropped.  Two roots are merged when they are
    within ``dedup``, or within 1e-3 with the residual below ``tol`` along
    the segment joining them.  The first root met in seed order is kept and
    the output is sorted by the species values at node 0.
    """
    def run(seed):
        try:
            return newton_steady(spec, grid, seed, tol)
        except (ConvergenceError, SingularJacobianError):
            return None

    lap = assemble_neumann_laplacian(grid)
    shape = (spec.n, grid.n_nodes)

    def resid(v):
        return residual_array(spec, grid, v.reshape(shape), lap)

    found = []
    for st in ordered_map(run, seeds):
        if st is None or st.field.values.min() < NEGATIVE_DISCARD:
            continue
        if any(_indistinguishable(resid, st.field.values, other.field.values,
                                                          dedup, tol) for other in found):
            continue
        found.append(st)
    found.sort(key=_sort_key)
    for k, st in enumerate(found):
        st.state_id = f"S{k}"
    return found


def _algebraic_newton(A, b, u, tol, max_iters=100, step_tol=STEP_TOL):
    g = A @ u - b(u)
    norm = _norm(g)
    last = 0.0
    for _ in range(max_iters):
        if norm < tol and last <= step_tol * (1.0 + np.abs(u).max()):
            break
        J = A - b.jacobian(u)
        try:
            step = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        for _ in range(31):
            trial = u + lam * step
            gt = A @ trial - b(trial)
            if _norm(gt) < norm:
                last = lam * _norm(step)
                u, g, norm = trial, gt, _norm(gt)
                break
            lam *= 0.5
        else:
            if norm < tol:
                break
            return None
    else:
        return None
    # two polishing steps push the root to rounding level
    for _ in range(2):
        try:
            trial = u + np.linalg.solve(A - b.jacobian(u), -(A @ u - b(u)))
        except np.linalg.LinAlgError:
            break
        if _norm(A @ trial - b(trial)) <= norm:
            u, norm = trial, _norm(A @ trial - b(trial))
    return u


def find_constant_states(spec: SystemSpec, search_box=None, lattice: int = 9,
                         tol: float = 1e-13, grid: Optional[DomainGrid] = None) -> list:
    """Nonnegative roots of ``A u = b(u)`` from a seed lattice over ``[0, search_box]``.

    These are exactly the spatially constant steady states.  Roots closer
    than ``1e-8``, or indistinguishable by residual as in
    :func:`multistart_search`, are merged; the result is sorted
    lexicographically.
    """
    if not spec.is_constant:
        raise ConfigError("constant states need a spatially constant A")
    grid = DomainGrid.line(1) if grid is None else grid
    box = default_search_box(spec) if search_box is None else np.asarray(search_box, dtype=float)
    box = np.broadcast_to(box, (spec.n,))
    b = spec.nonlinearity
    A = spec.coupling
    roots = []
    seeds = list(itertools.product(*[np.linspace(0.0, bx, lattice) for bx in box]))
    for seed in seeds:
        u = _algebraic_newton(A, b, np.array(seed, dtype=float), tol)
        if u is None or u.min() < -1e-10:
            continue
        u = np.where(np.abs(u) < 1e-14, 0.0, u)
        if any(_indistinguishable(lambda v: A @ v - b(v), u, r, ALGEBRAIC_DEDUP,
                                  max(tol, MERGE_RESIDUAL))
               for r, _ in roots):
            continue
        roots.append((u, seed))
    roots.sort(key=lambda rs: tuple(rs[0]))
    out = []
    lap = assemble_neumann_laplacian(grid)
    for k, (u, seed) in enumerate(roots):
        fld = StateField.constant(grid, u)
        res = _norm(residual_array(spec, grid, fld.as_array(), lap))
        out.append(SteadyState(fld, res, fld.is_positive(POSITIVE_THRESHOLD),
                               np.asarray(seed), 0, state_id=f"S{k}"))
    return out


def attach_stability(spec: SystemSpec, grid: DomainGrid, state: SteadyState) -> SteadyState:
    """Classify ``state`` in place: exact per-mode for constant states, propagator otherwise."""
    if spec.is_constant and state.is_constant:
        state.stability = stability_of_constant_state(spec, grid, state.node0)
    else:
        state.stability = stability_of_state(spec, grid, state)
    return state


@dataclass
class ComparabilityMatrix:
    ids: list
    relations: list

    @property
    def all_incomparable(self) -> bool:
        k = len(self.ids)
        return all(self.relations[i][j] is OrderRelation.INCOMPARABLE
                   for i in range(k) for j in range(k) if i != j)

    def to_dict(self) -> dict:
        return {"ids": list(self.ids),
                "relations": [[r.value for r in row] for row in self.relations]}


def comparability_matrix(states, tol: float = DEFAULT_ORDER_TOL, ids=None) -> ComparabilityMatrix:
    """Pairwise :func:`compare_states`; ``states`` are SteadyStates, StateFields or vectors."""
    def vals(s):
        if isinstance(s, SteadyState):
            return s.field
        return s
    if ids is None:
        ids = [s.state_id if isinstance(s, SteadyState) and s.state_id else f"S{k}"
               for k, s in enumerate(states)]
    rel = [[compare_states(vals(a), vals(b), tol) for b in states] for a in states]
    return ComparabilityMatrix(list(ids), rel)


# -- the explicit counter-example --------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class CounterexampleReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def verify_counterexample(spec: Optional[SystemSpec] = None, grid: Optional[DomainGrid] = None,
                          tol: float = 1e-12) -> CounterexampleReport:
    """Check the three listed constant coexistence states against ``spec``.

    Checks, in order: ``residual`` (each listed vector is a root to ``tol``),
    ``distinct``, ``stability`` ((1,1) Unstable, the asymmetric pair Stable),
    ``incomparable`` (every pair), ``swap-symmetry`` (species swap maps the
    system and the listed set onto themselves).
    """
    spec = counterexample_spec() if spec is None else spec
    grid = DomainGrid.line(16) if grid is None else grid
    lap = assemble_neumann_laplacian(grid)
    vecs = [np.array(v) for v in COUNTEREXAMPLE_STATES]
    fields = [StateField.constant(grid, v) for v in vecs]
    checks = []

    res = [_norm(residual_array(spec, grid, f.as_array(), lap)) for f in fields]
    checks.append(Check("residual", all(r <= tol for r in res), {"residuals": res, "tol": tol}))

    gaps = [float(np.abs(a - b).max()) for a, b in itertools.combinations(vecs, 2)]
    checks.append(Check("distinct", min(gaps) > PDE_DEDUP, {"min_gap": min(gaps)}))

    expected = [Stability.UNSTABLE, Stability.STABLE, Stability.STABLE]
    detail, ok = {}, True
    for v, want in zip(vecs, expected):
        key = ",".join(f"{x:.12g}" for x in v)
        try:
            st = stability_of_constant_state(spec, grid, v)
            detail[key] = st.to_dict()
            ok &= st.classification is want
        except (NotSteadyError, KppLabError) as exc:
            detail[key] = {"error": str(exc)}
            ok = False
    checks.append(Check("stability", ok, detail))

    cm = comparability_matrix(fields, ids=["(1,1)", "(3-r,3+r)", "(3+r,3-r)"])
    checks.append(Check("incomparable", cm.all_incomparable, cm.to_dict()))

    perm = [1, 0] if spec.n == 2 else list(range(spec.n))
    sw = spec.swapped(perm)
    spec_sym = bool(np.array_equal(sw.d, spec.d) and np.array_equal(sw.coupling, spec.coupling)
                    and np.array_equal(sw.competition, spec.competition))
    set_closed = all(any(np.abs(v[perm] - w).max() <= 1e-12 for w in vecs) for v in vecs)
    checks.append(Check("swap-symmetry", spec_sym and set_closed,
                        {"system_symmetric": spec_sym, "set_closed": set_closed}))
    return CounterexampleReport(checks)


# -- continuation in the mutation strength -----------------------------------

@dataclass
class BranchPoint:
    epsilon: float
    state: SteadyState

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, **self.state.to_dict()}


@dataclass
class Branch:
    start: np.ndarray
    points: list = field(default_factory=list)
    terminated_at: Optional[float] = None
    reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {"start": self.start.tolist(), "points": [p.to_dict() for p in self.points],
                "terminated_at": self.terminated_at, "reason": self.reason}


def with_mutation(base: SystemSpec, eps: float) -> SystemSpec:
    n = base.n
    off = np.ones((n, n)) - np.eye(n)
    return base.replace(coupling=base.coupling + eps * off)


def mutation_continuation(base: SystemSpec, eps_path: Sequence[float],
                          grid: Optional[DomainGrid] = None, tol: float = 1e-10,
                          lattice: int = 9) -> list:
    """Follow the two stable semi-trivial states as off-diagonal mutation grows.

    For every ``eps`` in the increasing path, ``a_ij = eps`` for ``i != j``
    and Newton is seeded at the previous branch point.  A branch stops at the
    first ``eps`` where Newton fails or positivity is lost.
    """
    if not base.is_constant:
        raise ConfigError("continuation base needs constant coupling")
    off = ~np.eye(base.n, dtype=bool)
    if np.any(base.coupling[off] != 0):
        raise ConfigError("continuation base must have zero off-diagonal coupling")
    eps_path = [float(e) for e in eps_path]
    if any(b <= a for a, b in zip(eps_path, eps_path[1:])) or (eps_path and eps_path[0] <= 0):
        raise ConfigError("eps_path must be positive and increasing")
    grid = DomainGrid.line(1) if grid is None else grid

    stable_semi = []
    for st in find_constant_states(base, lattice=lattice, grid=grid):
        v = st.node0
        zero = v <= POSITIVE_THRESHOLD
        if zero.any() and not zero.all():
            attach_stability(base, grid, st)
            if st.stability.classification is Stability.STABLE:
                stable_semi.append(st)
    if len(stable_semi) != 2:
        raise NotBistableError(
            f"expected two stable semi-trivial states, found {len(stable_semi)}")

    branches = []
    for st in stable_semi:
        br = Branch(st.node0)
        prev = st.field
        for eps in eps_path:
            spec = with_mutation(base, eps)
            try:
                new = newton_steady(spec, grid, prev, tol)
            except (ConvergenceError, SingularJacobianError) as exc:
                br.terminated_at, br.reason = eps, f"divergence: {exc}"
                break
            if not new.positive:
                br.terminated_at, br.reason = eps, "lost positivity"
                break
            attach_stability(spec, grid, new)
            br.points.append(BranchPoint(eps, new))
            prev = new.field
        branches.append(br)
    return branches
