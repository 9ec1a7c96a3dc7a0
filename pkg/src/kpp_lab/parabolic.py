"""IMEX Euler integration of the parabolic system ``u_t = d_i Lap u_i + F_i(u)``.

Used to probe stability, scan basins of attraction, and confirm multiplicity
independently of Newton.  Diffusion is implicit (one SPD sparse solve per
species), the reaction explicit.
"""

from __future__ import annotations

import csv
import enum
import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._parallel import ordered_map, worker_count
from .discretization import assemble_neumann_laplacian, residual_array
from .errors import ConvergenceError, NotSteadyError, PositivityError, SingularJacobianError
from .model import DomainGrid, StateField, SystemSpec
from .spectral import Stability, StabilityResult
from .steady import POSITIVE_THRESHOLD, SteadyState, attach_stability, newton_steady

RESIDUAL_TOL = 1e-9
EXTINCTION = 1e-10
BLOWUP = 1e12
MATCH_TOL = 1e-6
DT_FLOOR = 1e-5
WINDOW = 100
WINDOW_GROWTH = 10.0
NEGATIVE_TOL = -1e-12
DEFAULT_SEED = 0x5EED_1A2B_3C4D_5E6F


class Outcome(enum.Enum):
    CONVERGED = "ConvergedTo"
    EXTINCTION = "Extinction"
    DIVERGED = "Diverged"
    TIMEOUT = "Timeout"


class ImexStepper:
    """``(I - dt d_i Lap) u_i' = u_i + dt F_i(u)`` with factorizations cached per ``dt``.

    Arrays are ``(n, N)`` for one state or ``(n, S, N)`` for a batch of ``S``.
    """

    def __init__(self, spec: SystemSpec, grid: DomainGrid, dt: float):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.spec, self.grid, self.dt = spec, grid, dt
        self.lap = assemble_neumann_laplacian(grid)
        self._b = spec.nonlinearity
        eye = sp.identity(grid.n_nodes, format="csc")
        cache = {}
        self._solvers = []
        for di in spec.d:
            if di not in cache:
                try:
                    cache[di] = spla.splu((eye - dt * di * self.lap).tocsc())
                except RuntimeError as exc:
                    raise SingularJacobianError(str(exc)) from exc
            self._solvers.append(cache[di])

    def reaction(self, U: np.ndarray) -> np.ndarray:
        """``A(x) u - b(u)`` for ``(n, N)`` or ``(n, S, N)`` arrays."""
        spec = self.spec
        flat = U.reshape(spec.n, -1)
        reps = flat.shape[1] // self.grid.n_nodes
        A = spec.coupling
        out = np.empty_like(flat)
        for i in range(spec.n):
            if A.ndim == 2:
                acc = A[i, 0] * flat[0]
                for j in range(1, spec.n):
                    acc = acc + A[i, j] * flat[j]
            else:
                acc = np.tile(A[:, i, 0], reps) * flat[0]
                for j in range(1, spec.n):
                    acc = acc + np.tile(A[:, i, j], reps) * flat[j]
            out[i] = acc
        return (out - self._b(flat)).reshape(U.shape)

    def residual(self, U: np.ndarray, F: np.ndarray) -> np.ndarray:
        """Max-norm elliptic residual per state (scalar array for a single state)."""
        N = self.grid.n_nodes
        flat = U.reshape(self.spec.n, -1, N)
        lapU = np.stack([(self.lap @ flat[i].T).T for i in range(self.spec.n)])
        R = -self.spec.d[:, None, None] * lapU - F.reshape(flat.shape)
        return np.abs(R).max(axis=(0, 2))

    def step(self, U: np.ndarray, F: Optional[np.ndarray] = None) -> np.ndarray:
        F = self.reaction(U) if F is None else F
        rhs = U + self.dt * F
        if U.ndim == 2:
            return np.vstack([s.solve(rhs[i]) for i, s in enumerate(self._solvers)])
        return np.stack([s.solve(np.ascontiguousarray(rhs[i].T)).T
                         for i, s in enumerate(self._solvers)])


def imex_step(spec: SystemSpec, grid: DomainGrid, u: StateField, dt: float) -> StateField:
    """One implicit-diffusion / explicit-reaction Euler step."""
    return StateField.from_array(grid, ImexStepper(spec, grid, dt).step(u.as_array()))


@dataclass
class IntegrationOutcome:
    tag: Outcome
    final_field: StateField
    final_time: float
    final_residual: float
    steps: int
    dt: float
    state_id: Optional[str] = None
    state: Optional[SteadyState] = None
    is_new: bool = False
    trajectory: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        out = {"tag": self.tag.value, "state_id": self.state_id, "is_new": self.is_new,
               "final_time": self.final_time, "final_residual": self.final_residual,
               "steps": self.steps, "dt": self.dt}
        if self.state is not None:
            out["state"] = self.state.to_dict()
        return out


def _match(archive, fld) -> Optional[int]:
    for k, st in enumerate(archive):
        if st.field.n == fld.n and st.field.grid == fld.grid and st.field.distance(fld) <= MATCH_TOL:
            return k
    return None


def _state_id(archive, k):
    return archive[k].state_id or f"S{k}"


@dataclass
class _Raw:
    tag: Outcome
    U: np.ndarray
    t: float
    res: float
    steps: int
    dt: float
    traj: list


def _run(spec, grid, U0, dt, t_max, residual_tol, t0=0.0, steps0=0, log_every=0):
    """Integrate a batch ``U0`` of shape ``(n, S, N)``; one :class:`_Raw` per state."""
    stepper = ImexStepper(spec, grid, dt)
    S = U0.shape[1]
    results = [None] * S
    active = np.arange(S)
    U = np.array(U0, dtype=float)
    F = stepper.reaction(U)
    res = stepper.residual(U, F)
    ref = res.copy()
    t, steps = t0, steps0
    traj = []

    def log():
        V = U[:, 0, :]
        traj.append([t, *V.max(axis=1), *V.min(axis=1), *V.mean(axis=1)])

    if log_every:
        log()
    while active.size:
        top = U.max(axis=(0, 2))
        done = {}
        for k in range(active.size):
            if not np.isfinite(top[k]) or top[k] > BLOWUP:
                done[k] = Outcome.DIVERGED
            elif top[k] < EXTINCTION:
                done[k] = Outcome.EXTINCTION
            elif res[k] < residual_tol and top[k] >= POSITIVE_THRESHOLD:
                done[k] = Outcome.CONVERGED
            elif t >= t_max - 1e-12:
                done[k] = Outcome.TIMEOUT
        if done:
            for k, tag in done.items():
                results[active[k]] = _Raw(tag, U[:, k, :].copy(), t, float(res[k]), steps,
                                          stepper.dt, traj)
            keep = np.array([k for k in range(active.size) if k not in done], dtype=int)
            active, U, F, res, ref = active[keep], U[:, keep], F[:, keep], res[keep], ref[keep]
            if not active.size:
                break
        U = stepper.step(U, F)
        t += stepper.dt
        steps += 1
        low = float(U.min())
        if low < NEGATIVE_TOL:
            raise PositivityError(f"iterate reached {low:.3e} at t = {t:.6g} (dt = {stepper.dt:g}); "
                                  "reduce dt below the explicit reaction bound")
        F = stepper.reaction(U)
        res = stepper.residual(U, F)
        if log_every and steps % log_every == 0:
            log()
        if steps % WINDOW == 0:
            grow = (res > WINDOW_GROWTH * ref) & (stepper.dt > DT_FLOOR)
            if grow.any():
                # states needing a smaller dt leave the batch and continue alone
                new_dt = max(stepper.dt / 2, DT_FLOOR)
                for k in np.flatnonzero(grow):
                    sub = _run(spec, grid, U[:, k:k + 1, :], new_dt, t_max, residual_tol,
                               t, steps, log_every)[0]
                    if log_every:
                        sub.traj = traj + sub.traj
                    results[active[k]] = sub
                keep = np.flatnonzero(~grow)
                active, U, F, res = active[keep], U[:, keep], F[:, keep], res[keep]
            ref = res.copy()
    return results


def _classify(spec, grid, raw: _Raw, archive: list) -> IntegrationOutcome:
    final = StateField.from_array(grid, raw.U)
    out = IntegrationOutcome(raw.tag, final, raw.t, raw.res, raw.steps, raw.dt, trajectory=raw.traj)
    if raw.tag is not Outcome.CONVERGED:
        return out
    try:
        st = newton_steady(spec, grid, final, tol=1e-10, max_iters=3)
    except (ConvergenceError, SingularJacobianError):
        st = SteadyState(final, raw.res, final.is_positive(POSITIVE_THRESHOLD), None, 0)
    k = _match(archive, st.field)
    if k is None:
        st.state_id = f"S{len(archive)}"
        archive.append(st)
        k = len(archive) - 1
        out.is_new = True
    out.state_id = _state_id(archive, k)
    out.state = archive[k]
    return out


def integrate(spec: SystemSpec, grid: DomainGrid, u0: StateField, dt: float = 0.01,
              t_max: float = 500.0, archive: Optional[list] = None,
              residual_tol: float = RESIDUAL_TOL, log_every: int = 0) -> IntegrationOutcome:
    """Step until the elliptic residual drops below ``residual_tol`` or another stop fires.

    Stops: Extinction (max entry below 1e-10), Diverged (above 1e12),
    ConvergedTo (residual small and state not near zero; the limit is
    polished by at most three Newton steps and matched against ``archive``
    within 1e-6, else appended to it), Timeout at ``t_max``.

    ``dt`` is halved (floor 1e-5) when the residual at the end of a 100-step
    window exceeds ten times its value at the previous window end.  With
    ``log_every > 0`` rows ``(t, max_i, min_i, mean_i ...)`` are collected.
    """
    return integrate_many(spec, grid, [u0], dt, t_max, archive, residual_tol, log_every)[0]


def integrate_many(spec: SystemSpec, grid: DomainGrid, u0s: Sequence[StateField], dt: float = 0.01,
                   t_max: float = 500.0, archive: Optional[list] = None,
                   residual_tol: float = RESIDUAL_TOL, log_every: int = 0) -> list:
    """:func:`integrate` for several initial states, stepped together as one batch.

    New limits are appended to ``archive`` in input order.
    """
    archive = [] if archive is None else archive
    if not u0s:
        return []
    U0 = np.stack([u.as_array() for u in u0s], axis=1)
    if U0.min() < 0:
        raise ValueError("initial data must be nonnegative")
    raws = _run(spec, grid, U0, dt, t_max, residual_tol, log_every=log_every if len(u0s) == 1 else 0)
    return [_classify(spec, grid, r, archive) for r in raws]


def write_trajectory_csv(outcome: IntegrationOutcome, n: int, path) -> None:
    cols = (["t"] + [f"max_u{i + 1}" for i in range(n)] + [f"min_u{i + 1}" for i in range(n)]
            + [f"mean_u{i + 1}" for i in range(n)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in outcome.trajectory:
            w.writerow([f"{v:.17g}" for v in row])


def _batched(spec, grid, starts, dt, t_max, base):
    """Integrate in chunks, one chunk per worker; every chunk sees its own copy of ``base``."""
    if not starts:
        return []
    workers = max(1, worker_count())
    size = -(-len(starts) // workers)
    chunks = [starts[i:i + size] for i in range(0, len(starts), size)]
    parts = ordered_map(lambda c: integrate_many(spec, grid, c, dt, t_max, archive=list(base)), chunks)
    return [o for part in parts for o in part]


@dataclass
class ProbeVerdict:
    verdict: Stability
    outcomes: list
    seed: int
    amplitude: float
    spectral: Optional[StabilityResult]

    @property
    def agrees(self) -> bool:
        return self.spectral is not None and self.spectral.classification is self.verdict

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "seed": self.seed, "amplitude": self.amplitude,
                "trials": [o.to_dict() for o in self.outcomes],
                "spectral": None if self.spectral is None else self.spectral.to_dict(),
                "agrees": self.agrees}


def stability_probe(spec: SystemSpec, grid: DomainGrid, state: SteadyState, amplitude: float = 1e-3,
                    trials: int = 8, seed: int = DEFAULT_SEED, dt: float = 0.01,
                    t_max: float = 500.0) -> ProbeVerdict:
    """Empirical stability: perturb, integrate, and check every run comes back.

    Trial ``k`` adds ``amplitude * U(-1, 1)`` noise drawn from
    ``default_rng([seed, k])`` (clipped at zero).  The verdict is Stable iff
    every trial converges back to ``state``; it is compared with the
    spectral classification.
    """
    res = float(np.abs(residual_array(spec, grid, state.field.as_array())).max())
    if res >= RESIDUAL_TOL:
        raise NotSteadyError(f"probe needs a steady state, residual {res:.3e}")
    U0 = state.field.as_array()
    ref = SteadyState(state.field, state.residual_norm, state.positive, state_id="probe-target")

    starts = []
    for k in range(trials):
        rng = np.random.default_rng([seed, k])
        U = np.clip(U0 + amplitude * rng.uniform(-1.0, 1.0, U0.shape), 0.0, None)
        starts.append(StateField.from_array(grid, U))
    outcomes = _batched(spec, grid, starts, dt, t_max, [ref])
    back = all(o.tag is Outcome.CONVERGED and o.state_id == "probe-target" for o in outcomes)
    probe_state = SteadyState(state.field, state.residual_norm, state.positive)
    try:
        spectral = attach_stability(spec, grid, probe_state).stability
    except Exception:  # spectral failure is reported as disagreement, not raised
        spectral = None
    return ProbeVerdict(Stability.STABLE if back else Stability.UNSTABLE, outcomes, seed,
                        amplitude, spectral)


@dataclass
class BasinScan:
    seeds: list
    outcomes: list
    archive: list

    def tags(self) -> dict:
        return {tuple(s): (o.tag.value, o.state_id) for s, o in zip(self.seeds, self.outcomes)}

    def to_dict(self) -> dict:
        return {"seeds": [list(s) for s in self.seeds],
                "outcomes": [{"tag": o.tag.value, "state_id": o.state_id} for o in self.outcomes],
                "archive": [st.to_dict() for st in self.archive]}


def basin_scan(spec: SystemSpec, grid: DomainGrid, seed_lattice: int, box, dt: float = 0.01,
               t_max: float = 500.0, archive: Optional[Sequence[SteadyState]] = None) -> BasinScan:
    """Integrate from constant data on the ``seed_lattice**n`` points of ``[0, box]``.

    Runs are independent; newly found limits are merged into one archive in
    seed order, so state ids do not depend on scheduling.
    """
    box = np.broadcast_to(np.asarray(box, dtype=float), (spec.n,))
    if np.any(box <= 0):
        raise ValueError("basin box must be positive")
    base = list(archive or [])
    seeds = [tuple(float(x) for x in p)
             for p in itertools.product(*[np.linspace(0.0, b, seed_lattice) for b in box])]

    starts = [StateField.constant(grid, p) for p in seeds]
    outcomes = _batched(spec, grid, starts, dt, t_max, base)
    merged = list(base)
    for o in outcomes:
        if o.tag is not Outcome.CONVERGED:
            continue
        k = _match(merged, o.state.field)
        if k is None:
            st = o.state
            st.state_id = f"S{len(merged)}"
            merged.append(st)
            k = len(merged) - 1
        o.state_id = _state_id(merged, k)
        o.state = merged[k]
        o.is_new = k >= len(base)
    return BasinScan(seeds, outcomes, merged)
