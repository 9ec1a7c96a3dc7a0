"""Principal eigenvalue of the linearisation at zero, and stability spectra.

``L = -diag(d_i Delta_h) - A(x)`` has nonpositive off-diagonal entries, so
``c I - L`` with ``c = 1 + max diag(L)`` is entrywise nonnegative and
irreducible (``A`` essentially positive, grid connected).  Power iteration
from the all-ones vector therefore converges to its Perron root ``rho`` and
``lambda_1 = c - rho`` comes with a strictly positive eigenfunction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import dense
from .discretization import BlockOperator, laplacian_eigenvalues, residual, residual_jacobian
from .errors import ComplexLeadingPairError, ConvergenceError, NotSteadyError, SingularJacobianError
from .model import DomainGrid, StateField, SystemSpec

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 50_000
MARGINAL_BAND = 1e-8


@dataclass
class EigenResult:
    lambda1: float
    eigenfunction: StateField
    residual: float
    iterations: int
    method: str = "power"

    def to_dict(self) -> dict:
        return {"lambda1": self.lambda1, "residual": self.residual,
                "iterations": self.iterations, "method": self.method,
                "eigenfunction_min": float(self.eigenfunction.values.min())}


class Stability(enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"


class StabilityMethod(enum.Enum):
    PER_MODE_EXACT = "PerModeExact"
    PROPAGATOR_POWER_ITERATION = "PropagatorPowerIteration"


def classify(growth_rate: float, band: float = MARGINAL_BAND) -> Stability:
    if growth_rate > band:
        return Stability.UNSTABLE
    if growth_rate < -band:
        return Stability.STABLE
    return Stability.MARGINAL


@dataclass
class StabilityResult:
    """Rightmost real part of the spectrum of the linearisation at a state.

    ``mode_matrix`` holds the mode-0 (spatially constant) reduced matrix
    ``J(u) = A - Db(u)`` when the per-mode method is used.
    """

    leading_growth_rate: float
    classification: Stability
    method: StabilityMethod
    band: float = MARGINAL_BAND
    leading_mode: Optional[int] = None
    mode_matrix: Optional[np.ndarray] = field(default=None, repr=False)
    iterations: int = 0

    @property
    def mode_trace(self) -> Optional[float]:
        return None if self.mode_matrix is None else float(np.trace(self.mode_matrix))

    @property
    def mode_determinant(self) -> Optional[float]:
        if self.mode_matrix is None:
            return None
        M = self.mode_matrix
        if M.shape == (2, 2):
            return float(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
        return float(np.linalg.det(M))

    def to_dict(self) -> dict:
        out = {"growth_rate": self.leading_growth_rate,
               "classification": self.classification.value,
               "method": self.method.value, "band": self.band}
        if self.leading_mode is not None:
            out["leading_mode"] = self.leading_mode
        if self.mode_matrix is not None:
            out["mode0_matrix"] = self.mode_matrix.tolist()
            out["mode0_trace"] = self.mode_trace
            out["mode0_determinant"] = self.mode_determinant
        if self.iterations:
            out["iterations"] = self.iterations
        return out


def principal_eigenpair(op: BlockOperator, tol: float = DEFAULT_TOL,
                        max_iters: int = DEFAULT_MAX_ITERS, method: str = "power") -> EigenResult:
    """Principal eigenvalue and positive eigenfunction of ``L``.

    ``method="power"`` iterates on ``c I - L``.  ``method="shift-invert"``
    iterates on ``(L - sigma I)^{-1}`` with ``sigma`` below the smallest row
    sum of ``L``, a nonsingular M-matrix whose inverse is again positive; it
    reaches the same Perron pair in far fewer steps on fine grids.

    Converged when the relative change of the Rayleigh estimate and the
    residual ``||L phi - lambda phi||_inf`` (``max phi = 1``) are both below
    ``tol``.  Raises :class:`ConvergenceError` carrying the last residual.
    """
    L = op.matrix.tocsr()
    N = L.shape[0]
    if method == "power":
        c = 1.0 + L.diagonal().max()
        B = (c * sp.identity(N, format="csr") - L).tocsr()
        apply = B.__matmul__
    elif method == "shift-invert":
        sigma = float(np.asarray(L.sum(axis=1)).min()) - 1.0
        lu = spla.splu((L - sigma * sp.identity(N)).tocsc())
        apply = lu.solve
    else:
        raise ValueError(f"unknown method {method!r}")

    x = np.ones(N)
    rho_old = np.nan
    lam, res = np.nan, np.inf
    for it in range(1, max_iters + 1):
        y = apply(x)
        rho = float(x @ y) / float(x @ x)
        lam = c - rho if method == "power" else sigma + 1.0 / rho
        res = float(np.abs(L @ x - lam * x).max())
        change = abs(rho - rho_old) / abs(rho)
        x = y / y.max()
        if change < tol and res < tol:
            break
        rho_old = rho
    else:
        raise ConvergenceError(
            f"principal eigenpair not converged after {max_iters} iterations (residual {res:.3e})",
            residual=res, iterations=max_iters)
    phi = StateField(op.grid, op.n, x)
    if not np.all(x > 0):
        raise ConvergenceError("eigenfunction lost positivity", residual=res, iterations=it)
    return EigenResult(lam, phi, float(np.abs(L @ x - lam * x).max()), it, method)


def dense_principal_eigenvalue(op: BlockOperator) -> float:
    """Oracle: smallest real part over the full dense spectrum of ``L``."""
    return dense.leftmost_real(op.to_dense())


def _rightmost_real(M: np.ndarray) -> float:
    return float(dense.rightmost(M).real)


def constant_state_residual(spec: SystemSpec, u_const) -> float:
    u = np.asarray(u_const, dtype=float)
    b = spec.nonlinearity(u)
    return float(np.abs(spec.coupling @ u - b).max())


def stability_of_constant_state(spec: SystemSpec, grid: DomainGrid, u_const,
                                band: float = MARGINAL_BAND,
                                steady_tol: float = 1e-8) -> StabilityResult:
    """Exact stability of a spatially constant steady state.

    Cosine mode ``k`` with Laplacian eigenvalue ``mu_k <= 0`` decouples to the
    ``n x n`` matrix ``J - diag(d_i |mu_k|)``, ``J = A - Db(u)``.  The growth
    rate is the largest rightmost real part over all modes.
    """
    if not spec.is_constant:
        raise ValueError("per-mode reduction needs a spatially constant A")
    u = np.asarray(u_const, dtype=float)
    res = constant_state_residual(spec, u)
    if res > steady_tol:
        raise NotSteadyError(f"state {u.tolist()} has residual {res:.3e}")
    J = spec.coupling - spec.nonlinearity.jacobian(u)
    mus = np.unique(np.abs(laplacian_eigenvalues(grid)))
    best, best_k = -np.inf, 0
    for k, mu in enumerate(mus):
        g = _rightmost_real(J - np.diag(spec.d * mu))
        if g > best:
            best, best_k = g, k
    return StabilityResult(best, classify(best, band), StabilityMethod.PER_MODE_EXACT,
                           band, best_k, J)


def _complex_pair_dominates(lu, x, y) -> bool:
    """Fit ``P y = alpha y + beta x``; complex roots of ``z^2 - alpha z - beta`` flag a rotating pair."""
    z = lu.solve(y)
    basis = np.column_stack([y, x])
    coef, *_ = np.linalg.lstsq(basis, z, rcond=None)
    fit = np.abs(basis @ coef - z).max() / np.abs(z).max()
    alpha, beta = coef
    disc = alpha * alpha + 4.0 * beta
    return bool(fit < 1e-8 and disc < 0 and np.sqrt(-disc) > 1e-6 * abs(alpha))


def _propagator_iteration(J: sp.csr_matrix, tol: float, max_iters: int, seed: int):
    N = J.shape[0]
    norm = float(np.abs(J).sum(axis=1).max())
    tau = 0.1 / norm if norm > 0 else 0.1
    try:
        lu = spla.splu((sp.identity(N) - tau * J).tocsc())
    except RuntimeError as exc:
        raise SingularJacobianError(str(exc)) from exc
    x = np.random.default_rng(seed).uniform(0.5, 1.5, N)
    x /= np.abs(x).max()
    # residual target on the growth-rate scale: d(growth) ~ d(nu) / tau
    target = max(tol * tau, 64 * np.finfo(float).eps)
    window = 500
    res = np.inf
    for it in range(1, max_iters + 1):
        y = lu.solve(x)
        nu = float(x @ y) / float(x @ x)
        res = float(np.abs(y - nu * x).max())
        if it > 2 and res < target:
            return nu, tau, it
        if it % window == 0 and _complex_pair_dominates(lu, x, y):
            raise ComplexLeadingPairError(
                "propagator iterates rotate in a plane: complex rightmost pair",
                residual=res, iterations=it)
        x = y / np.abs(y).max()
    raise ConvergenceError("propagator power iteration not converged", residual=res,
                           iterations=max_iters)


def stability_of_state(spec: SystemSpec, grid: DomainGrid, state, tol: float = 1e-10,
                       max_iters: int = 200_000, band: float = MARGINAL_BAND,
                       steady_tol: float = 1e-8, seed: int = 0) -> StabilityResult:
    """Stability of an arbitrary steady state by propagator power iteration.

    Iterates on ``(I - tau J)^{-1}``, ``tau = 0.1 / ||J||_inf``, where ``J``
    is the full linearisation of ``d_i Delta u_i + F_i(u)``.  The dominant
    propagator eigenvalue ``nu`` maps back to the growth rate
    ``(1 - 1/nu) / tau``.  Only valid when the rightmost eigenvalue is real;
    a complex rightmost pair raises :class:`ComplexLeadingPairError`.
    """
    field_ = state.field if hasattr(state, "field") else state
    res = float(np.abs(residual(spec, grid, field_).values).max())
    if res > steady_tol:
        raise NotSteadyError(f"state residual {res:.3e} exceeds {steady_tol:.1e}")
    J = -residual_jacobian(spec, grid, field_)
    nu, tau, its = _propagator_iteration(J.tocsr(), tol, max_iters, seed)
    growth = (1.0 - 1.0 / nu) / tau
    return StabilityResult(growth, classify(growth, band),
                           StabilityMethod.PROPAGATOR_POWER_ITERATION, band, iterations=its)
