"""The reaction term ``b``, its hypotheses, and cooperativity of ``F(u) = A u - b(u)``.

Two kinds of ``b`` are supported: Lotka--Volterra competition
``b_i(u) = u_i sum_j c_ij u_j`` with exact formulas everywhere, and a
user-supplied vectorised callable whose Jacobian is taken by central
differences and whose hypotheses are checked on a sample lattice.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError

DEFAULT_SAMPLES = 17


class Nonlinearity:
    """Interface: ``b(u)`` and ``Db(u)`` for ``u`` of shape ``(n,)`` or ``(n, m)``."""

    n: int
    exact = False

    def __call__(self, u):
        raise NotImplementedError

    def jacobian(self, u):
        """``(n, n)`` for a point, ``(m, n, n)`` for ``m`` stacked points."""
        raise NotImplementedError


class LotkaVolterra(Nonlinearity):
    exact = True

    def __init__(self, C):
        self.C = np.asarray(C, dtype=float)
        self.n = self.C.shape[0]

    def pressure(self, u):
        """``sum_j c_ij u_j``, accumulated in a fixed order so species swaps are exact."""
        u = np.asarray(u, dtype=float)
        out = self.C[:, 0, None] * u[0] if u.ndim == 2 else self.C[:, 0] * u[0]
        for j in range(1, self.n):
            out = out + (self.C[:, j, None] * u[j] if u.ndim == 2 else self.C[:, j] * u[j])
        return out

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return u * self.pressure(u)

    def jacobian(self, u):
        u = np.asarray(u, dtype=float)
        p = self.pressure(u)
        if u.ndim == 1:
            return np.diag(p) + u[:, None] * self.C
        J = u.T[:, :, None] * self.C[None, :, :]
        idx = np.arange(self.n)
        J[:, idx, idx] += p.T
        return J


class SampledNonlinearity(Nonlinearity):
    """Wrap a vectorised callable ``f: (n, m) -> (n, m)``; Jacobian by central differences."""

    def __init__(self, func: Callable, n: int, step: float = 1e-6):
        self.func = func
        self.n = n
        self.step = step

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            return np.asarray(self.func(u[:, None]), dtype=float)[:, 0]
        return np.asarray(self.func(u), dtype=float)

    def jacobian(self, u):
        u = np.asarray(u, dtype=float)
        pts = u[:, None] if u.ndim == 1 else u
        m = pts.shape[1]
        J = np.empty((m, self.n, self.n))
        for j in range(self.n):
            e = np.zeros((self.n, 1))
            e[j] = self.step
            J[:, :, j] = ((self(pts + e) - self(pts - e)) / (2 * self.step)).T
        return J[0] if u.ndim == 1 else J


def _as_nonlinearity(C_or_b) -> Nonlinearity:
    if isinstance(C_or_b, Nonlinearity):
        return C_or_b
    return LotkaVolterra(C_or_b)


def b_eval(u_point, C) -> np.ndarray:
    """Lotka--Volterra competition ``b_i(u) = u_i sum_j c_ij u_j``."""
    return LotkaVolterra(C)(np.asarray(u_point, dtype=float))


def b_jacobian(u_point, C) -> np.ndarray:
    """``d b_i / d u_j = delta_ij sum_k c_ik u_k + u_i c_ij``."""
    return LotkaVolterra(C).jacobian(np.asarray(u_point, dtype=float))


# -- hypotheses --------------------------------------------------------------

@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    witness: Optional[dict] = None
    method: str = "analytic"

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "witness": self.witness,
                "method": self.method}


@dataclass
class HypothesisReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _lattice(box, samples):
    axes = [np.linspace(b / samples, b, samples) for b in box]
    return np.array(list(itertools.product(*axes))).T  # (n, samples**n)


def check_hypotheses(C, box, samples: int = DEFAULT_SAMPLES) -> HypothesisReport:
    """Check the structural hypotheses on ``b`` over the positive box ``(0, box]``.

    ``C`` is a competition matrix (Lotka--Volterra, decided analytically and
    cross-checked on the lattice) or any :class:`Nonlinearity` (lattice only).

    Returned check names: ``"b(0)=0"``, ``"Db(0)=0"``, ``"nondecreasing"``,
    ``"ratio-increasing"``, ``"superlinear"``.
    """
    box = np.asarray(box, dtype=float)
    if np.any(box <= 0):
        raise ConfigError("hypothesis box must be strictly positive")
    b = _as_nonlinearity(C)
    n = b.n
    rep = HypothesisReport()
    zero = np.zeros(n)
    b0 = b(zero)
    rep.checks.append(HypothesisCheck("b(0)=0", bool(np.all(b0 == 0) if b.exact else np.allclose(b0, 0, atol=1e-12)),
                                      None, "analytic" if b.exact else "sampled"))
    Db0 = b.jacobian(zero)
    ok = bool(np.allclose(Db0, 0, atol=0 if b.exact else 1e-6))
    rep.checks.append(HypothesisCheck("Db(0)=0", ok, None if ok else {"max_abs": float(np.abs(Db0).max())},
                                      "analytic" if b.exact else "sampled"))

    pts = _lattice(box, samples)
    J = b.jacobian(pts)

    if b.exact:
        Cm = b.C
        neg = np.argwhere(Cm < 0)
        # the lattice must agree with the sign test on C
        lattice_ok = bool(np.all(J >= 0))
        rep.checks.append(HypothesisCheck(
            "nondecreasing", neg.size == 0 and lattice_ok,
            None if neg.size == 0 else {"pair": [int(x) for x in neg[0]]},
            "analytic+sampled"))
        bad = np.argwhere(~(Cm > 0))
        rep.checks.append(HypothesisCheck(
            "ratio-increasing", bad.size == 0,
            None if bad.size == 0 else {"pair": [int(x) for x in bad[0]]}))
        diag_bad = np.flatnonzero(~(np.diag(Cm) > 0))
        rep.checks.append(HypothesisCheck(
            "superlinear", diag_bad.size == 0,
            None if diag_bad.size == 0 else {"species": int(diag_bad[0])}))
        return rep

    # sampled kind
    neg = np.argwhere(J < -1e-9)
    rep.checks.append(HypothesisCheck(
        "nondecreasing", neg.size == 0,
        None if neg.size == 0 else {"point": pts[:, neg[0][0]].tolist(),
                                    "pair": [int(neg[0][1]), int(neg[0][2])]},
        "sampled"))
    vals = b(pts)
    witness = None
    for j in range(n):
        step = np.zeros((n, 1))
        step[j] = box[j] / samples
        ratio_lo = vals / pts
        ratio_hi = b(pts + step) / pts
        bad = np.argwhere(~(ratio_hi > ratio_lo))
        if bad.size:
            i, k = bad[0]
            witness = {"pair": [int(i), j], "point": pts[:, k].tolist()}
            break
    rep.checks.append(HypothesisCheck("ratio-increasing", witness is None, witness, "sampled"))
    witness = None
    for i in range(n):
        scales = 10.0 ** np.arange(0, 7)
        u = np.repeat(box[:, None], scales.size, axis=1)
        u[i] = box[i] * scales
        r = b(u)[i] / u[i]
        if not (np.all(np.diff(r) > 0) and r[-1] > 100 * abs(r[0])):
            witness = {"species": i}
            break
    rep.checks.append(HypothesisCheck("superlinear", witness is None, witness, "sampled"))
    return rep


# -- cooperativity -----------------------------------------------------------

def _jsonable(x):
    if isinstance(x, float) and not np.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


@dataclass
class CooperativityReport:
    """Where ``F(u) = A(x) u - b(u)`` has nonnegative off-diagonal Jacobian.

    ``thresholds[i, j] = min_x a_ij(x) / c_ij`` bounds ``u_i`` for pair
    ``(i, j)``; ``cooperative_box[i] = min_{j != i} thresholds[i, j]``.
    ``witness`` is set when ``F`` is not cooperative on ``[0, box]``.
    """

    box: np.ndarray
    thresholds: Optional[np.ndarray]
    cooperative_box: Optional[np.ndarray]
    cooperative: bool
    witness: Optional[dict] = None

    def to_dict(self) -> dict:
        thr = None
        if self.thresholds is not None:
            thr = [[_jsonable(float(v)) for v in row] for row in self.thresholds]
        cb = None if self.cooperative_box is None else [_jsonable(float(v)) for v in self.cooperative_box]
        return {"box": self.box.tolist(), "thresholds": thr, "cooperative_box": cb,
                "verdict": "cooperative-on-box" if self.cooperative else "not-cooperative-at",
                "witness": self.witness}


def cooperativity_box(spec, box, samples: int = DEFAULT_SAMPLES) -> CooperativityReport:
    """Decide whether ``F`` is cooperative on ``[0, box]``.

    Lotka--Volterra: ``dF_i/du_j = a_ij(x) - u_i c_ij`` is smallest at the far
    corner, so the verdict and thresholds are exact.  Sampled ``b``: checked on
    a lattice over the box (corner and origin included).
    """
    box = np.asarray(box, dtype=float)
    n = spec.n
    A = spec.coupling if spec.coupling.ndim == 3 else spec.coupling[None]
    A_min = A.min(axis=0)
    off = ~np.eye(n, dtype=bool)

    if spec.nonlinearity_kind == "lotka-volterra":
        Cm = spec.competition
        with np.errstate(divide="ignore", invalid="ignore"):
            thr = np.where(Cm > 0, A_min / np.where(Cm > 0, Cm, 1.0), np.inf)
        thr[~off] = np.inf
        r = thr.min(axis=1) if n > 1 else np.array([np.inf])
        # worst-case derivative over nodes at the box corner
        dF = A_min - box[:, None] * Cm
        dF[~off] = np.inf
        if np.all(dF >= 0):
            return CooperativityReport(box, thr, r, True)
        i, j = np.unravel_index(np.argmin(dF), dF.shape)
        node = int(np.argmin(A[:, i, j]))
        witness = {"point": box.tolist(), "pair": [int(i), int(j)], "value": float(dF[i, j]),
                   "node": node if spec.coupling.ndim == 3 else None}
        return CooperativityReport(box, thr, r, False, witness)

    b = spec.nonlinearity
    axes = [np.linspace(0.0, bx, samples) for bx in box]
    pts = np.array(list(itertools.product(*axes))).T
    J = b.jacobian(pts)
    dF = A_min[None] - J
    dF[:, ~off] = np.inf
    k, i, j = np.unravel_index(np.argmin(dF), dF.shape)
    if dF[k, i, j] >= 0:
        return CooperativityReport(box, None, None, True)
    return CooperativityReport(box, None, None, False,
                               {"point": pts[:, k].tolist(), "pair": [int(i), int(j)],
                                "value": float(dF[k, i, j]), "node": None})


# -- falsifier for the uniform monotonicity claim ----------------------------

@dataclass
class MonotonicityCounterexample:
    """An instance where ``[M u1 - b(u1) - M u2 + b(u2)]_i < 0`` for every ``M``.

    Here ``u2 = v`` and ``u1 = v + epsilon e_k``.  ``m_coefficient`` is the
    coefficient of ``M`` in component ``i``, namely ``(u1 - u2)_i``; it is
    exactly zero because ``i != k``.
    """

    base: np.ndarray
    direction: int
    epsilon: float
    component: int
    value: float
    m_coefficient: float = 0.0

    def claim_component(self, M: float) -> float:
        """Component ``i`` of the claimed-nonnegative vector for a given ``M``."""
        return M * self.m_coefficient + self.value

    def to_dict(self) -> dict:
        return {"base": self.base.tolist(), "direction": self.direction,
                "epsilon": self.epsilon, "component": self.component,
                "value": self.value, "m_coefficient": self.m_coefficient,
                "independent_of_M": self.m_coefficient == 0.0}


def falsify_uniform_monotonicity(spec, lower, upper, epsilon: Optional[float] = None,
                                 min_epsilon: float = 1e-8) -> Optional[MonotonicityCounterexample]:
    """Refute ``M u1 - b(u1) >= M u2 - b(u2)`` for ordered ``u2 <= u1`` in a box.

    With ``v = lower`` and ``u1 = v + eps e_k``, component ``i != k`` of the
    difference is ``b_i(v) - b_i(v + eps e_k)``, free of ``M``.  The first
    strictly negative instance is returned; ``None`` when there is none
    (always the case for one species).  ``eps`` starts at half the smallest
    box gap and is divided by ten down to ``min_epsilon`` unless fixed.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = spec.n
    if lower.shape != (n,) or upper.shape != (n,):
        raise ConfigError(f"box corners need {n} entries")
    if not np.all(lower > 0):
        raise ConfigError("lower corner must be strictly positive")
    if not np.all(upper > lower):
        raise ConfigError("upper corner must be strictly above lower corner")
    if n < 2:
        return None
    b = spec.nonlinearity
    if epsilon is not None:
        if not (epsilon > 0 and np.all(lower + epsilon <= upper)):
            raise ConfigError(f"epsilon={epsilon} leaves the box")
        eps_list = [float(epsilon)]
    else:
        eps = float(np.min(upper - lower) / 2)
        eps_list = []
        while eps >= min_epsilon:
            eps_list.append(eps)
            eps /= 10
    v = lower
    bv = b(v)
    for eps in eps_list:
        for k in range(n):
            u1 = v.copy()
            u1[k] += eps
            bu1 = b(u1)
            for i in range(n):
                if i == k:
                    continue
                value = float(bv[i] - bu1[i])
                if value < 0:
                    return MonotonicityCounterexample(v.copy(), k, eps, i, value,
                                                      float(u1[i] - v[i]))
    return None
