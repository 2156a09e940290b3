"""Small dense convex solvers used by the alternating optimizer.

* ``solve_box_qp``: min x'Qx - 2b'x over a box, by cyclic coordinate descent
  with an occasional Newton step on the free coordinates.
* ``solve_separable_qcqp``: min sum(a x^2 - 2 b x) over [0, u] subject to
  sum_k c[l, k] x_k^2 <= d[l], by dual coordinate ascent on the multipliers.

Residuals in ``KktReport`` are dimensionless (scaled by the problem's own
magnitudes) so one tolerance works across wildly different units.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

_TINY = 1e-300


@dataclass
class BoxQp:
    Q: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, float)
        self.b = np.asarray(self.b, float)
        n = self.b.size
        self.lower = np.broadcast_to(np.asarray(self.lower, float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, float), (n,)).copy()
        if self.Q.shape != (n, n):
            raise ValueError(f"Q has shape {self.Q.shape}, expected {(n, n)}")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        qnorm = max(np.abs(self.Q).max(initial=0.0), _TINY)
        if np.abs(self.Q - self.Q.T).max(initial=0.0) > 1e-12 * qnorm:
            raise ValueError("Q is not symmetric")
        self.Q = (self.Q + self.Q.T) / 2
        if n and np.linalg.eigvalsh(self.Q)[0] < -1e-9 * qnorm:
            raise ValueError("Q is not positive semidefinite")

    def objective(self, x) -> float:
        x = np.asarray(x, float)
        return float(x @ self.Q @ x - 2 * self.b @ x)

    def gradient(self, x) -> np.ndarray:
        return 2 * (self.Q @ x - self.b)


@dataclass
class SeparableQcqp:
    a: np.ndarray  # (n,) quadratic coefficients
    b: np.ndarray  # (n,) linear coefficients
    upper: np.ndarray  # (n,) box [0, upper]
    c: np.ndarray  # (m, n) constraint coefficients
    d: np.ndarray  # (m,) constraint levels

    def __post_init__(self):
        self.a = np.asarray(self.a, float)
        self.b = np.asarray(self.b, float)
        n = self.a.size
        self.upper = np.broadcast_to(np.asarray(self.upper, float), (n,)).copy()
        self.c = np.asarray(self.c, float).reshape(-1, n)
        self.d = np.asarray(self.d, float).reshape(-1)
        if self.b.size != n or self.c.shape[0] != self.d.size:
            raise ValueError("inconsistent QCQP dimensions")
        if np.any(self.a < 0) or np.any(self.c < 0):
            raise ValueError("a and c must be nonnegative")
        if np.any(self.d <= 0):
            raise ValueError("constraint levels d must be positive")
        if np.any(self.upper < 0):
            raise ValueError("upper bounds must be nonnegative")

    def objective(self, x) -> float:
        x = np.asarray(x, float)
        return float(np.sum(self.a * x ** 2 - 2 * self.b * x))

    def constraint_values(self, x) -> np.ndarray:
        return self.c @ (np.asarray(x, float) ** 2)


@dataclass
class KktReport:
    stationarity: float
    primal_violation: float
    complementarity: float
    iterations: int
    converged: bool
    multipliers: np.ndarray = field(default=None)


# --- box QP -------------------------------------------------------------------

def _box_scale(problem: BoxQp) -> float:
    width = np.max(np.maximum(np.abs(problem.lower), np.abs(problem.upper)), initial=0.0)
    return max(2 * np.abs(problem.b).max(initial=0.0),
               2 * np.abs(problem.Q).max(initial=0.0) * width, _TINY)


def box_qp_residuals(problem: BoxQp, x) -> tuple:
    """(stationarity, primal violation, complementarity), all scaled."""
    x = np.asarray(x, float)
    lo, hi = problem.lower, problem.upper
    scale = _box_scale(problem)
    grad = problem.gradient(x)
    at_lo, at_hi = x <= lo, x >= hi
    pg = np.where(at_lo & at_hi, 0.0,
                  np.where(at_lo, np.minimum(grad, 0.0),
                           np.where(at_hi, np.maximum(grad, 0.0), grad)))
    width = np.maximum(hi - lo, _TINY)
    primal = np.max(np.maximum(lo - x, 0) + np.maximum(x - hi, 0), initial=0.0)
    compl = np.max((np.maximum(grad, 0) * np.clip(x - lo, 0, None)
                    + np.maximum(-grad, 0) * np.clip(hi - x, 0, None)) / width, initial=0.0)
    return (float(np.abs(pg).max(initial=0.0) / scale),
            float(primal / max(np.abs(width).max(initial=0.0), _TINY)),
            float(compl / scale))


def _newton_on_free_set(problem: BoxQp, x: np.ndarray) -> np.ndarray | None:
    free = (x > problem.lower) & (x < problem.upper)
    if not free.any():
        return None
    Q, b = problem.Q, problem.b
    rhs = b[free] - Q[np.ix_(free, ~free)] @ x[~free]
    sol, *_ = np.linalg.lstsq(Q[np.ix_(free, free)], rhs, rcond=None)
    cand = x.copy()
    cand[free] = sol
    return np.clip(cand, problem.lower, problem.upper)


def solve_box_qp(problem: BoxQp, tol: float = 1e-8, max_iter: int = 10_000,
                 x0=None) -> tuple:
    """Minimise x'Qx - 2b'x over [lower, upper].

    Coordinate minimisation is exact per coordinate, so the objective never
    increases; a Newton step on the currently free coordinates is attempted
    after each sweep and kept only if it lowers the objective.
    """
    Q, b, lo, hi = problem.Q, problem.b, problem.lower, problem.upper
    n = b.size
    x = np.clip(np.zeros(n) if x0 is None else np.asarray(x0, float), lo, hi)
    grad = problem.gradient(x)
    diag = np.diag(Q).copy()
    obj = problem.objective(x)

    it = 0
    stat, primal, compl = box_qp_residuals(problem, x)
    while it < max_iter and max(stat, compl) > tol:
        it += 1
        for i in range(n):
            if diag[i] > 0:
                new = min(max(x[i] - grad[i] / (2 * diag[i]), lo[i]), hi[i])
            elif grad[i] > 0:
                new = lo[i]
            elif grad[i] < 0:
                new = hi[i]
            else:
                continue
            delta = new - x[i]
            if delta != 0.0:
                x[i] = new
                grad += 2 * delta * Q[:, i]
        obj = problem.objective(x)

        cand = _newton_on_free_set(problem, x)
        if cand is not None:
            cand_obj = problem.objective(cand)
            if cand_obj < obj:
                x, obj = cand, cand_obj
        grad = problem.gradient(x)
        stat, primal, compl = box_qp_residuals(problem, x)

    report = KktReport(stat, primal, compl, it, max(stat, compl) <= tol and primal == 0.0)
    return x, report


# --- separable QCQP ------------------------------------------------------------

def _qcqp_scale(problem: SeparableQcqp) -> float:
    u = problem.upper
    return max(np.max(problem.a * u ** 2, initial=0.0),
               np.max(np.abs(problem.b) * u, initial=0.0), _TINY)


def qcqp_primal(problem: SeparableQcqp, lam) -> np.ndarray:
    """Minimiser of the Lagrangian over the box for multipliers ``lam``."""
    lam = np.asarray(lam, float)
    denom = problem.a + lam @ problem.c
    b, u = problem.b, problem.upper
    x = np.zeros_like(b)
    pos = b > 0
    flat = pos & (denom <= 0)
    x[flat] = u[flat]
    curved = pos & (denom > 0)
    x[curved] = np.minimum(b[curved] / denom[curved], u[curved])
    return x


def qcqp_residuals(problem: SeparableQcqp, x, lam) -> tuple:
    """(stationarity, primal violation, complementarity), all scaled.

    Stationarity compares x with the clamped Lagrangian minimiser at ``lam``.
    """
    x = np.asarray(x, float)
    lam = np.asarray(lam, float)
    u = np.maximum(problem.upper, _TINY)
    stat = np.max(np.abs(x - qcqp_primal(problem, lam)) / u, initial=0.0)
    slack = problem.constraint_values(x) - problem.d
    box = np.max(np.maximum(-x, 0) + np.maximum(x - problem.upper, 0), initial=0.0)
    primal = max(np.max(np.maximum(slack, 0) / problem.d, initial=0.0), box / u.max(initial=1.0))
    compl = np.max(lam * np.abs(slack), initial=0.0) / _qcqp_scale(problem)
    return float(stat), float(primal), float(compl)


def solve_separable_qcqp(problem: SeparableQcqp, tol: float = 1e-8,
                         max_iter: int = 10_000) -> tuple:
    """Solve the separable QCQP by exact coordinate ascent on the dual.

    Each multiplier is set by a scalar root find so that its constraint is
    tight (or to zero when slack). The returned point is always feasible: a
    slightly infeasible dual iterate is scaled back onto the constraint set.
    """
    c_n = problem.c / problem.d[:, None]  # constraints normalised to <= 1
    m = c_n.shape[0]
    lam_n = np.zeros(m)
    scale = _qcqp_scale(problem)
    a_s, b_s = problem.a / scale, problem.b / scale
    u = problem.upper

    def primal(lam):
        denom = a_s + lam @ c_n
        x = np.zeros_like(b_s)
        pos = b_s > 0
        flat = pos & (denom <= 0)
        x[flat] = u[flat]
        curved = pos & (denom > 0)
        x[curved] = np.minimum(b_s[curved] / denom[curved], u[curved])
        return x

    def to_original(lam):
        return lam * scale / problem.d

    x = primal(lam_n)
    it = 0
    stat, viol, compl = qcqp_residuals(problem, x, to_original(lam_n))
    while it < max_iter and max(stat, viol, compl) > tol:
        it += 1
        for l in range(m):
            def excess(t, l=l):
                trial = lam_n.copy()
                trial[l] = t
                return c_n[l] @ primal(trial) ** 2 - 1.0

            if excess(0.0) <= 0:
                lam_n[l] = 0.0
                continue
            hi = max(lam_n[l], 1.0)
            while excess(hi) > 0:
                hi *= 2
            lam_n[l] = brentq(excess, 0.0, hi, xtol=1e-15 * hi, rtol=1e-15, maxiter=500)
        x = primal(lam_n)
        stat, viol, compl = qcqp_residuals(problem, x, to_original(lam_n))

    worst = np.max(c_n @ x ** 2, initial=0.0)
    if worst > 1:
        x = x / np.sqrt(worst)
    lam = to_original(lam_n)
    stat, viol, compl = qcqp_residuals(problem, x, lam)
    report = KktReport(stat, viol, compl, it, max(stat, viol, compl) <= tol, multipliers=lam)
    return x, report
