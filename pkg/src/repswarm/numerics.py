"""Dense complex linear algebra helpers and a small convex QP solver.

All routines are pure functions of their inputs. Matrices are plain
``numpy.ndarray`` objects; :func:`as_cmat` is the single validation point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "SingularMatrix",
    "Infeasible",
    "MaxIterations",
    "as_cmat",
    "cmat_inverse",
    "cmat_det",
    "QpProblem",
    "solve_qp",
    "qp_objective",
]

COND_CAP = 1e12
PIVOT_RTOL = 1e-14


class SingularMatrix(np.linalg.LinAlgError):
    """Raised when a matrix is singular or too ill-conditioned to invert."""


class Infeasible(ValueError):
    """Raised when a QP has no feasible point."""


class MaxIterations(RuntimeError):
    """Raised when the QP solver hits its iteration cap."""


def as_cmat(a, *, square: bool = False) -> np.ndarray:
    """Validate and convert ``a`` to a 2-D complex array."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if square and m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def _inf_norm(a: np.ndarray) -> float:
    return float(np.max(np.sum(np.abs(a), axis=1)))


def cmat_inverse(a, cond_cap: float = COND_CAP) -> np.ndarray:
    """Invert a square complex matrix with explicit singularity checks.

    Parameters
    ----------
    a : array_like, shape (n, n)
    cond_cap : float
        Largest accepted 1-norm condition number.

    Raises
    ------
    SingularMatrix
        If a pivot of the LU factorization falls below ``1e-14 * ||a||_inf``
        or the condition number exceeds ``cond_cap``.
    """
    a = as_cmat(a, square=True)
    n = a.shape[0]
    norm = _inf_norm(a)
    if norm == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    if np.min(np.abs(np.diag(lu))) < PIVOT_RTOL * norm:
        raise SingularMatrix("pivot below tolerance")
    x = scipy.linalg.lu_solve((lu, piv), np.eye(n, dtype=complex), check_finite=False)
    if _inf_norm(a) * _inf_norm(x) > cond_cap:
        raise SingularMatrix(f"condition number exceeds {cond_cap:g}")
    return x


def cmat_det(a) -> complex:
    """Determinant by partially pivoted LU; exact product for triangular input."""
    a = as_cmat(a, square=True)
    if np.allclose(a, np.triu(a), rtol=0, atol=0) or np.allclose(a, np.tril(a), rtol=0, atol=0):
        return complex(np.prod(np.diag(a)))
    with warnings.catch_warnings():
        # a singular input simply has determinant zero
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    sign = -1.0 if np.count_nonzero(piv != np.arange(a.shape[0])) % 2 else 1.0
    return complex(sign * np.prod(np.diag(lu)))


# --------------------------------------------------------------------------
# Quadratic programming
# --------------------------------------------------------------------------


@dataclass
class QpProblem:
    """``min 1/2 x'Qx + c'x`` s.t. ``lower <= x <= upper`` and ``ineqA x <= ineqB``."""

    Q: np.ndarray
    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    ineqA: np.ndarray = field(default=None)
    ineqB: np.ndarray = field(default=None)

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = self.c.size
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if self.ineqA is None:
            self.ineqA = np.zeros((0, n))
            self.ineqB = np.zeros(0)
        self.ineqA = np.asarray(self.ineqA, dtype=float).reshape(-1, n)
        self.ineqB = np.atleast_1d(np.asarray(self.ineqB, dtype=float))
        if self.Q.shape != (n, n):
            raise ValueError(f"Q has shape {self.Q.shape}, expected {(n, n)}")
        if self.ineqB.shape != (self.ineqA.shape[0],):
            raise ValueError("ineqA and ineqB disagree in row count")
        scale = max(1.0, float(np.max(np.abs(self.Q))) if n else 1.0)
        if np.max(np.abs(self.Q - self.Q.T), initial=0.0) > 1e-10 * scale:
            raise ValueError("Q is not symmetric")
        self.Q = 0.5 * (self.Q + self.Q.T)
        if np.any(self.lower > self.upper):
            raise Infeasible("lower bound exceeds upper bound")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("bounds must be finite")
        if np.any(self.ineqA @ self.lower > self.ineqB + 1e-12 * (1 + np.abs(self.ineqB))):
            raise Infeasible("the lower bound violates a linear inequality")

    @property
    def n(self) -> int:
        return self.c.size


def qp_objective(p: QpProblem, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(0.5 * x @ p.Q @ x + p.c @ x)


def _null_space(a: np.ndarray, n: int) -> np.ndarray:
    if a.shape[0] == 0:
        return np.eye(n)
    u, s, vh = np.linalg.svd(a)
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
    return vh[rank:].T.conj().real


def solve_qp(p: QpProblem, tol: float = 1e-8, max_iter: int = 10_000) -> np.ndarray:
    """Solve a small convex QP with a primal active-set method.

    The problem is rescaled so that every box has unit width before
    iterating; stationarity and feasibility are then checked in the scaled
    coordinates against ``tol``. Zero-curvature directions (singular ``Q``)
    are followed to the nearest blocking constraint, which always exists
    because the box is bounded.

    Parameters
    ----------
    p : QpProblem
    tol : float
        KKT tolerance (stationarity, complementarity, feasibility).
    max_iter : int

    Returns
    -------
    x : ndarray, shape (n,)

    Raises
    ------
    Infeasible
        If the constraints admit no point.
    MaxIterations
        If the iteration cap is reached first.
    """
    n = p.n
    if n == 0:
        return np.zeros(0)
    if n == 1:
        return _solve_scalar(p, tol)
    width = p.upper - p.lower
    fixed = width <= 0.0
    scale = np.where(fixed, 1.0, width)

    # x = lower + scale * z, z in [0, 1]
    Q = p.Q * np.outer(scale, scale)
    g0 = scale * (p.Q @ p.lower + p.c)
    A_lin = p.ineqA * scale
    b_lin = p.ineqB - p.ineqA @ p.lower
    row_norm = np.linalg.norm(A_lin, axis=1)
    keep = row_norm > 0
    if np.any(b_lin[~keep] < -tol):
        raise Infeasible("constant inequality row is violated")
    A_lin = A_lin[keep] / row_norm[keep, None]
    b_lin = b_lin[keep] / row_norm[keep]

    obj_scale = max(float(np.max(np.abs(Q))), float(np.max(np.abs(g0))), 1e-300)
    Q = Q / obj_scale
    g0 = g0 / obj_scale

    # all constraints as rows of A z <= b: linear rows, upper bounds, lower bounds
    eye = np.eye(n)
    A = np.vstack([A_lin, eye, -eye])
    b = np.concatenate([b_lin, np.where(fixed, 0.0, 1.0), np.zeros(n)])
    m = A.shape[0]

    z = np.zeros(n)
    if np.any(A @ z > b + tol):
        raise Infeasible("starting point infeasible")
    active = [i for i in range(m) if abs(A[i] @ z - b[i]) <= tol]
    active = _independent_rows(A, active)

    for _ in range(max_iter):
        grad = Q @ z + g0
        Aw = A[active]
        Z = _null_space(Aw, n)
        step = None
        unbounded_dir = False
        if Z.shape[1] > 0:
            gz = Z.T @ grad
            Hz = Z.T @ Q @ Z
            w, V = np.linalg.eigh(Hz)
            wmax = max(float(np.max(np.abs(w))), 1.0)
            pos = w > 1e-11 * wmax
            coeff = V.T @ gz
            null_part = V[:, ~pos] @ coeff[~pos]
            if np.linalg.norm(null_part) > 1e-12 * max(1.0, np.linalg.norm(gz)):
                # descent along a zero-curvature direction
                step = -Z @ null_part
                unbounded_dir = True
            else:
                step = -Z @ (V[:, pos] @ (coeff[pos] / w[pos]))
        if step is not None and np.linalg.norm(step) > 1e-13:
            Ap = A @ step
            slack = b - A @ z
            inactive = np.setdiff1d(np.arange(m), active)
            blocking = inactive[Ap[inactive] > 1e-14]
            t = np.inf if unbounded_dir else 1.0
            hit = -1
            if blocking.size:
                ratios = np.maximum(slack[blocking], 0.0) / Ap[blocking]
                j = int(np.argmin(ratios))
                if ratios[j] < t:
                    t = float(ratios[j])
                    hit = int(blocking[j])
            if not np.isfinite(t):
                raise MaxIterations("unbounded direction in a bounded problem")
            z = z + t * step
            if hit >= 0:
                active = _independent_rows(A, active + [hit])
            continue

        # stationary on the working set: check multipliers
        grad = Q @ z + g0
        if active:
            lam, *_ = np.linalg.lstsq(A[active].T, -grad, rcond=None)
        else:
            lam = np.zeros(0)
        if lam.size == 0 or np.min(lam) >= -tol:
            return _finish(p, z, scale, tol)
        drop = int(np.argmin(lam))
        active = active[:drop] + active[drop + 1:]
    raise MaxIterations(f"no convergence in {max_iter} iterations")


def _solve_scalar(p: QpProblem, tol: float) -> np.ndarray:
    """Exact 1-D case: clamp the parabola vertex to the feasible interval."""
    lo, hi = float(p.lower[0]), float(p.upper[0])
    for a, b in zip(p.ineqA[:, 0], p.ineqB):
        if a > 0:
            hi = min(hi, b / a)
        elif a < 0:
            lo = max(lo, b / a)
        elif b < -tol:
            raise Infeasible("constant inequality row is violated")
    if hi < lo:
        raise Infeasible("empty feasible interval")
    q, c = float(p.Q[0, 0]), float(p.c[0])
    if q > 0:
        x = min(max(-c / q, lo), hi)
    else:
        x = lo if c >= 0 else hi
    return np.array([x])


def _independent_rows(A: np.ndarray, rows: list) -> list:
    out: list = []
    for r in sorted(set(rows), key=rows.index):
        cand = out + [r]
        if np.linalg.matrix_rank(A[cand], tol=1e-10) == len(cand):
            out = cand
    return out


def _finish(p: QpProblem, z: np.ndarray, scale: np.ndarray, tol: float) -> np.ndarray:
    z = np.clip(z, 0.0, 1.0)
    x = p.lower + scale * z
    x = np.minimum(np.maximum(x, p.lower), p.upper)
    if p.ineqA.shape[0]:
        viol = p.ineqA @ x - p.ineqB
        if np.max(viol) > tol * max(1.0, float(np.max(np.abs(p.ineqB)))):
            raise Infeasible("solution violates a linear inequality")
    return x
