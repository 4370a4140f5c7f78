"""Ridge / lasso refitting of leaf coefficients by cyclic coordinate descent.

Objective (column 0 is the unpenalized intercept unless ``intercept=False``)::

    ridge:  ||y - Phi b||^2 + lam * sum_{k>=1} b_k^2
    lasso:  ||y - Phi b||^2 + lam * sum_{k>=1} |b_k|

The squared error is the plain sum, not scaled by 1/n or 1/2.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

METHODS = ("ridge", "lasso")
# above this many rows the ridge warm start uses CG instead of a dense dual factorization
_DUAL_MAX_ROWS = 6000
# the interior-point lasso start factors a KKT system that fills in badly; skip it above this many nonzeros
_IPM_MAX_NNZ = 2_000_000


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RefitSpec:
    method: str
    lam: float
    tol: float = 1e-7
    max_sweeps: int = 10000
    # column 0 is an unpenalized intercept; False penalizes every column
    intercept: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")


@dataclass(eq=False)
class RefitResult:
    beta: np.ndarray
    spec: RefitSpec
    sweeps_used: int
    converged: bool
    objective_trace: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))

    @property
    def intercept(self) -> float:
        return float(self.beta[0])

    def to_dict(self) -> dict:
        nz = np.flatnonzero(self.beta[1:]) + 1
        return {
            "method": self.spec.method,
            "lambda": self.spec.lam,
            "intercept": self.intercept,
            "coefficients": [[int(k), float(self.beta[k])] for k in nz],
            "n_columns": int(self.beta.shape[0]),
            "sweeps_used": self.sweeps_used,
            "converged": self.converged,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def beta_from_dict(d: dict) -> np.ndarray:
        beta = np.zeros(d["n_columns"])
        beta[0] = d["intercept"]
        for k, b in d["coefficients"]:
            beta[k] = b
        return beta


def _csc(design) -> sp.csc_matrix:
    mat = sp.csc_matrix(design, dtype=np.float64)
    mat.sort_indices()
    return mat


def objective(design, y, beta, spec: RefitSpec) -> float:
    r = np.asarray(y, dtype=np.float64) - design @ beta
    b = np.asarray(beta)[int(spec.intercept):]
    pen = np.sum(b * b) if spec.method == "ridge" else np.sum(np.abs(b))
    return float(r @ r + spec.lam * pen)


@njit(cache=True)
def _sweep(cols, indptr, indices, data, sq, r, beta, lam, lasso, free):
    half = 0.5 * lam
    max_step = 0.0
    for k in cols:
        a = sq[k]
        if a == 0.0:
            new = 0.0
        else:
            rho = a * beta[k]
            for j in range(indptr[k], indptr[k + 1]):
                rho += data[j] * r[indices[j]]
            if k < free:
                new = rho / a
            elif lasso:
                if rho > half:
                    new = (rho - half) / a
                elif rho < -half:
                    new = (rho + half) / a
                else:
                    new = 0.0
            else:
                new = rho / (a + lam)
        step = new - beta[k]
        if step != 0.0:
            for j in range(indptr[k], indptr[k + 1]):
                r[indices[j]] -= data[j] * step
            beta[k] = new
            if abs(step) > max_step:
                max_step = abs(step)
    return max_step


@njit(cache=True)
def _objective(r, beta, lam, lasso, free):
    obj = 0.0
    for i in range(r.shape[0]):
        obj += r[i] * r[i]
    for k in range(free, beta.shape[0]):
        obj += lam * (abs(beta[k]) if lasso else beta[k] * beta[k])
    return obj


@njit(cache=True)
def _cd(indptr, indices, data, r, beta, lam, lasso, free, tol, max_sweeps, trace):
    """Cyclic coordinate descent with active-set inner loops.

    Convergence is only declared after a sweep over *all* columns moves no
    coefficient by ``tol`` or more; between full sweeps, lasso iterates over
    the current nonzero coefficients only. Every sweep counts toward the budget.
    """
    p = beta.shape[0]
    sq = np.zeros(p)
    for k in range(p):
        for j in range(indptr[k], indptr[k + 1]):
            sq[k] += data[j] * data[j]
    all_cols = np.arange(p)
    sweeps = 0
    while sweeps < max_sweeps:
        step = _sweep(all_cols, indptr, indices, data, sq, r, beta, lam, lasso, free)
        trace[sweeps] = _objective(r, beta, lam, lasso, free)
        sweeps += 1
        if step < tol:
            return sweeps, True
        if not lasso:
            continue
        active = np.flatnonzero(beta != 0.0)
        if free > 0 and (active.shape[0] == 0 or active[0] != 0):
            active = np.concatenate((np.zeros(1, dtype=np.int64), active))
        while sweeps < max_sweeps:
            step = _sweep(active, indptr, indices, data, sq, r, beta, lam, lasso, free)
            trace[sweeps] = _objective(r, beta, lam, lasso, free)
            sweeps += 1
            if step < tol:
                break
    return sweeps, False


def _ridge_start(X: sp.csc_matrix, y: np.ndarray, lam: float, intercept: bool = True) -> np.ndarray:
    """Exact (dual Cholesky) or high-accuracy CG ridge solution used to seed the descent."""
    n, p = X.shape
    Z = X[:, 1:]
    if lam > 0 and n <= _DUAL_MAX_ROWS and not intercept:
        K = (X @ X.T).toarray()
        K[np.diag_indices(n)] += lam
        return X.T @ scipy.linalg.cho_solve(scipy.linalg.cho_factor(K), y)
    if lam > 0 and n <= _DUAL_MAX_ROWS:
        # b = Z^T a, a = (K + lam I)^{-1} (y - b0), with 1^T a = 0 fixing b0
        K = (Z @ Z.T).toarray()
        K[np.diag_indices(n)] += lam
        c = scipy.linalg.cho_factor(K)
        u = scipy.linalg.cho_solve(c, y)
        v = scipy.linalg.cho_solve(c, np.ones(n))
        b0 = u.sum() / v.sum()
        beta = np.empty(p)
        beta[0] = b0
        beta[1:] = Z.T @ (u - b0 * v)
        return beta
    d = np.full(p, lam)
    if intercept:
        d[0] = 0.0
    diag = np.asarray(X.multiply(X).sum(axis=0)).ravel() + d
    diag[diag == 0] = 1.0
    A = spla.LinearOperator((p, p), matvec=lambda v: X.T @ (X @ v) + d * v, dtype=np.float64)
    Minv = spla.LinearOperator((p, p), matvec=lambda v: v / diag, dtype=np.float64)
    beta, _ = spla.cg(A, X.T @ y, rtol=1e-12, maxiter=20 * p, M=Minv)
    return beta


def _lasso_start(X: sp.csc_matrix, y: np.ndarray, lam: float, intercept: bool = True) -> np.ndarray | None:
    """Interior-point lasso solution used to seed the descent on ill-posed (p > n) designs."""
    import cvxpy as cp

    b = cp.Variable(X.shape[1])
    prob = cp.Problem(cp.Minimize(cp.sum_squares(y - X @ b) + lam * cp.norm1(b[int(intercept):])))
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.error.SolverError:
        return None
    if b.value is None:
        return None
    beta = np.asarray(b.value, dtype=np.float64)
    # interior-point iterates are never exactly sparse
    pen = beta[int(intercept):]
    pen[np.abs(pen) < 1e-9] = 0.0
    return beta


def refit(design, y, spec: RefitSpec, beta0=None, solver: str = "auto") -> RefitResult:
    """Minimize the penalized objective by coordinate descent.

    ``solver="cd"`` runs plain cyclic descent from ``beta0`` (zeros if None).
    ``solver="auto"`` first computes a high-accuracy starting point (exact or
    CG ridge solve; interior-point lasso when the design is small enough) and
    keeps it if it beats ``beta0``. The descent then runs as usual, so the
    returned iterate always carries its own convergence test (a full sweep
    moving no coefficient by ``tol``).

    Emits ConvergenceWarning and returns the last iterate with ``converged=False``
    when ``max_sweeps`` is exhausted.
    """
    if solver not in ("auto", "cd"):
        raise ValueError(f"unknown solver {solver!r}")
    X = _csc(design)
    y = np.ascontiguousarray(y, dtype=np.float64).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"design has {X.shape[0]} rows, y has {y.shape[0]}")
    if beta0 is not None and np.shape(beta0)[0] != X.shape[1]:
        raise ValueError("beta0 length differs from number of design columns")
    lasso = spec.method == "lasso"
    beta = np.zeros(X.shape[1]) if beta0 is None else np.array(beta0, dtype=np.float64)
    start = None
    if solver == "auto" and not lasso:
        start = _ridge_start(X, y, spec.lam, spec.intercept)
    elif solver == "auto" and X.nnz <= _IPM_MAX_NNZ:
        start = _lasso_start(X, y, spec.lam, spec.intercept)
    if start is not None and (beta0 is None or objective(X, y, start, spec) < objective(X, y, beta, spec)):
        beta = start
    r = y - X @ beta
    trace = np.empty(spec.max_sweeps)
    used, ok = _cd(X.indptr.astype(np.int64), X.indices.astype(np.int64), X.data, r, beta, float(spec.lam), lasso,
                   int(spec.intercept), float(spec.tol), int(spec.max_sweeps), trace)
    if not ok:
        warnings.warn(f"{spec.method} refit did not converge in {spec.max_sweeps} sweeps", ConvergenceWarning,
                      stacklevel=2)
    return RefitResult(beta, spec, int(used), bool(ok), trace[:used].copy())


def regularization_path(design, y, method: str, lambdas, tol: float = 1e-7, max_sweeps: int = 10000,
                        beta0=None, solver: str = "cd") -> list[RefitResult]:
    """Warm-started refits along a descending lambda grid."""
    lambdas = [float(v) for v in lambdas]
    if any(a < b for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambdas must be sorted in descending order")
    X = _csc(design)
    out = []
    beta = beta0
    for lam in lambdas:
        res = refit(X, y, RefitSpec(method, lam, tol, max_sweeps), beta0=beta, solver=solver)
        out.append(res)
        beta = res.beta
    return out
