"""Robust least squares over bounded design perturbations.

For the signal-scaled sets (spectral norm of the perturbation <= c*||beta||, or
each column <= c*|beta_i|) the worst case of ||y - (Phi + dPhi) beta|| is
||y - Phi beta|| + c*||beta||^2; for fixed per-column bounds c_i it is
||y - Phi beta|| + sum_i c_i |beta_i|. Both maxima are attained by rank-one
perturbations aligned with the residual direction u = r / ||r||.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

KINDS = ("per_column_c", "global_beta_scaled", "per_column_beta_scaled")
_ZERO_RESIDUAL = 1e-12


@dataclass(frozen=True)
class UncertaintySet:
    kind: str
    c: float | tuple = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        c = np.atleast_1d(np.asarray(self.c, dtype=np.float64))
        if (c < 0).any():
            raise ValueError("uncertainty bounds must be non-negative")
        if self.kind != "per_column_c" and c.shape[0] != 1:
            raise ValueError(f"{self.kind} takes a scalar bound")
        object.__setattr__(self, "c", tuple(c) if self.kind == "per_column_c" else float(c[0]))

    def column_bounds(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=np.float64)
        if self.kind == "per_column_c":
            c = np.asarray(self.c)
            return np.broadcast_to(c, beta.shape).copy() if c.shape[0] == 1 else c
        if self.kind == "per_column_beta_scaled":
            return self.c * np.abs(beta)
        raise ValueError("the global set bounds the spectral norm, not columns")

    def penalty(self, beta) -> float:
        beta = np.asarray(beta, dtype=np.float64)
        if self.kind == "per_column_c":
            return float(np.sum(self.column_bounds(beta) * np.abs(beta)))
        return float(self.c * (beta @ beta))

    def contains(self, dphi, beta, atol: float = 1e-10) -> bool:
        dphi = np.asarray(dphi, dtype=np.float64)
        if self.kind == "global_beta_scaled":
            return spectral_norm(dphi) <= self.c * np.linalg.norm(beta) + atol
        return bool(np.all(np.linalg.norm(dphi, axis=0) <= self.column_bounds(beta) + atol))


def spectral_norm(A, tol: float = 1e-10, max_iter: int = 1000) -> float:
    """Largest singular value by power iteration on A^T A."""
    A = np.asarray(A, dtype=np.float64)
    if A.size == 0 or not A.any():
        return 0.0
    v = np.random.default_rng(0).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        s_new = np.sqrt(nw)
        if abs(s_new - s) <= tol * s_new:
            return float(np.linalg.norm(A @ v))
        s = s_new
    return float(np.linalg.norm(A @ v))


def residual(design, y, beta) -> np.ndarray:
    return np.asarray(y, dtype=np.float64) - np.asarray(design, dtype=np.float64) @ np.asarray(beta, dtype=np.float64)


def worst_case_perturbation(design, y, beta, uset: UncertaintySet) -> np.ndarray:
    """Rank-one maximizer u * (-w)^T where w_i = c*beta_i (signal-scaled) or c_i*sign(beta_i).

    Returns zeros when the residual vanishes (direction undefined).
    """
    Phi = np.asarray(design, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    r = residual(Phi, y, beta)
    nr = np.linalg.norm(r)
    if nr <= _ZERO_RESIDUAL:
        return np.zeros_like(Phi)
    u = r / nr
    if uset.kind == "per_column_c":
        w = uset.column_bounds(beta) * np.sign(beta)
    else:
        w = uset.c * beta
    return -np.outer(u, w)


def sample_feasible(n_rows: int, beta, uset: UncertaintySet, n_samples: int, rng) -> np.ndarray:
    """Random perturbations on the boundary of the set, shape (n_samples, n_rows, p)."""
    beta = np.asarray(beta, dtype=np.float64)
    G = rng.standard_normal((n_samples, n_rows, beta.shape[0]))
    if uset.kind == "global_beta_scaled":
        s = np.linalg.svd(G, compute_uv=False)[:, 0]
        return G * (uset.c * np.linalg.norm(beta) / s)[:, None, None]
    norms = np.linalg.norm(G, axis=1, keepdims=True)
    return G / norms * uset.column_bounds(beta)[None, None, :]


def _project(D, beta, uset: UncertaintySet) -> np.ndarray:
    if uset.kind == "global_beta_scaled":
        U, s, Vt = np.linalg.svd(D, full_matrices=False)
        return (U * np.minimum(s, uset.c * np.linalg.norm(beta))) @ Vt
    b = uset.column_bounds(beta)
    norms = np.linalg.norm(D, axis=0)
    scale = np.where(norms > b, b / np.where(norms > 0, norms, 1.0), 1.0)
    return D * scale


def robust_objective(design, y, beta, uset: UncertaintySet, mode: str = "closed", n_samples: int = 10000,
                     seed: int = 0, ascent_steps: int = 200) -> float:
    """Worst-case residual norm over the set.

    ``mode="closed"`` uses the closed form. ``mode="brute"`` searches instead:
    random boundary samples, the rank-one candidate, and projected gradient
    ascent started from the best samples.
    """
    Phi = np.asarray(design, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    r = y - Phi @ beta
    if mode == "closed":
        return float(np.linalg.norm(r) + uset.penalty(beta))
    if mode != "brute":
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    D = sample_feasible(Phi.shape[0], beta, uset, n_samples, rng)
    vals = np.linalg.norm(r[None, :] - D @ beta, axis=1)
    best = float(vals.max())
    star = worst_case_perturbation(Phi, y, beta, uset)
    best = max(best, float(np.linalg.norm(r - star @ beta)))
    for k in np.argsort(vals)[-5:]:
        Dk = D[k]
        for _ in range(ascent_steps):
            e = r - Dk @ beta
            ne = np.linalg.norm(e)
            if ne == 0:
                break
            # ascent direction of ||r - D beta|| w.r.t. D
            Dk = _project(Dk - np.outer(e / ne, beta), beta, uset)
        best = max(best, float(np.linalg.norm(r - Dk @ beta)))
    return best


def minimize_regularized(design, y, c: float) -> np.ndarray:
    """argmin ||y - Phi b|| + c||b||^2 via its stationarity condition.

    Stationarity gives (Phi^T Phi + 2 c t I) b = Phi^T y with t = ||y - Phi b||,
    a one-dimensional fixed point in t found by bracketing.
    """
    Phi = np.asarray(design, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    G = Phi.T @ Phi
    h = Phi.T @ y
    eye = np.eye(Phi.shape[1])

    def beta_at(t):
        return np.linalg.solve(G + 2 * c * t * eye, h) if c * t > 0 else np.linalg.lstsq(Phi, y, rcond=None)[0]

    def gap(t):
        return np.linalg.norm(y - Phi @ beta_at(t)) - t

    hi = float(np.linalg.norm(y))
    if c == 0 or gap(0.0) <= 0 or hi == 0:
        return beta_at(0.0)
    t = optimize.brentq(gap, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return beta_at(t)


def minimize_robust(design, y, uset: UncertaintySet, x0=None) -> np.ndarray:
    """argmin over beta of the worst-case residual, evaluated at the constructed maximizer."""
    Phi = np.asarray(design, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def worst(b):
        return np.linalg.norm(y - (Phi + worst_case_perturbation(Phi, y, b, uset)) @ b)

    x0 = np.linalg.lstsq(Phi, y, rcond=None)[0] * 0.5 if x0 is None else x0
    res = optimize.minimize(worst, x0, method="BFGS", jac="3-point", options={"gtol": 1e-11, "maxiter": 5000})
    return res.x


@dataclass
class EquivalenceReport:
    trials: int
    failures: list = field(default_factory=list)
    max_identity_residual: float = 0.0
    max_feasibility_residual: float = 0.0
    max_bound_excess: float = -np.inf
    max_minimizer_gap: float = 0.0

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "failures": self.failures,
            "n_failures": len(self.failures),
            "max_identity_residual": self.max_identity_residual,
            "max_feasibility_residual": self.max_feasibility_residual,
            "max_bound_excess": self.max_bound_excess,
            "max_minimizer_gap": self.max_minimizer_gap,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def verify_theorem1(trials: int = 100, seed: int = 0, n_samples: int = 10000, identity_tol: float = 1e-10,
                    bound_tol: float = 1e-10, minimizer_tol: float = 1e-4) -> EquivalenceReport:
    """Numerically check the robust/ridge-type equivalence on random small instances.

    Per trial: (a) the constructed perturbation is feasible for both
    signal-scaled sets and attains ||r|| + c||beta||^2; (b) no sampled feasible
    perturbation exceeds it; (c) minimizing the attained worst case over beta
    by BFGS agrees with the stationarity-based minimizer of the regularized
    problem.
    """
    rng = np.random.default_rng(seed)
    report = EquivalenceReport(trials)
    cs = (0.1, 1.0, 10.0)
    for t in range(trials):
        p = int(rng.integers(1, 6))
        n = int(rng.integers(p + 2, 13))
        c = cs[t % len(cs)]
        Phi = rng.standard_normal((n, p))
        y = rng.standard_normal(n)
        beta = rng.standard_normal(p)
        closed = np.linalg.norm(y - Phi @ beta) + c * beta @ beta
        for kind in ("global_beta_scaled", "per_column_beta_scaled"):
            uset = UncertaintySet(kind, c)
            star = worst_case_perturbation(Phi, y, beta, uset)
            attained = np.linalg.norm(y - (Phi + star) @ beta)
            ident = abs(attained - closed)
            report.max_identity_residual = max(report.max_identity_residual, float(ident))
            if kind == "global_beta_scaled":
                feas = abs(spectral_norm(star) - c * np.linalg.norm(beta))
            else:
                feas = float(np.max(np.abs(np.linalg.norm(star, axis=0) - c * np.abs(beta))))
            report.max_feasibility_residual = max(report.max_feasibility_residual, float(feas))
            if ident > identity_tol or feas > identity_tol:
                report.failures.append({"trial": t, "check": "a", "set": kind, "identity": float(ident),
                                        "feasibility": float(feas)})
            D = sample_feasible(n, beta, uset, n_samples, rng)
            vals = np.linalg.norm((y - Phi @ beta)[None, :] - D @ beta, axis=1)
            excess = float(vals.max() - closed)
            report.max_bound_excess = max(report.max_bound_excess, excess)
            if excess > bound_tol:
                report.failures.append({"trial": t, "check": "b", "set": kind, "excess": excess})
        b_reg = minimize_regularized(Phi, y, c)
        b_rob = minimize_robust(Phi, y, UncertaintySet("global_beta_scaled", c))
        gap = float(np.max(np.abs(b_reg - b_rob)))
        report.max_minimizer_gap = max(report.max_minimizer_gap, gap)
        if gap > minimizer_tol:
            report.failures.append({"trial": t, "check": "c", "gap": gap})
    return report
