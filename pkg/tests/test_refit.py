import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from gbdt_ohe import build_encoder, original_coefficients
from gbdt_ohe.refit import ConvergenceWarning, RefitResult, RefitSpec, objective, refit, regularization_path


def random_design(n, p, seed, density=0.4):
    rng = np.random.default_rng(seed)
    X = (rng.random((n, p)) < density).astype(float)
    X[:, 0] = 1.0
    y = rng.standard_normal(n)
    return X, y


def kkt_violation(X, y, beta, lam, intercept=True):
    g = -2 * X.T @ (y - X @ beta)
    out = []
    for k, (gk, bk) in enumerate(zip(g, beta)):
        if k == 0 and intercept:
            out.append(abs(gk))
        elif bk != 0:
            out.append(abs(gk + lam * np.sign(bk)))
        else:
            out.append(max(abs(gk) - lam, 0.0))
    return max(out)


@pytest.mark.parametrize("solver", ["cd", "auto"])
def test_unpenalized_matches_least_squares(solver):
    X, y = random_design(20, 5, 0, density=0.6)
    res = refit(X, y, RefitSpec("ridge", 0.0, tol=1e-13, max_sweeps=100000), solver=solver)
    expect = np.linalg.lstsq(X, y, rcond=None)[0]
    np.testing.assert_allclose(res.beta, expect, atol=1e-8)
    assert res.converged


def test_one_column_lasso_closed_form():
    x = np.array([1.0, 2.0, 0.0, 1.0])
    y = np.array([3.0, 1.0, 4.0, -1.0])
    lam = 2.0
    # minimiser of ||y - x b||^2 + lam |b| is S(x'y, lam/2) / x'x
    xy, xx = x @ y, x @ x
    expect = np.sign(xy) * max(abs(xy) - lam / 2, 0) / xx
    res = refit(x[:, None], y, RefitSpec("lasso", lam, intercept=False), solver="cd")
    assert res.beta[0] == pytest.approx(expect, abs=1e-12)


def test_two_by_two_ridge_without_intercept():
    for solver in ("cd", "auto"):
        res = refit(np.eye(2), [2.0, 0.0], RefitSpec("ridge", 1.0, intercept=False), solver=solver)
        np.testing.assert_allclose(res.beta, [1.0, 0.0], atol=1e-9)


def test_intercept_is_unpenalized():
    X, y = random_design(30, 6, 1)
    res = refit(X, y + 100.0, RefitSpec("ridge", 1e8), solver="cd")
    # with the leaf columns crushed only the intercept remains, at the mean
    assert res.beta[0] == pytest.approx(np.mean(y + 100.0), rel=1e-4)
    assert np.abs(res.beta[1:]).max() < 1e-3


def test_lasso_large_lambda_keeps_only_intercept():
    X, y = random_design(30, 6, 2)
    lam_max = np.abs(2 * X[:, 1:].T @ (y - y.mean())).max()
    res = refit(X, y, RefitSpec("lasso", 1.01 * lam_max))
    np.testing.assert_array_equal(res.beta[1:], 0.0)
    assert res.beta[0] == pytest.approx(y.mean(), abs=1e-9)


def test_objective_at_zero():
    X, y = random_design(10, 3, 3)
    assert objective(X, y, np.zeros(3), RefitSpec("lasso", 5.0)) == pytest.approx(y @ y)


def test_objective_penalty_excludes_intercept_only_when_asked():
    X, y = random_design(10, 3, 3)
    beta = np.array([2.0, -1.0, 0.5])
    sse = np.sum((y - X @ beta) ** 2)
    assert objective(X, y, beta, RefitSpec("ridge", 3.0)) == pytest.approx(sse + 3 * 1.25)
    assert objective(X, y, beta, RefitSpec("lasso", 3.0, intercept=False)) == pytest.approx(sse + 3 * 3.5)


@pytest.mark.parametrize("method", ["ridge", "lasso"])
def test_local_optimality(method):
    X, y = random_design(40, 8, 4)
    spec = RefitSpec(method, 1.5, tol=1e-12, max_sweeps=100000)
    res = refit(X, y, spec, solver="cd")
    f = objective(X, y, res.beta, spec)
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert objective(X, y, res.beta + rng.uniform(-1e-3, 1e-3, 8), spec) >= f - 1e-10


@pytest.mark.parametrize("method", ["ridge", "lasso"])
def test_objective_trace_is_monotone(method):
    X, y = random_design(50, 12, 5)
    res = refit(X, y, RefitSpec(method, 0.7), solver="cd")
    tr = res.objective_trace
    assert len(tr) == res.sweeps_used
    assert np.all(np.diff(tr) <= 1e-10 * np.abs(tr[:-1]))


def test_ridge_normal_equations():
    X, y = random_design(60, 15, 6)
    lam = 2.0
    res = refit(X, y, RefitSpec("ridge", lam, tol=1e-12, max_sweeps=100000))
    D = np.eye(15)
    D[0, 0] = 0
    np.testing.assert_allclose((X.T @ X + lam * D) @ res.beta, X.T @ y, atol=1e-8)


@pytest.mark.parametrize("solver", ["cd", "auto"])
def test_lasso_kkt(solver):
    # more columns than rows, so "auto" takes the interior-point start
    X, y = random_design(25, 40, 7)
    res = refit(X, y, RefitSpec("lasso", 0.8, tol=1e-11, max_sweeps=200000), solver=solver)
    assert res.converged
    assert kkt_violation(X, y, res.beta, 0.8) < 1e-6


def test_refit_never_worse_than_warm_start(small_model, square_data):
    enc = build_encoder(small_model, square_data)
    D = enc.encode(square_data.features)
    b0 = original_coefficients(small_model, enc)
    y = square_data.response
    for method, lam in (("ridge", 5.0), ("lasso", 2.0)):
        spec = RefitSpec(method, lam)
        res = refit(D, y, spec, beta0=b0)
        assert objective(D, y, res.beta, spec) <= objective(D, y, b0, spec)


def test_zero_column_gets_zero():
    X, y = random_design(10, 4, 8)
    X[:, 2] = 0
    for method in ("ridge", "lasso"):
        assert refit(X, y, RefitSpec(method, 1.0)).beta[2] == 0.0


def test_accepts_sparse_input():
    X, y = random_design(20, 5, 9)
    a = refit(X, y, RefitSpec("ridge", 1.0), solver="cd").beta
    b = refit(sp.csr_matrix(X), y, RefitSpec("ridge", 1.0), solver="cd").beta
    np.testing.assert_array_equal(a, b)


def test_non_convergence_warns():
    X, y = random_design(30, 10, 10)
    with pytest.warns(ConvergenceWarning):
        res = refit(X, y, RefitSpec("lasso", 0.01, tol=1e-15, max_sweeps=2), solver="cd")
    assert not res.converged and res.sweeps_used == 2


def test_result_dict_round_trip():
    X, y = random_design(20, 6, 11)
    res = refit(X, y, RefitSpec("lasso", 3.0))
    d = res.to_dict()
    np.testing.assert_array_equal(RefitResult.beta_from_dict(d), res.beta)
    assert d["converged"] is True and d["method"] == "lasso"


@pytest.mark.parametrize("kwargs", [dict(method="elastic", lam=1), dict(method="ridge", lam=-1),
                                    dict(method="ridge", lam=1, tol=0), dict(method="ridge", lam=1, max_sweeps=0)])
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        RefitSpec(**kwargs)


def test_shape_errors():
    X, y = random_design(10, 3, 0)
    with pytest.raises(ValueError, match="rows"):
        refit(X, y[:-1], RefitSpec("ridge", 1.0))
    with pytest.raises(ValueError, match="beta0"):
        refit(X, y, RefitSpec("ridge", 1.0), beta0=np.zeros(2))
    with pytest.raises(ValueError, match="solver"):
        refit(X, y, RefitSpec("ridge", 1.0), solver="newton")


def test_path_lasso_support_grows():
    X, y = random_design(40, 15, 12)
    lams = [40.0, 20.0, 10.0, 5.0, 2.0, 1.0]
    path = regularization_path(X, y, "lasso", lams, tol=1e-10, max_sweeps=100000)
    nnz = [np.count_nonzero(r.beta[1:]) for r in path]
    assert nnz[0] <= nnz[-1]
    # each point agrees with a cold refit at the same lambda
    for lam, r in zip(lams, path):
        direct = refit(X, y, RefitSpec("lasso", lam, tol=1e-10, max_sweeps=100000), solver="cd")
        np.testing.assert_allclose(r.beta, direct.beta, atol=1e-6)


def test_path_ridge_norm_grows_as_lambda_falls():
    X, y = random_design(40, 15, 13)
    path = regularization_path(X, y, "ridge", [100, 10, 1, 0.1], tol=1e-11, max_sweeps=100000)
    norms = [np.linalg.norm(r.beta[1:]) for r in path]
    assert all(b >= a - 1e-9 for a, b in zip(norms, norms[1:]))


def test_path_requires_descending():
    X, y = random_design(10, 3, 0)
    with pytest.raises(ValueError, match="descending"):
        regularization_path(X, y, "ridge", [1.0, 2.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["ridge", "lasso"]), st.floats(0.01, 50))
def test_refit_certificate_and_optimality(seed, method, lam):
    X, y = random_design(15, 7, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        res = refit(X, y, RefitSpec(method, lam, tol=1e-10, max_sweeps=100000))
    if method == "lasso":
        assert kkt_violation(X, y, res.beta, lam) < 1e-6
    else:
        D = np.eye(7)
        D[0, 0] = 0
        np.testing.assert_allclose((X.T @ X + lam * D) @ res.beta, X.T @ y, atol=1e-6)
