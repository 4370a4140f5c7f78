"""Bootstrap estimates of the perturbed-risk decomposition.

For fits F_b trained on bootstrap resamples b = 1..B, m(x) = mean_b F_b(x),
and perturbed inputs x~ = x + delta::

    bias^2 + irreducible   mean_x (y - m(x))^2
    variance               mean_{x,b} (F_b(x) - m(x))^2
    perturbation           mean_{x,b,r} (F_b(x~_r) - F_b(x))^2
    direct risk            mean_{x,b,r} (y - F_b(x~_r))^2

For a linearized model F_b(x) = Phi(x)^T beta_b the perturbation summand is
((Phi(x~) - Phi(x))^T beta_b)^2. The direct risk differs from the sum of the
terms by a cross term between the residual and the perturbation effect; that
difference is reported as ``sum_gap``.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .boosting import GbdtParams, fit_gbdt
from .data import Dataset, PerturbationSpec, perturb
from .encode import LeafEncoder, build_encoder, encode_rows, original_coefficients
from .refit import RefitSpec, refit, regularization_path

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LinearFit:
    """An encoder and a coefficient vector over its columns."""
    encoder: LeafEncoder
    beta: np.ndarray

    def predict(self, X) -> np.ndarray:
        return encode_rows(self.encoder, X) @ self.beta


class Pipeline(Protocol):
    def __call__(self, train: Dataset, seed: int) -> LinearFit: ...


@dataclass(frozen=True)
class MeanPipeline:
    """Predicts the training mean; the design is the constant column alone."""

    def __call__(self, train: Dataset, seed: int) -> LinearFit:
        return LinearFit(LeafEncoder.constant_only(), np.array([train.response.mean()]))


@dataclass(frozen=True)
class GbdtPipeline:
    """Boosted trees, optionally followed by a regularized refit of the leaf coefficients."""
    gbdt: GbdtParams
    refit: RefitSpec | None = None

    def __call__(self, train: Dataset, seed: int) -> LinearFit:
        model = fit_gbdt(train, self.gbdt)
        enc = build_encoder(model, train)
        beta = original_coefficients(model, enc)
        if self.refit is not None:
            beta = refit(encode_rows(enc, train), train.response, self.refit, beta0=beta).beta
        return LinearFit(enc, beta)


class Family(Protocol):
    """A set of models indexed by complexity or penalty, fitted together per resample."""
    index: Sequence

    def predict_all(self, train: Dataset, seed: int, inputs: list[np.ndarray]) -> np.ndarray:
        """Predictions of shape (len(index), len(inputs), n_rows)."""
        ...


@dataclass(frozen=True)
class SingleFamily:
    pipeline: Pipeline
    index: tuple = (None,)

    def predict_all(self, train, seed, inputs):
        fit = self.pipeline(train, seed)
        return np.stack([fit.predict(X) for X in inputs])[None]


@dataclass(frozen=True)
class RoundsFamily:
    """Prefixes of one boosted ensemble: model k uses the first index[k] trees."""
    gbdt: GbdtParams
    index: tuple

    def __post_init__(self):
        if max(self.index) > self.gbdt.n_estimators or min(self.index) < 0:
            raise ValueError("round counts must lie in [0, n_estimators]")

    def predict_all(self, train, seed, inputs):
        model = fit_gbdt(train, self.gbdt)
        rounds = np.asarray(self.index)
        return np.stack([model.staged_predict(X)[:, rounds].T for X in inputs], axis=1)


@dataclass(frozen=True)
class PenaltyFamily:
    """Refits of one ensemble's leaf coefficients along a penalty grid (any order)."""
    gbdt: GbdtParams
    method: str
    index: tuple
    tol: float = 1e-7
    max_sweeps: int = 10000

    def predict_all(self, train, seed, inputs):
        model = fit_gbdt(train, self.gbdt)
        enc = build_encoder(model, train)
        design = encode_rows(enc, train)
        order = np.argsort(self.index)[::-1]
        path = regularization_path(design, train.response, self.method, [self.index[k] for k in order],
                                   self.tol, self.max_sweeps, beta0=original_coefficients(model, enc),
                                   solver="auto")
        betas = np.empty((len(self.index), enc.n_columns))
        for k, res in zip(order, path):
            betas[k] = res.beta
        return np.stack([(encode_rows(enc, X) @ betas.T).T for X in inputs], axis=1)


@dataclass
class RiskReport:
    bias_sq_plus_irreducible: float
    variance: float
    perturbation: float
    direct_risk: float
    sum_gap: float
    bootstrap_B: int
    perturb_R: int
    sigma_fraction: float
    seeds: list = field(default_factory=list)
    index: object = None
    # only filled when the noiseless regression function is known
    bias_sq: float | None = None
    irreducible: float | None = None
    clean_risk: float | None = None
    # standard error of the per-resample clean test MSE
    clean_risk_se: float | None = None
    failed_resamples: list = field(default_factory=list)

    @property
    def terms_sum(self) -> float:
        return self.bias_sq_plus_irreducible + self.variance + self.perturbation

    @property
    def relative_gap(self) -> float:
        return abs(self.sum_gap) / self.direct_risk if self.direct_risk > 0 else 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class _Welford:
    """Running mean / sum of squared deviations; exact zeros for identical inputs."""

    def __init__(self, shape):
        self.count = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def add(self, x):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)


def bootstrap_indices(n: int, seed: int, b: int) -> np.ndarray:
    return np.random.default_rng([seed, b]).integers(0, n, n)


def decomposition_sweep(train: Dataset, test: Dataset, family: Family, spec: PerturbationSpec,
                        B: int = 20) -> list[RiskReport]:
    """One RiskReport per family index, all sharing resamples and perturbation draws."""
    if B < 2:
        raise ValueError(f"B must be >= 2, got {B}")
    R = spec.repeats
    draws = [perturb(test, train.column_std, spec, repeat=r).features for r in range(R)]
    inputs = [test.features, *draws]
    y = test.response
    K = len(family.index)
    clean = _Welford((K, test.n))
    fit_mse = _Welford(K)
    pert = np.zeros(K)
    direct = np.zeros(K)
    failed = []
    seeds = []
    for b in range(B):
        boot_seed = int(np.random.default_rng([spec.seed, b]).integers(2**31))
        rows = bootstrap_indices(train.n, spec.seed, b)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                preds = family.predict_all(train.take(rows), boot_seed, inputs)
        except Exception as exc:  # a failed resample is dropped, not fatal
            log.warning("resample %d failed: %s", b, exc)
            failed.append({"resample": b, "error": repr(exc)})
            continue
        seeds.append(boot_seed)
        base = preds[:, 0]
        clean.add(base)
        fit_mse.add(np.mean((y - base) ** 2, axis=1))
        for r in range(R):
            pert += np.mean((preds[:, 1 + r] - base) ** 2, axis=1)
            direct += np.mean((y - preds[:, 1 + r]) ** 2, axis=1)
    used = clean.count
    if used < 2:
        raise RuntimeError(f"only {used} of {B} resamples succeeded; need at least 2")
    m = clean.mean
    bias_irr = np.mean((y - m) ** 2, axis=1)
    variance = np.mean(clean.m2 / used, axis=1)
    se = np.sqrt(fit_mse.m2 / (used - 1) / used)
    pert /= used * R
    direct /= used * R
    if spec.sigma_fraction == 0:
        # draws equal the clean inputs, so both follow exactly
        pert[:] = 0.0
    reports = []
    for k, idx in enumerate(family.index):
        rep = RiskReport(
            bias_sq_plus_irreducible=float(bias_irr[k]), variance=float(variance[k]),
            perturbation=float(pert[k]), direct_risk=float(direct[k]),
            sum_gap=float(direct[k] - bias_irr[k] - variance[k] - pert[k]),
            bootstrap_B=used, perturb_R=R, sigma_fraction=spec.sigma_fraction, seeds=list(seeds),
            index=idx, failed_resamples=list(failed),
            clean_risk=float(bias_irr[k] + variance[k]), clean_risk_se=float(se[k]),
        )
        if test.truth is not None:
            rep.bias_sq = float(np.mean((test.truth - m[k]) ** 2))
            rep.irreducible = float(np.mean((y - test.truth) ** 2))
        reports.append(rep)
    return reports


def estimate_risk_decomposition(train: Dataset, test: Dataset, pipeline: Pipeline, spec: PerturbationSpec,
                                B: int = 20) -> RiskReport:
    return decomposition_sweep(train, test, SingleFamily(pipeline), spec, B)[0]


@dataclass
class BiasSplitReport:
    misspecification_bias: float
    in_class_bias: float
    reference_beta: np.ndarray = field(repr=False)
    bootstrap_B: int = 0

    def to_dict(self) -> dict:
        return {"misspecification_bias": self.misspecification_bias, "in_class_bias": self.in_class_bias,
                "bootstrap_B": self.bootstrap_B, "reference_beta": [float(v) for v in self.reference_beta]}


def reference_coefficients(encoder: LeafEncoder, sample: Dataset, lam: float = 1e-6) -> np.ndarray:
    """Stand-in for the best coefficients over the encoder's columns: a ridge fit on a large sample."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return refit(encode_rows(encoder, sample), sample.response, RefitSpec("ridge", lam)).beta


def bias_split(train: Dataset, test: Dataset, encoder: LeafEncoder,
               fit_beta: Callable[[object, np.ndarray], np.ndarray], reference: np.ndarray,
               B: int = 20, seed: int = 0) -> BiasSplitReport:
    """Split bias over a fixed leaf design into misspecification and in-class parts.

    ``fit_beta(design, y)`` is refit on B bootstrap resamples of ``train``; the
    in-class term compares its mean prediction with the reference coefficients.
    """
    if test.truth is None:
        raise ValueError("bias_split needs a test set carrying the noiseless regression function")
    if B < 1:
        raise ValueError("B must be >= 1")
    design_tr = encode_rows(encoder, train)
    mean_beta = np.zeros(encoder.n_columns)
    for b in range(B):
        rows = bootstrap_indices(train.n, seed, b)
        mean_beta += fit_beta(design_tr[rows], train.response[rows])
    mean_beta /= B
    phi = encode_rows(encoder, test)
    ref_pred = phi @ reference
    mis = float(np.mean((test.truth - ref_pred) ** 2))
    inc = float(np.mean((ref_pred - phi @ mean_beta) ** 2))
    return BiasSplitReport(mis, inc, np.asarray(reference), B)
