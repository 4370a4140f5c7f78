"""Experiment configuration, tuned presets, the end-to-end pipeline and plot-data writers."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .boosting import GbdtModel, GbdtParams, fit_gbdt
from .data import (DataError, Dataset, PerturbationSpec, load_csv, perturb, split, synth_airfoil_like,
                   synth_chp_like, synth_square)
from .encode import build_encoder, encode_rows, original_coefficients, save_encoder, write_matrix_market
from .refit import ConvergenceWarning, RefitSpec, refit
from .tree import TreeParams

log = logging.getLogger(__name__)

SYNTHETIC = {
    "square": lambda n, seed: synth_square(n, seed),
    "airfoil_like": lambda n, seed: synth_airfoil_like(seed, n),
    "chp_like": lambda n, seed: synth_chp_like(seed, n),
}
DEFAULT_N = {"square": 2000, "airfoil_like": 1503, "chp_like": 20640}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    path: str | None = None
    target: str | None = None
    synthetic: str | None = None
    n: int | None = None
    seed: int = 0
    # center/scale the response with training statistics (the benchmark tables report MSE on this scale)
    standardize_response: bool = True

    def __post_init__(self):
        if (self.path is None) == (self.synthetic is None):
            raise ConfigError("dataset needs exactly one of 'path' or 'synthetic'")
        if self.path is not None and not self.target:
            raise ConfigError("dataset.path requires dataset.target")
        if self.synthetic is not None and self.synthetic not in SYNTHETIC:
            raise ConfigError(f"unknown synthetic dataset {self.synthetic!r}; choose from {sorted(SYNTHETIC)}")

    def load(self) -> Dataset:
        if self.path is not None:
            return load_csv(self.path, self.target)
        return SYNTHETIC[self.synthetic](self.n or DEFAULT_N[self.synthetic], self.seed)


@dataclass(frozen=True)
class RefitPreset:
    """A named penalty. ``scale="per_sample"`` values are 1/(2n)-scaled and are multiplied by 2*n_train."""
    name: str
    method: str
    value: float
    scale: str = "raw"

    def __post_init__(self):
        if self.scale not in ("raw", "per_sample"):
            raise ConfigError(f"refit preset scale must be 'raw' or 'per_sample', got {self.scale!r}")
        if not self.value >= 0:
            raise ConfigError(f"refit preset {self.name}: penalty must be >= 0")

    def lam(self, n_train: int) -> float:
        return self.value if self.scale == "raw" else 2.0 * n_train * self.value


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    gbdt: GbdtParams = field(default_factory=GbdtParams)
    gbdt_reg: GbdtParams | None = None
    refits: tuple[RefitPreset, ...] = ()
    train_fraction: float = 0.8
    split_seed: int = 0
    perturbations: tuple[float, ...] = (0.0, 0.02, 0.05)
    repeats: int = 5
    perturb_seed: int = 0
    bootstrap_B: int = 20
    refit_tol: float = 1e-7
    refit_max_sweeps: int = 10000
    output_dir: str = "results"

    def __post_init__(self):
        if any(not s >= 0 for s in self.perturbations):
            raise ConfigError("perturbation fractions must be >= 0")
        if self.repeats < 1 or self.bootstrap_B < 2:
            raise ConfigError("repeats must be >= 1 and bootstrap_B >= 2")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        names = [p.name for p in self.refits]
        if len(set(names)) != len(names):
            raise ConfigError("refit preset names must be unique")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["refits"] = [asdict(p) for p in self.refits]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            if "preset" in d:
                base = preset(d.pop("preset"), data_dir=d.pop("data_dir", None))
                overrides = {k: v for k, v in d.items() if k not in ("dataset", "gbdt", "gbdt_reg", "refits")}
                if "dataset" in d:
                    ds = {**asdict(base.dataset), **d["dataset"]}
                    if "path" in d["dataset"]:
                        ds["synthetic"] = None
                    elif "synthetic" in d["dataset"]:
                        ds["path"] = None
                    overrides["dataset"] = DatasetConfig(**ds)
                for key in ("gbdt", "gbdt_reg"):
                    if key in d:
                        overrides[key] = None if d[key] is None else GbdtParams.from_dict(d[key])
                if "refits" in d:
                    overrides["refits"] = tuple(RefitPreset(**p) for p in d["refits"])
                return replace(base, **_tuples(overrides))
            dataset = DatasetConfig(**d.pop("dataset"))
            gbdt = GbdtParams.from_dict(d.pop("gbdt", {}))
            reg = d.pop("gbdt_reg", None)
            refits = tuple(RefitPreset(**p) for p in d.pop("refits", ()))
            return cls(dataset=dataset, gbdt=gbdt, gbdt_reg=None if reg is None else GbdtParams.from_dict(reg),
                       refits=refits, **_tuples(d))
        except TypeError as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(d)


def _tuples(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def _ohe_presets(ridge, lasso) -> tuple[RefitPreset, ...]:
    sizes = ("s", "m", "l")
    return tuple([RefitPreset(f"OHE_Ridge_{s}", "ridge", v) for s, v in zip(sizes, ridge)]
                 + [RefitPreset(f"OHE_Lasso_{s}", "lasso", v, "per_sample") for s, v in zip(sizes, lasso)])


# Tuned settings for the three benchmark tables. Lasso values follow the 1/(2n) loss scaling
# and are converted to the unscaled objective at run time.
PRESETS = {
    "airfoil": dict(
        csv="airfoil.csv", target="scaled_sound_pressure_level", synthetic="airfoil_like",
        gbdt=GbdtParams(500, 0.15, tree=TreeParams(max_depth=7)),
        reg=TreeParams(max_depth=7, reg_alpha=0.3, reg_lambda=0.2, gamma=0.0),
        ridge=(0.1, 1.0, 10.0), lasso=(6e-5, 8e-5, 10e-5), perturbations=(0.0, 0.02, 0.05)),
    "chp": dict(
        csv="california_housing.csv", target="median_house_value", synthetic="chp_like",
        gbdt=GbdtParams(600, 0.1, tree=TreeParams(max_depth=6)),
        reg=TreeParams(max_depth=6, reg_alpha=1.75, reg_lambda=1.0, gamma=0.0),
        ridge=(100.0, 400.0, 1000.0), lasso=(4e-4, 7e-4, 2e-3), perturbations=(0.0, 0.02, 0.05)),
    "bs": dict(
        csv="bike_sharing.csv", target="cnt", synthetic=None,
        gbdt=GbdtParams(500, 0.07, tree=TreeParams(max_depth=6)),
        reg=TreeParams(max_depth=6, reg_alpha=1.55, reg_lambda=0.5, gamma=0.07),
        ridge=(200.0, 400.0, 600.0), lasso=(2e-4, 3e-4, 4e-4), perturbations=(0.0, 0.05, 0.10)),
}


def preset(name: str, data_dir=None, split_seed: int = 0, **overrides) -> ExperimentConfig:
    """Config for a benchmark table; uses ``data_dir/<csv>`` when present, else the synthetic stand-in."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[name]
    csv_path = None if data_dir is None else Path(data_dir) / p["csv"]
    if csv_path is not None and csv_path.is_file():
        ds = DatasetConfig(path=str(csv_path), target=p["target"])
    elif p["synthetic"] is not None:
        ds = DatasetConfig(synthetic=p["synthetic"])
    else:
        raise ConfigError(f"preset {name!r} has no synthetic stand-in; put {p['csv']} in --data-dir")
    gbdt = p["gbdt"]
    cfg = ExperimentConfig(dataset=ds, gbdt=gbdt, gbdt_reg=replace(gbdt, tree=p["reg"]),
                           refits=_ohe_presets(p["ridge"], p["lasso"]), split_seed=split_seed,
                           perturbations=p["perturbations"], output_dir=f"results/{name}")
    return replace(cfg, **overrides)


def prepare_data(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Load, split, and (optionally) standardize the response with training statistics."""
    ds = cfg.dataset.load()
    train, test = split(ds, cfg.train_fraction, cfg.split_seed)
    if cfg.dataset.standardize_response:
        mu, sd = train.response.mean(), train.response.std()
        if sd == 0:
            raise DataError("training response is constant; cannot standardize")
        train = _rescale(train, mu, sd)
        test = _rescale(test, mu, sd)
    return train, test


def _rescale(ds: Dataset, mu: float, sd: float) -> Dataset:
    truth = None if ds.truth is None else (ds.truth - mu) / sd
    return Dataset(ds.features, (ds.response - mu) / sd, ds.column_names, truth)


@dataclass
class FittedModel:
    name: str
    predict: object  # callable X -> predictions
    converged: bool = True
    sweeps: int = 0


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def add(self, model: str, sigma: float, test_mse: float, perturbation_term: float, converged: bool = True):
        self.rows.append({"model": model, "sigma_fraction": float(sigma), "test_mse": float(test_mse),
                          "perturbation_term": float(perturbation_term), "converged": bool(converged)})

    def cell(self, model: str, sigma: float) -> dict:
        for r in self.rows:
            if r["model"] == model and r["sigma_fraction"] == sigma:
                return r
        raise KeyError((model, sigma))

    @property
    def models(self) -> list[str]:
        return list(dict.fromkeys(r["model"] for r in self.rows))

    @property
    def sigmas(self) -> list[float]:
        return list(dict.fromkeys(r["sigma_fraction"] for r in self.rows))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "sigma_fraction", "test_mse", "perturbation_term", "converged"])
        for r in self.rows:
            w.writerow([r["model"], repr(r["sigma_fraction"]), repr(r["test_mse"]), repr(r["perturbation_term"]),
                        int(r["converged"])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        t = cls()
        for r in csv.DictReader(io.StringIO(text)):
            t.add(r["model"], float(r["sigma_fraction"]), float(r["test_mse"]), float(r["perturbation_term"]),
                  bool(int(r["converged"])))
        return t

    def render(self, digits: int = 3) -> str:
        """Wide text table with 'mse/perturbation' cells."""
        sig = self.sigmas
        head = ["model"] + [f"{100 * s:g}%" for s in sig]
        lines = [head]
        for m in self.models:
            cells = []
            for s in sig:
                c = self.cell(m, s)
                pt = "0" if c["perturbation_term"] == 0 else f"{c['perturbation_term']:.{digits}f}"
                cells.append(f"{c['test_mse']:.{digits}f}/{pt}")
            lines.append([m] + cells)
        widths = [max(len(row[j]) for row in lines) for j in range(len(head))]
        return "\n".join("  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in lines)


def evaluate(models: list[FittedModel], train: Dataset, test: Dataset, perturbations, repeats: int,
             seed: int) -> ResultTable:
    """Mean perturbed test MSE and mean perturbation term over ``repeats`` noise draws."""
    table = ResultTable()
    clean = {m.name: m.predict(test.features) for m in models}
    for sigma in perturbations:
        spec = PerturbationSpec(sigma, seed, repeats)
        draws = [perturb(test, train.column_std, spec, repeat=r).features for r in range(repeats)]
        for m in models:
            mse = pert = 0.0
            for Xr in draws:
                pr = m.predict(Xr)
                mse += float(np.mean((test.response - pr) ** 2))
                pert += float(np.mean((pr - clean[m.name]) ** 2))
            table.add(m.name, sigma, mse / repeats, pert / repeats, m.converged)
    return table


def fit_models(cfg: ExperimentConfig, train: Dataset, out: Path | None = None) -> list[FittedModel]:
    """XGB-style ensembles plus leaf refits of the unregularized ensemble."""
    xgb = fit_gbdt(train, cfg.gbdt)
    models = [FittedModel("XGB", xgb.predict)]
    if cfg.gbdt_reg is not None:
        xgb_reg = fit_gbdt(train, cfg.gbdt_reg)
        models.append(FittedModel("XGB_reg", xgb_reg.predict))
    enc = build_encoder(xgb, train)
    design = encode_rows(enc, train)
    b0 = original_coefficients(xgb, enc)
    if out is not None:
        xgb.save(out / "xgb.json")
        if cfg.gbdt_reg is not None:
            xgb_reg.save(out / "xgb_reg.json")
        save_encoder(enc, out / "encoder.json")
        write_matrix_market(design, out / "design.mtx")
    for p in cfg.refits:
        spec = RefitSpec(p.method, p.lam(train.n), cfg.refit_tol, cfg.refit_max_sweeps)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            res = refit(design, train.response, spec, beta0=b0)
        if not res.converged:
            log.warning("%s did not converge in %d sweeps", p.name, res.sweeps_used)
        if out is not None:
            (out / f"coef_{p.name}.json").write_text(res.to_json())
        beta = res.beta
        models.append(FittedModel(p.name, lambda X, beta=beta: encode_rows(enc, X) @ beta, res.converged,
                                  res.sweeps_used))
    return models


def run_pipeline(cfg: ExperimentConfig, write: bool = True) -> ResultTable:
    out = Path(cfg.output_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(cfg.to_json())
    train, test = prepare_data(cfg)
    models = fit_models(cfg, train, out if write else None)
    table = evaluate(models, train, test, cfg.perturbations, cfg.repeats, cfg.perturb_seed)
    if write:
        (out / "results.csv").write_text(table.to_csv())
        (out / "table.txt").write_text(table.render() + "\n")
    return table


def cv_folds(n: int, folds: int, seed: int) -> list[np.ndarray]:
    return np.array_split(np.random.default_rng(seed).permutation(n), folds)


def grid_search(train: Dataset, grid: dict, folds: int = 5, seed: int = 0,
                base: GbdtParams | None = None) -> tuple[GbdtParams, list[dict]]:
    """Exhaustive k-fold search; n_estimators values are scored from one staged fit.

    ``grid`` maps GbdtParams fields (n_estimators, learning_rate) and TreeParams
    fields (max_depth, gamma, ...) to candidate lists. Ties go to fewer trees,
    then shallower trees.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid must have at least one value per key")
    base = base or GbdtParams()
    rounds = sorted(set(grid.get("n_estimators", [base.n_estimators])))
    keys = [k for k in grid if k != "n_estimators"]
    tree_fields = set(TreeParams.__dataclass_fields__)
    parts = cv_folds(train.n, folds, seed)
    scores = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        setting = dict(zip(keys, combo))
        tree = replace(base.tree, **{k: v for k, v in setting.items() if k in tree_fields})
        params = replace(base, tree=tree, n_estimators=rounds[-1],
                         **{k: v for k, v in setting.items() if k not in tree_fields})
        sse = np.zeros(len(rounds))
        for k in range(folds):
            val = parts[k]
            fit_rows = np.concatenate([parts[j] for j in range(folds) if j != k])
            model = fit_gbdt(train.take(fit_rows), params)
            staged = model.staged_predict(train.features[val])[:, rounds]
            sse += ((train.response[val][:, None] - staged) ** 2).sum(axis=0)
        for m, s in zip(rounds, sse):
            scores.append({**setting, "n_estimators": m, "cv_mse": float(s / train.n)})
    best = min(scores, key=lambda r: (r["cv_mse"], r["n_estimators"], r.get("max_depth", base.tree.max_depth)))
    tree = replace(base.tree, **{k: v for k, v in best.items() if k in tree_fields})
    chosen = replace(base, tree=tree, **{k: v for k, v in best.items()
                                         if k not in tree_fields and k != "cv_mse"})
    return chosen, scores


PLOT_COLUMNS = {
    "complexity_sweep": ("n_estimators", ["direct_risk", "clean_risk", "clean_risk_se", "bias_sq_plus_irreducible",
                                          "variance", "perturbation", "sum_gap"]),
    "lambda_sweep": ("lambda", ["direct_risk", "clean_risk", "clean_risk_se", "bias_sq_plus_irreducible",
                                "variance", "perturbation", "sum_gap"]),
    "decomposition_stack": ("index", ["bias_sq_plus_irreducible", "variance", "perturbation", "direct_risk",
                                      "sum_gap"]),
}


def emit_plot_data(reports, kind: str, path) -> Path:
    """One CSV per figure: the sweep index, then the decomposition terms of each report."""
    if kind not in PLOT_COLUMNS:
        raise ValueError(f"kind must be one of {sorted(PLOT_COLUMNS)}")
    index_name, cols = PLOT_COLUMNS[kind]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([index_name, *cols])
        for k, rep in enumerate(reports):
            idx = rep.index if rep.index is not None else k
            w.writerow([repr(idx) if isinstance(idx, float) else idx,
                        *(repr(float(getattr(rep, c))) for c in cols)])
    return path


def model_from_file(path) -> GbdtModel:
    return GbdtModel.load(path)
