"""Tabular datasets: CSV ingestion, splitting, covariate perturbation, synthetic generators."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    response: np.ndarray
    column_names: tuple[str, ...]
    # noiseless regression function values, only known for synthetic data
    truth: np.ndarray | None = None
    _std: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.response, dtype=np.float64).reshape(-1)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        n, q = X.shape
        if n < 1 or q < 1:
            raise DataError(f"dataset needs n >= 1 and q >= 1, got n={n}, q={q}")
        if y.shape[0] != n:
            raise DataError(f"response has {y.shape[0]} rows, features have {n}")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise DataError("dataset contains missing or non-finite values")
        names = tuple(self.column_names) if self.column_names else tuple(f"x{j}" for j in range(q))
        if len(names) != q:
            raise DataError(f"{len(names)} column names for {q} columns")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "column_names", names)
        if self.truth is not None:
            t = np.asarray(self.truth, dtype=np.float64).reshape(-1)
            if t.shape[0] != n:
                raise DataError("truth vector length differs from n")
            t.setflags(write=False)
            object.__setattr__(self, "truth", t)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def q(self) -> int:
        return self.features.shape[1]

    @property
    def column_std(self) -> np.ndarray:
        if self._std is None:
            s = self.features.std(axis=0)  # population convention (ddof=0)
            s.setflags(write=False)
            object.__setattr__(self, "_std", s)
        return self._std

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        truth = None if self.truth is None else self.truth[rows]
        return Dataset(self.features[rows], self.response[rows], self.column_names, truth)

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.response, self.column_names, self.truth)

    def with_response(self, response: np.ndarray) -> "Dataset":
        return Dataset(self.features, response, self.column_names, self.truth)

    def summary(self) -> dict:
        return {
            "n": self.n,
            "q": self.q,
            "column_names": list(self.column_names),
            "column_std": [float(s) for s in self.column_std],
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


@dataclass(frozen=True)
class PerturbationSpec:
    sigma_fraction: float
    seed: int = 0
    repeats: int = 1

    def __post_init__(self):
        if not self.sigma_fraction >= 0:
            raise DataError(f"sigma_fraction must be >= 0, got {self.sigma_fraction}")
        if self.repeats < 1:
            raise DataError(f"repeats must be >= 1, got {self.repeats}")


def column_stats(ds: Dataset) -> np.ndarray:
    """Population standard deviation of every predictor (cached on the dataset)."""
    return ds.column_std


def load_csv(path, target_column: str) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if target_column not in header:
            raise DataError(f"{path}: target column {target_column!r} not in header {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {lineno} has {len(row)} cells, header has {len(header)}")
            vals = []
            for col, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: non-numeric cell {cell!r} at line {lineno}, column {col!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: missing/non-finite value at line {lineno}, column {col!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.array(rows, dtype=np.float64)
    t = header.index(target_column)
    keep = [j for j in range(len(header)) if j != t]
    if not keep:
        raise DataError(f"{path}: no predictor columns besides the target")
    return Dataset(arr[:, keep], arr[:, t], tuple(header[j] for j in keep))


def save_csv(ds: Dataset, path, target_column: str = "y") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*ds.column_names, target_column])
        for x, y in zip(ds.features, ds.response):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle split; the train side gets floor(train_fraction * n) rows."""
    if not 0 < train_fraction < 1:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(math.floor(train_fraction * ds.n))
    if n_train < 1 or n_train >= ds.n:
        raise DataError(f"fraction {train_fraction} of n={ds.n} leaves an empty part")
    perm = np.random.default_rng(seed).permutation(ds.n)
    return ds.take(perm[:n_train]), ds.take(perm[n_train:])


def perturb(ds: Dataset, reference_std, spec: PerturbationSpec, repeat: int = 0) -> Dataset:
    """Add N(0, (sigma_fraction * reference_std[j])^2) noise to every predictor cell.

    ``reference_std`` should be the training set's column std, also when
    perturbing test rows. ``repeat`` selects an independent draw for the same seed.
    """
    ref = np.asarray(reference_std, dtype=np.float64).reshape(-1)
    if ref.shape[0] != ds.q:
        raise DataError(f"reference_std has length {ref.shape[0]}, dataset has q={ds.q}")
    if spec.sigma_fraction == 0:
        return ds
    rng = np.random.default_rng([spec.seed, repeat])
    noise = rng.standard_normal(ds.features.shape) * (spec.sigma_fraction * ref)
    return ds.with_features(ds.features + noise)


def synth_square(n: int, seed: int) -> Dataset:
    """y = x^2 + eps with x, eps ~ N(0, 1); ``truth`` carries x^2."""
    if n < 1:
        raise DataError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    eps = rng.standard_normal(n)
    f = x * x
    return Dataset(x[:, None], f + eps, ("x",), truth=f)


# Stand-ins with the shape and flavour of the two benchmark tables, used when
# the real CSVs are not available locally.

AIRFOIL_COLUMNS = ("frequency", "attack_angle", "chord_length", "free_stream_velocity",
                   "suction_side_displacement_thickness")
CHP_COLUMNS = ("longitude", "latitude", "housing_median_age", "total_rooms",
               "total_bedrooms", "population", "households", "median_income")


def synth_airfoil_like(seed: int, n: int = 1503) -> Dataset:
    rng = np.random.default_rng(seed)
    freq = rng.choice(np.array([200, 250, 315, 400, 500, 630, 800, 1000, 1250, 1600, 2000,
                                2500, 3150, 4000, 5000, 6300, 8000, 10000, 12500, 16000]), n).astype(float)
    angle = np.round(rng.uniform(0.0, 22.2, n), 1)
    chord = rng.choice(np.array([0.0254, 0.0508, 0.1016, 0.1524, 0.2286, 0.3048]), n)
    vel = rng.choice(np.array([31.7, 39.6, 55.5, 71.3]), n)
    thick = 0.0004 * np.exp(0.12 * angle) * (chord / 0.1) ** 0.8 * (71.3 / vel) ** 0.2
    thick *= np.exp(0.1 * rng.standard_normal(n))
    # Strouhal-like peaked spectrum: sound level rises then falls with frequency
    st = freq * thick / vel
    f = (132.0 - 4.0 * (np.log(st) + 1.6) ** 2 + 0.9 * np.log(st) * (angle > 8)
         + 18.0 * np.log10(vel / 31.7) - 11.0 * np.log10(chord / 0.0254) * 0.4
         - 0.15 * angle)
    y = f + 1.0 * rng.standard_normal(n)
    X = np.column_stack([freq, angle, chord, vel, thick])
    return Dataset(X, y, AIRFOIL_COLUMNS, truth=f)


def synth_chp_like(seed: int, n: int = 20640) -> Dataset:
    """Housing-style data whose value surface has many narrow geographic bumps.

    The bump field is fixed (independent of ``seed``); ``seed`` only draws the districts.
    """
    rng = np.random.default_rng(seed)
    centers = np.array([[-122.3, 37.8], [-118.3, 34.1], [-117.2, 32.8], [-121.5, 38.6], [-119.8, 36.8]])
    weights = np.array([0.3, 0.4, 0.1, 0.1, 0.1])
    which = rng.choice(len(centers), n, p=weights)
    lon = centers[which, 0] + rng.normal(0, 0.6, n)
    lat = centers[which, 1] + rng.normal(0, 0.5, n)
    age = np.clip(np.round(rng.normal(29, 12, n)), 1, 52)
    income = np.clip(rng.lognormal(1.25, 0.45, n), 0.5, 15.0)
    households = np.round(rng.lognormal(6.0, 0.6, n)) + 1
    rooms = np.round(households * np.clip(rng.normal(5.2 + 0.25 * income, 1.0, n), 1.5, None))
    bedrooms = np.round(rooms * np.clip(rng.normal(0.21, 0.03, n), 0.1, None))
    population = np.round(households * np.clip(rng.normal(2.9, 0.6, n), 1.0, None))

    world = np.random.default_rng(12345)
    nb = 600
    bi = world.choice(len(centers), nb, p=weights)
    bx = centers[bi, 0] + world.normal(0, 0.6, nb)
    by = centers[bi, 1] + world.normal(0, 0.5, nb)
    bw = np.exp(world.uniform(np.log(0.02), np.log(0.1), nb))
    ba = world.normal(0, 0.8, nb)
    geo = np.zeros(n)
    for k in range(nb):
        geo += ba[k] * np.exp(-((lon - bx[k]) ** 2 + (lat - by[k]) ** 2) / (2 * bw[k] ** 2))
    f = (0.5 * income + geo + 0.006 * age + 0.3 * np.tanh(rooms / households - 5.5)
         - 0.25 * np.tanh(population / households - 3.0))
    y = f + 0.4 * rng.standard_normal(n)
    X = np.column_stack([lon, lat, age, rooms, bedrooms, population, households, income])
    return Dataset(X, y, CHP_COLUMNS, truth=f)
