"""Friedman #1 simulator, Iris loading/binarization and seeded splits."""

from __future__ import annotations

import csv
import hashlib
import io
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .rng import SplitMix64

IRIS_COLUMNS = ("SepalLength", "SepalWidth", "PetalLength", "PetalWidth")
IRIS_ROWS = 150
IRIS_SHA256 = "f6cb9fe6038ca034beece80243b494993e8f4662a05724873b4631aa7af047d4"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class Dataset:
    feature_names: list[str]
    X: np.ndarray
    y: np.ndarray
    task: str = "regression"
    train_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise DataError(f"X {self.X.shape} and y {self.y.shape} disagree")
        if self.X.shape[1] != len(self.feature_names):
            raise DataError("feature_names does not match X columns")
        if self.task == "binary_classification" and not np.all(np.isin(self.y, (0.0, 1.0))):
            raise DataError("binary task needs y in {0, 1}")
        if self.train_idx is None:
            self.train_idx = np.arange(self.n)
            self.test_idx = np.arange(0)
        self.train_idx = np.asarray(self.train_idx, dtype=np.int64)
        self.test_idx = np.asarray(self.test_idx, dtype=np.int64)
        both = np.concatenate([self.train_idx, self.test_idx])
        if both.size != self.n or not np.array_equal(np.sort(both), np.arange(self.n)):
            raise DataError("train/test indices must partition 0..n-1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def part(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        idx = {"train": self.train_idx, "test": self.test_idx, "all": np.arange(self.n)}[which]
        return self.X[idx], self.y[idx]

    def manifest(self) -> dict:
        return {
            "feature_names": self.feature_names,
            "task": self.task,
            "n": self.n,
            "provenance": self.provenance,
            "train_idx": self.train_idx.tolist(),
            "test_idx": self.test_idx.tolist(),
        }

    def to_csv(self, path, target_name: str = "y"):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([*self.feature_names, target_name])
            for row, target in zip(self.X, self.y):
                writer.writerow([format(v, ".17g") for v in row] + [format(target, ".17g")])


def friedman_mu(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
    )


def friedman_generate(n: int = 100, seed: int = 0, noise_sd: float = 1.0) -> Dataset:
    """Friedman #1: ``x ~ U[0,1]^5``, ``y = mu(x) + noise_sd * N(0, 1)``.

    Draw order: ``5n`` uniforms filled row-major, then ``n`` normals.
    """
    if n < 1 or noise_sd < 0:
        raise ValueError("need n >= 1 and noise_sd >= 0")
    rng = SplitMix64(seed)
    X = rng.uniform(5 * n).reshape(n, 5)
    y = friedman_mu(X) + noise_sd * rng.normal(n)
    return Dataset(
        [f"x{j + 1}" for j in range(5)],
        X,
        y,
        provenance={"generator": "friedman1", "n": n, "seed": seed, "noise_sd": noise_sd},
    )


def _iris_text(path) -> tuple[str, str, str]:
    if path is None:
        raw = resources.files("kgam").joinpath("data/iris.csv").read_bytes()
        source = "vendored:iris.csv"
    else:
        raw = Path(path).read_bytes()
        source = str(path)
    return raw.decode("utf-8"), hashlib.sha256(raw).hexdigest(), source


def iris_load(path=None) -> Dataset:
    """Read an Iris CSV with the four measurement columns (species ignored).

    ``path=None`` reads the vendored copy.  A row count other than 150 only
    warns.
    """
    text, digest, source = _iris_text(path)
    reader = csv.DictReader(io.StringIO(text))
    if not reader.fieldnames:
        raise DataError(f"{source}: empty Iris file")
    missing = [c for c in IRIS_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise DataError(f"{source}: missing column(s) {missing}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        try:
            rows.append([float(rec[c]) for c in IRIS_COLUMNS])
        except (TypeError, ValueError) as exc:
            raise DataError(f"{source}: line {lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{source}: no data rows")
    if len(rows) != IRIS_ROWS:
        warnings.warn(f"{source}: expected {IRIS_ROWS} Iris rows, found {len(rows)}", stacklevel=2)
    return Dataset(
        list(IRIS_COLUMNS),
        np.array(rows),
        np.zeros(len(rows)),
        provenance={"source": source, "sha256": digest, "canonical": digest == IRIS_SHA256},
    )


def iris_binarize(dataset: Dataset) -> Dataset:
    """Target ``SepalLength > mean(SepalLength)`` over all rows; the other three columns as inputs."""
    sl = dataset.X[:, 0]
    mean = float(sl.mean())
    y = (sl > mean).astype(np.float64)
    return Dataset(
        list(dataset.feature_names[1:]),
        dataset.X[:, 1:].copy(),
        y,
        task="binary_classification",
        provenance={**dataset.provenance, "binarized": "SepalLength > mean", "sepal_length_mean": mean},
    )


def split(dataset: Dataset, train_n: int, seed: int) -> Dataset:
    """Seeded shuffle; the first ``train_n`` shuffled indices train, the rest test."""
    if not 1 <= train_n < dataset.n:
        raise ValueError(f"train_n must satisfy 1 <= train_n < {dataset.n}, got {train_n}")
    perm = SplitMix64(seed).permutation(dataset.n)
    return replace(
        dataset,
        train_idx=perm[:train_n],
        test_idx=perm[train_n:],
        provenance={**dataset.provenance, "split_seed": seed, "train_n": train_n},
    )
