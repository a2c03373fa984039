"""Fixed KST embedding of ``[0, 1]^d`` into ``R^(2d+1)``.

Channel ``q`` is ``sum_p lam_p * psi(x_p + q*a) + delta_q``.  Raw features
are first mapped affinely onto ``[0, 1 - 2d*a - 1e-9]`` so every shifted
argument stays inside ``[0, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .koppen import DOMAIN_TOL, DomainError, KstParams, psi_values

NORMALIZER_MARGIN = 1e-9


class SchemaError(ValueError):
    """Feature matrix does not match the fitted schema."""


@dataclass
class Normalizer:
    mins: np.ndarray
    maxs: np.ndarray
    target_hi: float
    feature_names: list[str] | None = None

    @property
    def d(self) -> int:
        return len(self.mins)

    def transform(self, data) -> np.ndarray:
        X = np.asarray(data, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1) if X.size else X.reshape(0, self.d)
        if X.shape[1] != self.d:
            raise SchemaError(f"expected {self.d} features, got {X.shape[1]}")
        return (X - self.mins) / (self.maxs - self.mins) * self.target_hi

    def to_dict(self) -> dict:
        return {
            "mins": self.mins.tolist(),
            "maxs": self.maxs.tolist(),
            "target_hi": self.target_hi,
            "feature_names": self.feature_names,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Normalizer:
        return cls(
            np.array(data["mins"], dtype=np.float64),
            np.array(data["maxs"], dtype=np.float64),
            float(data["target_hi"]),
            data.get("feature_names"),
        )


def target_upper(params: KstParams) -> float:
    return 1.0 - 2 * params.d * params.a - NORMALIZER_MARGIN


def fit_normalizer(data, params: KstParams, feature_names=None) -> Normalizer:
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("fit_normalizer needs a 2-D matrix with at least 2 rows")
    if X.shape[1] != params.d:
        raise SchemaError(f"params expect d={params.d} features, data has {X.shape[1]}")
    mins, maxs = X.min(axis=0), X.max(axis=0)
    constant = np.flatnonzero(maxs <= mins)
    if constant.size:
        names = [feature_names[j] if feature_names else f"column {j}" for j in constant]
        raise ValueError(f"constant feature(s) cannot be normalized: {', '.join(names)}")
    return Normalizer(mins, maxs, target_upper(params), list(feature_names) if feature_names else None)


def _check_domain(X: np.ndarray, params: KstParams):
    shifted = X + 2 * params.d * params.a
    if np.any(X < -DOMAIN_TOL) or np.any(shifted >= 1.0) or not np.all(np.isfinite(X)):
        raise DomainError(
            "normalized inputs must satisfy 0 <= x_p and x_p + 2d*a < 1 "
            f"(max shifted argument {np.nanmax(shifted):.6g})"
        )


def _embed_normalized(X: np.ndarray, params: KstParams) -> np.ndarray:
    _check_domain(X, params)
    lam = np.asarray(params.lam)
    Z = np.empty((X.shape[0], params.channels))
    for q in range(params.channels):
        psi = psi_values(X + q * params.a, params.gamma, params.k_digits, params.n_beta)
        delta = q if params.delta_mode == "index" else 0.0
        Z[:, q] = psi @ lam + delta
    return Z


def kst_embed(x, params: KstParams) -> np.ndarray:
    """Embed one normalized d-vector; returns the ``2d+1`` channels."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != params.d:
        raise SchemaError(f"expected {params.d} coordinates, got {x.shape[1]}")
    return _embed_normalized(x, params)[0]


def badic_embed(x, params: KstParams, base: int) -> float:
    """Single-channel embedding ``sum_p base**-p * psi(x_p)``."""
    return float(badic_embed_normalized(np.asarray(x, dtype=np.float64).reshape(1, -1), params, base)[0])


def badic_embed_normalized(X: np.ndarray, params: KstParams, base: int) -> np.ndarray:
    if base < 2:
        raise ValueError("B-adic base must be >= 2")
    if X.shape[1] != params.d:
        raise SchemaError(f"expected {params.d} coordinates, got {X.shape[1]}")
    _check_domain(X, params)
    psi = psi_values(X, params.gamma, params.k_digits, params.n_beta)
    weights = float(base) ** -np.arange(1, params.d + 1)
    return psi @ weights


def embed_batch(rows, normalizer: Normalizer, params: KstParams) -> np.ndarray:
    """Normalize raw rows and embed each; shape ``(n, 2d+1)``."""
    X = np.asarray(rows, dtype=np.float64)
    if X.size == 0:
        return np.empty((0, params.channels))
    if normalizer.d != params.d:
        raise SchemaError(f"normalizer has {normalizer.d} features, params expect {params.d}")
    return _embed_normalized(normalizer.transform(X), params)
