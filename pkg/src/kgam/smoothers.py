"""Kernel smoothers, scaled dot-product attention and an IRLS logistic GLM."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

KERNELS = ("gaussian_distance", "exp_inner_product")
GLM_RIDGE = 1e-10
GLM_GRAD_TOL = 1e-8
SEPARATION_BOUND = 1e3
# log-likelihood changes this small are rounding noise
LL_ROUNDOFF = 1e-12
# fitted probabilities this close to 0 or 1 count as saturated
SATURATION_EPS = 1e-10


class KernelUnderflowWarning(RuntimeWarning):
    """Every kernel weight underflowed; the nearest neighbour was used instead."""


class NonConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """``gaussian_distance``: ``exp(-|x - x'|^2 / (2 bandwidth^2))``.

    ``exp_inner_product``: ``exp(x . x' / bandwidth)``; ``bandwidth = sqrt(d_k)``
    gives the attention kernel, ``bandwidth = 2 sigma^2`` the textbook form.
    """

    kind: str = "gaussian_distance"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"kernel kind must be one of {KERNELS}")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")

    def __call__(self, X, x) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        x = np.asarray(x, dtype=np.float64).ravel()
        if self.kind == "gaussian_distance":
            return np.exp(-np.sum((X - x) ** 2, axis=1) / (2.0 * self.bandwidth**2))
        return np.exp(X @ x / self.bandwidth)

    def closeness(self, X, x) -> np.ndarray:
        """Monotone proxy for the kernel, safe from underflow (larger = closer)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        x = np.asarray(x, dtype=np.float64).ravel()
        if self.kind == "gaussian_distance":
            return -np.sum((X - x) ** 2, axis=1)
        return X @ x


def nw_weighted_mean(kernel_values, y) -> np.ndarray:
    """``sum_i K_i y_i / sum_i K_i`` for precomputed kernel values."""
    k = np.asarray(kernel_values, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(k < 0):
        raise ValueError("kernel values must be non-negative")
    total = k.sum()
    if total == 0:
        raise ZeroDivisionError("kernel weights sum to zero")
    return (k / total) @ y


def nw_weights(train_x, query, kernel: KernelSpec) -> np.ndarray:
    """Normalized weights ``K(x, x_i) / sum_j K(x, x_j)``."""
    k = kernel(train_x, query)
    total = k.sum()
    if total > 0 and np.isfinite(total):
        return k / total
    warnings.warn("kernel mass is zero or non-finite; using the nearest neighbour", KernelUnderflowWarning, stacklevel=2)
    w = np.zeros_like(k)
    w[np.argmax(kernel.closeness(train_x, query))] = 1.0
    return w


def nw_predict(train_x, train_y, query, kernel: KernelSpec):
    """Nadaraya-Watson estimate at one query point.

    ``train_y`` may be 1-D (scalar result) or ``(n, v)`` (vector result).
    """
    train_x = np.atleast_2d(np.asarray(train_x, dtype=np.float64))
    train_y = np.asarray(train_y, dtype=np.float64)
    if train_x.shape[0] < 1:
        raise ValueError("need at least one training point")
    if train_y.shape[0] != train_x.shape[0]:
        raise ValueError("train_x and train_y lengths differ")
    out = nw_weights(train_x, query, kernel) @ train_y
    return float(out) if out.ndim == 0 else out


def softmax(scores, axis=-1) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    e = np.exp(s - s.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def attention(Q, K, V) -> np.ndarray:
    """``softmax(Q K^T / sqrt(d_k)) V`` with a row-max shift inside the softmax."""
    Q, K, V = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in (Q, K, V))
    if Q.shape[1] != K.shape[1]:
        raise ValueError(f"query width {Q.shape[1]} != key width {K.shape[1]}")
    if K.shape[0] != V.shape[0]:
        raise ValueError(f"{K.shape[0]} keys but {V.shape[0]} values")
    if Q.shape[1] < 1:
        raise ValueError("d_k must be >= 1")
    return softmax(Q @ K.T / math.sqrt(Q.shape[1]), axis=1) @ V


@dataclass
class GlmFit:
    coefficients: list[float]  # intercept first
    names: list[str]
    log_likelihood: float
    iterations: int
    converged: bool
    separated: bool
    n: int
    gradient_norm: float
    ll_history: list[float]

    @property
    def k(self) -> int:
        return len(self.coefficients)

    @property
    def aic(self) -> float:
        return 2 * self.k - 2 * self.log_likelihood

    @property
    def bic(self) -> float:
        return self.k * math.log(self.n) - 2 * self.log_likelihood

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        beta = np.asarray(self.coefficients)
        return _sigmoid(beta[0] + X @ beta[1:])

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(aic=self.aic, bic=self.bic)
        return out

    def summary(self, rmse: float | None = None) -> str:
        """Coefficient table in the layout of a regression-summary column."""
        rows = [(name, f"{c:.3f}") for name, c in zip(self.names, self.coefficients)]
        rows += [
            ("Num.Obs.", str(self.n)),
            ("AIC", f"{self.aic:.1f}"),
            ("BIC", f"{self.bic:.1f}"),
            ("Log.Lik.", f"{self.log_likelihood:.3f}"),
        ]
        if rmse is not None:
            rows.append(("RMSE", f"{rmse:.2f}"))
        width = max(len(r[0]) for r in rows)
        lines = [f"{'':<{width}}  GLM", "-" * (width + 12)]
        lines += [f"{name:<{width}}  {val:>10}" for name, val in rows]
        if not self.converged:
            lines.append("(IRLS did not converge)")
        if self.separated:
            lines.append("(quasi-separation: |beta| > 1e3)")
        return "\n".join(lines)


def _sigmoid(s):
    return np.exp(-np.logaddexp(0.0, -s))


def _log_likelihood(A, y, beta) -> float:
    s = A @ beta
    return float(np.sum(y * s - np.logaddexp(0.0, s)))


def _collinear_columns(A: np.ndarray, names: list[str]) -> list[str]:
    bad, kept = [], []
    for j in range(A.shape[1]):
        trial = A[:, kept + [j]]
        if np.linalg.matrix_rank(trial) == len(kept) + 1:
            kept.append(j)
        else:
            bad.append(names[j])
    return bad


def glm_fit(X, y, max_iter: int = 100, tol: float = 1e-10, names=None) -> GlmFit:
    """Logistic regression by IRLS (Newton steps with step halving).

    Converged means the score norm fell below 1e-8 and the last step was
    smaller than ``tol`` relative to the coefficients.  A step whose
    log-likelihood change is within rounding noise is taken in full.
    Separation is flagged when ``|beta| > 1e3`` or when a non-converged fit
    has saturated fitted probabilities.  Raises
    ``np.linalg.LinAlgError`` naming the collinear columns when the design is
    rank-deficient.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    names = ["(Intercept)"] + list(names or [f"x{j + 1}" for j in range(p)])
    if n <= p + 1:
        raise ValueError(f"need n > p + 1 rows, got n={n}, p={p}")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("y must be binary 0/1")
    A = np.column_stack([np.ones(n), X])
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise np.linalg.LinAlgError(f"singular design; collinear column(s): {_collinear_columns(A, names)}")

    beta = np.zeros(p + 1)
    ll = _log_likelihood(A, y, beta)
    history = [ll]
    converged = False
    grad = A.T @ (y - _sigmoid(A @ beta))
    it = 0
    for it in range(1, max_iter + 1):
        mu = _sigmoid(A @ beta)
        w = mu * (1.0 - mu)
        grad = A.T @ (y - mu)
        H = A.T @ (A * w[:, None]) + GLM_RIDGE * np.eye(p + 1)
        step = np.linalg.solve(H, grad)
        noise = LL_ROUNDOFF * (1.0 + abs(ll))
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = _log_likelihood(A, y, cand)
            if ll_new >= ll - noise or t < 1e-10:
                break
            t *= 0.5
        if ll_new < ll - noise:
            break
        beta, ll = cand, ll_new
        history.append(ll)
        grad = A.T @ (y - _sigmoid(A @ beta))
        small_step = np.max(np.abs(t * step)) <= tol * (1.0 + np.max(np.abs(beta)))
        if np.linalg.norm(grad) < GLM_GRAD_TOL and small_step:
            converged = True
            break
    mu = _sigmoid(A @ beta)
    saturated = bool(np.any(np.minimum(mu, 1.0 - mu) < SATURATION_EPS))
    separated = bool(np.max(np.abs(beta)) > SEPARATION_BOUND or (saturated and not converged))
    if not converged:
        warnings.warn(f"IRLS did not converge in {max_iter} iterations", NonConvergenceWarning, stacklevel=2)
    return GlmFit(
        beta.tolist(), names, ll, it, converged, separated, n, float(np.linalg.norm(grad)), history
    )
