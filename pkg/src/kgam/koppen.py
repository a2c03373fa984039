"""Köppen inner function, base-gamma digit expansions and Sprecher constants.

``psi_k`` is evaluated on the k-digit truncation of its argument.  The
recursion runs over integer digit indices (``m`` with ``x = m / gamma**k``)
so the branch taken on the last digit is always exact; floats only appear
when the value is assembled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INT64_MAX = 2**63 - 1
DOMAIN_TOL = 1e-12
# inputs within this relative distance of a k-digit rational snap onto it
SNAP_TOL = 1e-9
LAMBDA_TERM_CUTOFF = 1e-18

LAMBDA_MODES = ("sprecher", "geometric")
DELTA_MODES = ("index", "zero")
SHIFT_MODES = ("koppen", "sprecher")


class DomainError(ValueError):
    """Argument outside the interval the Köppen recursion is defined on."""


def beta(r: int, n: int) -> int:
    """``(n**r - 1) / (n - 1)``, with the limit value ``r`` when ``n == 1``."""
    if r < 1 or n < 1:
        raise ValueError(f"beta needs r >= 1 and n >= 1, got r={r}, n={n}")
    value = r if n == 1 else (n**r - 1) // (n - 1)
    if value > INT64_MAX:
        raise OverflowError(f"beta({r}, n={n}) exceeds the 64-bit integer range")
    return value


def shift_constant(d: int, gamma: int, mode: str = "koppen") -> float:
    if mode == "koppen":
        return 1.0 / (gamma * (gamma - 1))
    if mode == "sprecher":
        return 1.0 / ((2 * d + 1) * (2 * d + 2))
    raise ValueError(f"unknown shift mode {mode!r}; expected one of {SHIFT_MODES}")


def lambda_coeffs(
    d: int,
    gamma: int = 10,
    n: int | None = None,
    mode: str = "sprecher",
    base: float | None = None,
) -> np.ndarray:
    """Coordinate weights ``lambda_1 .. lambda_d``.

    ``sprecher``: ``lambda_1 = 1`` and for ``p >= 2`` the series
    ``sum_r gamma**(-(p-1) * beta(r))``, stopped at the first term below
    1e-18.  ``geometric``: ``lambda_p = base**p`` with ``0 < base < 1``.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if mode == "geometric":
        if base is None or not 0.0 < base < 1.0:
            raise ValueError("geometric mode needs 0 < base < 1")
        return np.array([base**p for p in range(1, d + 1)])
    if mode != "sprecher":
        raise ValueError(f"unknown lambda mode {mode!r}; expected one of {LAMBDA_MODES}")
    if gamma < d + 2:
        raise ValueError(f"gamma={gamma} must be >= d + 2 = {d + 2}")
    n = d if n is None else n
    lam = [1.0]
    for p in range(2, d + 1):
        total = 0.0
        r = 1
        while True:
            exponent = (p - 1) * beta(r, n)
            # gamma**-exponent < 1e-18  <=>  exponent * log10(gamma) > 18
            if exponent * math.log10(gamma) > -math.log10(LAMBDA_TERM_CUTOFF):
                break
            total += float(gamma) ** -exponent
            r += 1
        lam.append(total)
    return np.array(lam)


@dataclass(frozen=True)
class KstParams:
    """All constants of the fixed KST embedding.

    ``n_beta`` defaults to ``d``.  ``a`` and ``lam`` are derived on
    construction and are not constructor arguments.
    """

    d: int
    gamma: int = 10
    k_digits: int = 6
    n_beta: int | None = None
    lambda_mode: str = "sprecher"
    lambda_base: float | None = None
    delta_mode: str = "index"
    shift_mode: str = "koppen"
    a: float = field(init=False)
    lam: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.gamma < self.d + 2:
            raise ValueError(f"gamma={self.gamma} must be >= d + 2 = {self.d + 2}")
        if self.k_digits < 1:
            raise ValueError("k_digits must be >= 1")
        if self.gamma**self.k_digits > INT64_MAX:
            raise ValueError("gamma**k_digits must fit in a signed 64-bit integer")
        if self.delta_mode not in DELTA_MODES:
            raise ValueError(f"unknown delta mode {self.delta_mode!r}")
        if self.n_beta is None:
            object.__setattr__(self, "n_beta", self.d)
        if self.n_beta < 1:
            raise ValueError("n_beta must be >= 1")
        object.__setattr__(self, "a", shift_constant(self.d, self.gamma, self.shift_mode))
        lam = lambda_coeffs(self.d, self.gamma, self.n_beta, self.lambda_mode, self.lambda_base)
        if np.any(np.diff(lam) >= 0):
            raise ValueError(f"lambda must be strictly decreasing, got {lam}")
        object.__setattr__(self, "lam", tuple(float(v) for v in lam))

    @property
    def channels(self) -> int:
        return 2 * self.d + 1

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "gamma": self.gamma,
            "k_digits": self.k_digits,
            "n_beta": self.n_beta,
            "lambda_mode": self.lambda_mode,
            "lambda_base": self.lambda_base,
            "delta_mode": self.delta_mode,
            "shift_mode": self.shift_mode,
        }

    @classmethod
    def from_dict(cls, data: dict) -> KstParams:
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data and k not in ("a", "lam")})


@dataclass(frozen=True)
class Digits:
    digits: tuple[int, ...]
    gamma: int

    @property
    def k(self) -> int:
        return len(self.digits)

    @property
    def index(self) -> int:
        """The integer ``m`` with value ``m / gamma**k``."""
        m = 0
        for i in self.digits:
            m = m * self.gamma + i
        return m

    @property
    def value(self) -> float:
        return self.index / self.gamma**self.k


def digit_index(x, gamma: int, k: int) -> np.ndarray:
    """Vectorized k-digit truncation index ``m = floor(x * gamma**k)``.

    ``x == 1`` is clamped to ``gamma**k - 1``.  Raises :class:`DomainError`
    for values outside ``[0, 1]`` beyond 1e-12.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(x)) or np.any(x < -DOMAIN_TOL) or np.any(x > 1.0 + DOMAIN_TOL):
        bad = x[~((x >= -DOMAIN_TOL) & (x <= 1.0 + DOMAIN_TOL))]
        raise DomainError(f"Köppen argument outside [0, 1]: {bad.ravel()[:5]}")
    scale = gamma**k
    t = np.clip(x, 0.0, 1.0) * scale
    m = np.floor(t + SNAP_TOL * np.maximum(1.0, t)).astype(np.int64)
    return np.minimum(m, scale - 1)


def extract_digits(x: float, gamma: int, k: int) -> Digits:
    if gamma < 2 or k < 1:
        raise ValueError("need gamma >= 2 and k >= 1")
    m = int(digit_index(x, gamma, k))
    out = []
    for _ in range(k):
        m, i = divmod(m, gamma)
        out.append(i)
    return Digits(tuple(reversed(out)), gamma)


def psi_index(m, k: int, gamma: int, n: int) -> np.ndarray:
    """``psi_k(m / gamma**k)`` for an integer index array ``m``.

    Last digit ``i < gamma - 1``: ``psi_{k-1}(prefix) + i * gamma**-beta(k)``.
    Last digit ``gamma - 1``: average of ``psi_k`` at the left neighbour and
    ``psi_{k-1}`` at the carried prefix ``prefix + 1``; a carry that reaches
    ``1`` evaluates to 1.  Each level evaluates the unique prefixes once.
    """
    m = np.asarray(m, dtype=np.int64)
    if k == 1:
        return m / gamma
    i = m % gamma
    top = m // gamma
    carry = i == gamma - 1
    top_next = top[carry] + 1
    args = np.unique(np.concatenate([top, top_next]))
    at_one = args == gamma ** (k - 1)
    vals = np.empty(args.shape, dtype=np.float64)
    vals[at_one] = 1.0
    vals[~at_one] = psi_index(args[~at_one], k - 1, gamma, n)

    step = float(gamma) ** -beta(k, n)
    lo = vals[np.searchsorted(args, top)]
    out = lo + i * step
    if np.any(carry):
        left = lo[carry] + (gamma - 2) * step
        out[carry] = 0.5 * (left + vals[np.searchsorted(args, top_next)])
    return out


def psi_values(x, gamma: int, k: int, n: int) -> np.ndarray:
    """Vectorized ``psi_k`` on the k-digit truncation of each ``x``.

    ``x == 1`` (within 1e-12) maps to 1, the value a carry into the integer
    part produces.
    """
    x = np.asarray(x, dtype=np.float64)
    m = digit_index(x, gamma, k)
    out = psi_index(m.ravel(), k, gamma, n).reshape(x.shape)
    # only 1 itself; 1 - 1e-9 (the top of the shifted embedding domain) keeps the clamp
    return np.where(x >= 1.0 - DOMAIN_TOL, 1.0, out)


def koppen_psi(x: float, params: KstParams) -> float:
    return float(psi_values(x, params.gamma, params.k_digits, params.n_beta))


def psi_series(params: KstParams, grid_points: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """``(grid_points, 2)`` array of equally spaced ``(x, psi_k(x))`` pairs."""
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError("need 0 <= lo < hi <= 1")
    x = np.linspace(lo, hi, grid_points)
    return np.column_stack([x, psi_values(x, params.gamma, params.k_digits, params.n_beta)])
