"""Matérn kernels in one dimension and their separable products."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

# closed forms are used for nu = n + 1/2 with n up to this order
MAX_CLOSED_FORM_ORDER = 8


@dataclass(frozen=True)
class MaternParams:
    """Smoothness ``nu``, lengthscale and standard deviation of a 1-D Matérn kernel."""

    nu: float
    lengthscale: float = 1.0
    sigma: float = 1.0

    def __post_init__(self) -> None:
        for name in ("nu", "lengthscale", "sigma"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")

    @property
    def variance(self) -> float:
        return self.sigma**2


def _half_integer_order(nu: float) -> int | None:
    n = nu - 0.5
    if n >= 0 and n == int(n) and n <= MAX_CLOSED_FORM_ORDER:
        return int(n)
    return None


def _closed_form(n: int, z: np.ndarray) -> np.ndarray:
    # exp(-z) * n!/(2n)! * sum_i (n+i)! / (i! (n-i)!) * (2z)^(n-i)
    poly = np.zeros_like(z)
    for i in range(n + 1):
        c = math.factorial(n + i) / (math.factorial(i) * math.factorial(n - i))
        poly = poly + c * (2 * z) ** (n - i)
    return np.exp(-z) * poly * (math.factorial(n) / math.factorial(2 * n))


def _bessel_form(nu: float, z: np.ndarray) -> np.ndarray:
    out = np.ones_like(z)
    pos = z > 0
    zp = z[pos]
    # kve(nu, z) = kv(nu, z) * exp(z) keeps the large-z tail finite
    with np.errstate(invalid="ignore", over="ignore"):
        shape = (2 ** (1 - nu) / special.gamma(nu)) * zp**nu * special.kve(nu, zp) * np.exp(-zp)
    # z**nu underflows while K_nu(z) overflows only for z so small that the value is 1 to double precision
    out[pos] = np.where(np.isfinite(shape), shape, 1.0)
    return out


def matern(params: MaternParams, r, *, use_bessel: bool = False) -> np.ndarray:
    """Matérn covariance at distance(s) ``r``.

    Half-integer smoothness dispatches to the exponential-polynomial closed
    form unless ``use_bessel`` forces the general modified-Bessel route. Zero
    distance returns the variance exactly on either route.
    """
    r = np.abs(np.asarray(r, dtype=float))
    if not np.all(np.isfinite(r)):
        raise ValueError("distances must be finite")
    z = math.sqrt(2 * params.nu) * r / params.lengthscale
    order = None if use_bessel else _half_integer_order(params.nu)
    shape = _closed_form(order, z) if order is not None else _bessel_form(params.nu, z)
    return params.variance * shape


def matern_1d(params: MaternParams, x: float, y: float) -> float:
    """Kernel value between two scalar inputs."""
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("inputs must be finite")
    return float(matern(params, x - y))


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray
    toeplitz: bool


def _as_1d(points) -> np.ndarray:
    return np.asarray([float(v) for v in points], dtype=float)


def gram_1d(params: MaternParams, points: Sequence[float]) -> GramMatrix:
    """Kernel matrix over distinct 1-D points; flags equally spaced sets."""
    x = _as_1d(points)
    if len(np.unique(x)) != len(x):
        raise ValueError("points must be pairwise distinct")
    entries = matern(params, x[:, None] - x[None, :])
    gaps = np.diff(x)
    toeplitz = len(gaps) == 0 or bool(np.all(gaps == gaps[0]))
    return GramMatrix(entries, toeplitz)


def cross_vector(params: MaternParams, x: float, points: Sequence[float]) -> np.ndarray:
    return matern(params, x - _as_1d(points))


def stretch_points(points, factor):
    """Scale every point by ``factor`` (arrays, or sequences of exact numbers)."""
    if not factor > 0:
        raise ValueError("stretch factor must be positive")
    if isinstance(points, np.ndarray):
        return points * factor
    return [x * factor for x in points]


@dataclass(frozen=True)
class SeparableMaternKernel:
    """Product of independent 1-D Matérn kernels, one per input dimension."""

    dims: tuple[MaternParams, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(self.dims))
        if len(self.dims) < 1:
            raise ValueError("a separable kernel needs at least one dimension")

    @classmethod
    def from_penalties(cls, nu: float, penalties: Sequence[int], sigma: float = 1.0) -> "SeparableMaternKernel":
        """Lengthscales ``2**p_j`` for each penalty."""
        return cls(tuple(MaternParams(nu, 2.0 ** int(p), sigma) for p in penalties))

    @classmethod
    def isotropic(cls, nu: float, d: int, lengthscale: float = 1.0, sigma: float = 1.0) -> "SeparableMaternKernel":
        return cls(tuple(MaternParams(nu, lengthscale, sigma) for _ in range(d)))

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def variance(self) -> float:
        """Kernel value at zero separation, the product of per-dimension variances."""
        return math.prod(p.variance for p in self.dims)

    def __call__(self, x: Sequence[float], y: Sequence[float]) -> float:
        if len(x) != self.d or len(y) != self.d:
            raise ValueError(f"expected points of dimension {self.d}")
        return math.prod(matern_1d(p, xi, yi) for p, xi, yi in zip(self.dims, x, y))

    def cross(self, X, Y, dtype=float) -> np.ndarray:
        """Matrix of kernel values between the rows of ``X`` and ``Y``.

        ``dtype`` sets the precision of the product over dimensions; the 1-D
        factors are always evaluated in double precision.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.shape[1] != self.d or Y.shape[1] != self.d:
            raise ValueError(f"expected points of dimension {self.d}")
        out = np.ones((X.shape[0], Y.shape[0]), dtype=dtype)
        for j, params in enumerate(self.dims):
            xj, yj = X[:, j], Y[:, j]
            if np.all(xj == 0.0) and np.all(yj == 0.0):
                out *= params.variance
                continue
            out *= matern(params, xj[:, None] - yj[None, :]).astype(dtype)
        return out

    def gram(self, X, dtype=float) -> np.ndarray:
        return self.cross(X, X, dtype)


def separable_eval(kernel: SeparableMaternKernel, x: Sequence[float], y: Sequence[float]) -> float:
    return kernel(x, y)
