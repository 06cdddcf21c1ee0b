"""Evaluators for the a-priori error bound of lengthscale-informed sparse grids.

The bound sums, over every non-empty subset ``u`` of dimensions, a factor
``2**(-c |p_u|)`` times a tail sum ``eps_k`` at the reduced level
``L - |p_u| - k``. Subsets only enter through ``(|u|, |p_u|)``, so the
sum is accumulated with a dynamic programme over dimensions rather than by
listing subsets.

The per-dimension constants in front of ``eps_k`` are not known in closed form;
they default to 1 and the result should be read as a shape, not a certified
envelope.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from lisg.grids import count_lisg
from lisg.multiindex import as_penalty, binom

DEFAULT_FLOOR = 1e-17


def _gap(c: float) -> float:
    if not c > 0:
        raise ValueError(f"smoothness gap must be positive, got {c!r}")
    return float(c)


def epsilon_k_closed_form(k: int, c: float, L: int, C: float = 1.0) -> float:
    """``C * [(1 - 2**-c)**-k - sum_{m<=L} binom(m+k-1, k-1) 2**(-c m)]``.

    Negative ``L`` is clamped to 0. Subtractive cancellation makes this lose
    all accuracy once the tail drops below about ``1e-16`` times the total;
    :func:`epsilon_k` sums the tail directly instead.
    """
    c = _gap(c)
    L = max(L, 0)
    x = 2.0**-c
    head = sum(binom(m + k - 1, k - 1) * x**m for m in range(L + 1))
    return C * ((1 - x) ** -k - head)


def epsilon_k(k: int, c: float, L: int, C: float = 1.0) -> float:
    """Tail of ``sum 2**(-c |l|_1)`` over ``l`` in ``N_0^k`` with ``|l|_1 > L``.

    Summed term by term from ``m = L + 1`` using the ratio between consecutive
    terms, until the terms are decreasing and negligible.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    c = _gap(c)
    L = max(L, 0)
    x = 2.0**-c
    m = L + 1
    log_term = math.log(binom(m + k - 1, k - 1)) + m * math.log(x)
    term = math.exp(log_term)
    total = 0.0
    while True:
        total += term
        ratio = (m + k) / (m + 1) * x
        if ratio < 1 and term * ratio / (1 - ratio) <= 1e-17 * total:
            break
        term *= ratio
        m += 1
    return C * total


def tensor_constant(nu: Sequence[float], alpha: Sequence[float]) -> float:
    """Product over dimensions of ``sqrt(G(a+1/2) G(nu) / (G(a) G(nu+1/2)))``."""
    nu = tuple(float(v) for v in nu)
    alpha = tuple(float(v) for v in alpha)
    if len(nu) != len(alpha):
        raise ValueError("nu and alpha must have the same length")
    for n, a in zip(nu, alpha):
        if not n >= a >= 0.5:
            raise ValueError(f"need nu >= alpha >= 1/2, got nu={n}, alpha={a}")
    log_total = sum(
        0.5 * (math.lgamma(a + 0.5) + math.lgamma(n) - math.lgamma(a) - math.lgamma(n + 0.5))
        for n, a in zip(nu, alpha)
    )
    return math.exp(log_total)


@dataclass(frozen=True)
class BoundParams:
    """Smoothness of kernel (``nu``) and target (``alpha``), plus the free constants.

    ``wendland_constant`` is the unknown per-dimension factor (scalar or one per
    dimension). ``tensor_constant_override`` replaces the computed tensor
    constant, e.g. with 1 to evaluate the bare double sum.
    """

    nu: tuple[float, ...]
    alpha: tuple[float, ...]
    wendland_constant: float | tuple[float, ...] = 1.0
    sigma: tuple[float, ...] | None = None
    tensor_constant_override: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "nu", tuple(float(v) for v in self.nu))
        object.__setattr__(self, "alpha", tuple(float(v) for v in self.alpha))
        if len(self.nu) != len(self.alpha) or not self.nu:
            raise ValueError("nu and alpha must be non-empty and of equal length")
        for n, a in zip(self.nu, self.alpha):
            if not n >= a >= 0.5:
                raise ValueError(f"need nu >= alpha >= 1/2, got nu={n}, alpha={a}")
        gaps = [n - a for n, a in zip(self.nu, self.alpha)]
        if max(gaps) - min(gaps) > 1e-12:
            raise ValueError("nu - alpha must be the same in every dimension")
        _gap(gaps[0])
        if self.sigma is not None and len(self.sigma) != len(self.nu):
            raise ValueError("sigma must have one entry per dimension")

    @classmethod
    def uniform(cls, d: int, nu: float, alpha: float, **kwargs) -> "BoundParams":
        return cls((nu,) * d, (alpha,) * d, **kwargs)

    @property
    def d(self) -> int:
        return len(self.nu)

    @property
    def c(self) -> float:
        return self.nu[0] - self.alpha[0]

    def wendland(self) -> np.ndarray:
        w = np.broadcast_to(np.asarray(self.wendland_constant, dtype=float), (self.d,))
        if np.any(w <= 0):
            raise ValueError("wendland constants must be positive")
        return w

    def tensor_constant(self) -> float:
        if self.tensor_constant_override is not None:
            return float(self.tensor_constant_override)
        return tensor_constant(self.nu, self.alpha)


def subset_factor(p: Sequence[int], subset: Sequence[int], c: float) -> float:
    """``2**(-c |p_u|)`` for a subset given by 1-based indices."""
    return 2.0 ** (-_gap(c) * sum(p[j - 1] for j in subset))


def _subset_weights(p: tuple[int, ...], weights: np.ndarray, cap: int) -> np.ndarray:
    """``table[k, s]``: summed ``prod_{j in u} weights_j`` over subsets with ``|u| = k``, ``|p_u| = s``.

    Penalty sums above ``cap`` are discarded.
    """
    d = len(p)
    table = np.zeros((d + 1, cap + 1))
    table[0, 0] = 1.0
    for j, pj in enumerate(p):
        if pj > cap:
            continue
        shifted = np.zeros_like(table)
        shifted[1:, pj:] = table[:-1, : cap + 1 - pj] * weights[j]
        table += shifted
    return table


def _saturating_weights(p: tuple[int, ...], weights: np.ndarray, L: int) -> np.ndarray:
    # exact variant: sums at or above L all clamp to the same reduced level, so
    # they share one bucket at index L and every subset is kept
    d = len(p)
    table = np.zeros((d + 1, L + 1))
    table[0, 0] = 1.0
    for j, pj in enumerate(p):
        shifted = np.zeros_like(table)
        for s in range(L + 1):
            shifted[1:, min(s + pj, L)] += table[:-1, s] * weights[j]
        table += shifted
    return table


def error_bound(d: int, p: Sequence[int], params: BoundParams, L: int,
                floor: float = DEFAULT_FLOOR) -> float:
    """Evaluate the sparse-grid error bound at level ``L``.

    Subsets whose factor ``2**(-c |p_u|)`` falls below ``floor`` are dropped;
    ``floor=0`` keeps every subset. Each retained subset contributes
    ``2**(-c k) 2**(-c |p_u|) prod_u w_j eps_k(L - |p_u| - k)``, all times the
    tensor constant.
    """
    p = as_penalty(p, d)
    if params.d != d:
        raise ValueError(f"bound parameters are for dimension {params.d}, not {d}")
    if L < 0:
        raise ValueError("level must be non-negative")
    c = params.c
    # each dimension carries its constant times its own 2**(-c p_j)
    w = params.wendland() * np.exp2(-c * np.asarray(p, dtype=float))
    if floor > 0:
        cap = int(math.floor(math.log2(1.0 / floor) / c))
        table = _subset_weights(p, w, cap)
    else:
        table = _saturating_weights(p, w, L)
    total = 0.0
    for k in range(1, d + 1):
        acc = 0.0
        for s in np.nonzero(table[k])[0]:
            acc += table[k, s] * epsilon_k(k, c, L - int(s) - k)
        total += 2.0 ** (-c * k) * acc
    return float(params.tensor_constant() * total)


# name used by the published interface
theorem31_bound = error_bound


def supnorm_bound(sigma: Sequence[float], bound_value: float) -> float:
    """Scale a native-norm bound by the product of the standard deviations."""
    if bound_value < 0:
        raise ValueError("bound_value must be non-negative")
    return math.prod(float(s) for s in sigma) * bound_value


def bound_curve(d: int, p: Sequence[int], params: BoundParams, levels: Sequence[int],
                floor: float = DEFAULT_FLOOR) -> list[tuple[int, int, float]]:
    """``(L, N, bound)`` rows for overlaying on measured convergence curves."""
    return [(L, count_lisg(d, p, L), error_bound(d, p, params, L, floor)) for L in levels]


def bound_curve_csv(rows: Sequence[tuple[int, int, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["L", "N", "bound"])
    for L, N, b in rows:
        writer.writerow([L, N, repr(b)])
    return buf.getvalue()
