"""Multi-index sets and combination weights for sparse-grid assembly.

Everything here is exact integer arithmetic on tuples of non-negative ints.
Enumerations are returned as lists in ascending lexicographic order so that
downstream scatter maps and CSV output are reproducible.
"""

from __future__ import annotations

import itertools
from math import comb
from typing import Iterator, Sequence

MultiIndex = tuple[int, ...]

#: Image of the zero multi-index under :func:`rho`: empty support, no entries.
RHO_ZERO: tuple[tuple[int, ...], tuple[int, ...]] = ((), ())


def binom(n: int, k: int) -> int:
    """Binomial coefficient that vanishes outside ``0 <= k <= n``.

    Negative ``n`` yields 0 rather than the generalised value, which is the
    convention the inclusion-exclusion sums below rely on.
    """
    if n < 0 or k < 0 or k > n:
        return 0
    return comb(n, k)


def _check_dim(d: int) -> None:
    if not isinstance(d, int) or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")


def _check_level(L: int) -> None:
    if not isinstance(L, int) or L < 0:
        raise ValueError(f"level must be a non-negative integer, got {L!r}")


def as_penalty(p: Sequence[int], d: int | None = None) -> MultiIndex:
    """Validate a penalty vector and return it as a tuple."""
    out = tuple(int(v) for v in p)
    if any(v < 0 for v in out):
        raise ValueError(f"penalties must be non-negative, got {out}")
    if d is not None and len(out) != d:
        raise ValueError(f"penalty length {len(out)} does not match dimension {d}")
    return out


def _compositions(d: int, lo: int, hi: int) -> Iterator[MultiIndex]:
    # lexicographic ascending: first coordinate varies slowest
    if d == 1:
        for v in range(lo, hi + 1):
            yield (v,)
        return
    for first in range(hi + 1):
        for rest in _compositions(d - 1, max(lo - first, 0), hi - first):
            yield (first,) + rest


def enumerate_simplex(d: int, L: int) -> list[MultiIndex]:
    """All ``l`` in ``N_0^d`` with ``|l|_1 <= L``."""
    _check_dim(d)
    _check_level(L)
    return list(_compositions(d, 0, L))


def shell_floor(d: int, L: int) -> int:
    """Smallest level sum that carries a non-zero combination coefficient."""
    return max(0, L - d + 1)


def enumerate_shell(d: int, L: int) -> list[MultiIndex]:
    """All ``l`` with ``max(0, L-d+1) <= |l|_1 <= L``."""
    _check_dim(d)
    _check_level(L)
    return list(_compositions(d, shell_floor(d, L), L))


def combination_coefficient(d: int, L: int, l: Sequence[int]) -> int:
    """Signed combination-technique coefficient of ``l`` in the level-``L`` shell."""
    _check_dim(d)
    _check_level(L)
    if len(l) != d or any(v < 0 for v in l):
        raise ValueError(f"{tuple(l)} is not a multi-index of dimension {d}")
    gap = L - sum(l)
    if not 0 <= gap <= d - 1:
        raise ValueError(f"{tuple(l)} lies outside the level-{L} shell in dimension {d}")
    return (-1) ** gap * comb(d - 1, gap)


def q_map(l: Sequence[int], p: Sequence[int]) -> MultiIndex:
    """Clamped subtraction ``max(l_j - p_j, 0)``."""
    if len(l) != len(p):
        raise ValueError(f"length mismatch: {len(l)} levels vs {len(p)} penalties")
    return tuple(max(a - b, 0) for a, b in zip(l, p))


def enumerate_reduced(d: int, p: Sequence[int], L: int) -> list[MultiIndex]:
    """Image of the level-``L`` shell under :func:`q_map`.

    A reduced index ``a`` with support ``v`` has preimages whose level sums
    range over ``[sum_v(a_j + p_j), sum_v a_j + sum(p)]``; ``a`` is in the image
    iff that range meets the shell. The search walks dimensions in order of
    increasing penalty and stops as soon as the cheapest extension would push
    the lower end past ``L``, so only reachable supports are visited. This is
    what keeps ``d = 100`` cheap.
    """
    _check_dim(d)
    _check_level(L)
    p = as_penalty(p, d)
    order = sorted(range(d), key=lambda j: (p[j], j))
    floor = shell_floor(d, L)
    total_p = sum(p)
    found: list[MultiIndex] = []
    entries = [0] * d

    def walk(start: int, budget: int, support_sum: int) -> None:
        if support_sum + total_p >= floor:
            found.append(tuple(entries))
        for pos in range(start, d):
            j = order[pos]
            if p[j] + 1 > budget:
                break
            for a in range(1, budget - p[j] + 1):
                entries[j] = a
                walk(pos + 1, budget - a - p[j], support_sum + a)
            entries[j] = 0

    walk(0, L, 0)
    found.sort()
    return found


def is_reduced_member(a: Sequence[int], p: Sequence[int], L: int) -> bool:
    """Membership test for the reduced set without enumerating it."""
    d = len(p)
    if len(a) != d or any(v < 0 for v in a):
        return False
    lowest = sum(a_j + p_j for a_j, p_j in zip(a, p) if a_j > 0)
    highest = sum(a) + sum(p)
    return lowest <= L and highest >= shell_floor(d, L)


def bounded_composition_count(m: int, caps: Sequence[int]) -> int:
    """Number of ``l`` in ``N_0^k`` with ``|l|_1 = m`` and ``l_i <= caps[i]``.

    Inclusion-exclusion over the set ``w`` of coordinates forced above their
    cap; ``w`` only contributes while ``sum_w (cap + 1) <= m``, so with caps
    sorted ascending the subset search is cut off early.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    k = len(caps)
    if k == 0:
        raise ValueError("caps must be non-empty")
    if any(c < 0 for c in caps):
        raise ValueError("caps must be non-negative")
    excess = sorted(c + 1 for c in caps)
    total = 0

    def walk(start: int, used: int, size: int) -> None:
        nonlocal total
        total += (-1) ** size * binom(m - used + k - 1, k - 1)
        for i in range(start, k):
            if used + excess[i] > m:
                break
            walk(i + 1, used + excess[i], size + 1)

    walk(0, 0, 0)
    return total


def reduced_weight(a: Sequence[int], d: int, p: Sequence[int], L: int) -> int:
    """Summed combination coefficient over the preimage of ``a`` under ``q_map``.

    Preimage members agree with ``a + p`` on the support of ``a`` and range
    over ``[0, p_j]`` elsewhere; grouping them by the free part's level sum
    ``m`` turns the sum into bounded composition counts times a binomial.
    """
    _check_dim(d)
    _check_level(L)
    p = as_penalty(p, d)
    a = tuple(int(v) for v in a)
    if not is_reduced_member(a, p, L):
        raise ValueError(f"{a} is not in the reduced index set for p={p}, L={L}")
    zero_caps = [p[j] for j in range(d) if a[j] == 0]
    base = sum(a[j] + p[j] for j in range(d) if a[j] > 0)
    m_lo = max(0, L - base - (d - 1))
    m_hi = min(sum(zero_caps), L - base)
    total = 0
    for m in range(m_lo, m_hi + 1):
        if zero_caps:
            ways = bounded_composition_count(m, zero_caps)
        else:
            ways = 1 if m == 0 else 0
        gap = L - m - base
        total += ways * (-1) ** gap * binom(d - 1, gap)
    return total


def preimage(a: Sequence[int], p: Sequence[int], L: int) -> list[MultiIndex]:
    """Shell members mapping to ``a``; brute force, for small problems only."""
    d = len(p)
    ranges = [range(a_j + p_j, a_j + p_j + 1) if a_j > 0 else range(p_j + 1)
              for a_j, p_j in zip(a, p)]
    floor = shell_floor(d, L)
    return [l for l in itertools.product(*ranges) if floor <= sum(l) <= L]


def rho(l: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split ``l`` into its 1-based support and the positive entries on it."""
    if any(v < 0 for v in l):
        raise ValueError(f"{tuple(l)} has negative entries")
    support = tuple(j + 1 for j, v in enumerate(l) if v > 0)
    return support, tuple(l[j - 1] for j in support)


def rho_inverse(pair: tuple[Sequence[int], Sequence[int]], d: int) -> MultiIndex:
    """Scatter compressed entries back onto their support in dimension ``d``."""
    _check_dim(d)
    support, entries = pair
    if len(support) != len(entries):
        raise ValueError("support and entries differ in length")
    if any(not 1 <= s <= d for s in support):
        raise ValueError(f"support {tuple(support)} out of range for d={d}")
    if any(b <= a for a, b in zip(support, support[1:])):
        raise ValueError(f"support {tuple(support)} is not strictly increasing")
    if any(e <= 0 for e in entries):
        raise ValueError("compressed entries must be strictly positive")
    out = [0] * d
    for s, e in zip(support, entries):
        out[s - 1] = int(e)
    return tuple(out)


def subsets(d: int, k: int) -> list[tuple[int, ...]]:
    """All size-``k`` subsets of ``{1, ..., d}`` in lexicographic order."""
    _check_dim(d)
    return list(itertools.combinations(range(1, d + 1), k))


def support_size_class(d: int, k: int, L: int) -> list[MultiIndex]:
    """Members of the level-``L`` simplex with exactly ``k`` positive entries."""
    return [l for l in enumerate_simplex(d, L) if sum(v > 0 for v in l) == k]
