"""Nested one-dimensional point families and sparse-grid design assembly.

Points are keyed exactly: dyadic families by a canonical ``(numerator, scale)``
pair, the Clenshaw-Curtis family by its reduced angle (itself a dyadic fraction
of pi). Deduplication across component grids therefore never compares floats.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from lisg.multiindex import (
    MultiIndex,
    as_penalty,
    binom,
    enumerate_reduced,
    q_map,
)

FAMILIES = ("uniform", "boundary", "clenshaw-curtis")


class DyadicPoint(NamedTuple):
    """Exact coordinate ``numerator / 2**scale`` in canonical form."""

    numerator: int
    scale: int

    @classmethod
    def of(cls, numerator: int, scale: int) -> "DyadicPoint":
        if scale < 0:
            raise ValueError("scale must be non-negative")
        if numerator == 0:
            return cls(0, 0)
        while scale > 0 and numerator % 2 == 0:
            numerator //= 2
            scale -= 1
        return cls(numerator, scale)

    @property
    def value(self) -> float:
        # exact: every dyadic with a moderate scale is a binary float
        return math.ldexp(self.numerator, -self.scale)

    def as_fraction(self) -> Fraction:
        return Fraction(self.numerator, 2**self.scale)

    def decimal(self) -> str:
        """Exact finite decimal expansion of the coordinate."""
        if self.scale == 0:
            return str(self.numerator)
        digits = str(abs(self.numerator) * 5**self.scale).rjust(self.scale + 1, "0")
        sign = "-" if self.numerator < 0 else ""
        return f"{sign}{digits[:-self.scale]}.{digits[-self.scale:]}"


ORIGIN = DyadicPoint(0, 0)
GridPoint = tuple[DyadicPoint, ...]


def uniform_points(l: int) -> list[DyadicPoint]:
    """Points ``n / 2**(l+1)`` strictly inside ``(-1/2, 1/2)``, ascending."""
    if l < 0:
        raise ValueError("level must be non-negative")
    half = 2**l
    return [DyadicPoint.of(n, l + 1) for n in range(-half + 1, half)]


def penalised_points(l: int, p: int) -> list[DyadicPoint]:
    """Uniform points whose onset is delayed by ``p`` levels."""
    if l < 0 or p < 0:
        raise ValueError("level and penalty must be non-negative")
    return uniform_points(max(l - p, 0))


def boundary_points(l: int) -> list[DyadicPoint]:
    """Uniform points of the previous level plus both endpoints."""
    if l < 0:
        raise ValueError("level must be non-negative")
    if l == 0:
        return [ORIGIN]
    inner = uniform_points(l - 1) if l >= 2 else [ORIGIN]
    return [DyadicPoint.of(-1, 1), *inner, DyadicPoint.of(1, 1)]


def cc_angles(l: int) -> list[DyadicPoint]:
    """Reduced angles ``t`` (in units of pi) of the level-``l`` Clenshaw-Curtis set.

    Angles ``n / 2**l`` with ``|n| < 2**l`` are folded into ``[-1/2, 1/2]`` via
    ``sin(pi t) = sin(pi (1 - t))``; distinct folded angles give distinct sines.
    """
    if l < 0:
        raise ValueError("level must be non-negative")
    seen = set()
    for n in range(-(2**l) + 1, 2**l):
        t = Fraction(n, 2**l)
        if t > Fraction(1, 2):
            t = 1 - t
        elif t < Fraction(-1, 2):
            t = -1 - t
        seen.add(DyadicPoint.of(t.numerator, t.denominator.bit_length() - 1))
    return sorted(seen, key=lambda k: k.value)


def cc_value(angle: DyadicPoint) -> float:
    return math.sin(math.pi * angle.value) / 2


def cc_points(l: int) -> list[float]:
    """Clenshaw-Curtis abscissae ``sin(n pi / 2**l) / 2``, ascending."""
    return [cc_value(t) for t in cc_angles(l)]


@dataclass(frozen=True)
class PointFamily:
    """A nested 1-D family: exact keys per level and a key-to-coordinate map."""

    name: str
    keys: Callable[[int], list[DyadicPoint]]
    coordinate: Callable[[DyadicPoint], float]


_FAMILY_TABLE = {
    "uniform": PointFamily("uniform", uniform_points, lambda k: k.value),
    "boundary": PointFamily("boundary", boundary_points, lambda k: k.value),
    "clenshaw-curtis": PointFamily("clenshaw-curtis", cc_angles, cc_value),
}


def point_family(name: str) -> PointFamily:
    try:
        return _FAMILY_TABLE[name]
    except KeyError:
        raise ValueError(f"unknown point family {name!r}; expected one of {FAMILIES}") from None


@dataclass(frozen=True)
class SparseGridDesign:
    """Deduplicated sparse-grid design with its component scatter maps.

    ``component_maps`` is keyed by reduced index ``a`` (the image of a shell
    member under ``q_map``); the tensor grid of any shell member ``l`` equals
    that of ``q_map(l, p)``, so :meth:`component_map` looks it up that way.
    Each map sends the component grid's local lexicographic ordering to
    global point indices.
    """

    d: int
    penalties: MultiIndex
    level: int
    family: str
    keys: tuple[GridPoint, ...]
    points: np.ndarray
    component_maps: Mapping[MultiIndex, np.ndarray]
    index: Mapping[GridPoint, int] = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.keys)

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def reduced(self) -> list[MultiIndex]:
        return list(self.component_maps)

    def component_map(self, l: Sequence[int]) -> np.ndarray:
        return self.component_maps[q_map(l, self.penalties)]

    def component_keys(self, a: Sequence[int]) -> list[list[DyadicPoint]]:
        """Per-dimension 1-D keys of the tensor grid for reduced index ``a``."""
        fam = point_family(self.family)
        return [fam.keys(level) for level in a]

    def metadata(self) -> dict:
        return {
            "d": self.d,
            "penalties": list(self.penalties),
            "level": self.level,
            "family": self.family,
            "N": self.size,
        }


def _component_grid(keys_1d: list[list[DyadicPoint]]) -> list[GridPoint]:
    return [tuple(pt) for pt in itertools.product(*keys_1d)]


def assemble_lisg(d: int, p: Sequence[int], L: int, family: str = "uniform") -> SparseGridDesign:
    """Union of the component tensor grids of the level-``L`` sparse grid.

    Component grids are built only for the reduced index set, which covers
    every member of the full simplex since the families are nested.
    """
    p = as_penalty(p, d)
    if L < 0:
        raise ValueError("level must be non-negative")
    fam = point_family(family)
    reduced = enumerate_reduced(d, p, L)
    grids = {a: _component_grid([fam.keys(level) for level in a]) for a in reduced}
    unique = set()
    for pts in grids.values():
        unique.update(pts)
    ordered = sorted(unique, key=lambda pt: tuple(k.value for k in pt))
    index = {pt: i for i, pt in enumerate(ordered)}
    coord_cache: dict[DyadicPoint, float] = {}
    points = np.empty((len(ordered), d))
    for i, pt in enumerate(ordered):
        for j, k in enumerate(pt):
            c = coord_cache.get(k)
            if c is None:
                c = coord_cache[k] = fam.coordinate(k)
            points[i, j] = c
    maps = {a: np.fromiter((index[pt] for pt in grids[a]), dtype=np.int64, count=len(grids[a]))
            for a in reduced}
    return SparseGridDesign(
        d=d,
        penalties=p,
        level=L,
        family=family,
        keys=tuple(ordered),
        points=points,
        component_maps=maps,
        index=index,
    )


def count_isotropic(k: int, L: int) -> int:
    """Size of the isotropic uniform sparse grid in ``k`` dimensions (0 if ``L < 0``)."""
    if k < 1:
        raise ValueError("dimension must be positive")
    if L < 0:
        return 0
    return sum(binom(l + k - 1, k - 1) * 2**l for l in range(L + 1))


def count_lisg(d: int, p: Sequence[int], L: int) -> int:
    """Exact size of the uniform-family design without assembling it.

    Every design point is the origin or has a support ``u`` of size ``k``; the
    points with support exactly ``u`` number ``2**k`` times the isotropic count
    at level ``L - |p_u| - k``. Subsets are aggregated by ``(k, |p_u|)`` in a
    dynamic programme, dropping any state already past level ``L``.
    """
    p = as_penalty(p, d)
    if L < 0:
        raise ValueError("level must be non-negative")
    states: dict[tuple[int, int], int] = {(0, 0): 1}
    for pj in sorted(p):
        nxt = dict(states)
        for (k, s), ways in states.items():
            if s + pj + k + 1 <= L:
                key = (k + 1, s + pj)
                nxt[key] = nxt.get(key, 0) + ways
        states = nxt
    total = 1
    iso: dict[tuple[int, int], int] = {}
    for (k, s), ways in states.items():
        if k == 0:
            continue
        level = L - s - k
        if (k, level) not in iso:
            iso[(k, level)] = count_isotropic(k, level)
        total += 2**k * ways * iso[(k, level)]
    return total


def count_lisg_by_subsets(d: int, p: Sequence[int], L: int) -> int:
    """The same count by explicit pruned recursion over subsets ``u``."""
    p = as_penalty(p, d)
    order = sorted(p)
    total = 1

    def walk(start: int, k: int, s: int) -> None:
        nonlocal total
        if k:
            total += 2**k * count_isotropic(k, L - s - k)
        for i in range(start, d):
            if s + order[i] + k + 1 > L:
                break
            walk(i + 1, k + 1, s + order[i])

    walk(0, 0, 0)
    return total


def fill_distance_uniform(l: int) -> Fraction:
    """Fill distance of the level-``l`` uniform points in ``[-1/2, 1/2]``."""
    if l < 0:
        raise ValueError("level must be non-negative")
    return Fraction(1, 2 ** (l + 1))


def design_csv(design: SparseGridDesign) -> str:
    """Design as CSV text with a ``dim_0,...`` header.

    Dyadic coordinates are written as exact decimals; Clenshaw-Curtis
    coordinates use the shortest round-tripping float repr.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"dim_{j}" for j in range(design.d)])
    if design.family == "clenshaw-curtis":
        writer.writerows([repr(float(v)) for v in row] for row in design.points)
    else:
        writer.writerows([k.decimal() for k in key] for key in design.keys)
    return buf.getvalue()


def write_design(design: SparseGridDesign, path: str | Path) -> tuple[Path, Path]:
    """Write :func:`design_csv` to ``path`` and the metadata to a ``.json`` sidecar."""
    path = Path(path)
    path.write_text(design_csv(design))
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(design.metadata(), indent=2) + "\n")
    return path, sidecar
