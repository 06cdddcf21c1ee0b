"""Experiment harness: random targets, Monte Carlo errors and sweeps over levels.

Randomness comes from counter-based Philox streams keyed by
``(seed, run, purpose)``, so each run's target, error sample and Monte Carlo
design are reproducible on their own and independent of evaluation order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import zlib
from dataclasses import asdict, dataclass, replace
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from lisg.grids import FAMILIES, SparseGridDesign, assemble_lisg, count_lisg
from lisg.interpolate import (
    FactorizationError,
    fit_dense,
    posterior_variance,
    solve_fast,
)
from lisg.kernels import SeparableMaternKernel

log = logging.getLogger(__name__)

SCHEDULES = ("lin", "log", "zero")
DESIGNS = ("lisg", "sg", "mc")
KERNELS = ("matched", "isotropic")
CSV_HEADER = ("design", "kernel", "d", "nu", "schedule", "eta", "L", "N", "err_mean", "err_std", "fit_seconds")


def stream(seed: int, run: int, tag: str, *extra: int) -> np.random.Generator:
    """Independent generator for one (seed, run, purpose) triple."""
    key = [int(seed) & (2**64 - 1), int(run), zlib.crc32(tag.encode()), *map(int, extra)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def penalty_schedule(kind: str, d: int, eta: float = 0.0) -> tuple[int, ...]:
    """Penalty vector for a named schedule, perturbed to ``ceil((1 + eta) p_j)``.

    ``kind`` is ``lin`` (``j - 1``), ``log`` (``ceil(log2 j)``), ``zero``, or
    ``list:p1,p2,...`` for an explicit vector. ``eta`` is taken at its decimal
    value so that e.g. ``1.2 * 5`` rounds up to 6, not 7.
    """
    if d < 1:
        raise ValueError("dimension must be positive")
    if eta < -1:
        raise ValueError("eta must be at least -1")
    if kind == "lin":
        base = [j for j in range(d)]
    elif kind == "log":
        base = [(j - 1).bit_length() for j in range(1, d + 1)]
    elif kind == "zero":
        base = [0] * d
    elif kind.startswith("list:"):
        base = [int(v) for v in kind[5:].split(",") if v.strip()]
        if len(base) != d:
            raise ValueError(f"explicit schedule has {len(base)} entries, expected {d}")
        if any(v < 0 for v in base):
            raise ValueError("penalties must be non-negative")
    else:
        raise ValueError(f"unknown schedule {kind!r}")
    factor = 1 + Fraction(repr(float(eta)))
    return tuple(math.ceil(factor * v) for v in base)


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings shared by every experiment; names mirror the CLI flags."""

    dim: int = 10
    nu: float = 1.5
    schedule: str = "lin"
    eta: float = 0.0
    family: str = "uniform"
    levels: tuple[int, ...] = tuple(range(7))
    design: str = "lisg"
    kernel: str = "matched"
    centers: int = 50
    mc_samples: int = 100
    runs: int = 10
    seed: int = 0
    nugget: float = 0.0
    coef_spread: float = 5.0
    coef_spread_is_variance: bool = True
    sigma: float = 1.0
    max_points: int | None = None
    timing: bool = True

    def __post_init__(self) -> None:
        if min(self.dim, self.centers, self.mc_samples, self.runs) < 1:
            raise ValueError("dim, centers, mc_samples and runs must all be at least 1")
        if self.eta < -1:
            raise ValueError("eta must be at least -1")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel choice {self.kernel!r}")
        if any(L < 0 for L in self.levels):
            raise ValueError("levels must be non-negative")
        penalty_schedule(self.schedule, self.dim)

    @property
    def target_penalties(self) -> tuple[int, ...]:
        return penalty_schedule(self.schedule, self.dim)

    @property
    def penalties(self) -> tuple[int, ...]:
        """Penalties used by the interpolating design and matched kernel."""
        return penalty_schedule(self.schedule, self.dim, self.eta)

    @property
    def design_penalties(self) -> tuple[int, ...]:
        return self.penalties if self.design == "lisg" else (0,) * self.dim

    def interpolation_kernel(self) -> SeparableMaternKernel:
        if self.kernel == "isotropic":
            return SeparableMaternKernel.isotropic(self.nu, self.dim, sigma=self.sigma)
        return SeparableMaternKernel.from_penalties(self.nu, self.penalties, self.sigma)


@dataclass(frozen=True)
class TargetFunction:
    """``f(x) = sum_i coef_i K(center_i, x)`` for a separable Matérn kernel."""

    centers: np.ndarray
    coefficients: np.ndarray
    kernel: SeparableMaternKernel

    def __call__(self, X) -> np.ndarray:
        return self.kernel.cross(X, self.centers) @ self.coefficients

    def native_norm(self) -> float:
        gram = self.kernel.gram(self.centers)
        return math.sqrt(max(float(self.coefficients @ gram @ self.coefficients), 0.0))


def gen_target(config: ExperimentConfig, run_index: int, *, coefficients: Sequence[float] | None = None) -> TargetFunction:
    """Random kernel combination for one run, built with the unperturbed schedule."""
    rng = stream(config.seed, run_index, "target")
    centers = rng.uniform(-0.5, 0.5, size=(config.centers, config.dim))
    scale = math.sqrt(config.coef_spread) if config.coef_spread_is_variance else config.coef_spread
    drawn = rng.normal(0.0, scale, size=config.centers)
    coef = drawn if coefficients is None else np.asarray(coefficients, dtype=float).reshape(config.centers)
    kernel = SeparableMaternKernel.from_penalties(config.nu, config.target_penalties, config.sigma)
    return TargetFunction(centers, coef, kernel)


def l2_errors(predict: Callable[[np.ndarray], np.ndarray], target: Callable[[np.ndarray], np.ndarray],
              samples: np.ndarray, target_values: np.ndarray | None = None) -> tuple[float, float]:
    """Relative and absolute root-mean-square errors on the given sample points."""
    f = target(samples) if target_values is None else target_values
    diff = f - predict(samples)
    sq_err = float(diff @ diff)
    sq_ref = float(f @ f)
    absolute = math.sqrt(sq_err / len(f))
    relative = math.sqrt(sq_err / sq_ref) if sq_ref > 0 else absolute
    return relative, absolute


def relative_l2_error(predict, target, n_samples: int, rng: np.random.Generator) -> float:
    """Monte Carlo estimate of ``||f - s|| / ||f||`` from uniform points in the cube.

    Falls back to the absolute root-mean-square error when ``f`` vanishes on
    the sample.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    d = target.kernel.d if isinstance(target, TargetFunction) else predict.kernel.d
    samples = rng.uniform(-0.5, 0.5, size=(n_samples, d))
    return l2_errors(predict, target, samples)[0]


@dataclass(frozen=True)
class ResultRow:
    design: str
    kernel: str
    d: int
    nu: float
    schedule: str
    eta: float
    L: int
    N: int
    err_mean: float
    err_std: float
    fit_seconds: float
    abs_err_mean: float = float("nan")
    status: str = "ok"

    def csv_fields(self) -> list[str]:
        return [self.design, self.kernel, str(self.d), repr(self.nu), self.schedule, repr(self.eta),
                str(self.L), str(self.N), repr(self.err_mean), repr(self.err_std), f"{self.fit_seconds:.6f}"]


def _build_design(config: ExperimentConfig, L: int) -> SparseGridDesign:
    return assemble_lisg(config.dim, config.design_penalties, L, config.family)


def _fit_weights(config: ExperimentConfig, kernel, design_points, values, design: SparseGridDesign | None):
    if design is not None:
        return solve_fast(design, kernel, values, nugget=config.nugget)
    return fit_dense(design_points, kernel, values, config.nugget).weights


def run_convergence(config: ExperimentConfig, *, progress: Callable[[str], None] | None = None) -> list[ResultRow]:
    """Error and solve time against design size for each configured level.

    Each run draws its own target and error sample once and reuses them across
    levels. Grid designs are solved with the combination solver and Monte
    Carlo designs (sized to match the sparse grid at the same level) with a
    dense Cholesky solve. Only the solve is timed.
    """
    kernel = config.interpolation_kernel()
    targets = [gen_target(config, r) for r in range(config.runs)]
    samples = [stream(config.seed, r, "error-sample").uniform(-0.5, 0.5, size=(config.mc_samples, config.dim))
               for r in range(config.runs)]
    sample_values = [t(s) for t, s in zip(targets, samples)]
    rows = []
    for L in sorted(config.levels):
        if config.max_points is not None and config.family == "uniform":
            size = count_lisg(config.dim, config.penalties if config.design == "mc" else config.design_penalties, L)
            if size > config.max_points:
                log.info("skipping level %d: %d points exceeds max_points=%d", L, size, config.max_points)
                continue
        grid = _build_design(config, L) if config.design != "mc" else None
        n_points = grid.size if grid is not None else count_lisg(config.dim, config.penalties, L)
        rel, absolute, seconds = [], [], []
        status = "ok"
        for r, target in enumerate(targets):
            if grid is not None:
                pts = grid.points
            else:
                pts = stream(config.seed, r, "mc-design", L).uniform(-0.5, 0.5, size=(n_points, config.dim))
            values = target(pts)
            start = time.perf_counter()
            try:
                w = _fit_weights(config, kernel, pts, values, grid)
            except FactorizationError as exc:
                log.warning("level %d run %d: %s", L, r, exc)
                status = "factorization-failed"
                break
            seconds.append(time.perf_counter() - start)

            def predict(X, w=w, pts=pts):
                return kernel.cross(X, pts) @ w

            e_rel, e_abs = l2_errors(predict, target, samples[r], sample_values[r])
            rel.append(e_rel)
            absolute.append(e_abs)
        if status != "ok":
            nan = float("nan")
            row = ResultRow(config.design, config.kernel, config.dim, config.nu, config.schedule, config.eta,
                            L, n_points, nan, nan, nan, nan, status)
        else:
            row = ResultRow(config.design, config.kernel, config.dim, config.nu, config.schedule, config.eta,
                            L, n_points, float(np.mean(rel)), float(np.std(rel, ddof=1)) if len(rel) > 1 else 0.0,
                            float(np.mean(seconds)) if config.timing else float("nan"),
                            float(np.mean(absolute)), status)
        rows.append(row)
        if progress:
            progress(f"L={L} N={row.N} err={row.err_mean:.3e} fit={row.fit_seconds:.3g}s")
    return rows


def run_misspecification(config: ExperimentConfig, etas: Sequence[float],
                         progress: Callable[[str], None] | None = None) -> dict[float, list[ResultRow]]:
    """One convergence curve per perturbation of the interpolating penalties.

    The targets always use the unperturbed schedule; design and kernel use the
    perturbed one, so ``eta = -1`` is the isotropic grid with isotropic kernel.
    """
    return {float(eta): run_convergence(replace(config, eta=float(eta), design="lisg", kernel="matched"),
                                        progress=progress)
            for eta in etas}


@dataclass(frozen=True)
class VarianceMap:
    axis: np.ndarray
    raw: np.ndarray
    clipped: np.ndarray
    design_points: np.ndarray
    design_variance: np.ndarray
    penalties: tuple[int, ...]
    level: int

    @property
    def N(self) -> int:
        return self.design_points.shape[0]


def run_variance_map(config: ExperimentConfig, resolution: int, level: int,
                     vmax: float | None = None) -> VarianceMap:
    """Posterior variance of the two-dimensional design on a square probe mesh.

    The mesh is ``resolution`` equally spaced nodes per axis spanning the
    closed square, edges included; ``raw[i, k]`` is the variance at
    ``(axis[i], axis[k])``.
    """
    if config.dim != 2:
        raise ValueError("variance maps are two-dimensional")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    p = config.design_penalties
    kernel = config.interpolation_kernel()
    axis = np.linspace(-0.5, 0.5, resolution)
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    mesh = np.column_stack([g1.ravel(), g2.ravel()])
    options = dict(family=config.family, nugget=config.nugget, check_lengthscales=False)
    raw = posterior_variance(2, p, level, kernel, mesh, **options).reshape(resolution, resolution)
    design = assemble_lisg(2, p, level, config.family)
    at_design = posterior_variance(2, p, level, kernel, design.points, **options)
    clipped = np.minimum(raw, vmax) if vmax is not None else raw.copy()
    return VarianceMap(axis, raw, clipped, design.points, at_design, p, level)


def banding_ratio(vmap: VarianceMap) -> float:
    """Mean absolute variance gradient along the first axis over that along the second."""
    d1, d2 = np.gradient(vmap.raw, vmap.axis, vmap.axis)
    return float(np.mean(np.abs(d1)) / np.mean(np.abs(d2)))


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


def rows_to_json(rows: Sequence[ResultRow]) -> str:
    return json.dumps([asdict(r) for r in rows], indent=2)


def loglog_slope(N: Sequence[float], err: Sequence[float]) -> float:
    """Least-squares slope of ``log2(err)`` against ``log2(N)``."""
    x = np.log2(np.asarray(N, dtype=float))
    y = np.log2(np.asarray(err, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def error_at(rows: Sequence[ResultRow], n: float) -> tuple[float, float]:
    """Mean and stddev interpolated in log-log space at design size ``n``."""
    N = np.log([r.N for r in rows])
    mean = np.log([r.err_mean for r in rows])
    std = np.array([r.err_std for r in rows])
    if not N[0] <= math.log(n) <= N[-1]:
        raise ValueError(f"N={n} outside the curve's range")
    m = float(np.exp(np.interp(math.log(n), N, mean)))
    s = float(np.interp(math.log(n), N, std))
    return m, s


def largest_common_n(*curves: Sequence[ResultRow]) -> int:
    return min(max(r.N for r in c) for c in curves)
