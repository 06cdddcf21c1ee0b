"""Command-line entry point: ``lisg <subcommand> [flags]``.

Every flag can also come from a ``--config`` file of ``key = value`` lines
whose keys are flag names (``mc-samples = 100``); flags given on the command
line win.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from lisg.bench import (
    DESIGNS,
    KERNELS,
    ExperimentConfig,
    banding_ratio,
    gen_target,
    penalty_schedule,
    rows_to_csv,
    rows_to_json,
    run_convergence,
    run_misspecification,
    run_variance_map,
)
from lisg.bounds import DEFAULT_FLOOR, BoundParams, bound_curve, bound_curve_csv
from lisg.grids import FAMILIES, assemble_lisg, count_lisg, design_csv, write_design
from lisg.interpolate import fit_fast
from lisg.multiindex import enumerate_reduced

DEFAULT_ETAS = "-1,-0.5,-0.2,0,0.2,0.5,1"


def parse_levels(text: str) -> tuple[int, ...]:
    """``"a..b"`` (inclusive), ``"a,b,c"`` or a single level."""
    text = text.strip()
    if ".." in text:
        lo, hi = (int(v) for v in text.split("..", 1))
        if hi < lo:
            raise argparse.ArgumentTypeError(f"empty level range {text!r}")
        return tuple(range(lo, hi + 1))
    return tuple(int(v) for v in text.split(",") if v.strip())


def parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def read_config(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file with defaults for any flag")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--nu", type=float, default=1.5)
    p.add_argument("--schedule", default="lin", help="lin, log, zero or list:p1,p2,...")
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--family", choices=FAMILIES, default="uniform")
    p.add_argument("--levels", type=parse_levels, default=parse_levels("0..4"))
    p.add_argument("--level", type=int, help="single level for grid, fit and variance-map")
    p.add_argument("--design", choices=DESIGNS, default="lisg")
    p.add_argument("--kernel", choices=KERNELS, default="matched")
    p.add_argument("--centers", type=int, default=50)
    p.add_argument("--mc-samples", type=int, default=100)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nugget", type=float, default=0.0)
    p.add_argument("--coef-spread", type=float, default=5.0, help="spread of the target coefficients")
    p.add_argument("--coef-spread-is-std", action="store_true",
                   help="read --coef-spread as a standard deviation rather than a variance")
    p.add_argument("--max-points", type=int, help="skip levels whose design exceeds this size")
    p.add_argument("--no-timing", action="store_true",
                   help="write nan for fit_seconds so repeated runs give identical output")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lisg", description="Sparse-grid kernel interpolation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "grid": "write a design as CSV plus JSON metadata",
        "count": "print design sizes N and reduced-set sizes",
        "fit": "fit an interpolant to a random target and serialise it",
        "convergence": "error and solve time against N over levels",
        "misspec": "convergence curves for perturbed penalties",
        "variance-map": "posterior variance on a 2-D probe mesh",
        "bound": "a-priori error bound against level",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        _common(p)
        if name == "fit":
            p.add_argument("--run", type=int, default=0, help="which target realisation to fit")
        if name == "misspec":
            p.add_argument("--etas", type=parse_floats, default=parse_floats(DEFAULT_ETAS))
        if name == "variance-map":
            p.add_argument("--resolution", type=int, default=101)
            p.add_argument("--vmax", type=float, help="display clip level for the clipped matrix")
        if name == "bound":
            p.add_argument("--alpha", type=float, help="target smoothness (default nu - 1)")
            p.add_argument("--wendland", type=float, default=1.0, help="per-dimension constant")
            p.add_argument("--floor", type=float, default=DEFAULT_FLOOR)
    return parser


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    first = parser.parse_args(argv)
    if first.config:
        values = read_config(first.config)
        sub = parser._subparsers._group_actions[0].choices[first.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(values) - known)
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        flags = {a.dest: a for a in sub._actions}
        for key, value in values.items():
            action = flags[key]
            if action.nargs == 0:
                values[key] = value.lower() in ("1", "true", "yes", "on")
        sub.set_defaults(**values)
        return parser.parse_args(argv)
    return first


def config_from(args: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig(
        dim=args.dim, nu=args.nu, schedule=args.schedule, eta=args.eta, family=args.family,
        levels=tuple(args.levels), design=args.design, kernel=args.kernel, centers=args.centers,
        mc_samples=args.mc_samples, runs=args.runs, seed=args.seed, nugget=args.nugget,
        coef_spread=args.coef_spread, coef_spread_is_variance=not args.coef_spread_is_std,
        max_points=args.max_points, timing=not args.no_timing,
    )


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _single_level(args) -> int:
    return args.level if args.level is not None else max(args.levels)


def cmd_grid(args) -> None:
    config = config_from(args)
    design = assemble_lisg(config.dim, config.design_penalties, _single_level(args), config.family)
    if args.out:
        csv_path, meta_path = write_design(design, args.out)
        print(f"wrote {design.size} points to {csv_path} (metadata {meta_path})", file=sys.stderr)
    else:
        sys.stdout.write(design_csv(design))


def cmd_count(args) -> None:
    config = config_from(args)
    p = config.design_penalties
    levels = [args.level] if args.level is not None else list(args.levels)
    rows = []
    for L in levels:
        if config.family == "uniform":
            n = count_lisg(config.dim, p, L)
        else:
            n = assemble_lisg(config.dim, p, L, config.family).size
        rows.append({"L": L, "N": n, "reduced": len(enumerate_reduced(config.dim, p, L))})
    if args.format == "json":
        _emit(json.dumps({"d": config.dim, "penalties": list(p), "rows": rows}, indent=2) + "\n", args.out)
    else:
        _emit("L,N,reduced\n" + "".join(f"{r['L']},{r['N']},{r['reduced']}\n" for r in rows), args.out)


def cmd_fit(args) -> None:
    config = config_from(args)
    L = _single_level(args)
    target = gen_target(config, args.run)
    p = config.design_penalties
    interp = fit_fast(config.dim, p, L, config.interpolation_kernel(), target, family=config.family,
                      nugget=config.nugget, check_lengthscales=False)
    _emit(interp.to_json() + "\n", args.out)


def cmd_convergence(args) -> None:
    config = config_from(args)
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    rows = run_convergence(config, progress=progress)
    _emit(rows_to_json(rows) + "\n" if args.format == "json" else rows_to_csv(rows), args.out)


def cmd_misspec(args) -> None:
    config = config_from(args)
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    curves = run_misspecification(config, args.etas, progress=progress)
    rows = [row for eta in sorted(curves) for row in curves[eta]]
    _emit(rows_to_json(rows) + "\n" if args.format == "json" else rows_to_csv(rows), args.out)


def _matrix_csv(matrix: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows([repr(float(v)) for v in row] for row in matrix)
    return buf.getvalue()


def cmd_variance_map(args) -> None:
    config = config_from(args)
    vmap = run_variance_map(config, args.resolution, _single_level(args), args.vmax)
    print(f"N={vmap.N} banding_ratio={banding_ratio(vmap):.3f}", file=sys.stderr)
    if args.format == "json":
        payload = {
            "penalties": list(vmap.penalties), "level": vmap.level, "N": vmap.N,
            "axis": vmap.axis.tolist(), "raw": vmap.raw.tolist(), "clipped": vmap.clipped.tolist(),
            "design_points": vmap.design_points.tolist(),
        }
        _emit(json.dumps(payload) + "\n", args.out)
        return
    _emit(_matrix_csv(vmap.raw), args.out)
    if args.out and args.vmax is not None:
        clipped_path = Path(args.out).with_suffix(".clipped.csv")
        clipped_path.write_text(_matrix_csv(vmap.clipped))


def cmd_bound(args) -> None:
    config = config_from(args)
    alpha = args.alpha if args.alpha is not None else args.nu - 1.0
    params = BoundParams.uniform(config.dim, args.nu, alpha, wendland_constant=args.wendland)
    rows = bound_curve(config.dim, config.penalties, params, args.levels, args.floor)
    if args.format == "json":
        _emit(json.dumps([{"L": L, "N": N, "bound": b} for L, N, b in rows], indent=2) + "\n", args.out)
    else:
        _emit(bound_curve_csv(rows), args.out)


COMMANDS = {
    "grid": cmd_grid,
    "count": cmd_count,
    "fit": cmd_fit,
    "convergence": cmd_convergence,
    "misspec": cmd_misspec,
    "variance-map": cmd_variance_map,
    "bound": cmd_bound,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        penalty_schedule(args.schedule, args.dim, args.eta)
        COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
