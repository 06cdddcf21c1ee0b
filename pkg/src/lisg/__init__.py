"""Kernel interpolation on lengthscale-informed sparse grids."""

from lisg.grids import assemble_lisg, count_lisg
from lisg.interpolate import Interpolant, evaluate, fit_dense, fit_fast, native_norm, posterior_variance
from lisg.kernels import MaternParams, SeparableMaternKernel

__all__ = [
    "Interpolant",
    "MaternParams",
    "SeparableMaternKernel",
    "assemble_lisg",
    "count_lisg",
    "evaluate",
    "fit_dense",
    "fit_fast",
    "native_norm",
    "posterior_variance",
]
