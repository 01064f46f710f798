"""Dispatch to the numba or numpy implementation of each hot kernel.

The active backend is fixed at import time by :mod:`pgica._backend`. Both
implementation modules stay importable directly for cross-checks and the
benchmark script.
"""

from .._backend import BACKEND
from . import _numpy as numpy_impl
from ._common import GAUSSIAN, LAPLACE, MIXED, SECH, STUDENT_T  # noqa: F401

if BACKEND == "numba":
    from . import _numba as impl
else:
    impl = numpy_impl

pg1_draws = impl.pg1_draws
gibbs_sources = impl.gibbs_sources
# numpy's SIMD exp/log1p beat numba's scalar loop here when numba lacks SVML
# (see benchmarks/bench_backends.py), so both backends use the numpy version.
source_loglik_sum = numpy_impl.source_loglik_sum
em_z_matrices = impl.em_z_matrices


def load_numba_impl():
    """Import the numba module on demand (raises ImportError without numba)."""
    from . import _numba

    return _numba
