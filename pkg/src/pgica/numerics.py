"""Dense matrix helpers, serialization and seeded random streams.

Matrices are plain 2-D ``float64`` numpy arrays in C (row-major) order.
"""

from __future__ import annotations

import io
import json
import math
import warnings

import numpy as np
from scipy import linalg

from .errors import InvalidParameter, NonFinite, NotPositiveDefinite, SingularMatrix

PIVOT_RTOL = 1e-12


def as_matrix(a, *, name: str = "matrix") -> np.ndarray:
    """Return `a` as a finite, C-contiguous 2-D float64 array."""
    m = np.array(a, dtype=np.float64, order="C", ndmin=2)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if m.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(m)):
        raise NonFinite(f"{name} contains NaN or Inf")
    return m


def lu_det_inverse(a) -> tuple[float, np.ndarray]:
    """Determinant and inverse of a square matrix via partially pivoted LU.

    Raises
    ------
    SingularMatrix
        If any pivot magnitude is below ``1e-12 * max|a_ij|``.
    """
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ValueError(f"expected a square matrix, got {a.shape}")
    scale = np.max(np.abs(a))
    if scale == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrix
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(a, check_finite=False)
    pivots = np.diag(lu)
    if np.min(np.abs(pivots)) < PIVOT_RTOL * scale:
        raise SingularMatrix(
            f"pivot {np.min(np.abs(pivots)):.3e} below {PIVOT_RTOL:g} x max|entry| ({scale:.3e})"
        )
    swaps = np.count_nonzero(piv != np.arange(n))
    det = float(np.prod(pivots)) * (-1.0) ** swaps
    inv = linalg.lu_solve((lu, piv), np.eye(n), check_finite=False)
    return det, inv


def log_abs_det(a) -> float:
    """log|det a| with the same singularity guard as :func:`lu_det_inverse`."""
    a = as_matrix(a)
    scale = np.max(np.abs(a))
    if scale == 0.0:
        raise SingularMatrix("zero matrix")
    lu, _ = linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if np.min(pivots) < PIVOT_RTOL * scale:
        raise SingularMatrix("matrix is numerically singular")
    return float(np.sum(np.log(pivots)))


def inverse(a) -> np.ndarray:
    return lu_det_inverse(a)[1]


def cholesky_lower(m) -> np.ndarray:
    """Lower Cholesky factor, raising :class:`NotPositiveDefinite` on failure."""
    try:
        return linalg.cholesky(m, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def solve_spd(m, b) -> np.ndarray:
    """Solve ``m @ x = b`` for symmetric positive-definite `m` by Cholesky.

    `b` may be a vector or a matrix; the result has the same shape.
    """
    m = as_matrix(m)
    b_arr = np.asarray(b, dtype=np.float64)
    if m.shape[0] != m.shape[1]:
        raise ValueError("m must be square")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-10 * max(1.0, np.max(np.abs(m)))):
        raise ValueError("m is not symmetric within 1e-10")
    try:
        factor = linalg.cho_factor(m, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    return linalg.cho_solve(factor, b_arr, check_finite=False)


# -- serialization ---------------------------------------------------------

def matrix_to_record(a) -> dict:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]), "data": [float(v) for v in a.ravel()]}


def matrix_from_record(rec: dict) -> np.ndarray:
    rows, cols, data = rec["rows"], rec["cols"], rec["data"]
    if len(data) != rows * cols:
        raise ValueError(f"data length {len(data)} != rows*cols = {rows * cols}")
    return as_matrix(np.asarray(data, dtype=np.float64).reshape(rows, cols))


def matrix_to_json(a) -> str:
    return json.dumps(matrix_to_record(a), separators=(",", ":"))


def matrix_from_json(line: str) -> np.ndarray:
    return matrix_from_record(json.loads(line))


def matrix_to_csv(a) -> str:
    a = as_matrix(a)
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in a)


def matrix_from_csv(text: str) -> np.ndarray:
    rows = [line for line in text.splitlines() if line.strip()]
    return as_matrix(np.loadtxt(io.StringIO("\n".join(rows)), delimiter=",", ndmin=2))


# -- random streams --------------------------------------------------------

class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Backed by the counter-based Philox bit generator, so distinct stream ids
    give independent streams without any draw-order coupling between them.
    The underlying :class:`numpy.random.Generator` is exposed as ``.gen`` for
    vectorized draws and for the compiled kernels.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise InvalidParameter("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self.gen = np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def substream(self, offset: int) -> "RngStream":
        """A fresh stream sharing the seed, keyed by ``stream_id + offset``."""
        return RngStream(self.seed, self.stream_id + int(offset))

    def uniform01(self) -> float:
        return float(self.gen.random())

    def standard_normal(self) -> float:
        return float(self.gen.standard_normal())

    def exponential(self, rate: float = 1.0) -> float:
        if not rate > 0:
            raise InvalidParameter(f"rate must be > 0, got {rate}")
        return float(self.gen.standard_exponential()) / rate

    def inverse_gaussian(self, mu: float, lam: float) -> float:
        if not (mu > 0 and lam > 0):
            raise InvalidParameter(f"inverse_gaussian needs mu>0 and lambda>0, got {mu}, {lam}")
        return float(self.gen.wald(mu, lam))


def rng_draw(stream: RngStream, dist: str, *params: float) -> float:
    """Draw one variate from `dist`.

    `dist` is one of ``uniform01``, ``standard_normal``, ``exponential``
    (param: rate) or ``inverse_gaussian`` (params: mu, lambda).
    """
    if dist == "uniform01":
        return stream.uniform01()
    if dist == "standard_normal":
        return stream.standard_normal()
    if dist == "exponential":
        return stream.exponential(*params)
    if dist == "inverse_gaussian":
        return stream.inverse_gaussian(*params)
    raise InvalidParameter(f"unknown distribution {dist!r}")


def condition_number(a) -> float:
    s = np.linalg.svd(as_matrix(a), compute_uv=False)
    return math.inf if s[-1] == 0 else float(s[0] / s[-1])
