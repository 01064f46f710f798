"""Exact PG(1, c) sampling and closed-form moments."""

from __future__ import annotations

import math

import numpy as np

from .. import _kernels
from ..errors import NonFinite


def pg_mean(c: float) -> float:
    """E[PG(1, c)] = tanh(c/2) / (2c), with the c -> 0 limit 1/4."""
    c = abs(float(c))
    if c < 1e-6:
        return 0.25 - c * c / 48.0
    return math.tanh(0.5 * c) / (2.0 * c)


def pg_variance(c: float) -> float:
    """Var[PG(1, c)] = (sinh c - c) / (4 c^3 cosh^2(c/2)), limit 1/24 at 0."""
    c = abs(float(c))
    if c < 1e-3:
        return 1.0 / 24.0 - c * c / 240.0
    return (math.sinh(c) - c) / (4.0 * c ** 3 * math.cosh(0.5 * c) ** 2)


def pg_laplace_transform(t: float, c: float = 0.0) -> float:
    """E[exp(-t X)] for X ~ PG(1, c): cosh(c/2) / cosh(sqrt(c^2/4 + t/2))."""
    return math.cosh(0.5 * c) / math.cosh(math.sqrt(0.25 * c * c + 0.5 * t))


def sample_pg1(c, rng):
    """Exact draws from PG(1, c).

    Uses the alternating-series rejection sampler for ``J*(1, c/2)`` with
    truncation point 0.64 and returns ``J*/4``. Accepts a scalar or an array
    of tilts; returns the same shape.
    """
    arr = np.asarray(c, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFinite("PG tilt must be finite")
    gen = getattr(rng, "gen", rng)
    flat = np.ascontiguousarray(np.abs(arr).ravel())
    out = _kernels.pg1_draws(flat, gen).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def pg1_series_draws(c: float, n: int, rng, terms: int = 200) -> np.ndarray:
    """Approximate PG(1, c) draws from the truncated gamma-series representation.

    ``PG(1, c) = (1 / 2 pi^2) sum_k g_k / ((k - 1/2)^2 + c^2 / (4 pi^2))`` with
    ``g_k ~ Exp(1)``. Terms beyond `terms` are replaced by their expectation.
    Used as an independent check on :func:`sample_pg1`.
    """
    gen = getattr(rng, "gen", rng)
    k = np.arange(1, terms + 1, dtype=np.float64)
    shift = c * c / (4.0 * math.pi ** 2)
    den = (k - 0.5) ** 2 + shift
    kt = np.arange(terms + 1, terms + 200_001, dtype=np.float64)
    tail = np.sum(1.0 / ((kt - 0.5) ** 2 + shift)) + 1.0 / (terms + 200_000)
    out = np.empty(n)
    chunk = max(1, 2_000_000 // terms)
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        out[start:start + m] = gen.standard_exponential((m, terms)) @ (1.0 / den)
    return (out + tail) / (2.0 * math.pi ** 2)
