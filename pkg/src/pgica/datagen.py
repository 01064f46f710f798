"""Synthetic data for the hierarchical Pólya-Gamma model and the mixing benchmark."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from .distributions import SourceFamily, sample_pg1, sample_sources
from .errors import ConditioningFailure, InvalidParameter
from .numerics import RngStream, as_matrix, condition_number, matrix_from_record, matrix_to_record

HIERARCHICAL = "hierarchical"
BENCHMARK = "benchmark"
MAX_COND = 10.0
MAX_ATTEMPTS = 1000

# stream ids inside one dataset seed
_STREAM_SOURCES, _STREAM_MIXING, _STREAM_NOISE, _STREAM_SCALES = 0, 1, 2, 3


@dataclass
class Truth:
    S: np.ndarray
    A: np.ndarray
    sigma: float
    family: SourceFamily | None = None
    columns: list | None = None


@dataclass
class Dataset:
    """Observations ``X`` (N x d) with optional generating truth."""

    X: np.ndarray
    truth: Truth | None
    seed: int
    protocol: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = as_matrix(self.X, name="X")
        if self.truth is not None:
            n, d = self.X.shape
            if self.truth.S.shape != (n, d) or self.truth.A.shape != (d, d):
                raise ValueError("truth dimensions do not match X")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def residual_sd(self) -> float:
        """``||X - S A'||_F / sqrt(N d)``; the realised noise level."""
        if self.truth is None:
            raise ValueError("dataset has no truth")
        R = self.X - self.truth.S @ self.truth.A.T
        return float(np.linalg.norm(R) / np.sqrt(R.size))

    def metadata(self) -> dict:
        fam = self.truth.family.token if self.truth is not None and self.truth.family else None
        rec = {"protocol": self.protocol, "n": self.n, "d": self.d,
               "sigma": self.truth.sigma if self.truth is not None else None,
               "family": fam, "seed": self.seed}
        rec.update(self.meta)
        return rec


def _check_positive(**kw):
    for name, v in kw.items():
        if not (np.isfinite(v) and v > 0):
            raise InvalidParameter(f"{name} must be positive and finite, got {v}")


def generate_hierarchical(n: int, d: int, sigma: float, sigma2: float,
                          hard_first_component: bool, seed: int) -> Dataset:
    """Draw from the Pólya-Gamma scale-mixture model.

    ``V_kj ~ N(0, sigma2^2)``, ``tau_ij ~ PG(1, 0)`` (first column times 100
    when `hard_first_component`), ``s_ij | tau_ij ~ N(0, 1/(4 tau_ij))`` and
    ``X = S V' + N(0, sigma^2)``. ``V`` is stored as the mixing matrix.
    """
    if n < 1 or d < 1:
        raise InvalidParameter("n and d must be >= 1")
    _check_positive(sigma=sigma, sigma2=sigma2)
    V = sigma2 * RngStream(seed, _STREAM_MIXING).gen.standard_normal((d, d))
    T = sample_pg1(np.zeros((n, d)), RngStream(seed, _STREAM_SCALES))
    if hard_first_component:
        T[:, 0] *= 100.0
    S = RngStream(seed, _STREAM_SOURCES).gen.standard_normal((n, d)) / np.sqrt(4.0 * T)
    E = sigma * RngStream(seed, _STREAM_NOISE).gen.standard_normal((n, d))
    X = S @ V.T + E
    meta = {"sigma2": float(sigma2), "hard_first_component": bool(hard_first_component),
            "backend": _backend.BACKEND}
    return Dataset(X, Truth(S, V, float(sigma)), int(seed), HIERARCHICAL, meta)


def well_conditioned_mixing(d: int, rng: RngStream, max_cond: float = MAX_COND,
                            attempts: int = MAX_ATTEMPTS) -> np.ndarray:
    """Gaussian d x d matrix redrawn until its 2-norm condition number is <= `max_cond`."""
    for _ in range(attempts):
        A = rng.gen.standard_normal((d, d))
        if condition_number(A) <= max_cond:
            return A
    raise ConditioningFailure(f"no A with cond <= {max_cond} in {attempts} attempts (d={d})")


def generate_benchmark(family: SourceFamily | str, n: int, d: int, sigma: float,
                       seed: int) -> Dataset:
    """Standardized i.i.d. sources mixed by a well-conditioned Gaussian matrix."""
    if isinstance(family, str):
        family = SourceFamily.from_token(family)
    if d < 2 or n < d:
        raise InvalidParameter("need n >= d >= 2")
    _check_positive(sigma=sigma)
    S, cols = sample_sources(family, n, d, RngStream(seed, _STREAM_SOURCES))
    A = well_conditioned_mixing(d, RngStream(seed, _STREAM_MIXING))
    E = sigma * RngStream(seed, _STREAM_NOISE).gen.standard_normal((n, d))
    X = S @ A.T + E
    meta = {"standardized": family.standardized,
            "columns": [c.token for c in cols]}
    return Dataset(X, Truth(S, A, float(sigma), family, cols), int(seed), BENCHMARK, meta)


# -- JSON-lines IO ---------------------------------------------------------

def dataset_to_lines(ds: Dataset) -> list[str]:
    dump = lambda obj: json.dumps(obj, separators=(",", ":"), sort_keys=True)
    lines = [dump(ds.metadata()), dump(matrix_to_record(ds.X))]
    if ds.truth is not None:
        lines += [dump(matrix_to_record(ds.truth.S)), dump(matrix_to_record(ds.truth.A))]
    return lines


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_text("\n".join(dataset_to_lines(ds)) + "\n")


def load_dataset(path) -> Dataset:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(lines) not in (2, 4):
        raise ValueError(f"{path}: expected 2 or 4 records, found {len(lines)}")
    meta = json.loads(lines[0])
    X = matrix_from_record(json.loads(lines[1]))
    truth = None
    if len(lines) == 4:
        fam = SourceFamily.from_token(meta["family"]) if meta.get("family") else None
        cols = ([SourceFamily.from_token(t) for t in meta["columns"]]
                if meta.get("columns") else None)
        truth = Truth(matrix_from_record(json.loads(lines[2])), matrix_from_record(json.loads(lines[3])),
                      float(meta["sigma"]), fam, cols)
    extra = {k: v for k, v in meta.items() if k not in ("protocol", "n", "d", "sigma", "family", "seed")}
    return Dataset(X, truth, int(meta["seed"]), meta["protocol"], extra)
