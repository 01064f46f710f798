"""Permutation-, sign- and scale-aware scores for unmixing estimates.

Sources and unmixing matrices are identified only up to a signed
permutation (and, for ``W``, row scaling). Every score here either is
invariant to that group or first aligns the estimate with the truth by a
minimum-cost assignment.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateColumn, NonFinite
from .numerics import as_matrix, inverse, lu_det_inverse

CSV_COLUMNS = ["method", "family", "n", "d", "sigma", "seed", "amari", "src", "rmse", "d_pm", "runtime_ms"]
_TIE_TOL = 1e-12


# -- assignment -----------------------------------------------------------------

def _assignment_cost(cost: np.ndarray) -> tuple[float, np.ndarray]:
    """Minimum-cost perfect matching by the O(n^3) shortest augmenting path method.

    Returns the optimal total and ``perm`` with row ``i`` assigned column ``perm[i]``.
    """
    n = cost.shape[0]
    INF = math.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=int)  # match[j] = row assigned to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while True:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
            if j0 == 0:
                break
    perm = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        perm[match[j] - 1] = j - 1
    return float(cost[np.arange(n), perm].sum()), perm


def hungarian(cost) -> np.ndarray:
    """Minimum-cost assignment; ``perm[i]`` is the column given to row ``i``.

    Among optimal assignments the lexicographically smallest ``perm`` is
    returned: rows are fixed in order to the smallest column that still
    admits an optimal completion.
    """
    C = as_matrix(cost, name="cost")
    n, m = C.shape
    if n != m:
        raise ValueError("cost matrix must be square")
    best, _ = _assignment_cost(C)
    scale = max(1.0, float(np.max(np.abs(C))))
    tol = _TIE_TOL * scale * n
    perm = np.empty(n, dtype=int)
    rows = list(range(n))
    cols = list(range(n))
    fixed = 0.0
    for i in range(n):
        for j in sorted(cols):
            rest_rows = [r for r in rows if r != i]
            rest_cols = [c for c in cols if c != j]
            rest = _assignment_cost(C[np.ix_(rest_rows, rest_cols)])[0] if rest_rows else 0.0
            if fixed + C[i, j] + rest <= best + tol:
                perm[i] = j
                fixed += C[i, j]
                rows.remove(i)
                cols.remove(j)
                break
    return perm


def brute_force_assignment(cost) -> tuple[float, np.ndarray]:
    """Exhaustive search over all permutations (testing oracle)."""
    C = np.asarray(cost, dtype=float)
    n = C.shape[0]
    best, arg = math.inf, None
    for p in itertools.permutations(range(n)):
        tot = float(C[np.arange(n), p].sum())
        if tot < best - 1e-15:
            best, arg = tot, p
    return best, np.array(arg)


# -- alignment --------------------------------------------------------------------

@dataclass
class Alignment:
    """Estimated column ``i`` matches true column ``permutation[i]`` with sign ``signs[i]``."""

    permutation: np.ndarray
    signs: np.ndarray
    matched_abs_corr: np.ndarray

    def apply(self, S_hat) -> np.ndarray:
        """Reorder and flip estimated columns into the true columns' order."""
        S_hat = np.asarray(S_hat, dtype=float)
        out = np.empty_like(S_hat)
        out[:, self.permutation] = S_hat * self.signs
        return out

    def apply_mixing(self, A_hat) -> np.ndarray:
        """Matching transformation for ``A_hat`` so that ``S A'`` is unchanged."""
        A_hat = np.asarray(A_hat, dtype=float)
        out = np.empty_like(A_hat)
        out[:, self.permutation] = A_hat * self.signs
        return out


def _corr_columns(S_hat, S_true) -> np.ndarray:
    a = S_hat - S_hat.mean(axis=0)
    b = S_true - S_true.mean(axis=0)
    na = np.sqrt(np.sum(a * a, axis=0))
    nb = np.sqrt(np.sum(b * b, axis=0))
    scale_a = np.max(np.abs(S_hat), axis=0)
    scale_b = np.max(np.abs(S_true), axis=0)
    if np.any(na <= 1e-14 * np.maximum(scale_a, 1e-300)) or np.any(na == 0):
        raise DegenerateColumn("an estimated source column is constant")
    if np.any(nb <= 1e-14 * np.maximum(scale_b, 1e-300)) or np.any(nb == 0):
        raise DegenerateColumn("a true source column is constant")
    return (a.T @ b) / np.outer(na, nb)


def align_sources(S_hat, S_true) -> Alignment:
    """Match estimated to true columns by maximizing total absolute Pearson correlation."""
    S_hat = as_matrix(S_hat, name="S_hat")
    S_true = as_matrix(S_true, name="S_true")
    if S_hat.shape != S_true.shape:
        raise ValueError("source matrices must have the same shape")
    R = _corr_columns(S_hat, S_true)
    perm = hungarian(1.0 - np.abs(R))
    matched = R[np.arange(R.shape[0]), perm]
    signs = np.where(matched < 0, -1.0, 1.0)
    return Alignment(perm, signs, np.abs(matched))


# -- scores -----------------------------------------------------------------------

def amari_distance(W_hat, W_true) -> float:
    """Amari index of ``P = W_hat W_true^-1``, scaled by ``1 / (2 (d - 1))``.

    ``P`` is a scaled signed permutation exactly when ``W_hat`` recovers
    ``W_true`` up to the ICA ambiguities, and the index is then zero.
    """
    W_hat = as_matrix(W_hat, name="W_hat")
    lu_det_inverse(W_hat)  # singularity guard
    P = np.abs(W_hat @ inverse(W_true))
    d = P.shape[0]
    if d == 1:
        return 0.0
    rows = np.sum(P.sum(axis=1) / P.max(axis=1) - 1.0)
    cols = np.sum(P.sum(axis=0) / P.max(axis=0) - 1.0)
    return float((rows + cols) / (2.0 * (d - 1)))


def src(S_hat_aligned, S_true) -> float:
    """Mean absolute correlation between matching columns."""
    S_hat_aligned = as_matrix(S_hat_aligned, name="S_hat")
    S_true = as_matrix(S_true, name="S_true")
    R = _corr_columns(S_hat_aligned, S_true)
    return float(np.mean(np.abs(np.diag(R))))


def rmse(X, S_hat_aligned, A_hat) -> float:
    """``||X - S A'||_F / sqrt(n d)``."""
    X = np.asarray(X, dtype=float)
    R = X - np.asarray(S_hat_aligned, dtype=float) @ np.asarray(A_hat, dtype=float).T
    return float(np.linalg.norm(R) / math.sqrt(R.size))


def _pair_costs(W, W0):
    W = np.asarray(W, dtype=float)
    W0 = np.asarray(W0, dtype=float)
    diff = W[:, None, :] - W0[None, :, :]
    summ = W[:, None, :] + W0[None, :, :]
    return np.minimum(np.sum(diff * diff, axis=2), np.sum(summ * summ, axis=2))


def signed_perm_distance(W, W0) -> float:
    """``min ||W - D P W0||_F`` over signed permutations ``D P``.

    The squared norm splits into one term per row of ``W`` once the
    permutation is fixed, and each sign can be chosen row by row. So the
    minimum is an assignment problem on ``min(|w_i - w0_j|^2, |w_i + w0_j|^2)``.
    """
    W = as_matrix(W, name="W")
    W0 = as_matrix(W0, name="W0")
    if W.shape != W0.shape or W.shape[0] != W.shape[1]:
        raise ValueError("need square matrices of equal size")
    C = _pair_costs(W, W0)
    perm = hungarian(C)
    return math.sqrt(max(float(C[np.arange(C.shape[0]), perm].sum()), 0.0))


def signed_perm_distance_brute(W, W0) -> float:
    """Enumerate all ``2^d d!`` signed permutations (testing oracle, small d)."""
    W = np.asarray(W, dtype=float)
    W0 = np.asarray(W0, dtype=float)
    d = W.shape[0]
    best = math.inf
    for p in itertools.permutations(range(d)):
        PW0 = W0[list(p)]
        for signs in itertools.product((1.0, -1.0), repeat=d):
            best = min(best, float(np.sum((W - np.asarray(signs)[:, None] * PW0) ** 2)))
    return math.sqrt(best)


def random_signed_permutation(d: int, rng) -> np.ndarray:
    gen = getattr(rng, "gen", rng)
    P = np.eye(d)[gen.permutation(d)]
    return np.where(gen.random(d) < 0.5, -1.0, 1.0)[:, None] * P


# -- report -----------------------------------------------------------------------

@dataclass
class MetricsReport:
    amari: float
    src: float
    rmse: float
    d_pm: float | None = None

    def __post_init__(self):
        vals = [self.amari, self.src, self.rmse] + ([self.d_pm] if self.d_pm is not None else [])
        if not all(math.isfinite(v) for v in vals):
            raise NonFinite("metrics must be finite")


def evaluate(X, W_hat, S_true, A_true, S_hat=None, A_hat=None, with_d_pm: bool = True) -> MetricsReport:
    """All scores for one estimate.

    ``S_hat`` defaults to ``X W_hat'`` and ``A_hat`` to ``W_hat^-1``. The
    alignment found on the sources is applied to both before computing the
    reconstruction error, so ``S_hat A_hat'`` is left unchanged by it.
    """
    W_hat = as_matrix(W_hat, name="W_hat")
    if A_hat is None:
        A_hat = inverse(W_hat)
    if S_hat is None:
        S_hat = np.asarray(X, dtype=float) @ W_hat.T
    W_true = inverse(A_true)
    al = align_sources(S_hat, S_true)
    S_al = al.apply(S_hat)
    A_al = al.apply_mixing(A_hat)
    d_pm = signed_perm_distance(W_hat, W_true) if with_d_pm else None
    return MetricsReport(amari_distance(W_hat, W_true), src(S_al, S_true), rmse(X, S_al, A_al), d_pm)


def format_float(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: list[dict], columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_float(r.get(c)) for c in columns])
    return buf.getvalue()


def read_csv_rows(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
