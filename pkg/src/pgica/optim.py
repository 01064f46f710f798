"""Point estimators for the unmixing matrix.

* EM for the hyperbolic-secant model. Each ``log cosh`` term is bounded by
  a tangent quadratic whose curvature is the E-step weight, and the M-step
  maximizes the bound row by row.
* The same iteration written as auxiliary-function updates, kept
  as a separate code path so the two can be checked against each other.
* MacKay's natural-gradient ascent.
* A symmetric FastICA baseline with a tanh contrast.

All objectives are per-sample averages: ``l(W) = log|det W| - sum_i
mean_n log cosh(w_i' x_n)``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import Diverged, InvalidParameter, NoConvergenceWarning, SingularMatrix
from .numerics import RngStream, as_matrix, log_abs_det, lu_det_inverse, matrix_from_record, matrix_to_record

SERIES_CUTOFF = 1e-4
RIDGE = 1e-10


def logcosh(u):
    a = np.abs(u)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def half_tanh_ratio(u):
    """``tanh(u) / (2u)`` with its Taylor series near zero."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < SERIES_CUTOFF
    safe = np.where(small, 1.0, u)
    u2 = u * u
    return np.where(small, 0.5 * (1.0 - u2 / 3.0 + 2.0 * u2 * u2 / 15.0), 0.5 * np.tanh(safe) / safe)


def sech_objective(W, X) -> float:
    """Average log-likelihood of the unit-scale sech model, up to a constant."""
    W = np.asarray(W, dtype=float)
    U = np.asarray(X, dtype=float) @ W.T
    return log_abs_det(W) - float(np.sum(np.mean(logcosh(U), axis=0)))


# -- EM -------------------------------------------------------------------------

@dataclass
class EmState:
    W: np.ndarray
    iteration: int
    loglik: float
    history: list = field(default_factory=list)
    converged: bool = False


def em_estep(W, X) -> np.ndarray:
    """Weighted second moments ``Z_i = mean_n[tanh(u)/(2u) x x']``, ``u = w_i' x_n``.

    Returns an array of shape ``(d, d, d)`` whose first index is the row ``i``.
    """
    W = as_matrix(W, name="W")
    X = as_matrix(X, name="X")
    return _kernels.em_z_matrices(np.ascontiguousarray(W), np.ascontiguousarray(X))


def em_mstep(Z, W_current) -> np.ndarray:
    """Row-wise maximizer of the quadratic bound, Gauss-Seidel order.

    Row ``i`` becomes ``(W Z_i)^-1 e_i`` with ``W`` holding the rows already
    updated in this sweep, rescaled so that ``w_i' Z_i w_i = 1/2``. That is
    the stationarity condition of ``log|det W| - sum_i w_i' Z_i w_i``.
    """
    W = np.array(W_current, dtype=float)
    d = W.shape[0]
    for i in range(d):
        Zi = np.asarray(Z[i], dtype=float)
        if np.min(np.linalg.eigvalsh(Zi)) <= 0:
            Zi = Zi + RIDGE * np.eye(d)
        _, M_inv = lu_det_inverse(W @ Zi)
        w = M_inv[:, i]
        q = float(w @ Zi @ w)
        if not q > 0:
            raise SingularMatrix(f"row {i}: non-positive quadratic form {q}")
        W[i] = w / math.sqrt(2.0 * q)
    return W


def run_em(X, W0, max_iter: int = 500, tol: float = 1e-8) -> EmState:
    """Alternate E and M steps until the objective moves by less than `tol`.

    Raises
    ------
    Diverged
        If the objective drops by more than 1e-8, which the bound rules out.
    """
    X = as_matrix(X, name="X")
    W = as_matrix(W0, name="W0").copy()
    ll = sech_objective(W, X)
    history = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        W = em_mstep(em_estep(W, X), W)
        new = sech_objective(W, X)
        history.append(new)
        if new < ll - 1e-8:
            raise Diverged(f"objective decreased at iteration {it}: {ll:.12g} -> {new:.12g}")
        done = abs(new - ll) < tol
        ll = new
        if done:
            converged = True
            break
    return EmState(W, it, ll, history, converged)


# -- auxiliary-function route --------------------------------------------------

def cofactor_row(W, i: int) -> np.ndarray:
    """Cofactors ``C_ij`` of row ``i``, each from the determinant of a minor."""
    d = W.shape[0]
    out = np.empty(d)
    rows = [r for r in range(d) if r != i]
    for j in range(d):
        cols = [c for c in range(d) if c != j]
        minor = W[np.ix_(rows, cols)]
        out[j] = (-1) ** (i + j) * (np.linalg.det(minor) if d > 1 else 1.0)
    return out


def aux_weights(r):
    """Bound curvature ``phi'(r) / (2r)`` for ``phi = log cosh``."""
    return half_tanh_ratio(r)


def aux_sweep(W, X) -> np.ndarray:
    """One sweep of the auxiliary-function updates.

    The auxiliary variables are ``r_ni = |w_i' x_n|``. Each row maximizes
    ``log|w' c_i| - w' V_i w`` with ``c_i`` the cofactor vector of row ``i``;
    the maximizer is ``alpha V_i^-1 c_i`` with ``alpha^2 = 1/(2 c' V^-1 c)``
    and the sign of ``alpha`` keeping ``w_old' V w_new`` positive.
    """
    W = np.array(W, dtype=float)
    X = np.asarray(X, dtype=float)
    d = W.shape[0]
    R = np.abs(X @ W.T)  # auxiliary variables from the sweep's starting point
    for i in range(d):
        wts = aux_weights(R[:, i])
        V = (X * wts[:, None]).T @ X / X.shape[0]
        V = 0.5 * (V + V.T)
        c = cofactor_row(W, i)
        Vc = np.linalg.solve(V, c)
        alpha = 1.0 / math.sqrt(2.0 * float(c @ Vc))
        if float(W[i] @ c) < 0:
            alpha = -alpha
        W[i] = alpha * Vc
    return W


def run_aux(X, W0, n_iter: int) -> list:
    """Iterates of the auxiliary-function route, starting with `W0`."""
    W = np.array(W0, dtype=float)
    out = [W.copy()]
    for _ in range(n_iter):
        W = aux_sweep(W, X)
        out.append(W.copy())
    return out


def envelope(u, r):
    """Tangent quadratic ``(phi'(r)/(2r)) u^2 + F(r)`` bounding ``log cosh u``.

    ``F(r) = phi(r) - r phi'(r)/2`` makes the bound touch at ``|u| = r``.
    """
    r = np.asarray(r, dtype=float)
    lam = half_tanh_ratio(r)
    return lam * np.asarray(u, dtype=float) ** 2 + logcosh(r) - lam * r * r


# -- natural gradient ------------------------------------------------------------

def mackay_step(W, X_batch, eta: float) -> np.ndarray:
    """``W + eta (I - mean[tanh(a) a']) W`` with ``a = W x``."""
    if eta < 0:
        raise InvalidParameter("eta must be non-negative")
    W = np.asarray(W, dtype=float)
    A = np.asarray(X_batch, dtype=float) @ W.T
    G = np.tanh(A).T @ A / A.shape[0]
    new = W + eta * (np.eye(W.shape[0]) - G) @ W
    if not np.all(np.isfinite(new)) or abs(np.linalg.det(new)) < 1e-300:
        raise SingularMatrix("natural-gradient iterate is singular")
    return new


def run_mackay(X, W0, eta: float = 0.1, max_iter: int = 2000, tol: float = 1e-7) -> EmState:
    """Full-batch natural-gradient ascent, stopping when ``max|dW| < tol``."""
    X = as_matrix(X, name="X")
    W = as_matrix(W0, name="W0").copy()
    history = [sech_objective(W, X)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = mackay_step(W, X, eta)
        step = float(np.max(np.abs(new - W)))
        W = new
        history.append(sech_objective(W, X))
        if step < tol:
            converged = True
            break
    return EmState(W, it, history[-1], history, converged)


# -- FastICA ---------------------------------------------------------------------

def whiten(X):
    """Centering and symmetric whitening: returns ``(Z, K, mean)`` with ``Z = (X - mean) K'``."""
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / Xc.shape[0]
    vals, vecs = np.linalg.eigh(C)
    if vals[0] <= 1e-12 * vals[-1]:
        raise SingularMatrix("data covariance is singular")
    K = (vecs / np.sqrt(vals)) @ vecs.T
    return Xc @ K.T, K, mean


def _sym_decorrelate(W):
    vals, vecs = np.linalg.eigh(W @ W.T)
    return (vecs / np.sqrt(vals)) @ vecs.T @ W


def fastica(X, max_iter: int = 1000, tol: float = 1e-6, seed: int = 0) -> "FitResult":
    """Symmetric FastICA with a tanh contrast.

    The returned unmixing matrix acts on raw (uncentered) coordinates, so
    ``X W'`` gives unit-variance sources up to their means. When the
    iteration does not settle within `max_iter` the last iterate is returned
    with ``converged=False`` and a :class:`NoConvergenceWarning`.
    """
    X = as_matrix(X, name="X")
    n, d = X.shape
    if n <= d:
        raise InvalidParameter("need more observations than channels")
    Z, K, _ = whiten(X)
    W = _sym_decorrelate(RngStream(seed, 0).gen.standard_normal((d, d)))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        U = Z @ W.T
        G = np.tanh(U)
        W_new = G.T @ Z / n - np.diag(np.mean(1.0 - G * G, axis=0)) @ W
        W_new = _sym_decorrelate(W_new)
        lim = float(np.max(np.abs(np.abs(np.sum(W_new * W, axis=1)) - 1.0)))
        W = W_new
        if lim < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"FastICA did not converge in {max_iter} iterations", NoConvergenceWarning,
                      stacklevel=2)
    W_raw = W @ K
    return FitResult("fastica", W_raw, it, sech_objective(W_raw, X), converged)


def random_unmixing(d: int, seed: int) -> np.ndarray:
    """Gaussian random unmixing matrix, used as a chance-level baseline."""
    return RngStream(seed, 7).gen.standard_normal((d, d))


# -- results ---------------------------------------------------------------------

@dataclass
class FitResult:
    method: str
    W: np.ndarray
    iterations: int
    final_objective: float
    converged: bool
    history: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {"method": self.method, "W": matrix_to_record(self.W), "iterations": int(self.iterations),
               "final_objective": float(self.final_objective), "converged": bool(self.converged)}
        if self.history:
            rec["objective_history"] = [float(v) for v in self.history]
        rec.update(self.extra)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "FitResult":
        core = {"method", "W", "iterations", "final_objective", "converged", "objective_history"}
        return cls(rec["method"], matrix_from_record(rec["W"]), rec["iterations"], rec["final_objective"],
                   rec["converged"], rec.get("objective_history", []),
                   {k: v for k, v in rec.items() if k not in core})


def save_fit(fit: FitResult, path) -> None:
    Path(path).write_text(json.dumps(fit.to_record(), sort_keys=True, separators=(",", ":")) + "\n")


def load_fit(path) -> FitResult:
    return FitResult.from_record(json.loads(Path(path).read_text()))


def em_fit(X, W0=None, max_iter: int = 500, tol: float = 1e-8) -> FitResult:
    """Convenience wrapper: EM from `W0` (default: whitening matrix) as a FitResult."""
    X = as_matrix(X, name="X")
    if W0 is None:
        W0 = whiten(X)[1]
    st = run_em(X, W0, max_iter, tol)
    return FitResult("em", st.W, st.iteration, st.loglik, st.converged, st.history)


def mackay_fit(X, W0=None, eta: float = 0.1, max_iter: int = 2000, tol: float = 1e-7) -> FitResult:
    X = as_matrix(X, name="X")
    if W0 is None:
        W0 = whiten(X)[1]
    st = run_mackay(X, W0, eta, max_iter, tol)
    if not st.converged:
        warnings.warn(f"natural gradient did not converge in {max_iter} iterations",
                      NoConvergenceWarning, stacklevel=2)
    return FitResult("mackay", st.W, st.iteration, st.loglik, st.converged, st.history)
