"""Gibbs samplers for noisy ICA with scale-mixture source priors.

Two chains live here:

* Gibbs-ICE, a three-block sampler for the hyperbolic-secant prior written
  as a Pólya-Gamma mixture. It cycles sources, mixing matrix and PG scales.
* A four-block sampler for Student-t sources written as inverse-gamma
  scale mixtures. It also draws the noise level. The t scale ``lambda`` is
  held fixed; no hyperprior updates are made.

The observation model is ``x_n = A s_n + eps_n`` with ``X`` stacked
row-wise, so ``X = S A'`` and row ``k`` of ``A`` maps the sources to
observed channel ``k``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .distributions import sample_pg1
from .errors import InvalidParameter, NoConvergenceWarning, NonFinite, NotPositiveDefinite
from .numerics import RngStream, as_matrix, cholesky_lower, inverse, matrix_from_record, matrix_to_record, solve_spd

TAU_FLOOR = 1e-12
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GibbsConfig:
    """Run settings for Gibbs-ICE.

    `sigma` is the (fixed) noise SD and `sigma2` the prior SD of the
    entries of ``A``.
    """

    iterations: int = 4000
    burn_in: int = 2000
    thin: int = 5
    sigma: float = 0.01
    sigma2: float = 1.0
    seed: int = 0
    keep_sources: bool = False
    init: str = "em"

    def __post_init__(self):
        _check_schedule(self.iterations, self.burn_in, self.thin)
        if not (self.sigma > 0 and self.sigma2 > 0):
            raise InvalidParameter("sigma and sigma2 must be positive")
        _check_init(self.init)

    @property
    def kept(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass(frozen=True)
class StudentTGibbsConfig:
    """Run settings for the Student-t scale-mixture sampler.

    `alpha` and `lam` are per-source degrees of freedom and scales (a scalar
    broadcasts). The noise variance gets an inverse-gamma prior with shape
    `noise_shape` and scale `noise_scale`; the defaults give the improper
    ``1/sigma^2`` prior, whose posterior shape is ``dN/2``.
    """

    iterations: int = 4000
    burn_in: int = 2000
    thin: int = 5
    alpha: float | tuple = 3.0
    lam: float | tuple = 1.0
    noise_shape: float = 0.0
    noise_scale: float = 0.0
    sigma_init: float = 1.0
    seed: int = 0
    keep_sources: bool = False
    init: str = "em"

    def __post_init__(self):
        _check_schedule(self.iterations, self.burn_in, self.thin)
        _check_init(self.init)
        if np.any(np.asarray(self.alpha) <= 0) or np.any(np.asarray(self.lam) <= 0):
            raise InvalidParameter("alpha and lambda must be positive")
        if self.noise_shape < 0 or self.noise_scale < 0 or not self.sigma_init > 0:
            raise InvalidParameter("noise prior must be non-negative and sigma_init positive")

    @property
    def kept(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def per_source(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        alpha = np.broadcast_to(np.asarray(self.alpha, dtype=float), (d,)).copy()
        lam = np.broadcast_to(np.asarray(self.lam, dtype=float), (d,)).copy()
        return alpha, lam


INIT_MODES = ("em", "fastica", "identity")


def _check_init(mode):
    if mode not in INIT_MODES:
        raise InvalidParameter(f"init must be one of {INIT_MODES}, got {mode!r}")


def _check_schedule(iterations, burn_in, thin):
    if not (0 <= burn_in < iterations):
        raise InvalidParameter("need 0 <= burn_in < iterations")
    if thin < 1:
        raise InvalidParameter("thin must be >= 1")


@dataclass
class GibbsState:
    """One state of the chain: sources, mixing matrix and latent scales.

    For Gibbs-ICE ``T`` holds PG scales; for the Student-t chain it holds the
    local variances ``v`` and `sigma` is part of the state.
    """

    S: np.ndarray
    A: np.ndarray
    T: np.ndarray
    sigma: float | None = None

    def check(self, X: np.ndarray) -> None:
        n, d = X.shape
        if self.S.shape != (n, d) or self.T.shape != (n, d) or self.A.shape != (d, d):
            raise ValueError("state dimensions do not match the data")
        if not np.all(self.T > 0):
            raise InvalidParameter("latent scales must be strictly positive")


@dataclass
class Trace:
    """Kept draws of a chain plus per-iteration diagnostics."""

    config: dict
    iterations: list = field(default_factory=list)
    A: list = field(default_factory=list)
    logjoint: np.ndarray | None = None
    S_mean: np.ndarray | None = None
    S: list = field(default_factory=list)
    sigma: list = field(default_factory=list)
    sampler: str = "gibbs-ice"

    def __len__(self):
        return len(self.A)


# -- conditional moments -----------------------------------------------------

def source_conditional(A, tau_row, x_row, sigma):
    """Mean and covariance of ``s_i | A, tau_i, x_i`` for one observation."""
    A = np.asarray(A, dtype=float)
    P = A.T @ A / sigma ** 2 + np.diag(4.0 * np.maximum(tau_row, TAU_FLOOR))
    cov = solve_spd(P, np.eye(P.shape[0]))
    mean = solve_spd(P, (A.T @ np.asarray(x_row, dtype=float) / sigma ** 2)[:, None])[:, 0]
    return mean, cov


def mixing_conditional(S, X, sigma, sigma2):
    """Means (row k = mean of ``a_k``) and shared covariance of ``A | S, X``.

    Under ``X = S A'`` the regression of channel ``k`` on the sources has
    coefficient vector ``A[k, :]``; that vector is what the conditional
    describes.
    """
    d = S.shape[1]
    P = S.T @ S / sigma ** 2 + np.eye(d) / sigma2 ** 2
    cov = solve_spd(P, np.eye(d))
    means = solve_spd(P, S.T @ X / sigma ** 2).T
    return means, cov


def _mvn_rows(means, prec, rng):
    """Rows ``m_k + L^-T z_k`` with ``L L' = prec``: draws with covariance prec^-1."""
    L = cholesky_lower(prec)
    Z = rng.gen.standard_normal(means.shape)
    from scipy.linalg import solve_triangular

    return means + solve_triangular(L.T, Z.T, lower=False).T


def _draw_sources(X, A, T, sigma, rng):
    Z = rng.gen.standard_normal(X.shape)
    S, ok = _kernels.gibbs_sources(X, np.ascontiguousarray(A), np.ascontiguousarray(T), float(sigma), Z)
    if not ok:
        raise NotPositiveDefinite("source precision is not positive definite")
    return S


def _check_finite(**arrays):
    for name, a in arrays.items():
        if not np.all(np.isfinite(a)):
            raise NonFinite(f"non-finite values in {name}")


# -- Gibbs-ICE ----------------------------------------------------------------

def log_joint_ice(X, S, A, sigma, sigma2) -> float:
    """``log p(X | S, A) + log p(S) + log p(A)`` with the PG scales integrated out.

    Integrating ``tau`` gives the hyperbolic-secant source density
    ``1 / (pi cosh s)``.
    """
    n, d = X.shape
    R = X - S @ A.T
    ll = -0.5 * np.sum(R * R) / sigma ** 2 - n * d * (math.log(sigma) + 0.5 * LOG_2PI)
    a_s = np.abs(S)
    lp_s = -np.sum(a_s + np.log1p(np.exp(-2.0 * a_s)) - math.log(2.0)) - S.size * math.log(math.pi)
    lp_a = -0.5 * np.sum(A * A) / sigma2 ** 2 - A.size * (math.log(sigma2) + 0.5 * LOG_2PI)
    return float(ll + lp_s + lp_a)


def initial_state(X, mode: str = "identity", seed: int = 0) -> GibbsState:
    """Deterministic starting state with every latent scale at 1/4.

    ``identity`` sets ``A = I`` and ``S = X``. ``em`` and ``fastica`` start
    from a point estimate ``W``: ``A = W^-1`` and ``S = X W'``. From the
    identity start the chain needs far more sweeps than a usual run to find
    the separating rotation when the noise is small, so the point-estimate
    starts are the default.
    """
    from .optim import fastica, run_em, whiten

    _check_init(mode)
    n, d = X.shape
    T = np.full((n, d), 0.25)
    if mode == "identity":
        return GibbsState(X.copy(), np.eye(d), T)
    if mode == "em":
        W = run_em(X, whiten(X)[1], max_iter=500, tol=1e-9).W
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NoConvergenceWarning)
            W = fastica(X, seed=seed).W
    return GibbsState(X @ W.T, inverse(W), T)


def gibbs_ice_step(state: GibbsState, X, cfg: GibbsConfig, rng: RngStream) -> GibbsState:
    """One sweep of Gibbs-ICE: sources, then mixing matrix, then PG scales."""
    X = np.asarray(X, dtype=float)
    state.check(X)
    sigma, sigma2 = cfg.sigma, cfg.sigma2
    S = _draw_sources(X, state.A, state.T, sigma, rng)
    _check_finite(S=S)
    d = S.shape[1]
    prec = S.T @ S / sigma ** 2 + np.eye(d) / sigma2 ** 2
    means = solve_spd(prec, S.T @ X / sigma ** 2).T
    A = _mvn_rows(means, prec, rng)
    _check_finite(A=A)
    T = np.maximum(sample_pg1(np.abs(2.0 * S), rng), TAU_FLOOR)
    return GibbsState(S, A, T)


def run_gibbs_ice(X, cfg: GibbsConfig, init: GibbsState | None = None) -> Trace:
    """Run Gibbs-ICE and collect thinned post-burn-in draws.

    Draw ``m`` (1-based) is kept when ``m > burn_in`` and
    ``(m - burn_in) % thin == 0``.
    """
    X = as_matrix(X, name="X")
    n, d = X.shape
    if n <= d:
        raise InvalidParameter("need more observations than channels")
    rng = RngStream(cfg.seed, 0)
    state = init if init is not None else initial_state(X, cfg.init, cfg.seed)
    trace = Trace(config=asdict(cfg), logjoint=np.empty(cfg.iterations), sampler="gibbs-ice")
    S_sum = np.zeros((n, d))
    for m in range(1, cfg.iterations + 1):
        state = gibbs_ice_step(state, X, cfg, rng)
        lj = log_joint_ice(X, state.S, state.A, cfg.sigma, cfg.sigma2)
        if not math.isfinite(lj):
            raise NonFinite(f"log joint is not finite at iteration {m}")
        trace.logjoint[m - 1] = lj
        if m > cfg.burn_in and (m - cfg.burn_in) % cfg.thin == 0:
            _keep(trace, m, state, S_sum, cfg.keep_sources)
    trace.S_mean = S_sum / max(len(trace), 1)
    return trace


def _keep(trace, m, state, S_sum, keep_sources):
    trace.iterations.append(m)
    trace.A.append(state.A.copy())
    S_sum += state.S
    if keep_sources:
        trace.S.append(state.S.copy())
    if state.sigma is not None:
        trace.sigma.append(float(state.sigma))


# -- Student-t scale mixture --------------------------------------------------

def _inv_gamma(shape, scale, rng):
    """Inverse-gamma draws with density proportional to ``v^-(shape+1) exp(-scale/v)``."""
    return scale / rng.gen.standard_gamma(shape)


def log_joint_t(X, S, A, sigma, alpha, lam) -> float:
    """``log p(X | S, A, sigma) + log p(S)`` with Student-t source margins."""
    from scipy.special import gammaln

    n, d = X.shape
    R = X - S @ A.T
    ll = -0.5 * np.sum(R * R) / sigma ** 2 - n * d * (math.log(sigma) + 0.5 * LOG_2PI)
    z2 = (S / lam) ** 2
    lp = (gammaln(0.5 * (alpha + 1)) - gammaln(0.5 * alpha) - 0.5 * np.log(alpha * math.pi) - np.log(lam)
          - 0.5 * (alpha + 1) * np.log1p(z2 / alpha))
    return float(ll + np.sum(lp))


def student_t_step(state: GibbsState, X, alpha, lam, cfg: StudentTGibbsConfig, rng: RngStream) -> GibbsState:
    """Sources, mixing matrix (flat prior), noise level, then local variances."""
    n, d = X.shape
    sigma = state.sigma
    # the source kernel takes PG-style scales: prior precision 4 tau = 1/v
    S = _draw_sources(X, state.A, 0.25 / state.T, sigma, rng)
    _check_finite(S=S)
    G = S.T @ S
    means = solve_spd(G, S.T @ X).T
    A = _mvn_rows(means, G / sigma ** 2, rng)
    R = X - S @ A.T
    shape = 0.5 * n * d + cfg.noise_shape
    scale = 0.5 * float(np.sum(R * R)) + cfg.noise_scale
    sigma = math.sqrt(_inv_gamma(shape, scale, rng))
    V = _inv_gamma(0.5 * (alpha + 1.0), 0.5 * (S * S + alpha * lam ** 2), rng)
    _check_finite(A=A, V=V)
    return GibbsState(S, A, V, sigma)


def run_student_t_gibbs(X, cfg: StudentTGibbsConfig, init: GibbsState | None = None) -> Trace:
    """Run the four-block Student-t sampler."""
    X = as_matrix(X, name="X")
    n, d = X.shape
    if n <= d:
        raise InvalidParameter("need more observations than channels")
    alpha, lam = cfg.per_source(d)
    rng = RngStream(cfg.seed, 0)
    if init is None:
        init = initial_state(X, cfg.init, cfg.seed)
        init = GibbsState(init.S, init.A, np.broadcast_to(lam ** 2, (n, d)).copy(), cfg.sigma_init)
    state = init
    cfg_rec = asdict(cfg)
    trace = Trace(config=cfg_rec, logjoint=np.empty(cfg.iterations), sampler="student-t")
    S_sum = np.zeros((n, d))
    for m in range(1, cfg.iterations + 1):
        state = student_t_step(state, X, alpha, lam, cfg, rng)
        lj = log_joint_t(X, state.S, state.A, state.sigma, alpha, lam)
        if not math.isfinite(lj):
            raise NonFinite(f"log joint is not finite at iteration {m}")
        trace.logjoint[m - 1] = lj
        if m > cfg.burn_in and (m - cfg.burn_in) % cfg.thin == 0:
            _keep(trace, m, state, S_sum, cfg.keep_sources)
    trace.S_mean = S_sum / max(len(trace), 1)
    return trace


def noise_shape_posterior(n: int, d: int, prior_shape: float = 0.0) -> float:
    """Posterior inverse-gamma shape of ``sigma^2``: ``dN/2`` plus any prior shape."""
    return 0.5 * n * d + prior_shape


# -- summaries and IO ---------------------------------------------------------

def posterior_summary(trace: Trace) -> dict:
    """Posterior means; ``W_mean`` is the inverse of ``A_mean``."""
    if len(trace) == 0:
        raise ValueError("trace holds no kept draws")
    A_mean = np.mean(trace.A, axis=0)
    return {"A_mean": A_mean, "W_mean": inverse(A_mean), "S_mean": trace.S_mean}


def save_trace(trace: Trace, path) -> None:
    """JSON-lines: a header record, then one record per kept draw."""
    dump = lambda obj: json.dumps(obj, separators=(",", ":"), sort_keys=True)
    lines = [dump({"sampler": trace.sampler, "config": trace.config, "kept": len(trace),
                   "logjoint": [float(v) for v in trace.logjoint],
                   "S_mean": matrix_to_record(trace.S_mean)})]
    for i, m in enumerate(trace.iterations):
        rec = {"m": m, "A": matrix_to_record(trace.A[i]), "logjoint": float(trace.logjoint[m - 1])}
        if trace.S:
            rec["S"] = matrix_to_record(trace.S[i])
        if trace.sigma:
            rec["sigma"] = trace.sigma[i]
        lines.append(dump(rec))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trace(path) -> Trace:
    lines = [json.loads(ln) for ln in Path(path).read_text().splitlines() if ln.strip()]
    head = lines[0]
    trace = Trace(config=head["config"], logjoint=np.asarray(head["logjoint"]),
                  S_mean=matrix_from_record(head["S_mean"]), sampler=head["sampler"])
    for rec in lines[1:]:
        trace.iterations.append(rec["m"])
        trace.A.append(matrix_from_record(rec["A"]))
        if "S" in rec:
            trace.S.append(matrix_from_record(rec["S"]))
        if "sigma" in rec:
            trace.sigma.append(rec["sigma"])
    return trace
