"""Large-sample diagnostics for the noiseless ICA likelihood with known sources.

The parameter is ``theta = vec(W)`` in row-major order, so ``theta[a*d + b]
= W[a, b]``. The per-sample log-likelihood is

    l(W; x) = log|det W| + sum_k log p_k(w_k' x).

Tools here check the score identities, estimate the Fisher information two
ways, measure the remainder of the quadratic (LAN) expansion, and sample
the exact posterior with random-walk Metropolis to compare it with its
Gaussian limit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from . import _kernels
from .datagen import well_conditioned_mixing
from .distributions import SourceFamily, log_density, sample_source, score_all
from .errors import InsufficientSamples, InvalidParameter, SingularMatrix
from .metrics import signed_perm_distance
from .numerics import RngStream, as_matrix, inverse, log_abs_det, lu_det_inverse


# -- model ----------------------------------------------------------------------------

def canonical_representative(W) -> tuple[np.ndarray, np.ndarray]:
    """Fixed member of the signed-permutation orbit of `W`.

    Each row is flipped so its largest absolute entry is positive. Rows are
    then ordered by the column of that entry, ties broken by the flipped
    row values in lexicographic order, so the result does not depend on
    the input's row order. Returns ``(W_canonical, order)`` where
    ``W_canonical = signs * W[order]``.
    """
    W = np.asarray(W, dtype=float)
    key = np.argmax(np.abs(W), axis=1)
    piv = W[np.arange(W.shape[0]), key]
    flipped = W * np.where(piv < 0, -1.0, 1.0)[:, None]
    order = np.lexsort(tuple(flipped[:, j] for j in range(W.shape[1] - 1, -1, -1)) + (key,))
    return flipped[order].copy(), order


@dataclass
class NoiselessModel:
    """Known source laws (one per row of ``W0``) and the true unmixing matrix."""

    families: list
    W0: np.ndarray

    def __post_init__(self):
        self.W0 = as_matrix(self.W0, name="W0")
        d = self.W0.shape[0]
        if self.W0.shape != (d, d) or len(self.families) != d:
            raise ValueError("need a square W0 and one family per row")
        self.families = [SourceFamily.from_token(f) if isinstance(f, str) else f for f in self.families]
        if sum(f.is_gaussian() for f in self.families) > 1:
            raise InvalidParameter("at most one Gaussian source is identifiable")
        lu_det_inverse(self.W0)

    @property
    def d(self) -> int:
        return self.W0.shape[0]

    @property
    def A0(self) -> np.ndarray:
        return inverse(self.W0)

    @property
    def smooth(self) -> bool:
        return all(f.is_smooth() for f in self.families)

    @classmethod
    def build(cls, family, d: int, seed: int = 0, allow_gaussian: bool = False) -> "NoiselessModel":
        """Same family for every source and a canonical well-conditioned ``W0``."""
        fam = SourceFamily.from_token(family) if isinstance(family, str) else family
        W0, _ = canonical_representative(inverse(well_conditioned_mixing(d, RngStream(seed, 11))))
        fams = [fam] * d
        if allow_gaussian:
            return cls.__new__(cls)._unchecked(fams, W0)
        return cls(fams, W0)

    def _unchecked(self, fams, W0):
        self.families = fams
        self.W0 = as_matrix(W0)
        return self

    def kernel_params(self):
        cached = self.__dict__.get("_kp")
        if cached is None or cached[0] != self.families:
            p = [f.kernel_params() for f in self.families]
            arrays = (np.array([q[0] for q in p], dtype=np.int64), np.array([q[1] for q in p]),
                      np.array([q[2] for q in p]), np.array([q[3] for q in p]))
            cached = (list(self.families), arrays)
            self.__dict__["_kp"] = cached
        return cached[1]

    def sample_sources(self, n: int, rng) -> np.ndarray:
        return np.column_stack([sample_source(f, n, rng) for f in self.families])

    def sample(self, n: int, rng) -> np.ndarray:
        """``n`` observations ``x = A0 s``."""
        return self.sample_sources(n, rng) @ self.A0.T

    def derivs(self, S):
        """Columnwise ``(psi, psi', psi'')`` of the source laws at ``S``."""
        out = [score_all(f, S[:, k]) for k, f in enumerate(self.families)]
        return tuple(np.column_stack([np.atleast_1d(o[j]) for o in out]) for j in range(3))


def theta_of(W) -> np.ndarray:
    return np.asarray(W, dtype=float).ravel().copy()


def W_of(theta, d: int) -> np.ndarray:
    return np.asarray(theta, dtype=float).reshape(d, d)


# -- likelihood, score, Hessian -----------------------------------------------------------

def loglik_noiseless(W, X, model: NoiselessModel) -> float:
    """``sum_n [log|det W| + sum_k log p_k(w_k' x_n)]``."""
    W = np.ascontiguousarray(W, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        lu_det_inverse(W)
        return 0.0
    ld = log_abs_det(W)
    codes, ks, nus, k2s = model.kernel_params()
    return X.shape[0] * ld + float(_kernels.source_loglik_sum(W, np.ascontiguousarray(X), codes, ks, nus, k2s))


def loglik_reference(W, X, model: NoiselessModel) -> float:
    """Same quantity via the family log-densities (slow, for cross-checks)."""
    S = np.asarray(X, dtype=float) @ np.asarray(W, dtype=float).T
    return X.shape[0] * log_abs_det(W) + sum(float(np.sum(log_density(f, S[:, k])))
                                              for k, f in enumerate(model.families))


def score_theta(W, x, model: NoiselessModel) -> np.ndarray:
    """``vec((W^-1)' + psi(W x) x')`` for one observation."""
    return score_batch(W, np.atleast_2d(x), model)[0]


def score_batch(W, X, model: NoiselessModel) -> np.ndarray:
    """Per-observation scores, shape ``(n, d*d)``."""
    W = np.asarray(W, dtype=float)
    X = np.asarray(X, dtype=float)
    _, Winv = lu_det_inverse(W)
    psi, _, _ = model.derivs(X @ W.T)
    U = Winv.T[None, :, :] + psi[:, :, None] * X[:, None, :]
    return U.reshape(X.shape[0], -1)


def hessian_theta(W, x, model: NoiselessModel) -> np.ndarray:
    """Per-observation Hessian of ``l`` in ``theta``.

    ``H[(a,b),(c,e)] = -Winv[b,c] Winv[e,a] + [a == c] psi'_a(s_a) x_b x_e``.
    """
    return hessian_mean(W, np.atleast_2d(x), model)


def hessian_mean(W, X, model: NoiselessModel) -> np.ndarray:
    """Average per-observation Hessian over the rows of `X`."""
    W = np.asarray(W, dtype=float)
    X = np.asarray(X, dtype=float)
    d = W.shape[0]
    _, Winv = lu_det_inverse(W)
    _, dpsi, _ = model.derivs(X @ W.T)
    H = -np.einsum("bc,ea->abce", Winv, Winv)
    # sum over samples of psi'_a x_b x_e, placed on the a == c diagonal
    M = np.einsum("na,nb,ne->abe", dpsi, X, X) / X.shape[0]
    for a in range(d):
        H[a, :, a, :] += M[a]
    return H.reshape(d * d, d * d)


# -- score identities ----------------------------------------------------------------

@dataclass
class IbpReport:
    estimate: np.ndarray
    standard_error: np.ndarray
    residual: np.ndarray
    z: np.ndarray
    draws: int
    passed: bool
    caveat: str | None = None

    def to_record(self, family: str) -> dict:
        return {"check": "ibp", "family": family, "d": int(self.estimate.shape[0]), "draws": self.draws,
                "residuals": self.residual.tolist(), "pass": self.passed,
                "details": {"estimate": self.estimate.tolist(), "se": self.standard_error.tolist(),
                            "max_abs_z": float(np.max(np.abs(self.z))), "caveat": self.caveat}}


def check_ibp(model: NoiselessModel, mc_draws: int, rng, z_limit: float = 4.0) -> IbpReport:
    """Monte Carlo check of ``E[psi(S) S'] = -I`` with per-entry standard errors."""
    if mc_draws < 10_000:
        raise InsufficientSamples("need at least 10^4 draws")
    S = model.sample_sources(mc_draws, rng)
    psi, _, _ = model.derivs(S)
    prod = psi[:, :, None] * S[:, None, :]
    est = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / math.sqrt(mc_draws)
    resid = est + np.eye(model.d)
    z = resid / np.where(se > 0, se, np.inf)
    caveat = None if model.smooth else "score is not differentiable at 0; identities hold almost everywhere"
    return IbpReport(est, se, resid, z, mc_draws, bool(np.all(np.abs(z) <= z_limit)), caveat)


# -- Fisher information -----------------------------------------------------------------

@dataclass
class FisherInfo:
    matrix: np.ndarray
    mc_draws: int
    standard_error: np.ndarray
    outer: np.ndarray | None = None
    outer_se: np.ndarray | None = None

    @property
    def standard_error_scale(self) -> float:
        return float(np.max(self.standard_error))

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.matrix)))


def fisher_info_mc(model: NoiselessModel, mc_draws: int, rng, chunk: int = 50_000) -> FisherInfo:
    """``-E[Hessian]`` and ``Var(score)`` at ``W0`` by Monte Carlo.

    Both estimators come with entrywise standard errors, so the information
    equality can be checked in units of Monte Carlo error.
    """
    if mc_draws < 10_000:
        raise InsufficientSamples("need at least 10^4 draws")
    d = model.d
    p = d * d
    _, Winv = lu_det_inverse(model.W0)
    base = -np.einsum("bc,ea->abce", Winv, Winv).reshape(p, p)
    h_sum = np.zeros((p, p))
    h_sq = np.zeros((p, p))
    u_sum = np.zeros(p)
    uu_sum = np.zeros((p, p))
    uu_sq = np.zeros((p, p))
    done = 0
    while done < mc_draws:
        m = min(chunk, mc_draws - done)
        S = model.sample_sources(m, rng)
        X = S @ model.A0.T
        _, dpsi, _ = model.derivs(S)
        # per-sample Hessian: base + block-diagonal psi'_a x x'
        Hs = np.zeros((m, p, p))
        Hs += base
        xx = X[:, :, None] * X[:, None, :]
        for a in range(d):
            Hs[:, a * d:(a + 1) * d, a * d:(a + 1) * d] += dpsi[:, a, None, None] * xx
        h_sum += Hs.sum(axis=0)
        h_sq += np.sum(Hs * Hs, axis=0)
        U = score_batch(model.W0, X, model)
        u_sum += U.sum(axis=0)
        outer = U[:, :, None] * U[:, None, :]
        uu_sum += outer.sum(axis=0)
        uu_sq += np.sum(outer * outer, axis=0)
        done += m
    n = mc_draws
    mean_h = h_sum / n
    se_h = np.sqrt(np.maximum(h_sq / n - mean_h ** 2, 0.0) / n)
    mean_u = u_sum / n
    mean_uu = uu_sum / n
    se_uu = np.sqrt(np.maximum(uu_sq / n - mean_uu ** 2, 0.0) / n)
    info = -mean_h
    info = 0.5 * (info + info.T)
    outer_est = mean_uu - np.outer(mean_u, mean_u)
    return FisherInfo(info, n, se_h, 0.5 * (outer_est + outer_est.T), se_uu)


def _moment(fam: SourceFamily, fn) -> float:
    f = lambda s: fn(s) * math.exp(log_density(fam, s))
    pts = [(-np.inf, -1.0), (-1.0, 0.0), (0.0, 1.0), (1.0, np.inf)]
    return sum(integrate.quad(f, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)[0] for a, b in pts)


def fisher_info_quadrature(model: NoiselessModel) -> np.ndarray:
    """Exact information at ``W0`` from one-dimensional moments.

    With ``x = A0 s`` and independent zero-mean sources,
    ``E[psi'_a(s_a) x_b x_e] = A_ba A_ea E[psi'_a s_a^2]
    + sum_{j != a} A_bj A_ej E[psi'_a] E[s_j^2]``; the other terms vanish.
    Only valid for smooth families (no point mass in ``psi'``).
    """
    if not model.smooth:
        raise InvalidParameter("quadrature information needs smooth source laws")
    d = model.d
    A = model.A0
    _, Winv = lu_det_inverse(model.W0)
    m_dpsi, m_dpsi_s2, m_s2 = [], [], []
    for f in model.families:
        dpsi = lambda s, f=f: float(score_all(f, s)[1])
        m_dpsi.append(_moment(f, dpsi))
        m_dpsi_s2.append(_moment(f, lambda s, g=dpsi: g(s) * s * s))
        m_s2.append(_moment(f, lambda s: s * s))
    H = -np.einsum("bc,ea->abce", Winv, Winv)
    for a in range(d):
        M = m_dpsi_s2[a] * np.outer(A[:, a], A[:, a])
        for j in range(d):
            if j != a:
                M += m_dpsi[a] * m_s2[j] * np.outer(A[:, j], A[:, j])
        H[a, :, a, :] += M
    info = -H.reshape(d * d, d * d)
    return 0.5 * (info + info.T)


# -- LAN remainder ----------------------------------------------------------------

def lan_remainder(model: NoiselessModel, N: int, h, rng, fisher: np.ndarray, X=None) -> float:
    """``L(theta0 + h/sqrt N) - L(theta0) - h'S_N + h'I h / 2`` on one simulated data set."""
    h = np.asarray(h, dtype=float)
    if not np.any(h):
        return 0.0
    if X is None:
        X = model.sample(N, rng)
    W0 = model.W0
    W1 = W0 + h.reshape(model.d, model.d) / math.sqrt(N)
    lu_det_inverse(W1)
    S_N = score_batch(W0, X, model).sum(axis=0) / math.sqrt(N)
    dL = loglik_noiseless(W1, X, model) - loglik_noiseless(W0, X, model)
    return float(dL - h @ S_N + 0.5 * h @ fisher @ h)


@dataclass
class LanReport:
    ns: list
    h_norm: float
    remainders: dict
    medians: list
    slope: float
    passed: bool
    skipped: int = 0

    def to_record(self, family: str, d: int, band) -> dict:
        return {"check": "lan", "family": family, "d": d, "N": self.ns, "residuals": self.medians,
                "slopes": {"median_abs_remainder": self.slope}, "pass": self.passed,
                "details": {"h_norm": self.h_norm, "band": list(band), "skipped": self.skipped,
                            "remainders": {str(k): v for k, v in self.remainders.items()}}}


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float)), 1)[0])


def lan_study(model: NoiselessModel, ns, reps: int, h_norm: float, rng, fisher: np.ndarray,
              band=(-0.7, -0.3)) -> LanReport:
    """Median ``|r_N(h)|`` across replicates for each ``N`` and its log-log slope.

    Replicate ``r`` uses the same random direction for every ``N``, so the
    sizes differ only through the data.
    """
    p = model.d ** 2
    dirs = rng.gen.standard_normal((reps, p))
    dirs *= h_norm / np.linalg.norm(dirs, axis=1, keepdims=True)
    rem = {}
    skipped = 0
    for N in ns:
        vals = []
        for r in range(reps):
            try:
                vals.append(abs(lan_remainder(model, N, dirs[r], rng, fisher)))
            except SingularMatrix:
                skipped += 1
        rem[N] = vals
    medians = [float(np.median(rem[N])) for N in ns]
    slope = loglog_slope(ns, medians)
    return LanReport(list(ns), float(h_norm), rem, medians, slope, bool(band[0] <= slope <= band[1]), skipped)


# -- posterior sampling --------------------------------------------------------------

@dataclass
class RwmTrace:
    draws: np.ndarray
    log_post: np.ndarray
    acceptance: float
    step_scale: float
    proposal_cov: np.ndarray
    burn_in_acceptance: float = float("nan")


def _log_post(theta, X, model, prior_mean, prior_sd):
    d = model.d
    try:
        ll = loglik_noiseless(W_of(theta, d), X, model)
    except SingularMatrix:
        return -math.inf
    diff = theta - prior_mean
    return ll - 0.5 * float(diff @ diff) / prior_sd ** 2


def rwm_posterior(X, model: NoiselessModel, prior_sd: float, iters: int, burn_in: int, step_scale: float,
                  rng, init=None, target: float = 0.234) -> RwmTrace:
    """Random-walk Metropolis on ``theta`` with a wide Gaussian prior.

    The prior is centred at the starting point (default ``W0``). During the
    first half of burn-in the isotropic step is tuned toward `target`
    acceptance. During the second half the proposal uses the draws'
    empirical covariance, again with a tuned scale. The kernel is fixed
    after burn-in. Singular proposals are rejected.
    """
    if prior_sd <= 0:
        raise InvalidParameter("prior_sd must be positive")
    if not 0 <= burn_in < iters:
        raise InvalidParameter("need 0 <= burn_in < iters")
    d = model.d
    p = d * d
    X = np.zeros((0, d)) if X is None else np.asarray(X, dtype=float)
    theta = theta_of(model.W0 if init is None else init)
    prior_mean = theta.copy()
    lp = _log_post(theta, X, model, prior_mean, prior_sd)
    scale = float(step_scale)
    chol = np.eye(p)
    keep = np.empty((iters - burn_in, p))
    keep_lp = np.empty(iters - burn_in)
    hist = np.empty((burn_in, p))
    accepted = 0
    acc_burn = 0
    batch_acc = 0
    batch = 100
    half = burn_in // 2
    gen = rng.gen
    for t in range(iters):
        if t == half and half >= 10 * p:
            C = np.cov(hist[half // 2:half].T) + 1e-12 * np.eye(p)
            chol = np.linalg.cholesky(C)
            scale = 2.38 / math.sqrt(p)
        prop = theta + scale * (chol @ gen.standard_normal(p))
        lp_new = _log_post(prop, X, model, prior_mean, prior_sd)
        if math.log(gen.random()) < lp_new - lp:
            theta, lp = prop, lp_new
            ok = 1
        else:
            ok = 0
        if t < burn_in:
            hist[t] = theta
            acc_burn += ok
            batch_acc += ok
            if (t + 1) % batch == 0:
                rate = batch_acc / batch
                scale *= math.exp(min(1.0, 10.0 / math.sqrt(t + 1)) * (rate - target))
                batch_acc = 0
        else:
            accepted += ok
            keep[t - burn_in] = theta
            keep_lp[t - burn_in] = lp
    n_keep = iters - burn_in
    return RwmTrace(keep, keep_lp, accepted / n_keep, scale, scale ** 2 * chol @ chol.T,
                    acc_burn / burn_in if burn_in else float("nan"))


def effective_sample_size(x) -> float:
    """Geyer initial-positive-sequence ESS of a 1-D chain."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    f = np.fft.rfft(xc, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    if acf[0] <= 0:
        return float(n)
    acf /= acf[0]
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1.0))


@dataclass
class BvmReport:
    N: int
    scaled_cov: np.ndarray
    reference: np.ndarray
    rel_err_diag: np.ndarray
    ks_stats: np.ndarray
    ks_critical: float
    ess: float
    dpm_quantiles: dict = field(default_factory=dict)
    contraction_slope: float | None = None

    @property
    def max_rel_err(self) -> float:
        return float(np.max(np.abs(self.rel_err_diag)))


def bvm_report(trace: RwmTrace, model: NoiselessModel, fisher: np.ndarray, N: int,
               min_ess: float = 200.0, alpha: float = 0.01) -> BvmReport:
    """Compare ``N`` times the posterior covariance with ``I^-1`` and test marginal normality.

    Marginal KS tests use draws thinned by the autocorrelation time, so the
    retained draws are roughly independent.
    """
    draws = trace.draws
    ess = min(effective_sample_size(draws[:, j]) for j in range(draws.shape[1]))
    if ess < min_ess:
        raise InsufficientSamples(f"effective sample size {ess:.0f} < {min_ess:.0f}")
    cov = np.cov(draws.T)
    scaled = N * 0.5 * (cov + cov.T)
    ref = inverse(fisher)
    rel = np.diag(scaled) / np.diag(ref) - 1.0
    step = max(1, int(math.ceil(draws.shape[0] / ess)))
    thin = draws[::step]
    z = (thin - thin.mean(axis=0)) / thin.std(axis=0, ddof=1)
    ks = np.array([stats.kstest(z[:, j], "norm").statistic for j in range(z.shape[1])])
    crit = float(stats.kstwo.ppf(1.0 - alpha, thin.shape[0]))
    return BvmReport(N, scaled, ref, rel, ks, crit, float(ess))


def dpm_quantile(trace: RwmTrace, model: NoiselessModel, q: float = 0.9) -> float:
    """Posterior ``q``-quantile of ``d_pm(W, W0)``."""
    d = model.d
    vals = [signed_perm_distance(W_of(t, d), model.W0) for t in trace.draws]
    return float(np.quantile(vals, q))


def contraction_study(model: NoiselessModel, ns, reps: int, iters: int, seed: int,
                      q: float = 0.9, prior_sd: float = 100.0) -> dict:
    """Average over `reps` simulated data sets of the posterior ``q``-quantile of ``d_pm``.

    One data set per ``N`` makes the log-log slope noisy, because the
    posterior centre moves with the data; averaging the quantile over
    replicates estimates its expectation at each ``N``.
    """
    out = {}
    for N in ns:
        vals = []
        for r in range(reps):
            rng = RngStream(seed, 1000 * (r + 1) + N)
            X = model.sample(N, rng)
            tr = rwm_posterior(X, model, prior_sd, iters, iters // 5, 0.05, rng)
            step = max(1, len(tr.draws) // 2000)
            sub = RwmTrace(tr.draws[::step], tr.log_post[::step], tr.acceptance, tr.step_scale, tr.proposal_cov)
            vals.append(dpm_quantile(sub, model, q))
        out[int(N)] = float(np.mean(vals))
    return out


def report_json(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))
