"""Pure-numpy versions of the hot kernels.

Same signatures and results as the numba module for the deterministic
kernels. The Polya-Gamma sampler runs the identical algorithm vectorized
over the batch, so it consumes the random stream in a different order and
its draws match the numba path in distribution only.
"""

import math

import numpy as np
from scipy.special import erfc, gammaln

from ._common import (
    GAUSSIAN, HALF_LOG_2PI, LAPLACE, LOG_2, LOG_PI, MIXED, PG_TRUNC, PG_TRUNC_RECIP, PI2_8,
    SECH, STUDENT_T,
)


# -- Polya-Gamma PG(1, c) -------------------------------------------------

def _log_phi(x):
    with np.errstate(divide="ignore"):
        return np.log(0.5 * erfc(-x / math.sqrt(2.0)))


def _series_coef(n, x):
    k = (n + 0.5) * math.pi
    out = np.empty_like(x)
    right = x > PG_TRUNC
    out[right] = k * np.exp(-0.5 * k * k * x[right])
    xl = x[~right]
    with np.errstate(divide="ignore"):
        out[~right] = np.exp(-1.5 * (math.log(0.5 * math.pi) + np.log(xl)) + math.log(k)
                             - 2.0 * (n + 0.5) ** 2 / xl)
    return out


def _mass_texpon(z):
    t = PG_TRUNC
    fz = PI2_8 + 0.5 * z * z
    b = math.sqrt(1.0 / t) * (t * z - 1.0)
    a = -math.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = np.log(fz) + fz * t
    qdivp = 4.0 / math.pi * (np.exp(x0 - z + _log_phi(b)) + np.exp(x0 + z + _log_phi(a)))
    return 1.0 / (1.0 + qdivp)


def _rtigauss(z, gen):
    x = np.empty_like(z)
    small = z < PG_TRUNC_RECIP
    t = PG_TRUNC
    idx = np.flatnonzero(small)
    while idx.size:
        e1 = gen.standard_exponential(idx.size)
        e2 = gen.standard_exponential(idx.size)
        bad = e1 * e1 > 2.0 * e2 / t
        while bad.any():
            nb = int(bad.sum())
            e1[bad] = gen.standard_exponential(nb)
            e2[bad] = gen.standard_exponential(nb)
            bad = e1 * e1 > 2.0 * e2 / t
        cand = t / (1.0 + e1 * t) ** 2
        alpha = np.exp(-0.5 * z[idx] ** 2 * cand)
        ok = gen.random(idx.size) <= alpha
        x[idx[ok]] = cand[ok]
        idx = idx[~ok]
    idx = np.flatnonzero(~small)
    while idx.size:
        mu = 1.0 / z[idx]
        y = gen.standard_normal(idx.size) ** 2
        mu_y = mu * y
        cand = mu + 0.5 * mu * mu_y - 0.5 * mu * np.sqrt(4.0 * mu_y + mu_y * mu_y)
        flip = gen.random(idx.size) > mu / (mu + cand)
        cand[flip] = mu[flip] ** 2 / cand[flip]
        ok = cand <= t
        x[idx[ok]] = cand[ok]
        idx = idx[~ok]
    return x


def pg1_draws(c, gen):
    c = np.asarray(c, dtype=np.float64)
    out = np.empty(c.shape[0])
    pending = np.arange(c.shape[0])
    while pending.size:
        z = 0.5 * np.abs(c[pending])
        fz = PI2_8 + 0.5 * z * z
        use_exp = gen.random(pending.size) < _mass_texpon(z)
        x = np.empty(pending.size)
        ne = int(use_exp.sum())
        x[use_exp] = PG_TRUNC + gen.standard_exponential(ne) / fz[use_exp]
        if ne < pending.size:
            x[~use_exp] = _rtigauss(z[~use_exp], gen)
        s = _series_coef(0, x)
        y = gen.random(pending.size) * s
        accepted = np.zeros(pending.size, dtype=bool)
        live = np.arange(pending.size)
        n = 0
        while live.size:
            n += 1
            coef = _series_coef(n, x[live])
            if n % 2 == 1:
                s[live] -= coef
                hit = y[live] <= s[live]
                accepted[live[hit]] = True
                live = live[~hit]
            else:
                s[live] += coef
                live = live[y[live] <= s[live]]
        out[pending[accepted]] = 0.25 * x[accepted]
        pending = pending[~accepted]
    return out


# -- Gibbs source block ---------------------------------------------------

def gibbs_sources(X, A, T, sigma, Z):
    n, d = X.shape
    inv_s2 = 1.0 / (sigma * sigma)
    P = np.broadcast_to((A.T @ A) * inv_s2, (n, d, d)).copy()
    P[:, np.arange(d), np.arange(d)] += 4.0 * np.maximum(T, 1e-12)
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        return np.empty((n, d)), False
    B = X @ A * inv_s2
    y = np.linalg.solve(L, B[:, :, None])
    m = np.linalg.solve(np.swapaxes(L, 1, 2), y + Z[:, :, None])
    return m[:, :, 0], True


# -- source log-densities -------------------------------------------------

def _logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - LOG_2


def _t_logpdf(x, nu):
    return (gammaln(0.5 * (nu + 1.0)) - gammaln(0.5 * nu) - 0.5 * math.log(nu * math.pi)
            - 0.5 * (nu + 1.0) * np.log1p(x * x / nu))


def family_logpdf(code, k, nu, k2, s):
    if code == SECH:
        return math.log(k) - LOG_PI - _logcosh(k * s)
    if code == STUDENT_T:
        return math.log(k) + _t_logpdf(k * s, nu)
    if code == LAPLACE:
        return math.log(k) - LOG_2 - np.abs(k * s)
    if code == GAUSSIAN:
        return math.log(k) - HALF_LOG_2PI - 0.5 * (k * s) ** 2
    if code == MIXED:
        lt = math.log(k) + _t_logpdf(k * s, nu)
        ll = math.log(k2) - LOG_2 - np.abs(k2 * s)
        return np.logaddexp(lt, ll) - LOG_2
    raise ValueError(f"unknown family code {code}")


def source_loglik_sum(W, X, codes, ks, nus, k2s):
    S = X @ W.T
    return float(sum(np.sum(family_logpdf(codes[k], ks[k], nus[k], k2s[k], S[:, k]))
                     for k in range(W.shape[0])))


# -- EM E-step ------------------------------------------------------------

def em_z_matrices(W, X):
    U = X @ W.T
    small = np.abs(U) < 1e-4
    with np.errstate(invalid="ignore", divide="ignore"):
        wgt = np.where(small, 1.0 - U * U / 3.0 + 2.0 * U ** 4 / 15.0, np.tanh(U) / U)
    wgt *= 0.5
    Z = np.einsum("ni,na,nb->iab", wgt, X, X) / X.shape[0]
    return 0.5 * (Z + np.swapaxes(Z, 1, 2))
