"""numba implementations of the hot loops."""

import math

import numpy as np
from numba import njit

from ._common import (
    GAUSSIAN, HALF_LOG_2PI, LAPLACE, LOG_2, LOG_PI, MIXED, PG_TRUNC, PG_TRUNC_RECIP, PI2_8,
    SECH, STUDENT_T,
)


# -- Polya-Gamma PG(1, c) -------------------------------------------------

@njit(cache=True)
def _log_phi(x):
    v = 0.5 * math.erfc(-x / math.sqrt(2.0))
    if v <= 0.0:
        return -np.inf
    return math.log(v)


@njit(cache=True)
def _series_coef(n, x):
    k = (n + 0.5) * math.pi
    if x > PG_TRUNC:
        return k * math.exp(-0.5 * k * k * x)
    if x > 0.0:
        return math.exp(-1.5 * (math.log(0.5 * math.pi) + math.log(x)) + math.log(k)
                        - 2.0 * (n + 0.5) * (n + 0.5) / x)
    return 0.0


@njit(cache=True)
def _mass_texpon(z):
    t = PG_TRUNC
    fz = PI2_8 + 0.5 * z * z
    b = math.sqrt(1.0 / t) * (t * z - 1.0)
    a = -math.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = math.log(fz) + fz * t
    xb = x0 - z + _log_phi(b)
    xa = x0 + z + _log_phi(a)
    qdivp = 4.0 / math.pi * (math.exp(xb) + math.exp(xa))
    return 1.0 / (1.0 + qdivp)


@njit(cache=True)
def _rtigauss(z, gen):
    """Inverse-Gaussian(mean 1/z, shape 1) truncated to (0, PG_TRUNC)."""
    t = PG_TRUNC
    x = t + 1.0
    if PG_TRUNC_RECIP > z:
        alpha = 0.0
        u = 1.0
        while u > alpha:
            e1 = gen.standard_exponential()
            e2 = gen.standard_exponential()
            while e1 * e1 > 2.0 * e2 / t:
                e1 = gen.standard_exponential()
                e2 = gen.standard_exponential()
            x = 1.0 + e1 * t
            x = t / (x * x)
            alpha = math.exp(-0.5 * z * z * x)
            u = gen.random()
    else:
        mu = 1.0 / z
        while x > t:
            y = gen.standard_normal()
            y = y * y
            half_mu = 0.5 * mu
            mu_y = mu * y
            x = mu + half_mu * mu_y - half_mu * math.sqrt(4.0 * mu_y + mu_y * mu_y)
            if gen.random() > mu / (mu + x):
                x = mu * mu / x
    return x


@njit(cache=True)
def _pg1_one(c, gen):
    z = 0.5 * abs(c)
    fz = PI2_8 + 0.5 * z * z
    while True:
        if gen.random() < _mass_texpon(z):
            x = PG_TRUNC + gen.standard_exponential() / fz
        else:
            x = _rtigauss(z, gen)
        s = _series_coef(0, x)
        y = gen.random() * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _series_coef(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s += _series_coef(n, x)
                if y > s:
                    break


@njit(cache=True)
def pg1_draws(c, gen):
    out = np.empty(c.shape[0])
    for i in range(c.shape[0]):
        out[i] = _pg1_one(c[i], gen)
    return out


# -- Gibbs source block ---------------------------------------------------

@njit(cache=True)
def gibbs_sources(X, A, T, sigma, Z):
    """Draw every row s_i ~ N(mu_i, (A'A/sigma^2 + diag(4 tau_i))^-1).

    `Z` holds pre-drawn standard normals, one row per observation; the draw
    is ``mu + L^-T z`` with ``L L' `` the precision factorization.
    """
    n, d = X.shape
    inv_s2 = 1.0 / (sigma * sigma)
    G = (A.T @ A) * inv_s2
    B = X @ A * inv_s2  # row i is A' x_i / sigma^2
    S = np.empty((n, d))
    P = np.empty((d, d))
    L = np.zeros((d, d))
    y = np.empty(d)
    m = np.empty(d)
    for i in range(n):
        for a in range(d):
            for b in range(d):
                P[a, b] = G[a, b]
            P[a, a] += 4.0 * max(T[i, a], 1e-12)
        # Cholesky P = L L'
        for a in range(d):
            acc = P[a, a]
            for k in range(a):
                acc -= L[a, k] * L[a, k]
            if acc <= 0.0:
                return S, False
            L[a, a] = math.sqrt(acc)
            for b in range(a + 1, d):
                acc = P[b, a]
                for k in range(a):
                    acc -= L[b, k] * L[a, k]
                L[b, a] = acc / L[a, a]
        # forward solve L y = B_i
        for a in range(d):
            acc = B[i, a]
            for k in range(a):
                acc -= L[a, k] * y[k]
            y[a] = acc / L[a, a]
        # back solve L' m = y + z gives mean plus L^-T z in one pass
        for a in range(d - 1, -1, -1):
            acc = y[a] + Z[i, a]
            for k in range(a + 1, d):
                acc -= L[k, a] * m[k]
            m[a] = acc / L[a, a]
        for a in range(d):
            S[i, a] = m[a]
    return S, True


# -- source log-densities -------------------------------------------------

@njit(cache=True)
def _logcosh(x):
    ax = abs(x)
    return ax + math.log1p(math.exp(-2.0 * ax)) - LOG_2


@njit(cache=True)
def _t_logpdf(x, nu):
    return (math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu) - 0.5 * math.log(nu * math.pi)
            - 0.5 * (nu + 1.0) * math.log1p(x * x / nu))


@njit(cache=True)
def _family_logpdf(code, k, nu, k2, s):
    if code == SECH:
        x = k * s
        return math.log(k) - LOG_PI - _logcosh(x)
    if code == STUDENT_T:
        return math.log(k) + _t_logpdf(k * s, nu)
    if code == LAPLACE:
        return math.log(k) - LOG_2 - abs(k * s)
    if code == GAUSSIAN:
        x = k * s
        return math.log(k) - HALF_LOG_2PI - 0.5 * x * x
    # MIXED: equal mixture of scaled t_nu (scale k) and Laplace (scale k2)
    lt = math.log(k) + _t_logpdf(k * s, nu)
    ll = math.log(k2) - LOG_2 - abs(k2 * s)
    hi = max(lt, ll)
    return hi + math.log(0.5 * math.exp(lt - hi) + 0.5 * math.exp(ll - hi))


@njit(cache=True, fastmath=True)
def _column_loglik(code, k, nu, k2, s):
    """Sum of one family's log-density over a column; constants hoisted."""
    n = s.shape[0]
    total = 0.0
    if code == SECH:
        for i in range(n):
            ax = abs(k * s[i])
            total -= ax + math.log1p(math.exp(-2.0 * ax))
        return total + n * (math.log(k) - LOG_PI + LOG_2)
    if code == STUDENT_T:
        c = math.log(k) + _t_logpdf(0.0, nu)
        for i in range(n):
            x = k * s[i]
            total += math.log1p(x * x / nu)
        return n * c - 0.5 * (nu + 1.0) * total
    if code == LAPLACE:
        for i in range(n):
            total += abs(s[i])
        return n * (math.log(k) - LOG_2) - k * total
    if code == GAUSSIAN:
        for i in range(n):
            total += s[i] * s[i]
        return n * (math.log(k) - HALF_LOG_2PI) - 0.5 * k * k * total
    for i in range(n):
        total += _family_logpdf(code, k, nu, k2, s[i])
    return total


@njit(cache=True)
def source_loglik_sum(W, X, codes, ks, nus, k2s):
    """sum_n sum_k log p_k(w_k' x_n)."""
    n, d = X.shape
    S = np.empty((d, n))
    for i in range(n):
        for k in range(d):
            v = 0.0
            for j in range(d):
                v += W[k, j] * X[i, j]
            S[k, i] = v
    total = 0.0
    for k in range(d):
        total += _column_loglik(codes[k], ks[k], nus[k], k2s[k], S[k])
    return total


# -- EM E-step ------------------------------------------------------------

@njit(cache=True)
def em_z_matrices(W, X):
    """Z_i = mean_n [tanh(u)/(2u) x x'] with u = w_i' x_n, for every row i."""
    n, d = X.shape
    Z = np.zeros((d, d, d))
    for t in range(n):
        for i in range(d):
            u = 0.0
            for j in range(d):
                u += W[i, j] * X[t, j]
            if abs(u) < 1e-4:
                u2 = u * u
                wgt = 0.5 * (1.0 - u2 / 3.0 + 2.0 * u2 * u2 / 15.0)
            else:
                wgt = 0.5 * math.tanh(u) / u
            for a in range(d):
                xa = wgt * X[t, a]
                for b in range(a, d):
                    Z[i, a, b] += xa * X[t, b]
    for i in range(d):
        for a in range(d):
            for b in range(a, d):
                Z[i, a, b] /= n
                Z[i, b, a] = Z[i, a, b]
    return Z
