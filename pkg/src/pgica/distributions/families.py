"""Marginal source laws: densities, scores and samplers.

Every family is a base law (sech, Student-t, Laplace, Gaussian, or the
equal t/Laplace mixture) composed with a fixed scale ``k``: the density of
``S`` is ``k * p_base(k * s)``. Standardized families pick ``k`` so that
``Var(S) = 1``; raw families use ``k = 1``. Scores transform exactly under
this map, so no quantity is ever re-fitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .._kernels import GAUSSIAN, LAPLACE, MIXED, SECH, STUDENT_T
from ..errors import InvalidParameter

KINDS = ("sech", "student_t", "laplace", "gaussian", "mixed")
_CODES = {"sech": SECH, "student_t": STUDENT_T, "laplace": LAPLACE, "gaussian": GAUSSIAN,
          "mixed": MIXED}


@dataclass(frozen=True)
class SourceFamily:
    """Tagged description of a marginal source law.

    Attributes
    ----------
    kind : one of ``sech``, ``student_t``, ``laplace``, ``gaussian``, ``mixed``
    nu : degrees of freedom for ``student_t`` and the t half of ``mixed``
    standardized : rescale to unit variance
    """

    kind: str
    nu: float = 3.0
    standardized: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameter(f"unknown family kind {self.kind!r}")
        if self.kind in ("student_t", "mixed"):
            if not self.nu > 0:
                raise InvalidParameter("nu must be positive")
            if self.standardized and self.nu <= 2:
                raise InvalidParameter(f"t_{self.nu} has infinite variance; cannot standardize")

    # -- scale bookkeeping ---------------------------------------------
    @property
    def code(self) -> int:
        return _CODES[self.kind]

    @property
    def scale(self) -> float:
        """Multiplier ``k`` in ``p(s) = k p_base(k s)``; for ``mixed`` the t part's."""
        if not self.standardized:
            return 1.0
        if self.kind == "sech":
            return math.pi / 2.0
        if self.kind in ("student_t", "mixed"):
            return math.sqrt(self.nu / (self.nu - 2.0))
        if self.kind == "laplace":
            return math.sqrt(2.0)
        return 1.0

    @property
    def scale2(self) -> float:
        """Scale of the Laplace half of ``mixed`` (1.0 for the other kinds)."""
        if self.kind == "mixed" and self.standardized:
            return math.sqrt(2.0)
        return 1.0

    def kernel_params(self) -> tuple[int, float, float, float]:
        return self.code, self.scale, float(self.nu), self.scale2

    def is_gaussian(self) -> bool:
        return self.kind == "gaussian"

    def is_smooth(self) -> bool:
        """False for laws whose log-density has a kink (Laplace, mixed)."""
        return self.kind not in ("laplace", "mixed")

    def variance(self) -> float:
        """Analytic variance of a single draw."""
        if self.standardized:
            return 1.0
        return {
            "sech": math.pi ** 2 / 4.0,
            "gaussian": 1.0,
            "laplace": 2.0,
            "student_t": self.nu / (self.nu - 2.0) if self.nu > 2 else math.inf,
            "mixed": 0.5 * (self.nu / (self.nu - 2.0) if self.nu > 2 else math.inf) + 1.0,
        }[self.kind]

    # -- config tokens -------------------------------------------------
    @property
    def token(self) -> str:
        base = {"sech": "sech", "laplace": "laplace", "gaussian": "gaussian", "mixed": "mixed"}.get(
            self.kind)
        if base is None:
            base = f"t{self.nu:g}"
        elif self.kind == "mixed" and self.nu != 3.0:
            base = f"mixed{self.nu:g}"
        return base if self.standardized else base + ":raw"

    @classmethod
    def from_token(cls, token: str) -> "SourceFamily":
        """Parse ``sech``, ``t3``, ``laplace``, ``mixed``, ``gaussian`` with optional ``:raw``."""
        text = token.strip().lower()
        standardized = True
        if text.endswith(":raw"):
            standardized = False
            text = text[: -len(":raw")]
        if text in ("sech", "laplace", "gaussian", "mixed"):
            return cls(text, standardized=standardized)
        try:
            if text.startswith("mixed"):
                return cls("mixed", nu=float(text[5:]), standardized=standardized)
            if text.startswith("t"):
                return cls("student_t", nu=float(text[1:]), standardized=standardized)
        except ValueError:
            pass
        raise InvalidParameter(f"unrecognised family token {token!r}")

    def __str__(self):
        return self.token


def columns_for(family: SourceFamily, d: int) -> list[SourceFamily]:
    """Per-column families for a d-source model.

    ``mixed`` splits columns between t and Laplace, the first ``ceil(d/2)``
    columns taking the t law; every other kind is repeated.
    """
    if family.kind != "mixed":
        return [family] * d
    n_t = (d + 1) // 2
    t = SourceFamily("student_t", nu=family.nu, standardized=family.standardized)
    lap = SourceFamily("laplace", standardized=family.standardized)
    return [t] * n_t + [lap] * (d - n_t)


# -- densities -------------------------------------------------------------

def _logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)


def _t_log_norm(nu: float) -> float:
    return float(gammaln(0.5 * (nu + 1.0)) - gammaln(0.5 * nu) - 0.5 * math.log(nu * math.pi))


def _base_logpdf(kind: str, nu: float, x):
    if kind == "sech":
        return -math.log(math.pi) - _logcosh(x)
    if kind == "student_t":
        return _t_log_norm(nu) - 0.5 * (nu + 1.0) * np.log1p(x * x / nu)
    if kind == "laplace":
        return -math.log(2.0) - np.abs(x)
    if kind == "gaussian":
        return -0.5 * math.log(2.0 * math.pi) - 0.5 * x * x
    raise AssertionError(kind)


def log_density(family: SourceFamily, s):
    """Normalized log-density, elementwise over `s`."""
    s = np.asarray(s, dtype=np.float64)
    if family.kind == "mixed":
        k, k2 = family.scale, family.scale2
        lt = math.log(k) + _base_logpdf("student_t", family.nu, k * s)
        ll = math.log(k2) + _base_logpdf("laplace", family.nu, k2 * s)
        out = np.logaddexp(lt, ll) - math.log(2.0)
    else:
        k = family.scale
        out = math.log(k) + _base_logpdf(family.kind, family.nu, k * s)
    return out if out.ndim else float(out)


# -- scores ---------------------------------------------------------------

@dataclass(frozen=True)
class ScoreBundle:
    """Score ``psi = d/ds log p`` and its first two derivatives."""

    psi: Callable
    psi_prime: Callable
    psi_double_prime: Callable


def _base_derivs(kind: str, nu: float, x):
    """(psi, psi', psi'') of the unscaled base law at x."""
    if kind == "sech":
        t = np.tanh(x)
        sech2 = 1.0 - t * t
        return -t, -sech2, 2.0 * sech2 * t
    if kind == "student_t":
        q = nu + x * x
        return (-(nu + 1.0) * x / q,
                -(nu + 1.0) * (nu - x * x) / q ** 2,
                -2.0 * (nu + 1.0) * x * (x * x - 3.0 * nu) / q ** 3)
    if kind == "laplace":
        z = np.zeros_like(x)
        return -np.sign(x), z, z
    if kind == "gaussian":
        return -x, -np.ones_like(x), np.zeros_like(x)
    raise AssertionError(kind)


def _scaled_derivs(kind, nu, k, s):
    p0, p1, p2 = _base_derivs(kind, nu, k * s)
    return k * p0, k * k * p1, k ** 3 * p2


def _mixed_derivs(family: SourceFamily, s):
    # Work with the component densities q_j: q' = q psi, q'' = q(psi' + psi^2),
    # q''' = q(psi'' + 3 psi psi' + psi^3).
    k, k2 = family.scale, family.scale2
    lt = math.log(k) + _base_logpdf("student_t", family.nu, k * s)
    ll = math.log(k2) + _base_logpdf("laplace", family.nu, k2 * s)
    hi = np.maximum(lt, ll)
    wt, wl = np.exp(lt - hi), np.exp(ll - hi)
    tot = wt + wl
    wt, wl = wt / tot, wl / tot
    at = _scaled_derivs("student_t", family.nu, k, s)
    al = _scaled_derivs("laplace", family.nu, k2, s)

    def moments(a):
        p, dp, ddp = a
        return p, dp + p * p, ddp + 3.0 * p * dp + p ** 3

    m1t, m2t, m3t = moments(at)
    m1l, m2l, m3l = moments(al)
    r1 = wt * m1t + wl * m1l
    r2 = wt * m2t + wl * m2l
    r3 = wt * m3t + wl * m3l
    psi = r1
    dpsi = r2 - psi * psi
    ddpsi = r3 - 3.0 * psi * dpsi - psi ** 3
    return psi, dpsi, ddpsi


def _derivs(family: SourceFamily, s):
    s = np.asarray(s, dtype=np.float64)
    if family.kind == "mixed":
        out = _mixed_derivs(family, s)
    else:
        out = _scaled_derivs(family.kind, family.nu, family.scale, s)
    return tuple(o if np.ndim(o) else float(o) for o in out)


def score(family: SourceFamily) -> ScoreBundle:
    """Closed-form score bundle for `family`.

    Laplace scores use ``psi(0) = 0`` (subgradient midpoint) and zero
    curvature away from the kink.
    """
    return ScoreBundle(
        psi=lambda s: _derivs(family, s)[0],
        psi_prime=lambda s: _derivs(family, s)[1],
        psi_double_prime=lambda s: _derivs(family, s)[2],
    )


def score_all(family: SourceFamily, s):
    """``(psi, psi', psi'')`` evaluated together, avoiding repeated work."""
    return _derivs(family, s)


# -- sampling -------------------------------------------------------------

def sech_inverse_cdf(u):
    """Raw sech quantile function ``log tan(pi u / 2)``."""
    return np.log(np.tan(0.5 * math.pi * np.asarray(u, dtype=np.float64)))


def sech_cdf(s):
    """Raw sech CDF ``(2/pi) arctan(exp(s))``."""
    return 2.0 / math.pi * np.arctan(np.exp(np.asarray(s, dtype=np.float64)))


def sample_source(family: SourceFamily, n: int, rng) -> np.ndarray:
    """Draw `n` i.i.d. variates from `family`.

    ``mixed`` draws each variate from t or Laplace by a fair coin, which is
    the scalar law whose density :func:`log_density` returns.
    """
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    gen = getattr(rng, "gen", rng)
    kind = family.kind
    if kind == "sech":
        u = gen.random(n)
        while np.any(u == 0.0):
            u[u == 0.0] = gen.random(int(np.sum(u == 0.0)))
        return sech_inverse_cdf(u) / family.scale
    if kind == "student_t":
        return gen.standard_t(family.nu, n) / family.scale
    if kind == "laplace":
        return gen.laplace(0.0, 1.0, n) / family.scale
    if kind == "gaussian":
        return gen.standard_normal(n)
    coin = gen.random(n) < 0.5
    t = gen.standard_t(family.nu, n) / family.scale
    lap = gen.laplace(0.0, 1.0, n) / family.scale2
    return np.where(coin, t, lap)


def sample_sources(family: SourceFamily, n: int, d: int, rng) -> tuple[np.ndarray, list]:
    """An ``n x d`` source matrix drawn column by column, plus column families."""
    cols = columns_for(family, d)
    S = np.column_stack([sample_source(f, n, rng) for f in cols])
    return S, cols
