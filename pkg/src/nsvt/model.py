"""The NSVt response model: Student-t marginals driven by a latent GAR(1) precision.

``Y_t | Z ~ Normal(x_t' beta, sigma2 / Z_t)`` independently given the latent
path, where ``Z`` is GAR(1) with ``phi = nu / 2``.  Each ``Y_t`` is marginally
Student-t with location ``x_t' beta``, scale ``sqrt(sigma2)`` and ``nu``
degrees of freedom; pairs ``(Y_{t+j}, Y_t)`` have a closed-form joint density
in terms of ``2F1``.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import specfun
from .errors import DomainError
from .gar import GarConfig, _gar_kernel
from .specfun import DEFAULT_ACCURACY

__all__ = [
    "NsvtParams",
    "SeriesData",
    "simulate_nsvt",
    "student_t_logpdf",
    "student_t_pdf",
    "student_t_cdf",
    "omega",
    "log_pairwise_density",
    "pairwise_density",
    "conditional_variance",
    "forecast_moments",
]

# Keeps the 2F1 argument strictly inside the unit disc when y == mu.
OMEGA_CAP = 1.0 - 1e-15


@dataclass(frozen=True)
class NsvtParams:
    """Parameter vector ``(beta, sigma2, nu, rho)``.

    Parameters
    ----------
    beta : array_like
        Regression coefficients, length ``p``.
    sigma2 : float
        Scale; the marginal variance is ``sigma2 * nu / (nu - 2)`` for ``nu > 2``.
    nu : float
        Degrees of freedom of the Student-t marginal (latent shape ``nu/2``).
    rho : float
        Volatility persistence, in ``(0, 1)``.
    """

    beta: np.ndarray
    sigma2: float
    nu: float
    rho: float

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).reshape(-1)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "rho", float(self.rho))
        if not np.all(np.isfinite(beta)):
            raise DomainError("beta must be finite")
        if not self.sigma2 > 0 or not math.isfinite(self.sigma2):
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.nu > 0 or not math.isfinite(self.nu):
            raise DomainError(f"nu must be positive, got {self.nu}")
        if not 0 < self.rho < 1:
            raise DomainError(f"rho must lie in (0, 1), got {self.rho}")

    @property
    def p(self):
        return self.beta.size

    @property
    def latent(self):
        """The latent :class:`GarConfig` (``phi = nu/2``)."""
        return GarConfig(self.nu / 2.0, self.rho)

    def to_vector(self):
        """``(beta_1, ..., beta_p, sigma2, nu, rho)`` as a float array."""
        return np.concatenate([self.beta, [self.sigma2, self.nu, self.rho]])

    @classmethod
    def from_vector(cls, theta):
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:-3], theta[-3], theta[-2], theta[-1])

    def replace(self, **changes):
        values = {"beta": self.beta, "sigma2": self.sigma2, "nu": self.nu, "rho": self.rho}
        values.update(changes)
        return NsvtParams(**values)

    def as_dict(self):
        return {"beta": self.beta.tolist(), "sigma2": self.sigma2, "nu": self.nu, "rho": self.rho}


@dataclass(frozen=True)
class SeriesData:
    """A response series with its aligned covariate matrix (row ``t`` is ``x_t'``)."""

    y: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if y.size < 2:
            raise DomainError(f"need at least 2 observations, got {y.size}")
        if X.ndim != 2 or X.shape[0] != y.size:
            raise DomainError(f"X has shape {X.shape}, expected ({y.size}, p)")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DomainError("series data contain non-finite values")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n(self):
        return self.y.size

    @property
    def p(self):
        return self.X.shape[1]

    def residuals(self, beta):
        return self.y - self.X @ np.asarray(beta, dtype=float)


def simulate_nsvt(params, X, seed=None, return_latent=False):
    """Simulate a response path for the covariate matrix ``X``.

    The latent GAR(1) path (``phi = nu/2``) and the Gaussian noise are drawn
    from one generator seeded with ``seed``.

    Returns
    -------
    y : ndarray
    z : ndarray
        Only when ``return_latent`` is true.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise DomainError("X must have at least one row")
    if X.shape[1] != params.p:
        raise DomainError(f"X has {X.shape[1]} columns but beta has {params.p}")
    rng = np.random.default_rng(seed)
    z = _gar_kernel(rng, params.nu / 2.0, params.rho, X.shape[0])
    y = X @ params.beta + np.sqrt(params.sigma2 / z) * rng.standard_normal(X.shape[0])
    return (y, z) if return_latent else y


def _check_scale(sigma2, nu):
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")


def student_t_logpdf(y, mu, sigma2, nu):
    """Log density of the location-scale Student-t."""
    _check_scale(sigma2, nu)
    q = (np.asarray(y, dtype=float) - mu) ** 2 / (nu * sigma2)
    out = (
        math.lgamma((nu + 1) / 2)
        - math.lgamma(nu / 2)
        - 0.5 * math.log(math.pi * nu * sigma2)
        - (nu + 1) / 2 * np.log1p(q)
    )
    return float(out) if np.ndim(out) == 0 else out


def student_t_pdf(y, mu, sigma2, nu):
    out = np.exp(student_t_logpdf(y, mu, sigma2, nu))
    return float(out) if np.ndim(out) == 0 else out


def student_t_cdf(y, mu, sigma2, nu):
    """Location-scale Student-t CDF (incomplete beta, via :func:`scipy.special.stdtr`)."""
    _check_scale(sigma2, nu)
    out = special.stdtr(nu, (np.asarray(y, dtype=float) - mu) / math.sqrt(sigma2))
    return float(out) if np.ndim(out) == 0 else out


def _v(resid, r, sigma2, nu):
    # inf for residuals beyond ~1e154 is fine: the density is then 0
    with np.errstate(over="ignore"):
        return 1.0 + (1.0 - r) * resid**2 / (nu * sigma2)


def omega(y1, y2, mu1, mu2, params, j=1):
    """Product of the two reciprocal quadratic factors, in ``(0, 1]``."""
    r = params.rho ** int(j)
    e1 = np.asarray(y1, dtype=float) - mu1
    e2 = np.asarray(y2, dtype=float) - mu2
    out = 1.0 / (_v(e1, r, params.sigma2, params.nu) * _v(e2, r, params.sigma2, params.nu))
    return float(out) if np.ndim(out) == 0 else out


def _pair_log_const(r, sigma2, nu):
    return (
        (nu / 2 + 1) * np.log1p(-r)
        - math.log(math.pi * nu * sigma2)
        + 2.0 * (math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2))
    )


def _pair_core(e1, e2, r, sigma2, nu, acc=DEFAULT_ACCURACY):
    """Shared pieces of the pairwise density for residuals ``e1, e2`` at ``r = rho**j``.

    Returns ``(log_f, v1, v2, x, log_F)`` where ``x = r * omega`` is the 2F1
    argument and ``log_F`` the log of ``2F1(a, a; nu/2; x)``.
    """
    v1 = _v(e1, r, sigma2, nu)
    v2 = _v(e2, r, sigma2, nu)
    w = np.minimum(1.0 / (v1 * v2), OMEGA_CAP)
    x = r * w
    a = (nu + 1) / 2
    log_F, _ = specfun.log_hyp2f1(a, a, nu / 2, x, acc)
    with np.errstate(divide="ignore"):
        # w underflows to 0 only for absurd residuals; log_f is then -inf
        log_f = _pair_log_const(r, sigma2, nu) + a * np.log(w) + log_F
    return log_f, v1, v2, x, log_F


def log_pairwise_density(y1, y2, mu1, mu2, params, j=1, acc=DEFAULT_ACCURACY):
    """Log joint density of ``(Y_{t+j}, Y_t)``, vectorized over the observations.

    ``j`` may be an array of lags aligned with ``y1``.
    """
    r = params.rho ** np.asarray(j, dtype=float)
    e1 = np.asarray(y1, dtype=float) - mu1
    e2 = np.asarray(y2, dtype=float) - mu2
    e1, e2, r = np.broadcast_arrays(e1, e2, r)
    log_f = _pair_core(e1, e2, r, params.sigma2, params.nu, acc)[0]
    return float(log_f) if log_f.ndim == 0 else log_f


def pairwise_density(y1, y2, mu1, mu2, params, j=1, acc=DEFAULT_ACCURACY):
    """Joint density of ``(Y_{t+j}, Y_t)`` at a single point.

    Returns
    -------
    density, log_density : float
    """
    log_f = float(log_pairwise_density(y1, y2, mu1, mu2, params, j, acc))
    return math.exp(log_f), log_f


def conditional_variance(y_t, mu_t, params, j=1, printed=False, acc=DEFAULT_ACCURACY):
    """``Var(Y_{t+j} | Y_t = y_t)`` for ``nu > 2``.

    Computed as ``sigma2 * lam * (1-w)^a * Gamma(nu/2-1)/Gamma(nu/2) *
    2F1(a, nu/2-1; nu/2; w)`` with ``a = (nu+1)/2``, ``lam = nu/(2(1-rho^j))``
    and ``w = rho^j / (1 + (1-rho^j)(y_t-mu_t)^2/(nu sigma2))``.  This is
    the value of ``sigma2 E[E(1/Z_{t+j} | Z_t) | Y_t]`` and reduces to the
    Student-t variance ``sigma2 nu/(nu-2)`` as ``rho -> 0``.

    Parameters
    ----------
    printed : bool
        Evaluate the alternative closed form
        ``sigma2 nu (1-w)^a / (2(1-rho^j) Gamma(nu/2-1)) 1F1(a, nu/2-1; w)``
        instead.  It disagrees with the Student-t limit unless ``nu = 4`` and
        is kept only for comparison (see ``docs/conditional_variance.md``).
    """
    nu, sigma2 = params.nu, params.sigma2
    if not nu > 2:
        raise DomainError(f"conditional variance requires nu > 2, got {nu}")
    r = params.rho ** int(j)
    e = np.asarray(y_t, dtype=float) - mu_t
    w = r / _v(e, r, sigma2, nu)
    a = (nu + 1) / 2
    if printed:
        log_K, sign = specfun.log_hyp1f1(a, nu / 2 - 1, w, acc)
        out = (
            sigma2 * nu / (2 * (1 - r)) * np.exp(a * np.log1p(-w) - math.lgamma(nu / 2 - 1) + log_K)
        ) * sign
    else:
        log_F, _ = specfun.log_hyp2f1(a, nu / 2 - 1, nu / 2, w, acc)
        log_lam = math.log(nu / (2 * (1 - r)))
        out = sigma2 * np.exp(
            log_lam + a * np.log1p(-w) + math.lgamma(nu / 2 - 1) - math.lgamma(nu / 2) + log_F
        )
    return float(out) if np.ndim(out) == 0 else out


def forecast_moments(y_t, mu_t, mu_pred, params, j=1, acc=DEFAULT_ACCURACY):
    """Conditional mean and variance of ``Y_{t+j}`` given ``Y_t = y_t``.

    The conditional mean is the regression mean at the horizon, ``mu_pred``,
    which the caller supplies because ``x_{t+j}`` must be known.
    """
    return mu_pred, conditional_variance(y_t, mu_t, params, j, acc=acc)
