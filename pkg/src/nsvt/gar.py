"""First-order gamma autoregressive (GAR) process with unit mean.

The process is ``Z_t = alpha (.) Z_{t-1} + eps_t`` where the thinning
``alpha (.) z`` is a Poisson(``alpha * rho * z``) number of Exp(``alpha``)
variables, ``eps_t ~ Gamma(shape=phi, rate=alpha)`` and
``alpha = phi / (1 - rho)``.  Marginally ``Z_t ~ Gamma(shape=phi, rate=phi)``
and ``corr(Z_{t+j}, Z_t) = rho**j``.

Conditionally on ``Z_t = z`` the lag-``j`` state is a Poisson mixture of
gammas: ``N ~ Poisson(lam * r * z)`` and
``Z_{t+j} | N ~ Gamma(shape=phi + N, rate=lam)`` with ``r = rho**j`` and
``lam = phi / (1 - r)``.  Every closed form below follows from that.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import specfun
from .errors import DomainError
from .specfun import DEFAULT_ACCURACY

__all__ = [
    "GarConfig",
    "GarPath",
    "simulate_gar",
    "kibble_log_density",
    "kibble_density",
    "conditional_moment",
    "sample_pair",
    "sample_transition",
    "conditional_laplace",
    "conditional_inverse_moment",
]

_NEGBIN_TAIL = 1e-14


@dataclass(frozen=True)
class GarConfig:
    """Parameters of a unit-mean GAR(1) process.

    Parameters
    ----------
    phi : float
        Shape (and rate) of the gamma marginal; the marginal variance is ``1/phi``.
    rho : float
        Lag-one autocorrelation, in ``(0, 1)``.
    """

    phi: float
    rho: float

    def __post_init__(self):
        if not self.phi > 0:
            raise DomainError(f"phi must be positive, got {self.phi}")
        if not 0 < self.rho < 1:
            raise DomainError(f"rho must lie in (0, 1), got {self.rho}")

    @property
    def alpha(self):
        return self.phi / (1.0 - self.rho)


@dataclass(frozen=True)
class GarPath:
    """A simulated GAR(1) trajectory ``z_1, ..., z_n``."""

    values: np.ndarray = field(repr=False)
    config: GarConfig
    seed: object = None

    def __len__(self):
        return len(self.values)


@njit(cache=True)
def _gar_kernel(rng, phi, rho, n):
    alpha = phi / (1.0 - rho)
    out = np.empty(n)
    z = rng.gamma(phi, 1.0 / phi)
    for t in range(n):
        count = rng.poisson(alpha * rho * z)
        z = rng.gamma(phi + count, 1.0 / alpha)
        out[t] = z
    return out


def simulate_gar(config, n, seed=None):
    """Simulate ``n`` steps of the GAR(1) process started from its stationary law.

    Parameters
    ----------
    config : GarConfig
    n : int
    seed : int, SeedSequence or Generator
        Anything accepted by :func:`numpy.random.default_rng`.  Identical
        seeds give bit-identical paths.

    Returns
    -------
    GarPath
    """
    n = int(n)
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    values = _gar_kernel(rng, float(config.phi), float(config.rho), n)
    return GarPath(values=values, config=config, seed=seed)


def _lag_terms(config, j):
    j = int(j)
    if j < 1:
        raise DomainError(f"lag j must be >= 1, got {j}")
    r = config.rho**j
    return r, config.phi / (1.0 - r)


def kibble_log_density(z1, z2, config, j=1, acc=DEFAULT_ACCURACY):
    """Log joint density of ``(Z_{t+j}, Z_t)`` (Kibble bivariate gamma).

    The Bessel factor is evaluated as ``log I`` from its series, so large
    arguments never overflow before the exponential factor cancels them.
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if np.any(~(z1 > 0)) or np.any(~(z2 > 0)):
        raise DomainError("kibble density requires z1, z2 > 0")
    phi = config.phi
    r, _ = _lag_terms(config, j)
    arg = 2.0 * phi * np.sqrt(r * z1 * z2) / (1.0 - r)
    out = (
        (phi + 1.0) * math.log(phi)
        - math.log1p(-r)
        - math.lgamma(phi)
        + 0.5 * (phi - 1.0) * (np.log(z1) + np.log(z2) - math.log(r))
        - phi * (z1 + z2) / (1.0 - r)
        + specfun.log_bessel_i(phi - 1.0, arg, acc)
    )
    return float(out) if out.ndim == 0 else out


def kibble_density(z1, z2, config, j=1, acc=DEFAULT_ACCURACY):
    """Joint density of ``(Z_{t+j}, Z_t)``; see :func:`kibble_log_density`."""
    out = np.exp(kibble_log_density(z1, z2, config, j, acc))
    return float(out) if np.ndim(out) == 0 else out


def conditional_moment(k, z, config, j=1):
    """``E(Z_{t+j}**k | Z_t = z)`` via the generalized Laguerre polynomial.

    ``k! ((1-r)/phi)^k L_k^{phi-1}(-z phi r / (1-r))`` with ``r = rho**j``.
    """
    k = int(k)
    if k < 1:
        raise DomainError(f"moment order must be >= 1, got {k}")
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise DomainError("conditional_moment requires z > 0")
    phi = config.phi
    r, _ = _lag_terms(config, j)
    lag = specfun.laguerre(k, phi - 1.0, -z * phi * r / (1.0 - r))
    out = math.factorial(k) * ((1.0 - r) / phi) ** k * lag
    return float(out) if np.ndim(out) == 0 else out


def _negbin_inverse_cdf(rng, phi, r, size):
    # Tabulate the pmf until the remaining tail mass is below _NEGBIN_TAIL.
    upper = max(64, int(4 * phi * r / (1.0 - r)) + 64)
    while True:
        pmf = specfun.negbin_pmf(np.arange(upper), phi, r)
        cdf = np.cumsum(pmf)
        if cdf[-1] >= 1.0 - _NEGBIN_TAIL:
            break
        upper *= 2
    u = rng.random(size)
    return np.minimum(np.searchsorted(cdf, u, side="right"), upper - 1)


def sample_pair(config, j=1, seed=None, size=None):
    """Draw ``(Z_{t+j}, Z_t)`` from the negative-binomial mixture of gammas.

    ``U ~ NegBin(phi, rho**j)`` by inverse CDF, then the two coordinates are
    independent ``Gamma(shape=phi + U, rate=phi / (1 - rho**j))``.

    Returns a pair of floats when ``size`` is None, else a pair of arrays.
    """
    rng = np.random.default_rng(seed)
    phi = config.phi
    r, lam = _lag_terms(config, j)
    u = _negbin_inverse_cdf(rng, phi, r, size)
    z1 = rng.gamma(phi + u, 1.0 / lam)
    z2 = rng.gamma(phi + u, 1.0 / lam)
    if size is None:
        return float(z1), float(z2)
    return z1, z2


def sample_transition(z, config, j=1, seed=None, size=None):
    """Draw ``Z_{t+j}`` given ``Z_t = z`` (Poisson mixture of gammas)."""
    rng = np.random.default_rng(seed)
    r, lam = _lag_terms(config, j)
    count = rng.poisson(lam * r * np.asarray(z, dtype=float), size=size)
    return rng.gamma(config.phi + count, 1.0 / lam)


def conditional_laplace(s, z, nu, rho, j=1, acc=DEFAULT_ACCURACY):
    """Conditional Laplace transform ``E(exp(-s Z_{t+j}) | Z_t = z)`` with ``phi = nu/2``.

    Summed as the Poisson mixture
    ``exp(-lam r z) sum_k (lam r z)^k / k! * (lam / (lam + s))^(phi + k)``.
    """
    cfg = GarConfig(nu / 2.0, rho)
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(~(s > 0)):
        raise DomainError("conditional_laplace requires s > 0")
    if np.any(~(z > 0)):
        raise DomainError("conditional_laplace requires z > 0")
    r, lam = _lag_terms(cfg, j)
    s, z = np.broadcast_arrays(s, z)
    mean_count = lam * r * z
    shrink = lam / (lam + s)
    log_t0 = -mean_count + cfg.phi * np.log(shrink)
    log_abs, _, _ = specfun._sum_series(
        (), (), (mean_count * shrink).ravel(), log_t0.ravel(), 1.0, acc, "conditional_laplace"
    )
    out = np.exp(log_abs).reshape(s.shape)
    return float(out) if out.ndim == 0 else out


def conditional_inverse_moment(z, nu, rho, j=1, acc=DEFAULT_ACCURACY):
    """``E(1 / Z_{t+j} | Z_t = z)`` for ``nu > 2`` (``phi = nu/2``).

    ``lam exp(-x) sum_k x^k / (k! (phi + k - 1))`` with ``x = lam r z``.
    """
    if not nu > 2:
        raise DomainError(f"inverse moment exists only for nu > 2, got {nu}")
    cfg = GarConfig(nu / 2.0, rho)
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise DomainError("conditional_inverse_moment requires z > 0")
    r, lam = _lag_terms(cfg, j)
    phi = cfg.phi
    x = (lam * r * z).ravel()
    # 1/(phi+k-1) = (phi-1)_k / ((phi)_k (phi-1)), i.e. a 1F1 series
    log_t0 = math.log(lam) - math.log(phi - 1.0) - x
    log_abs, _, _ = specfun._sum_series(
        (phi - 1.0,), (phi,), x, log_t0, 1.0, acc, "conditional_inverse_moment"
    )
    out = np.exp(log_abs).reshape(z.shape)
    return float(out) if out.ndim == 0 else out
