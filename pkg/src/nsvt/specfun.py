"""Special functions evaluated by power series in log space.

All series share one compiled summation kernel: terms are generated from
their successive ratios, carried as a mantissa plus a log scale so nothing
overflows, and accumulated with Kahan compensation.  Truncation happens once
the geometric tail bound ``|term| / (1 - term ratio)`` falls below
``rel_tol * |partial sum|`` on three consecutive terms.

Every function accepts numpy arrays for its argument (``z`` or ``x``) and
keeps its parameters scalar; scalar wrappers return plain floats.
"""
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import special

from .errors import ConvergenceError, DomainError

__all__ = [
    "SeriesAccuracy",
    "DEFAULT_ACCURACY",
    "EULER_THRESHOLD",
    "BESSEL_SERIES_MAX",
    "log_gamma",
    "log_hyp2f1",
    "gauss_2f1",
    "log_hyp1f1",
    "kummer_1f1",
    "log_bessel_i",
    "bessel_i",
    "laguerre",
    "log_negbin_pmf",
    "negbin_pmf",
]

#: Arguments of 2F1 above this switch to the Euler transformation.
EULER_THRESHOLD = 0.9

_FALLBACK_MAX_TERMS = 10**6

#: Bessel arguments at or above this use the scaled scipy routine.
BESSEL_SERIES_MAX = 50.0


@dataclass(frozen=True)
class SeriesAccuracy:
    """Truncation policy for the infinite series.

    Parameters
    ----------
    rel_tol : float
        A term counts as negligible when ``|term| / (1 - ratio) < rel_tol *
        |partial sum|``, where ``ratio`` is its ratio to the previous term.
    max_terms : int
        Hard cap on the number of terms; exceeding it raises
        :class:`~nsvt.errors.ConvergenceError`.
    """

    rel_tol: float = 1e-12
    max_terms: int = 10000

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol}")
        if int(self.max_terms) < 1:
            raise DomainError(f"max_terms must be >= 1, got {self.max_terms}")


DEFAULT_ACCURACY = SeriesAccuracy()


@njit(cache=True)
def _pfq_kernel(num, den, z, log_t0, sign0, rel_tol, max_terms):
    # Terms follow t_{k+1} = t_k * prod(num + k) / prod(den + k) * z / (k + 1).
    # Each element carries (mantissa, log scale); mantissas are renormalized
    # before they can overflow, and the running sum is Kahan-compensated.
    n = z.size
    log_abs = np.empty(n)
    sign = np.empty(n)
    negative = np.zeros(n, dtype=np.bool_)
    partial = np.empty(n)
    failed = -1
    big = 1e250
    log_big = np.log(big)
    for e in range(n):
        if not np.isfinite(log_t0[e]):
            log_abs[e] = -np.inf
            sign[e] = 0.0
            partial[e] = 0.0
            continue
        t = sign0[e]
        s = t
        comp = 0.0
        scale = log_t0[e]
        run = 0
        neg = s < 0
        done = z[e] == 0.0
        k = 0
        while not done:
            if k + 1 >= max_terms:
                failed = e
                break
            top = z[e]
            for a in num:
                top *= a + k
            bottom = k + 1.0
            for b in den:
                bottom *= b + k
            r = top / bottom
            t *= r
            y = t - comp
            tmp = s + y
            comp = (tmp - s) - y
            s = tmp
            if s < 0:
                neg = True
            # Geometric bound on the tail: |t| / (1 - ratio) while terms shrink.
            ratio = abs(r)
            if ratio < 1.0 and abs(t) < rel_tol * abs(s) * (1.0 - ratio):
                run += 1
                if run >= 3:
                    done = True
            else:
                run = 0
            if abs(s) > big or abs(t) > big:
                s /= big
                t /= big
                comp /= big
                scale += log_big
            k += 1
        negative[e] = neg
        partial[e] = s * np.exp(scale)
        sign[e] = np.sign(s)
        log_abs[e] = scale + np.log(abs(s)) if s != 0 else -np.inf
        if failed >= 0:
            break
    return log_abs, sign, negative, failed, partial


def _sum_series(num, den, z, log_t0, sign0, acc, name):
    """Sum a generalized hypergeometric-type series elementwise over ``z``.

    Returns ``(log|S|, sign(S), any_negative_partial_sum)``.
    """
    z = np.ascontiguousarray(z, dtype=float)
    log_t0 = np.ascontiguousarray(np.broadcast_to(log_t0, z.shape), dtype=float)
    sign0 = np.ascontiguousarray(np.broadcast_to(sign0, z.shape), dtype=float)
    log_abs, sign, negative, failed, partial = _pfq_kernel(
        np.asarray(num, dtype=float), np.asarray(den, dtype=float),
        z, log_t0, sign0, float(acc.rel_tol), int(acc.max_terms),
    )
    if failed >= 0:
        raise ConvergenceError(
            f"{name}: series not converged within {acc.max_terms} terms "
            f"(element {failed}, argument {z[failed]!r})",
            partial=float(partial[failed]),
        )
    return log_abs, sign, negative


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``.

    Scalars go through :func:`math.lgamma`, arrays through
    :func:`scipy.special.gammaln`.
    """
    if np.ndim(x) == 0:
        x = float(x)
        if not x > 0:
            raise DomainError(f"log_gamma requires x > 0, got {x}")
        return math.lgamma(x)
    x = np.asarray(x, dtype=float)
    if not np.all(x > 0):
        raise DomainError("log_gamma requires x > 0")
    return special.gammaln(x)


def _check_unit_interval(z, name):
    z = np.asarray(z, dtype=float)
    if np.any(np.isnan(z)) or np.any(z < 0):
        raise DomainError(f"{name}: argument must lie in [0, 1)")
    if np.any(z >= 1):
        raise DomainError(f"{name}: argument at or beyond the series boundary z = 1")
    return z


def _raw_2f1(a, b, c, z, acc):
    return _sum_series((a, b), (c,), z, 0.0, 1.0, acc, "2F1")


def log_hyp2f1(a, b, c, z, acc=DEFAULT_ACCURACY):
    """Gauss hypergeometric function ``2F1(a, b; c; z)`` in log form.

    Parameters
    ----------
    a, b : float
    c : float
        Must be positive.
    z : float or array_like
        Values in ``[0, 1)``.
    acc : SeriesAccuracy

    Returns
    -------
    log_abs, sign : ndarray
        ``log|2F1|`` and the sign of the value.

    Notes
    -----
    For ``z > EULER_THRESHOLD`` the Euler transformation
    ``2F1(a,b;c;z) = (1-z)^(c-a-b) 2F1(c-a, c-b; c; z)`` is applied; if the
    transformed series produces a negative partial sum for an element, that
    element is recomputed from the raw series with ``max_terms = 10**6``.
    The same larger budget is used when the transformed series itself needs
    more than ``acc.max_terms`` terms, which happens only very close to 1.
    """
    a, b, c = float(a), float(b), float(c)
    if not c > 0:
        raise DomainError(f"2F1 requires c > 0, got {c}")
    z = _check_unit_interval(z, "2F1")
    shape = z.shape
    z = z.ravel()
    log_abs = np.zeros(z.size)
    sign = np.ones(z.size)

    nonzero = z > 0
    euler = z > EULER_THRESHOLD
    raw = nonzero & ~euler
    if raw.any():
        la, sg, _ = _raw_2f1(a, b, c, z[raw], acc)
        log_abs[raw], sign[raw] = la, sg
    if euler.any():
        ze = z[euler]
        slow = SeriesAccuracy(acc.rel_tol, max(_FALLBACK_MAX_TERMS, acc.max_terms))
        try:
            la, sg, neg = _raw_2f1(c - a, c - b, c, ze, acc)
        except ConvergenceError:
            # Close to z = 1 the transformed terms decay only algebraically.
            la, sg, neg = _raw_2f1(c - a, c - b, c, ze, slow)
        la = la + (c - a - b) * np.log1p(-ze)
        if neg.any():
            la2, sg2, _ = _raw_2f1(a, b, c, ze[neg], slow)
            la[neg], sg[neg] = la2, sg2
        log_abs[euler], sign[euler] = la, sg
    return log_abs.reshape(shape), sign.reshape(shape)


def gauss_2f1(a, b, c, z, acc=DEFAULT_ACCURACY):
    """Scalar ``2F1(a, b; c; z)`` for ``0 <= z < 1``.

    Returns
    -------
    value : float
    log_value : float
        ``log|value|``; stays finite when ``value`` itself overflows.

    Examples
    --------
    >>> round(gauss_2f1(1, 1, 2, 0.5)[0], 10)
    1.3862943611
    """
    la, sg = log_hyp2f1(a, b, c, float(z), acc)
    la, sg = float(la), float(sg)
    with np.errstate(over="ignore"):
        return sg * math.exp(la) if la < 709.78 else sg * math.inf, la


def log_hyp1f1(a, b, z, acc=DEFAULT_ACCURACY):
    """Kummer's function ``1F1(a; b; z)`` in log form, ``b > 0``, ``z >= 0``.

    Returns ``(log|1F1|, sign)``.
    """
    a, b = float(a), float(b)
    if not b > 0:
        raise DomainError(f"1F1 requires b > 0, got {b}")
    z = np.asarray(z, dtype=float)
    if np.any(np.isnan(z)) or np.any(z < 0):
        raise DomainError("1F1: argument must be nonnegative")
    shape = z.shape
    z = z.ravel()
    log_abs, sign, _ = _sum_series((a,), (b,), z, 0.0, 1.0, acc, "1F1")
    return log_abs.reshape(shape), sign.reshape(shape)


def kummer_1f1(a, b, z, acc=DEFAULT_ACCURACY):
    """``1F1(a; b; z)`` as a float or array."""
    la, sg = log_hyp1f1(a, b, z, acc)
    out = sg * np.exp(la)
    return float(out) if np.ndim(out) == 0 else out


def _log_bessel_i_large(nu, x):
    # Exponentially scaled Bessel function from scipy for large arguments; past
    # its range, three terms of the Hankel expansion are exact to double precision.
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(special.ive(nu, x)) + x
    bad = ~np.isfinite(out)
    if bad.any():
        xb = x[bad]
        mu = 4.0 * nu * nu
        series = 1.0 - (mu - 1) / (8 * xb) + (mu - 1) * (mu - 9) / (2 * (8 * xb) ** 2)
        out[bad] = xb - 0.5 * np.log(2 * math.pi * xb) + np.log(series)
    return out


def log_bessel_i(nu, x, acc=DEFAULT_ACCURACY):
    """``log I_nu(x)`` for ``nu > -1`` and ``x >= 0``.

    For ``x < BESSEL_SERIES_MAX`` the series is summed from
    ``log((x/2)^(2k+nu) / (Gamma(k+nu+1) k!))`` so nothing overflows.  The
    series needs about ``x/2`` terms, so larger arguments use
    :func:`scipy.special.ive`, ``log I = log ive + x``.
    """
    nu = float(nu)
    if not nu > -1:
        raise DomainError(f"bessel_i requires nu > -1, got {nu}")
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0):
        raise DomainError("bessel_i: argument must be nonnegative")
    shape = x.shape
    x = x.ravel()
    out = np.empty(x.size)
    zero = x == 0
    out[zero] = 0.0 if nu == 0 else (-np.inf if nu > 0 else np.inf)
    large = x >= BESSEL_SERIES_MAX
    if large.any():
        out[large] = _log_bessel_i_large(nu, x[large])
    pos = ~zero & ~large
    if pos.any():
        # I_nu(x) = (x/2)^nu / Gamma(nu+1) * 0F1(; nu+1; x^2/4)
        half = x[pos] / 2.0
        log_t0 = nu * np.log(half) - math.lgamma(nu + 1.0)
        out[pos], _, _ = _sum_series((), (nu + 1.0,), half * half, log_t0, 1.0, acc, "bessel_i")
    return out.reshape(shape)


def bessel_i(nu, x, acc=DEFAULT_ACCURACY):
    """Modified Bessel function of the first kind, ``I_nu(x)``."""
    out = np.exp(log_bessel_i(nu, x, acc))
    return float(out) if np.ndim(out) == 0 else out


def laguerre(n, nu, x):
    """Generalized Laguerre polynomial ``L_n^nu(x)`` by forward recurrence.

    ``(k+1) L_{k+1} = (2k+1+nu-x) L_k - (k+nu) L_{k-1}`` with
    ``L_0 = 1`` and ``L_1 = 1 + nu - x``.
    """
    n = int(n)
    if n < 0:
        raise DomainError(f"laguerre degree must be nonnegative, got {n}")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return float(prev) if prev.ndim == 0 else prev
    cur = 1.0 + nu - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 + nu - x) * cur - (k + nu) * prev) / (k + 1)
    return float(cur) if np.ndim(cur) == 0 else cur


def log_negbin_pmf(u, phi, rho_j):
    """Log of ``Gamma(phi+u) / (Gamma(phi) u!) (1-rho_j)^phi rho_j^u``."""
    u = np.asarray(u, dtype=float)
    if not phi > 0:
        raise DomainError(f"negbin_pmf requires phi > 0, got {phi}")
    if not 0 < rho_j < 1:
        raise DomainError(f"negbin_pmf requires 0 < rho_j < 1, got {rho_j}")
    out = (
        special.gammaln(phi + u)
        - math.lgamma(phi)
        - special.gammaln(u + 1.0)
        + phi * math.log1p(-rho_j)
        + u * math.log(rho_j)
    )
    return float(out) if out.ndim == 0 else out


def negbin_pmf(u, phi, rho_j):
    """Negative-binomial probability of ``u`` failures (mean ``phi*rho_j/(1-rho_j)``)."""
    out = np.exp(log_negbin_pmf(u, phi, rho_j))
    return float(out) if np.ndim(out) == 0 else out
