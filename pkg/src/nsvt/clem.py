"""Composite-likelihood EM for the NSVt model with ``nu`` held fixed.

Each pair ``(y_t, y_{t-i})`` is augmented with its latent precisions
``(Z_t, Z_{t-i})`` and the negative-binomial mixing count ``U`` that links
them.  The E-step needs three conditional expectations per pair, the M-step
is a weighted least-squares problem for ``(beta, sigma2)`` and a scalar
problem for ``rho`` that does not involve any special function.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import specfun
from .cl_estimate import (
    DEFAULT_RHO_GRID,
    FitResult,
    _check_design,
    fit_cl,
    maximize_pseudo,
    pair_index,
    pairwise_loglik,
)
from .errors import DegenerateDataError, DensityUnderflowError, DomainError
from .model import NsvtParams, _pair_core
from .optim import golden_section_max
from .specfun import DEFAULT_ACCURACY

__all__ = [
    "PairWeights",
    "ClemOptions",
    "e_step",
    "m_step_beta_sigma",
    "m_step_rho",
    "q_function",
    "q2",
    "q2_gradient",
    "clem_fit",
    "fit_clem",
]

RHO_FLOOR = 1e-6
RHO_CEIL = 1.0 - 1e-6


@dataclass(frozen=True)
class PairWeights:
    """E-step weights, one row per ``t = m+1..n`` and one column per lag.

    ``zeta1[k, i-1] = E(Z_t | y_t, y_{t-i})``,
    ``zeta2[k, i-1] = E(Z_{t-i} | y_t, y_{t-i})`` and
    ``tau[k, i-1] = E(U | y_t, y_{t-i})`` for ``t = m + 1 + k``.
    ``log_density`` holds the log pair densities used as divisors.
    """

    zeta1: np.ndarray
    zeta2: np.ndarray
    tau: np.ndarray
    log_density: np.ndarray

    @property
    def m(self):
        return self.zeta1.shape[1]

    @property
    def n(self):
        return self.zeta1.shape[0] + self.m


@dataclass(frozen=True)
class ClemOptions:
    """Settings for :func:`clem_fit`.

    Parameters
    ----------
    nu : float
        Degrees of freedom, held fixed for the whole run.
    m : int
    epsilon : float
    max_iter : int
    stopping : {"param_delta", "q_delta"}
        ``param_delta`` compares successive iterates in
        ``(beta, log sigma2, logit rho)``; ``q_delta`` compares
        ``Q(theta_new; theta_old)`` with ``Q(theta_old; theta_old)``.
    acceleration : {"rho_extrapolation", "none"}
        ``none`` is the plain EM iteration, which moves ``rho`` very slowly
        (contraction near 0.999 is typical) because the pairs carry little
        information about it.  ``rho_extrapolation`` extrapolates ``logit
        rho`` across two EM updates, refits ``(beta, sigma2)`` and keeps the
        step only if the pairwise log-likelihood does not drop, so ascent
        is preserved.
    """

    nu: float
    m: int = 1
    epsilon: float = 1e-6
    max_iter: int = 200
    stopping: str = "param_delta"
    acceleration: str = "rho_extrapolation"
    accuracy: object = DEFAULT_ACCURACY

    def __post_init__(self):
        if not self.nu > 0:
            raise DomainError(f"nu must be positive, got {self.nu}")
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"m must be a positive integer, got {self.m}")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be positive")
        if self.stopping not in ("param_delta", "q_delta"):
            raise DomainError(f"unknown stopping rule {self.stopping!r}")
        if self.acceleration not in ("rho_extrapolation", "none"):
            raise DomainError(f"unknown acceleration {self.acceleration!r}")


def e_step(params, data, m=1, acc=DEFAULT_ACCURACY):
    """Conditional expectations of the latent pair variables given each data pair.

    With ``r = rho^i``, ``a = (nu+1)/2``, ``v_k = 1 + (1-r) e_k^2/(nu sigma2)``
    and ``x = r / (v_1 v_2)``::

        zeta1 = 2 (1-r)^(nu/2+2) G(a) G(a+1) / (pi nu^2 sigma2 G(nu/2)^2)
                * 2F1(a, a+1; nu/2; x) / (v_1^(a+1) v_2^a f)
        tau   = 2 r (1-r)^(nu/2+1) G(a+1)^2 / (pi nu^2 sigma2 G(nu/2)^2)
                * 2F1(a+1, a+1; nu/2+1; x) / ((v_1 v_2)^(a+1) f)

    and ``zeta2`` swaps the exponents of ``v_1`` and ``v_2``.  Everything is
    assembled in logs and the pair density ``f`` is divided out last.

    Raises
    ------
    DensityUnderflowError
        If some ``f(y_t, y_{t-i})`` is zero in floating point.
    """
    nu, sigma2 = params.nu, params.sigma2
    resid = data.residuals(params.beta)
    t, s, lag = pair_index(data.n, m)
    r = params.rho ** lag.astype(float)
    log_f, v1, v2, x, log_F0 = _pair_core(resid[t], resid[s], r, sigma2, nu, acc)
    bad = np.flatnonzero(~np.isfinite(log_f))
    if bad.size:
        k = bad[0]
        pair = (int(t[k]) + 1, int(lag[k]))
        raise DensityUnderflowError(f"pair density underflows at (t, i) = {pair}", pair)

    a = (nu + 1) / 2
    phi = nu / 2
    log_v1, log_v2 = np.log(v1), np.log(v2)
    log_1mr = np.log1p(-r)
    log_common = math.log(2.0) - math.log(math.pi) - 2 * math.log(nu) - math.log(sigma2)
    log_common -= 2 * math.lgamma(phi)

    log_F2, _ = specfun.log_hyp2f1(a + 1, a + 1, phi + 1, x, acc)
    # Contiguous relation 2F1(a, a+1; phi; x) = 2F1(a, a; phi; x)
    # + (a x / phi) 2F1(a+1, a+1; phi+1; x); every term is positive.
    with np.errstate(divide="ignore"):
        log_F1 = np.logaddexp(log_F0, math.log(a / phi) + np.log(x) + log_F2)
    log_z = (phi + 2) * log_1mr + math.lgamma(a) + math.lgamma(a + 1) + log_F1 + log_common
    zeta1 = np.exp(log_z - (a + 1) * log_v1 - a * log_v2 - log_f)
    zeta2 = np.exp(log_z - a * log_v1 - (a + 1) * log_v2 - log_f)

    log_t = np.log(r) + (phi + 1) * log_1mr + 2 * math.lgamma(a + 1) + log_F2 + log_common
    tau = np.exp(log_t - (a + 1) * (log_v1 + log_v2) - log_f)

    shape = (data.n - m, m)
    return PairWeights(zeta1.reshape(shape), zeta2.reshape(shape), tau.reshape(shape),
                       log_f.reshape(shape))


def _observation_weights(weights, n):
    # Each y_t collects zeta1 from pairs where it is the later member and
    # zeta2 from pairs where it is the earlier one.
    t, s, _ = pair_index(n, weights.m)
    w = np.bincount(t, weights.zeta1.ravel(), minlength=n)
    w += np.bincount(s, weights.zeta2.ravel(), minlength=n)
    return w


def m_step_beta_sigma(weights, data, m=1):
    """Closed-form maximizer of the ``(beta, sigma2)`` part of Q.

    ``beta`` is weighted least squares on the stacked system of
    ``2 m (n-m)`` rows, which collapses to one row per observation with the
    summed pair weights.  ``sigma2`` is the weighted mean square residual
    over the ``2 m (n-m)`` stacked rows.

    Raises
    ------
    DegenerateDataError
        If the weighted design is rank deficient or the fit is perfect.
    """
    if weights.m != m or weights.n != data.n:
        raise DomainError("weights do not match the data length and order m")
    w = _observation_weights(weights, data.n)
    sw = np.sqrt(w)
    A = data.X * sw[:, None]
    b = data.y * sw
    beta, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < data.p:
        raise DegenerateDataError(f"weighted design has rank {rank} < {data.p}")
    resid = data.y - data.X @ beta
    n_rows = 2 * m * (data.n - m)
    sigma2 = math.fsum(w * resid**2) / n_rows
    scale = math.fsum(w * data.y**2) / n_rows
    if not sigma2 > 1e-14 * max(scale, 1e-300):
        raise DegenerateDataError("residuals vanish: sigma2 would be zero (perfect fit)")
    return beta, sigma2


def _lag_sums(weights):
    lags = np.arange(1, weights.m + 1, dtype=float)
    T = weights.tau.sum(axis=0)
    S = (weights.zeta1 + weights.zeta2).sum(axis=0)
    N = float(weights.zeta1.shape[0])
    return lags, T, S, N


def q2(rho, weights, nu):
    """The ``rho`` part of Q summed over pairs (``nu`` fixed)."""
    lags, T, S, N = _lag_sums(weights)
    r = rho**lags
    return float(
        np.sum(-(2 * T + nu / 2 * N) * np.log1p(-r) - nu * S / (2 * (1 - r)) + T * lags * math.log(rho))
    )


def q2_gradient(rho, weights, nu):
    """Derivative of :func:`q2` in ``rho``, obtained by differentiating it term by term."""
    lags, T, S, N = _lag_sums(weights)
    r = rho**lags
    dr = lags * rho ** (lags - 1)
    return float(np.sum(dr / (1 - r) * (2 * T + nu / 2 * N - nu * S / (2 * (1 - r))) + lags * T / rho))


def _quadratic_root(T, S, N, nu):
    # Stationarity for m = 1 with denominators cleared:
    # (2T + nu N) rho^2 - nu (N - S) rho - 2T = 0.
    A = 2 * T + nu * N
    B = -nu * (N - S)
    C = -2 * T
    disc = B * B - 4 * A * C
    if not (A > 0 and disc >= 0):
        return None
    root = math.sqrt(disc)
    rho = (-B + root) / (2 * A) if B <= 0 else (2 * C) / (-B - root)
    return rho if 0 < rho < 1 else None


def _golden(weights, nu):
    rho, _ = golden_section_max(lambda r: q2(r, weights, nu), RHO_FLOOR, RHO_CEIL)
    if rho <= RHO_FLOOR * (1 + 1e-9) or rho >= RHO_CEIL - 1e-12:
        warnings.warn(f"Q is maximized at the boundary; rho clamped to {rho:g}", RuntimeWarning)
    return min(max(rho, RHO_FLOOR), RHO_CEIL)


def m_step_rho(weights, nu, m=1):
    """Maximize the ``rho`` part of Q over ``(0, 1)``.

    For ``m = 1`` the stationarity condition is a quadratic with exactly one
    positive root whenever some ``tau > 0``.  For larger ``m`` the roots of
    the derivative are bracketed on a grid and polished with Brent's method.
    Without an interior maximum, golden-section search on Q picks the
    boundary value, clamped to ``[1e-6, 1 - 1e-6]`` with a warning.
    """
    if weights.m != m:
        raise DomainError("weights do not match the order m")
    if not all(np.all(np.isfinite(a)) for a in (weights.zeta1, weights.zeta2, weights.tau)):
        raise DomainError("E-step weights must be finite")
    if m == 1:
        _, T, S, N = _lag_sums(weights)
        rho = _quadratic_root(float(T[0]), float(S[0]), N, nu)
        if rho is not None and q2_gradient(rho * (1 - 1e-7), weights, nu) >= -1e-8 * N:
            return min(max(rho, RHO_FLOOR), RHO_CEIL)
        return _golden(weights, nu)

    grid = np.linspace(RHO_FLOOR, RHO_CEIL, 401)
    g = np.array([q2_gradient(r, weights, nu) for r in grid])
    best = None
    for k in np.flatnonzero((g[:-1] > 0) & (g[1:] <= 0)):
        root = optimize.brentq(q2_gradient, grid[k], grid[k + 1], args=(weights, nu), xtol=1e-14)
        val = q2(root, weights, nu)
        if best is None or val > best[0]:
            best = (val, root)
    if best is None:
        return _golden(weights, nu)
    return best[1]


def q_function(params, weights, data):
    """``Q(theta; theta_r)`` up to terms free of ``theta``, with ``nu`` taken from ``params``.

    ``weights`` must come from :func:`e_step` at ``theta_r``.
    """
    m = weights.m
    resid = data.residuals(params.beta)
    t, s, _ = pair_index(data.n, m)
    z1 = weights.zeta1.ravel()
    z2 = weights.zeta2.ravel()
    sigma2 = params.sigma2
    q1 = -z1.size * math.log(sigma2) - math.fsum(z1 * resid[t] ** 2 + z2 * resid[s] ** 2) / (2 * sigma2)
    return q1 + q2(params.rho, weights, params.nu)


def _working_vector(params):
    return np.concatenate(
        [params.beta, [math.log(params.sigma2), math.log(params.rho / (1 - params.rho))]]
    )


def _from_working(u, nu):
    rho = 1.0 / (1.0 + math.exp(-min(max(u[-1], -700.0), 700.0)))
    return NsvtParams(u[:-2], math.exp(u[-2]), nu, min(max(rho, RHO_FLOOR), RHO_CEIL))


def _em_map(theta, data, m, acc):
    """One EM update; returns ``(new, loglik(theta), Q(new; theta), Q(theta; theta))``."""
    weights = e_step(theta, data, m, acc)
    beta, sigma2 = m_step_beta_sigma(weights, data, m)
    rho = m_step_rho(weights, theta.nu, m)
    new = NsvtParams(beta, sigma2, theta.nu, rho)
    return (
        new,
        math.fsum(weights.log_density.ravel()),
        q_function(new, weights, data),
        q_function(theta, weights, data),
    )


def _refit_beta_sigma(theta, data, m, acc, max_steps=20, tol=1e-10):
    # Conditional maximization with rho held fixed: each pass is an E-step
    # followed by the closed-form (beta, sigma2) update, so the pairwise
    # log-likelihood cannot decrease.
    for _ in range(max_steps):
        weights = e_step(theta, data, m, acc)
        beta, sigma2 = m_step_beta_sigma(weights, data, m)
        new = theta.replace(beta=beta, sigma2=sigma2)
        change = np.max(np.abs(_working_vector(new) - _working_vector(theta)))
        theta = new
        if change < tol:
            break
    return theta


def _extrapolated_step(theta, first, data, m, acc):
    """Squared extrapolation of ``logit rho`` across two EM updates.

    ``first`` is ``_em_map(theta)``.  Only ``rho`` is extrapolated: it
    carries the slow EM mode, while ``(beta, sigma2)`` have fast,
    oscillating modes that a shared step length would amplify.  After the
    jump ``(beta, sigma2)`` are re-equilibrated with ``rho`` fixed, and the
    candidate is kept only if its pairwise log-likelihood is at least that
    of ``theta``; otherwise the step length backs off towards the plain
    double EM update.
    """
    th1, ll0 = first[0], first[1]
    th2 = _em_map(th1, data, m, acc)[0]
    u0, u1, u2 = (_working_vector(p) for p in (theta, th1, th2))
    r = u1[-1] - u0[-1]
    v = u2[-1] - u1[-1] - r
    if v == 0.0:
        return th2
    alpha = min(-abs(r) / abs(v), -1.0)
    while alpha < -1.0:
        u = u2.copy()
        u[-1] = u0[-1] - 2 * alpha * r + alpha**2 * v
        try:
            cand = _refit_beta_sigma(_from_working(u, theta.nu), data, m, acc)
            if pairwise_loglik(cand, data, m, acc) >= ll0:
                return cand
        except (ArithmeticError, DomainError, DegenerateDataError):
            pass
        alpha = (alpha - 1.0) / 2.0
        if alpha > -1.01:
            break
    return th2


def clem_fit(data, opts, init):
    """Run the composite-likelihood EM iteration from ``init``.

    ``init.nu`` is replaced by ``opts.nu``.  Each trace entry records the
    pairwise log-likelihood at the iterate; ``extra["q_trace"]`` records
    ``(Q(theta_new; theta_old), Q(theta_old; theta_old))`` for every EM
    update whose starting point is a recorded iterate.

    With ``opts.acceleration == "rho_extrapolation"`` one outer iteration
    is a monotone extrapolation cycle: two EM updates, a jump in ``rho`` and
    a refit of ``(beta, sigma2)``.  The stopping rules compare successive
    recorded iterates either way.

    Returns
    -------
    FitResult
        ``converged`` is false when ``max_iter`` is exhausted; the iterate
        with the highest pairwise log-likelihood is returned in that case.
    """
    m, nu, acc = opts.m, float(opts.nu), opts.accuracy
    if init.p != data.p:
        raise DomainError(f"init has {init.p} coefficients, data have {data.p} covariates")
    if data.n <= m + data.p:
        raise DomainError(f"need n > m + p, got n={data.n}, m={m}, p={data.p}")
    theta = init.replace(nu=nu)
    trace, q_trace = [], []
    converged = False
    message = "maximum iterations reached"
    it = 0
    for it in range(opts.max_iter):
        first = _em_map(theta, data, m, acc)
        new, ll, q_new, q_old = first
        trace.append((it, ll, theta))
        q_trace.append((q_new, q_old))
        if opts.acceleration == "rho_extrapolation":
            new = _extrapolated_step(theta, first, data, m, acc)
        if opts.stopping == "param_delta":
            delta = float(np.linalg.norm(_working_vector(new) - _working_vector(theta)))
        else:
            delta = abs(q_new - q_old)
        theta = new
        if delta < opts.epsilon:
            converged, message = True, f"{opts.stopping} below epsilon"
            break
    final = pairwise_loglik(theta, data, m, acc)
    trace.append((it + 1, final, theta))
    best_it, best_obj, best = max(trace, key=lambda e: (e[1], e[0]))
    if converged:
        best_it, best_obj, best = trace[-1]
    return FitResult(
        params=best,
        objective=best_obj,
        trace=trace,
        converged=converged,
        method="CLEM",
        n_iter=it + 1,
        message=message,
        extra={"q_trace": q_trace},
    )


def fit_clem(data, m=1, nu=None, nu_source="pseudo", init=None, rho_grid=DEFAULT_RHO_GRID, **options):
    """Estimate ``nu`` (unless given) and then run :func:`clem_fit`.

    Parameters
    ----------
    nu : float, optional
        Known degrees of freedom.  Otherwise taken from the Student-t
        pseudo-fit (``nu_source="pseudo"``) or from the pairwise likelihood
        fit (``nu_source="cl"``).
    init : NsvtParams, optional
        Starting point.  By default ``beta`` and ``sigma2`` come from the
        pseudo-fit and ``rho`` is the point of ``rho_grid`` with the highest
        pairwise log-likelihood (ties to the smaller ``rho``).
    **options
        Forwarded to :class:`ClemOptions`.
    """
    _check_design(data.X)
    source = None
    if init is None or nu is None:
        beta0, s20, nu_pseudo = maximize_pseudo(data)
    if nu is None:
        if nu_source == "pseudo":
            nu = nu_pseudo
        elif nu_source == "cl":
            nu = fit_cl(data).params.nu
        else:
            raise DomainError(f"unknown nu_source {nu_source!r}")
        source = nu_source
    opts = ClemOptions(nu=nu, m=m, **options)
    if init is None:
        acc = opts.accuracy
        scored = [
            (pairwise_loglik(NsvtParams(beta0, s20, nu, rho), data, m, acc), -rho)
            for rho in rho_grid
        ]
        _, neg_rho = max(scored)
        init = NsvtParams(beta0, s20, nu, -neg_rho)
    result = clem_fit(data, opts, init)
    result.extra["nu_source"] = source or "fixed"
    return result
