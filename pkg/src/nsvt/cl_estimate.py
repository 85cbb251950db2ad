"""Pairwise (composite) likelihood estimation.

The order-``m`` objective sums the log joint density over every pair
``(y_t, y_{t-i})`` with ``t = m+1..n`` and ``i = 1..m``.  Starting values
come from a Student-t regression fitted by maximum pseudo-likelihood, which
ignores the serial dependence.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ConvergenceError, DegenerateDataError, DomainError, NonConvergenceError
from .model import NsvtParams, _pair_core
from .optim import lbfgs
from .specfun import DEFAULT_ACCURACY

__all__ = [
    "ClOptions",
    "FitResult",
    "pair_index",
    "pairwise_loglik",
    "student_t_pseudo_loglik",
    "maximize_pseudo",
    "fit_cl",
]

DEFAULT_RHO_GRID = tuple(np.round(np.arange(1, 10) / 10.0, 1))

# Working bounds on log(nu) for the pseudo-likelihood; Gaussian-looking data
# would otherwise send nu to infinity.
_LOG_NU_BOUNDS = (math.log(0.05), math.log(1000.0))


@dataclass(frozen=True)
class ClOptions:
    """Settings for :func:`fit_cl`.

    Parameters
    ----------
    m : int
        Pairwise order (largest lag).
    rho_grid : tuple of float
        Candidate starting values for ``rho``.
    max_iter : int
    grad_tol : float
        Gradient tolerance on the per-pair objective.
    ftol : float
        Relative decrease below which the optimizer stops.  Series
        truncation leaves about ``1e-6`` of noise in finite-difference
        gradients, so this is usually the criterion that fires.
    n_starts : int
        How many of the best grid points (by objective at the pseudo-fit)
        are refined.  ``None`` refines every grid point.
    """

    m: int = 1
    rho_grid: tuple = DEFAULT_RHO_GRID
    max_iter: int = 500
    grad_tol: float = 1e-6
    ftol: float = 1e-10
    n_starts: int | None = 2
    accuracy: object = DEFAULT_ACCURACY

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"m must be a positive integer, got {self.m}")
        grid = tuple(float(r) for r in self.rho_grid)
        if not grid or not all(0 < r < 1 for r in grid):
            raise DomainError("rho_grid must be nonempty with values in (0, 1)")
        object.__setattr__(self, "rho_grid", grid)
        if self.max_iter < 1 or not self.grad_tol > 0:
            raise DomainError("max_iter and grad_tol must be positive")
        if self.n_starts is not None and self.n_starts < 1:
            raise DomainError("n_starts must be positive")


@dataclass
class FitResult:
    """Outcome of a CL or CLEM fit.

    ``trace`` holds ``(iteration, objective, NsvtParams)`` tuples.  For CLEM
    the objective is the pairwise log-likelihood; the Q values are kept in
    ``extra["q_trace"]``.
    """

    params: NsvtParams
    objective: float
    trace: list
    converged: bool
    method: str
    n_iter: int = 0
    message: str = ""
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "method": self.method,
            "params": self.params.as_dict(),
            "objective": self.objective,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "message": self.message,
            "trace": [
                {"iteration": it, "objective": obj, "params": p.as_dict()}
                for it, obj, p in self.trace
            ],
        }


def pair_index(n, m):
    """Indices of the pairs entering the order-``m`` composite likelihood.

    Returns ``(t, s, lag)`` with ``s = t - lag``, ordered by ``t`` then lag
    (0-based, ``t = m..n-1``).
    """
    n, m = int(n), int(m)
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    if n <= m:
        raise DomainError(f"need n > m, got n={n}, m={m}")
    t = np.repeat(np.arange(m, n), m)
    lag = np.tile(np.arange(1, m + 1), n - m)
    return t, t - lag, lag


def _pair_logs(params, resid, m, acc):
    t, s, lag = pair_index(resid.size, m)
    r = params.rho ** lag.astype(float)
    log_f = _pair_core(resid[t], resid[s], r, params.sigma2, params.nu, acc)[0]
    return log_f


def pairwise_loglik(params, data, m=1, acc=DEFAULT_ACCURACY):
    """Order-``m`` log pairwise likelihood.

    The sum uses :func:`math.fsum`, so the result does not depend on the
    order of the pairs.  Returns ``-inf`` if any pair density underflows.
    """
    if params.p != data.p:
        raise DomainError(f"beta has length {params.p}, data have {data.p} covariates")
    log_f = _pair_logs(params, data.residuals(params.beta), m, acc)
    if not np.all(np.isfinite(log_f)):
        return -math.inf
    return math.fsum(log_f)


def student_t_pseudo_loglik(beta, sigma2, nu, data):
    """Student-t regression log-likelihood that treats observations as independent.

    Additive constants (``-n/2 log pi``) are dropped.
    """
    if not sigma2 > 0 or not nu > 0:
        raise DomainError("sigma2 and nu must be positive")
    resid = data.residuals(beta)
    n = data.n
    return n * (
        math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2) - 0.5 * math.log(sigma2) - 0.5 * math.log(nu)
    ) - (nu + 1) / 2 * math.fsum(np.log1p(resid**2 / (nu * sigma2)))


def _check_design(X):
    zero = np.flatnonzero(~np.any(X != 0, axis=0))
    if zero.size:
        raise DegenerateDataError(f"covariate column(s) {zero.tolist()} are identically zero")


def _ols(X, y):
    XtX = X.T @ X
    Xty = X.T @ y
    if np.linalg.matrix_rank(X) < X.shape[1]:
        warnings.warn("design matrix is rank deficient; using ridge penalty 1e-8", RuntimeWarning)
        XtX = XtX + 1e-8 * np.eye(X.shape[1])
    return np.linalg.solve(XtX, Xty)


def maximize_pseudo(data, nu0=4.0, max_iter=500):
    """Maximize the Student-t pseudo-likelihood.

    Starts from OLS for ``beta``, the moment estimate
    ``sigma2 = var(resid) (nu0 - 2) / nu0`` and ``nu = nu0``, and runs
    L-BFGS with the analytic gradient in ``(beta, log sigma2, log nu)``.

    Returns
    -------
    beta, sigma2, nu
    """
    X, y = data.X, data.y
    n, p = data.n, data.p
    beta = _ols(X, y)
    resid = y - X @ beta
    var = float(np.mean(resid**2))
    if not var > 0:
        raise DegenerateDataError("OLS residuals are identically zero")
    x0 = np.concatenate([beta, [math.log(var * (nu0 - 2) / nu0), math.log(nu0)]])

    def unpack(x):
        return x[:p], math.exp(x[p]), math.exp(x[p + 1])

    def negloglik(x):
        if not _LOG_NU_BOUNDS[0] <= x[p + 1] <= _LOG_NU_BOUNDS[1]:
            return math.inf
        b, s2, nu = unpack(x)
        return -student_t_pseudo_loglik(b, s2, nu, data) / n

    def grad(x):
        b, s2, nu = unpack(x)
        e = y - X @ b
        q = e**2 / (nu * s2)
        w = (nu + 1) / (nu * s2 + e**2)
        g_beta = X.T @ (w * e)
        g_ls2 = -0.5 * n + 0.5 * (nu + 1) * np.sum(q / (1 + q))
        g_nu = (
            n * (0.5 * special.digamma((nu + 1) / 2) - 0.5 * special.digamma(nu / 2) - 0.5 / nu)
            - 0.5 * np.sum(np.log1p(q))
            + 0.5 * (nu + 1) / nu * np.sum(q / (1 + q))
        )
        return -np.concatenate([g_beta, [g_ls2, g_nu * nu]]) / n

    res = lbfgs(negloglik, x0, grad=grad, max_iter=max_iter, grad_tol=1e-9, ftol=1e-15)
    b, s2, nu = unpack(res.x)
    return np.array(b), s2, nu


def _pack(params):
    return np.concatenate(
        [
            params.beta,
            [math.log(params.sigma2), math.log(params.nu), math.log(params.rho / (1 - params.rho))],
        ]
    )


def _unpack(x, p):
    rho = 1.0 / (1.0 + math.exp(-x[p + 2]))
    return NsvtParams(x[:p], math.exp(x[p]), math.exp(x[p + 1]), rho)


def fit_cl(data, opts=None):
    """Maximum pairwise-likelihood estimate.

    The Student-t pseudo-fit supplies ``beta, sigma2, nu``; every ``rho`` on
    ``opts.rho_grid`` is scored at those values and the best ``n_starts``
    are refined by L-BFGS over ``(beta, log sigma2, log nu, logit rho)``.
    The highest final objective wins, ties going to the smaller starting
    ``rho``.

    Raises
    ------
    DegenerateDataError
        If a covariate column is identically zero.
    NonConvergenceError
        If no start converges; the best attempt is attached.
    """
    opts = opts or ClOptions()
    m, p, acc = opts.m, data.p, opts.accuracy
    _check_design(data.X)
    if data.n <= m + p:
        raise DomainError(f"need n > m + p, got n={data.n}, m={m}, p={p}")
    n_pairs = m * (data.n - m)
    beta0, s20, nu0 = maximize_pseudo(data)

    def negobj(x):
        try:
            params = _unpack(x, p)
            return -pairwise_loglik(params, data, m, acc) / n_pairs
        except (ConvergenceError, DomainError, OverflowError):
            return math.inf

    scored = []
    for rho in opts.rho_grid:
        start = NsvtParams(beta0, s20, nu0, rho)
        scored.append((negobj(_pack(start)), rho, start))
    scored.sort(key=lambda item: (item[0], item[1]))
    if opts.n_starts is not None:
        scored = scored[: opts.n_starts]

    attempts = []
    for _, rho, start in scored:
        res = lbfgs(
            negobj, _pack(start), max_iter=opts.max_iter, grad_tol=opts.grad_tol, ftol=opts.ftol
        )
        if math.isfinite(res.fun):
            attempts.append((not res.converged, res.fun, rho, res))
    if not attempts:
        raise NonConvergenceError("pairwise likelihood is not finite at any start")
    _, _, rho_start, res = min(attempts, key=lambda a: a[:3])
    trace = [(it, -f * n_pairs, _unpack(x, p)) for it, f, x in res.trace]
    result = FitResult(
        params=_unpack(res.x, p),
        objective=-res.fun * n_pairs,
        trace=trace,
        converged=res.converged,
        method="CL",
        n_iter=res.n_iter,
        message=res.message,
        extra={"rho_start": rho_start, "pseudo": {"beta": beta0.tolist(), "sigma2": s20, "nu": nu0}},
    )
    if not result.converged:
        raise NonConvergenceError(f"no start converged: {res.message}", result)
    return result
