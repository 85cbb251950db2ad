"""Model checks and the Monte Carlo simulation study.

``pit`` maps observations through the fitted Student-t marginal;
``simstudy`` repeats simulate-and-fit over a design grid and returns a long
table that can go straight to a plotting tool.
"""
import itertools
import math
from functools import partial

import numpy as np
import pandas as pd

from ._parallel import ordered_map
from .cl_estimate import ClOptions, fit_cl
from .clem import fit_clem
from .errors import DomainError, NonConvergenceError, NsvtError
from .model import NsvtParams, SeriesData, simulate_nsvt, student_t_cdf

__all__ = [
    "pit",
    "rel_l2_error",
    "squared_residual_acf",
    "arma11_covariates",
    "study_covariates",
    "expand_design",
    "simstudy",
    "DESIGN_KEYS",
]

DESIGN_KEYS = ("n", "nu", "rho", "p", "sigma2")
ARMA_BURN_IN = 200


def pit(data, params):
    """Probability integral transform ``F(y_t; x_t' beta, sigma2, nu)``."""
    mu = data.X @ params.beta
    return np.asarray(student_t_cdf(data.y, mu, params.sigma2, params.nu), dtype=float).reshape(-1)


def rel_l2_error(beta_hat, beta_true):
    """``||beta_hat - beta||^2 / ||beta||^2``."""
    beta_hat = np.asarray(beta_hat, dtype=float).reshape(-1)
    beta_true = np.asarray(beta_true, dtype=float).reshape(-1)
    if beta_hat.shape != beta_true.shape:
        raise DomainError(f"length mismatch: {beta_hat.size} vs {beta_true.size}")
    denom = float(beta_true @ beta_true)
    if denom == 0.0:
        raise DomainError("beta_true must not be all zeros")
    d = beta_hat - beta_true
    return float(d @ d) / denom


def squared_residual_acf(data, params, max_lag=10):
    """Sample autocorrelation of squared standardized residuals at lags ``1..max_lag``.

    Volatility clustering left unexplained shows up as positive values.
    """
    e2 = (data.residuals(params.beta) ** 2) / params.sigma2
    e2 = e2 - e2.mean()
    denom = float(e2 @ e2)
    if denom == 0.0:
        return np.zeros(max_lag)
    return np.array([float(e2[k:] @ e2[:-k]) / denom for k in range(1, max_lag + 1)])


def arma11_covariates(n, ar, ma, rng, burn_in=ARMA_BURN_IN):
    """Independent zero-mean ARMA(1,1) columns with standard normal innovations.

    ``ar`` and ``ma`` give one coefficient per column; the first ``burn_in``
    steps are discarded.
    """
    ar = np.asarray(ar, dtype=float)
    ma = np.asarray(ma, dtype=float)
    total = int(n) + int(burn_in)
    eps = rng.standard_normal((total, ar.size))
    x = np.zeros((total, ar.size))
    x[0] = eps[0]
    for t in range(1, total):
        x[t] = ar * x[t - 1] + eps[t] + ma * eps[t - 1]
    return x[burn_in:]


def study_covariates(p, seed):
    """Coefficients fixed for every cell with ``p`` covariates.

    Returns ``(ar, ma, beta)``: ARMA coefficients from U(0.3, 0.7) and
    regression coefficients from U(-1, 1).
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0, int(p))))
    ar = rng.uniform(0.3, 0.7, p)
    ma = rng.uniform(0.3, 0.7, p)
    beta = rng.uniform(-1.0, 1.0, p)
    return ar, ma, beta


def expand_design(design):
    """Normalize a design to a list of cells.

    Accepts a list of dicts (one per cell) or a dict of lists (expanded as a
    Cartesian product in key order ``n, nu, rho, p, sigma2``).
    """
    if isinstance(design, dict):
        values = [list(np.atleast_1d(design[k])) for k in DESIGN_KEYS]
        cells = [dict(zip(DESIGN_KEYS, combo)) for combo in itertools.product(*values)]
    else:
        cells = [dict(c) for c in design]
    if not cells:
        raise DomainError("design must contain at least one cell")
    out = []
    for c in cells:
        missing = [k for k in DESIGN_KEYS if k not in c]
        if missing:
            raise DomainError(f"design cell {c} lacks {missing}")
        out.append(
            {"n": int(c["n"]), "nu": float(c["nu"]), "rho": float(c["rho"]),
             "p": int(c["p"]), "sigma2": float(c["sigma2"])}
        )
    return out


def _run_estimator(name, data, cell, m, clem_nu):
    if name == "CL":
        return fit_cl(data, ClOptions(m=m))
    nu = cell["nu"] if clem_nu == "known" else None
    return fit_clem(data, m=m, nu=nu)


def _one_replicate(task, seed, estimators, m, clem_nu):
    cell_id, cell, rep = task
    ar, ma, beta = study_covariates(cell["p"], seed)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1, cell_id, rep)))
    X = arma11_covariates(cell["n"], ar, ma, rng)
    params = NsvtParams(beta, cell["sigma2"], cell["nu"], cell["rho"])
    y = simulate_nsvt(params, X, seed=rng)
    data = SeriesData(y, X)
    rows = []
    for name in estimators:
        try:
            result = _run_estimator(name, data, cell, m, clem_nu)
            ok = bool(result.converged)
            est = result.params
        except (NonConvergenceError, NsvtError, ArithmeticError):
            ok, est = False, None
        metrics = {"converged": float(ok)}
        if est is not None:
            metrics.update(
                rel_l2_error=rel_l2_error(est.beta, beta),
                sigma2=est.sigma2,
                nu=est.nu,
                rho=est.rho,
            )
        else:
            metrics.update(rel_l2_error=math.nan, sigma2=math.nan, nu=math.nan, rho=math.nan)
        for metric, value in metrics.items():
            rows.append({**cell, "replicate": rep, "estimator": name, "metric": metric,
                         "value": float(value)})
    return rows


def simstudy(design, replicates, estimators=("CL", "CLEM"), seed=0, m=1, clem_nu="known",
             workers=1):
    """Monte Carlo study of the estimators over a design grid.

    For each cell the covariates are independent zero-mean ARMA(1,1)
    processes.  The ARMA coefficients and ``beta`` are drawn once per
    covariate count ``p`` and then held fixed; covariate and response paths
    are redrawn for every replicate.

    Parameters
    ----------
    design : list of dict or dict of lists
        Cells with keys ``n, nu, rho, p, sigma2``.
    replicates : int
    estimators : iterable of {"CL", "CLEM"}
    seed : int
    clem_nu : {"known", "pseudo"}
        CLEM uses the cell's true ``nu`` or the Student-t pseudo-fit.
    workers : int, optional

    Returns
    -------
    pandas.DataFrame
        Long format with columns ``n, nu, rho, p, sigma2, replicate,
        estimator, metric, value``.  Failed fits appear with
        ``converged = 0`` and NaN estimates.
    """
    if int(replicates) != replicates or replicates < 1:
        raise DomainError(f"replicates must be a positive integer, got {replicates}")
    estimators = tuple(estimators)
    if not estimators or any(e not in ("CL", "CLEM") for e in estimators):
        raise DomainError(f"estimators must be drawn from ('CL', 'CLEM'), got {estimators}")
    if clem_nu not in ("known", "pseudo"):
        raise DomainError(f"clem_nu must be 'known' or 'pseudo', got {clem_nu!r}")
    cells = expand_design(design)
    tasks = [(k, c, r) for k, c in enumerate(cells) for r in range(int(replicates))]
    job = partial(_one_replicate, seed=seed, estimators=estimators, m=m, clem_nu=clem_nu)
    rows = [row for chunk in ordered_map(job, tasks, workers) for row in chunk]
    columns = [*DESIGN_KEYS, "replicate", "estimator", "metric", "value"]
    return pd.DataFrame(rows, columns=columns)


def summarize(table, metric, stat="median", truth=None):
    """Per-cell, per-estimator summary of one metric (optionally ``|value - truth|``)."""
    sub = table[table["metric"] == metric].copy()
    if truth is not None:
        sub["value"] = (sub["value"] - truth).abs()
    keys = [*DESIGN_KEYS, "estimator"]
    return sub.groupby(keys)["value"].agg(stat).reset_index()
