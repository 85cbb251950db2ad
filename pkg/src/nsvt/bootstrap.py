"""Parametric bootstrap for CL and CLEM estimates.

Replicate ``b`` is simulated from ``numpy.random.SeedSequence(seed,
spawn_key=(b,))``, so growing ``B`` never changes earlier replicates and the
result does not depend on how replicates are spread over workers.
"""
import csv
import json
import math
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy import stats

from ._parallel import ordered_map
from .cl_estimate import ClOptions, fit_cl
from .clem import fit_clem
from .errors import DomainError, NonConvergenceError, NsvtError
from .model import NsvtParams, SeriesData, simulate_nsvt

__all__ = ["BootstrapResult", "parametric_bootstrap", "replicate_seed", "param_names"]

ESTIMATORS = ("CL", "CLEM")


def param_names(p):
    return [f"beta_{k + 1}" for k in range(p)] + ["sigma2", "nu", "rho"]


def replicate_seed(seed, b):
    """Seed sequence for replicate ``b`` under master seed ``seed``."""
    return np.random.SeedSequence(int(seed), spawn_key=(int(b),))


@dataclass
class BootstrapResult:
    """Bootstrap replicates and the intervals built from them.

    ``replicates`` has one row per replicate in the order
    ``(beta_1..beta_p, sigma2, nu, rho)``; rows of failed replicates are NaN.
    Intervals are ``(k, 2)`` arrays of ``(lower, upper)``.
    """

    estimate: np.ndarray
    replicates: np.ndarray
    se: np.ndarray
    ci_normal: np.ndarray
    ci_percentile: np.ndarray
    level: float
    failures: int
    estimator: str
    seed: int

    @property
    def B(self):
        return self.replicates.shape[0]

    @property
    def names(self):
        return param_names(self.replicates.shape[1] - 3)

    def to_csv(self, path):
        """One row per replicate; failed rows keep NaN estimates and ``converged=0``."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["replicate", *self.names, "converged"])
            for b, row in enumerate(self.replicates):
                ok = bool(np.all(np.isfinite(row)))
                writer.writerow([b, *(format(v, ".17g") for v in row), int(ok)])

    def summary(self):
        out = {
            "estimator": self.estimator,
            "B": self.B,
            "level": self.level,
            "seed": self.seed,
            "failures": self.failures,
            "parameters": {},
        }
        for k, name in enumerate(self.names):
            out["parameters"][name] = {
                "estimate": float(self.estimate[k]),
                "se": float(self.se[k]),
                "ci_normal": [float(v) for v in self.ci_normal[k]],
                "ci_percentile": [float(v) for v in self.ci_percentile[k]],
            }
        return out

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def _fit_replicate(b, fitted, X, estimator, seed, m, options):
    y = simulate_nsvt(fitted, X, seed=replicate_seed(seed, b))
    data = SeriesData(y, X)
    try:
        if estimator == "CL":
            result = fit_cl(data, ClOptions(m=m, **options))
        else:
            result = fit_clem(data, m=m, nu=fitted.nu, **options)
    except (NonConvergenceError, NsvtError, ArithmeticError):
        return None
    if not result.converged:
        return None
    return result.params.to_vector()


def parametric_bootstrap(
    fitted, X, B=500, level=0.95, estimator="CLEM", seed=0, m=1, workers=1, options=None
):
    """Standard errors and confidence intervals by simulating from ``fitted``.

    Parameters
    ----------
    fitted : NsvtParams
        Point estimate; also the centre of the normal intervals.
    X : ndarray
        Covariates reused for every simulated series.
    B : int
    level : float
        Nominal coverage of both interval types.
    estimator : {"CL", "CLEM"}
        CLEM replicates keep ``nu`` fixed at ``fitted.nu``.
    seed : int
    workers : int, optional
        Worker processes; ``None`` uses every available CPU.  The result
        is identical for any value.
    options : dict, optional
        Extra keyword arguments for :class:`ClOptions` or :func:`fit_clem`.

    Returns
    -------
    BootstrapResult
        Replicates that fail to converge are dropped from the summaries and
        counted in ``failures``.
    """
    if int(B) != B or B < 1:
        raise DomainError(f"B must be a positive integer, got {B}")
    if not 0 < level < 1:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    if estimator not in ESTIMATORS:
        raise DomainError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    if not isinstance(fitted, NsvtParams):
        raise DomainError("fitted must be an NsvtParams")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    job = partial(
        _fit_replicate,
        fitted=fitted,
        X=X,
        estimator=estimator,
        seed=seed,
        m=m,
        options=dict(options or {}),
    )
    rows = ordered_map(job, range(int(B)), workers)
    dim = fitted.p + 3
    reps = np.full((int(B), dim), np.nan)
    for b, row in enumerate(rows):
        if row is not None:
            reps[b] = row
    ok = np.all(np.isfinite(reps), axis=1)
    failures = int(B - ok.sum())
    if failures == B:
        raise NonConvergenceError("every bootstrap replicate failed")
    good = reps[ok]
    se = good.std(axis=0, ddof=1) if good.shape[0] > 1 else np.zeros(dim)
    z = stats.norm.ppf(0.5 + level / 2)
    est = fitted.to_vector()
    ci_normal = np.column_stack([est - z * se, est + z * se])
    alpha = 1 - level
    ci_percentile = np.quantile(good, [alpha / 2, 1 - alpha / 2], axis=0, method="inverted_cdf").T
    return BootstrapResult(
        estimate=est,
        replicates=reps,
        se=se,
        ci_normal=ci_normal,
        ci_percentile=ci_percentile,
        level=float(level),
        failures=failures,
        estimator=estimator,
        seed=int(seed),
    )


def covers(result, truth, name="rho", kind="percentile"):
    """Whether the interval for ``name`` contains ``truth``."""
    k = result.names.index(name)
    lo, hi = (result.ci_percentile if kind == "percentile" else result.ci_normal)[k]
    return bool(lo <= truth <= hi) and math.isfinite(lo)
