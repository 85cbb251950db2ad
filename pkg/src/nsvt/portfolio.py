"""Market-neutral pair portfolios from NSVt factor regressions.

The workflow reads intraday stock and sector-ETF returns, cuts them into
rolling windows of whole trading days, standardizes each window with its own
training statistics, regresses each stock on the factors, and picks weights
for the two stocks that cancel the exposure to a factor.  Each window is
then scored on the trading days that follow it.
"""
import csv
import datetime as dt
import json
import math
import os
import sys
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ._parallel import ordered_map
from .bootstrap import parametric_bootstrap
from .cl_estimate import ClOptions, fit_cl
from .clem import fit_clem
from .errors import DegenerateDataError, DomainError, InfeasibleError
from .model import SeriesData
from .serialize import dumps, fmt

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ReturnPanel",
    "WindowPlan",
    "PortfolioSolution",
    "PipelineConfig",
    "load_returns",
    "make_window_plan",
    "standardize",
    "fit_factor_regressions",
    "optimize_portfolio",
    "evaluate_portfolio",
    "load_config",
    "run_pipeline",
]

SESSION = ("09:30", "15:30")


@dataclass
class ReturnPanel:
    """Aligned returns, one row per timestamp and one column per symbol.

    ``dropped`` counts input rows discarded for missing values.
    """

    timestamps: np.ndarray
    returns: np.ndarray
    labels: list
    dropped: int = 0

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=float)
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        if self.returns.ndim != 2 or self.returns.shape != (self.timestamps.size, len(self.labels)):
            raise DomainError("returns must be (n_timestamps, n_labels)")
        if self.timestamps.size > 1 and not np.all(np.diff(self.timestamps) > np.timedelta64(0)):
            raise DomainError("timestamps must be strictly increasing")

    @property
    def n(self):
        return self.timestamps.size

    def columns(self, names):
        idx = [self.labels.index(s) for s in names]
        return self.returns[:, idx]

    def rows(self, start, end):
        return ReturnPanel(self.timestamps[start:end], self.returns[start:end], list(self.labels))


@dataclass
class WindowPlan:
    """Row ranges ``[start, end)`` of every training window and the evaluation window after it."""

    training: list
    evaluation: list
    days: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.training) != len(self.evaluation):
            raise DomainError("each training window needs one evaluation window")
        for (a, b), (c, d) in zip(self.training, self.evaluation):
            if not (0 <= a < b <= c < d):
                raise DomainError(f"bad window: training {(a, b)}, evaluation {(c, d)}")

    def __len__(self):
        return len(self.training)

    @property
    def counts(self):
        return [(b - a, d - c) for (a, b), (c, d) in zip(self.training, self.evaluation)]


@dataclass
class PortfolioSolution:
    """Weights for ``M`` stocks; ``objective`` is the training-period cumulative return."""

    weights: np.ndarray
    objective: float
    mode: str
    factor_index: object
    binding: list = field(default_factory=list)
    neutrality_residual: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)


def _parse_time(text, lineno):
    try:
        return dt.datetime.fromisoformat(text.strip())
    except ValueError:
        raise DomainError(f"line {lineno}: cannot parse timestamp {text!r}") from None


def _parse_clock(text):
    hh, mm = text.split(":")
    return dt.time(int(hh), int(mm))


def load_returns(path, schema="return", session=SESSION):
    """Read a wide CSV ``timestamp,<sym1>,<sym2>,...`` into a :class:`ReturnPanel`.

    Parameters
    ----------
    schema : {"return", "bar"}
        ``bar`` files hold prices and are converted to simple returns
        ``p_t / p_{t-1} - 1`` within each trading day (the first bar of a
        day has no return).  ``return`` files are used as is.
    session : (str, str) or None
        Keep rows whose clock time lies in ``[start, end]``.

    Raises
    ------
    DomainError
        On a malformed row (the message carries the line number) or
        timestamps that are not strictly increasing.
    """
    if schema not in ("return", "bar"):
        raise DomainError(f"schema must be 'return' or 'bar', got {schema!r}")
    start, end = (_parse_clock(s) for s in session) if session else (None, None)
    stamps, rows = [], []
    dropped = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DomainError(f"{path}: empty file") from None
        if not header or header[0].strip().lower() != "timestamp" or len(header) < 2:
            raise DomainError("line 1: header must be 'timestamp,<symbol>,...'")
        labels = [h.strip() for h in header[1:]]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DomainError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            when = _parse_time(row[0], lineno)
            if stamps and when <= stamps[-1]:
                raise DomainError(f"line {lineno}: timestamps are not strictly increasing")
            if any(c.strip() == "" for c in row[1:]):
                dropped += 1
                continue
            try:
                values = [float(c) for c in row[1:]]
            except ValueError:
                raise DomainError(f"line {lineno}: non-numeric value") from None
            if not all(math.isfinite(v) for v in values):
                raise DomainError(f"line {lineno}: non-finite value")
            if start is not None and not start <= when.time() <= end:
                continue
            stamps.append(when)
            rows.append(values)
    values = np.array(rows, dtype=float).reshape(len(rows), len(labels))
    if schema == "bar":
        if np.any(values <= 0):
            raise DomainError("bar prices must be positive")
        days = [s.date() for s in stamps]
        same_day = np.array([days[k] == days[k - 1] for k in range(1, len(days))], dtype=bool)
        rets = values[1:] / values[:-1] - 1.0
        keep = np.flatnonzero(same_day)
        values = rets[keep]
        stamps = [stamps[k + 1] for k in keep]
    ts = np.array([np.datetime64(s, "s") for s in stamps], dtype="datetime64[s]")
    return ReturnPanel(ts, values, labels, dropped)


def make_window_plan(panel, train_days=4, eval_days=2, n_windows=15):
    """Rolling windows of whole trading days, one starting on each trading day.

    Window ``w`` trains on days ``w .. w+train_days-1`` and is evaluated on the
    following ``eval_days`` days.
    """
    days = panel.timestamps.astype("datetime64[D]")
    uniq, first = np.unique(days, return_index=True)
    bounds = list(first) + [panel.n]
    need = n_windows - 1 + train_days + eval_days
    if train_days < 1 or eval_days < 1 or n_windows < 1:
        raise DomainError("day counts and window count must be positive")
    if uniq.size < need:
        raise DomainError(f"{n_windows} windows need {need} trading days, data have {uniq.size}")
    training, evaluation, labels = [], [], []
    for w in range(n_windows):
        training.append((bounds[w], bounds[w + train_days]))
        evaluation.append((bounds[w + train_days], bounds[w + train_days + eval_days]))
        labels.append(str(uniq[w]))
    return WindowPlan(training, evaluation, labels)


def _standardize_window(panel, train, evaluate, window_id):
    a, b = train
    c, d = evaluate
    block = panel.returns[a:b]
    if block.shape[0] < 2:
        raise DegenerateDataError(f"window {window_id}: fewer than 2 training rows")
    mean = block.mean(axis=0)
    sd = block.std(axis=0, ddof=1)
    bad = [panel.labels[k] for k in np.flatnonzero(~(sd > 0))]
    if bad:
        raise DegenerateDataError(f"window {window_id}: zero variance in column(s) {bad}")
    rows = np.concatenate([np.arange(a, b), np.arange(c, d)])
    z = (panel.returns[rows] - mean) / sd
    return ReturnPanel(panel.timestamps[rows], z, list(panel.labels))


def standardize(panel, plan):
    """Per-window standardized panels (training rows first, then evaluation rows).

    Every column is centred and scaled by the mean and standard deviation
    (``ddof=1``) of its training rows; evaluation rows reuse those values.
    """
    return [
        _standardize_window(panel, tr, ev, w)
        for w, (tr, ev) in enumerate(zip(plan.training, plan.evaluation))
    ]


def _fit_one(task, estimator, options):
    y, X = task
    data = SeriesData(y, X)
    if estimator == "CL":
        return fit_cl(data, ClOptions(**options))
    return fit_clem(data, **options)


def fit_factor_regressions(panels, plan, stocks, factors, estimator="CLEM", options=None,
                           workers=1):
    """Fit every stock on the factors in every window.

    Returns
    -------
    list of dict
        ``results[w][stock]`` is the :class:`FitResult` for window ``w``.
    """
    if estimator not in ("CL", "CLEM"):
        raise DomainError(f"estimator must be 'CL' or 'CLEM', got {estimator!r}")
    tasks, keys = [], []
    for w, panel in enumerate(panels):
        n_train = plan.training[w][1] - plan.training[w][0]
        if n_train < len(factors) + 2:
            raise DomainError(f"window {w}: {n_train} rows cannot support {len(factors)} factors")
        X = panel.columns(factors)[:n_train]
        for s in stocks:
            tasks.append((panel.columns([s])[:n_train, 0], X))
            keys.append((w, s))
    fits = ordered_map(partial(_fit_one, estimator=estimator, options=dict(options or {})),
                       tasks, workers)
    out = [dict() for _ in panels]
    for (w, s), fit in zip(keys, fits):
        out[w][s] = fit
    return out


def optimize_portfolio(beta, training_returns, delta=1e-4, factor_index=0,
                       mode="equality_neutral", weight_box=5.0):
    """Weights for two stocks that sum to one and neutralize factor exposure.

    Parameters
    ----------
    beta : array_like, shape (2, p)
        Factor coefficients of each stock.
    training_returns : array_like, shape (n, 2)
        Returns whose sum defines the objective.
    factor_index : int or "ALL"
        The neutralized factor; ``ALL`` constrains every factor (LP mode only).
    mode : {"equality_neutral", "inequality_lp"}
        ``equality_neutral`` solves ``w1 b1 + w2 b2 = 0`` exactly.
        ``inequality_lp`` maximizes the training return subject to
        ``|w' beta_j| <= delta`` and ``|w_i| <= weight_box``; with
        ``w2 = 1 - w1`` the feasible set is an interval in ``w1`` and the
        optimum sits at one of its end points.

    Raises
    ------
    InfeasibleError
        If the coefficients of the factor coincide (equality mode) or the
        constraints have no common point (LP mode).
    """
    beta = np.asarray(beta, dtype=float)
    R = np.asarray(training_returns, dtype=float)
    if beta.ndim != 2 or beta.shape[0] != 2:
        raise DomainError("only two-stock portfolios are supported; beta must be (2, p)")
    if R.ndim != 2 or R.shape[1] != 2:
        raise DomainError("training_returns must be (n, 2)")
    if not delta > 0 or not weight_box > 0:
        raise DomainError("delta and weight_box must be positive")
    p = beta.shape[1]
    totals = R.sum(axis=0)

    if mode == "equality_neutral":
        if factor_index == "ALL":
            raise DomainError("equality mode neutralizes one factor; use inequality_lp for ALL")
        j = int(factor_index)
        b1, b2 = beta[0, j], beta[1, j]
        if b1 == b2:
            raise InfeasibleError(
                f"factor {j}: equal coefficients make neutrality impossible",
                [f"w1*beta1[{j}] + w2*beta2[{j}] = 0"],
            )
        w1 = b2 / (b2 - b1)
        w = np.array([w1, 1.0 - w1])
        return PortfolioSolution(
            weights=w,
            objective=float(w @ totals),
            mode=mode,
            factor_index=j,
            binding=[f"neutrality[{j}]"],
            neutrality_residual=float(abs(w @ beta[:, j])),
        )
    if mode != "inequality_lp":
        raise DomainError(f"unknown mode {mode!r}")

    cols = range(p) if factor_index == "ALL" else [int(factor_index)]
    # Each constraint is lo <= w1 <= hi with w = (w1, 1 - w1).
    limits = [("box w1", -weight_box, weight_box), ("box w2", 1.0 - weight_box, 1.0 + weight_box)]
    for j in cols:
        slope = beta[0, j] - beta[1, j]
        base = beta[1, j]
        name = f"|w'beta[{j}]| <= delta"
        if slope == 0.0:
            if abs(base) > delta:
                raise InfeasibleError(f"factor {j} exposure is fixed at {base:g}", [name])
            continue
        lo, hi = sorted([(-delta - base) / slope, (delta - base) / slope])
        limits.append((name, lo, hi))
    lo = max(lim[1] for lim in limits)
    hi = min(lim[2] for lim in limits)
    if lo > hi:
        tight_lo = [lim[0] for lim in limits if lim[1] == lo]
        tight_hi = [lim[0] for lim in limits if lim[2] == hi]
        raise InfeasibleError(
            f"no weights satisfy all constraints (w1 >= {lo:g} but w1 <= {hi:g})",
            sorted(set(tight_lo + tight_hi)),
        )
    slope = totals[0] - totals[1]
    w1 = hi if slope > 0 else lo
    binding = [lim[0] for lim in limits if lim[2 if w1 == hi else 1] == w1]
    w = np.array([w1, 1.0 - w1])
    resid = max((abs(w @ beta[:, j]) for j in cols), default=0.0)
    return PortfolioSolution(
        weights=w,
        objective=float(w @ totals),
        mode=mode,
        factor_index=factor_index,
        binding=binding,
        neutrality_residual=float(resid),
    )


def evaluate_portfolio(solution, eval_returns):
    """Cumulative portfolio return over an evaluation window.

    Returns
    -------
    total : float
    series : ndarray
        Per-row portfolio returns ``w' R_t``.
    """
    R = np.asarray(eval_returns, dtype=float)
    if R.ndim != 2 or R.shape[1] != solution.weights.size:
        raise DomainError(f"eval_returns must have {solution.weights.size} columns")
    series = R @ solution.weights
    return float(math.fsum(series)), series


@dataclass
class PipelineConfig:
    """Settings for :func:`run_pipeline`; see :func:`load_config` for file keys."""

    data: str
    stocks: list
    factors: list
    schema: str = "return"
    session: tuple = SESSION
    train_days: int = 4
    eval_days: int = 2
    n_windows: int = 15
    estimator: str = "CLEM"
    m: int = 1
    delta: float = 1e-4
    mode: str = "equality_neutral"
    factor: object = None
    weight_box: float = 5.0
    bootstrap_B: int = 0
    bootstrap_level: float = 0.95
    seed: int = 0
    output_dir: str = "."


def load_config(path, **overrides):
    """Read a JSON or TOML pipeline configuration; keyword overrides win.

    A relative ``data`` path is resolved against the configuration file's
    directory.
    """
    path = str(path)
    if path.endswith(".toml"):
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    else:
        with open(path) as fh:
            raw = json.load(fh)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    known = set(PipelineConfig.__dataclass_fields__)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise DomainError(f"unknown configuration keys: {unknown}")
    if "session" in raw and raw["session"] is not None:
        raw["session"] = tuple(raw["session"])
    if "data" in raw and not os.path.isabs(raw["data"]):
        raw["data"] = os.path.join(os.path.dirname(os.path.abspath(path)), raw["data"])
    return PipelineConfig(**raw)


def run_pipeline(config, workers=1, write=True):
    """Load, standardize, fit, optimize and evaluate every window.

    Returns a summary dict; with ``write`` the files ``weights.csv``,
    ``evaluation.csv``, ``series.csv`` and ``summary.json`` are written to
    ``config.output_dir``.
    """
    cfg = config
    panel = load_returns(cfg.data, cfg.schema, cfg.session)
    missing = [s for s in (*cfg.stocks, *cfg.factors) if s not in panel.labels]
    if missing:
        raise DomainError(f"symbols not in data: {missing}")
    if len(cfg.stocks) != 2:
        raise DomainError("exactly two stocks are supported")
    plan = make_window_plan(panel, cfg.train_days, cfg.eval_days, cfg.n_windows)
    panels = standardize(panel, plan)
    options = {"m": cfg.m}
    fits = fit_factor_regressions(panels, plan, cfg.stocks, cfg.factors, cfg.estimator,
                                  options, workers)
    if cfg.factor is None or cfg.factor == "ALL":
        factor_index = "ALL" if cfg.factor == "ALL" else None
    else:
        factor_index = cfg.factors.index(cfg.factor) if isinstance(cfg.factor, str) else int(cfg.factor)
    targets = list(range(len(cfg.factors))) if factor_index is None else [factor_index]

    weight_rows, eval_rows, series_rows = [], [], []
    windows = []
    for w in range(len(plan)):
        beta = np.vstack([fits[w][s].params.beta for s in cfg.stocks])
        (a, b), (c, d) = plan.training[w], plan.evaluation[w]
        train_raw = panel.columns(cfg.stocks)[a:b]
        eval_raw = panel.columns(cfg.stocks)[c:d]
        entry = {"window": w, "start_day": plan.days[w], "fits": {}, "portfolios": []}
        for s in cfg.stocks:
            fit = fits[w][s]
            info = {"params": fit.params.as_dict(), "objective": fit.objective,
                    "converged": fit.converged}
            if cfg.bootstrap_B:
                X = panels[w].columns(cfg.factors)[: b - a]
                boot = parametric_bootstrap(fit.params, X, cfg.bootstrap_B, cfg.bootstrap_level,
                                            cfg.estimator, cfg.seed, cfg.m, workers)
                info["bootstrap"] = boot.summary()
            entry["fits"][s] = info
        for j in targets:
            label = "ALL" if j == "ALL" else cfg.factors[j]
            try:
                sol = optimize_portfolio(beta, train_raw, cfg.delta, j, cfg.mode, cfg.weight_box)
            except InfeasibleError as exc:
                entry["portfolios"].append({"factor": label, "infeasible": exc.violated})
                continue
            total, series = evaluate_portfolio(sol, eval_raw)
            weight_rows.append([w, label, fmt(sol.weights[0]), fmt(sol.weights[1]),
                                fmt(sol.objective), fmt(sol.neutrality_residual)])
            eval_rows.append([w, label, fmt(total)])
            for ts, v in zip(panel.timestamps[c:d], series):
                series_rows.append([w, label, str(ts), fmt(v)])
            entry["portfolios"].append({
                "factor": label,
                "weights": sol.weights.tolist(),
                "training_return": sol.objective,
                "evaluation_return": total,
                "neutrality_residual": sol.neutrality_residual,
                "binding": sol.binding,
            })
        windows.append(entry)

    summary = {
        "stocks": list(cfg.stocks),
        "factors": list(cfg.factors),
        "estimator": cfg.estimator,
        "mode": cfg.mode,
        "delta": cfg.delta,
        "rows": int(panel.n),
        "dropped_rows": int(panel.dropped),
        "windows": windows,
    }
    if write:
        os.makedirs(cfg.output_dir, exist_ok=True)
        out = cfg.output_dir
        _write_csv(os.path.join(out, "weights.csv"),
                   ["window", "factor", "w1", "w2", "training_return", "neutrality_residual"],
                   weight_rows)
        _write_csv(os.path.join(out, "evaluation.csv"), ["window", "factor", "evaluation_return"],
                   eval_rows)
        _write_csv(os.path.join(out, "series.csv"), ["window", "factor", "timestamp",
                                                     "portfolio_return"], series_rows)
        with open(os.path.join(out, "summary.json"), "w") as fh:
            fh.write(dumps(summary) + "\n")
    return summary


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
