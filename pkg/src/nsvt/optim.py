"""Small unconstrained optimizers used by the estimators.

Objectives may return ``inf`` (or ``nan``) to signal an infeasible point;
the line search treats that as a rejected step.
"""
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["OptimizeResult", "central_gradient", "lbfgs", "golden_section_max"]


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    n_fev: int
    converged: bool
    message: str
    trace: list = field(default_factory=list)


def central_gradient(fun, x, rel_step=1e-6):
    """Central-difference gradient with step ``rel_step * max(1, |x_i|)``.

    Returns ``(grad, n_evaluations)``; a non-finite evaluation makes the
    corresponding component ``nan``.
    """
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (fun(xp) - fun(xm)) / (xp[i] - xm[i])
    return g, 2 * x.size


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        a = s @ q / (y @ s)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), a in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = y @ q / (y @ s)
        q += (a - b) * s
    return -q


def lbfgs(
    fun,
    x0,
    grad=None,
    memory=10,
    max_iter=500,
    grad_tol=1e-6,
    ftol=1e-12,
    c1=1e-4,
    backtrack=0.5,
    max_backtracks=50,
    callback=None,
):
    """Minimize ``fun`` with limited-memory BFGS and Armijo backtracking.

    Parameters
    ----------
    fun : callable
        Objective ``f(x) -> float``.
    x0 : array_like
    grad : callable, optional
        Gradient ``g(x)``; central differences are used when omitted.
    memory : int
        Number of correction pairs kept by the two-loop recursion.
    max_iter : int
    grad_tol : float
        Stop when ``max|g| <= grad_tol``.
    ftol : float
        Also stop when a step reduces ``f`` by no more than
        ``ftol * max(1, |f|)``.
    callback : callable, optional
        Called as ``callback(iteration, x, f)`` after every accepted step.

    Returns
    -------
    OptimizeResult
    """
    n_fev = 0

    def f(x):
        nonlocal n_fev
        n_fev += 1
        v = fun(x)
        return v if math.isfinite(v) else math.inf

    def gradient(x):
        nonlocal n_fev
        if grad is not None:
            return np.asarray(grad(x), dtype=float)
        g, k = central_gradient(fun, x)
        n_fev += k
        return g

    x = np.array(x0, dtype=float)
    fx = f(x)
    if not math.isfinite(fx):
        return OptimizeResult(x, fx, np.full_like(x, np.nan), 0, n_fev, False, "infeasible start")
    g = gradient(x)
    s_hist, y_hist = [], []
    trace = [(0, fx, x.copy())]
    message = "maximum iterations reached"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if not np.all(np.isfinite(g)):
            message = "non-finite gradient"
            break
        if np.max(np.abs(g)) <= grad_tol:
            converged, message = True, "gradient tolerance reached"
            it -= 1
            break
        d = _two_loop(g, s_hist, y_hist)
        slope = g @ d
        if not slope < 0:
            s_hist.clear()
            y_hist.clear()
            d = -g
            slope = g @ d
        step = 1.0 if s_hist else min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-300))
        accepted = False
        for _ in range(max_backtracks):
            x_new = x + step * d
            f_new = f(x_new)
            if f_new <= fx + c1 * step * slope:
                accepted = True
                break
            step *= backtrack
        if not accepted:
            if s_hist:
                s_hist.clear()
                y_hist.clear()
                continue
            message = "line search failed"
            break
        g_new = gradient(x_new)
        s, y = x_new - x, g_new - g
        if s @ y > 1e-12 * math.sqrt((s @ s) * (y @ y)):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        decrease = fx - f_new
        x, fx, g = x_new, f_new, g_new
        trace.append((it, fx, x.copy()))
        if callback is not None:
            callback(it, x, fx)
        if decrease <= ftol * max(1.0, abs(fx)):
            converged, message = True, "function tolerance reached"
            break
    return OptimizeResult(x, fx, g, it, n_fev, converged, message, trace)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(fun, lo, hi, tol=1e-12, max_iter=500):
    """Maximize a unimodal ``fun`` on ``[lo, hi]``; returns ``(x, fun(x))``.

    The best of the final bracket and both end points is returned, so
    maxima on the boundary are found too.
    """
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fun(d)
    candidates = [(fc, c), (fd, d), (fun(lo), float(lo)), (fun(hi), float(hi))]
    best_f, best_x = max(candidates, key=lambda t: (t[0], -t[1]))
    return best_x, best_f
