"""Small numerical utilities: rounding, trapezoid integration, OLS."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import InvalidArgumentError


def round_half_up(x: float) -> int:
    """Round to nearest integer, halves away from zero (not banker's)."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def trapezoid_nd(values: np.ndarray, axes) -> float:
    """Trapezoid integral of values sampled on a tensor grid.

    ``values`` has shape (len(axes[0]), ..., len(axes[-1])) or is flat in
    C order over that grid.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    shape = tuple(len(a) for a in axes)
    vals = np.asarray(values, dtype=float).reshape(shape)
    for axis_grid in reversed(axes):
        vals = np.trapezoid(vals, axis_grid, axis=-1)
    return float(vals)


def adaptive_trapezoid(fn, a: float, b: float, rtol: float = 1e-6,
                       n0: int = 129, max_doublings: int = 16) -> float:
    """Adaptive trapezoid quadrature of a vectorized function on [a, b].

    Doubles the panel count until successive estimates agree to ``rtol``
    relative (or an absolute floor for integrals near zero).
    """
    if b <= a:
        raise InvalidArgumentError("integration interval is empty")
    x = np.linspace(a, b, n0)
    y = np.asarray(fn(x), dtype=float)
    est = np.trapezoid(y, x)
    n = n0
    for _ in range(max_doublings):
        mid = 0.5 * (x[:-1] + x[1:])
        y_mid = np.asarray(fn(mid), dtype=float)
        # refined trapezoid: half the old estimate plus the midpoint layer
        h_new = (b - a) / (2 * (n - 1))
        new_est = 0.5 * est + h_new * float(np.sum(y_mid))
        x = np.sort(np.concatenate([x, mid]))
        converged = abs(new_est - est) <= rtol * max(abs(new_est), 1e-300) + 1e-14
        est = new_est
        n = 2 * n - 1
        if converged:
            break
    return float(est)


def ols_slope(x, y) -> tuple[float, float]:
    """Least-squares slope of y on x with its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise InvalidArgumentError("need at least 3 points for a slope fit")
    xm = x - x.mean()
    sxx = float(np.sum(xm * xm))
    slope = float(np.sum(xm * y) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = x.size - 2
    sigma2 = float(np.sum(resid * resid) / dof)
    return slope, math.sqrt(sigma2 / sxx)


def parallel_map(fn, items, max_workers: int = 1) -> list:
    """Map preserving order; thread pool when max_workers > 1.

    Results are collected by item index, so the output (and any
    aggregation done over it in order) is independent of scheduling.
    """
    items = list(items)
    if max_workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))
