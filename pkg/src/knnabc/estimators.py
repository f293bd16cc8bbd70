"""Kernels and the conditional posterior-density estimators.

Three estimators live here:

* ``g_hat`` smooths only the accepted (nearest-neighbor) thetas with a
  kernel on R^p -- no ratio, no denominator that can vanish;
* ``g_rosenblatt`` is the classical double-kernel ratio with fixed
  bandwidths in both theta and s;
* ``g_smoothed_nn`` is the same ratio with the s-scale set adaptively to
  the distance of the k-th nearest summary.

``posterior_functional`` averages a bounded map over the accepted thetas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .core import AcceptedSet, ReferenceTable, squared_distances
from .errors import (DegenerateScaleError, EmptyAcceptedSetError,
                     InvalidArgumentError, UndefinedEstimateError)
from .numerics import trapezoid_nd

KERNEL_KINDS = ("naive", "gaussian")

GRID_POINTS_1D = 512
GRID_CAP = 100_000
GRID_PADDING = 4.0


def unit_ball_volume(p: int) -> float:
    """Volume of the closed unit ball in R^p, by exact factorial closed
    forms (no special-function call)."""
    p = int(p)
    if p < 1:
        raise InvalidArgumentError("dimension p must be >= 1")
    if p % 2 == 0:
        half = p // 2
        return math.pi**half / math.factorial(half)
    n = (p + 1) // 2
    ratio = Fraction(4**n * math.factorial(n), math.factorial(2 * n))
    return math.pi ** ((p - 1) // 2) * float(ratio)


@dataclass(frozen=True)
class KernelSpec:
    """Normalized kernel on R^dim: flat on the unit ball ("naive") or
    standard Gaussian."""

    kind: str
    dim: int
    normalizer: float

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InvalidArgumentError(f"kernel kind must be one of {KERNEL_KINDS}")
        if self.dim < 1:
            raise InvalidArgumentError("kernel dimension must be >= 1")


def make_kernel(kind: str, dim: int) -> KernelSpec:
    if kind == "naive":
        return KernelSpec(kind=kind, dim=dim, normalizer=1.0 / unit_ball_volume(dim))
    if kind == "gaussian":
        return KernelSpec(kind=kind, dim=dim, normalizer=(2.0 * math.pi) ** (-dim / 2.0))
    raise InvalidArgumentError(f"kernel kind must be one of {KERNEL_KINDS}")


def _kernel_values(kernel: KernelSpec, sq_norms: np.ndarray) -> np.ndarray:
    """Kernel values given squared norms ||u||^2 (radial kernels only)."""
    if kernel.kind == "naive":
        return np.where(sq_norms <= 1.0, kernel.normalizer, 0.0)
    return kernel.normalizer * np.exp(-0.5 * sq_norms)


def kernel_eval(kernel: KernelSpec, u) -> float:
    """K(u) for a single point u in R^dim."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != kernel.dim:
        raise InvalidArgumentError(
            f"u has dimension {u.shape[0]}, kernel expects {kernel.dim}")
    return float(_kernel_values(kernel, np.array([float(np.dot(u, u))]))[0])


def kernel_second_moment(kernel: KernelSpec) -> float:
    """Per-coordinate second moment of the kernel (off-diagonal moments
    vanish by radial symmetry)."""
    if kernel.kind == "naive":
        return 1.0 / (kernel.dim + 2)
    return 1.0


def kernel_square_integral(kernel: KernelSpec) -> float:
    """The integral of K^2 over R^dim, in closed form."""
    if kernel.kind == "naive":
        return kernel.normalizer  # (1/V_p)^2 * V_p
    return (4.0 * math.pi) ** (-kernel.dim / 2.0)


# ---------------------------------------------------------------------------
# the accepted-set estimator

def _points_sq_dist(points: np.ndarray, centers: np.ndarray, h: float) -> np.ndarray:
    """Squared scaled distances ||(x_g - c_j)/h||^2, shape (G, k)."""
    diff = (points[:, None, :] - centers[None, :, :]) / h
    return np.einsum("gjd,gjd->gj", diff, diff)


def g_hat(accepted: AcceptedSet, h: float, kernel: KernelSpec, theta0) -> float:
    """Density estimate at theta0 from the accepted thetas:
    mean_j K((theta0 - Theta_(j)) / h) / h^p."""
    value = g_hat_many(accepted, h, kernel, np.asarray(theta0, dtype=float).reshape(1, -1))
    return float(value[0])


def g_hat_many(accepted: AcceptedSet, h: float, kernel: KernelSpec,
               points: np.ndarray, chunk: int = 8192) -> np.ndarray:
    """Vectorized ``g_hat`` over points of shape (G, p)."""
    if accepted.k == 0:
        raise EmptyAcceptedSetError("estimator needs at least one accepted row")
    h = float(h)
    if not h > 0.0:
        raise InvalidArgumentError("bandwidth h must be > 0")
    centers = accepted.ordered_thetas
    p = centers.shape[1]
    if kernel.dim != p:
        raise InvalidArgumentError(f"kernel dimension {kernel.dim} != parameter dimension {p}")
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != p:
        raise InvalidArgumentError(f"points must have shape (G, {p})")
    out = np.empty(points.shape[0])
    scale = 1.0 / (accepted.k * h**p)
    for lo in range(0, points.shape[0], chunk):
        sq = _points_sq_dist(points[lo:lo + chunk], centers, h)
        out[lo:lo + chunk] = _kernel_values(kernel, sq).sum(axis=1) * scale
    return out


# ---------------------------------------------------------------------------
# double-kernel competitors

def _summary_weights(table: ReferenceTable, s0, delta: float,
                     kernel_s: KernelSpec) -> np.ndarray:
    if kernel_s.dim != table.summaries.shape[1]:
        raise InvalidArgumentError("summary kernel dimension does not match the table")
    sq = squared_distances(table.summaries, s0) / (delta * delta)
    return _kernel_values(kernel_s, sq)


def g_rosenblatt(table: ReferenceTable, s0, theta0, h: float, delta: float,
                 kernel_theta: KernelSpec, kernel_summary: KernelSpec) -> float:
    """Double-kernel ratio estimate with fixed bandwidths h (theta) and
    delta (summary).  Raises UndefinedEstimateError when every summary
    weight vanishes -- the zero denominator is a real failure mode of this
    estimator and is never silently mapped to 0.
    """
    h = float(h)
    delta = float(delta)
    if not (h > 0.0 and delta > 0.0):
        raise InvalidArgumentError("bandwidths h and delta must be > 0")
    weights = _summary_weights(table, s0, delta, kernel_summary)
    wsum = float(weights.sum())
    if wsum == 0.0:
        raise UndefinedEstimateError(
            f"no summary mass within the delta={delta!r} window around s0")
    theta0 = np.asarray(theta0, dtype=float).reshape(1, -1)
    p = table.thetas.shape[1]
    if kernel_theta.dim != p or theta0.shape[1] != p:
        raise InvalidArgumentError("theta kernel / point dimension mismatch")
    sq = _points_sq_dist(theta0, table.thetas, h)[0]
    num = float(np.dot(weights, _kernel_values(kernel_theta, sq)))
    return num / (h**p * wsum)


def g_smoothed_nn(table: ReferenceTable, s0, theta0, h: float, k: int,
                  kernel_theta: KernelSpec, kernel_summary: KernelSpec) -> float:
    """Rosenblatt form with the summary scale set to the distance of the
    k-th nearest summary.  With a naive summary kernel this reproduces
    ``g_hat`` on the k nearest rows (up to rows tied at exactly that
    distance)."""
    n = table.n_rows
    k = int(k)
    if not 1 <= k <= n - 1:
        raise InvalidArgumentError(f"k must satisfy 1 <= k <= N-1 = {n - 1}")
    d2 = squared_distances(table.summaries, s0)
    d_k = math.sqrt(float(np.partition(d2, k - 1)[k - 1]))
    if d_k == 0.0:
        raise DegenerateScaleError("k-th neighbor distance is zero; no usable scale")
    return g_rosenblatt(table, s0, theta0, h, d_k, kernel_theta, kernel_summary)


def posterior_functional(accepted: AcceptedSet, phi: Callable[[np.ndarray], np.ndarray]) -> float:
    """Plain average of phi over the accepted thetas.

    ``phi`` receives the (k, p) matrix of accepted thetas and must return
    one value per row.
    """
    if accepted.k == 0:
        raise EmptyAcceptedSetError("posterior functional needs at least one accepted row")
    values = np.asarray(phi(accepted.ordered_thetas), dtype=float)
    values = np.broadcast_to(values, (accepted.k,))
    return float(values.mean())


# ---------------------------------------------------------------------------
# grids and the packaged estimate

@dataclass(frozen=True)
class DensityEstimate:
    """Estimator values on a tensor grid plus the run metadata needed to
    reproduce them."""

    grid: np.ndarray              # (G, p) points, C order over the axes
    values: np.ndarray            # (G,) nonnegative
    axes: tuple                   # per-coordinate 1-D grids
    meta: dict

    def integral(self) -> float:
        """Trapezoid integral over the tensor grid."""
        return trapezoid_nd(self.values, self.axes)


def default_grid(accepted: AcceptedSet, h: float, points: int = GRID_POINTS_1D,
                 padding: float = GRID_PADDING, cap: int = GRID_CAP):
    """Axes of the default evaluation grid: each coordinate spans the
    accepted thetas padded by ``padding`` bandwidths; the tensor size is
    capped by shrinking the per-axis count."""
    if accepted.k == 0:
        raise EmptyAcceptedSetError("cannot build a grid from an empty accepted set")
    p = accepted.ordered_thetas.shape[1]
    per_axis = min(points, max(2, int(cap ** (1.0 / p)))) if p > 1 else points
    lo = accepted.ordered_thetas.min(axis=0) - padding * h
    hi = accepted.ordered_thetas.max(axis=0) + padding * h
    return tuple(np.linspace(lo[j], hi[j], per_axis) for j in range(p))


def grid_points(axes) -> np.ndarray:
    """Flatten tensor axes to an (G, p) array of points in C order."""
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def estimate_density(accepted: AcceptedSet, h: float, kernel: KernelSpec,
                     axes=None, meta: Optional[dict] = None) -> DensityEstimate:
    """Evaluate ``g_hat`` on a tensor grid (the default grid if none is
    given) and package the result."""
    if axes is None:
        axes = default_grid(accepted, h)
    pts = grid_points(axes)
    values = g_hat_many(accepted, h, kernel, pts)
    full_meta = {
        "k": accepted.k,
        "h": float(h),
        "kernel": kernel.kind,
        "d_k_plus_1": accepted.radius_next,
        "grid_shape": [int(len(a)) for a in axes],
    }
    if meta:
        full_meta.update(meta)
    return DensityEstimate(grid=pts, values=values, axes=tuple(axes), meta=full_meta)


def density_csv_rows(estimate: DensityEstimate):
    """Header + rows for CSV export of a density estimate."""
    p = estimate.grid.shape[1]
    yield [f"theta_{j}" for j in range(p)] + ["g_hat"]
    for point, value in zip(estimate.grid, estimate.values):
        yield [f"{v:.17g}" for v in point] + [f"{value:.17g}"]
