"""Spline reference interpolants: the benchmarks the polynomial fits chase.

Natural cubic splines minimize the integrated squared second derivative
among 1D interpolants, and thin-plate splines play the same role in 2D,
so both serve as independent yardsticks for the supersaturated models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CollinearCenters,
    DimensionMismatch,
    InvalidInput,
    SingularSystem,
    UnsortedOrDuplicateKnots,
)


@dataclass(frozen=True)
class CubicSpline:
    """Natural cubic spline: second derivative zero at both ends."""

    knots: np.ndarray
    values: np.ndarray
    second_derivs: np.ndarray

    def __call__(self, x):
        return spline_predict(self, x)


def fit_cubic_spline(points, values) -> CubicSpline:
    """Interpolating natural cubic spline through (points, values).

    Solves the standard tridiagonal system for the knot second
    derivatives with natural boundary conditions.
    """
    x = np.asarray(points, dtype=float).ravel()
    y = np.asarray(values, dtype=float).ravel()
    if x.shape != y.shape:
        raise DimensionMismatch("points and values differ in length")
    n = x.shape[0]
    if n < 3:
        raise InvalidInput("need at least 3 knots")
    if np.any(np.diff(x) <= 0):
        raise UnsortedOrDuplicateKnots("knots must be strictly ascending")
    h = np.diff(x)
    slope = np.diff(y) / h
    a = np.zeros((n - 2, n - 2))
    rhs = np.zeros(n - 2)
    for i in range(n - 2):
        a[i, i] = (h[i] + h[i + 1]) / 3.0
        if i > 0:
            a[i, i - 1] = h[i] / 6.0
        if i + 1 < n - 2:
            a[i, i + 1] = h[i + 1] / 6.0
        rhs[i] = slope[i + 1] - slope[i]
    m = np.zeros(n)
    if n > 2:
        m[1:-1] = np.linalg.solve(a, rhs)
    return CubicSpline(knots=x, values=y, second_derivs=m)


def spline_predict(s: CubicSpline, x) -> np.ndarray | float:
    """Evaluate the spline; cubic extension continues the end intervals."""
    xq = np.asarray(x, dtype=float)
    scalar = xq.ndim == 0
    xq = np.atleast_1d(xq)
    idx = np.clip(np.searchsorted(s.knots, xq) - 1, 0, len(s.knots) - 2)
    x0, x1 = s.knots[idx], s.knots[idx + 1]
    y0, y1 = s.values[idx], s.values[idx + 1]
    m0, m1 = s.second_derivs[idx], s.second_derivs[idx + 1]
    h = x1 - x0
    t = (xq - x0) / h
    u = 1.0 - t
    out = (
        u * y0
        + t * y1
        + (h**2 / 6.0) * ((u**3 - u) * m0 + (t**3 - t) * m1)
    )
    return float(out[0]) if scalar else out


def spline_psi2(s: CubicSpline) -> float:
    """Integral of the squared second derivative over the knot span.

    The second derivative is piecewise linear between the knot values
    m_i, so each interval contributes h/3 (m_i^2 + m_i m_{i+1} + m_{i+1}^2).
    """
    h = np.diff(s.knots)
    m = s.second_derivs
    return float(np.sum(h / 3.0 * (m[:-1] ** 2 + m[:-1] * m[1:] + m[1:] ** 2)))


@dataclass(frozen=True)
class ThinPlateSpline:
    """2D interpolant: r^2 log r radial expansion plus an affine part."""

    centers: np.ndarray
    rbf_coeffs: np.ndarray
    affine_coeffs: np.ndarray  # constant, x1, x2


def _tps_kernel(r2: np.ndarray) -> np.ndarray:
    # phi(r) = r^2 log r, with phi(0) = 0
    out = np.zeros_like(r2)
    mask = r2 > 0.0
    out[mask] = 0.5 * r2[mask] * np.log(r2[mask])
    return out


def fit_thin_plate(points, values, ridge: float = 0.0) -> ThinPlateSpline:
    """Solve the symmetric (n+3) thin-plate system for 2D data."""
    pts = np.asarray(points, dtype=float)
    y = np.asarray(values, dtype=float).ravel()
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DimensionMismatch("thin-plate centers must be 2D points")
    n = pts.shape[0]
    if y.shape[0] != n:
        raise DimensionMismatch("points and values differ in length")
    if n < 3:
        raise InvalidInput("need at least 3 centers")
    p = np.column_stack([np.ones(n), pts])
    if np.linalg.matrix_rank(p) < 3:
        raise CollinearCenters("centers are collinear")
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    kmat = _tps_kernel(d2) + ridge * np.eye(n)
    lhs = np.zeros((n + 3, n + 3))
    lhs[:n, :n] = kmat
    lhs[:n, n:] = p
    lhs[n:, :n] = p.T
    rhs = np.concatenate([y, np.zeros(3)])
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"thin-plate system is singular: {exc}") from exc
    return ThinPlateSpline(
        centers=pts.copy(), rbf_coeffs=sol[:n], affine_coeffs=sol[n:]
    )


def tps_predict(tps: ThinPlateSpline, x) -> np.ndarray | float:
    """Evaluate the thin-plate spline at one point or a batch."""
    xq = np.atleast_2d(np.asarray(x, dtype=float))
    if xq.shape[1] != 2:
        raise DimensionMismatch("thin-plate queries must be 2D points")
    d2 = np.sum((xq[:, None, :] - tps.centers[None, :, :]) ** 2, axis=2)
    vals = _tps_kernel(d2) @ tps.rbf_coeffs
    vals += tps.affine_coeffs[0] + xq @ tps.affine_coeffs[1:]
    return float(vals[0]) if np.asarray(x).ndim == 1 else vals
