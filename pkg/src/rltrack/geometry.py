"""Streamline geometry: arc-length resampling, first differences, trilinear sampling.

Streamlines are (N, 3) float arrays of voxel-space coordinates.  Voxel centers
sit at integer coordinates; a grid of size ``dim`` along an axis is valid on
``[-0.5, dim - 0.5)``.  Everything here is pure and safe to call concurrently.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, OutOfBoundsError


def as_streamline(points) -> np.ndarray:
    """Validate and return a streamline as an (N, 3) float64 array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"streamline must have shape (N, 3), got {arr.shape}")
    if arr.shape[0] < 2:
        raise ValueError("streamline needs at least 2 points")
    if not np.all(np.isfinite(arr)):
        raise ValueError("streamline contains non-finite coordinates")
    return arr


def _dedup_consecutive(points: np.ndarray) -> np.ndarray:
    # Collapse duplicate consecutive points so segment lengths stay positive.
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    keep = np.concatenate(([True], seg > 0.0))
    return points[keep]


def arc_length(points) -> float:
    """Total polyline length."""
    arr = as_streamline(points)
    return float(np.linalg.norm(np.diff(arr, axis=0), axis=1).sum())


def resample(points, n: int) -> np.ndarray:
    """Resample a streamline to ``n`` points at equal arc-length spacing.

    Interior points are linearly interpolated on the original polyline; the
    two endpoints are preserved exactly.
    """
    if n < 2:
        raise ValueError(f"resample count must be >= 2, got {n}")
    arr = _dedup_consecutive(as_streamline(points))
    if arr.shape[0] < 2:
        raise DegenerateInputError("streamline has zero total arc length")
    seg = np.linalg.norm(np.diff(arr, axis=0), axis=1)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    total = cum[-1]
    target = np.linspace(0.0, total, n)
    out = np.empty((n, 3), dtype=np.float64)
    for axis in range(3):
        out[:, axis] = np.interp(target, cum, arr[:, axis])
    out[0] = arr[0]
    out[-1] = arr[-1]
    return out


def directions(points) -> np.ndarray:
    """First differences of a streamline: dirs[i] = points[i+1] - points[i]."""
    arr = as_streamline(points)
    return np.diff(arr, axis=0)


def in_bounds(dims, points) -> np.ndarray:
    """Boolean mask of points inside the half-voxel-border validity domain."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    lo = pts >= -0.5
    hi = pts < (np.asarray(dims, dtype=np.float64) - 0.5)
    return np.all(lo & hi, axis=1)


def _corner_weights(pts: np.ndarray, dims) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    floor = np.floor(pts).astype(np.int64)
    frac = pts - floor
    # Border rule: corners are clipped to the grid, so the blend extends the
    # edge value across the half-voxel margin.
    lo = np.clip(floor, 0, np.asarray(dims) - 1)
    hi = np.clip(floor + 1, 0, np.asarray(dims) - 1)
    return lo, hi, frac


def trilinear(grid: np.ndarray, points) -> np.ndarray:
    """Trilinearly sample ``grid`` (nx, ny, nz[, C]) at voxel-space ``points``.

    Raises OutOfBoundsError if any point leaves the validity domain; callers
    in the tracking loop treat that as a stopping event.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    single = np.asarray(points).ndim == 1
    dims = grid.shape[:3]
    ok = in_bounds(dims, pts)
    if not np.all(ok):
        bad = pts[~ok][0]
        raise OutOfBoundsError(f"point {bad.tolist()} outside grid of dims {dims}")
    out = _trilinear_clipped(grid, pts)
    return out[0] if single else out


def trilinear_or_zero(grid: np.ndarray, points) -> np.ndarray:
    """Like :func:`trilinear` but out-of-bounds points yield zeros."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    dims = grid.shape[:3]
    ok = in_bounds(dims, pts)
    out_shape = (pts.shape[0],) + grid.shape[3:]
    out = np.zeros(out_shape, dtype=np.float64)
    if np.any(ok):
        out[ok] = _trilinear_clipped(grid, pts[ok])
    return out


def _trilinear_clipped(grid: np.ndarray, pts: np.ndarray) -> np.ndarray:
    dims = grid.shape[:3]
    lo, hi, frac = _corner_weights(pts, dims)
    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
    gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
    x0, y0, z0 = lo[:, 0], lo[:, 1], lo[:, 2]
    x1, y1, z1 = hi[:, 0], hi[:, 1], hi[:, 2]

    def corner(ix, iy, iz):
        return grid[ix, iy, iz].astype(np.float64)

    expand = (slice(None),) + (None,) * (grid.ndim - 3)
    out = (
        corner(x0, y0, z0) * (gx * gy * gz)[expand]
        + corner(x1, y0, z0) * (fx * gy * gz)[expand]
        + corner(x0, y1, z0) * (gx * fy * gz)[expand]
        + corner(x0, y0, z1) * (gx * gy * fz)[expand]
        + corner(x1, y1, z0) * (fx * fy * gz)[expand]
        + corner(x1, y0, z1) * (fx * gy * fz)[expand]
        + corner(x0, y1, z1) * (gx * fy * fz)[expand]
        + corner(x1, y1, z1) * (fx * fy * fz)[expand]
    )
    return out
