"""Spherical-harmonic fODF fields: basis evaluation, discrete spheres, peaks.

Basis convention (fixed for every file and checkpoint this package writes):
real, symmetric, even-order basis of order 6 with index ordering
l = 0, 2, 4, 6 and m = -l..l within each l, i.e.

    Y[j] = sqrt(2) * Im(Y_l^|m|)   for m < 0
         = Y_l^0                   for m = 0
         = sqrt(2) * Re(Y_l^m)     for m > 0

where Y_l^m is the orthonormal complex spherical harmonic with the
Condon-Shortley phase.  28 coefficients per voxel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import sph_harm_y

from . import geometry
from .errors import ConfigError

SH_ORDER = 6
N_COEFFS = (SH_ORDER + 1) * (SH_ORDER + 2) // 2  # 28


def sh_index_pairs(order: int = SH_ORDER) -> list[tuple[int, int]]:
    return [(l, m) for l in range(0, order + 1, 2) for m in range(-l, l + 1)]


def sh_basis_matrix(dirs: np.ndarray, order: int = SH_ORDER) -> np.ndarray:
    """Evaluate the real SH basis at unit directions; returns (N, n_coeffs)."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    theta = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    cols = []
    for l, m in sh_index_pairs(order):
        ylm = sph_harm_y(l, abs(m), theta, phi)
        if m < 0:
            cols.append(np.sqrt(2.0) * ylm.imag)
        elif m == 0:
            cols.append(ylm.real)
        else:
            cols.append(np.sqrt(2.0) * ylm.real)
    return np.stack(cols, axis=1)


def sh_eval(coeffs: np.ndarray, u: np.ndarray) -> float:
    """Amplitude of an SH series in unit direction ``u``."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (N_COEFFS,):
        raise ValueError(f"expected {N_COEFFS} coefficients, got shape {coeffs.shape}")
    u = np.asarray(u, dtype=np.float64)
    if abs(np.linalg.norm(u) - 1.0) > 1e-6:
        raise ValueError(f"direction must be unit-norm, got |u| = {np.linalg.norm(u)}")
    return float(sh_basis_matrix(u[None, :]) @ coeffs)


def fit_matrix(sample_dirs: np.ndarray, order: int = SH_ORDER) -> np.ndarray:
    """Pseudo-inverse mapping sampled amplitudes to least-squares SH coefficients."""
    return np.linalg.pinv(sh_basis_matrix(sample_dirs, order))


# ------------------------------------------------------------------- spheres

_ICO_T = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array([
    [-1, _ICO_T, 0], [1, _ICO_T, 0], [-1, -_ICO_T, 0], [1, -_ICO_T, 0],
    [0, -1, _ICO_T], [0, 1, _ICO_T], [0, -1, -_ICO_T], [0, 1, -_ICO_T],
    [_ICO_T, 0, -1], [_ICO_T, 0, 1], [-_ICO_T, 0, -1], [-_ICO_T, 0, 1],
], dtype=np.float64)
_ICO_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


@dataclass
class SphereSampling:
    """Unit sphere discretization with symmetric adjacency and antipode map."""

    vertices: np.ndarray          # (V, 3) unit vectors
    neighbors: np.ndarray         # (V, max_degree) int, padded with -1
    antipode: np.ndarray          # (V,) index of each vertex's antipode
    _basis: np.ndarray | None = field(default=None, repr=False)

    @property
    def basis(self) -> np.ndarray:
        if self._basis is None:
            self._basis = sh_basis_matrix(self.vertices)
        return self._basis

    def __post_init__(self):
        norms = np.linalg.norm(self.vertices, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ValueError("sphere vertices must be unit-norm")


def icosphere(subdivisions: int = 2) -> SphereSampling:
    """Subdivided icosahedron (2 subdivisions -> 162 vertices)."""
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = list(_ICO_FACES)
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = verts[key[0]] + verts[key[1]]
                m = m / np.linalg.norm(m)
                midpoint[key] = len(verts)
                verts.append(m)
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = new_faces

    vertices = np.array(verts)
    nbr_sets: list[set[int]] = [set() for _ in verts]
    for a, b, c in faces:
        nbr_sets[a] |= {b, c}
        nbr_sets[b] |= {a, c}
        nbr_sets[c] |= {a, b}
    max_deg = max(len(s) for s in nbr_sets)
    neighbors = np.full((len(verts), max_deg), -1, dtype=np.int64)
    for i, s in enumerate(nbr_sets):
        neighbors[i, : len(s)] = sorted(s)

    dots = vertices @ vertices.T
    antipode = np.argmin(dots, axis=1)
    worst = np.max(np.abs(vertices + vertices[antipode]))
    if worst > 1e-9:
        raise ValueError(f"sphere is not antipodally symmetric (defect {worst:.2e})")
    return SphereSampling(vertices=vertices, neighbors=neighbors, antipode=antipode)


# --------------------------------------------------------------------- peaks


def peaks_mask(coeff_rows: np.ndarray, sphere: SphereSampling,
               rel_threshold: float = 0.25, max_peaks: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized peak extraction for a batch of coefficient rows.

    Returns (mask, amplitudes): mask[i, v] marks sphere vertex v as a peak of
    row i after strict-local-maximum, relative-threshold, antipodal
    deduplication and top-``max_peaks`` capping.
    """
    if not 0.0 < rel_threshold <= 1.0:
        raise ValueError(f"rel_threshold must be in (0, 1], got {rel_threshold}")
    rows = np.atleast_2d(np.asarray(coeff_rows, dtype=np.float64))
    amps = rows @ sphere.basis.T
    nbr = sphere.neighbors
    pad = nbr < 0
    nbr_safe = np.where(pad, 0, nbr)
    nbr_amp = amps[:, nbr_safe]
    nbr_amp[:, pad] = -np.inf
    local_max = amps > nbr_amp.max(axis=2)
    gmax = amps.max(axis=1, keepdims=True)
    sel = local_max & (amps >= rel_threshold * gmax) & (gmax > 0)
    # antipodal peaks are duplicates; keep the lower vertex index
    dup = sel & sel[:, sphere.antipode] & (sphere.antipode < np.arange(amps.shape[1]))[None, :]
    sel &= ~dup
    # cap at max_peaks strongest per row
    masked = np.where(sel, amps, -np.inf)
    order = np.argsort(-masked, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(amps.shape[1]), amps.shape).copy(), axis=1)
    sel &= ranks < max_peaks
    return sel, amps


def peaks(coeffs: np.ndarray, sphere: SphereSampling, rel_threshold: float = 0.25) -> list[np.ndarray]:
    """Peak directions of one fODF, strongest first (at most 5)."""
    sel, amps = peaks_mask(np.asarray(coeffs)[None, :], sphere, rel_threshold)
    idx = np.flatnonzero(sel[0])
    idx = idx[np.argsort(-amps[0, idx], kind="stable")]
    return [sphere.vertices[i].copy() for i in idx]


# -------------------------------------------------------------------- volume


@dataclass
class SHVolume:
    """Grid of SH coefficient vectors; coeffs has shape (nx, ny, nz, 28)."""

    coeffs: np.ndarray
    order: int = SH_ORDER

    def __post_init__(self):
        expected = (self.order + 1) * (self.order + 2) // 2
        if self.coeffs.ndim != 4 or self.coeffs.shape[3] != expected:
            raise ConfigError(
                f"SHVolume of order {self.order} needs (nx, ny, nz, {expected}) coeffs, "
                f"got {self.coeffs.shape}"
            )
        if not np.all(np.isfinite(self.coeffs)):
            raise ConfigError("SHVolume contains non-finite coefficients")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.coeffs.shape[:3]

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Trilinear coefficient vectors at voxel-space points (raises OOB)."""
        return geometry.trilinear(self.coeffs, points)

    def sample_or_zero(self, points: np.ndarray) -> np.ndarray:
        return geometry.trilinear_or_zero(self.coeffs, points)
