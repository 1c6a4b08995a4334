"""Affine subspaces of phase space under the energy inner product.

An admissible set is stored as an orthonormal basis of its direction space
E0 (orthonormal w.r.t. the energy inner product, not the Euclidean one)
together with the offset e0 = P_E(0), the point of E closest to the origin,
which is energy-orthogonal to E0.  Projections, distances and the chart
coords/embed are all expressed through that pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, OffSubspaceError
from .phase import EnergyMetric, PhaseVector

_ORTHO_TOL = 1e-10
_MGS_TOL = 1e-12


def _orthonormalize(rows: np.ndarray, m: EnergyMetric) -> np.ndarray:
    """Modified Gram-Schmidt in the energy inner product.

    One reorthogonalization pass is applied to every vector; vectors whose
    remainder is below _MGS_TOL relative to their original length are dropped
    as linearly dependent.
    """
    w = np.concatenate([m.coeffs, 1.0 / m.coeffs])
    basis: list[np.ndarray] = []
    for v in np.atleast_2d(np.asarray(rows, dtype=float)):
        scale = np.sqrt(np.sum(v * v * w))
        if scale == 0.0:
            continue
        u = v.copy()
        for _ in range(2):
            for b in basis:
                u = u - np.sum(u * w * b) * b
        nrm = np.sqrt(np.sum(u * u * w))
        if nrm <= _MGS_TOL * scale:
            continue
        basis.append(u / nrm)
    if not basis:
        return np.zeros((0, rows.shape[-1]))
    return np.array(basis)


@dataclass(frozen=True, eq=False)
class AffineSubspace:
    """E = offset + span(basis), with basis energy-orthonormal and offset = P_E(0)."""

    basis: np.ndarray
    offset: PhaseVector
    metric: EnergyMetric

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2:
            basis = basis.reshape(-1, 2 * self.metric.n_edges)
        n2 = 2 * self.metric.n_edges
        if basis.shape[1] != n2 and basis.size > 0:
            raise DimensionMismatchError(f"basis rows must have length {n2}")
        if basis.size == 0:
            basis = basis.reshape(0, n2)
        object.__setattr__(self, "basis", basis)
        if self.offset.n_edges != self.metric.n_edges:
            raise DimensionMismatchError("offset dimension does not match metric")
        # Invariants: mutual orthonormality and offset orthogonality.
        if basis.shape[0] > 0:
            w = np.concatenate([self.metric.coeffs, 1.0 / self.metric.coeffs])
            gram = (basis * w) @ basis.T
            if not np.allclose(gram, np.eye(basis.shape[0]), atol=_ORTHO_TOL):
                raise ValueError("basis is not energy-orthonormal within 1e-10")
            if np.max(np.abs((basis * w) @ self.offset.flat)) > _ORTHO_TOL:
                raise ValueError("offset is not energy-orthogonal to the basis within 1e-10")

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def offset_flat(self) -> np.ndarray:
        return self.offset.flat

    @classmethod
    def from_spanning(
        cls, spanning: np.ndarray, point: PhaseVector, metric: EnergyMetric
    ) -> "AffineSubspace":
        """Build from any spanning set of E0 and any point of E.

        The spanning rows are orthonormalized and the offset is the given
        point minus its E0 component, i.e. the closest point of E to 0.
        """
        basis = _orthonormalize(np.asarray(spanning, dtype=float), metric)
        w = np.concatenate([metric.coeffs, 1.0 / metric.coeffs])
        p = point.flat
        if basis.shape[0] > 0:
            p = p - ((basis * w) @ p) @ basis
        return cls(basis, PhaseVector.from_flat(p), metric)

    # Flat-array workhorses; batched over leading axes.
    def coords_flat(self, zflat: np.ndarray) -> np.ndarray:
        zflat = np.asarray(zflat, dtype=float)
        w = np.concatenate([self.metric.coeffs, 1.0 / self.metric.coeffs])
        return (zflat - self.offset.flat) @ (self.basis * w).T

    def project_flat(self, zflat: np.ndarray) -> np.ndarray:
        return self.offset.flat + self.coords_flat(zflat) @ self.basis

    def dist_flat(self, zflat: np.ndarray) -> np.ndarray:
        r = np.asarray(zflat, dtype=float) - self.project_flat(zflat)
        return self.metric.norm_flat(r)

    def embed_flat(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        if c.shape[-1] != self.dim:
            raise DimensionMismatchError(f"expected {self.dim} chart coordinates")
        return self.offset.flat + c @ self.basis


def project(z: PhaseVector, E: AffineSubspace) -> PhaseVector:
    """Closest point of E to z in the energy norm."""
    if z.n_edges != E.metric.n_edges:
        raise DimensionMismatchError("state and subspace live in different phase spaces")
    return PhaseVector.from_flat(E.project_flat(z.flat))


def dist(z: PhaseVector, E: AffineSubspace) -> float:
    """Energy distance from z to E."""
    if z.n_edges != E.metric.n_edges:
        raise DimensionMismatchError("state and subspace live in different phase spaces")
    return float(E.dist_flat(z.flat))


def coords(z: PhaseVector, E: AffineSubspace) -> np.ndarray:
    """Chart coordinates of a point of E; errors if z is off the subspace."""
    d = dist(z, E)
    if d >= 1e-8:
        raise OffSubspaceError(f"point is at energy distance {d:.3e} from the subspace")
    return E.coords_flat(z.flat)


def embed(c: np.ndarray, E: AffineSubspace) -> PhaseVector:
    """Inverse chart: Euclidean coordinates to a point of E (an isometry)."""
    return PhaseVector.from_flat(E.embed_flat(c))


def normal_basis(E: AffineSubspace) -> np.ndarray:
    """Energy-orthonormal basis of the orthogonal complement of E0, as rows.

    Computed in T-coordinates, where the energy inner product is Euclidean,
    via an SVD-based null space.
    """
    m = E.metric
    n2 = 2 * m.n_edges
    if E.dim == 0:
        tperp = np.eye(n2)
    else:
        bt = m.to_t(E.basis)
        u, s, vt = np.linalg.svd(bt, full_matrices=True)
        tperp = vt[E.dim:]
    return m.from_t(tperp)
