"""Phase-space states, the energy norm, and the per-edge T-transform.

A state pairs potential differences with fluxes, one of each per edge.  The
energy norm

    ||z||^2 = sum_e  c_e |eps_e|^2 + c_e^{-1} |sigma_e|^2

comes from an inner product, and the per-edge linear map

    T_e(eps, sigma) = (sqrt(c) eps / sqrt(2) + sigma / (sqrt(2) sqrt(c)),
                       sqrt(c) eps / sqrt(2) - sigma / (sqrt(2) sqrt(c)))

carries it to the Euclidean norm of R^2 with unit Jacobian.  Everything
downstream (grids, projections, Gaussian charts) works in T-coordinates so
that Lebesgue/Hausdorff reference measures agree with the energy geometry.

Array layout convention used across the package: a "flat" state vector is the
length-2N concatenation [eps_1..eps_N, sigma_1..sigma_N]; batches stack such
rows.  T-coordinate arrays use the analogous layout [t1_1..t1_N, t2_1..t2_N].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError


@dataclass(frozen=True, eq=False)
class EnergyMetric:
    """Per-edge coefficients c_e > 0 plus the length scale ell of the BL norm."""

    coeffs: np.ndarray
    ell: float = 1.0

    def __post_init__(self):
        coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if coeffs.ndim != 1 or coeffs.size < 1:
            raise DimensionMismatchError("coeffs must be a 1-d array with N >= 1 entries")
        if not np.all(np.isfinite(coeffs)) or np.any(coeffs <= 0):
            raise ValueError("energy coefficients must be finite and strictly positive")
        if not (np.isfinite(self.ell) and self.ell > 0):
            raise ValueError("ell must be a positive real")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n_edges(self) -> int:
        return self.coeffs.size

    # Cached square roots used by the T-transform.
    @property
    def _sqrt_c(self) -> np.ndarray:
        return np.sqrt(self.coeffs)

    def inner_flat(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Energy inner product of flat vectors (batched on leading axes)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        n = self.n_edges
        if a.shape[-1] != 2 * n or b.shape[-1] != 2 * n:
            raise DimensionMismatchError(
                f"flat vectors must have length {2 * n}, got {a.shape[-1]} and {b.shape[-1]}"
            )
        w = np.concatenate([self.coeffs, 1.0 / self.coeffs])
        return np.sum(a * b * w, axis=-1)

    def norm_flat(self, a: np.ndarray) -> np.ndarray:
        return np.sqrt(self.inner_flat(a, a))

    def to_t(self, zflat: np.ndarray) -> np.ndarray:
        """Map flat [eps, sigma] coordinates to flat [t1, t2] coordinates."""
        zflat = np.asarray(zflat, dtype=float)
        n = self.n_edges
        if zflat.shape[-1] != 2 * n:
            raise DimensionMismatchError(f"expected last axis {2 * n}, got {zflat.shape[-1]}")
        eps = zflat[..., :n]
        sig = zflat[..., n:]
        t1, t2 = t_transform(eps, sig, self.coeffs)
        return np.concatenate([t1, t2], axis=-1)

    def from_t(self, tflat: np.ndarray) -> np.ndarray:
        tflat = np.asarray(tflat, dtype=float)
        n = self.n_edges
        if tflat.shape[-1] != 2 * n:
            raise DimensionMismatchError(f"expected last axis {2 * n}, got {tflat.shape[-1]}")
        eps, sig = t_inverse(tflat[..., :n], tflat[..., n:], self.coeffs)
        return np.concatenate([eps, sig], axis=-1)


@dataclass(frozen=True, eq=False)
class PhaseVector:
    """A single state z = (eps, sigma) with one entry of each per edge."""

    eps: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        eps = np.atleast_1d(np.asarray(self.eps, dtype=float))
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if eps.shape != sigma.shape or eps.ndim != 1 or eps.size < 1:
            raise DimensionMismatchError("eps and sigma must be 1-d arrays of equal length N >= 1")
        if not (np.all(np.isfinite(eps)) and np.all(np.isfinite(sigma))):
            raise ValueError("phase vector entries must be finite")
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n_edges(self) -> int:
        return self.eps.size

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.eps, self.sigma])

    @classmethod
    def from_flat(cls, zflat: np.ndarray) -> "PhaseVector":
        zflat = np.asarray(zflat, dtype=float)
        if zflat.ndim != 1 or zflat.size % 2 != 0:
            raise DimensionMismatchError("flat vector must be 1-d with even length")
        n = zflat.size // 2
        return cls(zflat[:n], zflat[n:])

    def __sub__(self, other: "PhaseVector") -> "PhaseVector":
        return PhaseVector(self.eps - other.eps, self.sigma - other.sigma)

    def __add__(self, other: "PhaseVector") -> "PhaseVector":
        return PhaseVector(self.eps + other.eps, self.sigma + other.sigma)


def energy_inner(z1: PhaseVector, z2: PhaseVector, m: EnergyMetric) -> float:
    """Energy inner product <z1, z2> = sum_e c_e eps eps' + c_e^{-1} sigma sigma'."""
    if z1.n_edges != m.n_edges or z2.n_edges != m.n_edges:
        raise DimensionMismatchError(
            f"metric has {m.n_edges} edges, states have {z1.n_edges} and {z2.n_edges}"
        )
    return float(m.inner_flat(z1.flat, z2.flat))


def energy_norm(z: PhaseVector, m: EnergyMetric) -> float:
    """Energy norm of a state; the square root of energy_inner(z, z, m)."""
    return float(np.sqrt(max(energy_inner(z, z, m), 0.0)))


def t_transform(eps_e, sigma_e, c_e):
    """Per-edge map to coordinates in which the edge energy norm is Euclidean.

    Accepts scalars or broadcasting arrays.  The Euclidean norm of the output
    pair equals the edgewise energy norm of the input, and the Jacobian
    determinant has absolute value 1.
    """
    c_e = np.asarray(c_e, dtype=float)
    if np.any(c_e <= 0):
        raise ValueError("c_e must be positive")
    sq = np.sqrt(c_e)
    a = sq * np.asarray(eps_e, dtype=float) / np.sqrt(2.0)
    b = np.asarray(sigma_e, dtype=float) / (np.sqrt(2.0) * sq)
    return a + b, a - b


def t_inverse(t1, t2, c_e):
    """Inverse of :func:`t_transform` on each edge."""
    c_e = np.asarray(c_e, dtype=float)
    if np.any(c_e <= 0):
        raise ValueError("c_e must be positive")
    sq = np.sqrt(c_e)
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    eps = (t1 + t2) / (np.sqrt(2.0) * sq)
    sigma = sq * (t1 - t2) / np.sqrt(2.0)
    return eps, sigma
