"""Closed-form Gaussian ground truth for thermalized and limit measures.

The thermalized pair measure on (y, z) with z on the constraint set E has
unnormalized density B_beta^{-1} e^{-beta ||y-z||^2 - Phi(y)}.  In the
energy-orthonormal chart

    xi   = coordinates of P_E(y) on E          (k values)
    eta  = coordinates of y - P_E(y) on E0^perp (2N - k values)
    zeta = coordinates of z - P_E(y) on E0      (k values)

the exponent separates into -beta(||eta||^2 + ||zeta||^2) - Psi(xi, eta) with
Psi quadratic, so every moment and mass is exact Gaussian algebra.  Working in
energy-orthonormal bases keeps the chart's Lebesgue measure equal to the
energy-metric volume on Z and the Hausdorff measure on E.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg as sla

from .affine import AffineSubspace, normal_basis
from .errors import DimensionMismatchError, NotFiniteError
from .measures import SlidingGaussianDensity
from .phase import EnergyMetric
from .qoi import Expectation, QuantityOfInterest

_JITTER = 1e-12


def b_beta(beta: float, n_edges: int) -> float:
    """Pair-measure normalizer; satisfies b_beta * beta^N = pi^N exactly."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return (math.pi / beta) ** n_edges


def _chol_psd(A: np.ndarray, what: str) -> np.ndarray:
    """Lower Cholesky with one 1e-12 jitter retry; failure is a hard error."""
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    scale = max(1.0, float(np.max(np.abs(np.diag(A))))) if A.size else 1.0
    try:
        return np.linalg.cholesky(A + _JITTER * scale * np.eye(A.shape[0]))
    except np.linalg.LinAlgError:
        raise NotFiniteError(f"{what}: matrix is not positive definite") from None


@dataclass(frozen=True, eq=False)
class GaussianForm:
    """Unnormalized Gaussian exp(-x^T A x / 2 + b^T x + c) in a named chart."""

    chart: str
    precision: np.ndarray
    linear: np.ndarray
    const: float

    def __post_init__(self):
        A = np.asarray(self.precision, dtype=float)
        b = np.asarray(self.linear, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
            raise DimensionMismatchError("precision and linear term shapes disagree")
        if A.size and np.max(np.abs(A - A.T)) > 1e-12 * max(1.0, float(np.max(np.abs(A)))):
            raise ValueError("precision matrix must be symmetric")
        object.__setattr__(self, "precision", 0.5 * (A + A.T))
        object.__setattr__(self, "linear", b)

    @property
    def dim(self) -> int:
        return self.precision.shape[0]

    @cached_property
    def _chol(self) -> np.ndarray:
        # No jitter here: a singular precision means infinite mass, which must
        # surface as an error, never be regularized away.
        if self.dim == 0:
            return np.zeros((0, 0))
        eig = np.linalg.eigvalsh(self.precision)
        if eig[0] <= 1e-12 * max(1.0, eig[-1]):
            raise NotFiniteError(
                f"Gaussian form on chart {self.chart!r} is not positive definite "
                f"(lambda_min = {eig[0]:.3e}); the measure is not finite"
            )
        return np.linalg.cholesky(self.precision)

    @cached_property
    def mean(self) -> np.ndarray:
        if self.dim == 0:
            return np.zeros(0)
        return sla.cho_solve((self._chol, True), self.linear)

    @cached_property
    def cov(self) -> np.ndarray:
        if self.dim == 0:
            return np.zeros((0, 0))
        return sla.cho_solve((self._chol, True), np.eye(self.dim))

    @property
    def log_mass(self) -> float:
        """log of the total integral over the chart."""
        L = self._chol
        logdet = 2.0 * float(np.sum(np.log(np.diag(L)))) if self.dim else 0.0
        val = (
            0.5 * self.dim * math.log(2.0 * math.pi)
            - 0.5 * logdet
            + self.const
            + 0.5 * float(self.linear @ self.mean)
        )
        if not math.isfinite(val):
            raise NotFiniteError(f"Gaussian mass on chart {self.chart!r} is not finite")
        return val


def _chart_blocks(d: SlidingGaussianDensity, E: AffineSubspace):
    """Energy-orthonormal chart data shared by the oracle operations."""
    met = d.metric
    n2 = 2 * d.n_edges
    k = E.dim
    U = met.to_t(E.basis).T if k else np.zeros((n2, 0))
    Pn = normal_basis(E)
    P = met.to_t(Pn).T if Pn.shape[0] else np.zeros((n2, 0))
    J = np.concatenate([U, P], axis=1)
    a = met.to_t(E.offset.flat)
    Ht, lt, c0 = d.quad_in_t()
    M = J.T @ Ht @ J
    q = J.T @ (Ht @ a + lt)
    c_ = 0.5 * float(a @ Ht @ a) + float(lt @ a) + c0
    return met, n2, k, U, P, J, a, M, q, c_


def _flat_pair_map(met: EnergyMetric):
    n2 = 2 * met.n_edges
    Winv = met.from_t(np.eye(n2)).T
    G = np.zeros((2 * n2, 2 * n2))
    G[:n2, :n2] = Winv
    G[n2:, n2:] = Winv
    return G


@dataclass(frozen=True, eq=False)
class ThermalMoments:
    """Exact moments of the thermalized pair measure at one beta.

    mean and cov describe the (y, z) pair in flat coordinates (4N entries:
    y's eps/sigma block then z's).  Chart quantities are kept for samplers.
    """

    beta: float
    n_edges: int
    dim_e: int
    tv_mass: float
    log_tv_mass: float
    mean: np.ndarray
    cov: np.ndarray
    form: GaussianForm
    mean_chart: np.ndarray
    _push: np.ndarray
    _shift: np.ndarray

    @property
    def mean_y(self) -> np.ndarray:
        return self.mean[: 2 * self.n_edges]

    @property
    def mean_z(self) -> np.ndarray:
        return self.mean[2 * self.n_edges :]

    @property
    def cov_y(self) -> np.ndarray:
        n2 = 2 * self.n_edges
        return self.cov[:n2, :n2]

    @property
    def cov_z(self) -> np.ndarray:
        n2 = 2 * self.n_edges
        return self.cov[n2:, n2:]

    def mean_pair_gap_sq(self) -> float:
        """E[||y - z||^2] under the normalized measure; decays like 1/beta."""
        # ||y - z||^2 = |eta|^2 + |zeta|^2 in the chart; zeta has mean 0 and
        # covariance (2 beta)^{-1} I_k.
        k = self.dim_e
        eta = slice(k, 2 * self.n_edges)
        m_eta = self.mean_chart[eta]
        cov_eta = self.form.cov[eta, eta]
        return float(m_eta @ m_eta) + float(np.trace(cov_eta)) + k / (2.0 * self.beta)


def thermalized_moments(
    d: SlidingGaussianDensity, E: AffineSubspace, beta: float
) -> ThermalMoments:
    """Total mass, mean, and covariance of the thermalized pair measure."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    met, n2, k, U, P, J, a, M, q, c_ = _chart_blocks(d, E)
    dim = n2 + k
    A = np.zeros((dim, dim))
    A[:n2, :n2] = M
    A[np.arange(k, n2), np.arange(k, n2)] += 2.0 * beta
    A[np.arange(n2, dim), np.arange(n2, dim)] = 2.0 * beta
    b = np.concatenate([-q, np.zeros(k)])
    form = GaussianForm(chart="xi-eta-zeta", precision=A, linear=b, const=-c_)
    N = d.n_edges
    log_tv = N * (math.log(beta) - math.log(math.pi)) + form.log_mass
    mean_x = form.mean
    cov_x = form.cov
    # Push (xi, eta, zeta) -> (y_T, z_T): y = a + J (xi, eta), z = a + U (xi + zeta).
    L = np.zeros((2 * n2, dim))
    L[:n2, :n2] = J
    L[n2:, :k] = U
    L[n2:, n2:] = U
    G = _flat_pair_map(met)
    push = G @ L
    shift = G @ np.concatenate([a, a])
    mean = shift + push @ mean_x
    cov = push @ cov_x @ push.T
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise NotFiniteError("thermalized moments are not finite")
    return ThermalMoments(
        beta=float(beta),
        n_edges=N,
        dim_e=k,
        tv_mass=math.exp(log_tv),
        log_tv_mass=log_tv,
        mean=mean,
        cov=cov,
        form=form,
        mean_chart=mean_x,
        _push=push,
        _shift=shift,
    )


@dataclass(frozen=True, eq=False)
class LimitMoments:
    """Exact moments of the diagonal concentration limit on E."""

    tv_mass: float
    log_tv_mass: float
    dim_e: int
    n_edges: int
    mean_chart: np.ndarray
    cov_chart: np.ndarray
    mean_z: np.ndarray
    cov_z: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        """Pair mean on the diagonal (y = z)."""
        return np.concatenate([self.mean_z, self.mean_z])

    @property
    def cov(self) -> np.ndarray:
        C = self.cov_z
        return np.block([[C, C], [C, C]])


def limit_moments(d: SlidingGaussianDensity, E: AffineSubspace) -> LimitMoments:
    """Moments of e^{-Phi} dH^N on E, pushed to the diagonal of the pair space."""
    met, n2, k, U, P, J, a, M, q, c_ = _chart_blocks(d, E)
    A_E = M[:k, :k]
    b_E = -q[:k]
    eigs = np.linalg.eigvalsh(A_E) if k else np.array([1.0])
    if k and eigs[0] <= 1e-12 * max(1.0, eigs[-1]):
        raise NotFiniteError(
            f"potential restricted to E is degenerate (lambda_min = {eigs[0]:.3e}); "
            "the limit measure is not finite"
        )
    form = GaussianForm(chart="E-chart", precision=A_E, linear=b_E, const=-c_)
    log_tv = form.log_mass
    mean_chart = form.mean
    cov_chart = form.cov
    Winv = met.from_t(np.eye(n2)).T
    mean_z = Winv @ (a + U @ mean_chart)
    cov_z = Winv @ (U @ cov_chart @ U.T) @ Winv.T
    return LimitMoments(
        tv_mass=math.exp(log_tv),
        log_tv_mass=log_tv,
        dim_e=k,
        n_edges=d.n_edges,
        mean_chart=mean_chart,
        cov_chart=cov_chart,
        mean_z=mean_z,
        cov_z=cov_z,
    )


def expectation_infty(
    f: QuantityOfInterest,
    d: SlidingGaussianDensity,
    E: AffineSubspace,
    n_mc: int = 100_000,
    seed: int = 0,
) -> Expectation:
    """E_infty[f] under the normalized limit measure (diagonal pairs).

    Closed form for constant, affine, and quadratic QoIs; exact Gaussian
    Monte Carlo with reported standard error otherwise.  The gap QoI is 0 by
    diagonal support.
    """
    lm = limit_moments(d, E)
    if f.kind == "one":
        return Expectation(1.0, 0.0)
    if f.kind == "gap":
        return Expectation(0.0, 0.0)
    if f.kind == "affine":
        c = f.coeffs
        if c.size - 1 != lm.mean_z.size:
            raise DimensionMismatchError("QoI dimension does not match the system")
        return Expectation(float(lm.mean_z @ c[:-1] + c[-1]), 0.0)
    if f.kind == "quadratic":
        Q, c, c0 = f.quad
        Q = np.asarray(Q, dtype=float)
        c = np.asarray(c, dtype=float)
        mu, C = lm.mean_z, lm.cov_z
        val = float(mu @ Q @ mu + np.trace(Q @ C) + c @ mu + c0)
        return Expectation(val, 0.0)
    cloud = sample_limit(d, E, n_mc, seed)
    vals = f.evaluate(cloud.y_points, cloud.z_points, d.metric)
    return Expectation(float(np.mean(vals)), float(np.std(vals) / math.sqrt(n_mc)))


@dataclass(frozen=True, eq=False)
class PairCloud:
    """Equal-weight point cloud on the pair space (rows are [y | z] flat)."""

    points: np.ndarray
    point_weight: float
    n_edges: int

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def y_points(self) -> np.ndarray:
        return self.points[:, : 2 * self.n_edges]

    @property
    def z_points(self) -> np.ndarray:
        return self.points[:, 2 * self.n_edges :]

    @property
    def total_mass(self) -> float:
        return self.point_weight * self.n_points


def _draw_normals(n: int, dim: int, seed: int, normals) -> np.ndarray:
    if normals is None:
        return np.random.default_rng(seed).standard_normal((n, dim))
    u = np.asarray(normals, dtype=float)
    if u.shape[0] < n or u.shape[1] < dim:
        raise DimensionMismatchError(
            f"shared normal block of shape {u.shape} is smaller than ({n}, {dim})"
        )
    return u[:n, :dim]


def sample_thermalized(
    d: SlidingGaussianDensity,
    E: AffineSubspace,
    beta: float,
    n: int,
    seed: int,
    normals: np.ndarray | None = None,
) -> PairCloud:
    """n exact draws from the normalized pair measure, weight tv_mass/n each.

    Sampling goes through the precision Cholesky in the (xi, eta, zeta) chart
    with the xi block leading, so a shared `normals` block couples draws
    across beta values: as beta grows the xi components converge to the limit
    sampler's draws from the same block (common random numbers).
    """
    if n < 1:
        raise ValueError("need at least one sample")
    tm = thermalized_moments(d, E, beta)
    u = _draw_normals(n, tm.form.dim, seed, normals)
    L = tm.form._chol
    x = tm.mean_chart + sla.solve_triangular(L.T, u.T, lower=False).T
    pts = tm._shift + x @ tm._push.T  # push matrix includes the T->flat map
    return PairCloud(points=pts, point_weight=tm.tv_mass / n, n_edges=tm.n_edges)


def sample_limit(
    d: SlidingGaussianDensity,
    E: AffineSubspace,
    n: int,
    seed: int,
    normals: np.ndarray | None = None,
) -> PairCloud:
    """n exact draws from the normalized limit measure as diagonal pairs.

    Uses the leading E-chart columns of the shared `normals` block, matching
    the xi-first ordering of sample_thermalized for coupled studies.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    lm = limit_moments(d, E)
    met, n2, k, U, _, _, a, M, q, c_ = _chart_blocks(d, E)
    if k:
        u = _draw_normals(n, k, seed, normals)
        L = _chol_psd(M[:k, :k], "limit precision on the E-chart")
        x = lm.mean_chart + sla.solve_triangular(L.T, u.T, lower=False).T
    else:
        x = np.zeros((n, 0))
    z = met.from_t(a + x @ U.T)
    pts = np.concatenate([z, z], axis=1)
    return PairCloud(points=pts, point_weight=lm.tv_mass / n, n_edges=d.n_edges)
