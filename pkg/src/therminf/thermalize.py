"""Thermalization of empirical measures against an admissible subspace.

Pairing an atom m_p delta_p with the Gaussian kernel (beta/pi)^N
exp(-beta ||y - z||^2) and integrating z over E gives each point an exact
thermal mass

    mass(p) = m_p (beta/pi)^N (pi/beta)^(k/2) exp(-beta dist(p, E)^2),

k = dim E, because the kernel factorizes across E and its orthogonal
complement in the energy metric.  Conditional on p, the z-marginal is the
Gaussian on E centered at the projection of p with covariance (2 beta)^-1
per chart direction.  Expectations of quantities of interest therefore
reduce to exact weights times per-point Gaussian integrals, evaluated in
closed form for affine and quadratic integrands and by Monte Carlo
otherwise.  All mass bookkeeping is done in the log domain since
exp(-beta dist^2) underflows long before the weights stop mattering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .affine import AffineSubspace
from .errors import DimensionMismatchError, ZeroMassError
from .flatnorm import DiscreteSignedMeasure
from .measures import EmpiricalMeasure
from .phase import EnergyMetric
from .qoi import Expectation, QuantityOfInterest

_DROP_REL = 1e-300
_LOG_TINY = math.log(5e-324)


def thermal_weight(y, z, beta: float, metric: EnergyMetric) -> np.ndarray:
    """Pair kernel (beta/pi)^N exp(-beta ||y - z||^2), batched over rows."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    gap = metric.norm_flat(y - z)
    n = metric.n_edges
    return (beta / math.pi) ** n * np.exp(-beta * gap**2)


@dataclass(frozen=True, eq=False)
class ThermalizedDiscrete:
    """Per-point thermal masses of an empirical measure at inverse noise beta.

    Points whose mass falls below 1e-300 of the maximum are dropped;
    `dropped_mass_bound` bounds the total mass discarded that way.
    """

    points: np.ndarray
    log_masses: np.ndarray
    beta: float
    space: AffineSubspace
    projections: np.ndarray
    dists: np.ndarray
    dropped_mass_bound: float
    n_source_points: int

    @property
    def metric(self) -> EnergyMetric:
        return self.space.metric

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @cached_property
    def log_total(self) -> float:
        return float(logsumexp(self.log_masses))

    @property
    def masses(self) -> np.ndarray:
        return np.exp(self.log_masses)

    @property
    def total_mass(self) -> float:
        return math.exp(self.log_total)

    def realize(self, per_point_z_samples: int, seed: int) -> DiscreteSignedMeasure:
        return to_signed_cloud(self, per_point_z_samples, seed)


def discrete_thermal_mass(
    m: EmpiricalMeasure, E: AffineSubspace, beta: float
) -> ThermalizedDiscrete:
    """Thermalize an empirical measure: exact per-point masses against E."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    n2 = 2 * E.metric.n_edges
    if m.points.shape[1] != n2:
        raise DimensionMismatchError(
            f"measure lives on {m.points.shape[1]} coords, E on {n2}"
        )
    keep = m.weights > 0
    pts = m.points[keep]
    w = m.weights[keep]
    proj = E.project_flat(pts)
    d = E.metric.norm_flat(pts - proj)
    n = E.metric.n_edges
    k = E.dim
    log_pref = (n - 0.5 * k) * math.log(beta / math.pi)
    log_m = np.log(w) + log_pref - beta * d**2
    n_source = pts.shape[0]
    if n_source:
        cut = np.max(log_m) + math.log(_DROP_REL)
        retained = log_m >= cut
        dropped = int(np.count_nonzero(~retained))
        bound = dropped * math.exp(max(np.max(log_m) + math.log(_DROP_REL), _LOG_TINY))
    else:
        retained = keep[:0].astype(bool)
        dropped = 0
        bound = 0.0
    return ThermalizedDiscrete(
        points=pts[retained],
        log_masses=log_m[retained],
        beta=float(beta),
        space=E,
        projections=proj[retained],
        dists=d[retained],
        dropped_mass_bound=float(bound),
        n_source_points=n_source,
    )


def _require_positive_total(t: ThermalizedDiscrete):
    if t.n_points == 0 or t.log_total < _LOG_TINY or not math.isfinite(t.log_total):
        dmax = float(np.max(t.dists)) if t.n_points else math.nan
        raise ZeroMassError(
            f"total thermal mass underflows to zero at beta={t.beta}; "
            f"max point-to-E distance is {dmax:.6g}"
        )


def _conditional_z(t: ThermalizedDiscrete, idx: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map standard normals u to z-draws on E for the points in idx."""
    scale = 1.0 / math.sqrt(2.0 * t.beta)
    return t.projections[idx] + (u * scale) @ t.space.basis


def _allocation(weights: np.ndarray, n_samples: int) -> np.ndarray:
    """Mass-proportional sample counts with a floor of one per point."""
    n_p = np.maximum(1, np.floor(weights * n_samples).astype(int))
    return n_p


def expectation_h(
    f: QuantityOfInterest,
    m: EmpiricalMeasure,
    E: AffineSubspace,
    beta: float,
    n_samples: int = 10_000,
    seed: int = 0,
    stderr_method: str = "delta",
) -> Expectation:
    """Thermal expectation of f: exact point weights, per-point z-integrals.

    The weights mass(p)/total are exact, so only the per-point conditional
    Gaussian integral carries Monte Carlo error; for affine and quadratic f
    that integral is closed-form and the stderr is 0.
    """
    if stderr_method not in ("delta", "bootstrap"):
        raise ValueError("stderr_method must be 'delta' or 'bootstrap'")
    t = discrete_thermal_mass(m, E, beta)
    _require_positive_total(t)
    if f.kind == "one":
        return Expectation(1.0, 0.0)
    wt = np.exp(t.log_masses - t.log_total)
    if f.kind == "affine":
        vals = f.coeffs[:-1] @ t.projections.T + f.coeffs[-1]
        return Expectation(float(wt @ vals), 0.0)
    if f.kind == "quadratic":
        Q, c, c0 = f.quad
        basis = t.space.basis
        cov = basis.T @ basis / (2.0 * beta)
        mu = t.projections
        vals = np.einsum("pi,ij,pj->p", mu, Q, mu) + mu @ c + (np.trace(Q @ cov) + c0)
        return Expectation(float(wt @ vals), 0.0)
    # Monte Carlo over the per-point conditional Gaussians.
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    n_p = _allocation(wt, n_samples)
    rng = np.random.default_rng(seed)
    k = t.space.dim
    means = np.zeros(t.n_points)
    variances = np.zeros(t.n_points)
    batches: dict[int, np.ndarray] = {}
    # Points allocated a single sample are the bulk on fine grids; draw them
    # in one vectorized batch.  Their per-point variance is unobservable but
    # their weights are the smallest, so the delta stderr loses little.
    singles = np.nonzero(n_p == 1)[0]
    if singles.size:
        u = rng.standard_normal((singles.size, k))
        z = _conditional_z(t, singles, u)
        vals = f.evaluate(t.points[singles], z, t.metric)
        means[singles] = vals
        if stderr_method == "bootstrap":
            for i, v in zip(singles, vals):
                batches[int(i)] = np.array([v])
    for i in np.nonzero(n_p > 1)[0]:
        u = rng.standard_normal((int(n_p[i]), k))
        z = _conditional_z(t, np.full(int(n_p[i]), i), u)
        y = np.broadcast_to(t.points[i], z.shape)
        vals = f.evaluate(y, z, t.metric)
        means[i] = float(np.mean(vals))
        variances[i] = float(np.var(vals, ddof=1))
        if stderr_method == "bootstrap":
            batches[int(i)] = vals
    value = float(wt @ means)
    if stderr_method == "delta":
        stderr = float(np.sqrt(np.sum(wt**2 * variances / n_p)))
    else:
        reps = 200
        boot = np.empty(reps)
        order = sorted(batches)
        for b in range(reps):
            bm = np.array(
                [np.mean(rng.choice(batches[i], size=batches[i].size, replace=True)) for i in order]
            )
            boot[b] = float(wt[order] @ bm)
        stderr = float(np.std(boot, ddof=1))
    return Expectation(value, stderr)


def to_signed_cloud(
    t: ThermalizedDiscrete, per_point_z_samples: int, seed: int
) -> DiscreteSignedMeasure:
    """Materialize the thermal measure as a weighted cloud on Z x Z.

    Each retained point p contributes per_point_z_samples pair atoms
    (p, z_j) with z_j drawn from the conditional Gaussian on E, each
    carrying mass(p)/k, so the total weight is the thermal TV mass exactly.
    """
    if per_point_z_samples < 1:
        raise ValueError("need at least one z sample per point")
    _require_positive_total(t)
    k = per_point_z_samples
    n = t.n_points
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n * k, t.space.dim))
    idx = np.repeat(np.arange(n), k)
    z = _conditional_z(t, idx, u)
    y = t.points[idx]
    pts = np.concatenate([y, z], axis=1)
    wts = np.repeat(np.exp(t.log_masses), k) / k
    return DiscreteSignedMeasure(pts, wts, t.metric)
