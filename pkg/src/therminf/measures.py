"""Material likelihoods: sliding-Gaussian densities, empirical point measures,
tensor-grid discretization, partition assumption checks, and the
transversality certificate.

The sliding-Gaussian log-potential on phase space is

    Phi(y) = sum_e (c_e^{-1} / (2 s_e^2)) |sigma_e - c_e eps_e|^2 .

In the T-coordinates of each edge it reduces to t2^2 / s^2, so the density
e^{-Phi} factorizes over edges into a Lebesgue direction (t1, the material
line) and a Gaussian direction (t2).  Grids, cell masses and exact samplers
all exploit that product form; the generic quadratic branch supports the
abstract sub-Gaussian machinery (certificates, oracle moments) only.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .affine import AffineSubspace
from .errors import (
    DatasetFormatError,
    DimensionMismatchError,
    GridCapError,
    TransversalityError,
)
from .network import Network
from .phase import EnergyMetric, PhaseVector

GRID_CAP_DEFAULT = 10_000_000


def _erf(x):
    # scipy's erf is the platform's C implementation, accurate to < 1e-15 abs.
    return special.erf(x)


def _erf_diff(alpha, beta):
    """erf(beta) - erf(alpha) for beta >= alpha, relatively accurate in the tails.

    The plain difference keeps only absolute accuracy: once both endpoints sit
    in the same tail it returns ulp noise (or exact zero) instead of the true
    e^{-alpha^2}-scale mass.  Same-sign intervals therefore go through erfcx:
    erf(hi) - erf(lo) = e^{-lo^2} (erfcx(lo) - e^{lo^2 - hi^2} erfcx(hi)) with
    0 <= lo <= hi, where the bracket never loses more than a few digits for
    cell widths bounded away from zero.  Straddling intervals add two positive
    erf values and need no rewrite.
    """
    alpha, beta = np.broadcast_arrays(
        np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float)
    )
    shape = alpha.shape
    alpha = np.atleast_1d(alpha).ravel()
    beta = np.atleast_1d(beta).ravel()
    out = special.erf(beta) - special.erf(alpha)
    pos = (alpha >= 0.0) & (beta >= 0.0)
    neg = (alpha <= 0.0) & (beta <= 0.0)
    lo_all = np.where(pos, alpha, -beta)
    tail = (pos | neg) & np.isfinite(lo_all)
    if np.any(tail):
        lo = lo_all[tail]
        hi = np.where(pos, beta, -alpha)[tail]
        bracket = special.erfcx(lo) - np.exp(lo * lo - hi * hi) * special.erfcx(hi)
        out[tail] = np.exp(-lo * lo) * bracket
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# densities


@dataclass(frozen=True, eq=False)
class SlidingGaussianDensity:
    """Unnormalized density e^{-Phi} with quadratic Phi >= const.

    Always carries the quadratic data (H, lin, const) with
    Phi(y) = 0.5 y^T H y + lin^T y + const in flat [eps, sigma] coordinates.
    The per-edge sliding form additionally records the noise scales, which
    unlock the product-form grid and sampling pathways.
    """

    metric: EnergyMetric
    quad: np.ndarray
    lin: np.ndarray
    const: float
    scales: np.ndarray | None = None

    def __post_init__(self):
        n2 = 2 * self.metric.n_edges
        H = np.asarray(self.quad, dtype=float)
        lin = np.asarray(self.lin, dtype=float)
        if H.shape != (n2, n2) or lin.shape != (n2,):
            raise DimensionMismatchError("quadratic data must match 2N flat coordinates")
        if np.max(np.abs(H - H.T)) > 1e-12 * max(1.0, float(np.max(np.abs(H)))):
            raise ValueError("quadratic form must be symmetric")
        H = 0.5 * (H + H.T)
        eig = np.linalg.eigvalsh(H)
        if eig[0] < -1e-10 * max(1.0, eig[-1]):
            raise ValueError(f"quadratic form must be PSD (lambda_min = {eig[0]:.3e})")
        object.__setattr__(self, "quad", H)
        object.__setattr__(self, "lin", lin)
        if self.scales is not None:
            s = np.asarray(self.scales, dtype=float)
            if s.shape != (self.metric.n_edges,) or np.any(s <= 0):
                raise ValueError("scales must be positive, one per edge")
            object.__setattr__(self, "scales", s)

    @property
    def n_edges(self) -> int:
        return self.metric.n_edges

    @property
    def is_sliding(self) -> bool:
        return self.scales is not None

    @classmethod
    def sliding(cls, coeffs, scales, ell: float = 1.0) -> "SlidingGaussianDensity":
        """Per-edge sliding-Gaussian form from coefficients and noise scales."""
        m = EnergyMetric(coeffs, ell=ell)
        n = m.n_edges
        s = np.asarray(scales, dtype=float)
        if s.shape != (n,):
            raise DimensionMismatchError("need one scale per edge")
        H = np.zeros((2 * n, 2 * n))
        for e in range(n):
            c = m.coeffs[e]
            gamma = 1.0 / (s[e] ** 2)
            # 0.5 y^T H y = (1/(2 c s^2)) (sigma - c eps)^2 on edge e
            H[e, e] = c * gamma
            H[n + e, n + e] = gamma / c
            H[e, n + e] = H[n + e, e] = -gamma
        return cls(metric=m, quad=H, lin=np.zeros(2 * n), const=0.0, scales=s)

    @classmethod
    def from_network(cls, net: Network, ell: float = 1.0) -> "SlidingGaussianDensity":
        return cls.sliding(net.coeffs, net.noise, ell=ell)

    @classmethod
    def quadratic(cls, metric: EnergyMetric, H, lin=None, const: float = 0.0) -> "SlidingGaussianDensity":
        """Generic PSD quadratic potential (no product structure assumed)."""
        n2 = 2 * metric.n_edges
        lin = np.zeros(n2) if lin is None else np.asarray(lin, dtype=float)
        return cls(metric=metric, quad=np.asarray(H, dtype=float), lin=lin, const=float(const))

    def phi_flat(self, zflat: np.ndarray) -> np.ndarray:
        z = np.asarray(zflat, dtype=float)
        return 0.5 * np.sum((z @ self.quad) * z, axis=-1) + z @ self.lin + self.const

    def quad_in_t(self) -> tuple[np.ndarray, np.ndarray, float]:
        """The quadratic data expressed in T-coordinates."""
        n2 = 2 * self.metric.n_edges
        Winv = self.metric.from_t(np.eye(n2)).T  # columns: preimages of t basis vectors
        Ht = Winv.T @ self.quad @ Winv
        lt = Winv.T @ self.lin
        return Ht, lt, self.const

    def _require_sliding(self, what: str):
        if not self.is_sliding:
            raise ValueError(f"{what} requires the per-edge sliding form")

    def minimizer_on(self, E: AffineSubspace) -> PhaseVector:
        """The unique minimizer of Phi restricted to E (its Hessian must be PD)."""
        V = E.basis
        hess = V @ self.quad @ V.T
        rhs = -V @ (self.quad @ E.offset.flat + self.lin)
        try:
            x = np.linalg.solve(hess, rhs)
        except np.linalg.LinAlgError as exc:
            raise TransversalityError("Phi restricted to E is degenerate") from exc
        return PhaseVector.from_flat(E.embed_flat(x))


def phi(y: PhaseVector, d: SlidingGaussianDensity) -> float:
    """Material log-potential at a state."""
    if y.n_edges != d.n_edges:
        raise DimensionMismatchError("state and density live in different phase spaces")
    return float(d.phi_flat(y.flat))


# ---------------------------------------------------------------------------
# empirical measures and grids


@dataclass(frozen=True, eq=False)
class GridMeta:
    """Partition metadata stored alongside grid-generated empirical measures."""

    eps_per_edge: np.ndarray
    radius: float
    center_flat: np.ndarray
    eps_h: float
    delta_h: float
    c_star: float

    def to_dict(self) -> dict:
        return {
            "eps_h": self.eps_h,
            "delta_h": self.delta_h,
            "c_star": self.c_star,
            "R": self.radius,
            "eps_per_edge": [float(v) for v in self.eps_per_edge],
            "center": [float(v) for v in self.center_flat],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GridMeta":
        return cls(
            eps_per_edge=np.asarray(doc["eps_per_edge"], dtype=float),
            radius=float(doc["R"]),
            center_flat=np.asarray(doc["center"], dtype=float),
            eps_h=float(doc["eps_h"]),
            delta_h=float(doc["delta_h"]),
            c_star=float(doc["c_star"]),
        )


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Finite weighted point set sum_p m_p delta_p on phase space."""

    points: np.ndarray
    weights: np.ndarray
    meta: GridMeta | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if pts.shape[0] != w.shape[0]:
            raise DimensionMismatchError("one weight per point required")
        if pts.shape[1] % 2 != 0:
            raise DimensionMismatchError("points must be flat [eps, sigma] rows")
        if np.any(w < 0) or not np.any(w > 0):
            raise ValueError("weights must be nonnegative with at least one positive")
        order = np.lexsort(pts.T[::-1])
        gaps = np.max(np.abs(np.diff(pts[order], axis=0)), axis=1) if len(pts) > 1 else np.array([1.0])
        if len(pts) > 1 and np.min(gaps) <= 1e-12:
            raise ValueError("points must be pairwise distinct (tolerance 1e-12)")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_edges(self) -> int:
        return self.points.shape[1] // 2

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))


def _gauss_segment_mass(a, b, s: float):
    """Integral of e^{-t^2/s^2} over [a, b]; a, b may be infinite."""
    return (s * math.sqrt(math.pi) / 2.0) * _erf_diff(np.asarray(a) / s, np.asarray(b) / s)


def cell_mass(d: SlidingGaussianDensity, cell, edge: int) -> float:
    """Mass of one edge's T-coordinate rectangle [a1,b1] x [a2,b2] under e^{-Phi}.

    Closed form: (b1 - a1) * (s sqrt(pi)/2) * (erf(b2/s) - erf(a2/s)); the
    density in T-coordinates is e^{-t2^2/s^2} with unit Jacobian.  Multi-edge
    cells multiply per-edge masses.
    """
    d._require_sliding("cell_mass")
    (a1, b1), (a2, b2) = cell
    s = d.scales[edge]
    g = float(_gauss_segment_mass(a2, b2, s))
    if g == 0.0:
        return 0.0
    return (b1 - a1) * g


def discretize(
    d: SlidingGaussianDensity,
    eps,
    radius: float,
    center: PhaseVector,
    cap: int = GRID_CAP_DEFAULT,
) -> EmpiricalMeasure:
    """Tensor grid of cell representatives with exact cell masses.

    Grid points p satisfy T_e(p_e) in eps_e * Z^2 and lie within the box of
    radius `radius` (per T-coordinate) around T(center).  Each weight is the
    exact mass of its half-open cell under e^{-Phi}.
    """
    d._require_sliding("discretize")
    m = d.metric
    n = m.n_edges
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (n,)).copy()
    if np.any(eps <= 0) or radius <= 0:
        raise ValueError("grid scales and radius must be positive")
    tc = m.to_t(center.flat)
    axes_t = []
    axes_mass = []
    total_points = 1
    for e in range(n):
        ee = eps[e]
        lo1 = math.ceil((tc[e] - radius) / ee)
        hi1 = math.floor((tc[e] + radius) / ee)
        lo2 = math.ceil((tc[n + e] - radius) / ee)
        hi2 = math.floor((tc[n + e] + radius) / ee)
        if lo1 > hi1 or lo2 > hi2:
            raise ValueError(f"truncation box around center contains no grid point on edge {e}")
        t1 = ee * np.arange(lo1, hi1 + 1)
        t2 = ee * np.arange(lo2, hi2 + 1)
        m2 = _gauss_segment_mass(t2 - ee / 2.0, t2 + ee / 2.0, d.scales[e])
        axes_t.append((t1, t2))
        axes_mass.append((np.full(t1.shape, ee), m2))
        total_points *= t1.size * t2.size
        if total_points > cap:
            raise GridCapError(
                f"grid would have more than {cap} points; "
                "reduce the radius, coarsen eps, or use the sampling pathway"
            )
    # Tensor assembly: per-edge (t1, t2) pairs, massed by the product of
    # per-edge cell masses.
    per_edge_pts = []
    per_edge_mass = []
    for e in range(n):
        t1, t2 = axes_t[e]
        w1, w2 = axes_mass[e]
        g1, g2 = np.meshgrid(t1, t2, indexing="ij")
        per_edge_pts.append(np.column_stack([g1.ravel(), g2.ravel()]))
        per_edge_mass.append(np.outer(w1, w2).ravel())
    idx = [np.arange(p.shape[0]) for p in per_edge_pts]
    mesh = np.meshgrid(*idx, indexing="ij")
    sel = [g.ravel() for g in mesh]
    tpts = np.empty((sel[0].size, 2 * n))
    mass = np.ones(sel[0].size)
    for e in range(n):
        pe = per_edge_pts[e][sel[e]]
        tpts[:, e] = pe[:, 0]
        tpts[:, n + e] = pe[:, 1]
        mass = mass * per_edge_mass[e][sel[e]]
    pts = m.from_t(tpts)
    eps_h = float(np.sqrt(np.sum(eps**2)))
    meta = GridMeta(
        eps_per_edge=eps,
        radius=float(radius),
        center_flat=center.flat,
        eps_h=eps_h,
        delta_h=0.0,
        c_star=math.sqrt(2.0),
    )
    return EmpiricalMeasure(points=pts, weights=mass, meta=meta)


def box_mass(d: SlidingGaussianDensity, radius: float, center: PhaseVector) -> float:
    """Exact mass of e^{-Phi} on the T-coordinate box of the given radius."""
    d._require_sliding("box_mass")
    m = d.metric
    n = m.n_edges
    tc = m.to_t(center.flat)
    total = 1.0
    for e in range(n):
        g = float(_gauss_segment_mass(tc[n + e] - radius, tc[n + e] + radius, d.scales[e]))
        total *= 2.0 * radius * g
    return total


def sample_empirical(
    d: SlidingGaussianDensity,
    E: AffineSubspace,
    radius: float,
    n: int,
    rng_seed: int,
    center: PhaseVector | None = None,
) -> EmpiricalMeasure:
    """n i.i.d. draws from e^{-Phi} restricted to the truncation box.

    Exact per edge: t1 is uniform on its interval, t2 is the centered Gaussian
    truncated to its interval (inverse-CDF sampling).  Weights are the uniform
    share mu_D(box)/n, so the total weight equals the box mass exactly.
    """
    d._require_sliding("sample_empirical")
    if n < 1:
        raise ValueError("need at least one sample")
    if center is None:
        center = d.minimizer_on(E)
    m = d.metric
    ne = m.n_edges
    tc = m.to_t(center.flat)
    rng = np.random.default_rng(rng_seed)
    t = np.empty((n, 2 * ne))
    for e in range(ne):
        lo1, hi1 = tc[e] - radius, tc[e] + radius
        t[:, e] = rng.uniform(lo1, hi1, size=n)
        s = d.scales[e]
        sigma_g = s / math.sqrt(2.0)
        lo2, hi2 = tc[ne + e] - radius, tc[ne + e] + radius
        flo = special.ndtr(lo2 / sigma_g)
        fhi = special.ndtr(hi2 / sigma_g)
        u = rng.uniform(flo, fhi, size=n)
        t[:, ne + e] = sigma_g * special.ndtri(u)
    pts = m.from_t(t)
    w = np.full(n, box_mass(d, radius, center) / n)
    return EmpiricalMeasure(points=pts, weights=w, meta=None)


# ---------------------------------------------------------------------------
# partition assumption checks


@dataclass(frozen=True)
class PartitionReport:
    eps_check: bool
    eps_worst_ratio: float
    cstar_check: bool
    cstar_worst: float
    weight_check: bool
    delta_h: float
    offending_cells: tuple = ()

    @property
    def all_ok(self) -> bool:
        return self.eps_check and self.cstar_check and self.weight_check


def _cell_second_moments(d: SlidingGaussianDensity, tpts: np.ndarray, eps: np.ndarray):
    """Per-cell zeroth and second T-moments about the representative.

    Returns (mass, second_moment) arrays where second_moment integrates
    |T(y - p)|^2 over the cell.  All closed form in erf/exp.
    """
    n = d.n_edges
    npts = tpts.shape[0]
    m0_edges = np.empty((npts, n))
    sm_edges = np.empty((npts, n))
    for e in range(n):
        ee = eps[e]
        s = d.scales[e]
        p2 = tpts[:, n + e]
        a = p2 - ee / 2.0
        b = p2 + ee / 2.0
        i0 = _gauss_segment_mass(a, b, s)
        # One-dimensional moments of e^{-t^2/s^2} over [a, b].
        ea = np.exp(-((a / s) ** 2))
        eb = np.exp(-((b / s) ** 2))
        i1 = (s**2 / 2.0) * (ea - eb)
        i2 = (s**3 * math.sqrt(math.pi) / 4.0) * _erf_diff(a / s, b / s) - (s**2 / 2.0) * (
            b * eb - a * ea
        )
        j2 = i2 - 2.0 * p2 * i1 + p2**2 * i0
        m0 = ee * i0
        sm = (ee**3 / 12.0) * i0 + ee * j2
        m0_edges[:, e] = m0
        sm_edges[:, e] = sm
    mass = np.prod(m0_edges, axis=1)
    second = np.zeros(npts)
    for e in range(n):
        others = np.prod(np.delete(m0_edges, e, axis=1), axis=1) if n > 1 else np.ones(npts)
        second += sm_edges[:, e] * others
    return mass, second


def verify_partition_assumptions(
    m: EmpiricalMeasure,
    d: SlidingGaussianDensity,
    E: AffineSubspace,
    rng_seed: int = 0,
    n_witness: int = 2000,
) -> PartitionReport:
    """Check the discretization assumptions for a partition-backed measure.

    (a) per-cell second moment <= eps_h^2 * mu_D(A_p);
    (b) the tightness constant c_* = sqrt(2): cells have energy diameter at
        most eps_h, so ||p - z||^2 <= 2||p - y||^2 + 2||y - z||^2 gives the
        bound analytically; randomized (y, z) witnesses double-check it;
    (c) weight deviation delta_h = max_p |m_p - mu_D(A_p)| / mu_D(A_p).
    """
    if m.meta is None:
        raise ValueError("partition metadata required")
    d._require_sliding("verify_partition_assumptions")
    met = d.metric
    eps = m.meta.eps_per_edge
    eps_h = m.meta.eps_h
    tpts = met.to_t(m.points)
    mass, second = _cell_second_moments(d, tpts, eps)
    # Far corner cells can underflow to exactly zero mass; they carry no
    # measure, so both checks are vacuous there (unless a weight disagrees).
    live = mass > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(live, second / (eps_h**2 * mass), 0.0)
    eps_worst = float(np.max(ratios))
    eps_ok = eps_worst <= 1.0 + 1e-9
    bad_eps = tuple(np.nonzero(ratios > 1.0 + 1e-9)[0].tolist())

    # Randomized c_* witnesses: y uniform in a sampled cell, z anywhere in Z.
    rng = np.random.default_rng(rng_seed)
    c_star = m.meta.c_star
    idx = rng.integers(0, m.n_points, size=n_witness)
    shift = rng.uniform(-0.5, 0.5, size=(n_witness, 2 * d.n_edges)) * np.concatenate([eps, eps])
    ty = tpts[idx] + shift
    y = met.from_t(ty)
    z = rng.normal(scale=3.0, size=(n_witness, 2 * d.n_edges))
    lhs = met.norm_flat(m.points[idx] - z) ** 2
    rhs = c_star**2 * (eps_h**2 + met.norm_flat(y - z) ** 2)
    cstar_worst = float(np.max(lhs - rhs))
    cstar_ok = cstar_worst <= 1e-9

    with np.errstate(divide="ignore", invalid="ignore"):
        dev = np.where(live, np.abs(m.weights - mass) / mass, np.where(m.weights == 0.0, 0.0, np.inf))
    delta_h = float(np.max(dev))
    weight_ok = delta_h <= 1e-12
    return PartitionReport(
        eps_check=eps_ok,
        eps_worst_ratio=eps_worst,
        cstar_check=cstar_ok,
        cstar_worst=cstar_worst,
        weight_check=weight_ok,
        delta_h=delta_h,
        offending_cells=bad_eps,
    )


# ---------------------------------------------------------------------------
# transversality


@dataclass(frozen=True)
class TransversalityCertificate:
    """Constants (c, b) with beta0 ||y-z||^2 + Phi(y) >= c(||y||^2 + ||z||^2) - b."""

    c: float
    b: float
    beta0: float
    lam_min: float

    def verify(
        self,
        d: SlidingGaussianDensity,
        E: AffineSubspace,
        n_samples: int = 10_000,
        rng_seed: int = 0,
        scale: float = 5.0,
    ) -> float:
        """Max violation of the certified inequality over random (y, z) pairs.

        Nonpositive (up to roundoff) means the certificate holds on the sample.
        """
        met = d.metric
        rng = np.random.default_rng(rng_seed)
        y = rng.normal(scale=scale, size=(n_samples, 2 * d.n_edges))
        z = E.embed_flat(rng.normal(scale=scale, size=(n_samples, E.dim)))
        lhs = (
            self.beta0 * met.norm_flat(y - z) ** 2
            + d.phi_flat(y)
            - self.c * (met.norm_flat(y) ** 2 + met.norm_flat(z) ** 2)
            + self.b
        )
        return float(-np.min(lhs))


def check_transversality(
    d: SlidingGaussianDensity, E: AffineSubspace, beta0: float
) -> TransversalityCertificate:
    """Search the largest c in (0, beta0] certifying transversality.

    In T-coordinates with z = a + U t (U orthonormal columns spanning E0 and
    a = T(e0) orthogonal to them), the inequality is the nonnegativity of a
    quadratic in w = (y, t) whose matrix is M0 - c*I with

        M0 = [[beta0 I + H/2, -beta0 U], [-beta0 U^T, beta0 I]] .

    Feasibility is therefore monotone in c; a bisection finds the boundary
    and the completed square yields b.  Feasibility keeps a 5% relative
    margin below the PSD boundary: at the exact boundary M(c) is singular
    and the constant b blows up, making the certificate useless downstream.
    """
    if beta0 <= 0:
        raise ValueError("beta0 must be positive")
    met = d.metric
    n2 = 2 * d.n_edges
    Ht, lt, c0 = d.quad_in_t()
    U = met.to_t(E.basis).T if E.dim > 0 else np.zeros((n2, 0))
    a = met.to_t(E.offset.flat)
    k = U.shape[1]
    dim = n2 + k
    M0 = np.zeros((dim, dim))
    M0[:n2, :n2] = beta0 * np.eye(n2) + 0.5 * Ht
    M0[:n2, n2:] = -beta0 * U
    M0[n2:, :n2] = -beta0 * U.T
    M0[n2:, n2:] = beta0 * np.eye(k)
    g = np.concatenate([lt - 2.0 * beta0 * a, np.zeros(k)])
    eig = np.linalg.eigvalsh(M0)
    lam_min, lam_max = float(eig[0]), float(eig[-1])
    floor = max(1e-12, 1e-10 * max(1.0, lam_max), 0.05 * lam_min)

    def feasible(c: float) -> bool:
        return lam_min - c >= floor

    if lam_min <= floor:
        raise TransversalityError(
            f"no transversality certificate at beta0={beta0}: "
            f"quadratic form has lambda_min={lam_min:.3e}"
        )
    lo, hi = 0.0, float(beta0)
    if feasible(hi):
        c = hi
    else:
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                lo = mid
            else:
                hi = mid
        c = lo
    M = M0 - c * np.eye(dim)
    sol = np.linalg.solve(M, g)
    inf_val = (beta0 - c) * float(a @ a) + c0 - 0.25 * float(g @ sol)
    b = max(0.0, -inf_val)
    return TransversalityCertificate(c=float(c), b=float(b), beta0=float(beta0), lam_min=lam_min)


def suggest_radius(
    cert: TransversalityCertificate,
    d: SlidingGaussianDensity,
    E: AffineSubspace,
    tol: float = 1e-6,
) -> float:
    """Truncation radius making the certified tail below tol of the bulk.

    Uses the sub-Gaussian tail e^{b - (c/4)||xi||^2} from the certificate: the
    mass beyond radius R is bounded by e^b (4 pi / c)^{N/2} P(chi2_N > c R^2 / 2),
    compared against the exact limit-measure mass on E.
    """
    N = E.dim
    V = E.basis
    hess = V @ d.quad @ V.T
    eigs = np.linalg.eigvalsh(hess)
    if eigs[0] <= 0:
        raise TransversalityError("Phi restricted to E is not positive definite")
    xmin = d.minimizer_on(E)
    phimin = float(d.phi_flat(xmin.flat))
    log_bulk = -phimin + 0.5 * N * math.log(2.0 * math.pi) - 0.5 * float(np.sum(np.log(eigs)))
    c, b = cert.c, cert.b

    def log_tail(r: float) -> float:
        surv = special.chdtrc(N, c * r * r / 2.0)
        if surv <= 0.0:
            return -math.inf
        return b + 0.5 * N * math.log(4.0 * math.pi / c) + math.log(surv)

    target = math.log(tol) + log_bulk
    lo, hi = 1e-3, 1e4
    if log_tail(hi) > target:
        raise TransversalityError("cannot reach requested truncation tolerance")
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if log_tail(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


# ---------------------------------------------------------------------------
# dataset I/O


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_suffix(".meta.json") if p.suffix == ".csv" else Path(str(p) + ".meta.json")


def write_dataset(m: EmpiricalMeasure, path) -> None:
    """CSV with columns eps_1..eps_N, sigma_1..sigma_N, weight (header row).

    Floats are written with repr round-tripping, so re-reading reproduces the
    measure bit-exactly.  Partition metadata goes to a JSON sidecar.
    """
    n = m.n_edges
    header = [f"eps_{e + 1}" for e in range(n)] + [f"sigma_{e + 1}" for e in range(n)] + ["weight"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row, w in zip(m.points, m.weights):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(w))])
    if m.meta is not None:
        with open(sidecar_path(path), "w", encoding="utf-8") as fh:
            json.dump(m.meta.to_dict(), fh, indent=2)
            fh.write("\n")


def read_dataset(path) -> EmpiricalMeasure:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty dataset file") from None
        if not header or header[-1] != "weight" or (len(header) - 1) % 2 != 0:
            raise DatasetFormatError(
                f"{path}: header must be eps_1..eps_N, sigma_1..sigma_N, weight"
            )
        n = (len(header) - 1) // 2
        expected = [f"eps_{e + 1}" for e in range(n)] + [f"sigma_{e + 1}" for e in range(n)]
        if header[:-1] != expected:
            raise DatasetFormatError(f"{path}: unexpected column names {header[:-1]}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetFormatError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DatasetFormatError(f"{path}: dataset has no points")
    arr = np.asarray(rows)
    meta = None
    sp = sidecar_path(path)
    if sp.exists():
        with open(sp, "r", encoding="utf-8") as fh:
            meta = GridMeta.from_dict(json.load(fh))
    return EmpiricalMeasure(points=arr[:, :-1], weights=arr[:, -1], meta=meta)
