"""Cooling schedules and flat-norm convergence studies.

A schedule pairs grid scales eps_h with inverse noise levels beta_h.  The
error of the discretized thermal measure against the limit splits as

    FN(mu_h_beta, mu_inf) <= FN(mu_h_beta, mu_beta) + FN(mu_beta, mu_inf),

an approximation term growing like sqrt(beta) eps and a thermalization term
decaying like 1/sqrt(beta), balanced by beta = c / eps.  The study measures
all three distances per level on Monte Carlo realizations, fits log-log
rates, and enforces the triangle inequality up to the seed-spread budget.

Thermal and limit clouds share one normal block per seed (the chart orders
the on-subspace coordinates first), so their coupled flat-norm distance
reflects the thermalization gap rather than independent sampling noise.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .affine import AffineSubspace
from .errors import ScheduleError, TherminfError
from .flatnorm import DiscreteSignedMeasure, fn_distance_measures
from .measures import (
    SlidingGaussianDensity,
    check_transversality,
    discretize,
    suggest_radius,
    verify_partition_assumptions,
)
from .network import Network, constraint_subspace
from .oracle import limit_moments, sample_limit, sample_thermalized, thermalized_moments
from .thermalize import ThermalizedDiscrete, discrete_thermal_mass

_BETA_EPS_SLACK = 1.0 + 1e-9


@dataclass(frozen=True)
class Schedule:
    """Grid scales with matched inverse noise levels.

    The sequence beta_h * eps_h^2 must not grow along the list; that is the
    finite-list form of the boundedness assumption that the convergence
    theory needs, and it is what a schedule like beta = eps^-3 violates.
    """

    eps_list: tuple
    beta_list: tuple
    rule: str = "custom"

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        beta = tuple(float(b) for b in self.beta_list)
        if len(eps) != len(beta) or not eps:
            raise ScheduleError("need matching, nonempty eps and beta lists")
        if any(e <= 0 for e in eps) or any(b <= 0 for b in beta):
            raise ScheduleError("eps and beta must be positive")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ScheduleError("eps must be strictly decreasing")
        prod = [b * e * e for e, b in zip(eps, beta)]
        for a, b in zip(prod, prod[1:]):
            if b > a * _BETA_EPS_SLACK:
                raise ScheduleError(
                    f"beta_h * eps_h^2 grows along the schedule ({a:.6g} -> {b:.6g}); "
                    "it must stay bounded"
                )
        object.__setattr__(self, "eps_list", eps)
        object.__setattr__(self, "beta_list", beta)

    def __len__(self) -> int:
        return len(self.eps_list)


def make_schedule(eps_list, c: float) -> Schedule:
    """Optimal cooling schedule beta_h = c / eps_h."""
    if c <= 0:
        raise ScheduleError("c must be positive")
    eps = [float(e) for e in eps_list]
    return Schedule(tuple(eps), tuple(c / e for e in eps), rule="optimal")


def default_c(eps_list, beta0: float) -> float:
    """Smallest c keeping beta_h >= 2 * beta0 at the coarsest level."""
    if beta0 <= 0:
        raise ScheduleError("beta0 must be positive")
    return 2.0 * beta0 * max(float(e) for e in eps_list)


def _ols_loglog(xs, ys):
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.asarray(ys, dtype=float))
    n = x.size
    xbar = float(np.mean(x))
    ybar = float(np.mean(y))
    sxx = float(np.sum((x - xbar) ** 2))
    if sxx == 0.0:
        raise ValueError("xs are all identical; no slope is identifiable")
    slope = float(np.sum((x - xbar) * (y - ybar)) / sxx)
    intercept = ybar - slope * xbar
    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ybar) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    if n > 2 and ss_res > 0.0:
        stderr = math.sqrt(ss_res / (n - 2) / sxx)
    else:
        stderr = 0.0
    return slope, float(intercept), float(r_squared), stderr


def rate_fit(xs, ys) -> dict:
    """Log-log least squares: {slope, intercept, r_squared}.

    Exact on power laws: ys = a * xs^p returns slope p and r_squared 1.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3 or ys.size != xs.size:
        raise ValueError("need at least 3 paired points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("rate fits require strictly positive values")
    slope, intercept, r2, _ = _ols_loglog(xs, ys)
    return {"slope": slope, "intercept": intercept, "r_squared": r2}


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-level flat-norm distances with fitted rates.

    rows: one dict per level h with keys eps_h, beta_h, fn_therm, fn_approx,
    fn_total, tv_masses, mc_errors.  fits: log-log slopes with two-sigma
    confidence intervals.  meta: certificate and sampling provenance.
    """

    rows: list
    fits: dict
    meta: dict

    def __post_init__(self):
        for row in self.rows:
            budget = 3.0 * sum(row["mc_errors"].values())
            lhs = row["fn_total"]
            rhs = row["fn_therm"] + row["fn_approx"] + budget
            if lhs > rhs * (1 + 1e-9) + 1e-12:
                raise TherminfError(
                    f"triangle inequality violated at eps_h={row['eps_h']}: "
                    f"fn_total={lhs:.6g} > fn_therm+fn_approx+budget={rhs:.6g}"
                )

    def to_csv(self, path) -> None:
        cols = [
            "eps_h", "beta_h", "fn_therm", "fn_approx", "fn_total",
            "tv_grid", "tv_thermal", "tv_limit",
            "mc_therm", "mc_approx", "mc_total",
        ]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in self.rows:
                w.writerow(
                    [
                        repr(row["eps_h"]),
                        repr(row["beta_h"]),
                        repr(row["fn_therm"]),
                        repr(row["fn_approx"]),
                        repr(row["fn_total"]),
                        repr(row["tv_masses"]["grid"]),
                        repr(row["tv_masses"]["thermal"]),
                        repr(row["tv_masses"]["limit"]),
                        repr(row["mc_errors"]["therm"]),
                        repr(row["mc_errors"]["approx"]),
                        repr(row["mc_errors"]["total"]),
                    ]
                )

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"rows": self.rows, "fits": self.fits, "meta": self.meta}, fh, indent=2)


def _as_signed(points: np.ndarray, total: float, metric) -> DiscreteSignedMeasure:
    n = points.shape[0]
    return DiscreteSignedMeasure(points, np.full(n, total / n), metric)


def _validate_mc(mc: dict) -> tuple:
    k = int(mc.get("k", 2000))
    seeds = tuple(int(s) for s in mc.get("seeds", (0, 1, 2)))
    if k < 10:
        raise ValueError("mc['k'] must be at least 10")
    if len(seeds) < 3:
        raise ValueError("mc spread needs at least 3 seeds")
    return k, seeds


def convergence_study(
    net: Network,
    schedule: Schedule,
    mc: dict,
    radius: float | None = None,
    beta0: float | None = None,
    tail_tol: float = 1e-6,
    n_threads: int = 1,
) -> ConvergenceReport:
    """Measure fn_therm, fn_approx and fn_total per level and fit the rates.

    Aborts if transversality fails at beta0 (default: half the smallest
    beta in the schedule) or if any grid fails its partition checks.
    """
    k, seeds = _validate_mc(mc)
    dens = SlidingGaussianDensity.from_network(net)
    E = constraint_subspace(net)
    if beta0 is None:
        beta0 = 0.5 * min(schedule.beta_list)
    cert = check_transversality(dens, E, beta0)
    if radius is None:
        radius = suggest_radius(cert, dens, E, tol=tail_tol)
    center = dens.minimizer_on(E)
    lim = limit_moments(dens, E)
    dim_chart = 2 * net.n_edges + E.dim

    def limit_cloud(kk: int, s: int) -> DiscreteSignedMeasure:
        u = np.random.default_rng([int(s), 0xA51]).standard_normal((kk, dim_chart))
        pc = sample_limit(dens, E, kk, seed=0, normals=u)
        return _as_signed(pc.points, lim.tv_mass, E.metric)

    def study_row(level: tuple) -> dict:
        eps_h, beta_h = level
        m = discretize(dens, eps_h, radius=radius, center=center)
        part = verify_partition_assumptions(m, dens, E)
        if not part.all_ok:
            raise TherminfError(
                f"partition assumptions failed at eps_h={eps_h}: {part}"
            )
        therm = discrete_thermal_mass(m, E, beta_h)
        tm = thermalized_moments(dens, E, beta_h)

        def thermal_cloud(kk: int, s: int) -> DiscreteSignedMeasure:
            u = np.random.default_rng([int(s), 0xA51]).standard_normal((kk, dim_chart))
            pc = sample_thermalized(dens, E, beta_h, kk, seed=0, normals=u)
            return _as_signed(pc.points, tm.tv_mass, E.metric)

        def grid_cloud(kk: int, s: int) -> DiscreteSignedMeasure:
            return therm.realize(1, seed=int(s))

        d_therm = fn_distance_measures(thermal_cloud, limit_cloud, k=k, seeds=seeds)
        d_approx = fn_distance_measures(grid_cloud, thermal_cloud, k=k, seeds=seeds)
        d_total = fn_distance_measures(grid_cloud, limit_cloud, k=k, seeds=seeds)
        return {
            "eps_h": float(eps_h),
            "beta_h": float(beta_h),
            "fn_therm": d_therm["value"],
            "fn_approx": d_approx["value"],
            "fn_total": d_total["value"],
            "tv_masses": {
                "grid": therm.total_mass,
                "thermal": tm.tv_mass,
                "limit": lim.tv_mass,
            },
            "mc_errors": {
                "therm": d_therm["mc_error"],
                "approx": d_approx["mc_error"],
                "total": d_total["mc_error"],
            },
        }

    levels = list(zip(schedule.eps_list, schedule.beta_list))
    if n_threads > 1:
        # Levels are independent; map preserves schedule order, so the
        # assembled report does not depend on the thread count.
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            rows = list(pool.map(study_row, levels))
    else:
        rows = [study_row(level) for level in levels]

    fits = {}
    eps_arr = [r["eps_h"] for r in rows]
    beta_arr = [r["beta_h"] for r in rows]
    for name, xs, ys in (
        ("fn_total_vs_eps", eps_arr, [r["fn_total"] for r in rows]),
        ("fn_therm_vs_beta", beta_arr, [r["fn_therm"] for r in rows]),
        ("fn_approx_vs_eps", eps_arr, [r["fn_approx"] for r in rows]),
    ):
        if len(xs) >= 3 and len(set(map(float, xs))) >= 2 and all(v > 0 for v in ys):
            slope, intercept, r2, se = _ols_loglog(xs, ys)
            fits[name] = {
                "slope": slope,
                "intercept": intercept,
                "r_squared": r2,
                "slope_stderr": se,
                "slope_ci": [slope - 2 * se, slope + 2 * se],
            }
    meta = {
        "beta0": float(beta0),
        "beta0_at_most_half_min_beta": bool(beta0 <= 0.5 * min(schedule.beta_list) + 1e-12),
        "certificate": {"c": cert.c, "b": cert.b, "lam_min": cert.lam_min},
        "radius": float(radius),
        "k": k,
        "seeds": list(seeds),
        "rule": schedule.rule,
    }
    return ConvergenceReport(rows=rows, fits=fits, meta=meta)


def cauchy_diagnostic(
    measures: list,
    mc: dict,
    threshold: float = 0.05,
    per_point_z_samples: int = 1,
) -> dict:
    """Pairwise flat-norm matrix over a sequence of thermalized measures.

    Verdict is "Cauchy-consistent" iff the successive distances d(h, h+1)
    are non-increasing and the last one falls below the threshold.  Also
    reports total-mass boundedness and a tail-mass tightness proxy (the
    fraction of each measure's mass outside the 99% radius of the first).
    """
    if len(measures) < 2:
        raise ValueError("need at least two measures to compare")
    for t in measures:
        if not isinstance(t, ThermalizedDiscrete):
            raise TypeError("cauchy_diagnostic expects ThermalizedDiscrete inputs")
    met = measures[0].metric
    for t in measures[1:]:
        if t.metric.n_edges != met.n_edges or t.metric.ell != met.ell:
            raise ValueError("measures live on different phase spaces")
    k, seeds = _validate_mc(mc)
    n = len(measures)
    mat = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            # Shared seeds couple the conditional z draws (common random
            # numbers) and make identical measures compare to exactly zero.
            out = fn_distance_measures(
                lambda kk, s, t=measures[i]: t.realize(per_point_z_samples, seed=int(s)),
                lambda kk, s, t=measures[j]: t.realize(per_point_z_samples, seed=int(s)),
                k=k,
                seeds=seeds,
            )
            mat[i, j] = mat[j, i] = out["value"]
    succ = [float(mat[i, i + 1]) for i in range(n - 1)]
    decreasing = all(a >= b - 1e-12 for a, b in zip(succ, succ[1:]))
    verdict = (
        "Cauchy-consistent"
        if decreasing and succ[-1] <= threshold
        else "not Cauchy-consistent"
    )
    tvs = [t.total_mass for t in measures]
    # Tightness proxy: mass fraction outside the 99% mass radius of the
    # first measure, all radii measured from its mass-weighted mean.
    w0 = measures[0].masses / measures[0].total_mass
    center = w0 @ measures[0].points
    r99 = _mass_radius(measures[0], center, 0.99)
    tails = []
    for t in measures:
        d = t.metric.norm_flat(t.points - center)
        w = t.masses / t.total_mass
        tails.append(float(np.sum(w[d > r99])))
    return {
        "matrix": mat,
        "successive": succ,
        "verdict": verdict,
        "threshold": threshold,
        "tv_masses": tvs,
        "tv_bounded": bool(max(tvs) < math.inf),
        "tail_fractions": tails,
        "tail_radius": float(r99),
    }


def _mass_radius(t: ThermalizedDiscrete, center: np.ndarray, q: float) -> float:
    d = t.metric.norm_flat(t.points - center)
    order = np.argsort(d)
    w = t.masses[order] / t.total_mass
    cum = np.cumsum(w)
    idx = int(np.searchsorted(cum, q))
    return float(d[order][min(idx, d.size - 1)])
