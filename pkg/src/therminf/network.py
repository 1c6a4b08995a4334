"""Transportation networks: incidence assembly, non-degeneracy, the classical
solution, and the admissible affine subspace.

A network consists of N oriented edges over n free nodes.  Potential
differences obey eps = B u + g for nodal potentials u and applied offsets g,
and fluxes obey the conservation law B^T sigma = f with nodal sources f.
Grounded terminals are eliminated: B only carries columns for free nodes.

The JSON file format is

    { "nodes": n,
      "edges": [ { "from": i | "ground", "to": j | "ground",
                   "C": c, "s": s, "g": g }, ... ],
      "sources": [ f_1, ..., f_n ] }

with optional per-edge C (default 1.0), s (default 1.0), g (default 0.0) and
0-based node indices.  An edge from a to b contributes eps_e = u_a - u_b
(ground terms read as 0).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .affine import AffineSubspace
from .errors import (
    DimensionMismatchError,
    NondegenerateNetworkError,
    SubspaceDimensionError,
)
from .phase import EnergyMetric, PhaseVector

_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Network:
    n_free_nodes: int
    incidence: np.ndarray
    coeffs: np.ndarray
    sources: np.ndarray
    applied: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.incidence, dtype=float))
        n = int(self.n_free_nodes)
        if n < 1:
            raise DimensionMismatchError("need at least one free node")
        if B.shape[1] != n:
            raise DimensionMismatchError(f"incidence must have {n} columns, got {B.shape[1]}")
        N = B.shape[0]
        coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        sources = np.atleast_1d(np.asarray(self.sources, dtype=float))
        applied = np.atleast_1d(np.asarray(self.applied, dtype=float))
        noise = np.atleast_1d(np.asarray(self.noise, dtype=float))
        if coeffs.shape != (N,) or applied.shape != (N,) or noise.shape != (N,):
            raise DimensionMismatchError("per-edge arrays must have one entry per edge")
        if sources.shape != (n,):
            raise DimensionMismatchError("sources must have one entry per free node")
        if not np.all(np.isfinite(B)):
            raise ValueError("incidence entries must be finite")
        if np.any(coeffs <= 0) or np.any(noise <= 0):
            raise ValueError("edge coefficients and noise scales must be positive")
        object.__setattr__(self, "incidence", B)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "applied", applied)
        object.__setattr__(self, "noise", noise)

    @property
    def n_edges(self) -> int:
        return self.incidence.shape[0]

    def metric(self, ell: float = 1.0) -> EnergyMetric:
        return EnergyMetric(self.coeffs, ell=ell)


def _node_index(tag, n: int, where: str) -> int | None:
    if tag == "ground":
        return None
    if isinstance(tag, bool) or not isinstance(tag, int):
        raise DimensionMismatchError(f"{where}: node must be an integer or \"ground\", got {tag!r}")
    if not 0 <= tag < n:
        raise DimensionMismatchError(f"{where}: node index {tag} out of range [0, {n})")
    return tag


def network_from_dict(doc: dict) -> Network:
    """Assemble a Network from the parsed JSON document."""
    try:
        n = int(doc["nodes"])
        edges = doc["edges"]
        sources = np.asarray(doc["sources"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise DimensionMismatchError(f"network document missing or malformed field: {exc}") from exc
    N = len(edges)
    if N < 1:
        raise DimensionMismatchError("network must have at least one edge")
    B = np.zeros((N, n))
    coeffs = np.ones(N)
    noise = np.ones(N)
    applied = np.zeros(N)
    for e, edge in enumerate(edges):
        a = _node_index(edge.get("from", "ground"), n, f"edge {e} 'from'")
        b = _node_index(edge.get("to", "ground"), n, f"edge {e} 'to'")
        if a is not None:
            B[e, a] += 1.0
        if b is not None:
            B[e, b] -= 1.0
        coeffs[e] = float(edge.get("C", 1.0))
        noise[e] = float(edge.get("s", 1.0))
        applied[e] = float(edge.get("g", 0.0))
    return Network(n, B, coeffs, sources, applied, noise)


def load_network(path) -> Network:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return network_from_dict(doc)


def check_nondegeneracy(net: Network) -> tuple[bool, float]:
    """True iff B^T C B is positive definite; also returns its smallest eigenvalue.

    The tolerance is relative: lambda_min must exceed 1e-10 times lambda_max.
    """
    B = net.incidence
    K = B.T @ (net.coeffs[:, None] * B)
    eig = np.linalg.eigvalsh(K)
    lam_min = float(eig[0])
    lam_max = float(eig[-1])
    return lam_min > _RANK_TOL * lam_max, lam_min


def classical_solution(net: Network) -> tuple[np.ndarray, PhaseVector]:
    """The unique admissible state with sigma = C eps.

    Solves u = (B^T C B)^{-1} (f - B^T C g), then eps = B u + g, sigma = C eps.
    """
    ok, lam_min = check_nondegeneracy(net)
    if not ok:
        raise NondegenerateNetworkError(
            f"B^T C B is not positive definite (lambda_min = {lam_min:.3e})"
        )
    B = net.incidence
    C = net.coeffs
    K = B.T @ (C[:, None] * B)
    u = np.linalg.solve(K, net.sources - B.T @ (C * net.applied))
    eps = B @ u + net.applied
    sigma = C * eps
    resid = np.max(np.abs(B.T @ sigma - net.sources))
    if resid > 1e-10 * max(1.0, float(np.max(np.abs(net.sources))) ):
        raise NondegenerateNetworkError(f"conservation residual {resid:.3e} after solve")
    return u, PhaseVector(eps, sigma)


def constraint_subspace(net: Network, ell: float = 1.0) -> AffineSubspace:
    """The admissible set E = {(eps, sigma): eps = Bu + g, B^T sigma = f}.

    Its direction space E0 = {(Bu, s0): B^T s0 = 0} is spanned by the nodal
    potential directions together with the null space of B^T; the result must
    be N-dimensional, which requires B to have full column rank.
    """
    B = net.incidence
    N, n = B.shape
    u_sv, s_sv, vt_sv = np.linalg.svd(B)
    rank = int(np.sum(s_sv > _RANK_TOL * (s_sv[0] if s_sv.size else 0.0)))
    dim_e0 = n + (N - rank)
    if dim_e0 != N:
        raise SubspaceDimensionError(
            f"admissible set has direction dimension {dim_e0}, expected {N} "
            f"(rank B = {rank}, free nodes = {n})"
        )
    # Spanning rows of E0 in flat [eps, sigma] layout.
    span = np.zeros((n + (N - rank), 2 * N))
    span[:n, :N] = B.T                      # (B e_k, 0) for each free node k
    null_bt = u_sv[:, rank:]                # columns span {s0 : B^T s0 = 0}
    span[n:, N:] = null_bt.T
    # A particular admissible point: eps = g (u = 0), sigma solving B^T sigma = f.
    sigma_part, *_ = np.linalg.lstsq(B.T, net.sources, rcond=None)
    resid = np.max(np.abs(B.T @ sigma_part - net.sources))
    if resid > 1e-10 * max(1.0, float(np.max(np.abs(net.sources)))):
        raise SubspaceDimensionError(f"no admissible flux: conservation residual {resid:.3e}")
    point = PhaseVector(net.applied.copy(), sigma_part)
    E = AffineSubspace.from_spanning(span, point, net.metric(ell=ell))
    if E.dim != N:
        raise SubspaceDimensionError(f"orthonormalization produced dimension {E.dim}, expected {N}")
    return E
