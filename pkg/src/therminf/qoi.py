"""Quantities of interest: tagged evaluators on state pairs (y, z).

A QoI acts on a pair (y, z) of phase-space states; y is the ambient state and
z the inferred state on the constraint set.  Coordinate and affine QoIs read
only z; the gap QoI measures the energy distance between the two.  Affine and
quadratic tags unlock closed-form expectation paths; everything else goes
through Monte Carlo.

Mini-language accepted by :func:`parse_qoi` (edges are 1-based):

    one                   constant 1
    sigma[e]              sigma-coordinate of z on edge e
    eps[e]                eps-coordinate of z on edge e
    gap                   energy norm ||y - z||
    affine:c1,c2,...      affine form on z's flat coordinates; 2N values, or
                          2N+1 with a trailing constant term
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, QoIParseError
from .phase import EnergyMetric


class UnboundedQoIWarning(UserWarning):
    """The QoI is not bounded; expectations rely on Gaussian tails."""


@dataclass(frozen=True)
class Expectation:
    """An expectation value with its Monte Carlo standard error (0 if exact)."""

    value: float
    stderr: float = 0.0


@dataclass(frozen=True, eq=False)
class QuantityOfInterest:
    """Tagged observable f(y, z) with declared boundedness.

    kind is one of "one", "affine", "quadratic", "gap", "callable".  Affine
    carries 2N+1 coefficients (linear in z plus constant); quadratic carries
    (Q, c, c0) for z^T Q z / 2-free convention f(z) = z^T Q z + c^T z + c0.
    """

    name: str
    kind: str
    bounded: bool
    coeffs: np.ndarray | None = None
    quad: tuple | None = None
    func: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("one", "affine", "quadratic", "gap", "callable"):
            raise ValueError(f"unknown QoI kind {self.kind!r}")
        if self.kind == "affine":
            c = np.asarray(self.coeffs, dtype=float)
            if c.ndim != 1 or c.size < 2:
                raise ValueError("affine QoI needs linear coefficients plus constant")
            object.__setattr__(self, "coeffs", c)
        if self.kind == "quadratic" and (self.quad is None or len(self.quad) != 3):
            raise ValueError("quadratic QoI needs (Q, c, c0)")
        if self.kind == "callable" and self.func is None:
            raise ValueError("callable QoI needs a function")

    @property
    def is_affine(self) -> bool:
        return self.kind in ("one", "affine")

    @property
    def is_closed_form(self) -> bool:
        return self.kind in ("one", "affine", "quadratic")

    def evaluate(self, y_flat, z_flat, metric: EnergyMetric) -> np.ndarray:
        """Batched evaluation on rows of (y, z) pairs."""
        y = np.atleast_2d(np.asarray(y_flat, dtype=float))
        z = np.atleast_2d(np.asarray(z_flat, dtype=float))
        if y.shape != z.shape:
            raise DimensionMismatchError("y and z batches must have matching shapes")
        if self.kind == "one":
            return np.ones(z.shape[0])
        if self.kind == "affine":
            c = self.coeffs
            if c.size - 1 != z.shape[1]:
                raise DimensionMismatchError(
                    f"affine QoI has {c.size - 1} coefficients, states have {z.shape[1]}"
                )
            return z @ c[:-1] + c[-1]
        if self.kind == "quadratic":
            Q, c, c0 = self.quad
            return np.sum((z @ Q) * z, axis=1) + z @ np.asarray(c, dtype=float) + c0
        if self.kind == "gap":
            return metric.norm_flat(y - z)
        return np.asarray(self.func(y, z), dtype=float).reshape(z.shape[0])

    def clipped(self, bound: float) -> "QuantityOfInterest":
        """Bounded variant clamping values to [-bound, bound]."""
        if bound <= 0:
            raise ValueError("clip bound must be positive")
        return _ClippedQoI(
            name=f"clip({self.name},{bound:g})",
            kind="callable",
            bounded=True,
            func=lambda y, z: None,  # unused; evaluate() is overridden
            base=self,
            bound=float(bound),
        )


@dataclass(frozen=True, eq=False)
class _ClippedQoI(QuantityOfInterest):
    base: QuantityOfInterest = None
    bound: float = 1.0

    def evaluate(self, y_flat, z_flat, metric: EnergyMetric) -> np.ndarray:
        raw = self.base.evaluate(y_flat, z_flat, metric)
        return np.clip(raw, -self.bound, self.bound)


ONE = QuantityOfInterest(name="one", kind="one", bounded=True)


def coordinate_qoi(which: str, edge: int, n_edges: int) -> QuantityOfInterest:
    """Affine QoI reading one coordinate of z; edge is 1-based."""
    if not 1 <= edge <= n_edges:
        raise QoIParseError(f"edge {edge} out of range 1..{n_edges}")
    c = np.zeros(2 * n_edges + 1)
    if which == "eps":
        c[edge - 1] = 1.0
    elif which == "sigma":
        c[n_edges + edge - 1] = 1.0
    else:
        raise QoIParseError(f"unknown coordinate {which!r}")
    return QuantityOfInterest(name=f"{which}[{edge}]", kind="affine", bounded=False, coeffs=c)


_COORD_RE = re.compile(r"^(sigma|eps)\[(\d+)\]$")


def parse_qoi(text: str, n_edges: int) -> QuantityOfInterest:
    """Parse the QoI mini-language; warns when the result is unbounded."""
    s = text.strip()
    if s == "one":
        return ONE
    if s == "gap":
        q = QuantityOfInterest(name="gap", kind="gap", bounded=False)
    elif m := _COORD_RE.match(s):
        q = coordinate_qoi(m.group(1), int(m.group(2)), n_edges)
    elif s.startswith("affine:"):
        body = s[len("affine:"):]
        try:
            vals = np.array([float(v) for v in body.split(",")], dtype=float)
        except ValueError:
            raise QoIParseError(f"affine coefficients must be numbers: {body!r}") from None
        if vals.size == 2 * n_edges:
            vals = np.append(vals, 0.0)
        if vals.size != 2 * n_edges + 1:
            raise QoIParseError(
                f"affine QoI needs {2 * n_edges} coefficients "
                f"(optionally +1 constant), got {vals.size}"
            )
        q = QuantityOfInterest(name=s, kind="affine", bounded=False, coeffs=vals)
    else:
        raise QoIParseError(
            f"cannot parse QoI {text!r}; expected one, gap, sigma[e], eps[e], or affine:..."
        )
    if not q.bounded:
        warnings.warn(
            f"QoI {q.name!r} is unbounded; expectations rely on Gaussian decay",
            UnboundedQoIWarning,
            stacklevel=2,
        )
    return q
