"""Weighted norms, weighted span seminorms and weighted total variation.

For a weight ``omega >= 0`` and scale ``beta > 0``::

    ||f||_{beta,omega}      = max_x |f(x)| / (1 + beta*omega(x))
    ||f||_{beta,omega-span} = max_{x,y} (f(x) - f(y)) / (2 + beta*omega(x) + beta*omega(y))

Suprema over the factor space are replaced by maxima over grid nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import DomainError, ShapeError, check_positive
from .grid import GridFunction, WeightFunction

_MAX_DINKELBACH = 500


@dataclass(frozen=True)
class CenteringResult:
    """Shifts ``c`` with ``||f + c||_omega`` equal to the span seminorm.

    Every ``c`` in ``[c1, c2]`` attains the minimum; ``c0`` additionally
    balances the positive and negative weighted excursions of ``f + c0``.
    """

    c1: float
    c2: float
    c0: float
    span: float


@dataclass(frozen=True, eq=False)
class DiscreteSignedMeasure:
    """Finitely many atoms ``points[i]`` carrying real ``masses[i]``."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if points.shape[0] != masses.size:
            raise ShapeError("one mass per atom required")
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(masses))):
            raise DomainError("atoms and masses must be finite")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "masses", masses)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def merged(self) -> "DiscreteSignedMeasure":
        """Combine atoms sitting at identical points (sorted lexicographically)."""
        if self.masses.size == 0:
            return self
        unique, inverse = np.unique(self.points, axis=0, return_inverse=True)
        masses = np.bincount(inverse.reshape(-1), weights=self.masses, minlength=unique.shape[0])
        return DiscreteSignedMeasure(unique, masses)

    def __sub__(self, other: "DiscreteSignedMeasure") -> "DiscreteSignedMeasure":
        if other.points.shape[1] != self.points.shape[1]:
            raise ShapeError("measures live in spaces of different dimension")
        return DiscreteSignedMeasure(
            np.vstack([self.points, other.points]),
            np.concatenate([self.masses, -other.masses]),
        ).merged()


def _values(f, omega, beta):
    if not isinstance(f, GridFunction):
        raise TypeError("expected a GridFunction")
    beta = check_positive(beta, "beta")
    w = omega.on(f.spec).values if isinstance(omega, WeightFunction) else _same_grid(f, omega)
    return f.values, beta * w


def _same_grid(f, omega):
    if not isinstance(omega, GridFunction) or omega.spec != f.spec:
        raise ShapeError("f and omega must share a grid")
    return omega.values


def omega_norm(f: GridFunction, omega, beta: float = 1.0) -> float:
    """``max_x |f(x)| / (1 + beta*omega(x))`` over the grid nodes."""
    values, bw = _values(f, omega, beta)
    return float(np.max(np.abs(values) / (1.0 + bw)))


def span_pair(values: np.ndarray, bw: np.ndarray):
    """Maximising pair of ``(f_x - f_y) / (2 + bw_x + bw_y)``.

    Dinkelbach iteration on the ratio: at level ``s`` the pair maximising
    ``(f_x - s*d_x) + (-f_y - s*d_y)`` with ``d = 1 + bw`` either has ratio
    above ``s`` or certifies ``s`` optimal. Each step is O(N) and the ratio
    strictly increases, so the loop visits finitely many pairs. Equivalently,
    ``s`` is optimal exactly when some shift ``c`` gives ``|f + c| <= s*d``.

    Returns
    -------
    span, x, y : float, int, int
        Ties resolve to the lowest linear index.
    """
    d = 1.0 + bw
    x = int(np.argmax(values))
    y = int(np.argmin(values))
    best = (values[x] - values[y]) / (2.0 + bw[x] + bw[y])
    for _ in range(_MAX_DINKELBACH):
        xn = int(np.argmax(values - best * d))
        yn = int(np.argmax(-values - best * d))
        ratio = (values[xn] - values[yn]) / (2.0 + bw[xn] + bw[yn])
        if not ratio > best:
            break
        best, x, y = ratio, xn, yn
    if best <= 0.0:
        return 0.0, 0, 0
    return float(best), x, y


def span_values(values: np.ndarray, bw: np.ndarray) -> float:
    return span_pair(values, bw)[0]


def omega_span(f: GridFunction, omega, beta: float = 1.0) -> float:
    """Weighted span seminorm of ``f`` over the grid, in O(N)."""
    values, bw = _values(f, omega, beta)
    return span_values(values, bw)


def _excursions(values, d, c):
    scaled = (values + c) / d
    return scaled.max(), -scaled.min()


def centering_constants(f: GridFunction, omega, beta: float = 1.0, span: float | None = None,
                        tol: float = 1e-12) -> CenteringResult:
    """Interval ``[c1, c2]`` of optimal shifts and the balancing shift ``c0``.

    Parameters
    ----------
    span : float, optional
        Value of the span seminorm to centre against. Defaults to the grid
        value; pass the exact supremum when it is known analytically and
        not attained on the truncated grid.
    """
    values, bw = _values(f, omega, beta)
    d = 1.0 + bw
    if span is None:
        span = span_values(values, bw)
    span = float(span)
    c1 = -float(np.min(values + d * span))
    c2 = -float(np.max(values - d * span))

    lo, hi = min(c1, c2), max(c1, c2)
    up, down = _excursions(values, d, lo)
    if up >= down:
        c0 = lo
    else:
        # a_plus - a_minus is nondecreasing in c
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            up, down = _excursions(values, d, mid)
            if abs(up - down) <= tol or hi - lo <= tol * max(1.0, abs(mid)):
                break
            if up < down:
                lo = mid
            else:
                hi = mid
        c0 = mid
    return CenteringResult(c1=c1, c2=c2, c0=float(c0), span=span)


def weighted_variation(measure: DiscreteSignedMeasure, omega: WeightFunction, beta: float) -> float:
    """``sum (1 + beta*omega(z)) |H|({z})`` after merging coincident atoms."""
    beta = float(beta)
    if not np.isfinite(beta) or beta < 0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    merged = measure.merged()
    if merged.masses.size == 0:
        return 0.0
    weights = 1.0 + beta * omega(merged.points)
    return float(np.sum(weights * np.abs(merged.masses)))
