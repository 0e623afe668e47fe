"""Truncated rectangular state grids and functions sampled on them.

Nodes are stored in C order: the first factor varies slowest, so the
linear index of multi-index ``(i_1, ..., i_k)`` is ``sum(i_j * stride_j)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Callable

import numpy as np
from scipy import sparse

from ._validation import DomainError, ShapeError

# Relative slack before a query counts as lying outside the grid hull.
_HULL_SLACK = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned box ``prod_j [lower_j, upper_j]`` with ``counts_j`` points per axis."""

    lower: tuple
    upper: tuple
    counts: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        counts = tuple(int(v) for v in np.atleast_1d(self.counts))
        if not (len(lower) == len(upper) == len(counts)) or not lower:
            raise ShapeError("lower, upper and counts must have the same positive length")
        for lo, up, n in zip(lower, upper, counts):
            if not (np.isfinite(lo) and np.isfinite(up)) or lo >= up:
                raise DomainError(f"need finite lower < upper, got [{lo}, {up}]")
            if n < 2:
                raise DomainError(f"need at least 2 points per axis, got {n}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "counts", counts)

    @property
    def dims(self) -> int:
        return len(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @cached_property
    def axes(self) -> tuple:
        return tuple(np.linspace(lo, up, n) for lo, up, n in zip(self.lower, self.upper, self.counts))

    @cached_property
    def steps(self) -> np.ndarray:
        return np.array([(up - lo) / (n - 1) for lo, up, n in zip(self.lower, self.upper, self.counts)])

    @cached_property
    def strides(self) -> np.ndarray:
        strides = np.ones(self.dims, dtype=np.int64)
        for j in range(self.dims - 2, -1, -1):
            strides[j] = strides[j + 1] * self.counts[j + 1]
        return strides

    @cached_property
    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=1)
        nodes.setflags(write=False)
        return nodes

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper), "counts": list(self.counts)}

    def contains(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lower)
        up = np.asarray(self.upper)
        slack = _HULL_SLACK * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(up)))
        return np.all((points >= lo - slack) & (points <= up + slack), axis=1)

    def nearest_index(self, points) -> np.ndarray:
        """Linear index of the nearest node, clamping to the boundary (ties round half to even)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        t = (points - np.asarray(self.lower)) / self.steps
        idx = np.clip(np.rint(t), 0, np.asarray(self.counts) - 1).astype(np.int64)
        return idx @ self.strides

    def anchor_index(self, point=None) -> int:
        """Node nearest ``point`` (default: the origin)."""
        if point is None:
            point = np.zeros(self.dims)
        return int(self.nearest_index(np.reshape(point, (1, -1)))[0])

    def neighbours(self, index: int) -> np.ndarray:
        """``index`` together with its axis neighbours, in ascending linear order."""
        multi = np.array(np.unravel_index(index, self.counts))
        out = [index]
        for j in range(self.dims):
            for step in (-1, 1):
                nb = multi.copy()
                nb[j] += step
                if 0 <= nb[j] < self.counts[j]:
                    out.append(int(nb @ self.strides))
        return np.array(sorted(out), dtype=np.int64)

    def interpolation_matrix(self, points):
        """Multilinear interpolation weights of ``points`` on the nodes.

        Points outside the box are clamped to its boundary.

        Returns
        -------
        weights : scipy.sparse.csr_matrix, shape (n_points, size)
            Row ``i`` holds the convex weights of ``points[i]``; rows sum to one.
        clamped : ndarray of bool, shape (n_points,)
            True where the point lay outside the grid hull.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dims:
            raise ShapeError(f"points have {points.shape[1]} coordinates, grid has {self.dims}")
        if not np.all(np.isfinite(points)):
            raise DomainError("cannot interpolate at non-finite points")
        n = points.shape[0]
        clamped = ~self.contains(points)
        counts = np.asarray(self.counts)
        t = (points - np.asarray(self.lower)) / self.steps
        t = np.clip(t, 0.0, counts - 1)
        base = np.minimum(np.floor(t), counts - 2).astype(np.int64)
        frac = t - base

        corners = list(product((0, 1), repeat=self.dims))
        rows = np.repeat(np.arange(n), len(corners))
        cols = np.empty((n, len(corners)), dtype=np.int64)
        vals = np.empty((n, len(corners)))
        for c, bits in enumerate(corners):
            bits = np.asarray(bits)
            cols[:, c] = (base + bits) @ self.strides
            vals[:, c] = np.prod(np.where(bits == 1, frac, 1.0 - frac), axis=1)
        weights = sparse.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(n, self.size))
        weights.sum_duplicates()
        return weights, clamped


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Finite real values attached to the nodes of a :class:`GridSpec`."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.spec.size:
            raise ShapeError(f"{values.size} values for a grid of {self.spec.size} nodes")
        if not np.all(np.isfinite(values)):
            raise DomainError("grid function values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, spec: GridSpec, func: Callable) -> "GridFunction":
        return cls(spec, func(spec.nodes))

    @classmethod
    def constant(cls, spec: GridSpec, value: float = 0.0) -> "GridFunction":
        return cls(spec, np.full(spec.size, float(value)))

    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.spec != self.spec:
                raise ShapeError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.spec, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.spec, self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self.spec, self._other(other) - self.values)

    def __mul__(self, scalar):
        return GridFunction(self.spec, self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return GridFunction(self.spec, self.values / float(scalar))

    def __neg__(self):
        return GridFunction(self.spec, -self.values)

    def __call__(self, points) -> np.ndarray:
        """Multilinear interpolation at arbitrary points (clamped to the hull)."""
        weights, _ = self.spec.interpolation_matrix(points)
        return weights @ self.values


@dataclass(frozen=True, eq=False)
class WeightFunction:
    """Nonnegative weight ``omega`` on the factor space.

    ``bounds`` optionally restricts where the weight may be evaluated, as
    ``(lower, upper)`` per coordinate; queries outside raise
    :class:`DomainError`.
    """

    func: Callable
    name: str = "omega"
    bounds: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def zero(cls) -> "WeightFunction":
        return cls(lambda x: np.zeros(x.shape[0]), name="zero")

    @classmethod
    def affine_norm(cls, offset: float = 0.0, slope: float = 1.0, bounds=None) -> "WeightFunction":
        """``offset + slope * ||x||_2``."""
        if offset < 0 or slope < 0:
            raise DomainError("affine_norm needs offset >= 0 and slope >= 0")
        return cls(
            lambda x: offset + slope * np.linalg.norm(x, axis=1),
            name=f"{offset:g}+{slope:g}|x|",
            bounds=bounds,
        )

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"

    def __call__(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.bounds is not None:
            lo, up = (np.asarray(b, dtype=float) for b in self.bounds)
            if np.any(points < lo) or np.any(points > up):
                raise DomainError(f"weight {self.name} evaluated outside {self.bounds}")
        out = np.asarray(self.func(points), dtype=float).reshape(-1)
        if out.size != points.shape[0]:
            raise ShapeError("weight function must return one value per point")
        if np.any(~np.isfinite(out)) or np.any(out < 0):
            raise DomainError(f"weight {self.name} must be finite and nonnegative")
        return out

    def on(self, spec: GridSpec) -> GridFunction:
        """Samples on the nodes of ``spec`` (cached per grid)."""
        if spec not in self._cache:
            self._cache[spec] = GridFunction(spec, self(spec.nodes))
        return self._cache[spec]
