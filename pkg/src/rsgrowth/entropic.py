"""Entropic utility over finitely supported laws, Esscher tilts, relative entropy.

All laws are finite: Gaussian noise enters through tensorised Gauss-Hermite
quadrature or through equally weighted samples, so every expectation below
is a weighted sum evaluated with a max-shifted log-sum-exp.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from numpy.polynomial.hermite import hermgauss

from ._validation import DomainError, ShapeError
from .norms import DiscreteSignedMeasure

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteLaw:
    """Probability law with atoms ``points`` (n, d) and positive ``weights`` (n,)."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if points.ndim != 2 or points.shape[0] != weights.size or weights.size == 0:
            raise ShapeError("need a nonempty (n, d) point array and n weights")
        if not np.all(np.isfinite(points)):
            raise DomainError("atoms must be finite")
        if np.any(~(weights > 0)):
            raise DomainError("weights must be strictly positive")
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise DomainError(f"weights sum to {weights.sum()!r}, not 1")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def gauss_hermite(cls, dim: int = 1, order: int = 16, mean=0.0, std=1.0) -> "DiscreteLaw":
        """Tensor Gauss-Hermite rule for independent ``N(mean, std**2)`` coordinates."""
        if dim < 1 or order < 1:
            raise DomainError("dim and order must be positive")
        nodes, weights = hermgauss(order)
        nodes = nodes * np.sqrt(2.0)
        weights = weights / weights.sum()
        mean = np.broadcast_to(np.asarray(mean, dtype=float), (dim,))
        std = np.broadcast_to(np.asarray(std, dtype=float), (dim,))
        idx = np.array(list(product(range(order), repeat=dim)), dtype=np.int64)
        points = mean + std * nodes[idx]
        w = np.prod(weights[idx], axis=1)
        return cls(points, w / w.sum())

    @classmethod
    def uniform(cls, points) -> "DiscreteLaw":
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n))

    def product(self, other: "DiscreteLaw") -> "DiscreteLaw":
        """Law of the independent pair ``(self, other)``."""
        i, j = np.meshgrid(np.arange(self.size), np.arange(other.size), indexing="ij")
        points = np.hstack([self.points[i.ravel()], other.points[j.ravel()]])
        weights = self.weights[i.ravel()] * other.weights[j.ravel()]
        return DiscreteLaw(points, weights / weights.sum())


@dataclass(frozen=True, eq=False)
class TiltedLaw:
    """Exponential tilt of ``base``: weight_i = p_i * exp(score_i - log_normalizer)."""

    base: DiscreteLaw
    weights: np.ndarray
    log_normalizer: float


def log_mean_exp(z, p, axis=-1):
    """``log sum_i p_i exp(z_i)`` along ``axis`` with max-shift stabilisation.

    The result is divided by ``sum p`` so that constants map to themselves
    exactly even when the weights sum to one only up to rounding.
    """
    z = np.asarray(z, dtype=float)
    shift = np.max(z, axis=axis, keepdims=True)
    e = np.exp(z - shift)
    if np.ndim(p) == 0:
        ratio = np.mean(e, axis=axis)
    else:
        p = np.broadcast_to(p, z.shape).copy()
        ratio = np.sum(p * e, axis=axis) / np.sum(p, axis=axis)
    return np.squeeze(shift, axis=axis) + np.log(ratio)


def entropic_utility(values, law: DiscreteLaw, gamma: float):
    """``(1/gamma) log E[exp(gamma V)]``, or ``E[V]`` when ``gamma == 0``.

    ``values`` may carry leading batch axes; the last axis runs over atoms.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != law.size:
        raise ShapeError(f"{values.shape[-1]} values for a law with {law.size} atoms")
    # centre on the atom with the largest gamma*value so constants are exact
    ref = np.min(values, axis=-1, keepdims=True) if gamma < 0 else np.max(values, axis=-1, keepdims=True)
    dev = values - ref
    ref = np.squeeze(ref, axis=-1)
    if gamma == 0:
        return ref + np.sum(dev * law.weights, axis=-1) / np.sum(law.weights)
    return ref + log_mean_exp(gamma * dev, law.weights) / gamma


def esscher_tilt(score, law: DiscreteLaw) -> TiltedLaw:
    """Reweight ``law`` by ``exp(score)``, normalised."""
    score = np.asarray(score, dtype=float).reshape(-1)
    if score.size != law.size:
        raise ShapeError(f"{score.size} scores for a law with {law.size} atoms")
    if not np.all(np.isfinite(score)):
        raise DomainError("scores must be finite")
    log_z = float(log_mean_exp(score, law.weights))
    weights = law.weights * np.exp(score - log_z)
    return TiltedLaw(law, weights / weights.sum(), log_z)


def pushforward_tilt(model, x, h, f, gamma: float, law: DiscreteLaw | None = None,
                     project: bool = False) -> DiscreteSignedMeasure:
    """Tilted law of the successor ``G(x, W)`` under score ``gamma*F + f(G)``.

    Parameters
    ----------
    model : MarketModel
    x : array_like, shape (k,)
    h : array_like, shape (m,)
    f : GridFunction
        Continuation values, interpolated multilinearly at successors
        (queries outside the grid are clamped to its boundary).
    project : bool
        If True, spread each atom over the grid nodes with its
        interpolation weights. This is the measure the discretised Bellman
        operator integrates against.

    Returns
    -------
    DiscreteSignedMeasure
        A probability measure; coincident atoms are merged.
    """
    law = model.noise if law is None else law
    x = np.asarray(x, dtype=float).reshape(1, -1)
    h = np.asarray(h, dtype=float).reshape(1, -1)
    succ = np.asarray(model.G(np.broadcast_to(x, (law.size, x.shape[1])), law.points))
    ret = np.broadcast_to(model.F(x, h, law.points), (law.size,))
    interp, _ = f.spec.interpolation_matrix(succ)
    tilt = esscher_tilt(gamma * ret + interp @ f.values, law)
    if project:
        masses = interp.T @ tilt.weights
        keep = masses > 0
        return DiscreteSignedMeasure(f.spec.nodes[keep], masses[keep]).merged()
    return DiscreteSignedMeasure(succ, tilt.weights).merged()


def relative_entropy(q, p: DiscreteLaw) -> float:
    """``sum q_i log(q_i / p_i)``; ``inf`` when ``q`` is not absolutely continuous.

    ``q`` may be a :class:`TiltedLaw` (aligned with its base), a
    :class:`DiscreteLaw` (matched to ``p`` atom by atom), or a weight vector
    aligned with ``p``.
    """
    if isinstance(q, TiltedLaw):
        q_w = q.weights
        if q.base is not p and (q.base.size != p.size or not np.array_equal(q.base.points, p.points)):
            return relative_entropy(DiscreteLaw(q.base.points[q.weights > 0],
                                                _renorm(q.weights[q.weights > 0])), p)
    elif isinstance(q, DiscreteLaw):
        index = {tuple(row): i for i, row in enumerate(p.points)}
        q_w = np.zeros(p.size)
        for row, w in zip(q.points, q.weights):
            i = index.get(tuple(row))
            if i is None:
                return float("inf")
            q_w[i] += w
    else:
        q_w = np.asarray(q, dtype=float).reshape(-1)
        if q_w.size != p.size:
            raise ShapeError("weight vector must align with p")
    pos = q_w > 0
    return float(max(0.0, np.sum(q_w[pos] * np.log(q_w[pos] / p.weights[pos]))))


def _renorm(w):
    return w / w.sum()
