"""Controlled Markov factor models of a market.

A model bundles the factor recursion ``X' = G(X, W)``, the one-period
log-return ``F(X, h, W)``, the noise law of ``W``, a compact action set,
the weight ``omega`` and the declared growth constants
``omega(G(x,w)) <= a1(w) + b1*omega(x)`` and ``|F(x,h,w)| <= a2(w) + b2*omega(x)``.

Evaluators are vectorised with numpy broadcasting: ``G(x, w)`` takes
``x[..., k]`` and ``w[..., d]``; ``F(x, h, w)`` additionally takes ``h[..., m]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Callable

import numpy as np
from scipy.special import ndtri

from ._validation import DomainError, ModelError, ShapeError
from .entropic import DiscreteLaw, entropic_utility
from .grid import GridSpec, WeightFunction

ACTION_KINDS = ("simplex-equality", "simplex-inequality", "box")
BUILTIN_NAMES = ("example1_omega0", "example2_clipped", "example3_discrete", "control_free")


@dataclass(frozen=True, eq=False)
class ActionSet:
    """Finite lattice discretisation of a compact action set.

    ``resolution`` n gives all points with coordinates in ``{0, 1/n, ..., 1}``
    on the simplex kinds, and n+1 evenly spaced values per axis between
    ``lower`` and ``upper`` for ``box``. Actions are sorted lexicographically,
    which fixes the tie-breaking order of every argmin downstream.
    """

    m: int
    kind: str = "simplex-inequality"
    resolution: int = 10
    lower: float = 0.0
    upper: float = 1.0
    points: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise DomainError(f"unknown action kind {self.kind!r}; choose from {ACTION_KINDS}")
        if self.m < 1 or self.resolution < 1:
            raise DomainError("m and resolution must be positive")
        if self.kind == "box" and not self.lower <= self.upper:
            raise DomainError("box needs lower <= upper")
        if self.points is None:
            object.__setattr__(self, "points", self._enumerate())

    def _enumerate(self) -> np.ndarray:
        n = self.resolution
        if self.kind == "box":
            axis = np.linspace(self.lower, self.upper, n + 1)
            pts = np.array(list(product(axis, repeat=self.m)))
        else:
            lattice = np.array(list(product(range(n + 1), repeat=self.m)))
            total = lattice.sum(axis=1)
            keep = total == n if self.kind == "simplex-equality" else total <= n
            pts = lattice[keep] / n
        pts = np.unique(pts, axis=0)  # sorted lexicographically, deduplicated
        pts.setflags(write=False)
        return pts

    def __len__(self):
        return self.points.shape[0]

    def to_dict(self) -> dict:
        return {"m": self.m, "kind": self.kind, "resolution": self.resolution,
                "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True)
class GaussianNoise:
    """Independent standard normal coordinates, sampled by inverse CDF."""

    dim: int

    @property
    def n_uniforms(self) -> int:
        return self.dim

    def sample(self, u: np.ndarray) -> np.ndarray:
        return ndtri(u)

    def quadrature(self, order: int = 16) -> DiscreteLaw:
        return DiscreteLaw.gauss_hermite(self.dim, order)


@dataclass(frozen=True, eq=False)
class AtomicNoise:
    """Finitely supported noise, sampled by inverse CDF on one uniform."""

    law: DiscreteLaw

    @property
    def dim(self) -> int:
        return self.law.dim

    @property
    def n_uniforms(self) -> int:
        return 1

    def sample(self, u: np.ndarray) -> np.ndarray:
        cdf = np.cumsum(self.law.weights)
        idx = np.searchsorted(cdf, u[..., 0], side="right")
        return self.law.points[np.minimum(idx, self.law.size - 1)]

    def quadrature(self, order: int | None = None) -> DiscreteLaw:
        return self.law


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Factor dynamics, log-returns and growth constants of a market.

    ``noise`` is the finite law used by the Bellman solver; ``sampler``
    draws from the true noise law for simulation.
    """

    name: str
    k: int
    m: int
    G: Callable
    F: Callable
    noise: DiscreteLaw
    sampler: object
    actions: ActionSet
    omega: WeightFunction
    a1: Callable
    a2: Callable
    b1: float
    b2: float
    grid: GridSpec
    x0: tuple = None
    a1_bounded: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.noise.dim != self.sampler.dim:
            raise ShapeError("quadrature law and sampler disagree on the noise dimension")
        if self.actions.m != self.m:
            raise ShapeError("action set dimension differs from the number of assets")
        if self.grid.dims != self.k:
            raise ShapeError("grid dimension differs from the number of factors")
        if not 0.0 <= self.b1 < 1.0 or self.b2 < 0.0:
            raise DomainError(f"need 0 <= b1 < 1 and b2 >= 0, got b1={self.b1}, b2={self.b2}")
        x0 = np.zeros(self.k) if self.x0 is None else np.asarray(self.x0, dtype=float).reshape(self.k)
        object.__setattr__(self, "x0", tuple(float(v) for v in x0))

    @property
    def noise_dim(self) -> int:
        return self.noise.dim


def factor_step(model: MarketModel, x, w) -> np.ndarray:
    """``G(x, w)`` with a finiteness check."""
    out = np.asarray(model.G(np.asarray(x, dtype=float), np.asarray(w, dtype=float)))
    if not np.all(np.isfinite(out)):
        raise ModelError(f"{model.name}: factor step produced non-finite states")
    return out


def log_return(model: MarketModel, x, h, w) -> np.ndarray:
    """``F(x, h, w)`` with a finiteness check."""
    out = np.asarray(model.F(np.asarray(x, dtype=float), np.asarray(h, dtype=float),
                             np.asarray(w, dtype=float)))
    if not np.all(np.isfinite(out)):
        raise ModelError(f"{model.name}: log-return is not finite")
    return out


# ---------------------------------------------------------------- builtins


def _matrix(value, rows, cols, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full((rows, cols), float(arr))
    arr = arr.reshape(rows, cols) if arr.size == rows * cols else arr
    if arr.shape != (rows, cols):
        raise ShapeError(f"{name} must have shape ({rows}, {cols}), got {arr.shape}")
    return arr


def _vector(value, n, name):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size == 1:
        arr = np.full(n, arr[0])
    if arr.shape != (n,):
        raise ShapeError(f"{name} must have length {n}")
    return arr


def _default_loadings(k, m, factor_vol, asset_vol, corr):
    """Factor j driven by noise j; asset i by noise k+i and, with weight ``corr``, noise 0."""
    d = k + m
    delta = np.zeros((k, d))
    delta[np.arange(k), np.arange(k)] = factor_vol
    sigma = np.zeros((m, d))
    sigma[:, 0] = corr * asset_vol
    sigma[np.arange(m), k + np.arange(m)] = np.sqrt(1.0 - corr**2) * asset_vol
    return delta, sigma


def _rebalanced_log_return(h, drift, sigma, rate, w):
    """Log-growth over one period of constant fractions ``h`` (remainder at ``rate``)."""
    hs = h @ sigma
    return (rate + np.sum(h * (drift - rate), axis=-1)
            - 0.5 * np.sum(hs**2, axis=-1) + np.sum(hs * w, axis=-1))


def _return_bound(sigma, w):
    # |(h sigma)_z| <= max_i |sigma_iz| for h in either simplex
    col = np.max(np.abs(sigma), axis=0)
    return 0.5 * np.sum(col**2) + np.abs(w) @ col


def _clip(s, upper, lower):
    out = np.minimum(s, upper)
    return out if lower is None else np.maximum(out, lower)


def _example1(p, order):
    k, m = int(p["k"]), int(p["m"])
    d = k + m
    delta0, sigma0 = _default_loadings(k, m, p["factor_vol"], p["asset_vol"], p["corr"])
    delta = _matrix(p.get("delta", delta0), k, d, "delta")
    sigma = _matrix(p.get("sigma", sigma0), m, d, "sigma")
    mu = _vector(p["mu"], m, "mu")
    eta = _vector(p["eta"], m, "eta")
    bscale, bslope = float(p["b_scale"]), float(p["b_slope"])
    a_sup = float(np.max(np.abs(mu) + np.abs(eta)))

    def drift(x):
        return mu + eta * np.tanh(x[..., :1])

    def G(x, w):
        return bscale * np.tanh(bslope * x) + w @ delta.T

    def F(x, h, w):
        return _rebalanced_log_return(h, drift(x), sigma, 0.0, w)

    def a2(w):
        return a_sup + _return_bound(sigma, w)

    reach = bscale + np.max(np.abs(delta).sum(axis=1)) * 6.7
    return dict(
        k=k, m=m, G=G, F=F, sampler=GaussianNoise(d), omega=WeightFunction.zero(),
        a1=lambda w: np.zeros(np.shape(w)[0]), a2=a2,
        b1=float(p["b1"]), b2=float(p["b2"]), a1_bounded=True,
        grid=GridSpec([-reach] * k, [reach] * k, [p.get("grid_points", 41)] * k),
        actions=ActionSet(m, p["action_kind"], p["action_resolution"]),
    )


def _clipped_factor(p, k, d):
    rho = float(p["rho"])
    if not 0.0 < rho < 1.0:
        raise DomainError("rho must lie in (0, 1)")
    delta = _matrix(p["delta"], k, d, "delta")
    offset = _vector(p.get("offset", 0.0), k, "offset")
    K = float(p["K"])
    lower = p.get("lower_clip")
    lower = None if lower is None else float(lower)
    omega_a = float(p["omega_offset"])
    # ||B(x)|| <= ||offset|| + rho ||x||, so omega = a + rho||x|| drifts with b1 = rho
    omega = WeightFunction.affine_norm(omega_a, rho)

    def C(w):
        return _clip(w @ delta.T, K, lower)

    def G(x, w):
        return offset + rho * x + C(w)

    def a1(w):
        return omega_a * (1.0 - rho) + rho * (np.linalg.norm(offset) + np.linalg.norm(C(w), axis=-1))

    return rho, G, a1, omega, lower is not None


def _factor_loading(p, k, m):
    kappa = _matrix(p["kappa"], m, k, "kappa")
    return kappa, float(np.max(np.linalg.norm(kappa, axis=1)))


def _example2(p, order):
    k, m = int(p["k"]), int(p["m"])
    d = k + m
    delta0, sigma0 = _default_loadings(k, m, p["factor_vol"], p["asset_vol"], p["corr"])
    p = {**p, "delta": p.get("delta", delta0)}
    sigma = _matrix(p.get("sigma", sigma0), m, d, "sigma")
    mu = _vector(p["mu"], m, "mu")
    rate = float(p["rate"])
    kappa, kappa_norm = _factor_loading(p, k, m)
    rho, G, a1, omega, bounded = _clipped_factor(p, k, d)

    def F(x, h, w):
        return _rebalanced_log_return(h, mu + x @ kappa.T, sigma, rate, w)

    def a2(w):
        return abs(rate) + np.max(np.abs(mu - rate)) + _return_bound(sigma, w)

    half = float(p["grid_half_width"])
    return dict(
        k=k, m=m, G=G, F=F, sampler=GaussianNoise(d), omega=omega, a1=a1, a2=a2,
        b1=rho, b2=kappa_norm / rho, a1_bounded=bounded,
        grid=GridSpec([-half] * k, [half] * k, [p.get("grid_points", 101)] * k),
        actions=ActionSet(m, p["action_kind"], p["action_resolution"]),
    )


def _example3(p, order):
    k, m = int(p["k"]), int(p["m"])
    d = k + m
    delta0, sigma0 = _default_loadings(k, m, p["factor_vol"], p["asset_vol"], p["corr"])
    p = {**p, "delta": p.get("delta", delta0)}
    sigma = _matrix(p.get("sigma", sigma0), m, d, "sigma")
    mu = _vector(p["mu"], m, "mu")
    kappa, kappa_norm = _factor_loading(p, k, m)
    rho, G, a1, omega, bounded = _clipped_factor(p, k, d)
    half_var = 0.5 * np.sum(sigma**2, axis=1)

    def F(x, h, w):
        log_xi = mu + x @ kappa.T - half_var + w @ sigma.T
        gross = np.sum(h * np.exp(log_xi), axis=-1) + 1.0 - np.sum(h, axis=-1)
        if np.any(gross <= 0):
            raise DomainError("nonpositive gross portfolio return")
        return np.log(gross)

    def a2(w):
        # ln of a convex combination of {xi_i, 1} is bounded by max |ln xi_i|
        return np.max(np.abs(mu) + half_var) + np.abs(w) @ np.max(np.abs(sigma), axis=0)

    half = float(p["grid_half_width"])
    return dict(
        k=k, m=m, G=G, F=F, sampler=GaussianNoise(d), omega=omega, a1=a1, a2=a2,
        b1=rho, b2=kappa_norm / rho, a1_bounded=bounded,
        grid=GridSpec([-half] * k, [half] * k, [p.get("grid_points", 101)] * k),
        actions=ActionSet(m, "simplex-inequality", p["action_resolution"]),
    )


def _control_free(p, order):
    rho, scale, K = float(p["rho"]), float(p["factor_vol"]), float(p["K"])
    mu, sd = float(p["mu"]), float(p["sigma"])

    def G(x, w):
        return rho * x + np.clip(scale * w[..., :1], -K, K)

    def F(x, h, w):
        return mu + sd * w[..., 1]

    half = float(p["grid_half_width"])
    return dict(
        k=1, m=1, G=G, F=F, sampler=GaussianNoise(2), omega=WeightFunction.zero(),
        a1=lambda w: np.zeros(np.shape(w)[0]),
        a2=lambda w: abs(mu) + abs(sd) * np.abs(w[..., 1]),
        b1=float(p["b1"]), b2=0.0, a1_bounded=True,
        grid=GridSpec([-half], [half], [p.get("grid_points", 21)]),
        actions=ActionSet(1, "simplex-equality", 1),
    )


_DEFAULTS = {
    "example1_omega0": dict(
        k=1, m=2, mu=[0.01, 0.03], eta=[0.02, -0.02], factor_vol=0.5, asset_vol=0.2, corr=0.3,
        b_scale=1.0, b_slope=1.0, b1=0.5, b2=0.0,
        action_kind="simplex-equality", action_resolution=10, grid_points=41,
    ),
    "example2_clipped": dict(
        k=1, m=1, rho=0.3, factor_vol=0.5, K=2.0, lower_clip=-2.0, omega_offset=1.0,
        mu=[0.03], kappa=[[0.02]], asset_vol=0.2, corr=0.3, rate=0.0,
        action_kind="simplex-inequality", action_resolution=10,
        grid_half_width=3.0, grid_points=121,
    ),
    "example3_discrete": dict(
        k=1, m=1, rho=0.3, factor_vol=0.5, K=2.0, lower_clip=-2.0, omega_offset=1.0,
        mu=[0.03], kappa=[[0.02]], asset_vol=0.2, corr=0.3,
        action_resolution=10, grid_half_width=3.0, grid_points=61,
    ),
    "control_free": dict(
        rho=0.0, factor_vol=1.0, K=3.0, mu=0.0, sigma=1.0, b1=0.5,
        grid_half_width=3.0, grid_points=21,
    ),
}

_BUILDERS = {
    "example1_omega0": _example1,
    "example2_clipped": _example2,
    "example3_discrete": _example3,
    "control_free": _control_free,
}


def builtin_defaults(name: str) -> dict:
    if name not in _DEFAULTS:
        raise DomainError(f"unknown builtin model {name!r}; choose from {BUILTIN_NAMES}")
    return dict(_DEFAULTS[name])


def builtin(name: str, params: dict | None = None, *, quadrature_order: int = 16,
            grid: GridSpec | None = None, x0=None) -> MarketModel:
    """Construct one of the built-in market models.

    Parameters
    ----------
    name : {'example1_omega0', 'example2_clipped', 'example3_discrete', 'control_free'}
        ``example1_omega0``: bounded factor recursion ``B tanh(x) + delta w``,
        bounded drifts, zero weight, constant fractions within the period
        on the full-investment simplex.
        ``example2_clipped``: ``offset + rho x + C(w)`` with
        ``C = max(min(delta w, K), lower_clip)``; ``lower_clip=None`` gives the
        one-sided ``min(delta w, K)`` (then ``a1`` is unbounded). Drifts linear
        in the factor, weight ``omega_offset + rho |x|``, fractions with a
        cash remainder.
        ``example3_discrete``: same factor, buy-and-hold returns
        ``ln(sum h_i xi_i + 1 - sum h_i)`` with lognormal ``xi``.
        ``control_free``: return ``mu + sigma w_2`` independent of state
        and action; a clipped AR(1) factor (``rho = 1``, ``factor_vol = 0``
        freezes it).
    params : dict, optional
        Overrides of the defaults returned by :func:`builtin_defaults`.
    quadrature_order : int
        Gauss-Hermite nodes per noise coordinate.
    """
    defaults = builtin_defaults(name)
    unknown = set(params or {}) - set(defaults) - {"delta", "sigma", "offset"}
    if unknown:
        raise DomainError(f"unknown parameters for {name}: {sorted(unknown)}")
    resolved = {**defaults, **(params or {})}
    parts = _BUILDERS[name](resolved, quadrature_order)
    sampler = parts.pop("sampler")
    if grid is not None:
        parts["grid"] = grid
    return MarketModel(
        name=name, noise=sampler.quadrature(quadrature_order), sampler=sampler,
        x0=x0, params=resolved, **parts,
    )


def finite_chain(next_state, log_return_table, probs, *, name="finite_chain") -> MarketModel:
    """Control-free chain on states ``0..n-1`` driven by an atomic noise index.

    Parameters
    ----------
    next_state : int array (n, q)
        ``next_state[x, j]`` is the successor of ``x`` under noise atom ``j``.
    log_return_table : array (n, q)
        One-period log-return from state ``x`` under noise atom ``j``.
    probs : array (q,)
        Noise atom probabilities.
    """
    nxt = np.asarray(next_state, dtype=np.int64)
    ret = np.asarray(log_return_table, dtype=float)
    n, q = nxt.shape
    if ret.shape != (n, q) or np.any((nxt < 0) | (nxt >= n)):
        raise ShapeError("tables must be (n, q) with successors in range(n)")
    law = DiscreteLaw(np.arange(q, dtype=float).reshape(-1, 1), probs)
    bound = float(np.max(np.abs(ret)))

    def _idx(x, w):
        xi = np.clip(np.rint(x[..., 0]), 0, n - 1).astype(np.int64)
        wi = np.clip(np.rint(w[..., 0]), 0, q - 1).astype(np.int64)
        return np.broadcast_arrays(xi, wi)

    def G(x, w):
        xi, wi = _idx(x, w)
        return nxt[xi, wi][..., None].astype(float)

    def F(x, h, w):
        xi, wi = _idx(x, w)
        return ret[xi, wi]

    return MarketModel(
        name=name, k=1, m=1, G=G, F=F, noise=law, sampler=AtomicNoise(law),
        actions=ActionSet(1, "simplex-equality", 1), omega=WeightFunction.zero(),
        a1=lambda w: np.zeros(np.shape(w)[0]), a2=lambda w: np.full(np.shape(w)[0], bound),
        b1=0.5, b2=0.0, grid=GridSpec([0.0], [float(max(n - 1, 1))], [max(n, 2)]),
        a1_bounded=True, params={"n": n, "q": q},
    )


# -------------------------------------------------------------- validators


GAMMA_LADDER = (-4.0, -1.0, -0.25, 0.0, 0.25, 1.0, 4.0)


@dataclass
class GrowthReport:
    n_samples: int
    drift_violations: int
    return_violations: int
    drift_margin: float
    return_margin: float
    entropic_finite: bool
    continuity_jump: float

    @property
    def ok(self) -> bool:
        return self.drift_violations == 0 and self.return_violations == 0 and self.entropic_finite

    def to_dict(self) -> dict:
        return {**self.__dict__, "ok": self.ok}


def validate_growth(model: MarketModel, sample_count: int = 20000, seed: int = 0,
                    tol: float = 1e-12) -> GrowthReport:
    """Falsify the declared growth bounds on sampled (state, action, noise) triples.

    Margins are ``max(lhs - rhs)``; a negative margin means slack everywhere.
    Also checks ``mu^gamma(a1(W))`` and ``mu^gamma(a2(W))`` on a gamma ladder and
    spot-checks continuity of G and F in the state.
    """
    nodes = model.grid.nodes
    acts = model.actions.points
    law = model.noise
    total = nodes.shape[0] * len(acts) * law.size
    if total <= sample_count:
        i, a, j = (g.ravel() for g in np.meshgrid(np.arange(nodes.shape[0]), np.arange(len(acts)),
                                                  np.arange(law.size), indexing="ij"))
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, nodes.shape[0], sample_count)
        a = rng.integers(0, len(acts), sample_count)
        j = rng.integers(0, law.size, sample_count)
    x, h, w = nodes[i], acts[a], law.points[j]
    om_x = model.omega(x)
    drift_gap = model.omega(factor_step(model, x, w)) - (model.a1(w) + model.b1 * om_x)
    ret_gap = np.abs(log_return(model, x, h, w)) - (model.a2(w) + model.b2 * om_x)

    finite = True
    for g in GAMMA_LADDER:
        for a_fn in (model.a1, model.a2):
            finite &= bool(np.isfinite(entropic_utility(a_fn(law.points), law, g)))

    eps = 1e-7
    step = eps * np.ones(model.k)
    jump = max(
        float(np.max(np.abs(factor_step(model, x + step, w) - factor_step(model, x, w)))),
        float(np.max(np.abs(log_return(model, x + step, h, w) - log_return(model, x, h, w)))),
    )
    return GrowthReport(
        n_samples=int(x.shape[0]),
        drift_violations=int(np.sum(drift_gap > tol)),
        return_violations=int(np.sum(ret_gap > tol)),
        drift_margin=float(drift_gap.max()),
        return_margin=float(ret_gap.max()),
        entropic_finite=finite,
        continuity_jump=jump,
    )


@dataclass(frozen=True, eq=False)
class MinorizationCertificate:
    """``inf_{x in C_R} P[G(x,W) in A] >= c * nu(A)`` over a cell partition."""

    R: float
    c: float
    nu: DiscreteLaw | None
    cell_lower: np.ndarray
    cell_upper: np.ndarray
    cells_per_dim: int
    n_states: int
    cell_mass: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"R": self.R, "c": self.c, "cells_per_dim": self.cells_per_dim,
                "n_states": self.n_states, "box_lower": self.cell_lower.tolist(),
                "box_upper": self.cell_upper.tolist()}


def common_noise(model: MarketModel, n_samples: int = 20000, seed: int = 0) -> DiscreteLaw:
    """Atomic noise exactly; otherwise ``n_samples`` equally weighted draws from the sampler."""
    if isinstance(model.sampler, AtomicNoise):
        return model.sampler.law
    u = np.random.default_rng(seed).random((n_samples, model.sampler.n_uniforms))
    return DiscreteLaw.uniform(model.sampler.sample(u))


@dataclass(frozen=True, eq=False)
class CellPartition:
    """Uniform rectangular partition of a bounding box."""

    lower: np.ndarray
    upper: np.ndarray
    per_dim: int

    @classmethod
    def fit(cls, points, cells_per_dim: int = 32, max_cells: int = 4096) -> "CellPartition":
        k = points.shape[1]
        per_dim = max(1, min(cells_per_dim, int(np.floor(max_cells ** (1.0 / k) + 1e-9))))
        return cls(points.min(axis=0), points.max(axis=0), per_dim)

    @property
    def k(self) -> int:
        return self.lower.size

    @property
    def n_cells(self) -> int:
        return self.per_dim ** self.k

    @property
    def width(self) -> np.ndarray:
        return np.where(self.upper > self.lower, self.upper - self.lower, 1.0)

    def index(self, points) -> np.ndarray:
        """Linear cell index per point (points outside the box go to the nearest cell)."""
        cell = np.floor((points - self.lower) / self.width * self.per_dim)
        cell = np.clip(cell, 0, self.per_dim - 1).astype(np.int64)
        return np.ravel_multi_index(tuple(cell.T), (self.per_dim,) * self.k)

    def centres(self, flat) -> np.ndarray:
        multi = np.array(np.unravel_index(flat, (self.per_dim,) * self.k)).T
        return self.lower + (multi + 0.5) * self.width / self.per_dim


def minorization_check(model: MarketModel, R: float, cells_per_dim: int = 32,
                       max_cells: int = 4096, n_samples: int = 20000,
                       seed: int = 0) -> MinorizationCertificate:
    """Cellwise minorisation constant over the sublevel set ``{omega <= R}``.

    Successors of every grid node in ``C_R`` are binned into a uniform
    partition of their bounding box. Atomic noise is used exactly; other
    noise is replaced by ``n_samples`` common draws from the sampler, so the
    cell probabilities are empirical. The cellwise infimum of the successor
    probabilities, normalised, is ``nu`` and its total mass is ``c``.
    """
    nodes = model.grid.nodes
    inside = nodes[model.omega(nodes) <= R]
    if inside.shape[0] == 0:
        raise DomainError(f"C_R is empty on the grid for R={R}")
    law = common_noise(model, n_samples, seed)
    succ = factor_step(model, inside[:, None, :], law.points[None, :, :])
    part = CellPartition.fit(succ.reshape(-1, model.k), cells_per_dim, max_cells)
    flat = part.index(succ.reshape(-1, model.k))
    n = inside.shape[0]
    rows = np.repeat(np.arange(n), law.size)
    probs = np.bincount(rows * part.n_cells + flat, weights=np.tile(law.weights, n),
                        minlength=n * part.n_cells).reshape(n, part.n_cells)
    floor = probs.min(axis=0)
    c = float(min(1.0, floor.sum()))
    nu = None
    if c > 0:
        keep = np.flatnonzero(floor > 0)
        nu = DiscreteLaw(part.centres(keep), floor[keep] / floor[keep].sum())
    return MinorizationCertificate(R=float(R), c=c, nu=nu, cell_lower=part.lower,
                                   cell_upper=part.upper, cells_per_dim=part.per_dim,
                                   n_states=int(inside.shape[0]), cell_mass=floor)
