"""Bellman operators on grid functions and relative value iteration.

For ``gamma < 0``::

    T f(x) = min_h log E[exp(gamma*F(x, h, W) + f(G(x, W)))]
    R f    = (1/gamma) T(gamma f)

The successor term ``f(G(x, W))`` does not depend on the action, so it is
interpolated once per (node, atom) and shared across the action list.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator

from ._validation import DomainError, check_gamma, check_positive, check_states
from .entropic import log_mean_exp
from .grid import GridFunction, GridSpec
from .model import MarketModel, factor_step, log_return
from .norms import span_values


class Discretization:
    """Successor interpolation and log-return table of a model on its grid.

    Attributes
    ----------
    interp : csr_matrix, shape (N*Q, N)
        Row ``n*Q + q`` interpolates at ``G(x_n, w_q)``.
    returns : ndarray, shape (A, N, Q)
        ``F(x_n, h_a, w_q)``.
    clamped : ndarray of bool, shape (N, Q)
        Successors outside the grid hull (clamped to the boundary).
    """

    def __init__(self, model: MarketModel, grid: GridSpec | None = None):
        self.model = model
        self.grid = model.grid if grid is None else grid
        if self.grid.dims != model.k:
            raise DomainError("grid dimension differs from the factor dimension")
        law = model.noise
        nodes = self.grid.nodes
        n, q = nodes.shape[0], law.size
        succ = factor_step(model, nodes[:, None, :], law.points[None, :, :])
        self.successors = succ
        interp, clamped = self.grid.interpolation_matrix(succ.reshape(n * q, model.k))
        self.interp = interp
        self.clamped = clamped.reshape(n, q)
        acts = model.actions.points
        ret = log_return(model, nodes[None, :, None, :], acts[:, None, None, :],
                         law.points[None, None, :, :])
        self.returns = np.ascontiguousarray(np.broadcast_to(ret, (acts.shape[0], n, q)))
        self.weights = law.weights
        self.omega = model.omega.on(self.grid).values

    @property
    def shape(self):
        return self.returns.shape

    @property
    def clamp_fraction(self) -> float:
        return float(self.clamped.mean())

    @property
    def clamp_mass(self) -> float:
        """Probability-weighted share of clamped successors, averaged over nodes."""
        return float((self.clamped @ self.weights).mean())

    def continuation(self, values: np.ndarray) -> np.ndarray:
        """``f(G(x_n, w_q))`` as an (N, Q) array."""
        n, q = self.clamped.shape
        return (self.interp @ values).reshape(n, q)


class BellmanOperator:
    """``T_gamma`` (and the mean operator at ``gamma = 0``) on a discretization."""

    def __init__(self, disc: Discretization, gamma: float, threads: int = 1):
        self.disc = disc
        self.gamma = check_gamma(gamma)
        self.threads = max(1, int(threads))

    def _node_chunks(self):
        n = self.disc.shape[1]
        k = min(self.threads, n)
        bounds = np.linspace(0, n, k + 1).astype(int)
        return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]

    def _scores_slice(self, cont, sl):
        ret = self.disc.returns[:, sl, :]
        if self.gamma == 0:
            return np.sum((ret + cont[sl]) * self.disc.weights, axis=-1)
        return log_mean_exp(self.gamma * ret + cont[sl], self.disc.weights)

    def scores(self, values: np.ndarray) -> np.ndarray:
        """Per-action objective, shape (A, N).

        ``log E exp(gamma F + f(G))`` for ``gamma < 0``; ``E[F + f(G)]`` for ``gamma = 0``.
        """
        cont = self.disc.continuation(values)
        if self.threads == 1:
            return self._scores_slice(cont, slice(None))
        chunks = self._node_chunks()
        with ThreadPoolExecutor(self.threads) as pool:
            parts = list(pool.map(lambda sl: self._scores_slice(cont, sl), chunks))
        return np.concatenate(parts, axis=1)

    def apply(self, values: np.ndarray):
        """Optimal values per node and the optimising action index (lowest index on ties)."""
        s = self.scores(values)
        idx = np.argmax(s, axis=0) if self.gamma == 0 else np.argmin(s, axis=0)
        return s[idx, np.arange(s.shape[1])], idx

    def tilt(self, values: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Esscher weights over the noise atoms per node, shape (N, Q)."""
        cont = self.disc.continuation(values)
        nodes = np.arange(cont.shape[0])
        z = self.gamma * self.disc.returns[actions, nodes, :] + cont
        z = z - z.max(axis=1, keepdims=True)
        w = self.disc.weights * np.exp(z)
        return w / w.sum(axis=1, keepdims=True)

    def projected_tilt(self, values: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Tilted successor laws spread onto the grid nodes, dense (N, N); rows sum to one."""
        t = self.tilt(values, actions)
        n, q = t.shape
        scaled = sparse.diags(t.ravel()) @ self.disc.interp
        group = sparse.kron(sparse.identity(n, format="csr"), np.ones((1, q)), format="csr")
        return (group @ scaled).toarray()


def apply_T(model: MarketModel, f: GridFunction, gamma: float, disc: Discretization | None = None):
    """``T_gamma f`` on the model grid and the minimising action index per node.

    Examples
    --------
    >>> from rsgrowth.model import builtin
    >>> from rsgrowth.grid import GridFunction
    >>> m = builtin("control_free")
    >>> Tf, _ = apply_T(m, GridFunction.constant(m.grid), -1.0)
    >>> round(float(Tf.values[0]), 10)
    0.5
    """
    gamma = check_gamma(gamma, allow_zero=False)
    disc = Discretization(model) if disc is None else disc
    _check_grid(f, disc)
    values, idx = BellmanOperator(disc, gamma).apply(f.values)
    return GridFunction(disc.grid, values), idx


def apply_R(model: MarketModel, f: GridFunction, gamma: float, disc: Discretization | None = None):
    """``R_gamma f = (1/gamma) T_gamma(gamma f)``."""
    gamma = check_gamma(gamma, allow_zero=False)
    Tf, _ = apply_T(model, f * gamma, gamma, disc)
    return Tf / gamma


def _check_grid(f, disc):
    if f.spec != disc.grid:
        raise DomainError("grid function does not live on the discretization grid")


@dataclass(frozen=True, eq=False)
class BellmanSolution:
    """Output of relative value iteration.

    ``u`` is normalised to vanish at the anchor node and ``v = u / gamma``.
    At ``gamma = 0`` the iteration runs on ``v`` directly and ``u`` is ``v``.
    """

    gamma: float
    lam: float
    u: GridFunction
    v: GridFunction
    policy: np.ndarray
    actions: np.ndarray
    trace: np.ndarray
    converged: bool
    n_iter: int
    anchor: int
    lambda_deviation: float
    residual: float
    clamp_fraction: float
    clamp_mass: float
    unreliable: bool
    tol: float

    @property
    def grid(self) -> GridSpec:
        return self.u.spec

    def policy_actions(self) -> np.ndarray:
        return self.actions[self.policy]

    def contraction_ratios(self) -> np.ndarray:
        """Ratios of successive trace entries."""
        t = self.trace
        with np.errstate(divide="ignore", invalid="ignore"):
            return t[1:] / t[:-1]

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma, "lambda": self.lam, "converged": self.converged,
            "n_iter": self.n_iter, "anchor": self.anchor, "tol": self.tol,
            "lambda_deviation": self.lambda_deviation, "residual": self.residual,
            "clamp_fraction": self.clamp_fraction, "clamp_mass": self.clamp_mass,
            "unreliable": self.unreliable, "grid": self.grid.to_dict(),
        }


def solve(model: MarketModel, gamma: float, anchor=None, tol: float = 1e-9,
          max_iter: int = 100_000, *, clamp_threshold: float = 0.01,
          disc: Discretization | None = None, init: GridFunction | None = None,
          threads: int = 1) -> BellmanSolution:
    """Relative value iteration ``f <- T f - (T f)(anchor)``.

    Parameters
    ----------
    gamma : float
        Risk aversion, ``<= 0``. Zero runs the risk-neutral iteration on ``v``.
    anchor : int or array_like, optional
        Linear node index, or a state whose nearest node is used. Defaults to
        the node nearest the origin.
    tol : float
        Stop once the weighted span (``beta = 1``) of successive iterates'
        difference drops below ``tol``.
    init : GridFunction, optional
        Starting point (warm start); zero by default.

    Returns
    -------
    BellmanSolution
        ``converged`` is False if ``max_iter`` was reached; the trace is kept.
    """
    gamma = check_gamma(gamma)
    tol = check_positive(tol, "tol")
    disc = Discretization(model) if disc is None else disc
    grid = disc.grid
    a = _anchor(grid, anchor)
    op = BellmanOperator(disc, gamma, threads)
    bw = disc.omega

    f = np.zeros(grid.size) if init is None else np.array(init.values, dtype=float)
    f = f - f[a]
    trace = []
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        tf, _ = op.apply(f)
        nxt = tf - tf[a]
        diff = span_values(nxt - f, bw)
        trace.append(diff)
        f = nxt
        if diff < tol:
            converged = True
            break

    tf, policy = op.apply(f)
    scale = 1.0 if gamma == 0 else gamma
    probe = grid.neighbours(a)
    lams = (tf[probe] - f[probe]) / scale
    lam = float(lams.mean())
    residual = float(np.max(np.abs(tf - f - scale * lam) / (1.0 + bw)))
    u = GridFunction(grid, f)
    v = u if gamma == 0 else GridFunction(grid, f / gamma + 0.0)  # no -0.0
    return BellmanSolution(
        gamma=gamma, lam=lam, u=u, v=v, policy=policy, actions=model.actions.points,
        trace=np.asarray(trace), converged=converged, n_iter=n_iter, anchor=a,
        lambda_deviation=float(np.max(np.abs(lams - lam))), residual=residual,
        clamp_fraction=disc.clamp_fraction, clamp_mass=disc.clamp_mass,
        unreliable=disc.clamp_fraction > clamp_threshold, tol=tol,
    )


def _anchor(grid, anchor):
    if anchor is None:
        return grid.anchor_index()
    if np.ndim(anchor) == 0 and isinstance(anchor, (int, np.integer)):
        if not 0 <= anchor < grid.size:
            raise DomainError(f"anchor index {anchor} outside the grid")
        return int(anchor)
    point = np.asarray(anchor, dtype=float).reshape(-1)
    if not grid.contains(point.reshape(1, -1))[0]:
        raise DomainError(f"anchor {point.tolist()} lies outside the grid")
    return grid.anchor_index(point)


class RiskSensitiveRVI(BaseEstimator):
    """Estimator front end to :func:`solve`.

    Parameters
    ----------
    gamma : float, default=-0.5
    tol : float, default=1e-9
    max_iter : int, default=100000
    anchor : int or array_like, optional
    clamp_threshold : float, default=0.01
    threads : int, default=1

    Attributes
    ----------
    solution_ : BellmanSolution
    lambda_ : float
    u_, v_ : GridFunction
    policy_ : ndarray of int
    n_iter_ : int
    converged_ : bool

    Examples
    --------
    >>> from rsgrowth.model import builtin
    >>> est = RiskSensitiveRVI(gamma=-1.0).fit(builtin("control_free"))
    >>> round(est.lambda_, 6)
    -0.5
    """

    def __init__(self, gamma=-0.5, tol=1e-9, max_iter=100_000, anchor=None,
                 clamp_threshold=0.01, threads=1):
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter
        self.anchor = anchor
        self.clamp_threshold = clamp_threshold
        self.threads = threads

    def fit(self, model: MarketModel, y=None, *, init=None):
        sol = solve(model, self.gamma, anchor=self.anchor, tol=self.tol, max_iter=self.max_iter,
                    clamp_threshold=self.clamp_threshold, init=init, threads=self.threads)
        self.model_ = model
        self.solution_ = sol
        self.lambda_ = sol.lam
        self.u_ = sol.u
        self.v_ = sol.v
        self.policy_ = sol.policy
        self.n_iter_ = sol.n_iter
        self.converged_ = sol.converged
        return self

    def _check_fitted(self):
        if not hasattr(self, "solution_"):
            raise AttributeError("estimator is not fitted; call fit(model) first")

    def predict(self, X) -> np.ndarray:
        """Action vectors of the nearest grid node, shape (n, m)."""
        self._check_fitted()
        X = check_states(X, self.model_.k)
        idx = self.solution_.grid.nearest_index(X)
        return self.solution_.actions[self.policy_[idx]]

    def value(self, X) -> np.ndarray:
        """``v`` interpolated at ``X``."""
        self._check_fitted()
        return self.v_(check_states(X, self.model_.k))
