"""Constructive contraction constants and numerical checks of the contraction argument.

The pointwise inequality of :func:`lemma1_check` uses tilted successor laws
spread onto the grid nodes with their interpolation weights, which are
exactly the laws the discretised operator integrates against. The
certificate's variation supremum instead bins sampled successors on a cell
partition (see :class:`CellKernel`), since quadrature atoms of distinct
nodes rarely share support.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import DomainError, check_gamma, check_positive
from .entropic import entropic_utility, log_mean_exp
from .grid import GridFunction
from .model import CellPartition, MarketModel, common_noise, factor_step, log_return
from .norms import span_values
from .solver import BellmanOperator, Discretization, solve


M_FLOOR = 1e-6


def random_span_functions(omega_values: np.ndarray, M: float, count: int, rng,
                          extremes: bool = True) -> np.ndarray:
    """``count`` grid functions with weighted span (``beta = 1``) at most ``M``.

    Random shapes are rescaled to a span drawn uniformly from ``(0, M]``.
    With ``extremes``, the first rows are ``+-M(1 + omega)`` sign patterns,
    which attain span ``M`` exactly.
    """
    n = omega_values.size
    d = 1.0 + omega_values
    rows = []
    if extremes and n > 1:
        half = np.where(np.arange(n) < n // 2, 1.0, -1.0)
        for pattern in (half, -half, np.where(np.arange(n) % 2 == 0, 1.0, -1.0)):
            rows.append(M * d * pattern)
    while len(rows) < count:
        kind = rng.integers(3)
        if kind == 0:
            raw = rng.standard_normal(n) * d
        elif kind == 1:
            raw = np.cumsum(rng.standard_normal(n))
        else:
            raw = rng.choice([-1.0, 1.0], n) * d * rng.random(n)
        span = span_values(raw, omega_values)
        if span > 0:
            rows.append(raw * (M * rng.uniform(0.05, 1.0) / span))
    return np.array(rows[:count])


@dataclass(frozen=True)
class ContractionCertificate:
    """Constants of the local contraction argument at ``gamma_bar``.

    ``sup_var`` is a sampled lower estimate of the supremum of the total
    variation over ``C_R`` and span-bounded pairs, so ``beta``, ``L`` and
    ``gamma0`` are sampled as well.
    """

    gamma_bar: float
    M: float
    phi: float
    alpha: float
    R: float
    beta: float
    L: float
    gamma0: float
    sup_var: float
    n_pairs: int
    n_states: int
    samples: int
    global_doeblin: bool
    ok: bool
    message: str = ""

    def to_dict(self) -> dict:
        return {**asdict(self), "sampled": True}


def certificate_M(model: MarketModel, gamma_bar: float) -> float:
    """``mu^0(a2) - mu^gamma_bar(-a2) + b2``: span bound on ``R_gamma 0``."""
    law = model.noise
    a2 = model.a2(law.points)
    return float(entropic_utility(a2, law, 0.0) - entropic_utility(-a2, law, gamma_bar) + model.b2)


def log_alpha(model: MarketModel, M: float, phi: float, gamma: float) -> float:
    """Logarithm of the smallest admissible drift constant ``alpha_phi``."""
    b1, b2 = model.b1, model.b2
    if not b1 > 0:
        raise DomainError("the drift constant needs b1 > 0")
    if not b1 < phi < 1:
        raise DomainError(f"phi must lie in (b1, 1) = ({b1}, 1), got {phi}")
    law = model.noise
    p = law.weights
    a1, a2 = model.a1(law.points), model.a2(law.points)
    c = 4.0 * (M * b1 - gamma * b2) / (phi - b1)
    mixed = M * a1 - gamma * a2
    return float(2.0 * M + np.log(phi - b1) - np.log(M * b1)
                 + 0.5 * log_mean_exp(c * a1, p)
                 + 0.5 * log_mean_exp(2.0 * mixed, p)
                 + log_mean_exp(mixed, p))


def beta_and_L(sup_var: float, phi: float, alpha: float, R: float):
    """Minimise the admissible ``L`` over ``beta``.

    ``(s + beta*K)/2`` increases and ``(2 + beta*K)/(2 + beta*R)`` decreases
    in ``beta`` (``K = phi*R + 2*alpha < R``), so the best ``beta`` is their
    crossing, capped below ``(2 - s)/K`` and 1.
    """
    s = sup_var
    K = phi * R + 2.0 * alpha
    root = (-s * R + np.sqrt((s * R) ** 2 + 4.0 * K * R * (4.0 - 2.0 * s))) / (2.0 * K * R)
    cap = min(1.0, (2.0 - s) / K)
    beta = min(root, np.nextafter(cap, 0.0))
    L = max(phi, (s + beta * K) / 2.0, (2.0 + beta * K) / (2.0 + beta * R))
    return float(beta), float(np.nextafter(L, 2.0))


class CellKernel:
    """Tilted successor laws of every grid node, binned on a cell partition.

    The noise is replaced by common draws from the model's sampler (atomic
    noise is used exactly), and successor laws are histogrammed on a uniform
    partition of the successor box. Total variation on a partition never
    exceeds that of the underlying laws, so maxima computed here are lower
    estimates.
    """

    def __init__(self, disc: Discretization, gamma: float, n_samples: int = 4096,
                 cells_per_dim: int = 32, max_cells: int = 4096, seed: int = 0):
        model = disc.model
        self.disc = disc
        self.gamma = gamma
        self.law = common_noise(model, n_samples, seed)
        nodes = disc.grid.nodes
        n, s = nodes.shape[0], self.law.size
        succ = factor_step(model, nodes[:, None, :], self.law.points[None, :, :]).reshape(n * s, -1)
        self.interp, _ = disc.grid.interpolation_matrix(succ)
        self.partition = CellPartition.fit(succ, cells_per_dim, max_cells)
        self.cells = (np.repeat(np.arange(n), s) * self.partition.n_cells
                      + self.partition.index(succ))
        self._returns = {}

    def returns(self, actions: np.ndarray) -> np.ndarray:
        key = actions.tobytes()
        if key not in self._returns:
            model = self.disc.model
            h = model.actions.points[actions]
            ret = log_return(model, self.disc.grid.nodes[:, None, :], h[:, None, :],
                             self.law.points[None, :, :])
            self._returns[key] = np.broadcast_to(ret, (actions.size, self.law.size))
        return self._returns[key]

    def laws(self, values: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Cell probabilities of the tilted successor law per node, (N, cells)."""
        n, s = actions.size, self.law.size
        z = self.gamma * self.returns(actions) + (self.interp @ values).reshape(n, s)
        w = self.law.weights * np.exp(z - z.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        c = self.partition.n_cells
        return np.bincount(self.cells, weights=w.ravel(), minlength=n * c).reshape(n, c)


def pair_variation(op: BellmanOperator, kernel: CellKernel, fs: np.ndarray) -> np.ndarray:
    """Elementwise max over couples ``(f, g)`` of ``||Q(x,f,h(x,g)) - Q(y,g,h(y,f))||_var``."""
    n = op.disc.grid.size
    tv = np.zeros((n, n))
    half = len(fs) // 2
    for f, g in zip(fs[:half], fs[half:2 * half]):
        _, hf = op.apply(f)
        _, hg = op.apply(g)
        np.maximum(tv, cdist(kernel.laws(f, hg), kernel.laws(g, hf), "cityblock"), out=tv)
    return tv


def contraction_certificate(model: MarketModel, gamma_bar: float, phi: float | None = None, *,
                            disc: Discretization | None = None, samples: int = 64,
                            r_margin: float = 1.0, eps_min: float = 1e-6,
                            n_noise: int = 4096, cells_per_dim: int = 32,
                            seed: int = 0) -> ContractionCertificate:
    """Evaluate ``M, alpha_phi, R, beta, L, gamma0`` by quadrature and sampling.

    Parameters
    ----------
    gamma_bar : float
        Negative reference risk aversion.
    phi : float, optional
        Drift rate in ``(b1, 1)``. By default 15 values are scanned and the
        one giving the widest interval ``(gamma0, 0)`` is kept.
    samples : int
        Number of sampled span-bounded functions (paired into ``samples/2``
        couples, used in both orders).
    n_noise, cells_per_dim : int
        Common noise draws and cells per axis for the variation estimate
        (see :class:`CellKernel`).
    r_margin : float
        ``R = 2 alpha / (1 - phi) * (1 + r_margin)``.
    eps_min : float
        The certificate fails when the sampled variation reaches ``2 - eps_min``.
    """
    gamma_bar = check_gamma(gamma_bar, allow_zero=False)
    check_positive(r_margin, "r_margin")
    disc = Discretization(model) if disc is None else disc
    op = BellmanOperator(disc, gamma_bar)
    om = disc.omega
    # any larger M is also a valid span bound; keep it away from zero
    M = max(certificate_M(model, gamma_bar), M_FLOOR)
    rng = np.random.default_rng(seed)
    fs = random_span_functions(om, M, max(2, samples), rng)
    fs = np.concatenate([fs, fs[::-1]])  # both orders of every couple
    kernel = CellKernel(disc, gamma_bar, n_noise, cells_per_dim, seed=seed)
    tv = pair_variation(op, kernel, fs)
    pair_sum = om[:, None] + om[None, :]

    phis = [phi] if phi is not None else list(model.b1 + (1.0 - model.b1) * np.linspace(0.05, 0.95, 15))
    best = None
    for ph in phis:
        alpha = float(np.exp(log_alpha(model, M, ph, gamma_bar)))
        R = float(2.0 * alpha / (1.0 - ph) * (1.0 + r_margin))
        mask = pair_sum <= R
        s = float(tv[mask].max()) if mask.any() else 0.0
        if not np.isfinite(R):
            cand = (ph, alpha, R, s, np.nan, np.nan, gamma_bar, int(mask.sum()), False,
                    "alpha_phi overflows")
        elif s >= 2.0 - eps_min:
            cand = (ph, alpha, R, s, np.nan, np.nan, gamma_bar, int(mask.sum()), False,
                    f"sampled variation {s:.12g} >= 2 - eps_min: mixing too weak on C_R")
        else:
            beta, L = beta_and_L(s, ph, alpha, R)
            gamma0 = max(gamma_bar, -beta * (1.0 - L))
            cand = (ph, alpha, R, s, beta, L, gamma0, int(mask.sum()), L < 1.0, "")
        if best is None or (cand[8] and (not best[8] or cand[6] < best[6])):
            best = cand
    ph, alpha, R, s, beta, L, gamma0, n_pairs, ok, msg = best
    return ContractionCertificate(
        gamma_bar=gamma_bar, M=M, phi=float(ph), alpha=alpha, R=R, beta=beta, L=L,
        gamma0=float(gamma0), sup_var=s, n_pairs=n_pairs, n_states=int(disc.grid.size),
        samples=len(fs), global_doeblin=model.omega.is_zero, ok=bool(ok), message=msg,
    )


def empirical_contraction(model: MarketModel, gamma: float, beta: float, trials: int = 64, *,
                          M: float | None = None, disc: Discretization | None = None,
                          seed: int = 0) -> float:
    """Largest sampled ``||Tf - Tg||_{beta,omega-span} / ||f - g||_{beta,omega-span}``.

    ``f`` and ``g`` have weighted span at most ``M`` (default: the span bound
    of the model at ``gamma``). Pairs with ``f - g`` constant are skipped.
    """
    gamma = check_gamma(gamma, allow_zero=False)
    beta = check_positive(beta, "beta")
    disc = Discretization(model) if disc is None else disc
    op = BellmanOperator(disc, gamma)
    om = disc.omega
    M = certificate_M(model, gamma) if M is None else M
    fs = random_span_functions(om, M, 2 * trials, np.random.default_rng(seed))
    worst = 0.0
    for f, g in zip(fs[:trials], fs[trials:]):
        den = span_values(f - g, beta * om)
        if den <= 1e-12 * max(1.0, np.abs(f - g).max()):
            continue
        num = span_values(op.apply(f)[0] - op.apply(g)[0], beta * om)
        worst = max(worst, num / den)
    return worst


def lemma1_check(model: MarketModel, gamma: float, beta: float, f, g, x: int, y: int,
                 disc: Discretization | None = None, op: BellmanOperator | None = None):
    """Both sides of ``Tf(x)-Tg(x)-(Tf(y)-Tg(y)) <= ||f-g||_span * ||H||_var``.

    ``H`` is ``Q(x, f, h(x, g)) - Q(y, g, h(y, f))`` on the grid nodes, and
    both norms are taken with scale ``beta``. ``x`` and ``y`` are node indices.
    """
    if op is None:
        disc = Discretization(model) if disc is None else disc
        op = BellmanOperator(disc, check_gamma(gamma, allow_zero=False))
    om = op.disc.omega
    f = f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=float)
    g = g.values if isinstance(g, GridFunction) else np.asarray(g, dtype=float)
    tf, hf = op.apply(f)
    tg, hg = op.apply(g)
    lhs = tf[x] - tg[x] - (tf[y] - tg[y])
    qx = _projected_row(op, f, hg[x], x)
    qy = _projected_row(op, g, hf[y], y)
    var = float(np.sum((1.0 + beta * om) * np.abs(qx - qy)))
    rhs = span_values(f - g, beta * om) * var
    return float(lhs), float(rhs)


def _projected_row(op, values, action, node):
    cont = op.disc.continuation(values)[node]
    z = op.gamma * op.disc.returns[action, node] + cont
    w = op.disc.weights * np.exp(z - z.max())
    w /= w.sum()
    q = op.disc.weights.size
    rows = op.disc.interp[node * q:(node + 1) * q]
    return np.asarray(rows.T @ w).ravel()


def tilted_drift_check(model: MarketModel, gamma: float, phi: float, alpha: float,
                       count: int = 1000, *, M: float | None = None,
                       disc: Discretization | None = None, seed: int = 0) -> dict:
    """Sample ``(x, f, h)`` and compare ``E_Q[omega(G(x, W))]`` with ``phi*omega(x) + alpha``.

    The tilted law is taken on the successor atoms themselves, before
    projection onto the grid.
    """
    gamma = check_gamma(gamma, allow_zero=False)
    disc = Discretization(model) if disc is None else disc
    op = BellmanOperator(disc, gamma)
    om = disc.omega
    M = certificate_M(model, gamma) if M is None else M
    rng = np.random.default_rng(seed)
    n_f = max(1, min(count, 32))
    fs = random_span_functions(om, M, n_f, rng)
    om_succ = model.omega(disc.successors.reshape(-1, model.k)).reshape(disc.clamped.shape)
    n_nodes, n_act = disc.grid.size, disc.shape[0]
    worst = -np.inf
    violations = 0
    for i in range(count):
        f = fs[i % n_f]
        x = int(rng.integers(n_nodes))
        h = int(rng.integers(n_act))
        t = op.tilt(f, np.full(n_nodes, h))[x]
        gap = float(t @ om_succ[x] - (phi * om[x] + alpha))
        worst = max(worst, gap)
        violations += gap > 0
    return {"count": count, "violations": int(violations), "max_gap": worst}


def rsc_upper_bound(model: MarketModel, gamma: float) -> float:
    """``mu^gamma(a2(W) + b2/(1-b1) a1(W))`` over the quadrature law."""
    gamma = check_gamma(gamma)
    law = model.noise
    z = model.a2(law.points) + model.b2 / (1.0 - model.b1) * model.a1(law.points)
    return float(entropic_utility(z, law, gamma))


@dataclass(frozen=True)
class SweepRow:
    gamma: float
    lam: float
    span_u: float
    converged: bool
    n_iter: int


def gamma_sweep(model: MarketModel, gammas, *, tol: float = 1e-9, max_iter: int = 100_000,
                disc: Discretization | None = None, warm_start: bool = True) -> list:
    """Solve at each gamma (processed in increasing order).

    ``span_u`` is the weighted span of the normalised ``u``. With
    ``warm_start`` each solve starts from the previous ``u`` rescaled by the
    ratio of gammas, which only affects the iteration count.
    """
    gammas = sorted(check_gamma(g) for g in gammas)
    if not gammas:
        raise DomainError("empty gamma list")
    disc = Discretization(model) if disc is None else disc
    rows = []
    prev = None
    for g in gammas:
        init = None
        if warm_start and prev is not None and prev.gamma != 0 and g != 0:
            init = prev.u * (g / prev.gamma)
        sol = solve(model, g, tol=tol, max_iter=max_iter, disc=disc, init=init)
        rows.append(SweepRow(gamma=g, lam=sol.lam, span_u=span_values(sol.u.values, disc.omega),
                             converged=sol.converged, n_iter=sol.n_iter))
        prev = sol
    return rows


def sweep_checks(rows, slack: float = 1e-9) -> dict:
    """Monotonicity of lambda in gamma and the fitted Lipschitz constant of the sweep."""
    g = np.array([r.gamma for r in rows])
    lam = np.array([r.lam for r in rows])
    dg, dl = np.diff(g), np.diff(lam)
    lip = float(np.max(np.abs(dl) / dg)) if dg.size else 0.0
    return {"nondecreasing": bool(np.all(dl >= -slack)), "lipschitz": lip}
