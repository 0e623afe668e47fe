"""Trajectory simulation and Monte Carlo estimation of the risk-sensitive criterion.

Random numbers
--------------
Path ``i`` of a run with seed ``s`` draws from Philox4x64-10 keyed by the
pair ``(s, i)``, starting at counter 0. Each 64-bit output ``r`` becomes the
uniform ``((r >> 11) + 0.5) * 2**-53`` in (0, 1), and step ``t`` consumes the
next ``n_uniforms`` outputs. Gaussian noise is obtained by the inverse normal
CDF, atomic noise by the inverse CDF of its weights. A path therefore depends
only on ``(seed, i)``, so chunking and thread scheduling cannot change output.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import DomainError, check_gamma
from .diagnostics import rsc_upper_bound
from .entropic import log_mean_exp
from .grid import GridSpec
from .model import MarketModel
from .solver import BellmanSolution

CHUNK = 1024
_INV53 = 2.0 ** -53


def path_uniforms(seed: int, path: int, count: int) -> np.ndarray:
    """``count`` uniforms of substream ``(seed, path)``."""
    key = np.array([seed, path], dtype=np.uint64)
    raw = np.random.Philox(key=key).random_raw(count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _INV53


@dataclass(frozen=True, eq=False)
class Policy:
    """Action lookup: a fixed action, or a per-node action index on a grid (nearest node)."""

    actions: np.ndarray
    grid: GridSpec | None = None
    node_actions: np.ndarray | None = None
    fixed: int | None = None
    name: str = "policy"

    @classmethod
    def from_solution(cls, sol: BellmanSolution) -> "Policy":
        return cls(sol.actions, sol.grid, sol.policy, name="solved")

    @classmethod
    def constant(cls, model: MarketModel, index: int) -> "Policy":
        acts = model.actions.points
        if not 0 <= index < len(acts):
            raise DomainError(f"action index {index} out of range")
        return cls(acts, fixed=int(index), name=f"fixed[{index}]")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.fixed is not None:
            return np.broadcast_to(self.actions[self.fixed], (x.shape[0], self.actions.shape[1]))
        return self.actions[self.node_actions[self.grid.nearest_index(x)]]


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """Cumulative log-returns ``sums[i, j]`` of path ``i`` at ``checkpoints[j]``.

    Excluded paths (non-finite model output) keep NaN rows and are flagged
    in ``valid``.
    """

    seed: int
    horizon: int
    n_paths: int
    checkpoints: np.ndarray
    sums: np.ndarray
    valid: np.ndarray
    clamp_count: int
    policy: str

    @property
    def n_excluded(self) -> int:
        return int((~self.valid).sum())

    def to_dict(self) -> dict:
        return {"seed": self.seed, "horizon": self.horizon, "n_paths": self.n_paths,
                "checkpoints": self.checkpoints.tolist(), "n_excluded": self.n_excluded,
                "clamp_count": self.clamp_count, "policy": self.policy}


def _simulate_chunk(model, policy, paths, T, marks, seed, grid):
    n_u = model.sampler.n_uniforms
    u = np.stack([path_uniforms(seed, int(p), T * n_u) for p in paths]).reshape(len(paths), T, n_u)
    x = np.broadcast_to(np.asarray(model.x0, dtype=float), (len(paths), model.k)).copy()
    cum = np.zeros(len(paths))
    ok = np.ones(len(paths), dtype=bool)
    out = np.full((len(paths), marks.size), np.nan)
    clamps = 0
    j = 0
    with np.errstate(all="ignore"):
        for t in range(T):
            w = model.sampler.sample(u[:, t, :])
            if grid is not None:
                clamps += int((~grid.contains(x)).sum())
            ret = np.asarray(model.F(x, policy(x), w), dtype=float)
            nxt = np.asarray(model.G(x, w), dtype=float)
            bad = ~np.isfinite(ret) | ~np.all(np.isfinite(nxt), axis=1)
            if bad.any():
                ok &= ~bad
                ret = np.where(bad, 0.0, ret)
                nxt = np.where(bad[:, None], x, nxt)
            cum = cum + ret
            x = nxt
            while j < marks.size and marks[j] == t + 1:
                out[:, j] = cum
                j += 1
    out[~ok] = np.nan
    return out, ok, clamps


def simulate(model: MarketModel, policy, T: int, N: int, seed: int, checkpoints=None,
             threads: int = 1) -> TrajectoryBatch:
    """Simulate ``N`` paths of ``(X_t, sum F)`` over ``T`` steps from ``model.x0``.

    Parameters
    ----------
    policy : BellmanSolution, Policy or int
        Solved policy, explicit lookup, or index of a fixed action.
    checkpoints : sequence of int, optional
        Horizons at which the cumulative log-return is recorded; defaults to ``[T]``.
    threads : int
        Worker threads over path chunks; output does not depend on it.
    """
    T, N = int(T), int(N)
    if T < 1 or N < 1:
        raise DomainError("T and N must be positive")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise DomainError("seed must be an unsigned 64-bit integer")
    if isinstance(policy, BellmanSolution):
        policy = Policy.from_solution(policy)
    elif isinstance(policy, (int, np.integer)):
        policy = Policy.constant(model, int(policy))
    marks = np.unique(np.asarray([T] if checkpoints is None else checkpoints, dtype=np.int64))
    if marks.size == 0 or marks[0] < 1 or marks[-1] > T:
        raise DomainError(f"checkpoints must lie in [1, {T}]")
    grid = policy.grid if policy.grid is not None else model.grid
    chunks = [np.arange(a, min(a + CHUNK, N)) for a in range(0, N, CHUNK)]

    def run(paths):
        return _simulate_chunk(model, policy, paths, T, marks, seed, grid)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(int(threads)) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return TrajectoryBatch(
        seed=seed, horizon=T, n_paths=N, checkpoints=marks,
        sums=np.concatenate([p[0] for p in parts]),
        valid=np.concatenate([p[1] for p in parts]),
        clamp_count=sum(p[2] for p in parts), policy=policy.name,
    )


@dataclass(frozen=True)
class RscEstimate:
    """Per-checkpoint estimates of ``(1/t) mu^gamma(sum F)`` with bootstrap intervals.

    ``taylor`` is ``(mean + gamma/2 * variance) / t`` of the cumulative log-return.
    ``tail_min`` is the smallest point estimate over the last half of the
    checkpoints, the finite-horizon stand-in for the liminf.
    """

    gamma: float
    checkpoints: np.ndarray
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    mean: np.ndarray
    taylor: np.ndarray
    n_paths: int
    level: float

    @property
    def tail_min(self) -> float:
        tail = self.point[self.point.size // 2:]
        return float(tail.min())

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def rows(self):
        for i, t in enumerate(self.checkpoints):
            yield {"t": int(t), "estimate": float(self.point[i]), "ci_lower": float(self.lower[i]),
                   "ci_upper": float(self.upper[i]), "mean": float(self.mean[i]),
                   "taylor": float(self.taylor[i])}


def _entropic_rate(S, gamma, t):
    if gamma == 0:
        return np.mean(S, axis=-1) / t
    return log_mean_exp(gamma * S, 1.0 / S.shape[-1]) / (gamma * t) + 0.0  # no -0.0


def estimate_rsc(batch: TrajectoryBatch, gamma: float, n_boot: int = 400, level: float = 0.95,
                 seed: int | None = None) -> RscEstimate:
    """Entropic growth-rate estimates at every checkpoint of ``batch``.

    The bootstrap resamples paths with a generator seeded from the batch
    seed (or ``seed``), so the interval is reproducible.
    """
    gamma = check_gamma(gamma)
    sums = batch.sums[batch.valid]
    if sums.shape[0] == 0:
        raise DomainError("every path was excluded; nothing to estimate")
    n = sums.shape[0]
    t = batch.checkpoints.astype(float)
    S = sums.T  # (checkpoints, paths)
    point = _entropic_rate(S, gamma, t)
    rng = np.random.default_rng([batch.seed if seed is None else seed, 0x5EED])
    idx = rng.integers(0, n, size=(n_boot, n))
    boot = np.stack([_entropic_rate(S[j][idx], gamma, t[j]) for j in range(t.size)])
    q = (1.0 - level) / 2.0
    lower = np.minimum(np.quantile(boot, q, axis=1), point)
    upper = np.maximum(np.quantile(boot, 1.0 - q, axis=1), point)
    mean = S.mean(axis=1) / t
    var = S.var(axis=1, ddof=1) if n > 1 else np.zeros(t.size)
    taylor = mean + 0.5 * gamma * var / t
    return RscEstimate(gamma=gamma, checkpoints=batch.checkpoints.copy(), point=point,
                       lower=lower, upper=upper, mean=mean, taylor=taylor, n_paths=n, level=level)


@dataclass
class VerificationReport:
    gamma: float
    lam: float
    upper_bound: float
    solved: RscEstimate
    baselines: dict
    checks: list = field(default_factory=list)
    excluded: int = 0
    clamp_count: int = 0

    @property
    def ok(self) -> bool:
        return all(c["passed"] for c in self.checks if c["gating"])

    def estimate_rows(self):
        for name, est in [("solved", self.solved), *self.baselines.items()]:
            for row in est.rows():
                yield {"policy": name, **row}


def baseline_indices(n_actions: int) -> list:
    """First, middle and last action (deduplicated)."""
    return sorted({0, n_actions // 2, n_actions - 1})


def verify(model: MarketModel, solution: BellmanSolution, horizons=(250, 500, 1000, 2000),
           N: int = 10_000, seed: int = 0, *, n_boot: int = 400, threads: int = 1) -> VerificationReport:
    """Compare Monte Carlo growth rates with ``lambda`` and the a priori bound.

    Gating checks: every fixed-action baseline at the longest horizon is at
    most ``lambda + 2 * CI width``; the a priori bound is at least
    ``lambda``; when ``a1`` is bounded, the solved-policy interval at the
    longest horizon contains ``lambda``. Otherwise that comparison is reported
    but does not gate.
    """
    if not solution.converged:
        raise DomainError("verification needs a converged solution")
    gamma = solution.gamma
    lam = solution.lam
    T = int(max(horizons))
    batch = simulate(model, solution, T, N, seed, horizons, threads)
    solved = estimate_rsc(batch, gamma, n_boot)
    excluded, clamps = batch.n_excluded, batch.clamp_count
    baselines = {}
    for i in baseline_indices(len(model.actions)):
        b = simulate(model, i, T, N, seed, horizons, threads)
        baselines[f"fixed[{i}]"] = estimate_rsc(b, gamma, n_boot)
        excluded += b.n_excluded
    bound = rsc_upper_bound(model, gamma)
    checks = []
    for name, est in baselines.items():
        slack = 2.0 * est.width[-1]
        checks.append({"check": f"{name} <= lambda + 2*CI width", "value": float(est.point[-1]),
                       "threshold": lam + slack, "passed": bool(est.point[-1] <= lam + slack),
                       "gating": True})
    checks.append({"check": "upper bound >= lambda", "value": bound, "threshold": lam,
                   "passed": bool(bound >= lam), "gating": True})
    inside = bool(solved.lower[-1] <= lam <= solved.upper[-1])
    checks.append({"check": "solved CI contains lambda", "value": float(solved.point[-1]),
                   "threshold": lam, "passed": inside, "gating": bool(model.a1_bounded)})
    return VerificationReport(gamma=gamma, lam=lam, upper_bound=bound, solved=solved,
                              baselines=baselines, checks=checks, excluded=excluded,
                              clamp_count=clamps)
