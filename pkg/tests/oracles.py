"""Independent reference computations used by the test suite.

Nothing here imports the package: each oracle recomputes its quantity by
the most direct route available (brute force, closed form, power iteration).
"""

import numpy as np


def brute_span(values, bw):
    """O(N^2) weighted span: max over ordered pairs of (f_x - f_y) / (2 + bw_x + bw_y)."""
    values = np.asarray(values, dtype=float)
    bw = np.asarray(bw, dtype=float)
    ratio = (values[:, None] - values[None, :]) / (2.0 + bw[:, None] + bw[None, :])
    return float(max(ratio.max(), 0.0))


def brute_norm(values, bw):
    return float(np.max(np.abs(values) / (1.0 + np.asarray(bw))))


def gaussian_entropic(mean, std, gamma):
    """Entropic utility of N(mean, std^2): mean + gamma * std^2 / 2."""
    return mean + 0.5 * gamma * std**2


def entropic_direct(values, probs, gamma):
    """Unshifted textbook formula; only for moderate gamma * values."""
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if gamma == 0:
        return float(probs @ values)
    return float(np.log(probs @ np.exp(gamma * values)) / gamma)


def tilted_kernel(next_state, returns, probs, gamma):
    """K[x, y] = sum_j p_j exp(gamma F(x, j)) 1{next(x, j) = y}."""
    next_state = np.asarray(next_state)
    n, q = next_state.shape
    K = np.zeros((n, n))
    for x in range(n):
        for j in range(q):
            K[x, next_state[x, j]] += probs[j] * np.exp(gamma * returns[x, j])
    return K


def power_iteration(K, tol=1e-15, max_iter=200_000):
    """Spectral radius of a nonnegative primitive matrix by normalised power iteration."""
    v = np.ones(K.shape[0])
    rho = 0.0
    for _ in range(max_iter):
        w = K @ v
        new = w.sum() / v.sum()
        v = w / w.sum()
        if abs(new - rho) <= tol * new:
            rho = new
            break
        rho = new
    # one Collatz-Wielandt sandwich to confirm the estimate
    ratios = (K @ v) / v
    return float(rho), float(ratios.min()), float(ratios.max())


def is_primitive(K):
    n = K.shape[0]
    A = (K > 0).astype(float)
    P = np.linalg.matrix_power(A, (n - 1) ** 2 + 1)
    return bool(np.all(P > 0))


def random_primitive_chain(rng, max_states=6, max_atoms=4):
    """Random control-free chain with a primitive transition graph."""
    while True:
        n = int(rng.integers(2, max_states + 1))
        q = int(rng.integers(2, max_atoms + 1))
        nxt = rng.integers(0, n, size=(n, q))
        ret = rng.normal(0.0, 0.5, size=(n, q))
        probs = rng.dirichlet(np.ones(q))
        probs = probs / probs.sum()
        if probs.min() < 1e-3:
            continue
        if is_primitive(tilted_kernel(nxt, ret, probs, -1.0)):
            return nxt, ret, probs
