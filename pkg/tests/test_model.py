import numpy as np
import pytest

from rsgrowth._validation import DomainError, ModelError, ShapeError
from rsgrowth.entropic import DiscreteLaw
from rsgrowth.grid import GridSpec, WeightFunction
from rsgrowth.model import (
    BUILTIN_NAMES,
    ActionSet,
    AtomicNoise,
    CellPartition,
    MarketModel,
    builtin,
    builtin_defaults,
    factor_step,
    finite_chain,
    log_return,
    minorization_check,
    validate_growth,
)


def test_action_sets():
    eq = ActionSet(2, "simplex-equality", 4)
    assert len(eq) == 5
    np.testing.assert_allclose(eq.points.sum(axis=1), 1.0)
    ineq = ActionSet(2, "simplex-inequality", 4)
    assert len(ineq) == 15
    assert np.all(ineq.points.sum(axis=1) <= 1.0 + 1e-15)
    box = ActionSet(2, "box", 2, lower=-1.0, upper=1.0)
    assert len(box) == 9
    # lexicographic order, no duplicates
    for a in (eq, ineq, box):
        pts = [tuple(p) for p in a.points]
        assert pts == sorted(set(pts))
    with pytest.raises(DomainError):
        ActionSet(2, "cone", 4)


def test_factor_step_examples():
    m = builtin("example2_clipped", {"rho": 0.5, "K": 2.0, "lower_clip": None,
                                     "delta": [[1.0, 0.0]]})
    assert factor_step(m, [[0.0]], [[0.0, 0.0]])[0, 0] == 0.0
    x = np.array([[1.4]])
    assert factor_step(m, x, [[3.0, 0.0]])[0, 0] == pytest.approx(0.5 * 1.4 + 2.0, abs=1e-15)
    assert factor_step(m, x, [[-3.0, 0.0]])[0, 0] == pytest.approx(0.7 - 3.0, abs=1e-15)

    e1 = builtin("example1_omega0")
    x = np.array([[0.7]])
    w = np.array([[0.3, -0.2, 0.5]])
    delta = np.zeros(3)
    delta[0] = e1.params["factor_vol"]
    assert factor_step(e1, x, w)[0, 0] == pytest.approx(np.tanh(0.7) + delta @ w[0], abs=1e-15)


def test_factor_step_non_finite():
    m = builtin("control_free")
    bad = MarketModel(**{**m.__dict__, "G": lambda x, w: np.full(np.broadcast(x, w[..., :1]).shape, np.nan)})
    with pytest.raises(ModelError):
        factor_step(bad, [[0.0]], [[0.0, 0.0]])


def test_log_return_examples():
    m = builtin("example3_discrete", {"mu": [0.0], "kappa": [[0.0]], "asset_vol": 0.0})
    assert log_return(m, [[0.0]], [[0.0]], [[0.4, 1.3]])[0] == 0.0
    assert log_return(m, [[0.0]], [[1.0]], [[0.4, 1.3]])[0] == 0.0
    unit = builtin("example3_discrete", {"mu": [0.0], "kappa": [[0.0]], "sigma": [[0.0, 1.0]]})
    assert log_return(unit, [[0.0]], [[1.0]], [[0.0, 1.0]])[0] == pytest.approx(0.5, abs=1e-15)


def test_example3_deterministic_rate():
    r = 0.04
    m = builtin("example3_discrete", {"mu": [r], "kappa": [[0.0]], "asset_vol": 0.0})
    w = m.noise.points
    for h in m.actions.points[:, 0]:
        out = log_return(m, np.zeros((w.shape[0], 1)), np.full((w.shape[0], 1), h), w)
        np.testing.assert_allclose(out, np.log(1 + h * (np.exp(r) - 1)), atol=1e-15)


def test_example1_return_bound():
    m = builtin("example1_omega0")
    law = m.noise
    x = m.grid.nodes
    for h in m.actions.points:
        F = log_return(m, x[:, None, :], h, law.points[None, :, :])
        assert np.all(np.abs(F) <= m.a2(law.points)[None, :] + 1e-15)


def test_example2_unclipped_limit():
    clipped = builtin("example2_clipped", {"K": 1e9, "lower_clip": -1e9})
    rho = clipped.params["rho"]
    delta = np.array([[clipped.params["factor_vol"], 0.0]])
    x = np.linspace(-3, 3, 7).reshape(-1, 1)
    w = np.random.default_rng(1).normal(size=(7, 2)) * 5
    np.testing.assert_allclose(factor_step(clipped, x, w), rho * x + w @ delta.T, atol=1e-14)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtins_pass_growth_validation(name):
    rep = validate_growth(builtin(name))
    assert rep.ok, rep
    assert rep.drift_violations == 0 and rep.return_violations == 0
    assert rep.continuity_jump < 1e-5


def test_wrong_drift_constant_is_falsified():
    m = builtin("example2_clipped")
    bad = MarketModel(**{**m.__dict__, "b1": 0.0})
    rep = validate_growth(bad)
    assert rep.drift_violations > 0
    assert not rep.ok


def test_builtins_are_deterministic():
    a = builtin("example2_clipped", {"rho": 0.4})
    b = builtin("example2_clipped", {"rho": 0.4})
    np.testing.assert_array_equal(a.noise.points, b.noise.points)
    np.testing.assert_array_equal(a.noise.weights, b.noise.weights)
    np.testing.assert_array_equal(a.actions.points, b.actions.points)


def test_builtin_rejects_unknown():
    with pytest.raises(DomainError):
        builtin("example9")
    with pytest.raises(DomainError):
        builtin("example2_clipped", {"nonsense": 1})
    with pytest.raises(DomainError):
        builtin("example2_clipped", {"rho": 1.5})
    with pytest.raises(ShapeError):
        builtin("example2_clipped", {"mu": [0.1, 0.2, 0.3]})
    assert builtin_defaults("control_free")["sigma"] == 1.0


def test_telescoped_drift(rng):
    m = builtin("example2_clipped")
    T, n = 50, 200
    x = np.zeros((n, 1))
    om0 = m.omega(x)
    acc = np.zeros(n)
    b1 = m.b1
    for t in range(T):
        w = rng.normal(size=(n, 2))
        x = factor_step(m, x, w)
        acc = b1 * acc + m.a1(w)
        assert np.all(m.omega(x) <= b1 ** (t + 1) * om0 + acc + 1e-12)


def test_minorization_independent_successor():
    law = DiscreteLaw([[0.0], [1.0], [2.0]], [0.2, 0.3, 0.5])
    m = MarketModel(
        name="iid", k=1, m=1, G=lambda x, w: np.broadcast_to(w[..., :1], np.broadcast(x, w[..., :1]).shape),
        F=lambda x, h, w: 0.0 * w[..., 0], noise=law, sampler=AtomicNoise(law),
        actions=ActionSet(1, "simplex-equality", 1), omega=WeightFunction.zero(),
        a1=lambda w: np.zeros(len(w)), a2=lambda w: np.zeros(len(w)), b1=0.5, b2=0.0,
        grid=GridSpec([0.0], [2.0], [5]))
    cert = minorization_check(m, 1.0, cells_per_dim=3)
    assert cert.c == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(np.sort(cert.nu.weights), [0.2, 0.3, 0.5], atol=1e-15)


def test_minorization_clipped_model_is_strict():
    m = builtin("example2_clipped")
    cert = minorization_check(m, 1.6)
    assert 0.0 < cert.c < 1.0
    assert cert.n_states > 1
    assert cert.nu.weights.sum() == pytest.approx(1.0)


def test_minorization_no_mixing():
    m = builtin("control_free", {"rho": 0.999999, "factor_vol": 0.0})
    frozen = MarketModel(**{**m.__dict__, "G": lambda x, w: x + 0.0 * w[..., :1]})
    cert = minorization_check(frozen, 1.0)
    assert cert.c == 0.0
    assert cert.nu is None


def test_minorization_empty_set():
    m = builtin("example2_clipped")
    with pytest.raises(DomainError):
        minorization_check(m, 0.5)


def test_cell_partition_indices():
    part = CellPartition(np.array([0.0, 0.0]), np.array([1.0, 2.0]), 4)
    idx = part.index(np.array([[0.0, 0.0], [0.99, 1.99], [5.0, -5.0]]))
    assert idx.tolist() == [0, 15, 12]
    np.testing.assert_allclose(part.centres([0]), [[0.125, 0.25]])


def test_finite_chain_construction():
    m = finite_chain([[1, 0], [0, 1]], [[0.1, -0.1], [0.2, 0.0]], [0.5, 0.5])
    assert m.grid.size == 2
    assert factor_step(m, [[0.0]], [[0.0]])[0, 0] == 1.0
    assert log_return(m, [[1.0]], [[1.0]], [[0.0]])[0] == 0.2
    with pytest.raises(ShapeError):
        finite_chain([[2, 0], [0, 1]], [[0.0, 0.0], [0.0, 0.0]], [0.5, 0.5])
