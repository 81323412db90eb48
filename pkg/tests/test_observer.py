import numpy as np
import pytest
import scipy.linalg

from hso_irl.basis import WeightVector
from hso_irl.control import lqr_gain
from hso_irl.errors import DimensionError, SingularityError
from hso_irl.numerics import null_basis, range_basis
from hso_irl.observer import (
    GainConfig,
    LtiSystem,
    ObserverState,
    WeightUpdate,
    certify_equivalence,
    delta,
    observer_step,
    vdot_check,
)
from hso_irl.scenarios import academic_scenario
from hso_irl.stack import HistoryStack, StackEntry


@pytest.fixture(scope="module")
def academic():
    scn = academic_scenario()
    pol = lqr_gain(scn.sys.A, scn.sys.B, scn.Q, scn.R)
    return scn, pol


def exact_stack(scn, K, N=12, seed=0, eps=None):
    rng = np.random.default_rng(seed)
    s = HistoryStack(N, scn.sys.A, scn.sys.B, scn.r1, scn.eps if eps is None else eps, 1e12)
    for i in range(N):
        x = rng.standard_normal(scn.sys.n)
        s.try_add(StackEntry(0.1 * i, x, K @ x))
    return s


def test_system_validation():
    with pytest.raises(DimensionError):
        LtiSystem(np.eye(2), np.ones((3, 1)), np.eye(2))
    with pytest.raises(ValueError):
        GainConfig(np.eye(2), 0.0, 0.1)
    with pytest.raises(ValueError):
        GainConfig(np.eye(2), 1.0, -0.1)


def test_delta_examples():
    S = np.array([[1.0, 2.0], [0.0, 1.0], [1.0, 1.0]])
    w = np.array([0.5, -1.0])
    assert np.allclose(delta(S, S @ w, w), 0)
    su = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(delta(np.zeros((3, 2)), su, w), su)
    with pytest.raises(DimensionError):
        delta(S, su, np.ones(3))


def test_delta_vanishes_at_expert_weights(academic):
    scn, pol = academic
    s = exact_stack(scn, pol.K)
    w = WeightVector.from_costs(pol.S, scn.Q, scn.R, scn.r1).as_array()
    assert np.linalg.norm(delta(s.sigma_hat, s.sigma_u, w)) <= 1e-9


def test_observer_step_open_loop_propagation():
    A = np.array([[0.0, 1.0], [-2.0, -0.1]])
    sys = LtiSystem(A, np.array([[0.0], [1.0]]), np.eye(2))
    gains = GainConfig(np.zeros((2, 2)), 1.0, 0.1)
    state = ObserverState(np.array([1.0, 0.0]), np.arange(6.0))
    u = np.array([0.3])
    new = observer_step(state, np.zeros(2), u, WeightUpdate.idle(6), sys, gains, 0.01)
    f = lambda t, x: A @ x + sys.B @ u
    ref = scipy.integrate.solve_ivp(f, (0, 0.01), state.x_hat, rtol=1e-12, atol=1e-14).y[:, -1]
    assert np.allclose(new.x_hat, ref, atol=1e-11)
    assert np.array_equal(new.w, state.w)
    assert new.t == pytest.approx(0.01)


def test_observer_step_empty_stack_freezes_weights(academic):
    scn, _ = academic
    empty = HistoryStack(17, scn.sys.A, scn.sys.B)
    gains = GainConfig(np.eye(3), 50.0, 0.1)
    w0 = np.linspace(-1, 1, 17)
    new = observer_step(ObserverState(np.zeros(3), w0), np.ones(3), np.zeros(3), empty, scn.sys, gains, 0.01)
    assert np.array_equal(new.w, w0)


def test_zero_eps_singular_gram():
    S = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(SingularityError):
        WeightUpdate(S, np.ones(2), 1.0, 0.0)


def _run_fixed_stack(update, w0, T, h):
    w = w0.copy()
    from hso_irl.numerics import rk4_step
    for k in range(int(round(T / h))):
        w = rk4_step(lambda t, z: update.rate(z), k * h, w, h)
    return w


def test_fixed_stack_limit_solves_normal_equations(academic):
    scn, pol = academic
    s = exact_stack(scn, pol.K, seed=1)
    gains = GainConfig(np.eye(3), 50.0, 0.1)
    upd = WeightUpdate.from_stack(s, gains.k4, gains.eps)
    w0 = np.zeros(s.layout.n_weights)
    w = _run_fixed_stack(upd, w0, 400.0, 0.02)
    Sg, su = s.sigma_hat, s.sigma_u
    # independent oracle: SVD least squares
    w_ls, *_ = np.linalg.lstsq(Sg, su, rcond=None)
    assert np.linalg.norm(Sg.T @ (su - Sg @ w)) <= 1e-8 * np.linalg.norm(Sg.T @ su)
    assert np.allclose(Sg @ w, Sg @ w_ls, atol=1e-6)


def test_null_space_component_is_frozen(academic):
    scn, pol = academic
    s = exact_stack(scn, pol.K, seed=2)
    N = null_basis(s.sigma_hat)
    assert N.shape[1] > 0  # the academic problem has non-unique solutions
    upd = WeightUpdate.from_stack(s, 50.0, 0.1)
    w0 = np.random.default_rng(0).standard_normal(s.layout.n_weights)
    w = _run_fixed_stack(upd, w0, 5.0, 0.01)
    assert np.abs(N.T @ (w - w0)).max() <= 1e-8


def test_vdot_examples():
    rng = np.random.default_rng(0)
    S = rng.standard_normal((6, 3))
    Nt = null_basis(S.T)
    assert vdot_check(S, Nt @ rng.standard_normal(Nt.shape[1]), 2.0, 0.1) == pytest.approx(0.0, abs=1e-12)
    assert vdot_check(S, S @ np.array([1.0, 0.0, -1.0]), 2.0, 0.1) < 0
    assert vdot_check(S, np.zeros(6), 2.0, 0.1) == 0.0


def test_vdot_matches_explicit_formula():
    rng = np.random.default_rng(1)
    S = rng.standard_normal((8, 4))
    D = rng.standard_normal(8)
    k4, eps = 3.0, 0.05
    explicit = -D @ S @ (k4 * np.linalg.inv(S.T @ S + eps * np.eye(4))) @ S.T @ D
    assert vdot_check(S, D, k4, eps) == pytest.approx(explicit, rel=1e-10)


def test_vdot_matches_finite_difference_of_lyapunov(academic):
    scn, pol = academic
    s = exact_stack(scn, pol.K, seed=3)
    upd = WeightUpdate.from_stack(s, 50.0, 0.1)
    w = np.random.default_rng(1).standard_normal(s.layout.n_weights)
    D = upd.delta(w)
    # V = |Delta|^2 / 2 and Delta' = -Sigma w'
    dV = -D @ (s.sigma_hat @ upd.rate(w))
    assert vdot_check(s.sigma_hat, D, 50.0, 0.1) == pytest.approx(dV, rel=1e-8)


def test_certify_expert_and_scaled_family(academic):
    scn, pol = academic
    s = exact_stack(scn, pol.K)
    k_norm = np.linalg.norm(pol.K)
    wv = WeightVector.from_costs(pol.S, scn.Q, scn.R, 1.0)
    rep = certify_equivalence(wv, s, scn.sys, pol.K, 0.05 * k_norm)
    assert rep.equivalent
    assert np.abs(rep.pointwise_hjb_residuals).max() <= 1e-9
    assert rep.gain_error <= 1e-10
    # the c = 2 member of the scaling family: same gain, different costs
    w2 = WeightVector.from_costs(2 * pol.S, 2 * scn.Q, 2 * scn.R, 2.0)
    rep2 = certify_equivalence(w2, s, scn.sys, pol.K, 0.05 * k_norm)
    assert rep2.equivalent
    assert np.linalg.norm(2 * scn.Q - scn.Q) > 0


def test_certify_zero_weights_not_equivalent(academic):
    scn, pol = academic
    s = exact_stack(scn, pol.K)
    rep = certify_equivalence(WeightVector.from_array(scn.layout, np.zeros(17), 1.0), s, scn.sys, pol.K, 0.1)
    assert not rep.equivalent and rep.note


def test_certify_wrong_gain_not_equivalent(academic):
    scn, pol = academic
    X = np.random.default_rng(0).standard_normal((3, 10))
    other = lqr_gain(scn.sys.A, scn.sys.B, 10 * scn.Q, scn.R)
    wv = WeightVector.from_costs(other.S, 10 * scn.Q, scn.R, 1.0)
    rep = certify_equivalence(wv, X, scn.sys, pol.K, 0.05 * np.linalg.norm(pol.K))
    assert np.abs(rep.pointwise_hjb_residuals).max() <= 1e-8
    assert rep.gain_error > 0.05 * np.linalg.norm(pol.K)
    assert not rep.equivalent


def test_fixed_stack_limit_hits_projector(academic):
    scn, pol = academic
    s = exact_stack(scn, pol.K, seed=4)
    upd = WeightUpdate.from_stack(s, 50.0, 0.1)
    w = _run_fixed_stack(upd, np.zeros(17), 300.0, 0.02)
    U = range_basis(s.sigma_hat)
    expected = s.sigma_u - U @ (U.T @ s.sigma_u)
    assert np.linalg.norm(upd.delta(w) - expected) <= 1e-6 * np.linalg.norm(s.sigma_u)
