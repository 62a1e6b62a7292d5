import numpy as np
import pytest
from bplambda import cells
from bplambda.cells import CellKind, HeadKind, init_params
from bplambda.errors import ContractViolation, MissingTargetError, NonFiniteError, ShapeError
from bplambda.theory_lab import jacobian_check, readout_check, vjp_check

@pytest.mark.parametrize("kind", list(CellKind))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_state_jacobian_matches_finite_differences(kind, seed):
    assert jacobian_check(kind, seed) < 1e-5

@pytest.mark.parametrize("kind", list(CellKind))
def test_parameter_vjp_matches_finite_differences(kind):
    assert vjp_check(kind, 3) < 1e-5

@pytest.mark.parametrize("head", list(HeadKind))
def test_readout_gradient_matches_finite_differences(head):
    assert readout_check(head, 4) < 1e-5

def test_init_params_shapes_and_forget_bias():
    params = init_params(CellKind.LSTM, 4, 3, 2, np.random.default_rng(0))
    assert params.state_dim == 6
    assert params.W_in.shape == (12, 4)
    assert params.W_rec.shape == (12, 3)
    np.testing.assert_array_equal(params.b[3:6], 1.0)
    np.testing.assert_array_equal(params.b[:3], 0.0)
    assert np.all(np.abs(params.W_in) <= 0.5)

def test_linear_step_is_affine():
    params = init_params(CellKind.LINEAR, 2, 3, 1, np.random.default_rng(1))
    x = np.array([1.0, -1.0])
    h = np.array([0.5, 0.0, -0.5])
    out = cells.step(x, h, params)
    np.testing.assert_allclose(out.next_state[0], params.W_in @ x + params.W_rec @ h + params.b)
    np.testing.assert_allclose(out.jac_state[0], params.W_rec)

def test_batched_step_matches_single_items():
    rng = np.random.default_rng(2)
    params = init_params(CellKind.LSTM, 3, 2, 2, rng)
    X = rng.normal(size=(4, 3))
    H = rng.normal(size=(4, 4))
    batched = cells.step(X, H, params)
    for b in range(4):
        single = cells.step(X[b], H[b], params)
        np.testing.assert_allclose(batched.next_state[b], single.next_state[0])
        np.testing.assert_allclose(batched.jac_state[b], single.jac_state[0])

def test_step_rejects_wrong_width():
    params = init_params(CellKind.TANH, 2, 3, 1, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        cells.step(np.ones(2), np.ones(4), params)

def test_stale_cache_is_a_contract_violation():
    params = init_params(CellKind.TANH, 2, 3, 1, np.random.default_rng(0))
    out = cells.step(np.ones(2), np.zeros(3), params)
    params.mark_updated()
    with pytest.raises(ContractViolation):
        cells.vjp_params(out, np.ones(3), params)

def test_readout_without_target():
    params = init_params(CellKind.TANH, 2, 3, 2, np.random.default_rng(0))
    r = cells.readout(HeadKind.MSE, np.ones(3), params)
    assert r.loss == 0.0
    np.testing.assert_array_equal(r.grad_state, np.zeros(3))
    with pytest.raises(MissingTargetError):
        cells.readout(HeadKind.MSE, np.ones(3), params, require_target=True)

def test_mse_is_half_squared_error():
    params = init_params(CellKind.LINEAR, 1, 2, 2, np.random.default_rng(0))
    params.W_out[:] = np.eye(2)
    r = cells.readout(HeadKind.MSE, np.array([[1.0, 2.0]]), params, np.array([[0.0, 0.0]]))
    assert r.loss[0] == pytest.approx(2.5)

def test_lstm_readout_only_touches_output_state():
    rng = np.random.default_rng(5)
    params = init_params(CellKind.LSTM, 2, 3, 4, rng)
    r = cells.readout(HeadKind.BITS, rng.normal(size=(2, 6)), params, np.ones((2, 4)))
    np.testing.assert_array_equal(r.grad_state[:, :3], 0.0)
    assert np.any(r.grad_state[:, 3:] != 0.0)

def test_pull_back_uses_jacobian():
    rng = np.random.default_rng(6)
    params = init_params(CellKind.TANH, 2, 3, 1, rng)
    out = cells.step(rng.normal(size=2), rng.normal(size=3), params)
    v = rng.normal(size=3)
    np.testing.assert_allclose(cells.pull_back(v, out)[0], v @ out.jac_state[0])

def test_linear_jacobian_product_is_matrix_power():
    rng = np.random.default_rng(3)
    params = init_params(CellKind.LINEAR, 2, 3, 1, rng)
    h = rng.normal(size=3)
    product = np.eye(3)
    for _ in range(4):
        out = cells.step(rng.normal(size=2), h, params)
        product = out.jac_state[0] @ product
        h = out.next_state[0]
    np.testing.assert_allclose(product, np.linalg.matrix_power(params.W_rec, 4),
                               rtol=1e-12, atol=1e-14)

def test_lstm_gates_stay_in_range():
    rng = np.random.default_rng(4)
    params = init_params(CellKind.LSTM, 3, 4, 2, rng)
    out = cells.step(rng.normal(size=(6, 3)), rng.normal(size=(6, 8)), params)
    for gate in ('i', 'f', 'o'):
        assert np.all((out.cache[gate] > 0.0) & (out.cache[gate] < 1.0))
    for act in ('g', 'tc'):
        assert np.all(np.abs(out.cache[act]) < 1.0)
    assert np.all(np.abs(out.next_state[:, 4:]) < 1.0)

def test_untrained_cross_entropy_is_log_ten():
    params = init_params(CellKind.TANH, 2, 3, 10, np.random.default_rng(5))
    params.W_out[:] = 0.0
    ro = cells.readout(HeadKind.SOFTMAX_CE, np.array([0.3, -0.2, 0.9]), params, 4)
    assert ro.loss == pytest.approx(np.log(10.0))

def test_mse_exact_prediction_has_no_loss():
    params = init_params(CellKind.TANH, 2, 3, 2, np.random.default_rng(6))
    h = np.array([0.1, 0.2, -0.3])
    y = cells.readout(HeadKind.MSE, h, params).prediction
    ro = cells.readout(HeadKind.MSE, h, params, y)
    assert ro.loss == 0.0
    np.testing.assert_array_equal(ro.grad_state, 0.0)

def test_non_finite_state_raises():
    params = init_params(CellKind.LINEAR, 2, 3, 1, np.random.default_rng(7))
    with pytest.raises(NonFiniteError):
        cells.step(np.array([np.inf, 0.0]), np.zeros(3), params)
