import numpy as np
import pytest
from bplambda.theory_lab import (
    InstanceSpec,
    build_instance,
    equivalence_ratio,
    finite_difference,
    lambda_sum_check,
    recursive_identity_check,
    relative_error,
    run_verification_suite,
    target_coherence,
    td_gap_scaling,
    unrolled_trace,
)

def test_finite_difference_of_quadratic():
    A = np.array([[2.0, 1.0], [0.0, 3.0]])
    jac = finite_difference(lambda x: A @ x, np.array([1.0, -1.0]))
    np.testing.assert_allclose(jac, A, atol=1e-8)

def test_finite_difference_rejects_bad_step():
    with pytest.raises(ValueError):
        finite_difference(lambda x: x, np.ones(2), step=0.0)

def test_relative_error_is_scale_free():
    assert relative_error(np.array([100.0]), np.array([101.0])) == pytest.approx(1.0 / 101.0)

def test_build_instance_is_deterministic():
    a = build_instance(InstanceSpec(seed=3))
    b = build_instance(InstanceSpec(seed=3))
    np.testing.assert_array_equal(a.traj.states, b.traj.states)
    np.testing.assert_array_equal(a.theta0, b.theta0)
    assert a.traj.length == 8
    np.testing.assert_array_equal(a.traj.states[0], 0.0)

@pytest.mark.parametrize("gamma", [1.0, 0.9])
def test_target_coherence(gamma):
    inst = build_instance(InstanceSpec(seed=1, units=3, T=6))
    for name, deviation in target_coherence(inst.traj, inst.theta0, gamma).items():
        assert deviation < 1e-12, name

def test_recursive_identity():
    inst = build_instance(InstanceSpec(cell_kind='tanh', seed=2, units=3, T=5))
    assert recursive_identity_check(inst.traj, inst.theta0, 0.7, 0.9) < 1e-10

@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_lambda_sum_identity(lam):
    x = np.random.default_rng(0).normal(size=(6, 2))
    assert lambda_sum_check(x, lam) < 1e-10

def test_unrolled_trace_starts_from_single_gradient():
    inst = build_instance(InstanceSpec(seed=4, units=2, T=3))
    e0 = unrolled_trace(inst.traj, 0, 1.0, 1.0)
    assert e0.shape == (1, 2, 2, 3)
    # h_0 = 0, so only the bias column is set
    np.testing.assert_array_equal(e0[0, :, :, :2], 0.0)
    np.testing.assert_array_equal(e0[0, :, :, 2], np.eye(2))

def test_td_gap_shrinks_with_step_size():
    inst = build_instance(InstanceSpec(seed=5, units=3, T=6))
    report = td_gap_scaling(inst, 0.5, 0.9)
    assert report['gaps'][0] > report['gaps'][1] > 0.0
    assert report['passed']

def test_equivalence_ratio_exact_for_lambda_zero():
    report = equivalence_ratio(InstanceSpec(seed=6, units=3, T=5), 0.0, 1.0)
    assert max(report.ratios) < 1e-12
    assert len(report.per_t) == len(report.alphas)
    assert len(report.per_t[0]) == 5

def test_equivalence_ratio_shrinks_with_alpha():
    report = equivalence_ratio(InstanceSpec(seed=7, units=3, T=5), 0.9, 1.0)
    assert report.ratios[-1] < report.ratios[0]
    assert report.ratios[-1] < 0.05

def test_quick_suite_records():
    records = run_verification_suite(seeds=[0], quick=True)
    names = {r['name'] for r in records}
    assert {'jacobian_fd', 'vjp_fd', 'readout_fd', 'recursive_identity', 'lambda_sum',
            'lemma_trace_unroll', 'td_gap_scaling', 'equivalence_ratio'} <= names
    for r in records:
        assert set(r) >= {'name', 'instance', 'deviation', 'tolerance', 'passed'}
    assert not [r for r in records if r['passed'] is False]

def test_equivalence_ratio_on_five_unit_linear_system():
    report = equivalence_ratio(InstanceSpec(seed=0, units=5), 0.9, 1.0)
    assert all(b < a for a, b in zip(report.ratios, report.ratios[1:]))
    assert report.ratios[-1] < 0.05

@pytest.mark.parametrize("kind", ['linear', 'tanh'])
@pytest.mark.parametrize("lam", [0.5, 0.9, 1.0])
def test_equivalence_ratio_non_increasing(kind, lam):
    report = equivalence_ratio(InstanceSpec(cell_kind=kind, seed=1, units=5), lam, 1.0)
    assert report.non_increasing
    assert min(report.ratios) >= 0.0

def test_equivalence_ratio_single_step_is_zero():
    report = equivalence_ratio(InstanceSpec(seed=2, units=3, T=5), 0.7, 1.0)
    for per_t in report.per_t:
        assert per_t[0] < 1e-8

@pytest.mark.parametrize("alphas", [(1e-3, 1e-2), (1e-2, 1e-2, 1e-3)])
def test_equivalence_ratio_needs_decreasing_alphas(alphas):
    with pytest.raises(ValueError):
        equivalence_ratio(InstanceSpec(seed=0, units=3, T=4), 0.9, 1.0, alphas)
