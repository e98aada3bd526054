import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nucd.problems import build_kaczmarz, build_separable_quadratic
from nucd.sampling import WeightedSampler
from nucd.solvers import (
    InvariantViolation,
    SolverConfig,
    accel_schedule,
    acdm_baseline,
    acdm_probabilities,
    full_gd,
    generalized_accel,
    kaczmarz,
    ns_schedule,
    nu_acdm,
    nu_acdm_ns,
    nu_probabilities,
    rcdm,
    rcdm_probabilities,
)
from nucd.data_io import gen_linear_system


# --- schedules and distributions ---


@settings(deadline=None, max_examples=200)
@given(
    st.floats(min_value=1e-6, max_value=1e12),
    st.floats(min_value=1e-12, max_value=1.0),
)
def test_accel_schedule_coupling_identity(rate, ratio):
    # valid profiles always have sigma_beta <= S_alpha^2, so tau <= 0.62
    # and the identity holds without cancellation
    sigma = ratio * rate
    tau, eta = accel_schedule(rate, sigma)
    assert 0.0 < tau < 1.0
    lhs = (1.0 + eta * sigma) * (1.0 - tau)
    assert abs(lhs - 1.0) < 1e-12


@settings(deadline=None, max_examples=200)
@given(st.integers(min_value=0, max_value=10**9), st.floats(min_value=1e-6, max_value=1e9))
def test_ns_schedule_recurrence(k, s_sq):
    eta1, tau = ns_schedule(k, s_sq)
    eta0 = (k + 1.0) / (2.0 * s_sq)
    assert tau == 2.0 / (k + 2.0)
    lhs = eta0 * eta0 * s_sq
    rhs = eta1 * eta1 * s_sq - eta1 + 1.0 / (4.0 * s_sq)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_schedule_rejects_degenerate_inputs():
    with pytest.raises(ValueError):
        accel_schedule(0.0, 1.0)
    with pytest.raises(ValueError):
        accel_schedule(4.0, 0.0)
    with pytest.raises(ValueError):
        ns_schedule(0, 0.0)


def test_sampling_distributions_hand_values():
    _, prof = build_separable_quadratic(np.array([1.0, 4.0]))
    assert np.allclose(nu_probabilities(prof), [1 / 3, 2 / 3], atol=1e-15)
    assert np.allclose(rcdm_probabilities(prof), [0.2, 0.8], atol=1e-15)
    # mean L = 2.5, so weights are (2.5, 4)
    assert np.allclose(acdm_probabilities(prof), [2.5 / 6.5, 4.0 / 6.5], atol=1e-15)
    _, prof1 = build_separable_quadratic(np.array([1.0, 4.0]), beta=1.0)
    assert np.allclose(nu_probabilities(prof1), [0.5, 0.5], atol=1e-15)
    assert np.allclose(rcdm_probabilities(prof1), [0.5, 0.5], atol=1e-15)


# --- transcript-level agreement with the written update rules ---


def _indices(p, seed, count):
    # solvers consume the sampler in blocks of 4096; one block covers these runs
    return WeightedSampler(p, seed).sample_block(4096)[:count]


def test_strongly_convex_loop_matches_hand_transcript():
    """25 iterations on a 2-d quadratic, replayed literally from the update
    formulas with the solver's own index stream."""
    l = np.array([1.0, 4.0])
    target = np.array([2.0, -1.0])
    oracle, prof = build_separable_quadratic(l, target)
    x0 = np.array([10.0, -3.0])
    iters, seed = 25, 123
    cfg = SolverConfig(iters=iters, seed=seed, trace_stride=1)
    out, trace = nu_acdm(oracle, prof, x0, cfg)

    p = np.array([1 / 3, 2 / 3])
    s_sq = 9.0
    tau, eta = accel_schedule(s_sq, prof.sigma_beta)
    shrink = 1.0 / (1.0 + eta * prof.sigma_beta)
    idx = _indices(p, seed, iters)
    x, y, z = x0.copy(), x0.copy(), x0.copy()
    values = [oracle.value(y)]
    for k in range(iters):
        x = tau * z + (1.0 - tau) * y
        i = int(idx[k])
        g = l[i] * (x[i] - target[i])
        y = x.copy()
        y[i] -= g / l[i]
        z = shrink * z + shrink * eta * prof.sigma_beta * x
        z[i] -= shrink * (eta / p[i]) * g
        values.append(oracle.value(y))

    assert np.allclose(out, y, rtol=1e-12, atol=1e-12)
    assert np.array_equal(trace.iters, np.arange(iters + 1))
    assert np.allclose(trace.values, values, rtol=1e-12, atol=1e-12)


def test_ns_loop_matches_hand_transcript():
    l = np.array([1.0, 4.0])
    target = np.array([-1.0, 0.5])
    oracle, prof = build_separable_quadratic(l, target)
    x0 = np.array([3.0, 3.0])
    iters, seed = 30, 7
    out, trace = nu_acdm_ns(oracle, prof, x0, SolverConfig(iters=iters, seed=seed))

    p = np.array([1 / 3, 2 / 3])
    s_sq = 9.0
    idx = _indices(p, seed, iters)
    y, z = x0.copy(), x0.copy()
    for k in range(iters):
        eta = (k + 2.0) / (2.0 * s_sq)
        tau = 2.0 / (k + 2.0)
        x = tau * z + (1.0 - tau) * y
        i = int(idx[k])
        g = l[i] * (x[i] - target[i])
        y = x.copy()
        y[i] -= g / l[i]
        z[i] -= (eta / p[i]) * g
    assert np.allclose(out, y, rtol=1e-12, atol=1e-12)
    assert trace.algo == "nu-acdm-ns"


def test_kaczmarz_matches_hand_transcript():
    a, b, _x_star = gen_linear_system(6, 3, 0.5, seed=2)
    x0 = np.zeros(3)
    iters, seed = 40, 4
    out, trace = kaczmarz(a, b, x0, SolverConfig(iters=iters, seed=seed))

    dense = a.to_dense()
    norms_sq = a.row_norms_sq
    idx = _indices(norms_sq, seed, iters)
    x = x0.copy()
    for k in range(iters):
        i = int(idx[k])
        x += (b[i] - dense[i] @ x) / norms_sq[i] * dense[i]
    assert np.allclose(out, x, rtol=1e-12, atol=1e-12)
    r = dense @ out - b
    assert abs(trace.final_value() - r @ r) < 1e-12


def test_kaczmarz_single_projection_lands_on_hyperplane():
    a, b, _ = gen_linear_system(5, 4, 1.0, seed=1)
    out, _tr = kaczmarz(a, b, np.zeros(4), SolverConfig(iters=1, seed=0))
    i = int(_indices(a.row_norms_sq, 0, 1)[0])
    assert abs(a.to_dense()[i] @ out - b[i]) < 1e-12


# --- structural behavior ---


def test_single_coordinate_collapse():
    """With n = 1 every coordinate method solves the quadratic in one step."""
    oracle, prof = build_separable_quadratic(np.array([2.0]), np.array([3.0]))
    x0 = np.array([-7.0])
    cfg = SolverConfig(iters=1, seed=0, check_level="full")
    for solver in (nu_acdm, nu_acdm_ns, acdm_baseline, rcdm):
        out, trace = solver(oracle, prof, x0, cfg)
        assert abs(out[0] - 3.0) < 1e-12
        assert trace.final_value() < 1e-24


def test_specialization_is_bit_identical():
    oracle, prof = build_separable_quadratic(10.0 ** np.linspace(-1, 1, 9), beta=0.4)
    x0 = np.linspace(-2, 2, 9)
    cfg = SolverConfig(iters=300, seed=42, trace_stride=25)
    out_nu, tr_nu = nu_acdm(oracle, prof, x0, cfg)
    out_gen, tr_gen = generalized_accel(oracle, prof, x0, cfg, nu_probabilities(prof))
    assert np.array_equal(out_nu, out_gen)
    assert np.array_equal(tr_nu.values, tr_gen.values)


def test_generalized_rejects_invalid_rate_constant():
    oracle, prof = build_separable_quadratic(np.array([1.0, 4.0]))
    p = nu_probabilities(prof)
    cfg = SolverConfig(iters=5)
    with pytest.raises(ValueError):
        generalized_accel(oracle, prof, np.zeros(2), cfg, p, rate_constant=8.9)
    generalized_accel(oracle, prof, np.zeros(2), cfg, p, rate_constant=9.0)
    with pytest.raises(ValueError):
        generalized_accel(oracle, prof, np.zeros(2), cfg, np.array([1.0, -1.0]))


def test_acdm_rate_constant_dominates_valid_minimum():
    # on skewed profiles the uniform-rate constant n * sum L^(1-beta) is the
    # binding one; the run must not reject it
    oracle, prof = build_separable_quadratic(np.array([100.0, 1.0, 1.0, 1.0]))
    out, trace = acdm_baseline(oracle, prof, np.ones(4), SolverConfig(iters=50, seed=0))
    assert trace.algo == "acdm"
    assert trace.final_value() < oracle.value(np.ones(4))


def test_rcdm_descends_every_recorded_step():
    oracle, prof = build_separable_quadratic(10.0 ** np.linspace(-1, 2, 12))
    cfg = SolverConfig(iters=400, seed=3, check_level="full")
    _out, trace = rcdm(oracle, prof, np.ones(12), cfg)
    slack = 1e-12 * max(1.0, trace.values[0])
    assert np.all(np.diff(trace.values) <= slack)
    assert trace.max_descent_violation <= 1e-12


def test_full_gd_monotone_and_convergent():
    oracle, prof = build_separable_quadratic(np.array([1.0, 4.0, 9.0]))
    l_global = float(np.max(prof.l))
    out, trace = full_gd(oracle, l_global, np.ones(3) * 5.0, SolverConfig(iters=200))
    assert trace.final_value() < 1e-10
    assert np.all(np.diff(trace.values) <= 1e-12 * max(1.0, trace.values[0]))
    with pytest.raises(ValueError):
        full_gd(oracle, 0.0, np.ones(3), SolverConfig(iters=1))


def test_full_check_level_clean_on_quadratics():
    oracle, prof = build_separable_quadratic(10.0 ** np.linspace(-2, 2, 8), beta=0.5)
    cfg = SolverConfig(iters=500, seed=9, check_level="full")
    for solver in (nu_acdm, nu_acdm_ns):
        _out, trace = solver(oracle, prof, np.ones(8), cfg)
        assert trace.max_descent_violation <= 0.0 or trace.max_descent_violation < 1e-14
        assert trace.max_mirror_residual < 1e-10


# --- trace contract ---


def test_trace_stride_and_endpoints():
    oracle, prof = build_separable_quadratic(np.array([1.0, 2.0, 3.0]))
    cfg = SolverConfig(iters=10, seed=0, trace_stride=4)
    _out, trace = nu_acdm(oracle, prof, np.ones(3), cfg)
    # records at 0, every 4th step, and the final iteration regardless
    assert trace.iters.tolist() == [0, 4, 8, 10]
    assert np.allclose(trace.epochs, np.array([0, 4, 8, 10]) / 3.0)
    assert trace.units_per_epoch == 3


def test_gd_epoch_is_one_iteration():
    oracle, _ = build_separable_quadratic(np.array([1.0, 2.0]))
    _out, trace = full_gd(oracle, 2.0, np.ones(2), SolverConfig(iters=3))
    assert trace.units_per_epoch == 1
    assert trace.epochs.tolist() == [0.0, 1.0, 2.0, 3.0]


def test_early_stop_at_recorded_threshold():
    oracle, prof = build_separable_quadratic(np.full(4, 2.0))
    x_star = np.zeros(4)

    def dist(x, agg, value):
        d = x - x_star
        return float(d @ d)

    cfg = SolverConfig(
        iters=10000, seed=1, trace_stride=4, dist_fn=dist, stop_when_dist_below=1e-6
    )
    _out, trace = nu_acdm(oracle, prof, np.ones(4), cfg)
    assert trace.final_dist() <= 1e-6
    assert trace.iters[-1] < 10000
    assert np.all(trace.dists[:-1] > 1e-6)


def test_on_record_hook_sees_every_record():
    oracle, prof = build_separable_quadratic(np.array([1.0, 4.0]))
    seen = []
    cfg = SolverConfig(
        iters=9,
        seed=2,
        trace_stride=3,
        on_record=lambda k, x, agg, value: seen.append((k, value)),
    )
    _out, trace = nu_acdm_ns(oracle, prof, np.ones(2), cfg)
    assert [k for k, _ in seen] == trace.iters.tolist()
    assert np.allclose([v for _, v in seen], trace.values)


def test_deterministic_reruns():
    a, b, _ = gen_linear_system(20, 8, 0.25, seed=6)
    oracle, prof = build_kaczmarz(a, b)
    x0 = np.zeros(20)
    cfg = SolverConfig(iters=150, seed=13, trace_stride=10)
    for solver in (nu_acdm, nu_acdm_ns, acdm_baseline, rcdm):
        out1, tr1 = solver(oracle, prof, x0, cfg)
        out2, tr2 = solver(oracle, prof, x0, cfg)
        assert np.array_equal(out1, out2)
        assert np.array_equal(tr1.values, tr2.values)
    k1, _ = kaczmarz(a, b, np.zeros(8), cfg)
    k2, _ = kaczmarz(a, b, np.zeros(8), cfg)
    assert np.array_equal(k1, k2)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(iters=-1)
    with pytest.raises(ValueError):
        SolverConfig(iters=1, trace_stride=0)
    with pytest.raises(ValueError):
        SolverConfig(iters=1, check_level="sometimes")


def test_non_finite_objective_raises():
    oracle, prof = build_separable_quadratic(np.array([1.0, 1.0]))
    x0 = np.array([1e200, np.inf])
    with np.errstate(all="ignore"):
        with pytest.raises(InvariantViolation):
            nu_acdm(oracle, prof, x0, SolverConfig(iters=5))
