import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ALPHA_BUNDLED
from oscham.kam import (
    GOLDEN,
    DivergenceError,
    KamSchedule,
    MelnikovParams,
    ResonanceError,
    SmallDivisorError,
    check_A1,
    excluded_measure,
    excluded_measure_exact_1d,
    fit_measure_exponents,
    homological_residual,
    homological_solve,
    is_nonresonant,
    kam_iterate,
    normal_form_shift,
    spectrum_model,
    transform_closeness,
)
from oscham.perturbation import TruncatedOperator, assemble_P


def brute_nonresonant(omega, kappa, K, A):
    n = len(omega)
    Kf = int(math.floor(K))
    for k in itertools.product(range(-Kf, Kf + 1), repeat=n):
        if not 0 < sum(map(abs, k)) <= Kf:
            continue
        x = float(np.dot(k, omega))
        for j in range(-2 * A, 2 * A + 1):
            if abs(x + j) < kappa * (1 + abs(j)):
                return False
    return True


def synthetic_P(A):
    a = np.arange(1, A + 1)
    off = 0.05 * np.exp(-np.abs(a[:, None] - a[None, :])) / np.sqrt(a[:, None] * a[None, :])
    np.fill_diagonal(off, 0.0)
    D = np.diag(1.0 / a)
    blocks = np.array([0.5 * D + off, 0.5 * D + 0.5 * off, 0.5 * D + 0.5 * off], dtype=complex)
    return TruncatedOperator(np.array([[-1], [0], [1]]), blocks)


def test_check_A1():
    assert check_A1(64) == (1.0, 2.0, 1.0, True)
    assert check_A1(2)[3] is True
    assert check_A1(64, c0=3.0)[3] is False
    with pytest.raises(ValueError):
        check_A1(1)


def test_spectrum_model():
    assert np.array_equal(spectrum_model(4).lambdas, [1.0, 3.0, 5.0, 7.0])


def test_nonresonant_examples():
    assert not is_nonresonant([math.pi], MelnikovParams(0.1, 1), 8)
    assert not is_nonresonant([0.0], MelnikovParams(0.01, 1), 8)
    p = MelnikovParams(1e-3, 1)
    assert is_nonresonant([2.0], p, 4) == brute_nonresonant([2.0], 1e-3, 1, 4)


def test_melnikov_params_range():
    for kap in (0.0, 0.25, -1.0):
        with pytest.raises(ValueError):
            MelnikovParams(kap, 1)
    with pytest.raises(ValueError):
        MelnikovParams(0.1, 0)


def test_nonresonant_rejects_out_of_box():
    with pytest.raises(ValueError):
        is_nonresonant([7.0], MelnikovParams(0.1, 1), 4)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(0, 2 * math.pi), min_size=1, max_size=2),
       st.floats(1e-3, 0.2), st.integers(1, 4), st.integers(1, 10))
def test_nonresonant_matches_brute_force(omega, kappa, K, A):
    assert is_nonresonant(omega, MelnikovParams(kappa, K), A) == brute_nonresonant(omega, kappa, K, A)


def test_measure_vanishes_with_kappa():
    est = excluded_measure(MelnikovParams(1e-9, 1), 4, 20_000)
    assert est.estimate <= 1e-3
    assert excluded_measure_exact_1d(MelnikovParams(1e-9, 1), 4) < 1e-6


def test_measure_matches_interval_union():
    p = MelnikovParams(0.05, 1)
    exact = excluded_measure_exact_1d(p, 16)
    est = excluded_measure(p, 16, 200_000, seed=3)
    assert abs(est.estimate - exact) <= 3 * est.std_err
    assert est.ceiling == pytest.approx((2 * math.pi) ** 2 * 0.05)


def test_measure_monotone_in_K():
    m = [excluded_measure_exact_1d(MelnikovParams(0.01, K), 16) for K in (1, 2, 4, 8)]
    assert all(b > a for a, b in zip(m, m[1:]))
    mc = [excluded_measure(MelnikovParams(0.01, K), 16, 50_000, seed=1).estimate for K in (1, 2, 4)]
    assert all(b >= a for a, b in zip(mc, mc[1:]))


def test_measure_rejects_few_samples():
    with pytest.raises(ValueError):
        excluded_measure(MelnikovParams(0.01, 1), 4, 999)


def test_measure_seeded_determinism():
    p = MelnikovParams(0.02, 2)
    a = excluded_measure(p, 8, 10_000, n=2, seed=5)
    b = excluded_measure(p, 8, 10_000, n=2, seed=5)
    assert a == b


def test_fit_recovers_exponents():
    rows = [(kap, K, 3.0 * K**2 * kap) for kap in (1e-3, 2e-3, 4e-3) for K in (2, 4, 8)]
    c3, a1, a2 = fit_measure_exponents(rows)
    assert (c3, a1, a2) == pytest.approx((3.0, 2.0, 1.0), rel=1e-10)


def test_homological_zero_and_diagonal():
    p = MelnikovParams(1e-3, 4)
    N = spectrum_model(4).lambdas
    F, res = homological_solve(TruncatedOperator.zero(4, 1), N, [GOLDEN], p, 4)
    assert not np.any(F.blocks) and not np.any(res.blocks)
    P = TruncatedOperator.constant(np.diag([1.0, 2.0, 3.0, 4.0]).astype(complex), 1)
    F, res = homological_solve(P, N, [GOLDEN], p, 4)
    assert not np.any(F.blocks) and not np.any(res.blocks)


def _single_mode():
    blocks = np.zeros((1, 2, 2), dtype=complex)
    blocks[0, 0, 1] = 1.0
    return TruncatedOperator(np.array([[1]]), blocks)


def test_homological_single_mode():
    P = _single_mode()
    N = spectrum_model(2).lambdas
    p = MelnikovParams(1e-3, 1)
    with pytest.raises(SmallDivisorError) as exc:
        homological_solve(P, N, [2.0], p, 1)
    assert (exc.value.j, exc.value.a, exc.value.b) == ((1,), 1, 2)
    F, res = homological_solve(P, N, [2.5], p, 1)
    assert F.block([1])[0, 1] == pytest.approx(-2j)
    assert homological_residual(F, N, [2.5], res) <= 1e-12


def test_homological_leaves_high_harmonics(bundled_P32):
    N = spectrum_model(32).lambdas
    F, res = homological_solve(bundled_P32, N, [GOLDEN], MelnikovParams(1e-4, 0.5), 0.5)
    assert set(map(tuple, F.harmonics[np.abs(F.blocks).sum(axis=(1, 2)) > 0])) <= {(0,)}
    assert homological_residual(F, N, [GOLDEN], res) <= 1e-10


def test_homological_residual_random():
    rng = np.random.default_rng(4)
    A = 12
    harms = np.arange(-3, 4)[:, None]
    blocks = rng.normal(size=(7, A, A)) + 1j * rng.normal(size=(7, A, A))
    P = TruncatedOperator(harms, blocks)
    N = spectrum_model(A).lambdas
    F, res = homological_solve(P, N, [GOLDEN], MelnikovParams(1e-4, 4), 4)
    assert homological_residual(F, N, [GOLDEN], res) <= 1e-10
    assert np.array_equal(np.diag(res.block([0])), np.zeros(A))


def test_eps_zero_is_identity(bundled_P32):
    state, trace = kam_iterate(bundled_P32, 0.0, ALPHA_BUNDLED, 1.0, [GOLDEN])
    assert state.step == 0 and len(trace) == 1 and state.converged
    assert np.array_equal(state.N, spectrum_model(32).lambdas)
    assert transform_closeness(state)["norm_estimate"] == 0.0
    assert normal_form_shift(state) == 0.0


def test_synthetic_superlinear():
    state, trace = kam_iterate(synthetic_P(32), 1e-3, ALPHA_BUNDLED, 1.0, [GOLDEN])
    assert state.converged
    e = [t[1] for t in trace]
    for a, b in zip(e[1:], e[2:]):
        assert math.log(b) / math.log(a) >= 1.4


def test_bundled_runs(kam_runs):
    for eps, (state, trace) in kam_runs.items():
        assert state.converged
        e = [t[1] for t in trace]
        assert all(b < a for a, b in zip(e, e[1:]))
        kap = [t[2] for t in trace]
        K = [t[3] for t in trace]
        assert all(b < a for a, b in zip(kap, kap[1:]))
        assert all(b >= a for a, b in zip(K, K[1:]))
        assert max(state.residuals) <= 1e-10
        assert state.N.dtype == np.float64
        assert transform_closeness(state)["unitarity_defect"] <= 1e-8


def test_normal_form_shift_linear(kam_runs):
    c = [normal_form_shift(kam_runs[eps][0]) / eps for eps in (1e-3, 1e-4, 1e-5)]
    assert max(c) / min(c) <= 2.0


def test_sigma_schedule_decreasing():
    s = [KamSchedule.sigma(1.0, j) for j in range(12)]
    assert all(b < a for a, b in zip(s, s[1:]))
    assert s[-1] > 0


def test_resonance_error(bundled_spec):
    P = assemble_P(bundled_spec, 8)
    with pytest.raises(ResonanceError):
        kam_iterate(P, 1e-3, ALPHA_BUNDLED, 1.0, [2.0])


def test_threshold_error(bundled_spec):
    P = assemble_P(bundled_spec, 8)
    with pytest.raises(ValueError):
        kam_iterate(P, 1.0, ALPHA_BUNDLED, 1.0, [GOLDEN])


def test_divergence_error(bundled_spec):
    P = assemble_P(bundled_spec, 8)
    sched = KamSchedule(threshold=100.0, kappa0=1e-5, K_max=4)
    with pytest.raises(DivergenceError):
        kam_iterate(P, 1.0, ALPHA_BUNDLED, 1.0, [1.99], sched)


def test_schedule_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"K0": 2.0, "max_steps": 3}))
    s = KamSchedule.from_file(path)
    assert s.K0 == 2.0 and s.max_steps == 3 and s.tol == 1e-12
    assert [s.K(j) for j in range(5)] == [2.0, 4.0, 8.0, 16.0, 24.0]
    path.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ValueError):
        KamSchedule.from_file(path)
