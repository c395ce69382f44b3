import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscham.perturbation import (
    PerturbationSpec,
    TruncatedOperator,
    assemble_P,
    element_table,
    evaluate_direct,
    malpha_norm,
)

I11_IM = 2**-0.25 * math.sin(math.pi / 8)


def cos_spec(**kw):
    base = dict(beta=2.0, mu=0.0, freqs=(1.0,), angle_dim=1, sigma=1.0,
                coeffs={1.0: {"a": {(1,): 0.5, (-1,): 0.5}, "b": {}}})
    base.update(kw)
    return PerturbationSpec(**base)


def test_zero_spec_gives_zero_operator():
    spec = cos_spec(coeffs={1.0: {"a": {}, "b": {}}})
    P = assemble_P(spec, 4)
    assert np.all(P.blocks == 0)


def test_cos_example():
    P = assemble_P(cos_spec(), 2)
    for th in np.linspace(0, 2 * np.pi, 9):
        val = P.evaluate([th])
        assert val[0, 0].real == pytest.approx(I11_IM * math.cos(th), abs=1e-12)
        assert abs(val[0, 0].imag) < 1e-15
        assert val[0, 1] == 0 and val[1, 0] == 0
    assert I11_IM == pytest.approx(0.321797, abs=1e-6)


def test_bundled_invariants(bundled_P32):
    assert bundled_P32.reality_defect() == 0.0
    assert bundled_P32.symmetry_defect() == 0.0
    for th in np.random.default_rng(1).uniform(0, 2 * np.pi, 5):
        val = bundled_P32.evaluate([th])
        assert np.max(np.abs(val.imag)) < 1e-15
        assert np.array_equal(val, val.T)


def test_fourier_consistency(bundled_spec, bundled_P32, bundled_tables32):
    for th in np.random.default_rng(2).uniform(-10, 10, 8):
        direct = evaluate_direct(bundled_spec, bundled_tables32, [th])
        assert np.max(np.abs(bundled_P32.evaluate([th]) - direct)) <= 1e-10


def test_two_dim_angles():
    spec = PerturbationSpec(beta=1.5, mu=0.1, freqs=(1.0, -2.0), angle_dim=2, sigma=0.5,
                            coeffs={1.0: {"a": {(1, 0): 0.3, (-1, 0): 0.3}, "b": {(0, 1): 0.2j, (0, -1): -0.2j}},
                                    -2.0: {"a": {(0, 0): 0.1}, "b": {(1, -1): 0.05, (-1, 1): 0.05}}})
    tables = element_table(spec, 6)
    P = assemble_P(spec, 6, tables=tables)
    assert P.reality_defect() < 1e-16 and P.symmetry_defect() == 0
    for th in np.random.default_rng(3).uniform(0, 2 * np.pi, (4, 2)):
        assert np.max(np.abs(P.evaluate(th) - evaluate_direct(spec, tables, th))) <= 1e-10


@pytest.mark.parametrize("bad", [
    dict(freqs=(0.0,), coeffs={0.0: {"a": {}, "b": {}}}),
    dict(beta=1.0),
    dict(mu=-0.1),
    dict(sigma=0.0),
    dict(angle_dim=0),
    dict(coeffs={1.0: {"a": {(1,): 0.5j}, "b": {}}}),
    dict(coeffs={1.0: {"a": {(1, 0): 0.5, (-1, 0): 0.5}, "b": {}}}),
    dict(coeffs={2.0: {"a": {}, "b": {}}}),
    dict(coef_bound=0.5),
])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        cos_spec(**bad)


def test_spec_json_roundtrip(bundled_spec):
    again = PerturbationSpec.from_dict(bundled_spec.to_dict())
    assert again.to_dict() == bundled_spec.to_dict()
    assert again.coeffs == bundled_spec.coeffs


def test_spec_coefficient_value(bundled_spec):
    assert bundled_spec.coefficient_value(1.0, "a", [0.3]) == pytest.approx(math.cos(0.3))
    assert bundled_spec.coefficient_value(1.0, "b", [0.3]) == pytest.approx(0.25 + 0.5 * math.sin(0.3))


def test_malpha_examples():
    blocks = np.zeros((1, 4, 4), dtype=complex)
    blocks[0, 1, 2] = 1.0
    Q = TruncatedOperator(np.zeros((1, 1), dtype=np.int64), blocks)
    for alpha in (0.1, 0.5, 1.0):
        assert malpha_norm(Q, alpha) == pytest.approx(6**alpha)
        assert malpha_norm(Q, alpha, plus=True) == pytest.approx(2 * 6**alpha)
    assert malpha_norm(TruncatedOperator.zero(4, 1), 0.5) == 0.0


def test_malpha_strip_envelope():
    blocks = np.zeros((2, 2, 2), dtype=complex)
    blocks[0, 0, 0] = 1.0
    blocks[1, 0, 0] = 0.5
    Q = TruncatedOperator(np.array([[0], [2]]), blocks)
    assert malpha_norm(Q, 0.5) == 1.0
    assert malpha_norm(Q, 0.5, sigma_prime=0.3) == pytest.approx(1 + 0.5 * math.exp(0.6))


def test_malpha_rejects_nonpositive_alpha():
    with pytest.raises(ValueError):
        malpha_norm(TruncatedOperator.zero(2, 1), 0.0)


def test_container_roundtrip(tmp_path, bundled_P32):
    path = tmp_path / "p.npz"
    bundled_P32.save(path)
    with np.load(path) as z:
        assert list(z["dims"]) == [32, 1, len(bundled_P32.blocks)]
        assert z["blocks"].flags["C_CONTIGUOUS"]
    back = TruncatedOperator.load(path)
    assert np.array_equal(back.harmonics, bundled_P32.harmonics)
    assert np.array_equal(back.blocks, bundled_P32.blocks)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 2), st.integers(0, 3), st.integers(0, 10_000))
def test_grid_roundtrip(n, J, seed):
    rng = np.random.default_rng(seed)
    rg = np.arange(-J, J + 1)
    harms = np.array(np.meshgrid(*([rg] * n), indexing="ij")).reshape(n, -1).T
    blocks = rng.normal(size=(len(harms), 3, 3)) + 1j * rng.normal(size=(len(harms), 3, 3))
    Q = TruncatedOperator(harms, blocks)
    back = TruncatedOperator.from_grid(Q.to_grid(16), 7)
    th = rng.uniform(0, 2 * np.pi, n)
    assert np.allclose(back.evaluate(th), Q.evaluate(th), atol=1e-12)


def test_decay_inheritance_under_doubling(bundled_spec, bundled_P32):
    alpha = 1 / 18
    norms = [malpha_norm(bundled_P32, alpha)]
    for A in (64, 128):
        norms.append(malpha_norm(assemble_P(bundled_spec, A), alpha))
    assert norms[1] / norms[0] <= 1.2 and norms[2] / norms[1] <= 1.2
