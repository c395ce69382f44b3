import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oscham.decay import (
    c_k_beta,
    decay_law,
    decay_scan,
    doubling_modes,
    l_exponent,
    mu_admissible,
    mu_window,
)


@pytest.mark.parametrize("beta, mu, expected", [(2, 0, 1 / 18), (1.5, 0, 1 / 16), (4, 0, 1 / 28)])
def test_l_exponent_examples(beta, mu, expected):
    assert l_exponent(beta, mu) == pytest.approx(expected, abs=1e-15)


def test_l_exponent_rejects_beta_le_1():
    for beta in (1.0, 0.5, -2.0):
        with pytest.raises(ValueError):
            l_exponent(beta, 0.0)


def test_l_exponent_is_piecewise_not_continuous():
    left = l_exponent(2 - 1e-12, 0.0)
    assert left == pytest.approx(1 / 12, abs=1e-12)
    assert l_exponent(2, 0.0) == pytest.approx(1 / 18, abs=1e-15)


@given(st.floats(1.01, 10), st.floats(0, 0.5), st.floats(1e-3, 0.5))
def test_l_exponent_decreasing_in_mu(beta, mu, dmu):
    assert l_exponent(beta, mu + dmu) < l_exponent(beta, mu)


@pytest.mark.parametrize("beta, mu, ok", [(2, 0.2, True), (2, 2 / 9, False), (3, 0, True), (1.5, 0.25, False), (1.5, 0.24, True)])
def test_mu_admissible(beta, mu, ok):
    assert mu_admissible(beta, mu) is ok


@given(st.floats(1.01, 10), st.floats(0, 2))
def test_admissible_iff_positive_exponent(beta, mu):
    assert mu_admissible(beta, mu) == (l_exponent(beta, mu) > 0)


@pytest.mark.parametrize("k, beta, expected", [(1, 2, 1), (0.5, 2, 2), (2, 3, 1)])
def test_c_k_beta_examples(k, beta, expected):
    assert c_k_beta(k, beta) == pytest.approx(expected, abs=1e-15)


def test_c_k_beta_small_beta_branch():
    k, beta = 0.3, 1.5
    expected = max(abs(beta * (beta - 1) * (beta - 2) * k) ** (-1 / 3), 1 / k, k ** (1 / (4 - 2 * beta)))
    assert c_k_beta(k, beta) == expected
    assert c_k_beta(-k, beta) == expected


@given(st.floats(1, 50), st.floats(2, 8))
def test_c_k_beta_at_least_one(k, beta):
    assert c_k_beta(k, beta) >= 1
    assert c_k_beta(-k, beta) >= 1


def test_decay_law_record():
    law = decay_law(1.0, 3.0, 0.0)
    assert law.l_star == pytest.approx(0.25 * 0.1)
    assert law.c_k_beta == 1.0


def test_doubling_modes():
    assert doubling_modes(4, 512) == [4, 8, 16, 32, 64, 128, 256, 512]
    assert doubling_modes(4, 16, per_octave=2) == [4, 6, 8, 11, 16]


def test_empty_scan():
    rep = decay_scan(1.0, 2.0, 0.0, [])
    assert rep.grid == [] and rep.passed and rep.envelope_sup == 0.0


def test_scan_rejects_inadmissible_mu():
    with pytest.raises(ValueError):
        decay_scan(1.0, 2.0, 0.3, [4, 8])


def test_scan_rejects_unsorted():
    with pytest.raises(ValueError):
        decay_scan(1.0, 2.0, 0.0, [8, 4])


def test_scan_dense_grid_passes():
    rep = decay_scan(1.0, 2.0, 0.0, doubling_modes(4, 256, per_octave=2))
    assert rep.passed
    assert math.isfinite(rep.envelope_sup)
    assert rep.compensated_slope <= 0.02
    assert rep.half_ratio >= 1 / 1.5


def test_scan_odd_entries_are_exact_zeros_and_excluded():
    rep = decay_scan(1.0, 1.5, 0.0, [4, 8, 16, 32], diag_only=False, bands=[0, 1, 2])
    zeros = [p for p in rep.grid if (p.m + p.n) % 2]
    assert zeros and all(p.value == 0 and p.abs_err == 0 for p in zeros)
    assert math.isfinite(rep.fit_slope) and rep.passed


def test_scan_all_pairs_same_parity():
    rep = decay_scan(1.0, 2.0, 0.0, [2, 4, 5], diag_only=False)
    assert sorted((p.m, p.n) for p in rep.grid) == [(2, 2), (2, 4), (4, 4), (5, 5)]


def test_scan_csv_format():
    rep = decay_scan(1.0, 2.0, 0.0, [4, 8])
    lines = rep.to_csv().splitlines()
    assert lines[0] == "m,n,reI,imI,absI,compensated"
    m, n, re, im, ab, comp = lines[1].split(",")
    assert (m, n) == ("4", "4")
    assert float(ab) == pytest.approx(math.hypot(float(re), float(im)))
    assert rep.summary()["pass"] is True


def test_mu_window_values():
    assert mu_window(1.2) == pytest.approx(0.2)
    assert mu_window(2) == pytest.approx(2 / 9)
    assert mu_window(4) == pytest.approx(2 / 14)
