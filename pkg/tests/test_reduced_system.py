import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubblelab.profile_core import DimensionParams, PotentialSpec
from bubblelab.reduced_system import (BalanceConstants, LatticeState, feasibility_check,
                                      height_balance_residual, location_residual,
                                      nonexistence_probe, predicted_slope, scaling_fit,
                                      solve_common_mu, solve_lattice_amplitudes, solve_shifts,
                                      two_bubble_mu, write_sweep_csv)

D7 = DimensionParams(7)


@settings(max_examples=30, deadline=None)
@given(Bbar=st.floats(1.0, 1e4), L=st.floats(4, 100))
def test_two_bubble_closed_form_zeroes_balance(Bbar, L):
    c = BalanceConstants(Bbar, 4.0)
    mu = two_bubble_mu(c, D7, L)
    r = height_balance_residual(LatticeState(1, L, mu, 7), c, D7)
    assert np.allclose(r * mu ** 6, 0.0, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(Bbar=st.floats(1.0, 1e4), L=st.floats(4, 100))
def test_common_mu_matches_closed_form_for_two_bubbles(Bbar, L):
    c = BalanceConstants(Bbar, 4.0)
    assert solve_common_mu(1, L, c, D7) == pytest.approx(two_bubble_mu(c, D7, L), rel=1e-12)


def test_coincident_centers_rejected():
    st_ = LatticeState(1, 5.0, 4.0, 7, shifts=np.array([[2.5] + [0] * 6, [-2.5] + [0] * 6]))
    with pytest.raises(ValueError):
        height_balance_residual(st_, BalanceConstants(1.0, 4.0), D7)


def test_state_rejects_unknown_mode():
    with pytest.raises(ValueError):
        LatticeState(1, 5.0, 4.0, 7, mode="ring")


@pytest.mark.parametrize("m", [1, 2, 5])
def test_amplitudes_solve_fixed_point(m):
    res = solve_lattice_amplitudes(m, D7, 889.5, 4.0)
    M = np.abs(np.subtract.outer(np.arange(m + 1), np.arange(m + 1))).astype(float)
    with np.errstate(divide="ignore"):
        K = np.where(M > 0, M ** -5.0, 0.0)
    a = res.a
    assert res.converged
    assert np.allclose(a ** 4, 889.5 * K @ a, rtol=1e-10)
    assert np.all(a > 0)
    # reflection symmetry of the chain
    assert np.allclose(a, a[::-1], rtol=1e-10)


def test_wrapped_amplitudes_are_uniform():
    res = solve_lattice_amplitudes(3, D7, 10.0, 4.0, mode="wrapped")
    assert np.ptp(res.a) < 1e-10 * res.a.max()


def test_amplitudes_input_validation():
    with pytest.raises(ValueError):
        solve_lattice_amplitudes(1, D7, -1.0, 4.0)
    with pytest.raises(ValueError):
        solve_lattice_amplitudes(1, D7, 1.0, 4.0, exponent=1.0)
    with pytest.raises(ValueError):
        solve_lattice_amplitudes(1, D7, 1.0, 4.0, start=[1.0, 0.0])


def test_shifts_zero_location_residual(derived7):
    st_ = LatticeState(2, 5.0, 16.0, 7)
    res = solve_shifts(st_, derived7, D7, 4.0)
    r = location_residual(LatticeState(2, 5.0, 16.0, 7, shifts=res.shifts), derived7.C1.value,
                          derived7.C2.value, D7, 4.0)
    assert np.max(np.abs(r)) < 1e-12 * derived7.C2.value * 16.0 ** -5
    # reflection symmetry: opposite end shifts, middle bubble fixed
    assert res.shifts[0, 0] == pytest.approx(-res.shifts[2, 0], rel=1e-12)
    assert res.shifts[1, 0] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("N,beta", [(7, 4.0), (7, 4.5), (5, 2.0), (6, 3.0)])
def test_scaling_slope(N, beta):
    c = BalanceConstants(50.0, beta)
    res, info = scaling_fit(DimensionParams(N), c, [8, 16, 32, 64])
    assert res.slope == pytest.approx(predicted_slope(N, beta), rel=1e-10)
    assert np.all(np.abs(res.height) < 1e-8)
    assert info["prefactor"] == pytest.approx(info["prefactor_pred_m1"], rel=1e-8)


def test_scaling_needs_four_points():
    with pytest.raises(ValueError):
        scaling_fit(D7, BalanceConstants(1.0, 4.0), [8, 16, 32])


@settings(max_examples=50, deadline=None)
@given(N=st.integers(5, 12), beta=st.floats(0.1, 12))
def test_feasibility_window(N, beta):
    v = feasibility_check(DimensionParams(N), beta)
    assert (v.status == "ACCEPT") == (N - 4 < beta < N - 2)


def test_nonexistence_probe_leading_term(univ7):
    pot = PotentialSpec(a=1e-3, beta=4.0, period_L=5.0)
    rep = nonexistence_probe(1.0, LatticeState(1, 5.0, 32.0, 7), univ7, D7, pot)
    assert rep.leading == pytest.approx(rep.leading_asymptotic, rel=1e-4)
    assert rep.verdict == "CONTRADICTION"
    zero = nonexistence_probe(0.0, LatticeState(1, 5.0, 32.0, 7), univ7, D7, pot)
    assert zero.verdict == "NO_OBSTRUCTION"


def test_sweep_csv_columns(tmp_path):
    p = tmp_path / "s.csv"
    write_sweep_csv(p, [{"N": 7, "beta": 4.0, "L": 8, "m": 1, "mu": 2.0, "slope": 5.0,
                         "residual_max": 0.0, "verdict": "ACCEPT", "extra": 1}])
    lines = p.read_text().splitlines()
    assert lines[0] == "N,beta,L,m,mu,slope,residual_max,verdict"
    assert len(lines) == 2
