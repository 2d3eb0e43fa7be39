from math import gamma, pi

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubblelab.correction_solver import make_axigrid
from bubblelab.pohozaev_verifier import (BallSampler, CubicSampler, PohozaevConfig,
                                         ball_nodes, boundary_term_estimates, dilation_identity,
                                         pohozaev_theta, sphere_integral, theta_regime,
                                         translation_identity)
from bubblelab.profile_core import (Ansatz, Bubble, DimensionParams, Field, PotentialSpec,
                                    bubble_radial, sphere_area)

D7 = DimensionParams(7)


def _zero_remainder(y1, r):
    z = np.zeros(np.broadcast(y1, r).shape)
    return z, z, z


def _single(mu=4.0, a=0.0, x=0.0):
    pot = PotentialSpec(a=a, beta=4.0, period_L=5.0)
    return Ansatz(D7, [Bubble((x,) + (0.0,) * 6, mu)], pot)


@settings(max_examples=50, deadline=None)
@given(N=st.integers(5, 12), beta=st.floats(0.5, 10), tau=st.floats(1.0, 3.0))
def test_theta_at_least_one(N, beta, tau):
    if beta + 1 - 2 * tau <= 0:
        with pytest.raises(ValueError):
            pohozaev_theta(N, beta, tau)
        return
    th = pohozaev_theta(N, beta, tau)
    assert th >= 1.0
    assert (theta_regime(N, beta, tau) == "theta>1") == (th > 1.0)


def test_default_theta_and_radius():
    cfg = PohozaevConfig.build(7, 4.0, 1.375, 16.0)
    assert cfg.theta == 1.0 and cfg.delta == pytest.approx(1 / 16)
    cfg = PohozaevConfig.build(7, 4.0, 1.375, 16.0, theta=0.5)
    assert cfg.delta == pytest.approx(0.25)


@pytest.mark.parametrize("rad", [0.1, 1.0, 3.0])
def test_sphere_and_ball_measures(rad):
    om = sphere_area(6)
    val, err = sphere_integral(lambda y1, r, c, s: np.ones_like(y1), 0.0, rad, D7)
    assert val == pytest.approx(om * rad ** 6, rel=1e-13)
    val, _ = sphere_integral(lambda y1, r, c, s: c * c, 2.0, rad, D7)
    assert val == pytest.approx(om * rad ** 6 / 7, rel=1e-13)
    _, _, _, W = ball_nodes(7, 0.0, rad, 16)
    assert W.sum() == pytest.approx(om * rad ** 7 / 7, rel=1e-13)


def test_sphere_integral_rejects_tiny_radius():
    with pytest.raises(ValueError):
        sphere_integral(lambda *a: 1.0, 0.0, 0.01, D7, min_radius=0.05)


def test_cubic_sampler_reproduces_smooth_field():
    g = make_axigrid([0.0], 2.0, n_core=12, h_far=0.1)
    Y, R = g.mesh()
    f = lambda y, r: np.exp(-(y * y + r * r))
    s = CubicSampler(Field(g, f(Y, R)))
    y1, r = np.array([0.13, -0.7]), np.array([0.05, 0.4])
    v, vy, vr = s(y1, r)
    assert np.allclose(v, f(y1, r), atol=1e-5)
    assert np.allclose(vy, -2 * y1 * f(y1, r), atol=1e-3)
    assert np.allclose(vr, -2 * r * f(y1, r), atol=1e-3)


@pytest.mark.parametrize("mu,delta", [(4.0, 0.5), (16.0, 0.25), (64.0, 1 / 64)])
def test_identities_hold_for_exact_bubble(mu, delta):
    an = _single(mu)
    cfg = PohozaevConfig(1.0, delta)
    S = BallSampler(_zero_remainder, an, 0)
    rep = dilation_identity(_zero_remainder, 0, cfg, an)
    scale = max(abs(v) for v in rep.terms.values())
    assert abs(rep.residual) < 1e-10 * scale
    assert abs(rep.self_cancellation) < 1e-10 * scale
    tr = translation_identity(_zero_remainder, 0, 1, cfg, an)
    assert abs(tr.residual) < 1e-10 * scale
    assert S.bubble(np.array([0.0]), np.array([0.0]))[0][0] == pytest.approx(
        bubble_radial(0.0, mu, 7))


def test_grid_bubble_gives_zero_remainder():
    an = _single(8.0)
    g = make_axigrid([0.0], 8.0, n_core=8, h_far=0.25)
    Y, R = g.mesh()
    u = Field(g, bubble_radial(Y ** 2 + R ** 2, 8.0, 7))
    rep = dilation_identity(u, 0, PohozaevConfig(1.0, 0.125), an)
    scale = max(abs(v) for v in rep.terms.values())
    assert abs(rep.residual) < 1e-9 * scale


@settings(max_examples=10, deadline=None)
@given(s=st.floats(-0.05, 0.05), mu=st.sampled_from([8.0, 16.0]))
def test_translation_volume_term_matches_moment(s, mu):
    an = _single(mu, a=1e-3, x=s)
    cfg = PohozaevConfig(0.5, mu ** -0.5)
    tr = translation_identity(_zero_remainder, 0, 1, cfg, an)
    assert tr.terms["S4"] == pytest.approx(tr.predicted["S4"], rel=1e-8, abs=1e-14)


def test_potential_coefficient_for_exact_bubble(univ7):
    # with u = U at a lattice point: -(T4+T5+T6) = (beta+2)/2 a mu^-(beta+2) J_beta(R) - boundary
    mu, a = 16.0, 1e-3
    an = _single(mu, a=a)
    cfg = PohozaevConfig(1.0, 1 / mu)
    rep = dilation_identity(_zero_remainder, 0, cfg, an, univ=univ7)
    boundary = rep.terms["T4"]
    assert rep.potential + boundary == pytest.approx(rep.predicted["potential"], rel=1e-9)


def test_higher_translation_directions_vanish():
    an = _single()
    cfg = PohozaevConfig(1.0, 0.25)
    rep = translation_identity(_zero_remainder, 0, 3, cfg, an)
    assert all(v == 0.0 for v in rep.terms.values())
    with pytest.raises(ValueError):
        translation_identity(_zero_remainder, 0, 0, cfg, an)


def test_ball_overlapping_neighbour_cutoff_rejected():
    an = Ansatz.lattice(D7, 1, 3.0, 4.0, PotentialSpec(a=0.0, beta=4.0, period_L=3.0))
    with pytest.raises(ValueError):
        dilation_identity(_zero_remainder, 0, PohozaevConfig(1.0, 1.5), an)


def test_boundary_estimates_shift_dependence():
    an = _single(16.0, a=1e-3)
    cfg = PohozaevConfig(1.0, 1 / 16)
    f0 = boundary_term_estimates(_zero_remainder, 0, cfg, an, np.zeros(1), 1.375)
    assert f0.F1 == 0.0
    assert f0.F2["F2_1"] == f0.F2["F2_2"] == f0.F2["F2_3"] == 0.0
    assert f0.F2["F2_4"] > 0
    f1 = boundary_term_estimates(_zero_remainder, 0, cfg, an, np.array([0.01]), 1.375)
    assert f1.F2["F2_1"] > 0 and f1.d == 0.01
    assert f1.budget_exponent == -6.0


def test_report_serializes(two_bubble_solutions):
    sol = two_bubble_solutions[16.0]
    cfg = PohozaevConfig.build(7, 4.0, 1.375, 16.0, theta=0.5)
    rep = dilation_identity(sol.u, 0, cfg, sol.ansatz)
    import json
    doc = json.loads(rep.to_json())
    assert doc["identity"] == "dilation"
    assert abs(rep.ratio() - 1) < 0.3
