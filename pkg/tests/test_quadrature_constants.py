from math import gamma, pi

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from bubblelab.profile_core import (Bubble, DimensionParams, Field, Grid, PotentialSpec,
                                    bubble_radial, sphere_area)
from bubblelab.quadrature_constants import (QuadratureSpec, compute_universal, derive_constants,
                                            flux_value, green_convolve, interaction_integral,
                                            lemma_a1_constant, lemma_a1_ratio, lemma_a2_constant,
                                            lemma_a2_ratio, lemma_a3_constant, lemma_a3_ratio,
                                            polar_quad, radial_integral, radial_nodes,
                                            riesz_radial)


def _quad_radial(f, N, lo=0.0, hi=np.inf):
    """Independent oracle: scipy adaptive quadrature of omega int r^(N-1) f."""
    val, _ = integrate.quad(lambda r: r ** (N - 1) * f(r), lo, hi, epsabs=0, epsrel=1e-12,
                            limit=400)
    return sphere_area(N - 1) * val


def _sobolev_S(N):
    return pi * N * (N - 2) * (gamma(N / 2) / gamma(N)) ** (2.0 / N)


def test_spec_needs_enough_nodes():
    with pytest.raises(ValueError):
        QuadratureSpec(n_nodes=8)


@pytest.mark.parametrize("r_max", [None, 0.3, 1.0, 7.5])
def test_radial_nodes_integrate_polynomial_decay(r_max):
    r, w = radial_nodes(24, 40, r_max)
    f = lambda x: 1.0 / (1.0 + x * x) ** 2
    exact = integrate.quad(f, 0, np.inf if r_max is None else r_max, epsrel=1e-13)[0]
    assert np.sum(w * f(r)) == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("N", [5, 6, 7])
def test_unit_bubble_integrals_against_sobolev_constant(N):
    dims = DimensionParams(N)
    u = compute_universal(dims, PotentialSpec(beta=N - 3.0))
    S = _sobolev_S(N)
    assert u.I_2star == pytest.approx(S ** (N / 2), rel=1e-10)
    assert u.I_grad == pytest.approx(S ** (N / 2), rel=1e-10)
    assert u.errors["I_2star"] < 1e-8 * u.I_2star


@pytest.mark.parametrize("N", [5, 6, 7])
def test_flux_identity(N):
    dims = DimensionParams(N)
    u = compute_universal(dims, PotentialSpec(beta=N - 3.0))
    assert u.I_pow == pytest.approx(flux_value(dims), rel=1e-10)


def test_moments_match_adaptive_oracle(dims7, univ7):
    U = lambda r: bubble_radial(r * r, 1.0, 7)
    assert univ7.J_2 == pytest.approx(_quad_radial(lambda r: U(r) ** 2, 7), rel=1e-9)
    assert univ7.J_beta == pytest.approx(_quad_radial(lambda r: r ** 4 * U(r) ** 2, 7, 0, 1),
                                         rel=1e-10)
    jp = 9.0 / 7.0 * _quad_radial(lambda r: r ** 2 * U(r) ** 2, 7)
    assert univ7.J_beta_prime == pytest.approx(jp, rel=1e-9)


def test_moments_reject_divergent_beta(dims7):
    with pytest.raises(ValueError):
        compute_universal(dims7, PotentialSpec(beta=5.0))


def test_derived_constants_relations(dims7, univ7, derived7):
    d = derived7
    assert d.B1.value == pytest.approx(3.0 * univ7.J_beta)
    assert d.C4.value == pytest.approx(2.5 * dims7.A * univ7.I_pow)
    assert d.Bbar.value == pytest.approx(d.C4.value / d.B1.value)
    assert d.C2.value == pytest.approx(2 * d.B2.value)
    assert d.amplitude_exponent.value == pytest.approx(7.0 / 5.0)
    assert d.B1.error < 1e-6 * d.B1.value
    assert d.Bprime_ball.value < 0 < d.Bprime.value
    assert d.warnings == ()


def test_ball_constant_tends_to_whole_space(dims7, derived7):
    far = compute_universal(dims7, PotentialSpec(a=1.0, beta=4.0), ball_radius=200.0)
    d = derive_constants(far, dims7, PotentialSpec(a=1.0, beta=4.0))
    assert d.Bprime_ball.value == pytest.approx(derived7.Bprime.value, rel=1e-3)


def test_negative_amplitude_warns(dims7, univ7):
    d = derive_constants(univ7, dims7, PotentialSpec(a=-1.0, beta=4.0))
    assert d.warnings


@settings(max_examples=10, deadline=None)
@given(mu=st.floats(0.25, 8.0))
def test_polar_quad_is_scale_invariant_for_critical_norm(mu):
    dims = DimensionParams(7)
    f = lambda y1, r: bubble_radial((y1 - 0.3) ** 2 + r * r, mu, 7) ** dims.two_star
    res = polar_quad(f, dims, center=0.3, scale=1.0 / mu)
    assert res.value == pytest.approx(_sobolev_S(7) ** 3.5, rel=1e-9)


@pytest.mark.parametrize("d", [8.0, 16.0])
def test_interaction_far_field(dims7, d):
    res = interaction_integral(Bubble((0.0,) * 7, 4.0), Bubble((d,) + (0.0,) * 6, 4.0), dims7)
    assert res.ratio == pytest.approx(1.0, abs=0.02)


def test_interaction_rejects_coincident(dims7):
    b = Bubble((0.0,) * 7, 4.0)
    with pytest.raises(ValueError):
        interaction_integral(b, b, dims7)


def test_green_convolution_inverts_laplacian():
    N = 7
    dims = DimensionParams(N)
    y1 = np.linspace(-10, 10, 161)
    r = np.linspace(0, 10, 81)
    g = Grid(y1, r)
    Y, R = g.mesh()
    f = Field(g, bubble_radial(Y ** 2 + R ** 2, 1.0, N) ** dims.p)
    ty, tr = np.array([0.0, 0.4, 1.3]), np.array([0.0, 0.7, 0.2])
    got = green_convolve(f, dims, ty, tr)
    want = bubble_radial(ty ** 2 + tr ** 2, 1.0, N)
    assert np.allclose(got, want, rtol=3e-3)


def test_green_convolution_rejects_outside_targets():
    g = Grid(np.linspace(-1, 1, 9), np.linspace(0, 1, 5))
    with pytest.raises(ValueError):
        green_convolve(Field(g, np.ones(g.shape)), DimensionParams(7), [2.0], [0.0])


@pytest.mark.parametrize("y", [0.0, 0.5, 3.0, 40.0])
def test_riesz_radial_matches_oracle(y):
    N, sig = 7, 1.5
    f = lambda s: (1 + s) ** -(2 + sig) * max(y, s) ** (2.0 - N)
    pts = [y] if y > 0 else None
    a = integrate.quad(lambda s: s ** (N - 1) * f(s), 0, max(y, 1.0), points=pts, epsrel=1e-12)[0]
    b = integrate.quad(lambda s: s ** (N - 1) * f(s), max(y, 1.0), np.inf, epsrel=1e-12)[0]
    assert riesz_radial(y, sig, N).value == pytest.approx(sphere_area(N - 1) * (a + b), rel=1e-8)


@settings(max_examples=60, deadline=None)
@given(pts=st.lists(st.floats(-20, 20), min_size=3, max_size=3),
       alpha=st.floats(0.5, 6), beta=st.floats(0.5, 6), frac=st.floats(0.05, 1.0))
def test_lemma_a1_bound_property(pts, alpha, beta, frac):
    sigma = frac * min(alpha, beta)
    y = np.array([pts[0], pts[1], 0.0])
    xi = np.array([0.0, 0.0, 0.0])
    xj = np.array([pts[2], 0.0, 0.0])
    assert lemma_a1_ratio(y, xi, xj, alpha, beta, sigma) <= lemma_a1_constant(sigma) * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(y=st.floats(0, 100), sigma=st.floats(0.2, 4.5))
def test_lemma_a2_bound_property(y, sigma):
    assert lemma_a2_ratio(y, sigma, 7) <= lemma_a2_constant(sigma, 7)


@settings(max_examples=60, deadline=None)
@given(off=st.lists(st.floats(-1, 1), min_size=3, max_size=3), mu=st.floats(1, 100),
       L=st.floats(3.5, 20), gam=st.floats(1.5, 6), i=st.integers(0, 6))
def test_lemma_a3_bound_property(off, mu, L, gam, i):
    centers = np.array([[k * L, 0.0, 0.0] for k in range(7)])
    v = np.array(off)
    v = v / max(np.linalg.norm(v), 1.0)
    y = centers[i] + v
    assert lemma_a3_ratio(y, centers, i, mu, gam, gam) <= lemma_a3_constant(gam, L)
