import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubblelab.correction_solver import (AxiGrid, analytic_tail, assemble_lL, build_linearized,
                                         contract, eval_NL, laplacian_matrix, make_axigrid,
                                         multipliers_by_mode, read_field, refine_grid,
                                         scaled_multipliers, solve_full, trapezoid_weights,
                                         volume_weights, write_field)
from bubblelab.profile_core import (Ansatz, DimensionParams, Field, PotentialSpec,
                                    WeightedNormParams, bubble_radial, eval_W_axisym)

D7 = DimensionParams(7)
POT = PotentialSpec(a=1e-3, beta=4.0, period_L=5.0)


def _setup(mu=8.0, wrapped=False, n_core=8, h_far=0.25):
    an = Ansatz.lattice(D7, 1, 5.0, mu, POT, wrapped=wrapped)
    g = make_axigrid(an.centers, mu, n_core=n_core, h_far=h_far, period=an.period)
    return an, g


def test_grid_is_graded_and_covers_padding():
    an, g = _setup()
    assert g.y1[0] == pytest.approx(-4.0) and g.y1[-1] == pytest.approx(9.0)
    assert g.r[0] == 0.0 and g.r[-1] == pytest.approx(4.0)
    h = np.diff(g.y1)
    assert h[np.argmin(np.abs(g.y1[:-1]))] < 0.1 * h.max()


def test_wrapped_grid_is_shift_invariant():
    an, g = _setup(wrapped=True)
    n = len(g.y1) // 2
    assert np.allclose(g.y1[n:] - 5.0, g.y1[:n], atol=1e-12)
    assert g.period == 10.0
    assert g.interior_mask[0].sum() == len(g.r) - 1


def test_wrapped_grid_needs_equal_spacing():
    with pytest.raises(ValueError):
        make_axigrid([0.0, 4.0], 4.0, period=10.0)


def test_refined_grid_contains_old_nodes():
    _, g = _setup(mu=2.0, n_core=4, h_far=0.5)
    f = refine_grid(g)
    assert np.allclose(f.y1[::2], g.y1) and np.allclose(f.r[::2], g.r)


@settings(max_examples=20, deadline=None)
@given(c=st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_laplacian_exact_on_quadratics(c):
    _, g = _setup(mu=2.0, n_core=4, h_far=0.5)
    Y, R = g.mesh()
    u = c[0] + c[1] * Y + c[2] * (Y ** 2 + R ** 2)
    lap = (laplacian_matrix(g, 7) @ u.ravel()).reshape(u.shape)
    m = g.interior_mask
    assert np.allclose(lap[m], 14.0 * c[2], atol=1e-8 * (1 + abs(c[2])))


def test_trapezoid_weights_sum_to_length():
    x = np.sort(np.random.default_rng(1).uniform(0, 3, 20))
    assert trapezoid_weights(x).sum() == pytest.approx(x[-1] - x[0])
    assert trapezoid_weights(x, periodic_len=5.0).sum() == pytest.approx(5.0)


def test_volume_weights_integrate_bubble_mass():
    from bubblelab.quadrature_constants import compute_universal
    g = make_axigrid([0.0], 2.0, pad=12.0, n_core=12, h_far=0.1)
    Y, R = g.mesh()
    vals = bubble_radial(Y ** 2 + R ** 2, 2.0, 7) ** D7.two_star
    total = np.sum(volume_weights(g, 7) * vals)
    ref = compute_universal(D7, PotentialSpec(beta=4.0)).I_2star
    assert total == pytest.approx(ref, rel=2e-3)


def test_nonlinear_remainder_is_quadratic():
    an, g = _setup(mu=4.0)
    Y, R = g.mesh()
    base = np.exp(-(Y ** 2 + R ** 2))
    n1 = np.max(np.abs(eval_NL(an, Field(g, 1e-3 * base)).values))
    n2 = np.max(np.abs(eval_NL(an, Field(g, 5e-4 * base)).values))
    assert n1 / n2 == pytest.approx(4.0, rel=0.02)


def test_tail_matches_bubble_far_away():
    an, _ = _setup(mu=4.0)
    y1, r = np.array([30.0]), np.array([25.0])
    far = sum(bubble_radial((y1 - c) ** 2 + r ** 2, 4.0, 7) for c in an.centers)
    assert analytic_tail(an, y1, r)[0] == pytest.approx(far[0], rel=1e-3)


@pytest.fixture(scope="module")
def contracted():
    an, g = _setup(mu=8.0)
    return an, g, contract(an, g, tol=1e-10)


def test_saddle_solution_satisfies_constraints_and_equation(contracted):
    an, g, res = contracted
    sys_ = res.system
    assert np.max(sys_.constraint_residual(res.phi)) < 1e-10
    h = assemble_lL(an, g).values + eval_NL(an, res.phi, W=sys_.W).values
    lhs = (sys_.operator @ res.phi.values.ravel())
    rhs = h.ravel() + sys_.constraint_cols @ res.c
    m = g.interior_mask.ravel()
    assert np.allclose(lhs[m], rhs[m], atol=1e-8 * np.max(np.abs(rhs)))


def test_contraction_converges_fast(contracted):
    an, g, res = contracted
    assert res.converged
    assert res.max_ratio_above_floor <= 0.5
    assert res.positivity_events == 0
    assert res.phi_star < res.lL_dstar


def test_multipliers_split_by_mode(contracted):
    _, _, res = contracted
    t, d = multipliers_by_mode(res, 7)
    assert len(t) == len(d) == 2
    # mirror symmetry of the pair
    assert t[0] == pytest.approx(-t[1], rel=1e-6)
    assert d[0] == pytest.approx(d[1], rel=1e-6)


def test_field_io_roundtrip(tmp_path, contracted):
    _, g, res = contracted
    p = tmp_path / "phi.field"
    write_field(p, res.phi, 7, sidecar={"k": 1})
    f, N = read_field(p)
    assert N == 7
    assert np.array_equal(f.values, res.phi.values)
    assert np.array_equal(f.grid.y1, g.y1)
    assert (tmp_path / "phi.field.json").exists()


def test_read_field_rejects_garbage(tmp_path):
    p = tmp_path / "x.field"
    p.write_bytes(b"NOTAFIELD" * 4)
    with pytest.raises(ValueError):
        read_field(p)


def test_solve_full_drives_multipliers_down(two_bubble_solutions):
    sol = two_bubble_solutions[16.0]
    assert sol.converged
    assert np.max(np.abs(sol.c_scaled)) < 1e-10
    assert sol.min_u > 0
    assert 0 < sol.ansatz.potential.a < 1e-3
    s = sol.ansatz.centers - np.array([0.0, 5.0])
    # inward, equal and opposite up to the grid asymmetry
    assert s[0] > 0 and s[0] == pytest.approx(-s[1], rel=1e-3)


def test_solve_full_rejects_unknown_mode():
    an, g = _setup(mu=4.0)
    with pytest.raises(ValueError):
        solve_full(an, g, adjust="L")
