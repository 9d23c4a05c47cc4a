import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from dgtraffic.dg import (DGField, ElementParams, Mesh, basis, clamp_admissible, evaluate, lf_flux,
                          minmod, minmod_limit, project_initial, road_rhs)
from dgtraffic.fundamental import FundamentalDiagram, q_e

GS = FundamentalDiagram.greenshields()


def bump(x):
    return np.where((x >= 0.3) & (x <= 0.5), 5 * x - 1.5,
                    np.where((x > 0.5) & (x <= 0.7), -5 * x + 3.5, 0.0))


# -- basis ----------------------------------------------------------------------------

@pytest.mark.parametrize("p", [0, 1, 2, 3])
def test_basis_orthogonality(p):
    b = basis(p)
    M = (b.values * b.weights[:, None]).T @ b.values
    np.testing.assert_allclose(M, np.diag(2.0 / (2 * np.arange(p + 1) + 1)), atol=1e-14)
    np.testing.assert_allclose(b.left, (-1.0) ** np.arange(p + 1))


def test_basis_derivative_p2():
    b = basis(2)
    # P2' = 3 xi
    np.testing.assert_allclose(b.derivatives[:, 2], 3 * b.points, atol=1e-14)


# -- projection and evaluation -----------------------------------------------------------

def test_project_constant():
    f = project_initial(Mesh.uniform(0, 1, 7), 1, lambda x: np.full_like(x, 0.4))
    np.testing.assert_allclose(f.means, 0.4, atol=1e-15)
    np.testing.assert_allclose(f.coefficients[:, 1], 0.0, atol=1e-15)


def test_project_bump_network_mass():
    mesh = Mesh.uniform(0, 1, 100)
    road1 = project_initial(mesh, 1, bump).total_mass(mesh)
    rest = 2 * project_initial(mesh, 1, lambda x: np.full_like(x, 0.4)).total_mass(mesh)
    assert road1 + rest == pytest.approx(1.0, abs=1e-12)


def test_project_linear_exact():
    mesh = Mesh.uniform(0, 1, 1)
    f = project_initial(mesh, 1, lambda x: x)
    assert f.means[0] == pytest.approx(0.5)
    assert evaluate(f, 0, -1.0) == pytest.approx(0.0, abs=1e-15)
    assert evaluate(f, 0, 1.0) == pytest.approx(1.0)


def test_evaluate_examples():
    f = DGField(1, np.array([[0.4, 0.0], [0.5, 0.1]]))
    assert evaluate(f, 0, 0.37) == pytest.approx(0.4)
    assert evaluate(f, 1, 1.0) == pytest.approx(0.6)
    assert evaluate(f, 1, -1.0) == pytest.approx(0.4)
    left, right = f.traces()
    np.testing.assert_allclose(left, [0.4, 0.4])
    np.testing.assert_allclose(right, [0.4, 0.6])


# -- numerical flux --------------------------------------------------------------------

@pytest.mark.parametrize("uL, uR, expected", [(0.5, 0.5, 0.25), (0.5, 0.2, 0.295), (0.5, 0.0, 0.375)])
def test_lf_flux_values(uL, uR, expected):
    assert lf_flux(GS, GS, uL, uR) == pytest.approx(expected, abs=1e-15)


@given(st.floats(0, 1), st.floats(0, 1))
def test_lf_flux_consistent_and_monotone(u, v):
    assert lf_flux(GS, GS, u, u) == pytest.approx(q_e(GS, u), abs=1e-15)
    # nondecreasing in the left state, nonincreasing in the right state
    du = 1e-3
    if u + du <= 1:
        assert lf_flux(GS, GS, u + du, v) >= lf_flux(GS, GS, u, v) - 1e-12
    if v + du <= 1:
        assert lf_flux(GS, GS, u, v + du) <= lf_flux(GS, GS, u, v) + 1e-12


def test_lf_flux_heterogeneous_consistency():
    a = FundamentalDiagram.greenshields(1.3, 2.0)
    b = FundamentalDiagram.greenshields(0.8, 1.0)
    # equal flows on both sides: H reduces to that flow minus dissipation of the jump
    h = lf_flux(a, b, 0.2, 0.2)
    assert h <= max(q_e(a, 0.2), q_e(b, 0.2))


# -- residual -------------------------------------------------------------------------

def test_constant_state_is_steady():
    mesh = Mesh.uniform(0, 1, 9)
    f = DGField(1, np.column_stack([np.full(9, 0.4), np.zeros(9)]))
    q = q_e(GS, 0.4)
    np.testing.assert_allclose(road_rhs(f, mesh, GS, q, q), 0.0, atol=1e-14)


def test_single_element_p0_is_finite_volume():
    mesh = Mesh.uniform(0, 0.5, 1)
    f = DGField(0, np.array([[0.3]]))
    rhs = road_rhs(f, mesh, GS, 0.2, 0.05)
    assert rhs[0, 0] == pytest.approx((0.2 - 0.05) / 0.5)


def test_two_elements_p0_hand_assembly():
    mesh = Mesh.uniform(0, 1, 2)
    f = DGField(0, np.array([[0.5], [0.2]]))
    rhs = road_rhs(f, mesh, GS, 0.0, 0.0)
    np.testing.assert_allclose(rhs[:, 0], [-0.295 / 0.5, 0.295 / 0.5], atol=1e-14)


def test_rhs_accepts_element_params():
    mesh = Mesh.uniform(0, 1, 4)
    f = project_initial(mesh, 1, lambda x: 0.2 + 0.1 * x)
    a = road_rhs(f, mesh, GS, 0.1, 0.1)
    b = road_rhs(f, mesh, ElementParams.uniform(GS, 4), 0.1, 0.1)
    np.testing.assert_array_equal(a, b)


def test_p1_residual_smooth_convergence():
    # du/dt = -Q(u)_x for u = 0.3 + 0.1 sin(2 pi x), exact derivative known
    def u(x):
        return 0.3 + 0.1 * np.sin(2 * np.pi * x)

    def dudt(x):
        ux = 0.2 * np.pi * np.cos(2 * np.pi * x)
        return -(1 - 2 * u(x)) * ux

    errs = []
    for n in (20, 40, 80):
        mesh = Mesh.uniform(0, 1, n)
        f = project_initial(mesh, 1, u)
        rhs = road_rhs(f, mesh, GS, q_e(GS, u(0.0)), q_e(GS, u(1.0)))
        exact = project_initial(mesh, 1, dudt)
        errs.append(np.abs(rhs[:, 0] - exact.means).max())
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.5)


# -- limiter ----------------------------------------------------------------------------

def test_minmod_definition():
    assert minmod(0.3, 0.5, 0.2) == 0.2
    assert minmod(-0.3, -0.5, -0.2) == -0.2
    assert minmod(0.3, -0.5, 0.2) == 0.0
    assert minmod(0.3, 0.0, 0.0) == 0.0


def test_limiter_keeps_global_linear():
    mesh = Mesh.uniform(0, 1, 10)
    f = project_initial(mesh, 1, lambda x: 0.1 + 0.5 * x)
    out = minmod_limit(f, mesh)
    # interior elements are untouched; end elements lose the missing-neighbour difference
    np.testing.assert_allclose(out.coefficients[1:-1], f.coefficients[1:-1], atol=1e-15)


def test_limiter_spike_slope_stays_zero():
    mesh = Mesh.uniform(0, 1, 3)
    f = DGField(1, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]))
    np.testing.assert_array_equal(minmod_limit(f, mesh).coefficients[1], [1.0, 0.0])


def test_limiter_flat_neighbours_kill_slope():
    mesh = Mesh.uniform(0, 1, 3)
    f = DGField(1, np.array([[0.5, 0.0], [0.5, 0.3], [0.5, 0.0]]))
    assert minmod_limit(f, mesh).coefficients[1, 1] == 0.0


def test_limiter_tvb_threshold():
    mesh = Mesh.uniform(0, 1, 3)
    f = DGField(1, np.array([[0.5, 0.0], [0.5, 0.01], [0.5, 0.0]]))
    h = 1 / 3
    assert minmod_limit(f, mesh, tvb_m=0.01 / h ** 2 * 1.01).coefficients[1, 1] == 0.01
    assert minmod_limit(f, mesh, tvb_m=0.0).coefficients[1, 1] == 0.0


def test_limiter_inflow_ghost():
    mesh = Mesh.uniform(0, 1, 2)
    f = DGField(1, np.array([[0.5, 0.1], [0.7, 0.0]]))
    # without a ghost the missing difference is 0, so the slope is removed
    assert minmod_limit(f, mesh).coefficients[0, 1] == 0.0
    # a ghost mean of 0.3 gives backward difference 0.2, forward 0.2
    assert minmod_limit(f, mesh, inflow_mean=0.3).coefficients[0, 1] == pytest.approx(0.1)


def test_limiter_p2_reduces_to_linear():
    mesh = Mesh.uniform(0, 1, 3)
    f = DGField(2, np.array([[0.5, 0.0, 0.0], [0.5, 0.1, 0.2], [0.6, 0.0, 0.0]]))
    out = minmod_limit(f, mesh).coefficients[1]
    assert out[0] == 0.5 and out[2] == 0.0
    assert out[1] == 0.0


# -- clamping ---------------------------------------------------------------------------

def test_clamp_scales_slope():
    mesh = Mesh.uniform(0, 1, 1)
    f = DGField(1, np.array([[0.1, 0.2]]))  # endpoints -0.1, 0.3
    out, events = clamp_admissible(f, mesh, 1.0)
    assert events == []
    l, r = out.traces()
    assert l[0] == pytest.approx(0.0, abs=1e-16)
    assert r[0] == pytest.approx(0.2)
    assert out.means[0] == 0.1


def test_clamp_admissible_field_unchanged():
    mesh = Mesh.uniform(0, 1, 4)
    f = project_initial(mesh, 1, lambda x: 0.2 + 0.5 * x)
    out, events = clamp_admissible(f, mesh, 1.0)
    np.testing.assert_array_equal(out.coefficients, f.coefficients)
    assert events == []


def test_clamp_negative_mean_event():
    mesh = Mesh.uniform(0, 1, 2)
    f = DGField(1, np.array([[-0.02, 0.01], [0.3, 0.0]]))
    out, events = clamp_admissible(f, mesh, 1.0)
    np.testing.assert_array_equal(out.coefficients[0], [0.0, 0.0])
    assert len(events) == 1
    e = events[0]
    assert e.element == 0 and e.bound == 0.0 and e.mean == -0.02
    assert e.mass_change == pytest.approx(0.02 * 0.5)


def test_clamp_upper_bound_event():
    mesh = Mesh.uniform(0, 1, 1)
    f = DGField(1, np.array([[1.2, 0.0]]))
    out, events = clamp_admissible(f, mesh, 1.0)
    assert out.means[0] == 1.0 and len(events) == 1 and events[0].bound == 1.0


def test_clamp_ignores_roundoff_means():
    mesh = Mesh.uniform(0, 1, 1)
    f = DGField(1, np.array([[-1e-17, 1e-3]]))
    out, events = clamp_admissible(f, mesh, 1.0)
    assert events == []
    assert out.means[0] == -1e-17


field_coefs = hnp.arrays(float, st.tuples(st.integers(2, 12), st.just(2)),
                         elements=st.floats(-0.5, 0.5, allow_nan=False))


@given(field_coefs)
def test_limiter_preserves_means(c):
    c[:, 0] += 0.5
    mesh = Mesh.uniform(0, 1, len(c))
    f = DGField(1, c)
    np.testing.assert_array_equal(minmod_limit(f, mesh).means, f.means)


@given(field_coefs)
def test_clamp_bounds_and_means(c):
    c[:, 0] = np.abs(c[:, 0]) * 2  # admissible means in [0, 1]
    mesh = Mesh.uniform(0, 1, len(c))
    f = DGField(1, c)
    out, events = clamp_admissible(f, mesh, 1.0)
    assert events == []
    np.testing.assert_array_equal(out.means, f.means)
    l, r = out.traces()
    assert l.min() >= -1e-15 and r.min() >= -1e-15
    assert l.max() <= 1 + 1e-15 and r.max() <= 1 + 1e-15
