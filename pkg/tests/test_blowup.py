"""
Tests des variables éclatées, du champ de vecteurs et de sa linéarisation
"""

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from core.blowup import (
    BlowupState,
    EquilibriumPoint,
    ManifoldParams,
    aligned_state,
    blowup_energy,
    dilate_params,
    field_jacobian,
    field_rhs,
    from_blowup,
    generalized_eigenvector,
    infinity_flow,
    linear_model_flow,
    linearization_matrix,
    linearized_flow_exact,
    linearized_state,
    parity_params,
    seed_state,
    seed_time,
    to_blowup,
    vector_field,
)
from core.errors import ConstraintError, InfinityStateError, SeedScaleError
from core.nbody import (
    energy,
    mass_inner,
    mass_norm,
    orthonormal_complement,
    random_unit_configuration,
    tangential_grad,
)


def _cartesian_pair(sys, rng):
    q = 3.0 * random_unit_configuration(sys, rng)
    xi = sys.remove_center_of_mass(rng.normal(size=sys.size))
    return q, xi


def _tangent_state(sys, rng, rho=0.2):
    s = random_unit_configuration(sys, rng)
    w = orthonormal_complement([s], sys)[0] * 0.7
    return BlowupState(rho, s, -0.4, w)


def test_round_trip_and_energy(unequal3d, rng):
    q, xi = _cartesian_pair(unequal3d, rng)
    x = to_blowup(q, xi, unequal3d)
    x.check(unequal3d)
    q2, xi2 = from_blowup(x, unequal3d)
    np.testing.assert_allclose(q2, q, atol=1e-13)
    np.testing.assert_allclose(xi2, xi, atol=1e-13)
    assert blowup_energy(x, unequal3d) == pytest.approx(energy(q, xi, unequal3d), rel=1e-12)


def test_total_collision_and_infinity_errors(triangle, equilateral):
    with pytest.raises(ConstraintError):
        to_blowup(np.zeros(6), np.ones(6), triangle)
    with pytest.raises(InfinityStateError):
        from_blowup(BlowupState(0.0, equilateral, 1.0, np.zeros(6)), triangle)
    with pytest.raises(InfinityStateError):
        BlowupState(0.0, equilateral, 1.0, np.zeros(6)).r


def test_state_check_and_renormalize(unequal, rng):
    x = _tangent_state(unequal, rng)
    bad = BlowupState(x.rho, 1.01 * x.s, x.v, x.w + 0.1 * x.s)
    with pytest.raises(ConstraintError):
        bad.check(unequal)
    fixed = bad.renormalized(unequal)
    sphere, tangency = fixed.constraint_defects(unequal)
    assert sphere < 1e-14 and tangency < 1e-14
    with pytest.raises(ConstraintError):
        BlowupState(-1.0, x.s, x.v, x.w).check(unequal)


def test_field_is_tangent_to_constraints(unequal3d, rng):
    x = _tangent_state(unequal3d, rng)
    dx = BlowupState.unpack(vector_field(x, unequal3d), unequal3d)
    # d/dτ ‖s‖² = 2<s, s'> et d/dτ <s, w> = <s', w> + <s, w'>
    assert abs(mass_inner(x.s, dx.s, unequal3d)) < 1e-12
    assert abs(mass_inner(dx.s, x.w, unequal3d) + mass_inner(x.s, dx.w, unequal3d)) < 1e-12


def test_field_conserves_energy(unequal, rng):
    x = _tangent_state(unequal, rng)
    sol = solve_ivp(lambda t, y: field_rhs(y, unequal), (0.0, 0.5), x.pack(), method="DOP853",
                    rtol=1e-12, atol=1e-13)
    end = BlowupState.unpack(sol.y[:, -1], unequal)
    assert blowup_energy(end, unequal) == pytest.approx(blowup_energy(x, unequal), abs=1e-9)


def test_equilibria_are_fixed_points(triangle, equilateral):
    p = EquilibriumPoint(equilateral, 1.5)
    np.testing.assert_array_equal(vector_field(p.state(), triangle), 0.0)
    assert p.direction == "future"
    assert EquilibriumPoint(equilateral, -1.5).direction == "past"
    with pytest.raises(ConstraintError):
        EquilibriumPoint(equilateral, 0.0)


@pytest.mark.parametrize("rho", [0.0, 0.3])
def test_jacobian_matches_finite_differences(unequal3d, rng, rho):
    y = _tangent_state(unequal3d, rng, rho).pack()
    J = field_jacobian(y, unequal3d)
    h = 1e-6
    for k in range(len(y)):
        e = np.zeros(len(y))
        e[k] = h
        column = (field_rhs(y + e, unequal3d) - field_rhs(y - e, unequal3d)) / (2 * h)
        np.testing.assert_allclose(J[:, k], column, atol=1e-6)


def test_infinity_flow_solves_field(equilateral_seed):
    sys, p, eta = equilateral_seed
    xi = -p.s0
    h, tau, step = 1.5, 0.4, 1e-6
    x = infinity_flow(xi, eta, h, tau, sys)
    derivative = (infinity_flow(xi, eta, h, tau + step, sys).pack()
                  - infinity_flow(xi, eta, h, tau - step, sys).pack()) / (2 * step)
    np.testing.assert_allclose(derivative, vector_field(x, sys), atol=1e-7)
    assert x.v**2 + mass_inner(x.w, x.w, sys) == pytest.approx(2 * h)


def test_infinity_flow_limits_and_errors(equilateral_seed):
    sys, p, eta = equilateral_seed
    xi = -p.s0
    end = infinity_flow(xi, eta, 0.5, 30.0, sys)
    np.testing.assert_allclose(end.s, xi, atol=1e-10)
    assert end.v == pytest.approx(1.0)
    with pytest.raises(ConstraintError):
        infinity_flow(xi, eta, -1.0, 0.0, sys)
    with pytest.raises(ConstraintError):
        infinity_flow(xi, 2.0 * eta, 0.5, 0.0, sys)


def test_linearized_flow_matches_expm(unequal3d, rng):
    for v0, tau in ((1.3, 0.7), (-0.8, -1.1), (2.0, -0.3)):
        p = EquilibriumPoint(random_unit_configuration(unequal3d, rng), v0)
        L = linearization_matrix(p, unequal3d)
        np.testing.assert_allclose(expm(tau * L), linearized_flow_exact(p, tau, unequal3d), atol=1e-10)


def test_generalized_eigenvector_nilpotency(unequal, rng):
    p = EquilibriumPoint(random_unit_configuration(unequal, rng), 1.2)
    L = linearization_matrix(p, unequal)
    shifted = L + p.v0 * np.eye(L.shape[0])
    G = generalized_eigenvector(p, unequal)
    assert np.max(np.abs(shifted @ G)) > 1e-3
    np.testing.assert_allclose(shifted @ shifted @ G, 0.0, atol=1e-12)


def test_linearization_matches_jacobian_at_equilibrium(unequal, rng):
    p = EquilibriumPoint(random_unit_configuration(unequal, rng), -0.9)
    np.testing.assert_allclose(field_jacobian(p.state().pack(), unequal), linearization_matrix(p, unequal),
                               atol=1e-12)


def test_linear_model_flow_is_a_group(unequal, rng):
    s0 = random_unit_configuration(unequal, rng)
    s1 = orthonormal_complement([s0], unequal)[0]
    mp = ManifoldParams(EquilibriumPoint(s0, -1.1), s1, 0.02)
    twice = linear_model_flow(linear_model_flow(mp, 0.3, unequal), -1.2, unequal)
    once = linear_model_flow(mp, -0.9, unequal)
    assert twice.rho1 == pytest.approx(once.rho1, rel=1e-13)
    np.testing.assert_allclose(twice.s1, once.s1, atol=1e-13)
    assert abs(mass_inner(once.s1, s0, unequal)) < 1e-12


def test_linear_model_flow_tracks_the_linearized_flow(unequal, rng):
    s0 = random_unit_configuration(unequal, rng)
    s1 = orthonormal_complement([s0], unequal)[0]
    mp = ManifoldParams(EquilibriumPoint(s0, 1.4), 0.5 * s1, 0.3)
    tau = 0.8
    base = mp.eq.state().pack()
    direct = linearized_flow_exact(mp.eq, tau, unequal) @ (aligned_state(mp, unequal) - base)
    np.testing.assert_allclose(base + direct, aligned_state(linear_model_flow(mp, tau, unequal), unequal),
                               atol=1e-12)


def test_seed_state_constraints_and_errors(equilateral_seed):
    sys, p, eta = equilateral_seed
    mp = ManifoldParams(p, 1e-4 * eta, 1e-4)
    x = seed_state(mp, sys)
    x.check(sys)
    assert x.rho == pytest.approx(1e-4)
    with pytest.raises(SeedScaleError):
        seed_state(ManifoldParams(p, 2.0 * eta, 1e-2), sys, seed_bound=1e-3)
    with pytest.raises(ConstraintError):
        seed_state(ManifoldParams(p, p.s0, 1e-4), sys)
    with pytest.raises(ConstraintError):
        ManifoldParams(p, eta, -1.0)


def test_linearized_state_follows_the_linear_model(equilateral_seed):
    sys, p, eta = equilateral_seed
    mp = ManifoldParams(p, 1e-3 * eta, 2e-3)
    np.testing.assert_array_equal(linearized_state(mp, 0.0, sys).pack(), aligned_state(mp, sys))
    tau = -2.0
    u = np.exp(-p.v0 * tau)
    x = linearized_state(mp, tau, sys)
    assert x.rho == pytest.approx(u * mp.rho1, rel=1e-14)
    np.testing.assert_allclose(x.renormalized(sys).pack(),
                               seed_state(linear_model_flow(mp, tau, sys), sys).pack(), atol=1e-14)


def test_seed_state_energy_defect_is_quadratic(equilateral_seed):
    sys, p, eta = equilateral_seed
    defects = []
    for sigma in (1e-3, 5e-4, 2.5e-4):
        x = seed_state(ManifoldParams(p, sigma * eta, sigma), sys)
        defects.append(abs(blowup_energy(x, sys) - p.energy))
    assert defects[0] / defects[1] == pytest.approx(4.0, rel=1e-2)
    assert defects[1] / defects[2] == pytest.approx(4.0, rel=1e-2)


def test_seed_on_the_infinity_manifold(equilateral_seed):
    sys, p, eta = equilateral_seed
    s1 = 1e-4 * eta
    x = seed_state(ManifoldParams(p, s1, 0.0), sys)
    assert x.rho == 0.0
    np.testing.assert_allclose(x.w, -p.v0 * s1, atol=1e-7)


def test_seed_time_reaches_scale(equilateral_seed):
    sys, p, eta = equilateral_seed
    mp = ManifoldParams(p, 2.0 * eta, 0.05)
    tau = seed_time(mp, 1e-3, sys)
    assert tau < 0
    assert linear_model_flow(mp, tau, sys).scale(sys) <= 1e-3
    assert seed_time(ManifoldParams(p, 1e-5 * eta, 0.0), 1e-3, sys) == 0.0


def test_dilation_and_parity(equilateral_seed):
    sys, p, eta = equilateral_seed
    mp = ManifoldParams(p, 2.0 * eta, 0.01)
    back = dilate_params(dilate_params(mp, 4.0), 0.25)
    assert back.v0 == pytest.approx(mp.v0)
    assert back.rho1 == pytest.approx(mp.rho1)
    assert dilate_params(mp, 4.0).v0 == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        dilate_params(mp, 0.0)
    flipped = parity_params(mp, sys)
    np.testing.assert_allclose(flipped.s0, -mp.s0)
    assert mass_norm(tangential_grad(flipped.s0, sys), sys) < 1e-12
