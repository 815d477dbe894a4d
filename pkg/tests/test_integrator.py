"""
Tests de l'intégrateur du champ éclaté
"""

import numpy as np
import pytest

from config.tolerances import ToleranceSet
from core.blowup import BlowupState, infinity_flow, to_blowup
from core.errors import CollisionError, ConvergenceError, InfinityStateError
from core.integrator import (
    REASON_CONVERGED,
    REASON_SPAN_END,
    VariationalState,
    detect_equilibrium,
    growth_witness,
    integrate,
    integrate_variational,
    newtonian_time,
)
from core.kepler import kepler_blowup_state, kepler_newtonian_time, kepler_radius, kepler_scattering
from core.nbody import MassSystem, make_configuration, mass_norm


@pytest.fixture
def kepler_traj(kepler_orbit, tol):
    x0 = kepler_blowup_state(kepler_orbit, 0.0)
    return integrate(x0, (0.0, 3.0), tol, kepler_orbit.mass_system())


def test_kepler_accuracy(kepler_orbit, kepler_traj):
    assert kepler_traj.reason == REASON_SPAN_END
    assert kepler_traj.tracks_time
    assert kepler_traj.tau[-1] == pytest.approx(3.0)
    for k in range(0, len(kepler_traj), 25):
        tau = kepler_traj.tau[k]
        assert 1.0 / kepler_traj.rho[k] == pytest.approx(kepler_radius(kepler_orbit, tau), rel=1e-8)
        assert kepler_traj.t[k] == pytest.approx(kepler_newtonian_time(kepler_orbit, tau), rel=1e-8, abs=1e-10)


def test_invariants_along_trajectory(kepler_traj, tol):
    sphere, tangency = kepler_traj.constraint_defects()
    assert sphere < 1e-12 and tangency < 1e-12
    assert kepler_traj.energy_drift < tol.energy
    np.testing.assert_allclose(kepler_traj.energies(), kepler_traj.energy0, atol=tol.energy)
    meta = kepler_traj.metadata()
    assert meta["samples"] == len(kepler_traj)
    assert meta["reason"] == REASON_SPAN_END
    assert meta["masses"] == [2.0, 2.0]


def test_sample_step(kepler_traj, tol):
    steps = np.diff(kepler_traj.tau)
    assert np.all(steps > 0)
    assert np.max(steps) <= tol.sample_step + 1e-12


def test_backward_integration_and_start_time(kepler_orbit, tol):
    x0 = kepler_blowup_state(kepler_orbit, 0.0)
    traj = integrate(x0, (0.0, -1.0), tol, kepler_orbit.mass_system(), t0=5.0)
    assert traj.t[0] == 5.0
    assert traj.tau[-1] == pytest.approx(-1.0)
    assert traj.t[-1] - 5.0 == pytest.approx(kepler_newtonian_time(kepler_orbit, -1.0), rel=1e-8)


def test_empty_span_rejected(kepler_orbit, tol):
    with pytest.raises(ValueError):
        integrate(kepler_blowup_state(kepler_orbit, 0.0), (1.0, 1.0), tol, kepler_orbit.mass_system())


def test_convergence_to_future_equilibrium(kepler_orbit, tol):
    sys = kepler_orbit.mass_system()
    traj = integrate(kepler_blowup_state(kepler_orbit, 0.0), (0.0, 25.0), tol, sys, stop_at_equilibrium=True)
    assert traj.reason == REASON_CONVERGED
    assert traj.tau[-1] < 25.0
    eq = detect_equilibrium(traj, tol)
    assert eq is not None
    assert eq.v0 == pytest.approx(kepler_orbit.omega)
    np.testing.assert_allclose(eq.s0, kepler_scattering(kepler_orbit).s0_prime, atol=1e-7)


def test_no_convergence_raises_with_trajectory(kepler_orbit, tol):
    x0 = kepler_blowup_state(kepler_orbit, 0.0)
    with pytest.raises(ConvergenceError) as info:
        integrate(x0, (0.0, 2.0), tol, kepler_orbit.mass_system(), stop_at_equilibrium=True)
    assert info.value.trajectory is not None
    assert info.value.trajectory.tau[-1] == pytest.approx(2.0)


def test_detect_equilibrium_needs_a_window(kepler_traj, tol):
    assert detect_equilibrium(kepler_traj, tol) is None


def test_infinity_manifold_matches_closed_form(equilateral_seed, tol):
    sys, p, eta = equilateral_seed
    xi, h = -p.s0, 1.5
    traj = integrate(infinity_flow(xi, eta, h, -3.0, sys), (-3.0, 3.0), tol, sys)
    assert not traj.tracks_time
    assert np.all(np.isnan(traj.t))
    np.testing.assert_array_equal(traj.rho, 0.0)
    for k in range(0, len(traj), 20):
        exact = infinity_flow(xi, eta, h, traj.tau[k], sys).pack()
        np.testing.assert_allclose(traj.states[k], exact, atol=1e-9)
    with pytest.raises(InfinityStateError):
        newtonian_time(traj)
    with pytest.raises(InfinityStateError):
        growth_witness(traj)


def test_collision_is_reported():
    sys = MassSystem((1.0, 1.0, 1.0), d=2)
    q = make_configuration(sys.remove_center_of_mass(np.array([-1.0, 0.0, 1.0, 0.0, 0.0, 5.0])), sys)
    xi = np.array([1.0, 0.0, -1.0, 0.0, 0.0, 0.0])
    tol = ToleranceSet(collision=1e-3)
    with pytest.raises(CollisionError) as info:
        integrate(to_blowup(q, xi, sys), (0.0, 10.0), tol, sys)
    assert info.value.pair == (0, 1)
    assert info.value.trajectory is not None
    assert info.value.tau is not None


def test_newtonian_time_quadrature(kepler_traj):
    np.testing.assert_allclose(newtonian_time(kepler_traj), kepler_traj.t, rtol=1e-5, atol=1e-8)


def test_growth_witness_is_positive(kepler_traj):
    assert growth_witness(kepler_traj) > 1.0


def test_variational_matches_finite_differences(kepler_orbit, tol):
    sys = kepler_orbit.mass_system()
    x0 = kepler_blowup_state(kepler_orbit, 0.0)
    delta = np.zeros(2 + 2 * sys.size)
    delta[0] = 1.0
    states = integrate_variational(VariationalState(x0, delta), (0.0, 1.0), tol, sys)
    assert states[0].tau == 0.0
    assert states[-1].tau == pytest.approx(1.0)
    eps = 1e-4
    ends = []
    for sign in (1.0, -1.0):
        shifted = BlowupState(x0.rho + sign * eps, x0.s, x0.v, x0.w)
        ends.append(integrate(shifted, (0.0, 1.0), tol, sys).states[-1])
    fd = (ends[0] - ends[1]) / (2 * eps)
    np.testing.assert_allclose(states[-1].delta, fd, rtol=1e-4, atol=1e-5)
    np.testing.assert_allclose(states[-1].base.pack(), integrate(x0, (0.0, 1.0), tol, sys).states[-1],
                               atol=1e-10)


def test_variational_rejects_bad_delta(kepler_orbit, tol):
    x0 = kepler_blowup_state(kepler_orbit, 0.0)
    with pytest.raises(ValueError):
        integrate_variational(VariationalState(x0, np.zeros(3)), (0.0, 1.0), tol, kepler_orbit.mass_system())


def test_delta_chazy_velocity(kepler_orbit):
    sys = kepler_orbit.mass_system()
    x0 = kepler_blowup_state(kepler_orbit, 0.0)
    delta = np.zeros(2 + 2 * sys.size)
    delta[1 + sys.size] = 1.0
    var = VariationalState(x0, delta)
    np.testing.assert_allclose(var.delta_chazy_velocity(sys), x0.s)
    assert mass_norm(var.delta_chazy_velocity(sys), sys) == pytest.approx(1.0)


def test_variational_rho_on_the_infinity_manifold(equilateral_seed, tol):
    sys, p, eta = equilateral_seed
    h = 1.5
    omega = np.sqrt(2.0 * h)
    base = infinity_flow(-p.s0, eta, h, 0.0, sys)
    delta = np.zeros(2 + 2 * sys.size)
    delta[0] = 1.0
    states = integrate_variational(VariationalState(base, delta), (0.0, 3.0), tol, sys)
    for var in states:
        # cos θ = 1 / cosh ωτ le long du flot sur Σ
        theta = np.arctan(np.sinh(omega * var.tau))
        assert var.delta[0] == pytest.approx(np.cos(theta), rel=1e-7)


@pytest.mark.slow
def test_end_state_error_decreases_with_tolerance(kepler_orbit):
    sys = kepler_orbit.mass_system()
    x0 = kepler_blowup_state(kepler_orbit, -1.0)
    exact = kepler_blowup_state(kepler_orbit, 1.0).pack()
    tols = 1e-6 / 2.0 ** np.arange(7)
    errors = []
    for r in tols:
        traj = integrate(x0, (-1.0, 1.0), ToleranceSet(rtol=r, atol=r), sys)
        errors.append(np.max(np.abs(traj.states[-1] - exact)))
    # erreur globale ∝ tol^(p/(p+1)) avec p = 8
    slope = np.polyfit(np.log(tols), np.log(errors), 1)[0]
    assert slope > 0.7
    assert errors[-1] < errors[0] / 15.0
