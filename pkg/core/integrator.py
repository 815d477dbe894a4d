"""
Intégration adaptative du champ éclaté en temps τ

Runge-Kutta DOP853 par segments, avec renormalisation des contraintes en fin de
segment, accumulation du temps newtonien dt = r dτ, équations variationnelles et
détection de la convergence vers un équilibre à l'infini.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp

from config.tolerances import ToleranceSet
from .blowup import (
    BlowupState,
    EquilibriumPoint,
    blowup_energy,
    field_jacobian,
    field_rhs,
    state_size,
    state_indices,
)
from .errors import CollisionError, ConvergenceError, InfinityStateError, IntegrationError
from .nbody import MassSystem, mass_norm, min_pair_distance, potential

logger = logging.getLogger(__name__)

REASON_SPAN_END = "span_end"
REASON_CONVERGED = "converged"


@dataclass(frozen=True)
class Trajectory:
    """
    Échantillons (τ, état, t) d'une orbite intégrée

    states contient les états empaquetés [rho, s, v, w], t le temps newtonien
    (NaN quand il n'est pas suivi, c'est-à-dire sur la variété à l'infini).
    """

    tau: np.ndarray
    states: np.ndarray
    t: np.ndarray
    sys: MassSystem
    tolerances: ToleranceSet
    reason: str
    energy0: float
    tracks_time: bool
    energy_drift: float = 0.0

    def __len__(self) -> int:
        return len(self.tau)

    def state(self, k: int) -> BlowupState:
        return BlowupState.unpack(self.states[k], self.sys)

    def final_state(self) -> BlowupState:
        return self.state(-1)

    @property
    def rho(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def v(self) -> np.ndarray:
        return self.states[:, 1 + self.sys.size]

    @property
    def s(self) -> np.ndarray:
        _, S, _, _ = state_indices(self.sys)
        return self.states[:, S]

    @property
    def w(self) -> np.ndarray:
        _, _, _, W = state_indices(self.sys)
        return self.states[:, W]

    def w_norms(self) -> np.ndarray:
        m = self.sys.mass_vector
        return np.sqrt(np.einsum("kj,kj->k", self.w * m, self.w))

    def energies(self) -> np.ndarray:
        return np.array([blowup_energy(self.state(k), self.sys) for k in range(len(self))])

    def constraint_defects(self) -> Tuple[float, float]:
        m = self.sys.mass_vector
        sphere = np.abs(np.einsum("kj,kj->k", self.s * m, self.s) - 1.0)
        tangency = np.abs(np.einsum("kj,kj->k", self.s * m, self.w))
        return float(sphere.max()), float(tangency.max())

    def max_rho(self) -> float:
        return float(self.rho.max())

    def min_pair_distance(self) -> float:
        return float(min(min_pair_distance(s, self.sys)[0] for s in self.s))

    def max_shape_potential(self) -> float:
        """max U(s) le long de l'orbite (borne K des ensembles Z(R, K))"""
        try:
            return float(max(potential(s, self.sys) for s in self.s))
        except CollisionError:
            return float("inf")

    def metadata(self) -> dict:
        sphere, tangency = self.constraint_defects() if len(self) else (0.0, 0.0)
        return {
            "samples": len(self),
            "reason": self.reason,
            "tau_start": float(self.tau[0]) if len(self) else None,
            "tau_end": float(self.tau[-1]) if len(self) else None,
            "energy": self.energy0,
            "energy_drift": self.energy_drift,
            "sphere_defect": sphere,
            "tangency_defect": tangency,
            "tracks_time": self.tracks_time,
            "n": self.sys.n,
            "d": self.sys.d,
            "masses": list(self.sys.masses),
            "tolerances": self.tolerances.to_dict(),
        }


@dataclass(frozen=True)
class VariationalState:
    """
    État de base et perturbation (δrho, δs, δv, δw) empaquetée
    """

    base: BlowupState
    delta: np.ndarray
    tau: float = 0.0

    def delta_parts(self, sys: MassSystem):
        i_rho, S, i_v, W = state_indices(sys)
        return self.delta[i_rho], self.delta[S], self.delta[i_v], self.delta[W]

    def delta_chazy_velocity(self, sys: MassSystem) -> np.ndarray:
        """Variation de A = v s + w"""
        _, ds, dv, dw = self.delta_parts(sys)
        return dv * self.base.s + self.base.v * ds + dw


def _segment_grid(a: float, b: float, step: float) -> np.ndarray:
    count = max(1, int(np.ceil(abs(b - a) / step - 1e-9)))
    return a + (b - a) * np.arange(1, count + 1) / count


def _project_packed(y: np.ndarray, sys: MassSystem) -> np.ndarray:
    n_state = state_size(sys)
    x = BlowupState.unpack(y[:n_state], sys).renormalized(sys)
    out = y.copy()
    out[:n_state] = x.pack()
    return out


def _atol_vector(tol: ToleranceSet, sys: MassSystem, extra: int) -> np.ndarray:
    atol = np.full(state_size(sys) + extra, tol.atol)
    atol[0] = tol.atol * tol.rho_atol_factor
    return atol


def _converged(x: BlowupState, h: float, tol: ToleranceSet, sys: MassSystem) -> bool:
    if h <= 0:
        return False
    v_target = np.sign(x.v) * np.sqrt(2.0 * h)
    return (
        x.rho < tol.rho_eq
        and mass_norm(x.w, sys) < tol.w_eq
        and abs(x.v - v_target) < tol.v_eq
    )


def _solve_segment(rhs: Callable, a: float, b: float, y: np.ndarray, tol: ToleranceSet,
                   atol: np.ndarray, events: Sequence[Callable]):
    sol = solve_ivp(
        rhs,
        (a, b),
        y,
        method="DOP853",
        t_eval=_segment_grid(a, b, tol.sample_step),
        rtol=tol.rtol,
        atol=atol,
        events=list(events) or None,
    )
    return sol


def integrate(x0: BlowupState, tau_span: Tuple[float, float], tol: ToleranceSet, sys: MassSystem,
              stop_at_equilibrium: bool = False, t0: float = 0.0) -> Trajectory:
    """
    Intègre le champ éclaté sur tau_span (croissant ou décroissant)

    Args:
        x0: État initial satisfaisant les contraintes
        tau_span: Intervalle (τ0, τ1)
        tol: Tolérances
        sys: Système de masses
        stop_at_equilibrium: Arrête l'intégration dès la convergence vers un équilibre
        t0: Temps newtonien initial

    Returns:
        Trajectoire échantillonnée tous les tol.sample_step

    Raises:
        CollisionError: distance mutuelle sous le seuil de collision
        IntegrationError: échec du solveur (pas trop petit)
        ConvergenceError: pas de convergence dans l'intervalle demandé
    """
    x0.check(sys, tol.frame)
    tau0, tau1 = float(tau_span[0]), float(tau_span[1])
    if tau1 == tau0:
        raise ValueError("intervalle d'intégration vide")
    direction = np.sign(tau1 - tau0)
    tracks_time = x0.rho > 0
    n_state = state_size(sys)
    energy0 = blowup_energy(x0, sys, tol.collision)

    def rhs(tau, y):
        out = np.empty_like(y)
        out[:n_state] = field_rhs(y[:n_state], sys, tol.collision)
        out[n_state] = 1.0 / y[0] if tracks_time and y[0] > 0 else 0.0
        return out

    events = []
    if tracks_time:
        def collision_event(tau, y):
            _, S, _, _ = state_indices(sys)
            return min_pair_distance(y[S], sys)[0] - tol.collision
        collision_event.terminal = True
        collision_event.direction = -1
        events.append(collision_event)

    atol = _atol_vector(tol, sys, extra=1)
    y = np.concatenate((x0.pack(), [t0]))
    taus: List[float] = [tau0]
    rows: List[np.ndarray] = [y.copy()]
    tau = tau0
    reason = REASON_SPAN_END
    converged_since: Optional[float] = tau0 if _converged(x0, energy0, tol, sys) else None

    def build(current_reason: str) -> Trajectory:
        arr = np.array(rows)
        states = arr[:, :n_state]
        t_col = arr[:, n_state] if tracks_time else np.full(len(arr), np.nan)
        drift = 0.0
        if len(arr) > 1:
            energies = np.array([blowup_energy(BlowupState.unpack(row, sys), sys, tol.collision)
                                 for row in states])
            drift = float(np.max(np.abs(energies - energy0)))
        return Trajectory(np.array(taus), states, t_col, sys, tol, current_reason,
                          energy0, tracks_time, drift)

    while direction * (tau1 - tau) > 0:
        b = tau + direction * min(tol.segment_length, abs(tau1 - tau))
        try:
            sol = _solve_segment(rhs, tau, b, y, tol, atol, events)
        except CollisionError as err:
            if err.tau is None:
                err.tau = tau
            err.trajectory = build("collision")
            raise
        for k in range(len(sol.t)):
            taus.append(float(sol.t[k]))
            rows.append(_project_packed(sol.y[:, k], sys))
        if sol.status == -1:
            raise IntegrationError(f"échec de l'intégration à τ = {tau:.6g}: {sol.message}", build("failed"))
        if sol.status == 1 and events and len(sol.t_events[0]):
            tau_hit = float(sol.t_events[0][0])
            y_hit = sol.y_events[0][0]
            distance, pair = min_pair_distance(y_hit[1:1 + sys.size], sys)
            logger.warning("Collision détectée à τ = %.6g entre %s", tau_hit, pair)
            err = CollisionError(pair, distance, tau_hit)
            err.trajectory = build("collision")
            raise err
        y = _project_packed(sol.y[:, -1], sys)
        tau = float(sol.t[-1])
        logger.debug("Segment intégré jusqu'à τ = %.4f (%d pas)", tau, len(sol.t))

        if stop_at_equilibrium:
            for k in range(len(sol.t)):
                x = BlowupState.unpack(sol.y[:n_state, k], sys)
                if _converged(x, energy0, tol, sys):
                    if converged_since is None:
                        converged_since = float(sol.t[k])
                else:
                    converged_since = None
            if converged_since is not None:
                window = tol.convergence_window / np.sqrt(2.0 * energy0)
                if abs(tau - converged_since) >= window:
                    reason = REASON_CONVERGED
                    break

    traj = build(reason)
    if stop_at_equilibrium and reason != REASON_CONVERGED:
        raise ConvergenceError(f"pas de convergence vers un équilibre sur τ ∈ [{tau0:.4g}, {tau1:.4g}]", traj)
    if traj.energy_drift > tol.energy:
        logger.warning("Dérive d'énergie %.3e au-delà de la tolérance %.1e", traj.energy_drift, tol.energy)
    logger.info("Trajectoire intégrée: %d échantillons, arrêt '%s'", len(traj), reason)
    return traj


def integrate_variational(x0: VariationalState, tau_span: Tuple[float, float], tol: ToleranceSet,
                          sys: MassSystem) -> List[VariationalState]:
    """
    Intègre l'état de base et sa perturbation par la jacobienne exacte du champ

    Returns:
        États variationnels aux instants d'échantillonnage, état initial compris
    """
    x0.base.check(sys, tol.frame)
    tau0, tau1 = float(tau_span[0]), float(tau_span[1])
    if tau1 == tau0:
        raise ValueError("intervalle d'intégration vide")
    direction = np.sign(tau1 - tau0)
    n_state = state_size(sys)
    delta0 = np.asarray(x0.delta, dtype=float)
    if delta0.size != n_state:
        raise ValueError(f"perturbation de longueur {delta0.size}, attendue {n_state}")

    def rhs(tau, y):
        base = y[:n_state]
        out = np.empty_like(y)
        out[:n_state] = field_rhs(base, sys, tol.collision)
        out[n_state:] = field_jacobian(base, sys, tol.collision) @ y[n_state:]
        return out

    atol = np.concatenate((_atol_vector(tol, sys, extra=0), np.full(n_state, tol.atol)))
    y = np.concatenate((x0.base.pack(), delta0))
    out = [VariationalState(x0.base, delta0.copy(), tau0)]
    tau = tau0
    while direction * (tau1 - tau) > 0:
        b = tau + direction * min(tol.segment_length, abs(tau1 - tau))
        sol = _solve_segment(rhs, tau, b, y, tol, atol, [])
        if sol.status == -1:
            raise IntegrationError(f"échec de l'intégration variationnelle à τ = {tau:.6g}: {sol.message}")
        for k in range(len(sol.t)):
            yk = _project_packed(sol.y[:, k], sys)
            out.append(VariationalState(BlowupState.unpack(yk[:n_state], sys), yk[n_state:].copy(),
                                        float(sol.t[k])))
        y = _project_packed(sol.y[:, -1], sys)
        tau = float(sol.t[-1])
    logger.info("Équations variationnelles intégrées: %d échantillons", len(out))
    return out


def detect_equilibrium(traj: Trajectory, tol: ToleranceSet) -> Optional[EquilibriumPoint]:
    """
    Équilibre (s0, v0) atteint en fin de trajectoire, ou None

    Les critères rho < rho_eq, ‖w‖ < w_eq et |v - signe(v)√(2h)| < v_eq doivent tenir
    sur une fenêtre finale de longueur convergence_window / √(2h).
    """
    h = traj.energy0
    if len(traj) < 2 or h <= 0:
        return None
    window = tol.convergence_window / np.sqrt(2.0 * h)
    tail = np.abs(traj.tau - traj.tau[-1]) <= window
    if abs(traj.tau[-1] - traj.tau[0]) < window:
        return None
    for k in np.flatnonzero(tail):
        if not _converged(traj.state(k), h, tol, traj.sys):
            return None
    final = traj.final_state().renormalized(traj.sys)
    v0 = float(np.sign(final.v) * np.sqrt(2.0 * h))
    return EquilibriumPoint(final.s, v0)


def newtonian_time(traj: Trajectory) -> np.ndarray:
    """
    Temps newtonien par quadrature de Simpson de r dτ le long des échantillons

    Raises:
        InfinityStateError: si un échantillon est sur la variété à l'infini
    """
    if np.any(traj.rho <= 0):
        raise InfinityStateError("le segment touche rho = 0: temps newtonien indéfini")
    start = traj.t[0] if traj.tracks_time else 0.0
    r = 1.0 / traj.rho
    if len(traj) < 3:
        increments = np.concatenate(([0.0], np.cumsum(0.5 * (r[1:] + r[:-1]) * np.diff(traj.tau))))
        return start + increments
    return start + cumulative_simpson(r, x=traj.tau, initial=0.0)


def growth_witness(traj: Trajectory) -> float:
    """
    Minimum de r/|t| sur la seconde moitié de la trajectoire

    Une valeur strictement positive atteste la croissance au moins linéaire de r.
    """
    if not traj.tracks_time:
        raise InfinityStateError("temps newtonien non suivi sur la variété à l'infini")
    half = len(traj) // 2
    t = traj.t[half:]
    r = 1.0 / traj.rho[half:]
    mask = np.abs(t) > 0
    if not np.any(mask):
        return 0.0
    return float(np.min(r[mask] / np.abs(t[mask])))
