"""
Moteur d'expériences de ChazyScatter

Orchestre les commandes simulate, scatter, sweep, verify et kepler-check à partir
d'une RunConfig validée et écrit les résultats par le SaveManager.
"""

import logging
import time
from collections import Counter
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config.constants import (
    KEPLER_CHECK_FILE,
    KEPLER_CHECK_THRESHOLD,
    METADATA_FILE,
    REPORT_FILE,
    SCATTER_FILE,
    STATUS_FAILED,
    STATUS_SINGULAR,
    SUMMARY_FILE,
    SWEEP_FILE,
    TRAJECTORY_FILE,
    TRAJECTORY_RECORDS_FILE,
)
from config.settings import RunConfig
from utils.helpers import format_duration
from utils.save_manager import SaveManager
from .blowup import BlowupState, linear_model_flow, seed_state, seed_time, to_blowup
from .chazy import cartesian_samples, chazy_from_manifold, extract_manifold_params, fit_chazy_cartesian, tau_t_relation
from .errors import CollisionError, ConvergenceError, ScatteringLabError
from .integrator import Trajectory, detect_equilibrium, growth_witness, integrate
from .kepler import KeplerOrbit, kepler_blowup_state, kepler_newtonian_time, kepler_scattering, scattering_angle
from .nbody import MassSystem, mass_inner, mass_norm
from .scattering import (
    ScatteringResult,
    filter_near_infinity,
    image_jacobian,
    infinity_scattering,
    scattering_from_state,
    scattering_record,
    shape_potential_bound,
    sweep_dispersion,
    sweep_image,
)
from .verification import VerificationReport, VerificationSuite

logger = logging.getLogger(__name__)

COMMANDS = ("simulate", "scatter", "sweep", "verify", "kepler-check")


def _relative(a: np.ndarray, b: np.ndarray, sys: MassSystem) -> float:
    return mass_norm(np.asarray(a) - np.asarray(b), sys) / max(mass_norm(b, sys), 1e-300)


class ExperimentEngine:
    """
    Moteur principal - exécute une commande et persiste ses résultats
    """

    def __init__(self, config: RunConfig, save_manager: Optional[SaveManager] = None):
        """
        Initialise le moteur

        Args:
            config: Configuration déjà validée
            save_manager: Gestionnaire de sortie (par défaut sur config.output_dir)
        """
        self.config = config
        self.sys = config.mass_system()
        self.tol = config.tolerances()
        self.save_manager = save_manager or SaveManager(config.output_dir)

        # Statistiques d'exécution
        self.run_stats = {
            'command': None,
            'duration': 0.0,
            'files': [],
        }

    def run(self, command: str) -> Any:
        """
        Exécute une commande par son nom

        Returns:
            Le résultat de la commande (chemins, enregistrement ou rapport)
        """
        handlers = {
            "simulate": self.simulate,
            "scatter": self.scatter,
            "sweep": self.sweep,
            "verify": self.verify,
            "kepler-check": self.kepler_check,
        }
        if command not in handlers:
            raise ValueError(f"commande inconnue: {command}")
        self.run_stats['command'] = command
        start = time.perf_counter()
        logger.info("Commande %s, mode %s", command, self.config.mode)
        try:
            return handlers[command]()
        finally:
            self.run_stats['duration'] = time.perf_counter() - start
            logger.info("Commande %s terminée en %s", command, format_duration(self.run_stats['duration']))

    def _written(self, path: str) -> str:
        self.run_stats['files'].append(path)
        return path

    # simulate

    def initial_state(self) -> Tuple[BlowupState, Tuple[float, float], bool, float]:
        """
        État initial du mode choisi, intervalle en τ, arrêt à l'équilibre et temps initial

        En mode manifold, le départ est le point de graine au temps τs où le flot linéaire
        ramène la graine sous seed_scale; l'intégration s'éloigne de l'équilibre et seule
        la longueur de tau_span est retenue.
        """
        span, stop = self.config.simulation_span()
        mode = self.config.mode
        if mode == "kepler":
            orb = self.config.kepler_orbit()
            return kepler_blowup_state(orb, span[0]), span, stop, kepler_newtonian_time(orb, span[0])
        if mode == "cartesian":
            q, xi = self.config.cartesian_state()
            return to_blowup(q, xi, self.sys), span, stop, 0.0

        mp = self.config.manifold_params()
        tau_s = seed_time(mp, self.tol.seed_scale, self.sys)
        x0 = seed_state(linear_model_flow(mp, tau_s, self.sys), self.sys, self.tol.seed_scale, self.tol.frame)
        length = abs(span[1] - span[0])
        direction = 1.0 if mp.v0 < 0 else -1.0
        t0 = tau_t_relation(mp, tau_s, self.sys) if mp.rho1 > 0 else 0.0
        return x0, (tau_s, tau_s + direction * length), stop, t0

    def simulate(self) -> Dict[str, str]:
        """
        Intègre l'orbite de la configuration et écrit la trajectoire (CSV et JSONL) et les métadonnées

        Returns:
            Chemins {"trajectory", "records", "metadata"}
        """
        x0, span, stop, t0 = self.initial_state()
        traj = integrate(x0, span, self.tol, self.sys, stop_at_equilibrium=stop, t0=t0)
        metadata = {"mode": self.config.mode, "config": self.config.to_dict(), **traj.metadata()}
        metadata["final_rho"] = float(traj.rho[-1])
        eq = detect_equilibrium(traj, self.tol)
        metadata["equilibrium"] = None if eq is None else {"s0": eq.s0, "v0": eq.v0}
        if traj.tracks_time and eq is not None:
            metadata["growth_witness"] = growth_witness(traj)
        paths = {
            "trajectory": self._written(self.save_manager.write_trajectory(traj, TRAJECTORY_FILE)),
            "records": self._written(self.save_manager.write_trajectory_records(traj, TRAJECTORY_RECORDS_FILE)),
        }
        metadata["artifacts"] = self.save_manager.inventory(self.run_stats['files'])
        paths["metadata"] = self._written(self.save_manager.write_json(METADATA_FILE, metadata))
        return paths

    # scatter

    def scatter(self) -> ScatteringResult:
        """
        Diffusion d'une orbite; l'enregistrement est écrit en JSONL

        Les échecs d'une graine de variété (collision, non-convergence) deviennent des
        statuts; en mode cartésien ils sont propagés.
        """
        mode = self.config.mode
        levels = self.config.richardson_levels
        budget = self.config.tau_budget
        if mode == "cartesian":
            q, xi = self.config.cartesian_state()
            result = scattering_from_state(to_blowup(q, xi, self.sys), self.tol, self.sys, budget)
        else:
            if mode == "kepler":
                past = kepler_scattering(self.config.kepler_orbit()).past_params()
            else:
                past = self.config.manifold_params()
            if past.rho1 == 0.0 and past.v0 < 0 and mass_norm(past.s1, self.sys) > 0:
                result = self._infinity_record(past)
            else:
                result = scattering_record(past, self.tol, self.sys, levels, budget)
        result = result.with_index(0)
        self._written(self.save_manager.write_jsonl(SCATTER_FILE, [result]))
        return result

    def _infinity_record(self, past) -> ScatteringResult:
        eta = past.s1 / mass_norm(past.s1, self.sys)
        try:
            return infinity_scattering(past.eq, eta, self.sys, self.tol)
        except CollisionError as err:
            status, message = STATUS_SINGULAR, str(err)
        except ScatteringLabError as err:
            status, message = STATUS_FAILED, f"{type(err).__name__}: {err}"
        logger.warning("Diffusion à l'infini %s: %s", status, message)
        return ScatteringResult(status=status, energy=past.eq.energy, past=past, message=message)

    # sweep

    def sweep(self) -> Dict[str, Any]:
        """
        Balayage de graines près de -p, résultats JSONL ordonnés et résumé

        Le résumé contient le décompte des statuts, la table dispersion/échelle par
        valeur de rho1, le filtre près de l'infini et le rang de la jacobienne de l'image.
        """
        grid = self.config.sweep_grid()
        p, eta = grid["p"], grid["eta"]
        results = sweep_image(p, eta, grid["rho1_values"], grid["s1_offsets"], self.tol, self.sys,
                              workers=self.config.workers, levels=grid["levels"],
                              budget_factor=self.config.tau_budget)
        self._written(self.save_manager.write_jsonl(SWEEP_FILE, results))

        summary: Dict[str, Any] = {
            "seeds": len(results),
            "statuses": dict(sorted(Counter(r.status for r in results).items())),
            "dispersion": self._dispersion_table(results, grid["rho1_values"]),
            "jacobian": None,
            "near_infinity": self._near_infinity_summary(results, p, eta, grid),
        }
        if not results:
            summary["note"] = "aucune graine: grille vide"
        else:
            rho1 = self.config.rho1_for_rank(grid["rho1_values"])
            if grid["jacobian"] and rho1 is not None:
                summary["jacobian"] = self._jacobian_summary(p, eta, rho1, grid)
        summary["artifacts"] = self.save_manager.inventory(self.run_stats['files'])
        self._written(self.save_manager.write_json(SUMMARY_FILE, summary))
        return summary

    def _dispersion_table(self, results: List[ScatteringResult], rho1_values: List[float]) -> List[dict]:
        table = []
        for rho1 in dict.fromkeys(rho1_values):
            group = [r for r in results if r.past.rho1 == rho1]
            ok = [r for r in group if r.ok]
            table.append({
                "rho1": rho1,
                "seeds": len(group),
                "ok": len(ok),
                "dispersion": sweep_dispersion(group, self.sys),
                "max_rho": max((r.diagnostics["max_rho"] for r in ok), default=None),
                "max_shape_potential": max((r.diagnostics["max_shape_potential"] for r in ok), default=None),
            })
        return table

    def _near_infinity_summary(self, results: List[ScatteringResult], p, eta,
                               grid: Dict[str, Any]) -> Dict[str, Any]:
        """K du grand cercle de -s0 vers η, et dispersion restreinte à Z(R) ou Z(R, K) si R est donné"""
        block: Dict[str, Any] = {"great_circle_K": None}
        try:
            block["great_circle_K"] = shape_potential_bound(p.s0, eta, self.sys, self.tol)
        except ScatteringLabError as err:
            logger.warning("Borne K indisponible: %s", err)
        if grid["R"] is not None:
            kept = filter_near_infinity(results, grid["R"], grid["K"])
            block.update({
                "R": grid["R"],
                "K": grid["K"],
                "seeds": len(kept),
                "dispersion": sweep_dispersion(kept, self.sys),
            })
        return block

    def _jacobian_summary(self, p, eta, rho1: float, grid: Dict[str, Any]) -> Dict[str, Any]:
        try:
            jac = image_jacobian(p, eta, rho1, self.tol, self.sys, step=grid["fd_step"], levels=grid["levels"])
        except ScatteringLabError as err:
            logger.warning("Jacobienne de l'image indisponible: %s", err)
            return {"rho1": rho1, "error": f"{type(err).__name__}: {err}"}
        return {"rho1": rho1, "full": jac.report.full, **jac.to_dict()}

    # verify

    def verify(self) -> VerificationReport:
        sizes, inject = self.config.verify_options()
        suite = VerificationSuite(self.tol, sizes, inject, rng_seed=self.config.random_seed)
        report = suite.run()
        self._written(self.save_manager.write_json(REPORT_FILE, report))
        if report.passed:
            logger.info("Vérification réussie: %d critères", len(report.criteria))
        else:
            logger.warning("Critères en échec: %s", ", ".join(report.failed))
        if report.passed and not report.full_pass:
            logger.warning("Vérification partielle (critères réduits: %s), pas un succès complet",
                           ", ".join(report.reduced) or "aucun, sélection incomplète")
        return report

    # kepler-check

    def _kepler_branch(self, orb: KeplerOrbit, sign: float) -> Tuple[Trajectory, Any]:
        sys = orb.mass_system()
        budget = self.config.tau_budget / orb.omega
        traj = integrate(kepler_blowup_state(orb, 0.0), (0.0, sign * budget), self.tol, sys,
                         stop_at_equilibrium=True)
        eq = detect_equilibrium(traj, self.tol)
        if eq is None:
            raise ConvergenceError("orbite de Kepler non convergée", traj)
        return traj, extract_manifold_params(traj, eq, sys, self.tol)

    def kepler_check(self) -> Dict[str, Any]:
        """
        Compare les données de diffusion exactes de l'orbite de Kepler à la chaîne numérique

        Returns:
            Rapport {"passed", "threshold", "metrics", "cartesian_fit"}
        """
        orb = self.config.kepler_orbit()
        sys = orb.mass_system()
        exact = kepler_scattering(orb)
        references = {
            "past": (exact.past_params(), exact.A, exact.C),
            "future": (exact.future_params(), exact.A_prime, exact.C_prime),
        }
        metrics, cartesian, numeric_A = {}, {}, {}
        for label, sign in (("past", -1.0), ("future", 1.0)):
            traj, mp = self._kepler_branch(orb, sign)
            ref, A_ref, C_ref = references[label]
            chazy = chazy_from_manifold(mp, sys)
            numeric_A[label] = chazy.A
            metrics[f"{label}_A_error"] = _relative(chazy.A, A_ref, sys)
            metrics[f"{label}_C_error"] = _relative(chazy.C, C_ref, sys)
            metrics[f"{label}_rho1_error"] = abs(mp.rho1 - ref.rho1) / ref.rho1
            metrics[f"{label}_s1_error"] = _relative(mp.s1, ref.s1, sys)
            try:
                fit = fit_chazy_cartesian(cartesian_samples(traj), sys)
                cartesian[f"{label}_A_error"] = _relative(fit.A, A_ref, sys)
                cartesian[f"{label}_B_error"] = fit.b_relation_error(sys)
            except ScatteringLabError as err:
                cartesian[f"{label}_error"] = f"{type(err).__name__}: {err}"

        cos_angle = mass_inner(numeric_A["past"], numeric_A["future"], sys) / (2.0 * orb.h)
        angle = float(np.arccos(np.clip(cos_angle, -1.0, 1.0)))
        metrics["angle_error"] = abs(angle - scattering_angle(orb))
        passed = max(metrics.values()) < KEPLER_CHECK_THRESHOLD
        report = {
            "passed": passed,
            "threshold": KEPLER_CHECK_THRESHOLD,
            "orbit": {"m1": orb.m1, "m2": orb.m2, "h": orb.h, "e": orb.e, "a": orb.a, "mu": orb.mu},
            "metrics": metrics,
            "cartesian_fit": cartesian,
            "exact": {"A": exact.A, "C": exact.C, "A_prime": exact.A_prime, "C_prime": exact.C_prime,
                      "rho1": exact.rho1, "angle": scattering_angle(orb)},
        }
        self._written(self.save_manager.write_json(KEPLER_CHECK_FILE, report))
        if not passed:
            logger.warning("Écart de Kepler au-delà de %.1e: %s", KEPLER_CHECK_THRESHOLD,
                           max(metrics, key=metrics.get))
        return report
