"""
Suite de vérification de bout en bout (commande verify)

Chaque critère compare la chaîne numérique à un oracle exact ou à un invariant et
renvoie un CriterionResult; les échecs sont des données. Quand rtol est plus strict
que ce que la double précision permet, les échecs sont marqués comme liés aux
tolérances plutôt qu'à une erreur de logique.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from scipy.linalg import expm

from config.constants import MIN_RELIABLE_RTOL
from config.tolerances import ToleranceSet
from .blowup import (
    EquilibriumPoint,
    ManifoldParams,
    generalized_eigenvector,
    infinity_flow,
    linearization_matrix,
    linearized_flow_exact,
    to_blowup,
)
from .chazy import (
    SeriesOrder,
    cartesian_samples,
    chazy_from_manifold,
    extract_manifold_params,
    fit_chazy_cartesian,
    fit_rho_series,
    series_predict,
)
from .errors import ScatteringLabError
from .integrator import detect_equilibrium, integrate
from .kepler import KeplerOrbit, kepler_blowup_state, kepler_scattering
from .nbody import MassSystem, mass_inner, mass_norm, random_unit_configuration, regular_polygon
from .scattering import (
    build_dbar,
    check_relation_properties,
    dbar_kernel,
    dbar_quadratic_form,
    delta_A,
    delta_A_planar,
    delta_A_variational,
    eta_nonplanar,
    image_jacobian,
    scattering_map,
    sweep_dispersion,
    sweep_image,
)

logger = logging.getLogger(__name__)

CRITERIA = (
    "kepler_closure",
    "infinity_oracle",
    "linearization",
    "chazy_b_law",
    "series_orders",
    "first_order_scattering",
    "kernel_lemma",
    "image_rank",
    "relation_symmetries",
    "near_infinity_continuity",
)

# Tailles d'acceptation; en deçà, un critère est marqué comme réduit
FULL_SIZES = {
    "random_equilibria": 100,
    "kernel_configurations": 20,
    "relation_kepler": 10,
    "relation_near_infinity": 10,
}

DEFAULT_SIZES = {
    **FULL_SIZES,
    "continuity_scales": [1e-2, 1e-3, 1e-4],
    "relation_threshold": 1e-6,
    "criteria": list(CRITERIA),
}


@dataclass
class CriterionResult:
    name: str
    passed: bool
    metrics: Dict[str, Any] = field(default_factory=dict)
    message: str = ""
    tolerance_bound: bool = False

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "metrics": self.metrics,
            "message": self.message,
            "tolerance_bound": self.tolerance_bound,
        }


@dataclass
class VerificationReport:
    """
    Résultats des critères; reduced liste ceux exécutés sous les tailles d'acceptation
    """

    criteria: List[CriterionResult] = field(default_factory=list)
    reduced: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    @property
    def failed(self) -> List[str]:
        return [c.name for c in self.criteria if not c.passed]

    @property
    def full_pass(self) -> bool:
        """Succès de tous les critères, tous exécutés aux tailles d'acceptation"""
        ran = {c.name for c in self.criteria}
        return self.passed and not self.reduced and ran == set(CRITERIA)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "failed": self.failed,
            "full_pass": self.full_pass,
            "reduced": self.reduced,
            "criteria": [c.to_dict() for c in self.criteria],
        }


def _rel(a: np.ndarray, b: np.ndarray, sys: MassSystem) -> float:
    return mass_norm(np.asarray(a) - np.asarray(b), sys) / max(mass_norm(b, sys), 1e-300)


class VerificationSuite:
    """
    Critères d'acceptation, éventuellement à taille réduite, pilotés par le bloc "verify" de la configuration
    """

    def __init__(self, tol: ToleranceSet, sizes: Optional[Dict[str, Any]] = None,
                 inject: Optional[Dict[str, Any]] = None, rng_seed: int = 0):
        self.tol = tol
        self.sizes = dict(DEFAULT_SIZES)
        self.sizes.update(sizes or {})
        self.inject = dict(inject or {})
        self.rng_seed = rng_seed
        self.triangle = MassSystem((1.0, 1.0, 1.0), d=2)

    @property
    def tolerance_limited(self) -> bool:
        return self.tol.rtol < MIN_RELIABLE_RTOL

    def run(self) -> VerificationReport:
        report = VerificationReport()
        for name in self.sizes["criteria"]:
            if name not in CRITERIA:
                raise ValueError(f"critère inconnu: {name}")
            method: Callable[[], CriterionResult] = getattr(self, name)
            logger.info("Critère %s", name)
            try:
                result = method()
            except ScatteringLabError as err:
                result = CriterionResult(name, False, message=f"{type(err).__name__}: {err}")
            if not result.passed and self.tolerance_limited:
                result.tolerance_bound = True
                result.message = (result.message + " (tolérance hors de portée de la double précision)").strip()
            if not result.passed:
                logger.warning("Critère %s en échec: %s", name, result.message)
            report.criteria.append(result)
            if self._is_reduced(name):
                report.reduced.append(name)
        return report

    def _is_reduced(self, name: str) -> bool:
        keys = {
            "linearization": ("random_equilibria",),
            "kernel_lemma": ("kernel_configurations",),
            "relation_symmetries": ("relation_kepler", "relation_near_infinity"),
        }.get(name, ())
        return any(int(self.sizes[key]) < FULL_SIZES[key] for key in keys)

    # Oracles

    def _kepler_pipeline(self, orb: KeplerOrbit):
        sys = orb.mass_system()
        x0 = kepler_blowup_state(orb, 0.0)
        budget = 50.0 / orb.omega
        traj = integrate(x0, (0.0, budget), self.tol, sys, stop_at_equilibrium=True)
        eq = detect_equilibrium(traj, self.tol)
        mp = extract_manifold_params(traj, eq, sys, self.tol)
        return sys, traj, eq, mp

    def kepler_closure(self) -> CriterionResult:
        orb = KeplerOrbit(2.0, 2.0, 2.0, 2.0)
        sys, _, _, mp = self._kepler_pipeline(orb)
        exact = kepler_scattering(orb)
        chazy = chazy_from_manifold(mp, sys)
        metrics = {
            "A_error": _rel(chazy.A, exact.A_prime, sys),
            "C_error": _rel(chazy.C, exact.C_prime, sys),
            "rho1_error": abs(mp.rho1 - exact.rho1) / exact.rho1,
        }
        return CriterionResult("kepler_closure", max(metrics.values()) < 1e-6, metrics)

    def infinity_oracle(self) -> CriterionResult:
        sys = self.triangle
        rng = np.random.default_rng(self.rng_seed)
        xi = random_unit_configuration(sys, rng, planar=True, min_distance=0.3)
        eta = eta_nonplanar(-xi, sys, self.tol)
        h = 1.5
        x0 = infinity_flow(xi, eta, h, -5.0, sys)
        traj = integrate(x0, (-5.0, 5.0), self.tol, sys)
        worst = 0.0
        for k, tau in enumerate(traj.tau):
            exact = infinity_flow(xi, eta, h, tau, sys).pack()
            worst = max(worst, float(np.max(np.abs(traj.states[k] - exact))))
        w2 = np.einsum("kj,kj->k", traj.w * sys.mass_vector, traj.w)
        identity = float(np.max(np.abs(traj.v**2 + w2 - 2.0 * h)))
        metrics = {"state_error": worst, "energy_identity": identity}
        return CriterionResult("infinity_oracle", worst < 1e-9 and identity < 1e-11, metrics)

    def linearization(self) -> CriterionResult:
        rng = np.random.default_rng(self.rng_seed + 1)
        worst_exp, worst_nil = 0.0, 0.0
        count = int(self.sizes["random_equilibria"])
        for k in range(count):
            sys = MassSystem((1.0, 2.0, 3.0), d=2 if k % 2 == 0 else 3)
            s0 = random_unit_configuration(sys, rng)
            v0 = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0))
            p = EquilibriumPoint(s0, v0)
            tau = float(rng.uniform(-1.0, 1.0))
            L = linearization_matrix(p, sys)
            E = linearized_flow_exact(p, tau, sys)
            worst_exp = max(worst_exp, float(np.max(np.abs(expm(tau * L) - E))))
            shifted = L + v0 * np.eye(L.shape[0])
            worst_nil = max(worst_nil, float(np.max(np.abs(shifted @ shifted @ generalized_eigenvector(p, sys)))))
        metrics = {"expm_error": worst_exp, "nilpotency": worst_nil, "equilibria": count}
        return CriterionResult("linearization", worst_exp < 1e-9 and worst_nil < 1e-10, metrics)

    def _hyperbolic_three_body(self, reverse: bool):
        sys = self.triangle
        s = regular_polygon(sys)
        eta = eta_nonplanar(-s, sys, self.tol)
        q, xi = 5.0 * s, 2.0 * s + 0.3 * eta
        if reverse:
            xi = -xi
        x0 = to_blowup(q, xi, sys)
        span = (0.0, -60.0) if reverse else (0.0, 60.0)
        traj = integrate(x0, span, self.tol, sys, stop_at_equilibrium=True)
        return sys, traj

    def chazy_b_law(self) -> CriterionResult:
        sign = float(self.inject.get("b_sign", 1.0))
        metrics = {}
        for label, reverse in (("future", False), ("past", True)):
            sys, traj = self._hyperbolic_three_body(reverse)
            fit = fit_chazy_cartesian(cartesian_samples(traj), sys)
            h = traj.energy0
            metrics[f"{label}_B_error"] = fit.b_relation_error(sys, sign)
            metrics[f"{label}_energy_error"] = abs(mass_inner(fit.A, fit.A, sys) - 2.0 * h) / (2.0 * h)
        passed = all(v < 1e-4 for k, v in metrics.items() if k.endswith("B_error")) and all(
            v < 1e-8 for k, v in metrics.items() if k.endswith("energy_error")
        )
        return CriterionResult("chazy_b_law", passed, metrics)

    def series_orders(self) -> CriterionResult:
        orb = KeplerOrbit(2.0, 2.0, 2.0, 3.0)
        sys, traj, eq, _ = self._kepler_pipeline(orb)
        mp = kepler_scattering(orb).future_params()
        u = np.exp(-mp.v0 * traj.tau)
        window = np.flatnonzero((u >= 5e-3) & (u <= 5e-2))
        slopes = {}
        for order in (1, 2):
            residual = [
                abs(traj.rho[k] - series_predict(mp, traj.tau[k], SeriesOrder(order), sys).rho) for k in window
            ]
            slopes[order] = float(np.polyfit(np.log(u[window]), np.log(residual), 1)[0])
        rho_fit = fit_rho_series(traj, eq, sys, self.tol)
        metrics = {
            "slope_order1": slopes[1],
            "slope_order2": slopes[2],
            "rho2_error": rho_fit.rho2_relative_error,
        }
        passed = abs(slopes[1] - 2.0) <= 0.2 and abs(slopes[2] - 3.0) <= 0.2 and rho_fit.rho2_relative_error < 0.01
        return CriterionResult("series_orders", passed, metrics)

    def _equilateral_seed(self):
        sys = self.triangle
        s0 = regular_polygon(sys)
        eta = eta_nonplanar(s0, sys, self.tol)
        return sys, EquilibriumPoint(s0, -1.0), eta

    def first_order_scattering(self) -> CriterionResult:
        sys, p, eta = self._equilateral_seed()
        tol = self.tol.with_seed_scale(min(self.tol.seed_scale, 1e-4))
        xi, h = -p.s0, p.energy
        errors = []
        for rho1 in (1e-3, 5e-4, 2.5e-4):
            res = scattering_map(ManifoldParams(p, 2.0 * eta, rho1), tol, sys)
            predicted = delta_A(xi, h, eta, rho1 / 2.0, sys, tol)
            errors.append(mass_norm(res.A_future - res.A_past - predicted, sys))
        ratios = [errors[0] / errors[1], errors[1] / errors[2]]
        quad = mass_norm(delta_A(xi, h, eta, 1.0, sys, tol) - delta_A_planar(xi, h, 1.0, sys), sys)
        variational = mass_norm(
            delta_A_variational(xi, h, eta, 1e-3, tol, sys) - delta_A(xi, h, eta, 1e-3, sys, tol), sys
        )
        metrics = {"errors": errors, "ratios": ratios, "quadrature_vs_planar": quad, "variational": variational}
        passed = all(3.0 <= r <= 5.0 for r in ratios) and quad < 1e-9 and variational < 1e-8
        return CriterionResult("first_order_scattering", passed, metrics)

    def kernel_lemma(self) -> CriterionResult:
        rng = np.random.default_rng(self.rng_seed + 2)
        dims, gaps, residuals, form_errors = [], [], [], []
        negative_forms = 0
        count = int(self.sizes["kernel_configurations"])
        for k in range(count):
            sys = MassSystem(tuple(rng.uniform(0.5, 2.0, size=3 + k % 2)), d=2)
            xi = random_unit_configuration(sys, rng, planar=True, min_distance=0.2)
            report = dbar_kernel(xi, sys, self.tol.svd_threshold)
            if report.collinear:
                continue
            dims.append(report.dimension)
            gaps.append(report.gap)
            residuals.append(report.printed_residual)
            # forme quadratique M D̄ positive, comparée à sa forme close
            beta = rng.normal(size=sys.size)
            form = dbar_quadratic_form(beta, xi, sys)
            D = build_dbar(xi, None, sys, method="planar")
            reference = float(beta @ (sys.mass_vector * (D @ beta)))
            form_errors.append(abs(form - reference) / max(abs(reference), 1e-300))
            negative_forms += form < 0.0
        line = MassSystem((1.0, 1.0, 1.0), d=2)
        collinear = dbar_kernel(line.remove_center_of_mass(np.array([-1.0, 0.0, 0.0, 0.0, 1.0, 0.0])), line)
        metrics = {
            "dimensions": dims,
            "min_gap": float(min(gaps)) if gaps else None,
            "max_residual": float(max(residuals)) if residuals else None,
            "max_quadratic_form_error": float(max(form_errors)) if form_errors else None,
            "negative_quadratic_forms": int(negative_forms),
            "collinear_flagged": collinear.collinear,
            "collinear_dimension": collinear.dimension,
        }
        passed = (
            bool(dims)
            and all(d == 3 for d in dims)
            and min(gaps) >= 1e6
            and max(residuals) < 1e-9
            and max(form_errors) < 1e-10
            and negative_forms == 0
            and collinear.collinear
        )
        return CriterionResult("kernel_lemma", passed, metrics)

    def image_rank(self) -> CriterionResult:
        sys, p, eta = self._equilateral_seed()
        jac = image_jacobian(p, eta, 1e-3, self.tol, sys)
        metrics = jac.report.to_dict()
        return CriterionResult("image_rank", jac.report.full, metrics)

    def relation_symmetries(self) -> CriterionResult:
        tol = self.tol.with_seed_scale(min(self.tol.seed_scale, 1e-4))
        threshold = float(self.sizes["relation_threshold"])
        metrics = {}
        passed = True
        families = []
        for k in range(int(self.sizes["relation_kepler"])):
            orb = KeplerOrbit(2.0, 2.0, 2.0, 2.0 + 0.5 * k)
            families.append(("kepler", orb.mass_system(), [kepler_scattering(orb).past_params()]))
        sys, p, eta = self._equilateral_seed()
        count = int(self.sizes["relation_near_infinity"])
        near = [ManifoldParams(p, 2.0 * eta, 2e-3 * (k + 1)) for k in range(count)]
        families.append(("near_infinity", sys, near))
        for label, fam_sys, seeds in families:
            report = check_relation_properties(seeds, tol, fam_sys, threshold=threshold, rng_seed=self.rng_seed)
            metrics[label] = report.to_dict()
            passed = passed and report.passed
        return CriterionResult("relation_symmetries", passed, metrics)

    def near_infinity_continuity(self) -> CriterionResult:
        sys, p, eta = self._equilateral_seed()
        scales = [float(s) for s in self.sizes["continuity_scales"]]
        dispersions, max_rho, max_U = [], [], []
        for scale in scales:
            results = sweep_image(p, eta, [scale, scale / 2.0], [-0.1, 0.0, 0.1], self.tol, sys)
            dispersions.append(sweep_dispersion(results, sys))
            max_rho.append(max(r.diagnostics.get("max_rho", np.nan) for r in results))
            max_U.append(max(r.diagnostics.get("max_shape_potential", np.nan) for r in results))
        contraction = all(
            dispersions[k + 1] <= 1.5 * dispersions[k] * scales[k + 1] / scales[k] for k in range(len(scales) - 1)
        )
        recorded = all(np.isfinite(max_rho)) and all(np.isfinite(max_U))
        metrics = {"scales": scales, "dispersions": dispersions, "max_rho": max_rho, "max_shape_potential": max_U}
        return CriterionResult("near_infinity_continuity", contraction and recorded, metrics)
