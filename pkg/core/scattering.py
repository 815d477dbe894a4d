"""
Application de diffusion hyperbolique et outils associés

Paramètres d'orbite et leurs classes de rayons, diffusion à l'infini et près de
l'infini, formule de diffusion au premier ordre ΔA, hessienne intégrée D̄ et analyse
de son noyau, construction de η pour les configurations non planes, vérification des
symétries de la relation de diffusion et balayages parallèles de l'image.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import lstsq, svd
from scipy.stats import ortho_group

from config.constants import (
    PATH_SAMPLES,
    RICHARDSON_LEVELS,
    STATUS_FAILED,
    STATUS_OK,
    STATUS_SINGULAR,
    STATUS_UNDETERMINED,
    TAU_BUDGET_FACTOR,
)
from config.tolerances import ToleranceSet
from .blowup import (
    BlowupState,
    EquilibriumPoint,
    ManifoldParams,
    blowup_energy,
    check_frame,
    dilate_params,
    linear_model_flow,
    parity_params,
    rotate_params,
    seed_state,
    seed_time,
    shape_terms,
)
from .chazy import ChazyParameters, chazy_from_manifold, extract_manifold_params, tau_t_relation, time_reverse_params
from .errors import (
    CollisionError,
    ConstraintError,
    ConvergenceError,
    OrbitParameterError,
    PlanarityError,
    ScatteringLabError,
)
from .integrator import VariationalState, detect_equilibrium, integrate, integrate_variational
from .nbody import (
    MassSystem,
    check_collision,
    grad_potential,
    hessian_blocks,
    is_planar,
    mass_inner,
    mass_norm,
    min_pair_distance,
    normalize,
    orthonormal_complement,
    perp,
    potential,
)

logger = logging.getLogger(__name__)

RELATION_PROPERTIES = (
    "energy",
    "reflexivity",
    "time_symmetry",
    "dilation",
    "rotation",
    "reversibility",
    "ftft",
)


@dataclass(frozen=True)
class OrbitParameter:
    """
    Représentant normalisé de la classe de rayons [γ]

    Si rho1 > 0, rho1 = 1 et shifted_s1 est le paramètre de Chazy C;
    sinon shifted_s1 est unitaire (bord de la variété à l'infini).
    """

    rho1: float
    shifted_s1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shifted_s1", np.asarray(self.shifted_s1, dtype=float))

    @property
    def on_boundary(self) -> bool:
        return self.rho1 == 0.0

    def distance(self, other: "OrbitParameter", sys: MassSystem) -> float:
        """Écart relatif entre deux paramètres; infini s'ils ne sont pas du même type"""
        if self.on_boundary != other.on_boundary:
            return float("inf")
        diff = mass_norm(self.shifted_s1 - other.shifted_s1, sys)
        return diff / max(1.0, mass_norm(other.shifted_s1, sys))

    def to_dict(self) -> dict:
        return {"rho1": self.rho1, "shifted_s1": self.shifted_s1.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "OrbitParameter":
        return cls(float(data["rho1"]), np.array(data["shifted_s1"]))


@dataclass(frozen=True)
class ScatteringResult:
    """
    Données passées et futures d'une orbite bi-hyperbolique

    Pour un statut autre que "ok", les champs futurs valent None et message décrit l'échec.
    """

    status: str
    energy: float
    past: ManifoldParams
    past_parameter: Optional[OrbitParameter] = None
    future: Optional[ManifoldParams] = None
    future_parameter: Optional[OrbitParameter] = None
    past_chazy: Optional[ChazyParameters] = None
    future_chazy: Optional[ChazyParameters] = None
    diagnostics: Dict[str, float] = field(default_factory=dict)
    message: str = ""
    index: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    @property
    def A_past(self) -> np.ndarray:
        return self.past.eq.chazy_A()

    @property
    def A_future(self) -> Optional[np.ndarray]:
        return None if self.future is None else self.future.eq.chazy_A()

    def with_index(self, index: int) -> "ScatteringResult":
        return replace(self, index=index)

    def to_dict(self) -> dict:
        def opt(value):
            return None if value is None else value.to_dict()

        return {
            "index": self.index,
            "status": self.status,
            "message": self.message,
            "energy": self.energy,
            "past": self.past.to_dict(),
            "past_parameter": opt(self.past_parameter),
            "future": opt(self.future),
            "future_parameter": opt(self.future_parameter),
            "past_chazy": opt(self.past_chazy),
            "future_chazy": opt(self.future_chazy),
            "A_past": self.A_past.tolist(),
            "A_future": None if self.future is None else self.A_future.tolist(),
            "diagnostics": dict(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScatteringResult":
        def opt(kind, value):
            return None if value is None else kind.from_dict(value)

        return cls(
            status=data["status"],
            energy=float(data["energy"]),
            past=ManifoldParams.from_dict(data["past"]),
            past_parameter=opt(OrbitParameter, data.get("past_parameter")),
            future=opt(ManifoldParams, data.get("future")),
            future_parameter=opt(OrbitParameter, data.get("future_parameter")),
            past_chazy=opt(ChazyParameters, data.get("past_chazy")),
            future_chazy=opt(ChazyParameters, data.get("future_chazy")),
            diagnostics=dict(data.get("diagnostics", {})),
            message=data.get("message", ""),
            index=data.get("index"),
        )


def orbit_parameter(mp: ManifoldParams, sys: MassSystem) -> OrbitParameter:
    """
    Paramètre d'orbite γ = (rho1, s1 - (rho1 log(rho1 |v0|)/v0²) ∇̃U(s0)) normalisé

    Invariant le long du flot linéaire du modèle.

    Raises:
        OrbitParameterError: si (rho1, s1) = (0, 0)
    """
    if mp.rho1 == 0.0:
        norm = mass_norm(mp.s1, sys)
        if norm == 0.0:
            raise OrbitParameterError("paramètre d'orbite nul: orbite constante")
        return OrbitParameter(0.0, mp.s1 / norm)
    _, _, tilde = shape_terms(mp.s0, sys)
    shifted = mp.s1 - mp.rho1 * np.log(mp.rho1 * abs(mp.v0)) / mp.v0**2 * tilde
    return OrbitParameter(1.0, shifted / mp.rho1)


def great_circle(xi: np.ndarray, eta: np.ndarray, theta: float) -> np.ndarray:
    return xi * np.sin(theta) + eta * np.cos(theta)


def _path_survey(xi: np.ndarray, eta: np.ndarray, sys: MassSystem, threshold: float,
                 samples: int = PATH_SAMPLES):
    """
    Distance mutuelle minimale et potentiel maximal le long du demi-cercle -ξ -> η -> ξ

    Raises:
        CollisionError: si le chemin passe sous le seuil de collision
    """
    min_dist, max_U = np.inf, 0.0
    for theta in np.linspace(-np.pi / 2, np.pi / 2, samples):
        s = great_circle(xi, eta, theta)
        dist, pair = min_pair_distance(s, sys)
        min_dist = min(min_dist, dist)
        if dist <= threshold:
            raise CollisionError(pair, dist)
        max_U = max(max_U, potential(s, sys, threshold))
    return min_dist, max_U


def shape_potential_bound(s0: np.ndarray, eta: np.ndarray, sys: MassSystem,
                          tol: Optional[ToleranceSet] = None) -> float:
    """K(s0): maximum de U sur le grand cercle passant par s0 dans la direction η"""
    tol = tol or ToleranceSet()
    return _path_survey(-np.asarray(s0, dtype=float), eta, sys, tol.collision)[1]


def _on_energy_surface(x: BlowupState, h: float, sys: MassSystem) -> BlowupState:
    """Ajuste v pour que ½v² + ½‖w‖² - rho U(s) = h, signe de v conservé"""
    U = potential(x.s, sys) if x.rho > 0 else 0.0
    v2 = 2.0 * h + 2.0 * x.rho * U - mass_inner(x.w, x.w, sys)
    if v2 <= 0:
        raise ConstraintError("graine incompatible avec l'énergie demandée")
    return replace(x, v=float(np.sign(x.v) * np.sqrt(v2)))


def _single_level(mp: ManifoldParams, seed_scale: float, tol: ToleranceSet, sys: MassSystem,
                  budget_factor: float):
    """Graine à l'échelle donnée, intégration jusqu'à l'équilibre futur, extraction"""
    tau_s = seed_time(mp, seed_scale, sys)
    local = linear_model_flow(mp, tau_s, sys)
    x0 = seed_state(local, sys, seed_bound=seed_scale, frame_tol=tol.frame)
    x0 = _on_energy_surface(x0, mp.eq.energy, sys)
    t0 = tau_t_relation(mp, tau_s, sys) if mp.rho1 > 0 else 0.0
    budget = budget_factor / abs(mp.v0)
    traj = integrate(x0, (tau_s, tau_s + budget), tol, sys, stop_at_equilibrium=True, t0=t0)
    eq = detect_equilibrium(traj, tol)
    if eq is None or eq.v0 < 0:
        raise ConvergenceError("l'orbite ne converge pas vers un équilibre futur", traj)
    return extract_manifold_params(traj, eq, sys, tol), traj, tau_s


def _extrapolate(values: np.ndarray, u: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """
    Valeur limite en u -> 0 d'estimations de la forme F + u (a + b τ + c τ²)

    Les colonnes (1, u, uτ, uτ²) sont tronquées au nombre de niveaux.
    """
    columns = [np.ones_like(u), u, u * tau, u * tau**2][: len(u)]
    design = np.column_stack(columns)
    scale = np.max(np.abs(design), axis=0)
    scale[scale == 0.0] = 1.0
    coef, _, _, _ = lstsq(design / scale, values)
    return coef[0] / scale[0]


def scattering_map(past: ManifoldParams, tol: ToleranceSet, sys: MassSystem,
                   levels: int = RICHARDSON_LEVELS,
                   budget_factor: float = TAU_BUDGET_FACTOR) -> ScatteringResult:
    """
    Application de diffusion F: paramètres passés -> paramètres futurs

    L'orbite est amorcée sur la variété instable de l'équilibre passé à plusieurs échelles
    de graine (seed_scale / 2^k), intégrée jusqu'à la convergence vers un équilibre futur,
    puis les paramètres futurs extraits sont extrapolés vers une graine nulle.

    Args:
        past: Paramètres de variété passés, v0 < 0
        tol: Tolérances (dont seed_scale)
        sys: Système de masses
        levels: Nombre d'échelles de graine
        budget_factor: Budget en τ, en unités de 1/√(2h)

    Returns:
        ScatteringResult de statut "ok"

    Raises:
        ConstraintError: v0 >= 0 ou s1 non orthogonal à s0
        OrbitParameterError: (rho1, s1) = (0, 0)
        CollisionError: l'orbite rencontre une collision
        ConvergenceError: pas de convergence dans le budget (orbite non bi-hyperbolique ?)
    """
    if past.v0 >= 0:
        raise ConstraintError("l'équilibre passé doit avoir v0 < 0")
    past.check(sys, tol.frame)
    past_parameter = orbit_parameter(past, sys)
    if levels < 1:
        raise ValueError("au moins un niveau de graine est requis")

    estimates, u_levels, tau_levels, trajectories = [], [], [], []
    for k in range(levels):
        scale = tol.seed_scale / 2**k
        fut, traj, tau_s = _single_level(past, scale, tol, sys, budget_factor)
        estimates.append(np.concatenate((fut.s0, fut.s1, [fut.rho1])))
        u_levels.append(np.exp(-past.v0 * tau_s))
        tau_levels.append(tau_s)
        trajectories.append(traj)
        logger.debug("Niveau %d: graine %.2e, τ = %.4f, rho1' = %.12g", k, scale, tau_s, fut.rho1)

    nd = sys.size
    limit = _extrapolate(np.array(estimates), np.array(u_levels), np.array(tau_levels))
    s0 = normalize(limit[:nd], sys)
    s1 = limit[nd:2 * nd] - mass_inner(s0, limit[nd:2 * nd], sys) * s0
    rho1 = max(float(limit[-1]), 0.0) if past.rho1 > 0 else 0.0
    future = ManifoldParams(EquilibriumPoint(s0, -past.v0), s1, rho1)

    diagnostics = {
        "min_pair_distance": min(t.min_pair_distance() for t in trajectories),
        "max_rho": max(t.max_rho() for t in trajectories),
        "max_shape_potential": max(t.max_shape_potential() for t in trajectories),
        "energy_drift": max(t.energy_drift for t in trajectories),
        "levels": levels,
        "seed_scale": tol.seed_scale,
    }
    result = ScatteringResult(
        status=STATUS_OK,
        energy=past.eq.energy,
        past=past,
        past_parameter=past_parameter,
        future=future,
        future_parameter=orbit_parameter(future, sys),
        past_chazy=chazy_from_manifold(past, sys) if past.rho1 > 0 else None,
        future_chazy=chazy_from_manifold(future, sys) if rho1 > 0 else None,
        diagnostics=diagnostics,
    )
    logger.info("Diffusion calculée: rho1 = %.6g -> %.6g", past.rho1, rho1)
    return result


def scattering_record(past: ManifoldParams, tol: ToleranceSet, sys: MassSystem,
                      levels: int = RICHARDSON_LEVELS, budget_factor: float = TAU_BUDGET_FACTOR,
                      index: Optional[int] = None) -> ScatteringResult:
    """
    Comme scattering_map, mais les échecs deviennent des statuts

    "singular" pour une collision, "undetermined" sans convergence, "failed" sinon.
    """
    try:
        return scattering_map(past, tol, sys, levels, budget_factor).with_index(index)
    except CollisionError as err:
        status = STATUS_SINGULAR
        message = str(err)
    except ConvergenceError as err:
        status = STATUS_UNDETERMINED
        message = str(err)
    except ScatteringLabError as err:
        status = STATUS_FAILED
        message = f"{type(err).__name__}: {err}"
    logger.warning("Diffusion %s: %s", status, message)
    return ScatteringResult(status=status, energy=past.eq.energy, past=past, message=message, index=index)


def scattering_from_state(x0: BlowupState, tol: ToleranceSet, sys: MassSystem,
                          budget_factor: float = TAU_BUDGET_FACTOR) -> ScatteringResult:
    """
    Diffusion d'une orbite donnée par un état à distance finie (rho > 0)

    L'état est intégré vers le passé et vers le futur jusqu'aux équilibres, puis les
    paramètres de variété sont extraits aux deux extrémités.

    Raises:
        ConstraintError: rho = 0 ou énergie non positive
        CollisionError: l'orbite rencontre une collision
        ConvergenceError: une des deux branches ne converge pas dans le budget
    """
    if x0.rho <= 0:
        raise ConstraintError("état à distance finie requis (rho > 0)")
    h = blowup_energy(x0, sys, tol.collision)
    if h <= 0:
        raise ConstraintError(f"énergie h = {h:.6g} non positive")
    budget = budget_factor / np.sqrt(2.0 * h)
    ends = {}
    for label, sign in (("past", -1.0), ("future", 1.0)):
        traj = integrate(x0, (0.0, sign * budget), tol, sys, stop_at_equilibrium=True)
        eq = detect_equilibrium(traj, tol)
        if eq is None or np.sign(eq.v0) != sign:
            raise ConvergenceError(f"branche {label}: pas d'équilibre hyperbolique atteint", traj)
        ends[label] = (extract_manifold_params(traj, eq, sys, tol), traj)

    past, past_traj = ends["past"]
    future, future_traj = ends["future"]
    trajectories = (past_traj, future_traj)
    return ScatteringResult(
        status=STATUS_OK,
        energy=h,
        past=past,
        past_parameter=orbit_parameter(past, sys),
        future=future,
        future_parameter=orbit_parameter(future, sys),
        past_chazy=chazy_from_manifold(past, sys) if past.rho1 > 0 else None,
        future_chazy=chazy_from_manifold(future, sys) if future.rho1 > 0 else None,
        diagnostics={
            "min_pair_distance": min(t.min_pair_distance() for t in trajectories),
            "max_rho": max(t.max_rho() for t in trajectories),
            "max_shape_potential": max(t.max_shape_potential() for t in trajectories),
            "energy_drift": max(t.energy_drift for t in trajectories),
        },
    )


def infinity_scattering(p: EquilibriumPoint, eta: np.ndarray, sys: MassSystem,
                        tol: Optional[ToleranceSet] = None) -> ScatteringResult:
    """
    Diffusion le long d'une orbite de la variété à l'infini, sous forme close

    L'orbite suit le grand cercle de -ξ à ξ = -s0 par η; s1 passé et futur valent 2η,
    l'équilibre futur est (-s0, -v0) et A est inchangé.

    Raises:
        ConstraintError: v0 >= 0 ou (s0, η) non orthonormé
        CollisionError: grand cercle singulier
    """
    tol = tol or ToleranceSet()
    if p.v0 >= 0:
        raise ConstraintError("l'équilibre passé doit avoir v0 < 0")
    eta = sys.check(eta)
    xi = -p.s0
    check_frame(xi, eta, sys, tol.frame)
    min_dist, max_U = _path_survey(xi, eta, sys, tol.collision)
    past = ManifoldParams(p, 2.0 * eta, 0.0)
    future = ManifoldParams(EquilibriumPoint(xi.copy(), -p.v0), 2.0 * eta, 0.0)
    parameter = OrbitParameter(0.0, eta.copy())
    return ScatteringResult(
        status=STATUS_OK,
        energy=p.energy,
        past=past,
        past_parameter=parameter,
        future=future,
        future_parameter=parameter,
        diagnostics={
            "min_pair_distance": min_dist,
            "max_rho": 0.0,
            "max_shape_potential": max_U,
            "energy_drift": 0.0,
        },
    )


def delta_A(xi: np.ndarray, h: float, eta: np.ndarray, drho0: float, sys: MassSystem,
            tol: Optional[ToleranceSet] = None) -> np.ndarray:
    """
    Variation de A au premier ordre: (δrho(0)/√(2h)) ∫ ∇U(ξ sin θ + η cos θ) dθ sur [-π/2, π/2]

    Raises:
        ConstraintError: repère non orthonormé
        CollisionError: le chemin passe trop près d'une collision
    """
    tol = tol or ToleranceSet()
    xi, eta = sys.check(xi), sys.check(eta)
    if drho0 == 0.0:
        return np.zeros(sys.size)
    check_frame(xi, eta, sys, tol.frame)
    integral, error = quad_vec(
        lambda theta: grad_potential(great_circle(xi, eta, theta), sys, tol.collision),
        -np.pi / 2,
        np.pi / 2,
        epsabs=tol.quadrature,
        epsrel=0.0,
    )
    logger.debug("Quadrature de ΔA: erreur estimée %.2e", error)
    return drho0 / np.sqrt(2.0 * h) * integral


def delta_A_planar(xi: np.ndarray, h: float, drho0: float, sys: MassSystem) -> np.ndarray:
    """
    Forme close (2 δrho(0)/√(2h)) ∇U(ξ)^⊥ pour ξ plan et η = ξ^⊥

    Raises:
        PlanarityError: si ξ n'est pas plan
    """
    if not is_planar(xi, sys):
        raise PlanarityError("ΔA plan: configuration non plane")
    return 2.0 * drho0 / np.sqrt(2.0 * h) * perp(grad_potential(xi, sys), sys)


def delta_A_variational(xi: np.ndarray, h: float, eta: np.ndarray, drho0: float, tol: ToleranceSet,
                        sys: MassSystem, span_factor: float = 25.0) -> np.ndarray:
    """
    ΔA par intégration des équations variationnelles le long de l'orbite à l'infini

    La perturbation (δrho(0), 0, 0, 0) est propagée de τ = 0 vers ±span_factor/√(2h) et
    la variation de A = v s + w est prise entre les deux extrémités.
    """
    xi, eta = sys.check(xi), sys.check(eta)
    omega = np.sqrt(2.0 * h)
    base = BlowupState(0.0, eta.copy(), 0.0, omega * xi)
    delta = np.zeros(2 + 2 * sys.size)
    delta[0] = drho0
    start = VariationalState(base, delta, 0.0)
    forward = integrate_variational(start, (0.0, span_factor / omega), tol, sys)[-1]
    backward = integrate_variational(start, (0.0, -span_factor / omega), tol, sys)[-1]
    return forward.delta_chazy_velocity(sys) - backward.delta_chazy_velocity(sys)


def _planar_dbar(xi: np.ndarray, sys: MassSystem) -> np.ndarray:
    """D̄ pour ξ plan et η = ξ^⊥: blocs -2(m_j/r³) v vᵀ dans le plan, +2(m_j/r³) I ailleurs"""
    X = sys.blocks(xi)
    n, d = sys.n, sys.d
    blocks = np.zeros((n, n, d, d))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            diff = X[i, :2] - X[j, :2]
            r = np.linalg.norm(diff)
            u = diff / r
            v = np.array([-u[1], u[0]])
            coef = sys.masses[j] / r**3
            blocks[i, j, :2, :2] = -2.0 * coef * np.outer(v, v)
            if d > 2:
                blocks[i, j, 2:, 2:] = 2.0 * coef * np.eye(d - 2)
        blocks[i, i] = -blocks[i].sum(axis=0)
    return blocks.transpose(0, 2, 1, 3).reshape(n * d, n * d)


def build_dbar(xi: np.ndarray, eta: Optional[np.ndarray], sys: MassSystem,
               tol: Optional[ToleranceSet] = None, method: str = "quadrature") -> np.ndarray:
    """
    Hessienne intégrée D̄ = ∫ D∇U(ξ sin θ + η cos θ) cos θ dθ sur [-π/2, π/2]

    Args:
        method: "quadrature" (η quelconque) ou "planar" (forme close, η = ξ^⊥)

    Raises:
        PlanarityError: méthode "planar" avec ξ non plan
        CollisionError: chemin singulier
    """
    tol = tol or ToleranceSet()
    xi = sys.check(xi)
    if method == "planar":
        if not is_planar(xi, sys):
            raise PlanarityError("forme close de D̄: configuration non plane")
        check_collision(xi, sys, tol.collision)
        return _planar_dbar(xi, sys)
    if method != "quadrature":
        raise ValueError(f"méthode inconnue: {method}")
    eta = sys.check(eta)
    check_frame(xi, eta, sys, tol.frame)
    integral, _ = quad_vec(
        lambda theta: hessian_blocks(great_circle(xi, eta, theta), sys, tol.collision).ravel() * np.cos(theta),
        -np.pi / 2,
        np.pi / 2,
        epsabs=tol.quadrature,
        epsrel=0.0,
    )
    return integral.reshape(sys.size, sys.size)


def dbar_quadratic_form(beta: np.ndarray, xi: np.ndarray, sys: MassSystem) -> float:
    """2 Σ_{i<j} (m_i m_j / r_ij³)(β_ij · v_ij)², égal à βᵀ M D̄ β pour ξ plan"""
    X = sys.blocks(xi)
    B = sys.blocks(beta)
    total = 0.0
    for i in range(sys.n):
        for j in range(i + 1, sys.n):
            diff = X[i, :2] - X[j, :2]
            r = np.linalg.norm(diff)
            v = np.array([-diff[1], diff[0]]) / r
            total += 2.0 * sys.masses[i] * sys.masses[j] / r**3 * float(np.dot(B[i, :2] - B[j, :2], v)) ** 2
    return total


@dataclass(frozen=True)
class KernelReport:
    dimension: int
    basis: np.ndarray
    singular_values: np.ndarray
    gap: float
    collinear: bool
    printed_residual: float

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "singular_values": self.singular_values.tolist(),
            "gap": self.gap,
            "collinear": self.collinear,
            "printed_residual": self.printed_residual,
        }


def _rank_split(singular_values: np.ndarray, threshold: float):
    """Rang numérique au seuil relatif et écart entre valeurs retenues et écartées"""
    if singular_values.size == 0 or singular_values[0] == 0.0:
        return 0, float("inf")
    rank = int(np.sum(singular_values > threshold * singular_values[0]))
    if rank == singular_values.size:
        return rank, float("inf")
    dropped = singular_values[rank]
    gap = float("inf") if dropped == 0.0 else float(singular_values[rank - 1] / dropped)
    return rank, gap


def _is_collinear(xi: np.ndarray, sys: MassSystem, tol: float = 1e-10) -> bool:
    X = sys.blocks(xi)
    centered = X - X.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return bool(sv.size < 2 or sv[1] <= tol * max(sv[0], 1.0))


def dbar_kernel(xi: np.ndarray, sys: MassSystem, svd_threshold: Optional[float] = None) -> KernelReport:
    """
    Noyau numérique de D̄ (forme close plane) par décomposition en valeurs singulières

    Pour ξ plan non colinéaire le noyau est engendré par ξ et les deux translations;
    une configuration colinéaire est signalée, sans assertion sur la dimension.
    """
    if sys.d != 2:
        raise PlanarityError("analyse du noyau définie en dimension d'espace 2")
    threshold = ToleranceSet().svd_threshold if svd_threshold is None else svd_threshold
    D = build_dbar(xi, None, sys, method="planar")
    _, s, vh = svd(D)
    rank, gap = _rank_split(s, threshold)
    basis = vh[rank:]
    printed = [sys.check(xi), np.tile([1.0, 0.0], sys.n), np.tile([0.0, 1.0], sys.n)]
    scale = max(s[0], 1.0)
    residual = max(np.linalg.norm(D @ k) / (np.linalg.norm(k) * scale) for k in printed)
    collinear = _is_collinear(xi, sys)
    if collinear:
        logger.warning("Configuration colinéaire: noyau de D̄ de dimension %d", len(basis))
    return KernelReport(len(basis), basis, s, gap, collinear, float(residual))


@dataclass(frozen=True)
class RankReport:
    rank: int
    expected: int
    singular_values: np.ndarray
    gap: float

    @property
    def full(self) -> bool:
        return self.rank == self.expected

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "expected": self.expected,
            "singular_values": self.singular_values.tolist(),
            "gap": self.gap,
        }


def restricted_rank(xi: np.ndarray, sys: MassSystem, eta: Optional[np.ndarray] = None,
                    svd_threshold: Optional[float] = None) -> RankReport:
    """
    Rang de D̄ sur V = {centre de masse nul} ∩ {⊥ ξ}, écrit comme D̄η et D̄ sur V ∩ {⊥ η}

    Le rang attendu est D - 1 pour ξ plan non colinéaire.
    """
    threshold = ToleranceSet().svd_threshold if svd_threshold is None else svd_threshold
    xi = sys.check(xi)
    eta = perp(xi, sys) if eta is None else sys.check(eta)
    D = build_dbar(xi, None, sys, method="planar")
    tangent = orthonormal_complement([xi, eta], sys)
    columns = np.column_stack([D @ eta] + [D @ b for b in tangent])
    s = svd(columns, compute_uv=False)
    rank, gap = _rank_split(s, threshold)
    return RankReport(rank, sys.reduced_dimension - 1, s, gap)


def eta_nonplanar(s0: np.ndarray, sys: MassSystem, tol: Optional[ToleranceSet] = None) -> np.ndarray:
    """
    Direction η: projection de -s0 sur R² x 0, rotation de 90° dans ce plan, normalisation

    Raises:
        PlanarityError: toutes les projections sont nulles
        CollisionError: le grand cercle obtenu est singulier
    """
    tol = tol or ToleranceSet()
    s0 = sys.check(s0)
    rotated = perp(-s0, sys)
    if mass_norm(rotated, sys) <= 1e-14:
        raise PlanarityError("projections nulles sur le plan des deux premières coordonnées")
    eta = normalize(rotated, sys)
    _path_survey(-s0, eta, sys, tol.collision)
    return eta


def filter_near_infinity(results: Sequence[ScatteringResult], R: float,
                         K: Optional[float] = None) -> List[ScatteringResult]:
    """
    Orbites de Z(R) (rho < 1/R tout le long), ou de Z(R, K) avec de plus U(s) <= K
    """
    kept = []
    for res in results:
        if not res.ok:
            continue
        if res.diagnostics.get("max_rho", np.inf) >= 1.0 / R:
            continue
        if K is not None and res.diagnostics.get("max_shape_potential", np.inf) > K:
            continue
        kept.append(res)
    return kept


def restrict_to_unit_energy(mp: ManifoldParams):
    """
    Ramène mp à l'énergie ½ par dilatation

    Returns:
        (paramètres à |v0| = 1, facteur λ utilisé)
    """
    lam = mp.v0**2
    return dilate_params(mp, lam), lam


def expand_from_unit_energy(mp: ManifoldParams, h: float) -> ManifoldParams:
    if abs(abs(mp.v0) - 1.0) > 1e-12:
        raise ConstraintError("paramètres attendus à l'énergie ½")
    return dilate_params(mp, 1.0 / (2.0 * h))


def _slice_seed(p: EquilibriumPoint, eta: np.ndarray, tangent: np.ndarray, log_rho1: float,
                coefficients: np.ndarray, sys: MassSystem) -> ManifoldParams:
    direction = normalize(eta + np.asarray(coefficients, dtype=float) @ tangent, sys)
    return ManifoldParams(p, 2.0 * direction, float(np.exp(log_rho1)))


@dataclass(frozen=True)
class ImageJacobian:
    matrix: np.ndarray
    report: RankReport

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), **self.report.to_dict()}


def image_jacobian(p: EquilibriumPoint, eta: np.ndarray, rho1: float, tol: ToleranceSet, sys: MassSystem,
                   step: float = 0.05, levels: int = 1) -> ImageJacobian:
    """
    Jacobienne de A' par rapport à (log rho1, directions tangentes de η dans V(s0))

    Différences centrées aux pas step et step/2 combinées par extrapolation de Richardson.
    Le rang plein attendu vaut D - 1.
    """
    if rho1 <= 0:
        raise OrbitParameterError("rho1 > 0 requis pour la jacobienne de l'image")
    eta = sys.check(eta)
    tangent = orthonormal_complement([p.s0, eta], sys)
    dim = 1 + len(tangent)
    x0 = np.concatenate(([np.log(rho1)], np.zeros(len(tangent))))

    def image(x):
        mp = _slice_seed(p, eta, tangent, x[0], x[1:], sys)
        return scattering_map(mp, tol, sys, levels=levels).A_future

    def central(h):
        cols = []
        for k in range(dim):
            e = np.zeros(dim)
            e[k] = h
            cols.append((image(x0 + e) - image(x0 - e)) / (2.0 * h))
        return np.column_stack(cols)

    J = (4.0 * central(step / 2.0) - central(step)) / 3.0
    s = svd(J, compute_uv=False)
    rank, gap = _rank_split(s, tol.svd_threshold)
    logger.info("Jacobienne de l'image: rang %d sur %d", rank, dim)
    return ImageJacobian(J, RankReport(rank, sys.reduced_dimension - 1, s, gap))


def sweep_seeds(p: EquilibriumPoint, eta: np.ndarray, rho1_values: Sequence[float],
                s1_offsets: Sequence, sys: MassSystem) -> List[ManifoldParams]:
    """
    Grille de graines (rho1, s1 = 2 normalize(η + décalage)) dans l'ordre rho1 puis décalage

    Un décalage scalaire agit selon la première direction tangente de η dans V(s0), un
    décalage vectoriel donne les coefficients dans toute la base tangente.
    """
    eta = sys.check(eta)
    tangent = orthonormal_complement([p.s0, eta], sys)
    seeds = []
    for rho1 in rho1_values:
        for offset in s1_offsets:
            coefficients = np.zeros(len(tangent))
            if np.ndim(offset) == 0:
                coefficients[0] = float(offset)
            else:
                coefficients[:] = np.asarray(offset, dtype=float)
            direction = normalize(eta + coefficients @ tangent, sys)
            seeds.append(ManifoldParams(p, 2.0 * direction, float(rho1)))
    return seeds


def _sweep_task(args) -> ScatteringResult:
    index, mp, tol, sys, levels, budget_factor = args
    return scattering_record(mp, tol, sys, levels, budget_factor, index=index)


def sweep_image(p: EquilibriumPoint, eta: np.ndarray, rho1_values: Sequence[float], s1_offsets: Sequence,
                tol: ToleranceSet, sys: MassSystem, workers: int = 1, levels: int = 1,
                budget_factor: float = TAU_BUDGET_FACTOR) -> List[ScatteringResult]:
    """
    Diffusion d'une grille de graines près de -p

    Les échecs sont enregistrés par graine; les résultats sont rendus dans l'ordre de la grille,
    quel que soit le nombre de processus.
    """
    seeds = sweep_seeds(p, eta, rho1_values, s1_offsets, sys)
    tasks = [(k, mp, tol, sys, levels, budget_factor) for k, mp in enumerate(seeds)]
    logger.info("Balayage de %d graines sur %d processus", len(tasks), max(workers, 1))
    if not tasks:
        return []
    if workers <= 1:
        return [_sweep_task(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_task, tasks))


def sweep_dispersion(results: Sequence[ScatteringResult], sys: MassSystem) -> float:
    """max ‖A' - A‖ sur les orbites diffusées avec succès"""
    values = [mass_norm(r.A_future - r.A_past, sys) for r in results if r.ok]
    return float(max(values)) if values else float("nan")


@dataclass
class RelationReport:
    """
    Écarts maximaux par propriété de la relation de diffusion; les échecs sont des données
    """

    threshold: float
    deviations: Dict[str, float] = field(default_factory=lambda: {name: 0.0 for name in RELATION_PROPERTIES})
    failures: List[dict] = field(default_factory=list)
    seeds: int = 0

    @property
    def passed(self) -> bool:
        return not self.failures

    def record(self, index: int, name: str, deviation: float, message: str = "") -> None:
        self.deviations[name] = max(self.deviations[name], deviation)
        if not deviation <= self.threshold:
            self.failures.append({"seed": index, "property": name, "deviation": deviation, "message": message})

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "seeds": self.seeds,
            "passed": self.passed,
            "deviations": dict(self.deviations),
            "failures": list(self.failures),
        }


def _A_distance(a: ManifoldParams, b: ManifoldParams, sys: MassSystem) -> float:
    return mass_norm(a.eq.chazy_A() - b.eq.chazy_A(), sys) / abs(b.v0)


def _params_distance(a: ManifoldParams, b: ManifoldParams, sys: MassSystem) -> float:
    return max(_A_distance(a, b, sys), orbit_parameter(a, sys).distance(orbit_parameter(b, sys), sys))


def _reflexivity_eta(mp: ManifoldParams, sys: MassSystem, tol: ToleranceSet) -> np.ndarray:
    norm = mass_norm(mp.s1, sys)
    if norm > 0:
        try:
            eta = mp.s1 / norm
            _path_survey(-mp.s0, eta, sys, tol.collision)
            return eta
        except CollisionError:
            pass
    return eta_nonplanar(mp.s0, sys, tol)


def check_relation_properties(seeds: Sequence[ManifoldParams], tol: ToleranceSet, sys: MassSystem,
                              threshold: float = 1e-6, dilation: float = 2.0, rng_seed: int = 0,
                              levels: int = RICHARDSON_LEVELS) -> RelationReport:
    """
    Vérifie numériquement les propriétés de la relation de diffusion sur chaque graine

    énergie ‖A‖ = ‖A'‖, réflexivité (orbite à l'infini), symétrie T par ré-intégration
    renversée, équivariance par dilatation et par rotation, réversibilité A' -> A et
    FTFT = Id sur le paramètre d'orbite complet.
    """
    report = RelationReport(threshold)
    rng = np.random.default_rng(rng_seed)

    def F(mp):
        return scattering_map(mp, tol, sys, levels=levels)

    for index, mp in enumerate(seeds):
        report.seeds += 1
        try:
            forward = F(mp)
        except ScatteringLabError as err:
            for name in RELATION_PROPERTIES:
                report.record(index, name, float("inf"), f"{type(err).__name__}: {err}")
            continue
        fut = forward.future
        h = mp.eq.energy

        checks = {
            "energy": lambda: max(
                abs(mass_inner(forward.A_past, forward.A_past, sys) - mass_inner(fut.eq.chazy_A(), fut.eq.chazy_A(), sys))
                / (2.0 * h),
                forward.diagnostics["energy_drift"] / h,
            ),
            "reflexivity": lambda: _A_distance(
                infinity_scattering(mp.eq, _reflexivity_eta(mp, sys, tol), sys, tol).future, forward.past, sys
            ),
        }

        reversed_future = None

        def time_symmetry():
            nonlocal reversed_future
            reversed_future = F(time_reverse_params(fut)).future
            return _A_distance(reversed_future, time_reverse_params(mp), sys)

        def ftft():
            if reversed_future is None:
                time_symmetry()
            target = orbit_parameter(time_reverse_params(mp), sys)
            return orbit_parameter(reversed_future, sys).distance(target, sys)

        def dilation_check():
            scaled = dilate_params(mp, dilation)
            image = F(scaled).future
            # passage par l'énergie ½: F commute avec la dilatation
            unit, _ = restrict_to_unit_energy(fut)
            return _params_distance(image, expand_from_unit_energy(unit, scaled.eq.energy), sys)

        def rotation_check():
            R = ortho_group.rvs(sys.d, random_state=rng)
            image = F(rotate_params(mp, R, sys)).future
            return _params_distance(image, rotate_params(fut, R, sys), sys)

        def reversibility():
            image = F(parity_params(time_reverse_params(fut), sys)).future
            return _A_distance(image, parity_params(time_reverse_params(mp), sys), sys)

        checks.update({
            "time_symmetry": time_symmetry,
            "dilation": dilation_check,
            "rotation": rotation_check,
            "reversibility": reversibility,
            "ftft": ftft,
        })
        for name in RELATION_PROPERTIES:
            try:
                report.record(index, name, float(checks[name]()))
            except ScatteringLabError as err:
                report.record(index, name, float("inf"), f"{type(err).__name__}: {err}")
    logger.info("Propriétés de la relation vérifiées sur %d graines: %d échecs",
                report.seeds, len(report.failures))
    return report
