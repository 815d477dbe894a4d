"""
Paramètres de Chazy (A, B, C) et paramètres de variété (rho1, s1)

Extraction à partir des trajectoires, développements asymptotiques tronqués,
relation entre temps éclaté τ et temps newtonien t, renversement du temps.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import lstsq
from scipy.optimize import least_squares

from config.tolerances import ToleranceSet
from .blowup import EquilibriumPoint, ManifoldParams, shape_terms
from .errors import AsymptoticRegimeError, ExtractionError, FitError, OrbitParameterError
from .integrator import Trajectory
from .nbody import MassSystem, grad_potential, mass_inner, mass_norm

logger = logging.getLogger(__name__)

DIRECTIONS = ("past", "future")


@dataclass(frozen=True)
class ChazyParameters:
    """
    Coefficients de q(t) = A t + B log|t| + C + reste, vers le passé ou le futur
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    direction: str

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction inconnue: {self.direction}")
        for name in ("A", "B", "C"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def energy(self, sys: MassSystem) -> float:
        return 0.5 * mass_inner(self.A, self.A, sys)

    def normalized(self, sys: MassSystem) -> "ChazyParameters":
        """Retire de C sa composante selon A (choix de l'origine des temps)"""
        C = self.C - mass_inner(self.A, self.C, sys) / mass_inner(self.A, self.A, sys) * self.A
        return ChazyParameters(self.A, self.B, C, self.direction)

    def b_relation_error(self, sys: MassSystem, sign: float = 1.0) -> float:
        """
        Écart relatif ‖B - B_attendu‖/‖B‖ avec B_attendu = ∓∇U(A)

        Args:
            sign: Multiplie la convention de signe attendue (-1 pour la tester à l'envers)
        """
        expected = expected_B(self.A, self.direction, sys) * sign
        norm = mass_norm(self.B, sys)
        if norm == 0.0:
            return float("inf")
        return mass_norm(self.B - expected, sys) / norm

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "B": self.B.tolist(), "C": self.C.tolist(), "direction": self.direction}

    @classmethod
    def from_dict(cls, data: dict) -> "ChazyParameters":
        return cls(np.array(data["A"]), np.array(data["B"]), np.array(data["C"]), data["direction"])


@dataclass(frozen=True)
class SeriesOrder:
    """Nombre de termes retenus en u et τu (1 ou 2)"""

    order: int = 2

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("l'ordre du développement doit valoir 1 ou 2")


@dataclass(frozen=True)
class SeriesPrediction:
    rho: float
    s: np.ndarray
    v: float
    r: Optional[float]
    q: Optional[np.ndarray]


@dataclass(frozen=True)
class RhoSeriesFit:
    """Coefficients de rho ≈ rho1 u + rho2 u² + d1 u²τ + d2 u²τ² et la valeur prédite de rho2"""

    rho1: float
    rho2: float
    d1: float
    d2: float
    rho2_predicted: float
    samples: int

    @property
    def rho2_relative_error(self) -> float:
        return abs(self.rho2 - self.rho2_predicted) / abs(self.rho2_predicted)


def expected_B(A: np.ndarray, direction: str, sys: MassSystem) -> np.ndarray:
    """B = -∇U(A) vers le futur, +∇U(A) vers le passé"""
    grad = grad_potential(A, sys)
    return -grad if direction == "future" else grad


def chazy_from_manifold(mp: ManifoldParams, sys: MassSystem) -> ChazyParameters:
    """
    Paramètres de Chazy d'une orbite donnée par ses paramètres de variété

    A = v0 s0, B = ∓∇U(A), C = s1/rho1 - log(rho1 |v0|) ∇̃U(s0)/v0².

    Raises:
        OrbitParameterError: si rho1 = 0 (orbite contenue dans la variété à l'infini)
    """
    if mp.rho1 <= 0:
        raise OrbitParameterError("rho1 = 0: C indéfini, utiliser le paramètre d'orbite")
    direction = mp.eq.direction
    A = mp.eq.chazy_A()
    _, _, tilde = shape_terms(mp.s0, sys)
    C = mp.s1 / mp.rho1 - np.log(mp.rho1 * abs(mp.v0)) / mp.v0**2 * tilde
    return ChazyParameters(A, expected_B(A, direction, sys), C, direction).normalized(sys)


def _asymptotic_window(traj: Trajectory, v0: float, tol: ToleranceSet) -> np.ndarray:
    """Indices de la fenêtre finale où max(rho, ‖w‖/|v0|) reste sous window_max"""
    eps = np.maximum(traj.rho, traj.w_norms() / abs(v0))
    above = np.flatnonzero(eps > tol.window_max)
    start = above[-1] + 1 if len(above) else 0
    idx = np.arange(start, len(traj))
    if len(idx) < tol.min_window_samples:
        raise ExtractionError(
            f"{len(idx)} échantillons dans la fenêtre asymptotique, {tol.min_window_samples} requis"
        )
    return idx


def _check_converged(traj: Trajectory, eq: EquilibriumPoint) -> None:
    if len(traj) == 0 or np.sign(traj.v[-1]) != np.sign(eq.v0):
        raise ExtractionError("la trajectoire ne converge pas vers l'équilibre donné")


def _scaled_lstsq(design: np.ndarray, rhs: np.ndarray, condition_limit: float) -> np.ndarray:
    """
    Moindres carrés après normalisation des colonnes, avec contrôle du conditionnement
    """
    scale = np.max(np.abs(design), axis=0)
    scale[scale == 0.0] = 1.0
    scaled = design / scale
    cond = np.linalg.cond(scaled)
    if not np.isfinite(cond) or cond > condition_limit:
        raise FitError(f"matrice de régression mal conditionnée (cond = {cond:.2e})")
    coef, _, _, _ = lstsq(scaled, rhs)
    return (coef.T / scale).T


def fit_rho_series(traj: Trajectory, eq: EquilibriumPoint, sys: MassSystem,
                   tol: Optional[ToleranceSet] = None) -> RhoSeriesFit:
    """
    Régression libre de rho sur (u, u², u²τ, u²τ²) dans la fenêtre asymptotique

    τ est centré sur le début de la fenêtre; d1 et d2 sont attendus nuls.
    """
    tol = tol or traj.tolerances
    _check_converged(traj, eq)
    idx = _asymptotic_window(traj, eq.v0, tol)
    tau = traj.tau[idx]
    rho = traj.rho[idx]
    u = np.exp(-eq.v0 * tau)
    tc = tau - tau[0]
    design = np.column_stack((u, u**2, u**2 * tc, u**2 * tc**2))
    # régression relative: chaque ligne est divisée par u
    coef = _scaled_lstsq(design / u[:, None], rho / u, tol.fit_condition_limit)
    rho1, rho2, d1, d2 = (float(c) for c in coef)
    U = shape_terms(eq.s0, sys)[0]
    return RhoSeriesFit(rho1, rho2, d1, d2, (rho1 / eq.v0) ** 2 * U, len(idx))


def _fit_rho1(tau: np.ndarray, rho: np.ndarray, v0: float, U: float, initial: float) -> float:
    u = np.exp(-v0 * tau)

    def residual(x):
        return (rho - x[0] * u - (x[0] / v0) ** 2 * U * u**2) / u

    sol = least_squares(residual, x0=[initial], method="lm", xtol=1e-15, ftol=1e-15)
    return float(sol.x[0])


def extract_manifold_params(traj: Trajectory, eq: EquilibriumPoint, sys: MassSystem,
                            tol: Optional[ToleranceSet] = None) -> ManifoldParams:
    """
    Estime (s0, v0, s1, rho1) par régression sur la fenêtre asymptotique finale

    rho suit rho1 u + rho2 u² avec rho2 = (rho1/v0)² U(s0) connu; après retrait du terme
    -(rho1/v0)∇̃U(s0) τ u, s est ajusté sur (1, u, u², u²τ, u²τ²). L'ordonnée à l'origine
    fournit s0, le coefficient de u fournit s1, projeté orthogonalement à s0.

    Args:
        traj: Trajectoire ayant convergé vers eq
        eq: Équilibre détecté par detect_equilibrium

    Raises:
        ExtractionError: trajectoire non convergée ou fenêtre trop courte
        FitError: régression mal conditionnée
    """
    tol = tol or traj.tolerances
    _check_converged(traj, eq)
    v0 = eq.v0
    idx = _asymptotic_window(traj, v0, tol)
    tau = traj.tau[idx]
    rho = traj.rho[idx]
    S = traj.s[idx]
    u = np.exp(-v0 * tau)
    tc = tau - tau[0]

    s0 = eq.s0
    rho1 = 0.0
    if np.any(rho > 0):
        free = fit_rho_series(traj, eq, sys, tol)
        U = shape_terms(s0, sys)[0]
        rho1 = max(_fit_rho1(tau, rho, v0, U, free.rho1), 0.0)

    design = np.column_stack((np.ones_like(u), u, u**2, u**2 * tc, u**2 * tc**2))
    s1 = np.zeros(sys.size)
    for _ in range(2):
        _, _, tilde = shape_terms(s0, sys)
        target = S + (rho1 / v0) * np.outer(tau * u, tilde)
        coef = _scaled_lstsq(design, target, tol.fit_condition_limit)
        s0 = coef[0] / mass_norm(coef[0], sys)
        s1 = coef[1] - mass_inner(s0, coef[1], sys) * s0

    logger.info("Paramètres extraits sur %d échantillons: rho1 = %.12g, ‖s1‖ = %.6g",
                len(idx), rho1, mass_norm(s1, sys))
    return ManifoldParams(EquilibriumPoint(s0, v0), s1, rho1)


def series_predict(mp: ManifoldParams, tau: float, order: SeriesOrder, sys: MassSystem,
                   u_max: float = 0.1) -> SeriesPrediction:
    """
    Développement tronqué de (rho, s, v, r, q) au temps éclaté τ

    Ordre 1: termes en u et τu. Ordre 2: ajoute rho2 u² dans rho, la constante
    -U(s0)/v0² dans r et -U(s0) s0/v0² dans q. r et q valent None si rho1 = 0.

    Raises:
        AsymptoticRegimeError: si u = exp(-v0 τ) dépasse u_max
    """
    v0 = mp.v0
    u = float(np.exp(-v0 * tau))
    if u > u_max:
        raise AsymptoticRegimeError(f"u = {u:.3g} hors du régime asymptotique (u_max = {u_max})")
    U, _, tilde = shape_terms(mp.s0, sys)
    rho1 = mp.rho1
    rho = rho1 * u
    s = mp.s0 + u * (mp.s1 - (rho1 / v0) * tilde * tau)
    v = v0 + U * rho1 * u / v0
    r = q = None
    if rho1 > 0:
        r = 1.0 / (rho1 * u)
        q = mp.s0 / (rho1 * u) - tilde * tau / v0 + mp.s1 / rho1
        if order.order == 2:
            rho += (rho1 / v0) ** 2 * U * u**2
            r -= U / v0**2
            q = q - U * mp.s0 / v0**2
    return SeriesPrediction(float(rho), s, float(v), r, q)


def tau_t_relation(mp: ManifoldParams, value: float, sys: MassSystem, inverse: bool = False,
                   order: SeriesOrder = SeriesOrder(2), c: float = 0.0) -> float:
    """
    Relation asymptotique entre τ et t

    Sens direct: t = e^(v0 τ)/(rho1 v0) - (U(s0)/v0²) τ + c (le terme en τ disparaît à l'ordre 1).
    Sens inverse: τ = (1/v0) log(rho1 v0 (t - c) + (rho1 U/v0²) log(rho1 v0 (t - c))).

    Raises:
        OrbitParameterError: si rho1 = 0
        AsymptoticRegimeError: t - c du mauvais signe pour la branche inverse
    """
    if mp.rho1 <= 0:
        raise OrbitParameterError("rho1 = 0: pas de temps newtonien sur la variété à l'infini")
    v0, rho1 = mp.v0, mp.rho1
    U = shape_terms(mp.s0, sys)[0]
    if not inverse:
        t = np.exp(v0 * value) / (rho1 * v0) + c
        if order.order == 2:
            t -= U / v0**2 * value
        return float(t)
    base = rho1 * v0 * (value - c)
    if base <= 0:
        raise AsymptoticRegimeError("t du mauvais signe pour la branche inverse")
    if order.order == 1:
        return float(np.log(base) / v0)
    arg = base + rho1 * U / v0**2 * np.log(base)
    if arg <= 0:
        raise AsymptoticRegimeError("t trop petit pour le développement au second ordre")
    return float(np.log(arg) / v0)


def cartesian_samples(traj: Trajectory, rho_max: Optional[float] = None) -> List[Tuple[float, np.ndarray]]:
    """
    Échantillons (t, q = s/rho) de la trajectoire avec 0 < rho <= rho_max
    """
    if not traj.tracks_time:
        raise OrbitParameterError("trajectoire sur la variété à l'infini: pas de temps newtonien")
    rho_max = traj.tolerances.window_max if rho_max is None else rho_max
    mask = (traj.rho > 0) & (traj.rho <= rho_max)
    return [(float(traj.t[k]), traj.s[k] / traj.rho[k]) for k in np.flatnonzero(mask)]


def fit_chazy_cartesian(samples: Sequence[Tuple[float, np.ndarray]], sys: MassSystem,
                        remainder_terms: bool = True,
                        condition_limit: Optional[float] = None) -> ChazyParameters:
    """
    Ajuste q(t) ≈ A t + B log|t| + C sur des échantillons tardifs

    Par défaut la régression n'est pas celle à trois colonnes (t, log|t|, 1) :
      - remainder_terms ajoute les colonnes log|t|/t et 1/t, premiers termes du reste, qui
        absorbent le biais O(log t / t) sur C; False redonne les trois colonnes;
      - chaque ligne est pondérée par 1/|t|, ce qui égalise l'erreur relative sur la fenêtre
        (toujours appliqué).

    Raises:
        AsymptoticRegimeError: t de signes différents ou nul
        FitError: régression mal conditionnée
    """
    condition_limit = condition_limit or ToleranceSet().fit_condition_limit
    if len(samples) == 0:
        raise FitError("aucun échantillon à ajuster")
    t = np.array([s[0] for s in samples], dtype=float)
    Q = np.vstack([sys.check(s[1]) for s in samples])
    if np.any(t == 0) or not (np.all(t > 0) or np.all(t < 0)):
        raise AsymptoticRegimeError("les temps doivent être non nuls et de même signe")
    log_t = np.log(np.abs(t))
    columns = [t, log_t, np.ones_like(t)]
    if remainder_terms:
        columns += [log_t / t, 1.0 / t]
    design = np.column_stack(columns)
    weight = 1.0 / np.abs(t)
    coef = _scaled_lstsq(design * weight[:, None], Q * weight[:, None], condition_limit)
    direction = "future" if t[0] > 0 else "past"
    return ChazyParameters(coef[0], coef[1], coef[2], direction).normalized(sys)


def time_reverse_params(mp: ManifoldParams) -> ManifoldParams:
    """(s0, v0, s1, rho1) -> (s0, -v0, s1, rho1); involution"""
    return ManifoldParams(EquilibriumPoint(mp.s0.copy(), -mp.v0), mp.s1.copy(), mp.rho1)

