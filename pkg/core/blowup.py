"""
Coordonnées éclatées (rho, s, v, w) au voisinage de l'infini

L'espace des phases étendu est paramétré par rho = 1/r >= 0, la forme s sur la
sphère unité de la métrique de masse, la vitesse radiale v et la vitesse
tangentielle w. Le bord rho = 0 est la variété à l'infini.
Les vecteurs d'état sont empaquetés sous la forme [rho, s, v, w].
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config.constants import COLLISION_THRESHOLD, CONSTRAINT_TOLERANCE, FRAME_TOLERANCE
from .errors import ConstraintError, InfinityStateError, SeedScaleError
from .nbody import (
    MassSystem,
    apply_rotation,
    grad_potential,
    hessian_blocks,
    mass_inner,
    mass_norm,
    potential,
    tangential_grad,
)

logger = logging.getLogger(__name__)


def state_size(sys: MassSystem) -> int:
    return 2 + 2 * sys.size


def state_indices(sys: MassSystem):
    nd = sys.size
    return 0, slice(1, 1 + nd), 1 + nd, slice(2 + nd, 2 + 2 * nd)


@dataclass(frozen=True)
class BlowupState:
    """
    Point (rho, s, v, w) de l'espace des phases étendu
    """

    rho: float
    s: np.ndarray
    v: float
    w: np.ndarray

    @property
    def r(self) -> float:
        if self.rho <= 0:
            raise InfinityStateError("taille infinie sur la variété à l'infini")
        return 1.0 / self.rho

    @property
    def on_infinity(self) -> bool:
        return self.rho == 0.0

    def pack(self) -> np.ndarray:
        return np.concatenate(([self.rho], self.s, [self.v], self.w))

    @classmethod
    def unpack(cls, y: np.ndarray, sys: MassSystem) -> "BlowupState":
        i_rho, S, i_v, W = state_indices(sys)
        y = np.asarray(y, dtype=float)
        return cls(float(y[i_rho]), y[S].copy(), float(y[i_v]), y[W].copy())

    def chazy_velocity(self) -> np.ndarray:
        """A = v s + w, la vitesse cartésienne, constante à l'infini"""
        return self.v * self.s + self.w

    def constraint_defects(self, sys: MassSystem) -> Tuple[float, float]:
        """Retourne (|‖s‖² - 1|, |<s, w>|)"""
        return abs(mass_inner(self.s, self.s, sys) - 1.0), abs(mass_inner(self.s, self.w, sys))

    def check(self, sys: MassSystem, tol: float = CONSTRAINT_TOLERANCE) -> "BlowupState":
        sphere, tangency = self.constraint_defects(sys)
        if self.rho < 0:
            raise ConstraintError("rho négatif")
        if sphere > tol or tangency > tol:
            raise ConstraintError(f"contraintes violées: sphère {sphere:.2e}, tangence {tangency:.2e}")
        return self

    def renormalized(self, sys: MassSystem) -> "BlowupState":
        """
        Projette s sur la sphère unité puis w sur l'espace tangent (Gram-Schmidt de masse)
        """
        s = self.s / mass_norm(self.s, sys)
        w = self.w - mass_inner(s, self.w, sys) * s
        return BlowupState(max(self.rho, 0.0), s, self.v, w)


@dataclass(frozen=True)
class EquilibriumPoint:
    """
    Équilibre (0, s0, v0, 0) à l'infini; v0 > 0 attractif (futur), v0 < 0 répulsif (passé)
    """

    s0: np.ndarray
    v0: float

    def __post_init__(self):
        if self.v0 == 0:
            raise ConstraintError("v0 doit être non nul")
        object.__setattr__(self, "v0", float(self.v0))
        object.__setattr__(self, "s0", np.asarray(self.s0, dtype=float))

    @property
    def direction(self) -> str:
        return "future" if self.v0 > 0 else "past"

    @property
    def energy(self) -> float:
        return 0.5 * self.v0**2

    def chazy_A(self) -> np.ndarray:
        return self.v0 * self.s0

    def state(self) -> BlowupState:
        return BlowupState(0.0, self.s0.copy(), self.v0, np.zeros_like(self.s0))

    def check(self, sys: MassSystem, tol: float = FRAME_TOLERANCE) -> "EquilibriumPoint":
        if abs(mass_inner(self.s0, self.s0, sys) - 1.0) > tol:
            raise ConstraintError("s0 n'est pas unitaire")
        return self


@dataclass(frozen=True)
class ManifoldParams:
    """
    Paramètres (s0, v0, s1, rho1) sur la variété stable ou instable d'un équilibre
    """

    eq: EquilibriumPoint
    s1: np.ndarray
    rho1: float

    def __post_init__(self):
        object.__setattr__(self, "s1", np.asarray(self.s1, dtype=float))
        object.__setattr__(self, "rho1", float(self.rho1))
        if self.rho1 < 0:
            raise ConstraintError("rho1 doit être positif ou nul")

    @property
    def s0(self) -> np.ndarray:
        return self.eq.s0

    @property
    def v0(self) -> float:
        return self.eq.v0

    def scale(self, sys: MassSystem) -> float:
        return max(self.rho1, mass_norm(self.s1, sys))

    def check(self, sys: MassSystem, tol: float = FRAME_TOLERANCE) -> "ManifoldParams":
        self.eq.check(sys, tol)
        if abs(mass_inner(self.s0, self.s1, sys)) > tol:
            raise ConstraintError("s1 n'est pas orthogonal à s0")
        return self

    def to_dict(self) -> dict:
        return {"s0": self.s0.tolist(), "v0": self.v0, "s1": self.s1.tolist(), "rho1": self.rho1}

    @classmethod
    def from_dict(cls, data: dict) -> "ManifoldParams":
        return cls(EquilibriumPoint(np.array(data["s0"]), data["v0"]), np.array(data["s1"]), data["rho1"])


def shape_terms(s: np.ndarray, sys: MassSystem, threshold: float = COLLISION_THRESHOLD):
    """U(s), ∇U(s) et ∇U(s) + U(s) s sans contrôle de la sphère"""
    U = potential(s, sys, threshold)
    grad = grad_potential(s, sys, threshold)
    return U, grad, grad + U * s


def to_blowup(q: np.ndarray, xi: np.ndarray, sys: MassSystem) -> BlowupState:
    """
    Passage des variables cartésiennes (q, ξ) aux variables éclatées

    r = ‖q‖, s = q/r, v = <s, ξ>, w = ξ - v s, rho = 1/r.

    Raises:
        ConstraintError: si q = 0 (collision totale)
    """
    q = sys.check(q)
    xi = sys.check(xi)
    r = mass_norm(q, sys)
    if r == 0.0:
        raise ConstraintError("collision totale: q = 0")
    s = q / r
    v = mass_inner(s, xi, sys)
    return BlowupState(1.0 / r, s, v, xi - v * s)


def from_blowup(x: BlowupState, sys: MassSystem) -> Tuple[np.ndarray, np.ndarray]:
    """
    Retour aux variables cartésiennes (q, ξ) = (s/rho, v s + w)
    """
    if x.rho <= 0:
        raise InfinityStateError("un état avec rho = 0 n'a pas d'image cartésienne")
    return sys.check(x.s) / x.rho, x.v * x.s + x.w


def blowup_energy(x: BlowupState, sys: MassSystem, threshold: float = COLLISION_THRESHOLD) -> float:
    """½v² + ½‖w‖² - rho U(s); le terme potentiel disparaît à l'infini"""
    kinetic = 0.5 * x.v**2 + 0.5 * mass_inner(x.w, x.w, sys)
    if x.rho == 0.0:
        return kinetic
    return kinetic - x.rho * potential(x.s, sys, threshold)


def field_rhs(y: np.ndarray, sys: MassSystem, threshold: float = COLLISION_THRESHOLD) -> np.ndarray:
    """
    Champ éclaté sur un vecteur empaqueté [rho, s, v, w]

    rho' = -v rho, s' = w, v' = ‖w‖² - rho U(s), w' = rho ∇̃U(s) - v w - ‖w‖² s
    """
    i_rho, S, i_v, W = state_indices(sys)
    rho, s, v, w = y[i_rho], y[S], y[i_v], y[W]
    w2 = float(np.dot(sys.mass_vector * w, w))
    out = np.empty_like(y, dtype=float)
    out[i_rho] = -v * rho
    out[S] = w
    if rho == 0.0:
        out[i_v] = w2
        out[W] = -v * w - w2 * s
    else:
        U, _, tilde = shape_terms(s, sys, threshold)
        out[i_v] = w2 - rho * U
        out[W] = rho * tilde - v * w - w2 * s
    return out


def vector_field(x: BlowupState, sys: MassSystem, threshold: float = COLLISION_THRESHOLD) -> np.ndarray:
    """
    Dérivée en τ de l'état x, empaquetée comme (rho', s', v', w')
    """
    return field_rhs(x.pack(), sys, threshold)


def field_jacobian(y: np.ndarray, sys: MassSystem, threshold: float = COLLISION_THRESHOLD) -> np.ndarray:
    """
    Jacobienne exacte du champ éclaté sur l'espace épaissi R x E x R x E
    """
    i_rho, S, i_v, W = state_indices(sys)
    nd = sys.size
    y = np.asarray(y, dtype=float)
    rho, s, v, w = y[i_rho], y[S], y[i_v], y[W]
    m = sys.mass_vector
    U, grad, tilde = shape_terms(s, sys, threshold)
    eye = np.eye(nd)
    w2 = float(np.dot(m * w, w))

    jac = np.zeros((state_size(sys), state_size(sys)))
    jac[i_rho, i_rho] = -v
    jac[i_rho, i_v] = -rho
    jac[S, W] = eye
    jac[i_v, i_rho] = -U
    jac[i_v, S] = -rho * m * grad
    jac[i_v, W] = 2.0 * m * w
    jac[W, i_rho] = tilde
    if rho != 0.0:
        d_tilde = hessian_blocks(s, sys, threshold) + np.outer(s, m * grad) + U * eye
        jac[W, S] = rho * d_tilde - w2 * eye
    else:
        jac[W, S] = -w2 * eye
    jac[W, i_v] = -w
    jac[W, W] = -v * eye - 2.0 * np.outer(s, m * w)
    return jac


def check_frame(xi: np.ndarray, eta: np.ndarray, sys: MassSystem, tol: float) -> None:
    defects = (
        abs(mass_inner(xi, xi, sys) - 1.0),
        abs(mass_inner(eta, eta, sys) - 1.0),
        abs(mass_inner(xi, eta, sys)),
    )
    if max(defects) > tol:
        raise ConstraintError(f"repère (ξ, η) non orthonormé: écart {max(defects):.2e}")


def infinity_flow(xi: np.ndarray, eta: np.ndarray, h: float, tau: float, sys: MassSystem,
                  frame_tol: float = FRAME_TOLERANCE) -> BlowupState:
    """
    Solution explicite sur la variété à l'infini

    Args:
        xi, eta: Repère orthonormé (métrique de masse)
        h: Énergie strictement positive
        tau: Temps éclaté

    Returns:
        État au temps tau; l'orbite relie (-ξ, -√(2h)) à (ξ, √(2h))
    """
    if h <= 0:
        raise ConstraintError("l'énergie doit être strictement positive")
    xi = sys.check(xi)
    eta = sys.check(eta)
    check_frame(xi, eta, sys, frame_tol)
    omega = np.sqrt(2.0 * h)
    theta = np.arctan(np.sinh(omega * tau))
    v = omega * np.tanh(omega * tau)
    s = xi * np.sin(theta) + eta * np.cos(theta)
    w = omega / np.cosh(omega * tau) * (xi * np.cos(theta) - eta * np.sin(theta))
    return BlowupState(0.0, s, float(v), w)


def linearization_matrix(p: EquilibriumPoint, sys: MassSystem,
                         threshold: float = COLLISION_THRESHOLD) -> np.ndarray:
    """
    Matrice L(p) du champ linéarisé en (0, s0, v0, 0) sur (rho1, s1, v1, w1)
    """
    i_rho, S, i_v, W = state_indices(sys)
    U, _, tilde = shape_terms(p.s0, sys, threshold)
    nd = sys.size
    L = np.zeros((state_size(sys), state_size(sys)))
    L[i_rho, i_rho] = -p.v0
    L[S, W] = np.eye(nd)
    L[i_v, i_rho] = -U
    L[W, i_rho] = tilde
    L[W, W] = -p.v0 * np.eye(nd)
    return L


def linearized_flow_exact(p: EquilibriumPoint, tau: float, sys: MassSystem,
                          threshold: float = COLLISION_THRESHOLD) -> np.ndarray:
    """
    Exponentielle exp(τ L(p)) sous forme close, avec u = exp(-v0 τ)
    """
    i_rho, S, i_v, W = state_indices(sys)
    U, _, tilde = shape_terms(p.s0, sys, threshold)
    v0 = p.v0
    u = np.exp(-v0 * tau)
    nd = sys.size
    E = np.eye(state_size(sys))
    E[i_rho, i_rho] = u
    E[S, i_rho] = tilde * ((1.0 - u) / v0**2 - tau * u / v0)
    E[S, W] = np.eye(nd) * (1.0 - u) / v0
    E[i_v, i_rho] = U * (u - 1.0) / v0
    E[W, i_rho] = tilde * tau * u
    E[W, W] = u * np.eye(nd)
    return E


def generalized_eigenvector(p: EquilibriumPoint, sys: MassSystem) -> np.ndarray:
    """G(s0, v0) = (1, 0, U(s0)/v0, -∇̃U(s0)/v0)"""
    i_rho, S, i_v, W = state_indices(sys)
    U, _, tilde = shape_terms(p.s0, sys)
    G = np.zeros(state_size(sys))
    G[i_rho] = 1.0
    G[i_v] = U / p.v0
    G[W] = -tilde / p.v0
    return G


def eigenspace_inclusion(p: EquilibriumPoint, s1: np.ndarray, rho1: float, sys: MassSystem) -> np.ndarray:
    """i(s1, rho1) = rho1 G + (0, s1, 0, -v0 s1)"""
    _, S, _, W = state_indices(sys)
    vec = rho1 * generalized_eigenvector(p, sys)
    vec[S] += s1
    vec[W] += -p.v0 * np.asarray(s1, dtype=float)
    return vec


def linear_model_flow(mp: ManifoldParams, tau: float, sys: MassSystem) -> ManifoldParams:
    """
    Flot linéaire exact dans les coordonnées linéarisantes

    rho1 -> u rho1, s1 -> u s1 - τ u α rho1, avec α = ∇̃U(s0)/v0 et u = exp(-v0 τ).
    """
    u = np.exp(-mp.v0 * tau)
    if mp.rho1 == 0.0:
        return ManifoldParams(mp.eq, u * mp.s1, 0.0)
    alpha = tangential_grad(mp.s0, sys) / mp.v0
    return ManifoldParams(mp.eq, u * mp.s1 - tau * u * alpha * mp.rho1, u * mp.rho1)


def aligned_state(mp: ManifoldParams, sys: MassSystem) -> np.ndarray:
    """
    Image J(mp) = (rho1, s0 + s1, v0 + U rho1/v0, -∇̃U rho1/v0 - v0 s1), sans projection
    """
    base = mp.eq.state().pack()
    return base + eigenspace_inclusion(mp.eq, mp.s1, mp.rho1, sys)


def linearized_state(mp: ManifoldParams, tau: float, sys: MassSystem) -> BlowupState:
    """
    État au premier ordre le long de la variété: J appliqué au flot linéaire
    """
    return BlowupState.unpack(aligned_state(linear_model_flow(mp, tau, sys), sys), sys)


def seed_state(mp: ManifoldParams, sys: MassSystem, seed_bound: Optional[float] = None,
               frame_tol: float = FRAME_TOLERANCE) -> BlowupState:
    """
    Point de départ sur la variété stable ou instable

    État linéarisé au temps 0 (J(mp)), puis s ramené sur la sphère unité et w dans l'espace tangent.

    Args:
        mp: Paramètres de variété, s1 orthogonal à s0
        seed_bound: Borne optionnelle sur max(rho1, ‖s1‖)

    Raises:
        ConstraintError: si s1 n'est pas orthogonal à s0
        SeedScaleError: si la borne est dépassée
    """
    mp.check(sys, frame_tol)
    if seed_bound is not None and mp.scale(sys) > seed_bound:
        raise SeedScaleError(f"graine d'échelle {mp.scale(sys):.3e} au-delà de {seed_bound:.3e}")
    return linearized_state(mp, 0.0, sys).renormalized(sys)


def seed_time(mp: ManifoldParams, seed_scale: float, sys: MassSystem, max_halvings: int = 400) -> float:
    """
    Temps τ auquel le flot linéaire ramène max(rho1, ‖s1‖) sous seed_scale

    Le temps avance par pas de ln 2 / v0, ce qui divise u par deux à chaque pas.
    """
    step = np.log(2.0) / mp.v0
    tau = 0.0
    for _ in range(max_halvings):
        if linear_model_flow(mp, tau, sys).scale(sys) <= seed_scale:
            return tau
        tau += step
    raise SeedScaleError("impossible d'atteindre l'échelle de graine demandée")


def dilate_params(mp: ManifoldParams, lam: float) -> ManifoldParams:
    """
    Dilatation δ_λ: (s0, v0, s1, rho1) -> (s0, λ^(-1/2) v0, s1, rho1/λ)
    """
    if lam <= 0:
        raise ValueError("λ doit être strictement positif")
    eq = EquilibriumPoint(mp.s0.copy(), mp.v0 / np.sqrt(lam))
    return ManifoldParams(eq, mp.s1.copy(), mp.rho1 / lam)


def rotate_params(mp: ManifoldParams, R: np.ndarray, sys: MassSystem) -> ManifoldParams:
    """Action diagonale de R dans O(d) sur s0 et s1"""
    eq = EquilibriumPoint(apply_rotation(mp.s0, R, sys), mp.v0)
    return ManifoldParams(eq, apply_rotation(mp.s1, R, sys), mp.rho1)


def parity_params(mp: ManifoldParams, sys: MassSystem) -> ManifoldParams:
    return rotate_params(mp, -np.eye(sys.d), sys)
