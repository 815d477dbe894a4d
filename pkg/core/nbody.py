"""
Problème newtonien des n corps: masses, métrique de masse, potentiel et dérivées
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.linalg import null_space

from config.constants import COLLISION_THRESHOLD
from .errors import CollisionError, ConstraintError, DimensionError, PlanarityError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MassSystem:
    """
    Système de n corps de masses positives dans R^d

    Les configurations sont des vecteurs plats de longueur n*d, rangés corps par corps.
    """

    masses: Tuple[float, ...]
    d: int = 2

    def __post_init__(self):
        masses = tuple(float(m) for m in self.masses)
        object.__setattr__(self, "masses", masses)
        if len(masses) < 2:
            raise DimensionError("il faut au moins deux corps")
        if int(self.d) < 2:
            raise DimensionError("la dimension d'espace doit être au moins 2")
        if any(m <= 0 or not np.isfinite(m) for m in masses):
            raise ValueError("toutes les masses doivent être strictement positives")
        object.__setattr__(self, "d", int(self.d))

    @property
    def n(self) -> int:
        return len(self.masses)

    @property
    def size(self) -> int:
        return self.n * self.d

    @property
    def reduced_dimension(self) -> int:
        """D = d(n-1), dimension de l'espace des configurations centrées"""
        return self.d * (self.n - 1)

    @property
    def total_mass(self) -> float:
        return float(sum(self.masses))

    @property
    def mass_array(self) -> np.ndarray:
        return np.asarray(self.masses, dtype=float)

    @property
    def mass_vector(self) -> np.ndarray:
        """Diagonale de la matrice de masse M (longueur n*d)"""
        return np.repeat(self.mass_array, self.d)

    def check(self, x: np.ndarray) -> np.ndarray:
        """
        Vérifie la longueur d'un vecteur de configuration

        Returns:
            Le vecteur converti en tableau numpy plat de flottants
        """
        arr = np.asarray(x, dtype=float).reshape(-1)
        if arr.size != self.size:
            raise DimensionError(f"longueur {arr.size} attendue {self.size} (n={self.n}, d={self.d})")
        return arr

    def blocks(self, x: np.ndarray) -> np.ndarray:
        return self.check(x).reshape(self.n, self.d)

    def center_of_mass(self, x: np.ndarray) -> np.ndarray:
        return self.mass_array @ self.blocks(x) / self.total_mass

    def remove_center_of_mass(self, x: np.ndarray) -> np.ndarray:
        X = self.blocks(x)
        return (X - self.center_of_mass(x)).reshape(-1)

    def embed(self, blocks: Sequence[Sequence[float]]) -> np.ndarray:
        """Aplatit une liste de n blocs de longueur d"""
        arr = np.asarray(blocks, dtype=float)
        if arr.shape != (self.n, self.d):
            raise DimensionError(f"forme {arr.shape} attendue {(self.n, self.d)}")
        return arr.reshape(-1)


def mass_inner(v: np.ndarray, w: np.ndarray, sys: MassSystem) -> float:
    """
    Produit scalaire de masse <v, w>_M = somme des m_i <v_i, w_i>
    """
    return float(np.dot(sys.mass_vector * sys.check(v), sys.check(w)))


def mass_norm(v: np.ndarray, sys: MassSystem) -> float:
    return float(np.sqrt(mass_inner(v, v, sys)))


def make_configuration(x, sys: MassSystem, tol: float = 1e-10) -> np.ndarray:
    """
    Valide un vecteur de configuration (centre de masse à l'origine)

    Args:
        x: Vecteur plat ou liste de blocs
        sys: Système de masses
        tol: Tolérance sur la somme pondérée des blocs

    Returns:
        Vecteur plat de longueur n*d
    """
    arr = np.asarray(x, dtype=float)
    flat = arr.reshape(-1) if arr.ndim == 1 else sys.embed(arr)
    flat = sys.check(flat)
    weighted = sys.mass_array @ flat.reshape(sys.n, sys.d)
    scale = max(1.0, float(np.max(np.abs(flat)))) * sys.total_mass
    if np.max(np.abs(weighted)) > tol * scale:
        raise ConstraintError("le centre de masse n'est pas à l'origine")
    return flat


def normalize(x: np.ndarray, sys: MassSystem) -> np.ndarray:
    norm = mass_norm(x, sys)
    if norm == 0.0:
        raise ConstraintError("impossible de normaliser le vecteur nul")
    return sys.check(x) / norm


def _pair_geometry(q: np.ndarray, sys: MassSystem):
    X = sys.blocks(q)
    diff = X[:, None, :] - X[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    return diff, dist


def min_pair_distance(q: np.ndarray, sys: MassSystem) -> Tuple[float, Tuple[int, int]]:
    """
    Plus petite distance mutuelle et la paire correspondante
    """
    _, dist = _pair_geometry(q, sys)
    iu = np.triu_indices(sys.n, 1)
    k = int(np.argmin(dist[iu]))
    return float(dist[iu][k]), (int(iu[0][k]), int(iu[1][k]))


def check_collision(q: np.ndarray, sys: MassSystem, threshold: float = COLLISION_THRESHOLD) -> None:
    distance, pair = min_pair_distance(q, sys)
    if distance <= threshold:
        raise CollisionError(pair, distance)


def _checked_geometry(q: np.ndarray, sys: MassSystem, threshold: float):
    diff, dist = _pair_geometry(q, sys)
    iu = np.triu_indices(sys.n, 1)
    pair_dist = dist[iu]
    k = int(np.argmin(pair_dist))
    if pair_dist[k] <= threshold:
        raise CollisionError((int(iu[0][k]), int(iu[1][k])), float(pair_dist[k]))
    np.fill_diagonal(dist, np.inf)
    return diff, dist


def potential(q: np.ndarray, sys: MassSystem, threshold: float = COLLISION_THRESHOLD) -> float:
    """
    Potentiel newtonien U(q) = somme sur i<j de m_i m_j / |q_i - q_j|

    Raises:
        CollisionError: si une distance mutuelle est sous le seuil
    """
    _, dist = _checked_geometry(q, sys, threshold)
    m = sys.mass_array
    return float(0.5 * np.sum(np.outer(m, m) / dist))


def grad_potential(q: np.ndarray, sys: MassSystem, threshold: float = COLLISION_THRESHOLD) -> np.ndarray:
    """
    Gradient de U pour la métrique de masse (M^-1 fois le gradient euclidien)

    Le bloc i vaut la somme sur j != i de m_j (q_j - q_i) / r_ij^3.
    """
    diff, dist = _checked_geometry(q, sys, threshold)
    inv_r3 = sys.mass_array[None, :] / dist**3
    grad = -np.einsum("ij,ijk->ik", inv_r3, diff)
    return grad.reshape(-1)


def tangential_grad(s: np.ndarray, sys: MassSystem, sphere_tol: float = 1e-8,
                    threshold: float = COLLISION_THRESHOLD) -> np.ndarray:
    """
    Composante tangentielle du gradient sur la sphère unité: ∇U(s) + U(s) s
    """
    s = sys.check(s)
    if abs(mass_inner(s, s, sys) - 1.0) > sphere_tol:
        raise ConstraintError("s n'est pas sur la sphère unité de la métrique de masse")
    return grad_potential(s, sys, threshold) + potential(s, sys, threshold) * s


def energy(q: np.ndarray, xi: np.ndarray, sys: MassSystem, threshold: float = COLLISION_THRESHOLD) -> float:
    """Énergie totale ½‖ξ‖² - U(q)"""
    return 0.5 * mass_inner(xi, xi, sys) - potential(q, sys, threshold)


def hessian_blocks(xi: np.ndarray, sys: MassSystem, threshold: float = COLLISION_THRESHOLD) -> np.ndarray:
    """
    Matrice D∇U(ξ) de taille (nd x nd)

    Blocs hors diagonale D_ij = (m_j / r^3)(I - 3 u u^T) avec u = (ξ_i - ξ_j)/r,
    blocs diagonaux D_ii = - somme des D_ij. M·D∇U est symétrique.
    """
    diff, dist = _checked_geometry(xi, sys, threshold)
    n, d = sys.n, sys.d
    unit = diff / dist[:, :, None]
    coef = sys.mass_array[None, :] / dist**3
    outer = np.einsum("ijk,ijl->ijkl", unit, unit)
    blocks = coef[:, :, None, None] * (np.eye(d)[None, None, :, :] - 3.0 * outer)
    for i in range(n):
        blocks[i, i] = 0.0
        blocks[i, i] = -blocks[i].sum(axis=0)
    return blocks.transpose(0, 2, 1, 3).reshape(n * d, n * d)


def is_planar(x: np.ndarray, sys: MassSystem, tol: float = 1e-12) -> bool:
    """Vrai si tous les blocs sont dans le plan R^2 x 0"""
    X = sys.blocks(x)
    return sys.d == 2 or bool(np.all(np.abs(X[:, 2:]) <= tol))


def perp(x: np.ndarray, sys: MassSystem) -> np.ndarray:
    """
    Rotation de 90° de chaque bloc dans le plan des deux premières coordonnées

    Les coordonnées au-delà de la deuxième sont annulées.
    """
    X = sys.blocks(x)
    out = np.zeros_like(X)
    out[:, 0] = -X[:, 1]
    out[:, 1] = X[:, 0]
    return out.reshape(-1)


def planar_perp(x: np.ndarray, sys: MassSystem, tol: float = 1e-12) -> np.ndarray:
    if not is_planar(x, sys, tol):
        raise PlanarityError("configuration non plane")
    return perp(x, sys)


def apply_rotation(x: np.ndarray, R: np.ndarray, sys: MassSystem) -> np.ndarray:
    """Action diagonale d'une matrice orthogonale R sur chaque bloc"""
    return (sys.blocks(x) @ np.asarray(R, dtype=float).T).reshape(-1)


def orthonormal_complement(vectors: Sequence[np.ndarray], sys: MassSystem) -> np.ndarray:
    """
    Base orthonormée (métrique de masse) de {centre de masse nul} ∩ {⊥ vectors}

    Returns:
        Tableau (k, n*d) dont les lignes forment la base
    """
    sqrt_m = np.sqrt(sys.mass_vector)
    rows = []
    for k in range(sys.d):
        row = np.zeros((sys.n, sys.d))
        row[:, k] = np.sqrt(sys.mass_array)
        rows.append(row.reshape(-1))
    for v in vectors:
        rows.append(sqrt_m * sys.check(v))
    basis = null_space(np.vstack(rows))
    return (basis / sqrt_m[:, None]).T


def random_unit_configuration(sys: MassSystem, rng: np.random.Generator,
                              planar: bool = False, min_distance: float = 0.1,
                              max_tries: int = 1000) -> np.ndarray:
    """
    Tire une configuration centrée de norme de masse 1 sans quasi-collision

    Args:
        planar: Si vrai, les blocs restent dans R^2 x 0
        min_distance: Distance mutuelle minimale acceptée
    """
    for _ in range(max_tries):
        X = rng.normal(size=(sys.n, sys.d))
        if planar:
            X[:, 2:] = 0.0
        x = sys.remove_center_of_mass(X.reshape(-1))
        x = normalize(x, sys)
        if min_pair_distance(x, sys)[0] > min_distance:
            return x
    raise RuntimeError("aucune configuration admissible trouvée")


def regular_polygon(sys: MassSystem) -> np.ndarray:
    """
    Corps aux sommets d'un polygone régulier du plan R^2 x 0, centré et de norme de masse 1
    """
    angles = 2.0 * np.pi * np.arange(sys.n) / sys.n
    X = np.zeros((sys.n, sys.d))
    X[:, 0] = np.cos(angles)
    X[:, 1] = np.sin(angles)
    return normalize(sys.remove_center_of_mass(X.reshape(-1)), sys)
