"""
Orbites hyperboliques du problème des deux corps sous forme close

Sert d'oracle exact pour toute la chaîne numérique. L'orbite relative
q = q2 - q1 est plongée dans l'espace des configurations centrées par
q1 = -(m2/M) q, q2 = (m1/M) q; le périhélie est sur l'axe des x positifs.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .blowup import BlowupState, EquilibriumPoint, ManifoldParams, to_blowup
from .nbody import MassSystem


@dataclass(frozen=True)
class KeplerOrbit:
    """
    Orbite hyperbolique de masses m1, m2, d'énergie h > 0 et d'excentricité e > 1
    """

    m1: float
    m2: float
    h: float
    e: float

    def __post_init__(self):
        if self.m1 <= 0 or self.m2 <= 0:
            raise ValueError("les masses doivent être strictement positives")
        if self.h <= 0:
            raise ValueError("l'énergie doit être strictement positive")
        if self.e <= 1:
            raise ValueError("l'excentricité doit dépasser 1")

    @property
    def total_mass(self) -> float:
        return self.m1 + self.m2

    @property
    def mu(self) -> float:
        """Masse réduite m1 m2 / (m1 + m2)"""
        return self.m1 * self.m2 / self.total_mass

    @property
    def a(self) -> float:
        """Demi-grand axe a = m1 m2 / (2h)"""
        return self.m1 * self.m2 / (2.0 * self.h)

    @property
    def omega(self) -> float:
        return float(np.sqrt(2.0 * self.h))

    @property
    def k(self) -> float:
        return float(np.sqrt(self.e**2 - 1.0))

    def mass_system(self) -> MassSystem:
        return MassSystem((self.m1, self.m2), d=2)

    def embed(self, relative: np.ndarray) -> np.ndarray:
        """Plonge un vecteur relatif q2 - q1 dans l'espace des configurations centrées"""
        X = np.asarray(relative, dtype=float)
        M = self.total_mass
        return np.concatenate((-(self.m2 / M) * X, (self.m1 / M) * X))

    @staticmethod
    def relative(x: np.ndarray) -> np.ndarray:
        """Vecteur relatif q2 - q1 d'une configuration plane à deux corps"""
        x = np.asarray(x, dtype=float)
        return x[2:4] - x[0:2]


def kepler_radius(orb: KeplerOrbit, tau: float) -> float:
    """r(τ) = a √μ (e cosh ωτ - 1), norme de masse de la configuration"""
    return orb.a * np.sqrt(orb.mu) * (orb.e * np.cosh(orb.omega * tau) - 1.0)


def kepler_newtonian_time(orb: KeplerOrbit, tau: float) -> float:
    """t(τ) = (a √μ / ω)(e sinh ωτ - ωτ), avec t = 0 au périhélie"""
    wt = orb.omega * tau
    return orb.a * np.sqrt(orb.mu) / orb.omega * (orb.e * np.sinh(wt) - wt)


def kepler_state(orb: KeplerOrbit, tau: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Position et vitesse cartésiennes au temps éclaté τ

    Returns:
        (q, ξ) plongés dans la configuration à deux corps centrée
    """
    a, e, k, w = orb.a, orb.e, orb.k, orb.omega
    ch, sh = np.cosh(w * tau), np.sinh(w * tau)
    q_rel = np.array([a * e - a * ch, a * k * sh])
    dq_dtau = np.array([-a * w * sh, a * k * w * ch])
    dt_dtau = kepler_radius(orb, tau)
    return orb.embed(q_rel), orb.embed(dq_dtau / dt_dtau)


def kepler_blowup_state(orb: KeplerOrbit, tau: float) -> BlowupState:
    q, xi = kepler_state(orb, tau)
    return to_blowup(q, xi, orb.mass_system())


@dataclass(frozen=True)
class KeplerScattering:
    """
    Données de diffusion exactes d'une orbite de Kepler (configurations plongées)

    Les grandeurs sans prime concernent le passé, les grandeurs primées le futur.
    """

    orbit: KeplerOrbit
    A: np.ndarray
    C: np.ndarray
    A_prime: np.ndarray
    C_prime: np.ndarray
    rho1: float
    s0: np.ndarray
    s0_prime: np.ndarray
    s1: np.ndarray
    s1_prime: np.ndarray

    def past_params(self) -> ManifoldParams:
        return ManifoldParams(EquilibriumPoint(self.s0, -self.orbit.omega), self.s1, self.rho1)

    def future_params(self) -> ManifoldParams:
        return ManifoldParams(EquilibriumPoint(self.s0_prime, self.orbit.omega), self.s1_prime, self.rho1)


def kepler_scattering(orb: KeplerOrbit) -> KeplerScattering:
    """
    Paramètres de Chazy et de variété de l'orbite, passés et futurs
    """
    a, e, k, w = orb.a, orb.e, orb.k, orb.omega
    sqrt_mu = np.sqrt(orb.mu)
    rel = {
        "A": w / (e * sqrt_mu) * np.array([1.0, k]),
        "A_prime": w / (e * sqrt_mu) * np.array([-1.0, k]),
        "C": a / e * np.array([e**2 - 1.0, -k]),
        "C_prime": a / e * np.array([e**2 - 1.0, k]),
        "s0": np.array([-1.0, -k]) / (e * sqrt_mu),
        "s0_prime": np.array([-1.0, k]) / (e * sqrt_mu),
        "s1": 2.0 / (e**2 * sqrt_mu) * np.array([e**2 - 1.0, -k]),
        "s1_prime": 2.0 / (e**2 * sqrt_mu) * np.array([e**2 - 1.0, k]),
    }
    embedded = {name: orb.embed(vec) for name, vec in rel.items()}
    return KeplerScattering(orbit=orb, rho1=2.0 / (a * e * sqrt_mu), **embedded)


def scattering_angle(orb: KeplerOrbit) -> float:
    """Angle entre les vitesses asymptotiques passée et future, arccos((e² - 2)/e²)"""
    return float(np.arccos((orb.e**2 - 2.0) / orb.e**2))
