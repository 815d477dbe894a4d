"""
Hiérarchie des exceptions de ChazyScatter
"""

from typing import Optional, Tuple


class ScatteringLabError(Exception):
    """Classe de base de toutes les erreurs du programme"""


class DimensionError(ScatteringLabError, ValueError):
    """Longueur de tableau incompatible avec le système de masses"""


class CollisionError(ScatteringLabError):
    """
    Deux corps sont plus proches que le seuil de collision
    """

    def __init__(self, pair: Tuple[int, int], distance: float, tau: Optional[float] = None):
        self.pair = pair
        self.distance = distance
        self.tau = tau
        where = "" if tau is None else f" (τ = {tau:.6g})"
        super().__init__(f"collision entre les corps {pair[0]} et {pair[1]}: distance {distance:.3e}{where}")


class ConstraintError(ScatteringLabError, ValueError):
    """Contrainte géométrique violée (sphère unité, tangence, orthonormalité, centre de masse)"""


class InfinityStateError(ScatteringLabError, ValueError):
    """Un état à l'infini (rho = 0) n'a pas d'image cartésienne"""


class IntegrationError(ScatteringLabError, RuntimeError):
    """
    Échec du solveur; la trajectoire partielle est conservée
    """

    def __init__(self, message: str, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ConvergenceError(IntegrationError):
    """Budget en τ épuisé sans convergence vers un équilibre"""


class ExtractionError(ScatteringLabError):
    """Extraction impossible des paramètres asymptotiques"""


class FitError(ExtractionError):
    """Problème de moindres carrés mal conditionné"""


class AsymptoticRegimeError(ScatteringLabError, ValueError):
    """Développement évalué hors de son régime de validité"""


class OrbitParameterError(ScatteringLabError, ValueError):
    """Paramètre d'orbite nul ou indéfini"""


class SeedScaleError(ScatteringLabError, ValueError):
    """Graine hors de la borne admissible"""


class PlanarityError(ScatteringLabError, ValueError):
    """Configuration non plane ou projection dégénérée"""


class ConfigError(ScatteringLabError, ValueError):
    """
    Configuration invalide; le champ fautif est nommé
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
