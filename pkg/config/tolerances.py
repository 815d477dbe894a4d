"""
Jeu de tolérances numériques pour ChazyScatter
"""

from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Optional

from .constants import (
    COLLISION_THRESHOLD,
    CONSTRAINT_TOLERANCE,
    CONVERGENCE_WINDOW,
    DEFAULT_ATOL,
    DEFAULT_RTOL,
    ENERGY_TOLERANCE,
    FIT_CONDITION_LIMIT,
    FRAME_TOLERANCE,
    MIN_WINDOW_SAMPLES,
    QUADRATURE_TOLERANCE,
    RHO_ATOL_FACTOR,
    RHO_EQ,
    SAMPLE_STEP,
    SEED_SCALE,
    SEGMENT_LENGTH,
    SVD_THRESHOLD,
    V_EQ,
    W_EQ,
    WINDOW_MAX,
)


@dataclass(frozen=True)
class ToleranceSet:
    """
    Ensemble immuable des tolérances utilisées par les calculs

    Les valeurs par défaut sont celles de config.constants.
    """

    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    rho_atol_factor: float = RHO_ATOL_FACTOR
    energy: float = ENERGY_TOLERANCE
    constraint: float = CONSTRAINT_TOLERANCE
    frame: float = FRAME_TOLERANCE
    collision: float = COLLISION_THRESHOLD
    rho_eq: float = RHO_EQ
    w_eq: float = W_EQ
    v_eq: float = V_EQ
    convergence_window: float = CONVERGENCE_WINDOW
    segment_length: float = SEGMENT_LENGTH
    sample_step: float = SAMPLE_STEP
    seed_scale: float = SEED_SCALE
    window_max: float = WINDOW_MAX
    min_window_samples: int = MIN_WINDOW_SAMPLES
    fit_condition_limit: float = FIT_CONDITION_LIMIT
    quadrature: float = QUADRATURE_TOLERANCE
    svd_threshold: float = SVD_THRESHOLD

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "ToleranceSet":
        """
        Construit un jeu de tolérances à partir d'un dictionnaire partiel

        Args:
            data: Valeurs à surcharger (les clés inconnues sont refusées)

        Returns:
            Nouveau ToleranceSet
        """
        if not data:
            return cls()
        known = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise KeyError(f"tolérances inconnues: {', '.join(unknown)}")
        values = {}
        for key, value in data.items():
            values[key] = int(value) if key == "min_window_samples" else float(value)
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def scaled(self, factor: float) -> "ToleranceSet":
        """
        Multiplie les tolérances d'intégration par un facteur (option --tol-scale)
        """
        if factor <= 0:
            raise ValueError("le facteur d'échelle doit être positif")
        return replace(
            self,
            rtol=self.rtol * factor,
            atol=self.atol * factor,
            energy=self.energy * factor,
        )

    def with_seed_scale(self, seed_scale: float) -> "ToleranceSet":
        return replace(self, seed_scale=float(seed_scale))
