"""
Modules de calcul de ChazyScatter

ExperimentEngine s'importe depuis core.engine.
"""

from .errors import ScatteringLabError, ConfigError
from .nbody import MassSystem
from .blowup import BlowupState, EquilibriumPoint, ManifoldParams
from .integrator import Trajectory, integrate
from .kepler import KeplerOrbit, kepler_scattering
from .chazy import ChazyParameters, extract_manifold_params
from .scattering import ScatteringResult, scattering_map

__all__ = [
    'ScatteringLabError', 'ConfigError', 'MassSystem', 'BlowupState', 'EquilibriumPoint',
    'ManifoldParams', 'Trajectory', 'integrate', 'KeplerOrbit', 'kepler_scattering',
    'ChazyParameters', 'extract_manifold_params', 'ScatteringResult', 'scattering_map',
]
