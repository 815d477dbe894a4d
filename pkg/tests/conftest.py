"""
Fixtures partagées des tests de ChazyScatter
"""

import json

import numpy as np
import pytest

from config.tolerances import ToleranceSet
from core.blowup import EquilibriumPoint
from core.kepler import KeplerOrbit
from core.nbody import MassSystem, regular_polygon
from core.scattering import eta_nonplanar


@pytest.fixture
def tol():
    return ToleranceSet()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def triangle():
    return MassSystem((1.0, 1.0, 1.0), d=2)


@pytest.fixture
def unequal():
    return MassSystem((1.0, 2.0, 3.0), d=2)


@pytest.fixture
def unequal3d():
    return MassSystem((1.0, 2.0, 3.0), d=3)


@pytest.fixture
def kepler_orbit():
    """μ = 1, h = 2, a = 1, e = 2"""
    return KeplerOrbit(2.0, 2.0, 2.0, 2.0)


@pytest.fixture
def equilateral(triangle):
    return regular_polygon(triangle)


@pytest.fixture
def equilateral_seed(triangle, equilateral):
    """(système, équilibre passé à l'énergie ½, η)"""
    return triangle, EquilibriumPoint(equilateral, -1.0), eta_nonplanar(equilateral, triangle)


@pytest.fixture
def write_config(tmp_path):
    """Écrit un document de configuration et renvoie son chemin"""

    def _write(data, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    return _write
