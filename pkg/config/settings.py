"""
Configuration d'une exécution de ChazyScatter
"""

import copy
import json
import logging
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.blowup import EquilibriumPoint, ManifoldParams
from core.errors import ConfigError, ScatteringLabError
from core.kepler import KeplerOrbit
from core.nbody import MassSystem, energy, make_configuration, normalize, regular_polygon
from core.scattering import eta_nonplanar
from core.verification import DEFAULT_SIZES
from .constants import DEFAULT_CONFIG_FILE, DEFAULT_OUTPUT_DIRECTORY, RICHARDSON_LEVELS, TAU_BUDGET_FACTOR
from .tolerances import ToleranceSet

logger = logging.getLogger(__name__)

MODES = ("cartesian", "manifold", "kepler")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class RunConfig:
    """
    Gestionnaire de la configuration d'une exécution

    Un document JSON unique est fusionné sur les valeurs par défaut; les sous-blocs
    (kepler, manifold, sweep...) sont fusionnés clé par clé.
    """

    def __init__(self, config_file: Optional[str] = DEFAULT_CONFIG_FILE):
        """
        Initialise la configuration

        Args:
            config_file: Chemin du document JSON, ou None pour les seules valeurs par défaut
        """
        self.config_file = config_file
        self.config = self._load_default_config()
        if config_file is not None:
            self.load_config()

    def _load_default_config(self) -> Dict[str, Any]:
        """
        Charge la configuration par défaut (orbite de Kepler μ = 1, h = 2, e = 2)
        """
        return {
            "mode": "kepler",
            "masses": [2.0, 2.0],
            "d": 2,
            "h": 2.0,
            "cartesian": {"q": None, "xi": None},
            "manifold": {"s0": None, "s1": None, "rho1": 0.0, "v0_sign": -1},
            "kepler": {"m1": 2.0, "m2": 2.0, "h": 2.0, "e": 2.0, "tau0": 0.0, "tau1": None},
            "tau_span": None,
            "tau_budget": TAU_BUDGET_FACTOR,
            "seed_scale": None,
            "richardson_levels": RICHARDSON_LEVELS,
            "tol_scale": 1.0,
            "tolerances": {},
            "output": {"dir": DEFAULT_OUTPUT_DIRECTORY},
            "sweep": {
                "rho1_values": [],
                "s1_offsets": [0.0],
                "eta": None,
                "fd_step": 0.05,
                "jacobian": True,
                "rank_rho1": None,
                "levels": 1,
                "R": None,
                "K": None,
            },
            "verify": {"inject": {}},
            "workers": 1,
            "log_level": "INFO",
            "debug_mode": False,
            "random_seed": 0,
        }

    def load_config(self):
        """
        Charge le document JSON et le fusionne sur la configuration courante

        Raises:
            ConfigError: fichier absent, JSON invalide ou racine non objet
        """
        if not os.path.exists(self.config_file):
            raise ConfigError("config", f"fichier introuvable: {self.config_file}")
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                loaded = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"JSON invalide ({e.msg}, ligne {e.lineno})") from e
        if not isinstance(loaded, dict):
            raise ConfigError("config", "la racine du document doit être un objet")
        self.merge(loaded)
        logger.info("Configuration chargée depuis %s", self.config_file)

    def merge(self, data: Dict[str, Any]):
        """Fusionne un dictionnaire partiel; les sous-blocs sont fusionnés sur un niveau"""
        for key, value in data.items():
            current = self.config.get(key)
            if isinstance(current, dict) and isinstance(value, dict) and key != "tolerances":
                merged = dict(current)
                merged.update(value)
                self.config[key] = merged
            else:
                self.config[key] = copy.deepcopy(value)

    def apply_overrides(self, out: Optional[str] = None, tol_scale: Optional[float] = None,
                        workers: Optional[int] = None, seed_scale: Optional[float] = None):
        """
        Applique les options de la ligne de commande, prioritaires sur le document
        """
        if out is not None:
            self.config["output"] = {**self.config["output"], "dir": out}
        if tol_scale is not None:
            self.config["tol_scale"] = tol_scale
        if workers is not None:
            self.config["workers"] = workers
        if seed_scale is not None:
            self.config["seed_scale"] = seed_scale

    # Propriétés pour un accès facile aux paramètres courants
    @property
    def mode(self) -> str:
        return self.config["mode"]

    @property
    def output_dir(self) -> str:
        return self.config["output"]["dir"]

    @property
    def workers(self) -> int:
        return int(self.config["workers"])

    @property
    def richardson_levels(self) -> int:
        return int(self.config["richardson_levels"])

    @property
    def tau_budget(self) -> float:
        return float(self.config["tau_budget"])

    @property
    def random_seed(self) -> int:
        return int(self.config["random_seed"])

    @property
    def debug_mode(self) -> bool:
        return bool(self.config["debug_mode"])

    @property
    def log_level(self) -> str:
        return "DEBUG" if self.debug_mode else str(self.config["log_level"]).upper()

    @property
    def energy(self) -> float:
        """Énergie h de l'exécution (calculée à partir de (q, ξ) en mode cartésien)"""
        if self.mode == "kepler":
            return float(self.config["kepler"]["h"])
        if self.mode == "cartesian":
            q, xi = self.cartesian_state()
            return energy(q, xi, self.mass_system())
        return float(self.config["h"])

    # Constructeurs des objets de calcul

    def mass_system(self) -> MassSystem:
        if self.mode == "kepler":
            return self.kepler_orbit().mass_system()
        return MassSystem(tuple(self.config["masses"]), int(self.config["d"]))

    def tolerances(self) -> ToleranceSet:
        """
        Tolérances du document, mises à l'échelle par tol_scale et surchargées par seed_scale
        """
        tol = ToleranceSet.from_dict(self.config["tolerances"])
        scale = float(self.config["tol_scale"])
        if scale != 1.0:
            tol = tol.scaled(scale)
        if self.config["seed_scale"] is not None:
            tol = tol.with_seed_scale(self.config["seed_scale"])
        return tol

    def kepler_orbit(self) -> KeplerOrbit:
        block = self.config["kepler"]
        return KeplerOrbit(float(block["m1"]), float(block["m2"]), float(block["h"]), float(block["e"]))

    def _vector(self, value, sys: MassSystem, name: str) -> np.ndarray:
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 2:
            return sys.embed(arr)
        if arr.ndim != 1:
            raise ConfigError(name, "vecteur plat ou liste de blocs attendu")
        return sys.check(arr)

    def manifold_params(self) -> ManifoldParams:
        """
        Paramètres de variété du mode "manifold"

        s0 vaut par défaut le polygone régulier; s1 vaut par défaut 2η avec η la rotation
        d'un quart de tour de -s0 dans le plan des deux premières coordonnées.
        """
        sys = self.mass_system()
        block = self.config["manifold"]
        if block["s0"] is None:
            s0 = regular_polygon(sys)
        else:
            s0 = normalize(make_configuration(self._vector(block["s0"], sys, "manifold.s0"), sys), sys)
        if block["s1"] is None:
            s1 = 2.0 * self.default_eta(s0)
        else:
            s1 = self._vector(block["s1"], sys, "manifold.s1")
        v0 = float(np.sign(block["v0_sign"])) * np.sqrt(2.0 * self.energy)
        return ManifoldParams(EquilibriumPoint(s0, v0), s1, float(block["rho1"]))

    def default_eta(self, s0: np.ndarray) -> np.ndarray:
        return eta_nonplanar(s0, self.mass_system(), self.tolerances())

    def cartesian_state(self) -> Tuple[np.ndarray, np.ndarray]:
        sys = self.mass_system()
        block = self.config["cartesian"]
        q = make_configuration(self._vector(block["q"], sys, "cartesian.q"), sys)
        xi = make_configuration(self._vector(block["xi"], sys, "cartesian.xi"), sys)
        return q, xi

    def simulation_span(self) -> Tuple[Tuple[float, float], bool]:
        """
        Intervalle en τ de la commande simulate et drapeau d'arrêt à l'équilibre

        Sans borne explicite, l'intégration avance jusqu'à l'équilibre avec le budget
        tau_budget / √(2h).
        """
        start = float(self.config["kepler"]["tau0"]) if self.mode == "kepler" else 0.0
        end = self.config["kepler"]["tau1"] if self.mode == "kepler" else None
        span = self.config["tau_span"]
        if span is not None:
            return (float(span[0]), float(span[1])), False
        if end is not None:
            return (start, float(end)), False
        return (start, start + self.tau_budget / np.sqrt(2.0 * self.energy)), True

    def sweep_grid(self) -> Dict[str, Any]:
        """
        Grille du balayage: équilibre passé, η, valeurs de rho1, décalages de s1 et filtre Z(R, K)
        """
        sys = self.mass_system()
        block = self.config["sweep"]
        mp = self.manifold_params()
        p = EquilibriumPoint(mp.s0, -abs(mp.v0))
        if block["eta"] is None:
            eta = self.default_eta(p.s0)
        else:
            eta = normalize(self._vector(block["eta"], sys, "sweep.eta"), sys)
        return {
            "p": p,
            "eta": eta,
            "rho1_values": [float(r) for r in block["rho1_values"]],
            "s1_offsets": list(block["s1_offsets"]),
            "fd_step": float(block["fd_step"]),
            "jacobian": bool(block["jacobian"]),
            "rank_rho1": block["rank_rho1"],
            "levels": int(block["levels"]),
            "R": None if block["R"] is None else float(block["R"]),
            "K": None if block["K"] is None else float(block["K"]),
        }

    def verify_options(self) -> Tuple[Dict[str, Any], Dict[str, Any]]:
        """(tailles de la suite, injections de fautes) du bloc verify"""
        block = dict(self.config["verify"])
        inject = dict(block.pop("inject", {}) or {})
        return block, inject

    # Validation

    def validate(self) -> "RunConfig":
        """
        Vérifie le document et construit les objets du mode choisi

        Raises:
            ConfigError: le champ fautif est nommé
        """
        defaults = self._load_default_config()
        unknown = sorted(set(self.config) - set(defaults))
        if unknown:
            raise ConfigError(unknown[0], "clé inconnue")
        for key in ("cartesian", "manifold", "kepler", "output", "sweep", "verify"):
            if not isinstance(self.config[key], dict):
                raise ConfigError(key, "objet attendu")
            extra = sorted(set(self.config[key]) - set(defaults[key]))
            if key == "verify":
                extra = [k for k in extra if k not in DEFAULT_SIZES]
            if extra:
                raise ConfigError(f"{key}.{extra[0]}", "clé inconnue")

        if self.mode not in MODES:
            raise ConfigError("mode", f"valeur '{self.mode}' hors de {MODES}")
        self._check_number("richardson_levels", self.config["richardson_levels"], minimum=1, integer=True)
        self._check_number("workers", self.config["workers"], minimum=1, integer=True)
        self._check_number("tau_budget", self.config["tau_budget"], positive=True)
        self._check_number("tol_scale", self.config["tol_scale"], positive=True)
        if self.config["seed_scale"] is not None:
            self._check_number("seed_scale", self.config["seed_scale"], positive=True)
        if str(self.config["log_level"]).upper() not in LOG_LEVELS:
            raise ConfigError("log_level", f"niveau inconnu: {self.config['log_level']}")
        span = self.config["tau_span"]
        if span is not None and (not isinstance(span, (list, tuple)) or len(span) != 2 or span[0] == span[1]):
            raise ConfigError("tau_span", "intervalle [τ0, τ1] non vide attendu")
        try:
            self.tolerances()
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError("tolerances", str(e)) from e

        if self.mode == "kepler":
            self._build("kepler", self.kepler_orbit)
        else:
            self._check_masses()
            if self.mode == "manifold":
                self._check_number("h", self.config["h"], positive=True)
                if self.config["manifold"]["v0_sign"] not in (-1, 1):
                    raise ConfigError("manifold.v0_sign", "±1 attendu")
                mp = self._build("manifold", self.manifold_params)
                try:
                    mp.check(self.mass_system(), self.tolerances().frame)
                except ScatteringLabError as e:
                    raise ConfigError("manifold.s1", str(e)) from e
            else:
                for name in ("q", "xi"):
                    if self.config["cartesian"][name] is None:
                        raise ConfigError(f"cartesian.{name}", "valeur requise en mode cartésien")
                h = self._build("cartesian", lambda: self.energy)
                if not h > 0:
                    raise ConfigError("cartesian.xi", f"énergie h = {h:.6g} non positive")
        self._check_sweep()
        return self

    def _build(self, field: str, builder):
        try:
            return builder()
        except ConfigError:
            raise
        except (ScatteringLabError, ValueError, TypeError, KeyError) as e:
            raise ConfigError(field, str(e)) from e

    def _check_number(self, field: str, value, positive: bool = False, minimum: Optional[float] = None,
                      integer: bool = False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(field, "nombre attendu")
        if integer and int(value) != value:
            raise ConfigError(field, "entier attendu")
        if not np.isfinite(value) or (positive and value <= 0) or (minimum is not None and value < minimum):
            raise ConfigError(field, f"valeur {value} hors domaine")

    def _check_masses(self):
        masses = self.config["masses"]
        if not isinstance(masses, (list, tuple)) or len(masses) < 2:
            raise ConfigError("masses", "au moins deux masses attendues")
        for m in masses:
            self._check_number("masses", m, positive=True)
        self._check_number("d", self.config["d"], minimum=2, integer=True)

    def _check_sweep(self):
        block = self.config["sweep"]
        values: Sequence = block["rho1_values"]
        if not isinstance(values, (list, tuple)):
            raise ConfigError("sweep.rho1_values", "liste attendue")
        for r in values:
            self._check_number("sweep.rho1_values", r, minimum=0.0)
        if not isinstance(block["s1_offsets"], (list, tuple)):
            raise ConfigError("sweep.s1_offsets", "liste attendue")
        self._check_number("sweep.fd_step", block["fd_step"], positive=True)
        self._check_number("sweep.levels", block["levels"], minimum=1, integer=True)
        if block["rank_rho1"] is not None:
            self._check_number("sweep.rank_rho1", block["rank_rho1"], positive=True)
        for key in ("R", "K"):
            if block[key] is not None:
                self._check_number(f"sweep.{key}", block[key], positive=True)
        if block["K"] is not None and block["R"] is None:
            raise ConfigError("sweep.K", "exige sweep.R")

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.config)

    def rho1_for_rank(self, values: List[float]) -> Optional[float]:
        """rho1 de la jacobienne de l'image: rank_rho1, sinon la plus petite valeur positive"""
        explicit = self.config["sweep"]["rank_rho1"]
        if explicit is not None:
            return float(explicit)
        positive = [r for r in values if r > 0]
        return min(positive) if positive else None
