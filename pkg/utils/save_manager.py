"""
Gestionnaire des fichiers produits par ChazyScatter
"""

import csv
import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Tuple

import numpy as np

from config.constants import (
    APP_TITLE,
    CSV_FORMAT_VERSION,
    DEFAULT_OUTPUT_DIRECTORY,
    ERROR_FILE,
    TRAJECTORY_FILE,
    TRAJECTORY_RECORDS_FILE,
)
from core.integrator import Trajectory
from .helpers import format_file_size, format_float, to_jsonable

logger = logging.getLogger(__name__)

RECORDS_FORMAT = f"{APP_TITLE} trajectory"
CSV_MAGIC = f"# {RECORDS_FORMAT}"


@dataclass(frozen=True)
class TrajectoryTable:
    """
    Contenu d'un fichier CSV de trajectoire relu

    s et w ont une ligne par échantillon et n*d colonnes.
    """

    version: int
    masses: Tuple[float, ...]
    d: int
    tau: np.ndarray
    t: np.ndarray
    rho: np.ndarray
    v: np.ndarray
    s: np.ndarray
    w: np.ndarray

    def __len__(self) -> int:
        return len(self.tau)


def trajectory_columns(nd: int) -> List[str]:
    """Ordre fixe des colonnes: tau, t, rho, v, s[0..nd), w[0..nd)"""
    return ["tau", "t", "rho", "v"] + [f"s{k}" for k in range(nd)] + [f"w{k}" for k in range(nd)]


class SaveManager:
    """
    Gestionnaire du répertoire de sortie: CSV de trajectoire, JSON, JSONL et erreurs
    """

    def __init__(self, output_directory: str = DEFAULT_OUTPUT_DIRECTORY):
        """
        Initialise le gestionnaire et crée le répertoire de sortie si besoin
        """
        self.output_directory = output_directory
        self._ensure_output_directory()

    def _ensure_output_directory(self):
        if not os.path.exists(self.output_directory):
            os.makedirs(self.output_directory, exist_ok=True)
            logger.info("Répertoire de sortie créé: %s", self.output_directory)

    def path(self, filename: str) -> str:
        return os.path.join(self.output_directory, filename)

    # Trajectoires

    def write_trajectory(self, traj: Trajectory, filename: str = TRAJECTORY_FILE) -> str:
        """
        Écrit une trajectoire en CSV

        La première ligne est un commentaire versionné décrivant le système, la seconde
        l'en-tête des colonnes. Les flottants ont 17 chiffres significatifs.

        Returns:
            Chemin du fichier écrit
        """
        sys = traj.sys
        path = self.path(filename)
        masses = ";".join(format_float(m) for m in sys.masses)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            f.write(f"{CSV_MAGIC} version={CSV_FORMAT_VERSION} d={sys.d} masses={masses}\n")
            writer = csv.writer(f)
            writer.writerow(trajectory_columns(sys.size))
            for k in range(len(traj)):
                row = [traj.tau[k], traj.t[k], traj.rho[k], traj.v[k], *traj.s[k], *traj.w[k]]
                writer.writerow([format_float(x) for x in row])
        logger.info("Trajectoire écrite: %s (%d lignes)", path, len(traj))
        return path

    def read_trajectory(self, path: str) -> TrajectoryTable:
        """
        Relit un CSV écrit par write_trajectory

        Raises:
            ValueError: commentaire d'en-tête absent, version ou colonnes inattendues
        """
        with open(path, 'r', encoding='utf-8', newline='') as f:
            header = f.readline().strip()
            if not header.startswith(CSV_MAGIC):
                raise ValueError(f"{path}: en-tête de trajectoire absent")
            fields = dict(item.split("=", 1) for item in header[len(CSV_MAGIC):].split())
            version = int(fields["version"])
            if version != CSV_FORMAT_VERSION:
                raise ValueError(f"{path}: version {version} non prise en charge")
            d = int(fields["d"])
            masses = tuple(float(m) for m in fields["masses"].split(";"))
            reader = csv.reader(f)
            columns = next(reader)
            nd = len(masses) * d
            if columns != trajectory_columns(nd):
                raise ValueError(f"{path}: colonnes inattendues")
            rows = [[float(x) for x in row] for row in reader if row]
        data = np.array(rows, dtype=float).reshape(-1, 4 + 2 * nd)
        return TrajectoryTable(
            version=version,
            masses=masses,
            d=d,
            tau=data[:, 0],
            t=data[:, 1],
            rho=data[:, 2],
            v=data[:, 3],
            s=data[:, 4:4 + nd],
            w=data[:, 4 + nd:],
        )

    def write_trajectory_records(self, traj: Trajectory, filename: str = TRAJECTORY_RECORDS_FILE) -> str:
        """
        Écrit une trajectoire en JSONL: un enregistrement d'en-tête puis un par échantillon

        Le temps newtonien non suivi (NaN) est écrit null.

        Returns:
            Chemin du fichier écrit
        """
        sys = traj.sys
        header = {"format": RECORDS_FORMAT, "version": CSV_FORMAT_VERSION, "d": sys.d, "masses": list(sys.masses)}

        def records():
            yield header
            for k in range(len(traj)):
                t = float(traj.t[k])
                yield {
                    "tau": float(traj.tau[k]),
                    "t": None if np.isnan(t) else t,
                    "rho": float(traj.rho[k]),
                    "v": float(traj.v[k]),
                    "s": traj.s[k],
                    "w": traj.w[k],
                }

        return self.write_jsonl(filename, records())

    def read_trajectory_records(self, path: str) -> TrajectoryTable:
        """
        Relit un JSONL écrit par write_trajectory_records

        Raises:
            ValueError: en-tête absent ou version non prise en charge
        """
        records = self.read_jsonl(path)
        if not records or records[0].get("format") != RECORDS_FORMAT:
            raise ValueError(f"{path}: en-tête de trajectoire absent")
        header, samples = records[0], records[1:]
        if header["version"] != CSV_FORMAT_VERSION:
            raise ValueError(f"{path}: version {header['version']} non prise en charge")
        nd = len(header["masses"]) * header["d"]

        def column(key):
            return np.array([np.nan if r[key] is None else r[key] for r in samples], dtype=float)

        return TrajectoryTable(
            version=header["version"],
            masses=tuple(float(m) for m in header["masses"]),
            d=int(header["d"]),
            tau=column("tau"),
            t=column("t"),
            rho=column("rho"),
            v=column("v"),
            s=np.array([r["s"] for r in samples], dtype=float).reshape(-1, nd),
            w=np.array([r["w"] for r in samples], dtype=float).reshape(-1, nd),
        )

    # JSON et JSONL

    def write_json(self, filename: str, data: Any) -> str:
        path = self.path(filename)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(to_jsonable(data), f, indent=4, ensure_ascii=False)
        logger.info("Fichier JSON écrit: %s", path)
        return path

    @staticmethod
    def read_json(path: str) -> Any:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)

    def write_jsonl(self, filename: str, records: Iterable[Any]) -> str:
        """
        Écrit un enregistrement JSON par ligne, dans l'ordre donné, clés triées
        """
        path = self.path(filename)
        count = 0
        with open(path, 'w', encoding='utf-8') as f:
            for record in records:
                f.write(json.dumps(to_jsonable(record), sort_keys=True, ensure_ascii=False))
                f.write("\n")
                count += 1
        logger.info("Fichier JSONL écrit: %s (%d enregistrements)", path, count)
        return path

    @staticmethod
    def read_jsonl(path: str) -> List[Dict[str, Any]]:
        with open(path, 'r', encoding='utf-8') as f:
            return [json.loads(line) for line in f if line.strip()]

    # Erreurs

    @staticmethod
    def error_record(error: BaseException, code: int) -> Dict[str, Any]:
        """
        Enregistrement lisible par machine d'une erreur fatale
        """
        record = {
            "error": type(error).__name__,
            "message": str(error),
            "exit_code": code,
        }
        field = getattr(error, "field", None)
        if field is not None:
            record["field"] = field
        return record

    def write_error(self, record: Dict[str, Any], filename: str = ERROR_FILE) -> str:
        return self.write_json(filename, record)

    # Inventaire

    @staticmethod
    def inventory(paths: Iterable[str]) -> List[Dict[str, Any]]:
        """
        Fichiers écrits par une commande, avec leur taille, dans l'ordre d'écriture
        """
        files = []
        for path in paths:
            size = os.path.getsize(path)
            files.append({
                "filename": os.path.basename(path),
                "size": size,
                "size_formatted": format_file_size(size),
            })
        return files
