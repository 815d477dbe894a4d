"""
Fonctions utilitaires pour ChazyScatter
"""

import dataclasses
from typing import Any, Union

import numpy as np

from config.constants import CSV_FLOAT_DIGITS


def format_float(value: float) -> str:
    """
    Formate un flottant avec 17 chiffres significatifs (relecture exacte)

    Args:
        value: Valeur à formater

    Returns:
        Texte (ex: "0.33333333333333331", "nan", "inf")
    """
    return f"{float(value):.{CSV_FLOAT_DIGITS}g}"


def format_duration(seconds: float) -> str:
    """
    Formate une durée de calcul en format lisible

    Args:
        seconds: Durée en secondes

    Returns:
        Durée formatée (ex: "2m 5.3s", "0.42s")
    """
    if seconds < 0:
        return "0s"

    minutes = int(seconds // 60)
    secs = seconds - 60 * minutes

    if minutes >= 60:
        return f"{minutes // 60}h {minutes % 60}m {int(secs)}s"
    if minutes > 0:
        return f"{minutes}m {secs:.1f}s"
    return f"{secs:.2f}s"


def format_file_size(size_bytes: int) -> str:
    """
    Taille de fichier lisible, pour l'inventaire des sorties

    Returns:
        Taille formatée (ex: "512 B", "3.4 KB", "1.2 MB")
    """
    size = float(size_bytes)
    for unit in ("B", "KB", "MB"):
        if size < 1024 or unit == "MB":
            return f"{int(size)} {unit}" if unit == "B" else f"{size:.1f} {unit}"
        size /= 1024


def to_jsonable(value: Any) -> Union[dict, list, float, int, str, bool, None]:
    """
    Convertit récursivement tableaux et scalaires numpy en types JSON natifs

    Les dataclasses sont converties par leur méthode to_dict si elle existe.
    """
    if hasattr(value, "to_dict") and callable(value.to_dict):
        return to_jsonable(value.to_dict())
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return to_jsonable(dataclasses.asdict(value))
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value
