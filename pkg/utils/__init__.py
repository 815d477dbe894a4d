"""
Module utilitaires pour ChazyScatter
"""

from .save_manager import SaveManager, TrajectoryTable
from .helpers import *

__all__ = ['SaveManager', 'TrajectoryTable', 'format_float', 'format_duration', 'to_jsonable']
