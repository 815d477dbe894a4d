"""
Module de configuration pour ChazyScatter

RunConfig s'importe depuis config.settings (il dépend des modules de calcul).
"""

from .constants import *
from .tolerances import ToleranceSet

__all__ = ['ToleranceSet', 'APP_TITLE', 'APP_VERSION', 'DEFAULT_CONFIG_FILE']
