"""
Euler-Coriolis toolkit - Utilities Package
"""

from .helpers import WarningRecorder, check_dependencies, setup_logging
from .field_io import dump_field, load_field

__all__ = ['WarningRecorder', 'check_dependencies', 'setup_logging', 'dump_field', 'load_field']
