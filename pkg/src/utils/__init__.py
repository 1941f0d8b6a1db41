"""
Utility functions and classes for QuenchLab
"""

from .progress_tracking import ProgressTracker, BatchProgressTracker
from .file_handling import FileHandler
from .logging_setup import setup_logging
