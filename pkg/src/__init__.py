"""
QuenchLab - blow-up time bounds for coupled fourth-order parabolic systems
"""

from .main import QuenchLabApp, cli

__version__ = '1.0.0'
