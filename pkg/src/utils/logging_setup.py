"""
Logging configuration for QuenchLab.
"""

import logging
from pathlib import Path


def setup_logging(log_dir="logs", verbose=False, quiet=False):
    """
    Initialize logging configuration: one file log plus the console.

    Args:
        log_dir (str or Path): Directory for quenchlab.log
        verbose (bool): Log at DEBUG instead of INFO
        quiet (bool): Only warnings and errors on the console
    """
    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)

    console = logging.StreamHandler()
    if quiet:
        console.setLevel(logging.WARNING)

    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_dir / "quenchlab.log"),
            console
        ],
        force=True
    )
