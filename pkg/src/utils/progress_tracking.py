"""
Progress tracking utilities for QuenchLab.
Wraps tqdm bars for time integration and sweep rows, and mirrors status
messages to the log.
"""

import logging
import sys
from typing import Optional

from tqdm import tqdm


class ProgressTracker:
    """Manages a single progress bar plus status messages"""

    def __init__(self, description: str = "", total: float = 100.0, enabled: Optional[bool] = None):
        """
        Initialize progress tracker.

        Args:
            description (str): Label shown in front of the bar
            total (float): Value that corresponds to completion
            enabled (bool, optional): Force the bar on or off. Defaults to
                showing it only when stderr is a terminal.
        """
        self.description = description
        self.total = total
        self.enabled = sys.stderr.isatty() if enabled is None else enabled
        self._bar: Optional[tqdm] = None
        self._is_active = False

    @property
    def is_active(self):
        """Check if progress tracking is active"""
        return self._is_active

    def start(self):
        """Start progress tracking"""
        if self.enabled and self._bar is None:
            self._bar = tqdm(total=self.total, desc=self.description, leave=False,
                             bar_format='{l_bar}{bar}| {n:.0f}/{total:.0f}')
        self._is_active = True

    def stop(self):
        """Stop progress tracking"""
        if self._bar is not None:
            self._bar.close()
            self._bar = None
        self._is_active = False

    def update(self, message):
        """
        Update progress status message

        Args:
            message (str): Status message to display
        """
        if self._bar is not None:
            self._bar.set_postfix_str(message, refresh=True)
        logging.info(message)

    def update_progress(self, value, maximum=None):
        """
        Move the bar to an absolute value

        Args:
            value (float): Current progress value
            maximum (float, optional): New total. Defaults to the current one.
        """
        if maximum is not None:
            self.total = maximum
        if self._bar is not None:
            self._bar.total = self.total
            self._bar.n = min(value, self.total)
            self._bar.refresh()

    def __enter__(self) -> 'ProgressTracker':
        self.start()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        self.stop()


class BatchProgressTracker(ProgressTracker):
    """Extended progress tracker for batch operations"""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.current_batch = 0
        self.total_batches = 0

    def start_batch(self, total_batches):
        """
        Start batch processing

        Args:
            total_batches (int): Total number of batches to process
        """
        self.total_batches = total_batches
        self.current_batch = 0
        self.total = max(total_batches, 1)
        self.start()

    def next_batch(self, label=""):
        """Move to next batch and update progress"""
        self.current_batch += 1
        if self.total_batches > 0:
            self.update_progress(self.current_batch)
            self.update(f"Finished row {self.current_batch} of {self.total_batches} {label}".rstrip())

    def complete(self):
        """Mark batch processing as complete"""
        self.update_progress(self.total)
        self.update("Processing complete")
        self.stop()
