"""
Parameter sweeps for QuenchLab.
Each row is an independent scenario verified on a worker thread; a failing
row is recorded with its error and does not stop the others.
"""

import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from ..utils.file_handling import FileHandler
from ..utils.progress_tracking import BatchProgressTracker
from .bounds import corollary_threshold
from .exceptions import QuenchLabError
from .scenarios import Scenario
from .verification import Verifier

RESULT_COLUMNS = (
    "status", "run_verdict", "sandwich", "Psi0", "corollary_threshold",
    "T_lower", "tstar", "tstar_low", "tstar_high", "T0_upper", "Tbar_upper",
    "tstar_over_T", "upper_over_tstar", "message"
)


@dataclass
class SweepTable:
    parameters: Tuple[str, ...]
    rows: List[Dict[str, object]] = field(default_factory=list)

    @property
    def columns(self) -> Tuple[str, ...]:
        return ("row", "name") + self.parameters + RESULT_COLUMNS

    def as_tuples(self) -> List[Tuple[object, ...]]:
        return [tuple(row.get(column) for column in self.columns) for row in self.rows]

    def write_csv(self, path) -> Path:
        FileHandler.save_csv(self.columns, self.as_tuples(), path)
        return Path(path)


def default_threads() -> int:
    """QUENCHLAB_THREADS, else the CPU count"""
    value = os.getenv("QUENCHLAB_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            logging.warning(f"Ignoring QUENCHLAB_THREADS={value!r}")
    return os.cpu_count() or 1


def expand_grid(grid: Dict[str, Sequence[str]]) -> List[Dict[str, str]]:
    """Cartesian product of the override lists; empty lists give no rows"""
    if not grid:
        return []
    keys = list(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[key] for key in keys))]


def _ratio(numerator: Optional[float], denominator: Optional[float]) -> Optional[float]:
    if numerator is None or denominator is None or denominator == 0:
        return None
    return numerator / denominator


def _run_row(base: Scenario, index: int, overrides: Dict[str, str], output_dir: Optional[str]) -> Dict[str, object]:
    name = f"{base.name}-{index:03d}"
    row: Dict[str, object] = {"row": index, "name": name, **overrides}
    try:
        scenario = base.with_overrides(overrides, name=name)
        with Verifier(scenario, output_dir=output_dir) as verifier:
            report = verifier.verify()
            verifier.write_outputs(report)

        bounds = report.bounds
        threshold = None
        if bounds is not None and scenario.spec.p == scenario.spec.q and bounds.constants.cbar > 0:
            threshold = corollary_threshold(bounds.constants, scenario.spec.p)
        low, high = report.tstar_bracket or (None, None)
        upper = bounds.upper if bounds else None
        row.update(
            status="ok",
            run_verdict=report.trajectory.verdict,
            sandwich=report.sandwich,
            Psi0=report.trajectory.samples[0].psi,
            corollary_threshold=threshold,
            T_lower=report.T_lower,
            tstar=report.tstar,
            tstar_low=low,
            tstar_high=high,
            T0_upper=report.T0_upper,
            Tbar_upper=report.Tbar_upper,
            tstar_over_T=_ratio(report.tstar, report.T_lower),
            upper_over_tstar=_ratio(upper, report.tstar),
            message=""
        )
    except (QuenchLabError, ArithmeticError, ValueError) as e:
        logging.error(f"Error in sweep row {name}: {str(e)}")
        row.update(status="error", message=str(e))
    return row


def sweep(
    config: Scenario,
    *,
    threads: Optional[int] = None,
    output_dir: Optional[str] = None,
    progress: Optional[BatchProgressTracker] = None
) -> SweepTable:
    """Verify every combination of the [sweep] overrides"""
    combinations = expand_grid(config.sweep_grid)
    table = SweepTable(parameters=tuple(config.sweep_grid))
    if not combinations:
        logging.info("Empty sweep grid; nothing to run")
        return table

    workers = min(threads or default_threads(), len(combinations))
    logging.info(f"Sweeping {len(combinations)} rows of '{config.name}' on {workers} threads")
    if progress:
        progress.start_batch(len(combinations))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_run_row, config, index, overrides, output_dir)
            for index, overrides in enumerate(combinations)
        ]
        for future in futures:
            table.rows.append(future.result())
            if progress:
                progress.next_batch(table.rows[-1]["name"])

    if progress:
        progress.complete()
    failures = sum(1 for row in table.rows if row["status"] != "ok")
    if failures:
        logging.warning(f"{failures} of {len(table.rows)} sweep rows failed")
    return table
