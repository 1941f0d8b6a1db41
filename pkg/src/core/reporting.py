"""
Output emission for QuenchLab: trajectory CSV, JSON summary, SVG plots.
Files are byte-identical across reruns of the same scenario.
"""

import logging
import math
import threading
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterable, Optional

import matplotlib
matplotlib.use("Agg")
import numpy as np
from matplotlib.figure import Figure

from ..utils.file_handling import FileHandler
from .bounds import BoundReport
from .evolution import CSV_COLUMNS, Trajectory
from .spectrum import SobolevEstimate

if TYPE_CHECKING:
    from .verification import VerificationReport

TRAJECTORY_FILE = "trajectory.csv"
SUMMARY_FILE = "summary.json"
PLOT_FILE = "functionals.svg"

# rc_context is process-global; sweep rows plot from worker threads
_PLOT_LOCK = threading.Lock()


def json_safe(value):
    """JSON-safe numbers: nan and inf become null"""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def bounds_dict(bounds: Optional[BoundReport]) -> Dict[str, object]:
    if bounds is None:
        return {"T": None, "Ttilde": None, "T0": None, "Tbar": None}
    return {"T": bounds.T_lower, "Ttilde": bounds.T_tilde, "T0": bounds.T0_upper, "Tbar": bounds.Tbar_upper}


def constants_dict(bounds: Optional[BoundReport]) -> Dict[str, object]:
    if bounds is None:
        return {}
    keys = ("A", "B", "Atilde", "K", "c", "cbar", "delta", "Q", "A1", "A2", "c1", "c2", "Phi0", "Psi0",
            "Omega_measure")
    all_constants = bounds.constants.as_dict()
    return {key: all_constants[key] for key in keys}


def sobolev_dict(estimates: Iterable[SobolevEstimate]) -> Dict[str, object]:
    return {
        f"{est.r:g}": {"S": est.S, "ratio": est.ratio, "method": est.method, "converged": est.converged}
        for est in sorted(estimates, key=lambda est: est.r)
    }


def summary_dict(report: 'VerificationReport', sobolev: Optional[Dict[float, SobolevEstimate]] = None) -> Dict:
    traj = report.trajectory
    low, high = report.tstar_bracket or (None, None)
    estimates = list((sobolev or {}).values())
    if not estimates and report.bounds is not None:
        estimates = list(report.bounds.sobolev.values())
    summary = {
        "scenario": report.scenario,
        "lambda1": report.lambda1,
        "S": sobolev_dict(estimates),
        "constants": constants_dict(report.bounds),
        "bounds": bounds_dict(report.bounds),
        "tstar": {
            "value": report.tstar,
            "low": low,
            "high": high,
            "phi_based": report.tstar_phi,
            "refined": traj.refinement._asdict() if traj.refinement else None,
        },
        "verdicts": {
            "run": traj.verdict,
            "termination": traj.termination,
            "sandwich": report.sandwich,
            "checks": report.checks,
            "hypotheses": report.flags,
        },
        "run": {
            "samples": len(traj.samples),
            "final_time": traj.final_time,
            "rejected_steps": traj.rejected_steps,
            "p_eff": traj.p_eff,
        },
        "diagnostics": report.diagnostics,
    }
    if report.bounds is not None:
        summary["epsilon"] = {"mode": report.bounds.epsilon_mode, "theta": report.bounds.theta}
    return json_safe(summary)


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    FileHandler.save_csv(CSV_COLUMNS, traj.rows(), path)
    return Path(path)


def write_summary_json(data: Dict, path) -> Path:
    FileHandler.save_json(json_safe(data), path)
    return Path(path)


def plot_functionals(report: 'VerificationReport', path) -> Path:
    """Phi(t) and Psi(t) with markers at T, t* and the upper bound"""
    traj = report.trajectory
    t = traj.times
    markers = [
        ("T", report.T_lower, "tab:green"),
        ("t*", report.tstar, "tab:red"),
        ("T0", report.T0_upper, "tab:purple"),
        ("Tbar", report.Tbar_upper, "tab:orange"),
    ]

    with _PLOT_LOCK, matplotlib.rc_context({"svg.hashsalt": "quenchlab", "svg.fonttype": "none"}):
        fig = Figure(figsize=(7, 6))
        axes = fig.subplots(2, 1, sharex=True)
        for ax, name, label in ((axes[0], "phi", r"$\Phi(t)$"), (axes[1], "psi", r"$\Psi(t)$")):
            values = traj.column(name)
            positive = values > 0
            ax.plot(t[positive], values[positive], color="black", lw=1.2)
            ax.set_yscale("log")
            ax.set_ylabel(label)
            for marker, value, color in markers:
                if value is not None and math.isfinite(value):
                    ax.axvline(value, color=color, ls="--", lw=1.0, label=marker)
        axes[0].legend(loc="upper left", fontsize=8)
        axes[1].set_xlabel("t")
        axes[0].set_title(f"{report.scenario}: {traj.verdict}, sandwich {report.sandwich}")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    return Path(path)


def write_report(report: 'VerificationReport', output_dir, outputs, sobolev=None) -> Dict[str, Path]:
    """Write the requested outputs; returns kind -> path"""
    output_dir = FileHandler.ensure_directory(output_dir)
    written: Dict[str, Path] = {}
    if "trajectory-csv" in outputs:
        written["trajectory-csv"] = write_trajectory_csv(report.trajectory, output_dir / TRAJECTORY_FILE)
    if "summary-json" in outputs:
        written["summary-json"] = write_summary_json(summary_dict(report, sobolev), output_dir / SUMMARY_FILE)
    if "plots-svg" in outputs:
        written["plots-svg"] = plot_functionals(report, output_dir / PLOT_FILE)
    for kind, path in written.items():
        logging.info(f"Wrote {kind}: {path}")
    return written
