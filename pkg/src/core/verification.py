"""
Verification module for QuenchLab.
Runs spectrum, bounds and simulation for a scenario and checks that the
numerical blow-up time falls between the lower and upper bounds.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..utils.file_handling import FileHandler
from ..utils.progress_tracking import ProgressTracker
from .bounds import BoundReport, compute_bounds
from .evolution import BLOWUP, Trajectory, l2_bound_holds, refine_tstar, run
from .exceptions import ValidationError
from .reporting import write_report
from .scalar_ode import majorant_solution
from .scenarios import Scenario
from .spectrum import EigenPair, SobolevEstimate, clamped_eigenpair, verify_positivity

PASS = "pass"
FAIL = "fail"
NOT_APPLICABLE = "not-applicable"

MAJORANT_TOLERANCE = 0.05


@dataclass(eq=False)
class VerificationReport:
    scenario: str
    lambda1: float
    bounds: Optional[BoundReport]
    trajectory: Trajectory
    tstar: Optional[float]
    tstar_bracket: Optional[Tuple[float, float]]
    tstar_phi: Optional[float]
    sandwich: str
    checks: Dict[str, Optional[bool]] = field(default_factory=dict)
    flags: Dict[str, bool] = field(default_factory=dict)
    diagnostics: List[str] = field(default_factory=list)

    @property
    def T_lower(self) -> Optional[float]:
        return self.bounds.T_lower if self.bounds else None

    @property
    def T_tilde(self) -> Optional[float]:
        return self.bounds.T_tilde if self.bounds else None

    @property
    def T0_upper(self) -> Optional[float]:
        return self.bounds.T0_upper if self.bounds else None

    @property
    def Tbar_upper(self) -> Optional[float]:
        return self.bounds.Tbar_upper if self.bounds else None

    @property
    def passed(self) -> bool:
        return self.sandwich != FAIL


def sandwich_verdict(
    T_lower: Optional[float],
    upper: Optional[float],
    trajectory: Trajectory,
    bracket: Optional[Tuple[float, float]]
) -> str:
    """
    Blow-up runs: T_lower <= bracket low and bracket high <= upper, for the
    bounds that apply. Completed runs pass when the horizon stays below the
    upper bound and fail once it reaches it.
    """
    if T_lower is None and upper is None:
        return NOT_APPLICABLE
    if trajectory.verdict == BLOWUP:
        low, high = bracket or (trajectory.final_time, trajectory.final_time)
        if T_lower is not None and low < T_lower:
            return FAIL
        if upper is not None and high > upper:
            return FAIL
        return PASS
    if upper is not None and trajectory.final_time >= upper:
        return FAIL
    return PASS


def majorant_holds(trajectory: Trajectory, bounds: BoundReport, p: float, q: float) -> Optional[bool]:
    """Phi(t_n) <= (1 + 5%) Phi_maj(t_n) with Phi_maj(0) = Phi0"""
    if bounds is None or bounds.T_lower is None:
        return None
    consts = bounds.constants
    reference = majorant_solution(consts.majorant(p, q), consts.Phi0, trajectory.times)
    phi = trajectory.column("phi")
    return bool(np.all(phi <= (1.0 + MAJORANT_TOLERANCE) * reference))


def psi_increasing(trajectory: Trajectory) -> bool:
    psi = trajectory.column("psi")[1:]
    return bool(np.all(np.diff(psi) > 0))


class Verifier:
    """Runs the full bound-versus-simulation comparison for one scenario"""

    def __init__(
        self,
        scenario: Scenario,
        progress_tracker: Optional[ProgressTracker] = None,
        output_dir: Optional[str] = None
    ):
        """Initialize verifier"""
        self.scenario = scenario
        self.progress = progress_tracker
        self.output_dir: Optional[Path] = None
        if output_dir:
            self.output_dir = FileHandler.setup_output_directory(scenario.name, parent_dir=output_dir)

        self.eig: Optional[EigenPair] = None
        self.sobolev: Dict[float, SobolevEstimate] = {}
        self.bounds: Optional[BoundReport] = None
        self.trajectory: Optional[Trajectory] = None

    def update_progress(self, message: str) -> None:
        """Update progress tracker"""
        if self.progress:
            self.progress.update(message)
        logging.info(message)

    def compute_spectrum(self) -> EigenPair:
        try:
            if self.eig is None:
                self.update_progress("Computing first clamped eigenpair...")
                self.eig = clamped_eigenpair(self.scenario.spec.domain)
                self.update_progress(f"Lambda_1 = {self.eig.lambda1:.8g}")
            return self.eig
        except Exception as e:
            logging.error(f"Error computing the spectrum: {str(e)}")
            raise

    def compute_bounds(self) -> Optional[BoundReport]:
        """Bounds for the scenario; None when the sources vanish somewhere"""
        eig = self.compute_spectrum()
        scenario = self.scenario
        if not scenario.spec.coefficients.sources_positive(scenario.spec.horizon):
            if scenario.horizon_from_lower_bound:
                logging.error(f"Error in scenario '{scenario.name}': horizon = lower with vanishing sources")
                raise ValidationError(
                    "horizon = lower needs k1, k2 > 0; set an explicit [run] horizon", hypothesis="lower-bound horizon"
                )
            self.update_progress("Sources vanish somewhere on the horizon; bounds not applicable")
            return None
        try:
            self.update_progress("Computing envelope constants and bounds...")
            report = compute_bounds(
                scenario.spec,
                eig=eig,
                sobolev=self.sobolev,
                epsilon_mode=scenario.epsilon_mode,
                envelope_horizon=scenario.envelope_horizon
            )
            self.sobolev.update({est.r: est for est in report.sobolev.values()})

            if scenario.horizon_from_lower_bound:
                if report.T_lower is None:
                    raise ValidationError(
                        "horizon = lower needs a lower bound for this scenario", hypothesis="lower-bound horizon"
                    )
                self.update_progress(f"Using the lower bound T={report.T_lower:.6g} as horizon")
                self.scenario = scenario.with_horizon(report.T_lower)
                report = compute_bounds(
                    self.scenario.spec,
                    eig=eig,
                    sobolev=self.sobolev,
                    epsilon_mode=scenario.epsilon_mode,
                    envelope_horizon=scenario.envelope_horizon
                )
            self.bounds = report
            return report
        except Exception as e:
            logging.error(f"Error computing bounds: {str(e)}")
            raise

    def simulate(self) -> Trajectory:
        eig = self.compute_spectrum()
        if self.scenario.horizon_from_lower_bound and self.bounds is None:
            self.compute_bounds()
        try:
            spec = self.scenario.spec
            self.update_progress(f"Integrating to t={spec.horizon:.6g}...")
            tracker = ProgressTracker(f"{self.scenario.name}", enabled=bool(self.progress and self.progress.enabled))
            self.trajectory = run(spec, eig=eig, progress=tracker)
            if self.trajectory.verdict == BLOWUP:
                self.update_progress("Rerunning with halved steps to bound the time-step error in t*...")
                refine_tstar(spec, self.trajectory, eig=eig, progress=tracker)
            self.update_progress(
                f"Run finished: {self.trajectory.verdict} at t={self.trajectory.final_time:.6g}"
            )
            return self.trajectory
        except Exception as e:
            logging.error(f"Error during time integration: {str(e)}")
            raise

    def verify(self) -> VerificationReport:
        """Spectrum, bounds, simulation and all checks"""
        eig = self.compute_spectrum()
        bounds = self.compute_bounds()
        trajectory = self.simulate()
        spec = self.scenario.spec

        diagnostics = list(trajectory.diagnostics)
        if bounds is not None:
            diagnostics += bounds.diagnostics

        T_lower = bounds.T_lower if bounds else None
        upper = bounds.upper if bounds else None
        verdict = sandwich_verdict(T_lower, upper, trajectory, trajectory.tstar_ci)

        checks: Dict[str, Optional[bool]] = {
            "l2_bound": l2_bound_holds(trajectory, eig.lambda1),
            "majorant_comparison": majorant_holds(trajectory, bounds, spec.p, spec.q),
            "nonnegative": not trajectory.left_nonnegative,
            "phi1_positive": verify_positivity(eig).passed if spec.domain.is_ball else None,
            "bounded_on_lower_interval": None,
            "psi_increasing": None,
        }
        if T_lower is not None:
            checks["bounded_on_lower_interval"] = trajectory.verdict != BLOWUP or trajectory.final_time >= T_lower
        if bounds is not None and trajectory.verdict == BLOWUP and bounds.admissible_upper.get("H_positive_on_ray"):
            checks["psi_increasing"] = psi_increasing(trajectory)

        flags = dict(self.scenario.applies)
        if bounds is not None:
            flags.update(bounds.admissible_upper)

        report = VerificationReport(
            scenario=self.scenario.name,
            lambda1=eig.lambda1,
            bounds=bounds,
            trajectory=trajectory,
            tstar=trajectory.tstar_numeric,
            tstar_bracket=trajectory.tstar_ci,
            tstar_phi=trajectory.tstar_phi,
            sandwich=verdict,
            checks=checks,
            flags=flags,
            diagnostics=diagnostics
        )
        self.update_progress(f"Sandwich verdict for '{self.scenario.name}': {verdict}")
        return report

    def write_outputs(self, report: VerificationReport) -> Optional[Path]:
        """Emit the requested files into the scenario output directory"""
        if self.output_dir is None:
            return None
        try:
            self.update_progress(f"Writing outputs to {self.output_dir}...")
            write_report(report, self.output_dir, self.scenario.outputs, sobolev=self.sobolev)
            return self.output_dir
        except Exception as e:
            logging.error(f"Error writing outputs: {str(e)}")
            raise

    def __enter__(self) -> 'Verifier':
        """Context manager entry"""
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        """Context manager exit"""
        if exc_type is not None:
            logging.error(f"Error during verification of '{self.scenario.name}': {str(exc_val)}")


def verify(s: Scenario) -> VerificationReport:
    """Verification without file output"""
    with Verifier(s) as verifier:
        return verifier.verify()
