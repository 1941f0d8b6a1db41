"""
QuenchLab command-line application.
Loads settings, configures logging and dispatches the subcommands.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from dotenv import load_dotenv

from .core.bounds import compute_bounds
from .core.domain import discretize
from .core.exceptions import NumericalError, SandwichFailure, ValidationError
from .core.reporting import SUMMARY_FILE, TRAJECTORY_FILE, bounds_dict, constants_dict, json_safe, write_trajectory_csv
from .core.scenarios import Scenario, ScenarioManager, load_scenario
from .core.spectrum import (
    clamped_ball_eigenvalue,
    clamped_eigenpair,
    probe_ratios,
    sobolev_constant,
    verify_positivity,
)
from .core.sweep import sweep
from .core.verification import FAIL, Verifier
from .utils.file_handling import FileHandler
from .utils.logging_setup import setup_logging
from .utils.progress_tracking import BatchProgressTracker, ProgressTracker

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_SANDWICH = 3


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit 1)"""

    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}", hypothesis="command-line")


class QuenchLabApp:
    """Application settings plus the subcommand implementations"""

    def __init__(self, verbose: bool = False, quiet: bool = False, log_dir: Optional[str] = None):
        self.initialize_app(log_dir)
        setup_logging(self.log_dir, verbose=verbose, quiet=quiet)
        self.quiet = quiet
        self.manager = ScenarioManager()

    def initialize_app(self, log_dir: Optional[str] = None):
        """Initialize application settings from the environment"""
        load_dotenv()
        self.log_dir = log_dir or os.getenv("QUENCHLAB_LOG_DIR", "logs")
        self.output_root = os.getenv("QUENCHLAB_OUTPUT_DIR", "results")
        threads = os.getenv("QUENCHLAB_THREADS")
        self.threads = int(threads) if threads and threads.isdigit() and int(threads) > 0 else None

    def scenario(self, config: str, resolution: Optional[int] = None) -> Scenario:
        """Scenario from a config path, or from a preset id"""
        if not Path(config).exists() and self.manager.get_preset(config):
            scenario = self.manager.scenario(config)
        else:
            scenario = load_scenario(config, self.manager)
        if resolution is not None:
            scenario = scenario.with_overrides({"resolution": str(resolution)}, name=scenario.name)
        return scenario

    def output_dir(self, scenario: Scenario, override: Optional[str]) -> str:
        return override or scenario.output_dir or self.output_root

    def show(self, text: str) -> None:
        print(text)

    def cmd_eig(self, args) -> int:
        scenario = self.scenario(args.config, args.resolution)
        desc = scenario.spec.domain
        eig = clamped_eigenpair(desc)
        positivity = verify_positivity(eig)
        result = {
            "domain": desc.describe(),
            "lambda1": eig.lambda1,
            "residual": eig.residual,
            "iterations": eig.iterations,
            "min_phi1": positivity.min_value,
            "phi1_positive": positivity.passed,
        }
        if desc.is_ball:
            result["bessel_lambda1"] = clamped_ball_eigenvalue(desc.dimension, desc.radius)
            result["relative_error"] = abs(eig.lambda1 / result["bessel_lambda1"] - 1.0)
        self.show(json.dumps(json_safe(result), indent=2, sort_keys=True))
        return EXIT_OK

    def cmd_sobolev(self, args) -> int:
        scenario = self.scenario(args.config, args.resolution)
        desc = scenario.spec.domain
        disc = discretize(desc)
        rows = {}
        for r in args.r:
            estimate = sobolev_constant(desc, r, disc=disc)
            row = {"S": estimate.S, "ratio": estimate.ratio, "method": estimate.method,
                   "iterations": estimate.iterations, "converged": estimate.converged}
            if args.probes:
                probes = probe_ratios(disc, r, args.probes, seed=args.seed)
                row["max_probe_ratio"] = float(np.max(probes))
                row["envelope_holds"] = bool(np.max(probes) <= estimate.S)
            rows[f"{r:g}"] = row
        self.show(json.dumps(json_safe(rows), indent=2, sort_keys=True))
        return EXIT_OK

    def cmd_simulate(self, args) -> int:
        scenario = self.scenario(args.config, args.resolution)
        verifier = Verifier(scenario)
        trajectory = verifier.simulate()
        out = FileHandler.setup_output_directory(scenario.name, parent_dir=self.output_dir(scenario, args.output))
        write_trajectory_csv(trajectory, out / TRAJECTORY_FILE)
        summary = {
            "scenario": scenario.name,
            "lambda1": verifier.eig.lambda1,
            "tstar": {
                "value": trajectory.tstar_numeric,
                "low": trajectory.tstar_ci[0] if trajectory.tstar_ci else None,
                "high": trajectory.tstar_ci[1] if trajectory.tstar_ci else None,
                "phi_based": trajectory.tstar_phi,
            },
            "verdicts": {"run": trajectory.verdict, "termination": trajectory.termination},
            "run": {"samples": len(trajectory.samples), "final_time": trajectory.final_time,
                    "rejected_steps": trajectory.rejected_steps, "p_eff": trajectory.p_eff},
            "diagnostics": trajectory.diagnostics,
        }
        FileHandler.save_json(json_safe(summary), out / SUMMARY_FILE)
        self.show(f"{scenario.name}: {trajectory.verdict} at t={trajectory.final_time:.10g} -> {out}")
        return EXIT_OK

    def cmd_bounds(self, args) -> int:
        scenario = self.scenario(args.config, args.resolution)
        mode = args.epsilon_mode or scenario.epsilon_mode
        report = compute_bounds(scenario.spec, epsilon_mode=mode, envelope_horizon=scenario.envelope_horizon)
        self.show(report.format_text())
        payload = {
            "scenario": scenario.name,
            "lambda1": report.constants.Lambda1,
            "constants": constants_dict(report),
            "bounds": bounds_dict(report),
            **report.provenance(),
        }
        self.show(json.dumps(json_safe(payload), indent=2, sort_keys=True))
        return EXIT_OK

    def cmd_verify(self, args) -> int:
        scenario = self.scenario(args.config, args.resolution)
        tracker = ProgressTracker(scenario.name, enabled=False if self.quiet else None)
        with Verifier(scenario, tracker, self.output_dir(scenario, args.output)) as verifier:
            report = verifier.verify()
            out = verifier.write_outputs(report)
        self.show(f"{scenario.name}: sandwich {report.sandwich} -> {out}")
        if report.sandwich == FAIL:
            raise SandwichFailure(
                f"t* bracket {report.tstar_bracket} is not inside [T={report.T_lower}, upper={report.bounds.upper}]"
            )
        return EXIT_OK

    def cmd_sweep(self, args) -> int:
        scenario = self.scenario(args.config, args.resolution)
        output_root = self.output_dir(scenario, args.output)
        tracker = BatchProgressTracker(f"sweep {scenario.name}", enabled=False if self.quiet else None)
        table = sweep(scenario, threads=args.threads or self.threads, output_dir=output_root, progress=tracker)
        out = FileHandler.setup_output_directory(scenario.name, parent_dir=output_root)
        path = table.write_csv(out / "sweep.csv")
        self.show(f"{scenario.name}: {len(table.rows)} rows -> {path}")
        return EXIT_OK

    def cmd_presets(self, args) -> int:
        for preset_id, description in self.manager.get_preset_descriptions().items():
            self.show(f"{preset_id:20s} {description}")
        return EXIT_OK


def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="quenchlab", description="Blow-up time bounds for coupled fourth-order systems")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    parser.add_argument("--quiet", action="store_true", help="no progress bars, warnings only on the console")
    parser.add_argument("--log-dir", help="directory for quenchlab.log (default $QUENCHLAB_LOG_DIR or logs)")
    commands = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)

    def command(name, help_text, config=True):
        sub = commands.add_parser(name, help=help_text)
        if config:
            sub.add_argument("config", help="scenario file or preset id")
            sub.add_argument("--resolution", type=int, help="override [domain] resolution")
        return sub

    command("eig", "first clamped eigenpair")
    sobolev = command("sobolev", "Sobolev embedding constants")
    sobolev.add_argument("--r", type=_float_list, required=True, help="comma-separated exponents")
    sobolev.add_argument("--probes", type=int, default=0, help="random probes for the envelope check")
    sobolev.add_argument("--seed", type=int, default=0)
    simulate = command("simulate", "integrate the system")
    simulate.add_argument("--output", help="parent directory for outputs")
    bounds = command("bounds", "lower and upper bounds")
    bounds.add_argument("--epsilon-mode", choices=("equal-split", "optimized"))
    verify = command("verify", "bounds, simulation and the sandwich check")
    verify.add_argument("--output", help="parent directory for outputs")
    sweep_cmd = command("sweep", "parameter sweep")
    sweep_cmd.add_argument("--threads", type=int)
    sweep_cmd.add_argument("--output", help="parent directory for outputs")
    command("presets", "list built-in scenarios", config=False)
    return parser


def cli(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns the process exit code"""
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise ValidationError("a subcommand is required (see --help)", hypothesis="command-line")
        app = QuenchLabApp(verbose=args.verbose, quiet=args.quiet, log_dir=args.log_dir)
        return getattr(app, f"cmd_{args.command}")(args)
    except SandwichFailure as e:
        logging.error(f"Sandwich check failed: {e}")
        return EXIT_SANDWICH
    except ValidationError as e:
        hypothesis = f" [{e.hypothesis}]" if e.hypothesis else ""
        print(f"error: {e}{hypothesis}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(cli())
