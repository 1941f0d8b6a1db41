"""
Scenario management for QuenchLab.
Built-in presets, sectioned config files, initial-data profiles and
parameter overrides for sweeps.
"""

import configparser
import logging
import math
import re
from copy import deepcopy
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..utils.file_handling import FileHandler
from .bounds import (
    EPSILON_MODES,
    EQUAL_SPLIT,
    EnvelopeConstants,
    applicability,
    corollary_threshold,
    projection_constants,
)
from .domain import DomainDescriptor, Field, build_domain, discretize
from .evolution import (
    COEFFICIENT_NAMES,
    DEFAULT_SAFETY,
    DEFAULT_THRESHOLD,
    CoefficientProfile,
    SystemSpec,
    functionals,
)
from .exceptions import ConfigError, ValidationError
from .spectrum import clamped_eigenpair

SECTIONS = ("scenario", "domain", "coefficients", "exponents", "initial", "run", "bounds", "outputs", "sweep")
OUTPUT_KINDS = ("trajectory-csv", "summary-json", "plots-svg")
HORIZON_FROM_LOWER_BOUND = "lower"

# sweep key -> config section it overrides
SWEEP_TARGETS = {
    "amplitude": "initial",
    "threshold_multiple": "initial",
    "p": "exponents",
    "q": "exponents",
    "resolution": "domain",
    "horizon": "run",
    **{name: "coefficients" for name in COEFFICIENT_NAMES},
}

_PROFILE = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


@dataclass(frozen=True)
class Preset:
    """Built-in scenario the config files can start from"""
    id: str
    name: str
    description: str
    settings: Dict[str, Dict[str, str]]


@dataclass(eq=False)
class Scenario:
    name: str
    spec: SystemSpec
    outputs: Tuple[str, ...] = OUTPUT_KINDS
    epsilon_mode: str = EQUAL_SPLIT
    envelope_horizon: Optional[float] = None
    horizon_from_lower_bound: bool = False
    applies: Dict[str, bool] = field(default_factory=dict)
    sweep_grid: Dict[str, List[str]] = field(default_factory=dict)
    output_dir: Optional[str] = None
    settings: Dict[str, Dict[str, str]] = field(default_factory=dict)
    source: Optional[str] = None

    def with_horizon(self, horizon: float) -> 'Scenario':
        return replace(self, spec=replace(self.spec, horizon=horizon), horizon_from_lower_bound=False)

    def with_overrides(self, overrides: Dict[str, str], name: Optional[str] = None) -> 'Scenario':
        """Rebuild the scenario with sweep-style overrides"""
        settings = deepcopy(self.settings)
        for key, value in overrides.items():
            section = SWEEP_TARGETS.get(key)
            if section is None:
                raise ConfigError(f"'{key}' cannot be swept", path=self.source)
            settings.setdefault(section, {})[key] = str(value)
        settings.setdefault("scenario", {})["name"] = name or self.name
        return build_scenario(settings, path=self.source)


class ScenarioManager:
    """Manages the built-in scenario presets"""

    def __init__(self):
        self.presets: Dict[str, Preset] = {}
        self._initialize_defaults()

    def _initialize_defaults(self) -> None:
        """Initialize default presets"""
        self.presets['disk-blowup'] = Preset(
            id='disk-blowup',
            name='Disk blow-up',
            description='Unit disk, p=3, q=2, h=0, large bump data: T <= t* <= T0',
            settings={
                "domain": {"kind": "ball", "dimension": "2", "radius": "1", "resolution": "64"},
                "coefficients": {"delta1": "1", "delta2": "1", "h1": "0", "h2": "0", "k1": "1", "k2": "1"},
                "exponents": {"p": "3", "q": "2"},
                "initial": {"u0": "bump(amplitude=600)", "v0": "bump(amplitude=600)"},
                "run": {"horizon": "0.05"},
            }
        )

        self.presets['disk-small-data'] = Preset(
            id='disk-small-data',
            name='Disk small data',
            description='Disk blow-up scenario with data reduced x1e-2, run over [0, T]',
            settings={
                "domain": {"kind": "ball", "dimension": "2", "radius": "1", "resolution": "64"},
                "coefficients": {"delta1": "1", "delta2": "1", "h1": "0", "h2": "0", "k1": "1", "k2": "1"},
                "exponents": {"p": "3", "q": "2"},
                "initial": {"u0": "bump(amplitude=6)", "v0": "bump(amplitude=6)"},
                "run": {"horizon": HORIZON_FROM_LOWER_BOUND},
            }
        )

        self.presets['disk-corollary'] = Preset(
            id='disk-corollary',
            name='Disk corollary',
            description='Unit disk, p=q=2, data at 1.2x the corollary threshold',
            settings={
                "domain": {"kind": "ball", "dimension": "2", "radius": "1", "resolution": "64"},
                "coefficients": {"delta1": "1", "delta2": "1", "h1": "0", "h2": "0", "k1": "1", "k2": "1"},
                "exponents": {"p": "2", "q": "2"},
                "initial": {"u0": "bump(amplitude=1)", "v0": "bump(amplitude=1)", "threshold_multiple": "1.2"},
                "run": {"horizon": "0.06"},
            }
        )

        self.presets['square-small-data'] = Preset(
            id='square-small-data',
            name='Square small data',
            description='Unit square with h>0, p=3, q=2, run over [0, T]; upper bounds not applicable',
            settings={
                "domain": {"kind": "rectangle", "lx": "1", "ly": "1", "resolution": "32"},
                "coefficients": {"delta1": "1", "delta2": "1", "h1": "0.5", "h2": "0.5", "k1": "1", "k2": "1"},
                "exponents": {"p": "3", "q": "2"},
                "initial": {"u0": "bump(amplitude=2)", "v0": "bump(amplitude=1)"},
                "run": {"horizon": HORIZON_FROM_LOWER_BOUND},
            }
        )

    def get_preset(self, preset_id: str) -> Optional[Preset]:
        """Get preset by ID"""
        return self.presets.get(preset_id)

    def get_preset_descriptions(self) -> Dict[str, str]:
        """Get dictionary of preset ids and descriptions"""
        return {p.id: p.description for p in self.presets.values()}

    def scenario(self, preset_id: str) -> Scenario:
        """Build a scenario straight from a preset"""
        preset = self.get_preset(preset_id)
        if preset is None:
            raise ConfigError(f"Unknown preset '{preset_id}'")
        settings = deepcopy(preset.settings)
        settings.setdefault("scenario", {})["name"] = preset.id
        return build_scenario(settings)


class _Reader:
    """Typed access to raw settings with line-anchored errors"""

    def __init__(self, settings: Dict[str, Dict[str, str]], path: Optional[str], lines: Dict[Tuple[str, str], int]):
        self.settings = settings
        self.path = path
        self.lines = lines

    def error(self, section: str, key: Optional[str], message: str, hypothesis: str = "config-schema") -> ConfigError:
        line = self.lines.get((section, key)) if key else self.lines.get((section, None))
        return ConfigError(f"[{section}] {message}", path=self.path, line=line, hypothesis=hypothesis)

    def raw(self, section: str, key: str, default: Optional[str] = None) -> Optional[str]:
        value = self.settings.get(section, {}).get(key)
        return default if value is None or value.strip() == "" else value.strip()

    def number(self, section: str, key: str, default: Optional[float] = None) -> Optional[float]:
        value = self.raw(section, key)
        if value is None:
            return default
        try:
            number = float(value)
        except ValueError:
            raise self.error(section, key, f"{key} = {value!r} is not a number")
        if not math.isfinite(number):
            raise self.error(section, key, f"{key} must be finite")
        return number

    def integer(self, section: str, key: str, default: int) -> int:
        value = self.number(section, key, float(default))
        if value != int(value):
            raise self.error(section, key, f"{key} must be an integer")
        return int(value)


def _line_index(text: str) -> Dict[Tuple[str, Optional[str]], int]:
    """Line numbers of section headers and keys"""
    lines: Dict[Tuple[str, Optional[str]], int] = {}
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip().lower()
            lines[(section, None)] = number
        elif section and "=" in stripped and not stripped.startswith(("#", ";")):
            lines[(section, stripped.split("=", 1)[0].strip().lower())] = number
    return lines


def _parse_coefficient(reader: _Reader, name: str, default: float):
    """Constant 'x' or table 't0:v0, t1:v1, ...'"""
    value = reader.raw("coefficients", name)
    if value is None:
        return default
    if ":" not in value:
        return reader.number("coefficients", name)
    knots = []
    for item in value.split(","):
        try:
            t, v = (float(part) for part in item.split(":"))
        except ValueError:
            raise reader.error("coefficients", name, f"bad table entry {item.strip()!r} (expected t:value)")
        knots.append((t, v))
    times = [t for t, _ in knots]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise reader.error("coefficients", name, "table times must be strictly increasing")
    return knots


def _coefficient_profile(reader: _Reader) -> CoefficientProfile:
    defaults = dict(delta1=1.0, delta2=1.0, h1=0.0, h2=0.0, k1=1.0, k2=1.0)
    unknown = set(reader.settings.get("coefficients", {})) - set(COEFFICIENT_NAMES)
    if unknown:
        raise reader.error("coefficients", sorted(unknown)[0], f"unknown coefficient '{sorted(unknown)[0]}'")

    columns = {name: _parse_coefficient(reader, name, defaults[name]) for name in COEFFICIENT_NAMES}
    for name, column in columns.items():
        values = [v for _, v in column] if isinstance(column, list) else [column]
        if name.startswith("delta") and min(values) <= 0:
            raise reader.error("coefficients", name, f"{name} must be positive", hypothesis="delta_i > 0")
        if min(values) < 0:
            raise reader.error("coefficients", name, f"{name} must be nonnegative", hypothesis=f"{name} >= 0")

    if not any(isinstance(column, list) for column in columns.values()):
        return CoefficientProfile.constant(**columns)

    times = sorted({t for column in columns.values() if isinstance(column, list) for t, _ in column})
    table = {}
    for name, column in columns.items():
        if isinstance(column, list):
            table[name] = np.interp(times, [t for t, _ in column], [v for _, v in column])
        else:
            table[name] = column
    return CoefficientProfile.table(times, **table)


def _domain(reader: _Reader) -> DomainDescriptor:
    kind = (reader.raw("domain", "kind") or "ball").lower()
    try:
        return DomainDescriptor(
            kind=kind,
            dimension=reader.integer("domain", "dimension", 2),
            radius=reader.number("domain", "radius", 1.0),
            lx=reader.number("domain", "lx", 1.0),
            ly=reader.number("domain", "ly", 1.0),
            resolution=reader.integer("domain", "resolution", 64),
        )
    except ConfigError:
        raise
    except ValidationError as e:
        raise reader.error("domain", None, str(e), hypothesis=e.hypothesis)


def _bump(desc: DomainDescriptor):
    """Smooth clamped shape with peak 1"""
    if desc.is_ball:
        return lambda r: np.clip(1.0 - (r / desc.radius) ** 2, 0.0, None) ** 2
    return lambda x, y: (16.0 * x * (desc.lx - x) * y * (desc.ly - y) / (desc.lx * desc.ly) ** 2) ** 2


def initial_profile(spec_text: str, desc: DomainDescriptor, amplitude: Optional[float] = None) -> np.ndarray:
    """
    Nodal values of a named initial profile:
    bump(amplitude=a), gaussian(amplitude=a, width=w), zero, file:<path>.
    amplitude, when given, overrides the profile's own amplitude.
    """
    grid, _ = build_domain(desc)
    text = spec_text.strip()
    if text.startswith("file:"):
        try:
            values = FileHandler.read_grid_file(text[len("file:"):].strip())
        except (OSError, ValueError) as e:
            raise ValidationError(str(e), hypothesis="grid-file")
        if values.size != grid.n_nodes:
            raise ValidationError(
                f"Grid file has {values.size} values, grid has {grid.n_nodes} nodes", hypothesis="grid-file"
            )
        return values * (1.0 if amplitude is None else amplitude)

    match = _PROFILE.match(text)
    if not match:
        raise ValidationError(f"Cannot parse initial profile {text!r}", hypothesis="initial-profile")
    name, arg_text = match.group(1), match.group(2) or ""
    args: Dict[str, float] = {}
    for item in filter(None, (part.strip() for part in arg_text.split(","))):
        key, _, value = item.partition("=")
        try:
            args[key.strip()] = float(value)
        except ValueError:
            raise ValidationError(f"Bad profile argument {item!r}", hypothesis="initial-profile")
    a = args.get("amplitude", 1.0) if amplitude is None else amplitude
    shape = _bump(desc)

    if name == "zero":
        func = lambda *xs: np.zeros_like(xs[0])
    elif name == "bump":
        func = lambda *xs: a * shape(*xs)
    elif name == "gaussian":
        width = args.get("width", 0.25 * desc.length_scale)
        if width <= 0:
            raise ValidationError("gaussian width must be positive", hypothesis="initial-profile")
        if desc.is_ball:
            func = lambda r: a * np.exp(-r ** 2 / (2 * width ** 2)) * shape(r)
        else:
            cx, cy = desc.lx / 2.0, desc.ly / 2.0
            func = lambda x, y: a * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * width ** 2)) * shape(x, y)
    else:
        raise ValidationError(f"Unknown initial profile '{name}'", hypothesis="initial-profile")
    return Field.from_function(grid, func).values


def _scale_to_threshold(
    u0: np.ndarray,
    v0: np.ndarray,
    desc: DomainDescriptor,
    profile: CoefficientProfile,
    p: float,
    q: float,
    horizon: float,
    multiple: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Rescale (u0, v0) so that Psi0 = multiple x the corollary threshold"""
    eig = clamped_eigenpair(desc)
    psi_unit = functionals(u0, v0, discretize(desc), eig).psi
    if not psi_unit > 0:
        raise ValidationError("Initial data have Psi0 = 0 and cannot be scaled", hypothesis="Psi0 > 0")
    upper = projection_constants(profile, desc.measure, p, q, horizon)
    if not upper.cbar > 0:
        raise ValidationError("Threshold scaling needs k1, k2 > 0", hypothesis="k_i > 0")
    consts = EnvelopeConstants(delta=upper.delta, Lambda1=eig.lambda1, cbar=upper.cbar)
    scale = multiple * corollary_threshold(consts, p) / psi_unit
    return u0 * scale, v0 * scale


def build_scenario(settings: Dict[str, Dict[str, str]], *, path: Optional[str] = None,
                   lines: Optional[Dict] = None) -> Scenario:
    """Validate raw settings (section -> key -> text) into a Scenario"""
    reader = _Reader(settings, path, lines or {})
    unknown = set(settings) - set(SECTIONS)
    if unknown:
        raise reader.error(sorted(unknown)[0], None, "unknown section")

    name = reader.raw("scenario", "name") or (FileHandler.get_base_name(path) if path else "scenario")
    outputs_text = reader.raw("scenario", "outputs")
    outputs = OUTPUT_KINDS
    if outputs_text:
        outputs = tuple(item.strip() for item in outputs_text.split(",") if item.strip())
        bad = [item for item in outputs if item not in OUTPUT_KINDS]
        if bad:
            raise reader.error("scenario", "outputs", f"unknown output kind '{bad[0]}'")

    desc = _domain(reader)
    profile = _coefficient_profile(reader)

    p = reader.number("exponents", "p")
    q = reader.number("exponents", "q")
    if p is None or q is None:
        raise reader.error("exponents", None, "both p and q are required")
    if not p > 1:
        raise reader.error("exponents", "p", f"p must exceed 1, got {p:g}", hypothesis="p > 1")
    if not q > 1:
        raise reader.error("exponents", "q", f"q must exceed 1, got {q:g}", hypothesis="q > 1")
    if not p >= q:
        raise reader.error("exponents", "p", f"need p >= q, got p={p:g}, q={q:g}", hypothesis="p >= q > 1")

    horizon_text = reader.raw("run", "horizon", HORIZON_FROM_LOWER_BOUND)
    from_lower = horizon_text.lower() == HORIZON_FROM_LOWER_BOUND
    horizon = 1.0 if from_lower else reader.number("run", "horizon")
    if not horizon > 0:
        raise reader.error("run", "horizon", "horizon must be positive", hypothesis="horizon > 0")

    amplitude = reader.number("initial", "amplitude")
    try:
        u0 = initial_profile(reader.raw("initial", "u0", "zero"), desc, amplitude)
    except ValidationError as e:
        raise reader.error("initial", "u0", str(e), hypothesis=e.hypothesis)
    try:
        v0 = initial_profile(reader.raw("initial", "v0", "zero"), desc, amplitude)
    except ValidationError as e:
        raise reader.error("initial", "v0", str(e), hypothesis=e.hypothesis)

    multiple = reader.number("initial", "threshold_multiple")
    if multiple is not None:
        if not multiple > 0:
            raise reader.error("initial", "threshold_multiple", "threshold_multiple must be positive")
        try:
            u0, v0 = _scale_to_threshold(u0, v0, desc, profile, p, q, horizon, multiple)
        except ValidationError as e:
            raise reader.error("initial", "threshold_multiple", str(e), hypothesis=e.hypothesis)

    epsilon_mode = reader.raw("bounds", "epsilon_mode", EQUAL_SPLIT)
    if epsilon_mode not in EPSILON_MODES:
        raise reader.error("bounds", "epsilon_mode", f"epsilon_mode must be one of {', '.join(EPSILON_MODES)}")

    try:
        spec = SystemSpec(
            domain=desc,
            coefficients=profile,
            p=p,
            q=q,
            u0=u0,
            v0=v0,
            horizon=horizon,
            blowup_threshold=reader.number("run", "blowup_threshold", DEFAULT_THRESHOLD),
            dt_max=reader.number("run", "dt_max"),
            safety=reader.number("run", "safety", DEFAULT_SAFETY),
        )
    except ValidationError as e:
        raise ConfigError(str(e), path=path, hypothesis=e.hypothesis)

    sweep_grid: Dict[str, List[str]] = {}
    for key, value in settings.get("sweep", {}).items():
        if key not in SWEEP_TARGETS:
            raise reader.error("sweep", key, f"'{key}' cannot be swept")
        sweep_grid[key] = [item.strip() for item in value.split(",") if item.strip()]

    applies = applicability(spec)
    if not applies["upper_bounds"]:
        logging.info(f"Scenario '{name}': upper bounds not applicable (ball with h = 0 required)")

    return Scenario(
        name=name,
        spec=spec,
        outputs=outputs,
        epsilon_mode=epsilon_mode,
        envelope_horizon=reader.number("bounds", "envelope_horizon"),
        horizon_from_lower_bound=from_lower,
        applies=applies,
        sweep_grid=sweep_grid,
        output_dir=reader.raw("outputs", "directory"),
        settings=deepcopy(settings),
        source=path,
    )


def load_scenario(path, manager: Optional[ScenarioManager] = None) -> Scenario:
    """Parse a scenario file, optionally layered on a preset"""
    path = str(path)
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as e:
        logging.error(f"Error reading scenario file: {e}")
        raise ConfigError(f"cannot read file: {e.strerror}", path=path)

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=path)
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"duplicate key '{e.option}' in [{e.section}]", path=path, line=e.lineno)
    except configparser.DuplicateSectionError as e:
        raise ConfigError(f"duplicate section [{e.section}]", path=path, line=e.lineno)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("key outside of any section", path=path, line=e.lineno)
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ConfigError("cannot parse line", path=path, line=line)

    lines = _line_index(text)
    settings: Dict[str, Dict[str, str]] = {}
    preset_id = parser.get("scenario", "preset", fallback=None)
    if preset_id:
        preset = (manager or ScenarioManager()).get_preset(preset_id.strip())
        if preset is None:
            raise ConfigError(f"unknown preset '{preset_id}'", path=path, line=lines.get(("scenario", "preset")))
        settings = deepcopy(preset.settings)

    for section in parser.sections():
        settings.setdefault(section.lower(), {}).update(
            {key: value for key, value in parser.items(section) if not (section == "scenario" and key == "preset")}
        )

    scenario = build_scenario(settings, path=path, lines=lines)
    logging.info(f"Loaded scenario '{scenario.name}' ({scenario.spec.domain.describe()})")
    return scenario
