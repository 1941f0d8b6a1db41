"""
Time integration of the coupled fourth-order system for QuenchLab.

    u_t + delta1 Lap^2 u - h1 Lap u = k1 v^p
    v_t + delta2 Lap^2 v - h2 Lap v = k2 u^q

with clamped boundary conditions. The fourth-order part is treated by
linearly implicit Euler, the power sources explicitly.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu
from scipy.stats import linregress

from ..utils.progress_tracking import ProgressTracker
from .domain import Discretization, DomainDescriptor, build_domain, discretize
from .exceptions import NumericalError, StepRejected, ValidationError
from .spectrum import EigenPair, clamped_eigenpair

COEFFICIENT_NAMES = ("delta1", "delta2", "h1", "h2", "k1", "k2")
CSV_COLUMNS = (
    "t", "phi", "phi1", "phi2", "psi", "psi1", "psi2",
    "sup_u", "sup_v", "min_u", "min_v", "dt"
)

COMPLETED = "completed-horizon"
BLOWUP = "blowup-detected"

DEFAULT_THRESHOLD = 1e8
DEFAULT_SAFETY = 0.1
PHI_GROWTH_LIMIT = 4.0
REFRESH_RTOL = 1e-12
DT_UNDERFLOW = 1e-14
NEGATIVITY_TOL = 1e-6
ENVELOPE_SAMPLES = 1025


class Coefficients(NamedTuple):
    delta1: float
    delta2: float
    h1: float
    h2: float
    k1: float
    k2: float


@dataclass(frozen=True, eq=False)
class CoefficientProfile:
    """Constant or piecewise-linear (in t) coefficients of the system"""
    kind: str
    times: np.ndarray
    values: Dict[str, np.ndarray]

    @classmethod
    def constant(cls, delta1=1.0, delta2=1.0, h1=0.0, h2=0.0, k1=1.0, k2=1.0) -> 'CoefficientProfile':
        columns = dict(delta1=delta1, delta2=delta2, h1=h1, h2=h2, k1=k1, k2=k2)
        return cls(
            kind="constant",
            times=np.zeros(1),
            values={name: np.array([float(value)]) for name, value in columns.items()}
        )

    @classmethod
    def table(cls, times: Iterable[float], **columns) -> 'CoefficientProfile':
        """Knot times plus one column per coefficient; scalars are broadcast"""
        times = np.asarray(list(times), dtype=float)
        if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0):
            raise ValidationError("Coefficient table times must be strictly increasing", hypothesis="table-times")
        defaults = dict(delta1=1.0, delta2=1.0, h1=0.0, h2=0.0, k1=1.0, k2=1.0)
        values = {}
        for name in COEFFICIENT_NAMES:
            column = np.broadcast_to(np.asarray(columns.get(name, defaults[name]), dtype=float), times.shape)
            values[name] = column.copy()
        unknown = set(columns) - set(COEFFICIENT_NAMES)
        if unknown:
            raise ValidationError(f"Unknown coefficients: {sorted(unknown)}", hypothesis="coefficient-names")
        return cls(kind="table", times=times, values=values)

    def at(self, t: float) -> Coefficients:
        if self.kind == "constant":
            return Coefficients(*(float(self.values[name][0]) for name in COEFFICIENT_NAMES))
        return Coefficients(*(float(np.interp(t, self.times, self.values[name])) for name in COEFFICIENT_NAMES))

    def sample_times(self, horizon: float) -> np.ndarray:
        """Dense times on [0, horizon] including every knot inside it"""
        dense = np.linspace(0.0, horizon, ENVELOPE_SAMPLES)
        knots = self.times[(self.times > 0.0) & (self.times < horizon)]
        return np.union1d(dense, knots)

    def series(self, name: str, horizon: float) -> np.ndarray:
        if self.kind == "constant":
            return np.full(self.sample_times(horizon).size, float(self.values[name][0]))
        return np.interp(self.sample_times(horizon), self.times, self.values[name])

    def sup(self, name: str, horizon: float) -> float:
        return float(self.series(name, horizon).max())

    def inf(self, name: str, horizon: float) -> float:
        return float(self.series(name, horizon).min())

    @property
    def h_zero(self) -> bool:
        return all(np.all(self.values[name] == 0.0) for name in ("h1", "h2"))

    def sources_positive(self, horizon: float) -> bool:
        return self.inf("k1", horizon) > 0.0 and self.inf("k2", horizon) > 0.0

    def validate(self, horizon: float) -> None:
        for name in ("delta1", "delta2"):
            if self.inf(name, horizon) <= 0.0:
                raise ValidationError(f"{name} must be positive on [0, {horizon:g}]", hypothesis="delta_i > 0")
        for name in ("h1", "h2", "k1", "k2"):
            if self.inf(name, horizon) < 0.0:
                raise ValidationError(f"{name} must be nonnegative on [0, {horizon:g}]", hypothesis=f"{name} >= 0")
        for name in COEFFICIENT_NAMES:
            if not np.all(np.isfinite(self.values[name])):
                raise ValidationError(f"{name} must be bounded", hypothesis="bounded coefficients")


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Data of one initial-boundary value problem"""
    domain: DomainDescriptor
    coefficients: CoefficientProfile
    p: float
    q: float
    u0: np.ndarray
    v0: np.ndarray
    horizon: float
    blowup_threshold: float = DEFAULT_THRESHOLD
    dt_max: Optional[float] = None
    safety: float = DEFAULT_SAFETY

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValidationError(f"Need p > 1, got p={self.p}", hypothesis="p > 1")
        if not self.q > 1.0:
            raise ValidationError(f"Need q > 1, got q={self.q}", hypothesis="q > 1")
        if not self.p >= self.q:
            raise ValidationError(f"Need p >= q, got p={self.p}, q={self.q}", hypothesis="p >= q > 1")
        if not self.horizon > 0:
            raise ValidationError(f"Horizon must be positive, got {self.horizon}", hypothesis="horizon > 0")
        if not self.blowup_threshold > 0:
            raise ValidationError("Blow-up threshold must be positive", hypothesis="M > 0")
        if not 0.0 < self.safety <= 1.0:
            raise ValidationError(f"Safety factor must lie in (0, 1], got {self.safety}", hypothesis="safety")
        if self.dt_max is not None and not self.dt_max > 0:
            raise ValidationError("dt_max must be positive", hypothesis="dt_max > 0")

        grid, _ = build_domain(self.domain)
        for name in ("u0", "v0"):
            values = np.asarray(getattr(self, name), dtype=float)
            if values.shape != (grid.n_nodes,):
                raise ValidationError(
                    f"{name} has {values.size} values, grid has {grid.n_nodes} nodes", hypothesis="field-length"
                )
            if not np.all(np.isfinite(values)):
                raise ValidationError(f"{name} has nonfinite values", hypothesis="finite data")
            if np.any(values < 0.0):
                raise ValidationError(f"{name} must be nonnegative", hypothesis="nonnegative initial data")
            if np.any(values[grid.boundary_mask] != 0.0):
                raise ValidationError(f"{name} must vanish on the boundary", hypothesis="clamped initial data")
            object.__setattr__(self, name, values)
        self.coefficients.validate(self.horizon)

    @property
    def upper_bound_applicable(self) -> bool:
        """Blow-up theory needs a ball and h_i = 0"""
        return self.domain.is_ball and self.coefficients.h_zero


class State(NamedTuple):
    u: np.ndarray
    v: np.ndarray
    t: float


class Functionals(NamedTuple):
    phi: float
    phi1: float
    phi2: float
    psi: float
    psi1: float
    psi2: float


class Sample(NamedTuple):
    t: float
    phi: float
    phi1: float
    phi2: float
    psi: float
    psi1: float
    psi2: float
    sup_u: float
    sup_v: float
    min_u: float
    min_v: float
    dt: float
    l2_sq: float


@dataclass(frozen=True)
class BlowupFit:
    tstar: float
    stderr: float
    slope: float
    n_samples: int


class StepRefinement(NamedTuple):
    safety: float
    tstar_refined: float
    shift: float
    richardson: float


@dataclass(eq=False)
class Trajectory:
    """Accepted samples of one run plus the verdict"""
    samples: List[Sample]
    verdict: str
    termination: str
    p_eff: float
    tstar_numeric: Optional[float] = None
    tstar_ci: Optional[Tuple[float, float]] = None
    tstar_phi: Optional[float] = None
    refinement: Optional[StepRefinement] = None
    left_nonnegative: bool = False
    rejected_steps: int = 0
    diagnostics: List[str] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        index = Sample._fields.index(name)
        return np.array([sample[index] for sample in self.samples])

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    @property
    def final_time(self) -> float:
        return self.samples[-1].t

    def rows(self) -> List[Tuple[float, ...]]:
        return [tuple(getattr(sample, name) for name in CSV_COLUMNS) for sample in self.samples]


def effective_exponent(p: float, q: float) -> float:
    """
    Exponent p_eff such that Psi^(1 - p_eff) is affine near blow-up.
    Self-similar rates of u' ~ v^p, v' ~ u^q give u ~ (t* - t)^-(p+1)/(pq-1);
    p_eff = p when p = q.
    """
    return 1.0 + (p * q - 1.0) / (p + 1.0)


def default_dt_max(spec: SystemSpec) -> float:
    """Largest step: resolves the slowest clamped mode and the horizon"""
    delta_max = max(spec.coefficients.sup("delta1", spec.horizon), spec.coefficients.sup("delta2", spec.horizon))
    lambda_ref = (math.pi / spec.domain.length_scale) ** 4
    return min(spec.horizon / 256.0, 1.0 / (16.0 * delta_max * lambda_ref))


def _interior(x: np.ndarray, disc: Discretization) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape == (disc.grid.n_nodes,) and disc.grid.n_nodes != disc.grid.n_interior:
        return disc.grid.restrict(x)
    return x


def functionals(u: np.ndarray, v: np.ndarray, ops: Discretization, eig: EigenPair) -> Functionals:
    """Phi_i = ||Lap_h u_i||^2 and Psi_i = <u_i, phi_1> by quadrature"""
    u = _interior(u, ops)
    v = _interior(v, ops)
    weighted_phi = ops.mass * eig.interior
    phi1 = ops.bilaplacian.energy(u)
    phi2 = ops.bilaplacian.energy(v)
    psi1 = float(weighted_phi @ u)
    psi2 = float(weighted_phi @ v)
    return Functionals(phi1 + phi2, phi1, phi2, psi1 + psi2, psi1, psi2)


def _close(a: Tuple[float, float], b: Tuple[float, float]) -> bool:
    return all(abs(x - y) <= REFRESH_RTOL * max(abs(x), abs(y)) for x, y in zip(a, b))


class ImexStepper:
    """Linearly implicit Euler step with sparse LU factors reused across steps"""

    def __init__(self, spec: SystemSpec, disc: Discretization):
        self.spec = spec
        self.disc = disc
        self._stiffness = disc.bilaplacian.stiffness.tocsc()
        self._laplacian = disc.laplacian.stiffness.tocsc()
        self._mass = disc.mass
        self._mass_matrix = sparse.diags(disc.mass).tocsc()
        self._factors: List[Tuple[Tuple[float, float], object]] = []
        self.factorizations = 0

    def _solver(self, a: float, b: float):
        """Factor of W + a K - b T, T the Laplacian stiffness"""
        key = (a, b)
        for cached_key, lu in self._factors:
            if _close(cached_key, key):
                return lu
        matrix = self._mass_matrix + a * self._stiffness - b * self._laplacian
        try:
            lu = splu(matrix.tocsc())
        except RuntimeError as e:
            logging.error(f"Error factorizing the implicit operator: {e}")
            raise NumericalError(f"Linear solve failed: {e}") from e
        self.factorizations += 1
        self._factors = [(key, lu)] + self._factors[:1]
        return lu

    def step(self, state: State, dt: float) -> State:
        if dt <= 0:
            raise ValidationError(f"Time step must be positive, got {dt}", hypothesis="dt > 0")
        spec = self.spec
        now = spec.coefficients.at(state.t)
        new = spec.coefficients.at(state.t + dt)

        with np.errstate(over='ignore', invalid='ignore'):
            source_u = np.maximum(state.v, 0.0) ** spec.p
            source_v = np.maximum(state.u, 0.0) ** spec.q
            rhs_u = self._mass * (state.u + dt * now.k1 * source_u)
            rhs_v = self._mass * (state.v + dt * now.k2 * source_v)

        if not (np.all(np.isfinite(rhs_u)) and np.all(np.isfinite(rhs_v))):
            raise StepRejected(f"Nonfinite source at t={state.t:.6g}")

        u_new = self._solver(dt * new.delta1, dt * new.h1).solve(rhs_u)
        v_new = self._solver(dt * new.delta2, dt * new.h2).solve(rhs_v)
        if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))):
            raise StepRejected(f"Nonfinite state after step from t={state.t:.6g}")
        return State(u_new, v_new, state.t + dt)


def step_imex(
    state: State,
    dt: float,
    spec: SystemSpec,
    ops: Discretization,
    stepper: Optional[ImexStepper] = None
) -> State:
    """One IMEX step; pass a stepper to reuse factorizations"""
    return (stepper or ImexStepper(spec, ops)).step(state, dt)


def _source_rate(state: State, spec: SystemSpec, sup_u: float, sup_v: float) -> float:
    """Relative growth rate of the sources, max(k1|v+|^p, k2|u+|^q) / max sup"""
    c = spec.coefficients.at(state.t)
    with np.errstate(over='ignore'):
        growth = max(
            c.k1 * max(float(state.v.max()), 0.0) ** spec.p,
            c.k2 * max(float(state.u.max()), 0.0) ** spec.q
        )
    return growth / max(sup_u, sup_v, 1.0)


def _sample(state: State, fn: Functionals, dt: float, mass: np.ndarray) -> Sample:
    l2_sq = float(mass @ (state.u * state.u) + mass @ (state.v * state.v))
    return Sample(
        t=state.t,
        phi=fn.phi, phi1=fn.phi1, phi2=fn.phi2,
        psi=fn.psi, psi1=fn.psi1, psi2=fn.psi2,
        sup_u=float(np.abs(state.u).max()),
        sup_v=float(np.abs(state.v).max()),
        min_u=float(state.u.min()),
        min_v=float(state.v.min()),
        dt=dt,
        l2_sq=l2_sq
    )


def run(
    spec: SystemSpec,
    *,
    eig: Optional[EigenPair] = None,
    progress: Optional[ProgressTracker] = None
) -> Trajectory:
    """
    Adaptive IMEX integration until the horizon or numerical blow-up.

    A step is halved and retried when it produces nonfinite values or grows
    Phi by more than a factor 4. The run stops with blow-up once
    ||u||_inf + ||v||_inf reaches the threshold, or when dt underflows.
    """
    disc = discretize(spec.domain)
    eig = eig or clamped_eigenpair(spec.domain)
    stepper = ImexStepper(spec, disc)
    dt_max = spec.dt_max or default_dt_max(spec)
    dt_min = DT_UNDERFLOW * spec.horizon
    end = spec.horizon * (1.0 - 1e-14)

    state = State(disc.grid.restrict(spec.u0), disc.grid.restrict(spec.v0), 0.0)
    fn = functionals(state.u, state.v, disc, eig)
    sup_u, sup_v = float(np.abs(state.u).max()), float(np.abs(state.v).max())

    def planned_step(current: State) -> float:
        rate = _source_rate(current, spec, sup_u, sup_v)
        return min(dt_max, spec.safety / (1.0 + rate), spec.horizon - current.t)

    samples = [_sample(state, fn, planned_step(state), disc.mass)]
    verdict, termination = COMPLETED, "horizon"
    rejected = 0
    left_cone = False
    diagnostics: List[str] = []

    logging.info(f"Integrating {spec.domain.describe()} to t={spec.horizon:g} (dt_max={dt_max:.3e})")
    if progress:
        progress.start()

    while state.t < end:
        dt = planned_step(state)
        while True:
            if dt < dt_min:
                break
            try:
                candidate = stepper.step(state, dt)
            except StepRejected as e:
                logging.debug(f"Step rejected: {e}")
                rejected += 1
                dt /= 2.0
                continue
            candidate_fn = functionals(candidate.u, candidate.v, disc, eig)
            grew_too_fast = fn.phi > 0 and candidate_fn.phi > PHI_GROWTH_LIMIT * fn.phi
            if not math.isfinite(candidate_fn.phi) or grew_too_fast:
                rejected += 1
                dt /= 2.0
                continue
            break

        if dt < dt_min:
            verdict, termination = BLOWUP, "dt-underflow"
            diagnostics.append(f"time step underflow at t={state.t:.6g}")
            logging.warning(f"Time step underflow at t={state.t:.6g}; reporting as blow-up")
            break

        state, fn = candidate, candidate_fn
        sample = _sample(state, fn, dt, disc.mass)
        samples.append(sample)
        sup_u, sup_v = sample.sup_u, sample.sup_v

        if sample.min_u < -NEGATIVITY_TOL * sup_u or sample.min_v < -NEGATIVITY_TOL * sup_v:
            left_cone = True

        if progress and len(samples) % 50 == 0:
            progress.update_progress(100.0 * state.t / spec.horizon)

        if sup_u + sup_v >= spec.blowup_threshold:
            verdict, termination = BLOWUP, "threshold"
            break

    if progress:
        progress.stop()

    if left_cone:
        diagnostics.append("solution left the nonnegative cone")
    trajectory = Trajectory(
        samples=samples,
        verdict=verdict,
        termination=termination,
        p_eff=effective_exponent(spec.p, spec.q),
        left_nonnegative=left_cone,
        rejected_steps=rejected,
        diagnostics=diagnostics
    )

    if verdict == BLOWUP:
        tstar, bracket = estimate_tstar(trajectory, trajectory.p_eff)
        trajectory.tstar_numeric = tstar
        trajectory.tstar_ci = bracket
        phi_fit = extrapolate_blowup(trajectory.times, trajectory.column("phi"), trajectory.p_eff)
        trajectory.tstar_phi = phi_fit.tstar if phi_fit else None
        logging.info(
            f"Blow-up detected near t={trajectory.final_time:.6g} "
            f"({len(samples) - 1} steps, {rejected} rejected)"
        )
    else:
        logging.info(f"Completed horizon in {len(samples) - 1} steps ({rejected} rejected)")

    return trajectory


def extrapolate_blowup(
    times: np.ndarray,
    values: np.ndarray,
    p_eff: float,
    n_tail: int = 20
) -> Optional[BlowupFit]:
    """
    Least-squares line through (t, value^(1 - p_eff)) over the strictly
    increasing run of trailing samples (at least 5); the zero crossing
    estimates the blow-up time. None without a blow-up trend.
    """
    times = np.asarray(times, dtype=float)[-n_tail:]
    values = np.asarray(values, dtype=float)[-n_tail:]
    if times.size < 5:
        logging.debug("Too few samples for blow-up extrapolation")
        return None
    if not (np.all(values > 0) and np.all(np.isfinite(values))):
        logging.debug("Nonpositive or nonfinite values in the trailing samples")
        return None
    breaks = np.flatnonzero(np.diff(values) <= 0)
    if breaks.size:
        times, values = times[breaks[-1] + 1:], values[breaks[-1] + 1:]
    if times.size < 5:
        logging.debug("Fewer than 5 strictly increasing trailing samples")
        return None

    centre = times.mean()
    transformed = values ** (1.0 - p_eff)
    fit = linregress(times - centre, transformed)
    if not fit.slope < 0:
        logging.debug("Extrapolation slope is nonnegative; no blow-up trend")
        return None

    tstar = centre - fit.intercept / fit.slope
    stderr = math.hypot(fit.intercept_stderr / fit.slope, fit.intercept * fit.stderr / fit.slope ** 2)
    return BlowupFit(tstar=float(tstar), stderr=float(stderr), slope=float(fit.slope), n_samples=int(times.size))


def estimate_tstar(traj: Trajectory, p_eff: float) -> Tuple[Optional[float], Optional[Tuple[float, float]]]:
    """Psi-based blow-up time and bracket [last sample t, crossing + stderr]"""
    if traj.verdict != BLOWUP:
        return None, None
    fit = extrapolate_blowup(traj.times, traj.column("psi"), p_eff)
    if fit is None:
        traj.diagnostics.append("no blow-up trend in Psi; t* not extrapolated")
        return None, None
    low = traj.final_time
    return fit.tstar, (low, max(low, fit.tstar + fit.stderr))


def refine_tstar(
    spec: SystemSpec,
    traj: Trajectory,
    *,
    eig: Optional[EigenPair] = None,
    progress: Optional[ProgressTracker] = None
) -> Optional[StepRefinement]:
    """
    Rerun a blow-up with the step safety and dt_max halved and widen the
    t* bracket of traj to cover both estimates and the first-order Richardson
    value 2 t*(safety/2) - t*(safety) +- the observed shift.
    """
    if traj.tstar_numeric is None or traj.tstar_ci is None:
        return None
    finer = replace(spec, safety=spec.safety / 2.0, dt_max=(spec.dt_max or default_dt_max(spec)) / 2.0)
    refined = run(finer, eig=eig, progress=progress)
    if refined.tstar_numeric is None or refined.tstar_ci is None:
        traj.diagnostics.append("step refinement did not reproduce the blow-up; t* bracket not widened")
        logging.warning(f"Refined run ended with {refined.verdict}; keeping the unrefined t* bracket")
        return None

    shift = abs(traj.tstar_numeric - refined.tstar_numeric)
    richardson = 2.0 * refined.tstar_numeric - traj.tstar_numeric
    estimates = (traj.tstar_numeric, refined.tstar_numeric)
    low = max(0.0, min(traj.tstar_ci[0], refined.tstar_ci[0], richardson - shift, *estimates))
    high = max(traj.tstar_ci[1], refined.tstar_ci[1], richardson + shift, *estimates)
    traj.tstar_ci = (low, high)
    traj.refinement = StepRefinement(
        safety=finer.safety, tstar_refined=refined.tstar_numeric, shift=shift, richardson=richardson
    )
    if shift > 0.01 * traj.tstar_numeric:
        traj.diagnostics.append(f"t* moved by {shift:.3g} when the step safety was halved")
    logging.info(
        f"Step refinement: t*={traj.tstar_numeric:.6g} -> {refined.tstar_numeric:.6g}, "
        f"bracket [{low:.6g}, {high:.6g}]"
    )
    return traj.refinement


def l2_bound_holds(traj: Trajectory, lambda1: float, rtol: float = 1e-9) -> bool:
    """||u||^2 + ||v||^2 <= Phi / Lambda_1 at every sample"""
    l2 = traj.column("l2_sq")
    phi = traj.column("phi")
    return bool(np.all(l2 <= phi / lambda1 * (1.0 + rtol) + 1e-300))
