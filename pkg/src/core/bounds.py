"""
Blow-up time bounds for QuenchLab.

Lower bounds T and T~ come from the energy Phi = ||Lap u||^2 + ||Lap v||^2
and the Sobolev embedding; upper bounds T0 and Tbar from the projection
Psi = <u + v, phi_1> onto the first clamped eigenfunction.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from .domain import discretize
from .evolution import CoefficientProfile, SystemSpec, functionals
from .exceptions import ValidationError
from .scalar_ode import HFlow, Majorant, Minorant
from .spectrum import EigenPair, SobolevEstimate, clamped_eigenpair, embedding_exponent_range, sobolev_constant

EQUAL_SPLIT = "equal-split"
OPTIMIZED = "optimized"
EPSILON_MODES = (EQUAL_SPLIT, OPTIMIZED)

T0_ABS_TOL = 1e-12
THETA_SCAN = np.linspace(0.01, 0.99, 99)


@dataclass(frozen=True, eq=False)
class EpsilonProfiles:
    """Young parameters eps1..eps4 sampled on the envelope times"""
    times: np.ndarray
    eps1: np.ndarray
    eps2: np.ndarray
    eps3: np.ndarray
    eps4: np.ndarray
    mode: str = EQUAL_SPLIT
    theta: float = 0.5


@dataclass(frozen=True, eq=False)
class EnvelopeConstants:
    A: float = 0.0
    A1: float = 0.0
    A2: float = 0.0
    Atilde: float = 0.0
    B: float = 0.0
    K: Optional[float] = None
    c1: float = 0.0
    c2: float = 0.0
    c: float = 0.0
    cbar: float = 0.0
    delta: float = 0.0
    Q: float = 0.0
    S2p: float = float('nan')
    S2q: float = float('nan')
    Lambda1: float = 0.0
    Omega_measure: float = 0.0
    Phi0: float = 0.0
    Psi0: float = 0.0
    eps: Optional[EpsilonProfiles] = None

    def leading(self, p: float, q: float) -> float:
        """Coefficient of Phi^p in the majorant: 2A, or A~ when p = q"""
        return self.Atilde if p == q else 2.0 * self.A

    def majorant(self, p: float, q: float) -> Majorant:
        return Majorant(A=self.leading(p, q) / 2.0, B=self.B, p=p)

    def minorant(self, p: float) -> Minorant:
        return Minorant(a=self.delta * self.Lambda1, cbar=self.cbar, p=p)

    def h_flow(self, q: float) -> HFlow:
        return HFlow(lambda1=self.Lambda1, delta=self.delta, c=self.c, Q=self.Q, q=q)

    def as_dict(self) -> Dict[str, float]:
        keys = ("A", "A1", "A2", "Atilde", "B", "K", "c1", "c2", "c", "cbar", "delta", "Q",
                "S2p", "S2q", "Lambda1", "Omega_measure", "Phi0", "Psi0")
        return {key: getattr(self, key) for key in keys}


class CorollaryBound(NamedTuple):
    Tbar: float
    h_zero: float


@dataclass(eq=False)
class BoundReport:
    T_lower: Optional[float]
    T_tilde: Optional[float]
    T0_upper: Optional[float]
    Tbar_upper: Optional[float]
    Tbar_h_zero: Optional[float]
    constants: EnvelopeConstants
    admissible_upper: Dict[str, bool]
    applies: Dict[str, bool]
    epsilon_mode: str = EQUAL_SPLIT
    theta: float = 0.5
    sobolev: Dict[str, SobolevEstimate] = field(default_factory=dict)
    diagnostics: List[str] = field(default_factory=list)

    @property
    def upper(self) -> Optional[float]:
        """Best available upper bound"""
        candidates = [t for t in (self.T0_upper, self.Tbar_upper) if t is not None]
        return min(candidates) if candidates else None

    def provenance(self) -> Dict[str, object]:
        return {
            "constants": self.constants.as_dict(),
            "epsilon_mode": self.epsilon_mode,
            "theta": self.theta,
            "admissible_upper": dict(self.admissible_upper),
            "applies": dict(self.applies),
            "diagnostics": list(self.diagnostics),
        }

    def format_text(self) -> str:
        def show(value):
            return "n/a" if value is None else f"{value:.10g}"

        rows = [
            ("T (lower)", show(self.T_lower)),
            ("T~ (lower, simplified)", show(self.T_tilde)),
            ("T0 (upper)", show(self.T0_upper)),
            ("Tbar (upper, p=q)", show(self.Tbar_upper)),
        ]
        rows += [(name, show(value)) for name, value in self.constants.as_dict().items()]
        rows += [(f"flag {name}", str(value)) for name, value in sorted(self.admissible_upper.items())]
        width = max(len(name) for name, _ in rows)
        lines = [f"{name.ljust(width)}  {value}" for name, value in rows]
        lines += [f"note: {message}" for message in self.diagnostics]
        return "\n".join(lines)


def select_epsilons(
    spec: SystemSpec,
    mode: str = EQUAL_SPLIT,
    theta: Optional[float] = None,
    horizon: Optional[float] = None
) -> EpsilonProfiles:
    """
    Young parameters making the Lap^2 terms vanish:
    h1/eps2 + k1/eps1 = 2 delta1 and h2/eps4 + k2/eps3 = 2 delta2.
    Where h_i = 0 the companion parameter is dropped (stored as 0).
    """
    if mode not in EPSILON_MODES:
        raise ValidationError(f"Unknown epsilon mode '{mode}'", hypothesis="epsilon-mode")
    if mode == EQUAL_SPLIT:
        theta = 0.5
    elif theta is None or not 0.0 < theta < 1.0:
        raise ValidationError(f"theta must lie in (0, 1), got {theta}", hypothesis="0 < theta < 1")

    horizon = horizon or spec.horizon
    profile = spec.coefficients
    times = profile.sample_times(horizon)

    def split(delta_name, h_name, k_name):
        delta = profile.series(delta_name, horizon)
        h = profile.series(h_name, horizon)
        k = profile.series(k_name, horizon)
        has_h = h > 0.0
        eps_k = np.where(has_h, k / (2.0 * (1.0 - theta) * delta), k / (2.0 * delta))
        eps_h = np.where(has_h, h / (2.0 * theta * delta), 0.0)
        return eps_k, eps_h

    eps1, eps2 = split("delta1", "h1", "k1")
    eps3, eps4 = split("delta2", "h2", "k2")
    return EpsilonProfiles(times, eps1, eps2, eps3, eps4, mode=mode, theta=theta)


def young_constant(p: float, q: float) -> float:
    """Q with x^p >= x^q - Q for x >= 0; zero when p = q"""
    if p == q:
        return 0.0
    return (p - q) / p * (q / p) ** (q / (p - q))


def envelope_constants(
    spec: SystemSpec,
    eps: EpsilonProfiles,
    *,
    S2p: float,
    S2q: float,
    lambda1: float,
    Phi0: float,
    Psi0: float,
    horizon: Optional[float] = None
) -> EnvelopeConstants:
    horizon = horizon or spec.horizon
    profile = spec.coefficients
    p, q = spec.p, spec.q

    k1 = profile.series("k1", horizon)
    k2 = profile.series("k2", horizon)
    # eps1 pairs with k1, eps3 with k2
    sup_k1_eps1 = float(np.max(k1 * eps.eps1))
    sup_k2_eps3 = float(np.max(k2 * eps.eps3))
    sup_h1_eps2 = float(np.max(profile.series("h1", horizon) * eps.eps2))
    sup_h2_eps4 = float(np.max(profile.series("h2", horizon) * eps.eps4))

    A1 = sup_k2_eps3 * S2q ** (2.0 * q) * (Phi0 ** (q - p) if Phi0 > 0 else 0.0)
    A2 = sup_k1_eps1 * S2p ** (2.0 * p)
    A = max(A1, A2)
    Atilde = S2p ** (2.0 * p) * max(sup_k2_eps3, sup_k1_eps1)
    B = max(sup_h1_eps2, sup_h2_eps4)

    lead = Atilde if p == q else 2.0 * A
    K = lead + B * Phi0 ** (1.0 - p) if Phi0 > 0 else None

    upper = projection_constants(profile, spec.domain.measure, p, q, horizon)
    return EnvelopeConstants(
        A=A, A1=A1, A2=A2, Atilde=Atilde, B=B, K=K,
        c1=upper.c1, c2=upper.c2, c=upper.c, cbar=upper.cbar, delta=upper.delta,
        Q=young_constant(p, q), S2p=S2p, S2q=S2q,
        Lambda1=lambda1, Omega_measure=spec.domain.measure, Phi0=Phi0, Psi0=Psi0, eps=eps
    )


class ProjectionConstants(NamedTuple):
    c1: float
    c2: float
    c: float
    cbar: float
    delta: float


def projection_constants(
    profile: CoefficientProfile,
    measure: float,
    p: float,
    q: float,
    horizon: float
) -> ProjectionConstants:
    """c_i = inf k_i |Omega|^-(e_i-1)/2, c = min c_i, cbar = 2^(1-p) c, delta = max sup delta_i"""
    c1 = profile.inf("k1", horizon) * measure ** (-(p - 1.0) / 2.0)
    c2 = profile.inf("k2", horizon) * measure ** (-(q - 1.0) / 2.0)
    c = min(c1, c2)
    delta = max(profile.sup("delta1", horizon), profile.sup("delta2", horizon))
    return ProjectionConstants(c1, c2, c, 2.0 ** (1.0 - p) * c, delta)


def _check_exponents(p: float, q: float) -> None:
    if not q > 1.0 or not p >= q:
        raise ValidationError(f"Need p >= q > 1, got p={p}, q={q}", hypothesis="p >= q > 1")


def lower_bound_T(consts: EnvelopeConstants, p: float, q: float) -> float:
    """
    T = ln(1 + B/(2A) Phi0^(1-p)) / (B (p-1)); 2A becomes A~ when p = q.
    B = 0 uses the limit Phi0^(1-p) / (2A (p-1)).
    """
    _check_exponents(p, q)
    if not consts.Phi0 > 0:
        raise ValidationError(f"Phi0 must be positive, got {consts.Phi0}", hypothesis="Phi0 > 0")
    lead = consts.leading(p, q)
    if not lead > 0 or consts.B < 0:
        raise ValidationError("Need A > 0 and B >= 0", hypothesis="A, B > 0")
    x = consts.Phi0 ** (1.0 - p)
    if consts.B == 0.0:
        return x / (lead * (p - 1.0))
    return math.log1p(consts.B / lead * x) / (consts.B * (p - 1.0))


def lower_bound_T_tilde(consts: EnvelopeConstants, p: float) -> float:
    """T~ = Phi0^(1-p) / ((p-1) K) with K = 2A + B Phi0^(1-p)"""
    if not p > 1.0:
        raise ValidationError(f"Need p > 1, got {p}", hypothesis="p > 1")
    if not consts.Phi0 > 0:
        raise ValidationError(f"Phi0 must be positive, got {consts.Phi0}", hypothesis="Phi0 > 0")
    x = consts.Phi0 ** (1.0 - p)
    K = consts.K if consts.K is not None else 2.0 * consts.A + consts.B * x
    if not K > 0:
        raise ValidationError("K must be positive", hypothesis="K > 0")
    return x / ((p - 1.0) * K)


def H_of(psi: float, consts: EnvelopeConstants, p: float, q: float) -> float:
    """H(psi) = -Lambda1 delta psi + 2^(1-q) c psi^q - c Q"""
    if not q > 1.0:
        raise ValidationError(f"Need q > 1, got {q}", hypothesis="q > 1")
    return consts.h_flow(q).rhs(psi)


def stationary_point(consts: EnvelopeConstants, q: float) -> Tuple[float, float]:
    """Minimizer eta_m of H on [0, inf) and the minimum H(eta_m)"""
    if not consts.c > 0:
        return math.inf, -math.inf
    eta_m = (consts.Lambda1 * consts.delta / (2.0 ** (1.0 - q) * consts.c * q)) ** (1.0 / (q - 1.0))
    return eta_m, consts.h_flow(q).rhs(eta_m)


def t0_admissibility(consts: EnvelopeConstants, q: float, Psi0: float) -> Dict[str, bool]:
    """H(Psi0) > 0 and H > 0 on the whole ray [Psi0, inf)"""
    at_psi0 = consts.h_flow(q).rhs(Psi0) > 0.0
    eta_m, h_min = stationary_point(consts, q)
    on_ray = at_psi0 and (Psi0 >= eta_m or h_min > 0.0)
    return {"H_positive_at_Psi0": bool(at_psi0), "H_positive_on_ray": bool(on_ray)}


def upper_bound_T0(consts: EnvelopeConstants, p: float, q: float, Psi0: float) -> Optional[float]:
    """
    T0 = integral of 1/H over [Psi0, inf), after s = eta^(1-q):
    T0 = 1/(q-1) * integral_0^{Psi0^(1-q)} ds / (2^(1-q) c - Lambda1 delta s - c Q s^(q/(q-1))).
    None when H is not positive on the whole ray.
    """
    _check_exponents(p, q)
    if not Psi0 > 0:
        logging.info("Psi0 is not positive; T0 is not available")
        return None
    flags = t0_admissibility(consts, q, Psi0)
    if not flags["H_positive_on_ray"]:
        logging.info(f"H is not positive on [Psi0, inf) for Psi0={Psi0:.6g}; T0 is not available")
        return None

    a = consts.Lambda1 * consts.delta
    lead = 2.0 ** (1.0 - q) * consts.c
    cq = consts.c * consts.Q
    power = q / (q - 1.0)

    def integrand(s):
        return 1.0 / (lead - a * s - cq * s ** power)

    s0 = Psi0 ** (1.0 - q)
    value, error = quad(integrand, 0.0, s0, epsabs=T0_ABS_TOL, epsrel=1e-13, limit=200)
    if error > 1e-8:
        logging.warning(f"T0 quadrature error estimate {error:.2e} exceeds 1e-8")
    return value / (q - 1.0)


def corollary_condition(consts: EnvelopeConstants, p: float, Psi0: float) -> bool:
    """Psi0 > (delta Lambda1 / cbar)^(1/(p-1))"""
    if not consts.cbar > 0:
        return False
    return Psi0 > corollary_threshold(consts, p)


def corollary_threshold(consts: EnvelopeConstants, p: float) -> float:
    return (consts.delta * consts.Lambda1 / consts.cbar) ** (1.0 / (p - 1.0))


def corollary_h_function(consts: EnvelopeConstants, p: float, Psi0: float) -> Callable[[float], float]:
    """Upper envelope of Psi^(1-p)(t) for p = q; vanishes at Tbar"""
    a = consts.delta * consts.Lambda1
    ratio = consts.cbar / a

    def h(t: float) -> float:
        return math.exp((p - 1.0) * a * t) * (Psi0 ** (1.0 - p) - ratio) + ratio
    return h


def upper_bound_Tbar(consts: EnvelopeConstants, p: float, Psi0: float) -> Optional[CorollaryBound]:
    """
    Tbar = -log(1 - delta Lambda1 / (cbar Psi0^(p-1))) / ((p-1) delta Lambda1),
    paired with the zero of the envelope function found by root bracketing.
    """
    if not p > 1.0:
        raise ValidationError(f"Need p > 1, got {p}", hypothesis="p > 1")
    if not corollary_condition(consts, p, Psi0):
        logging.info("Corollary condition on Psi0 does not hold; Tbar is not available")
        return None
    a = consts.delta * consts.Lambda1
    fraction = a / (consts.cbar * Psi0 ** (p - 1.0))
    tbar = -math.log1p(-fraction) / ((p - 1.0) * a)

    h = corollary_h_function(consts, p, Psi0)
    high = max(tbar, 1e-12)
    while h(high) > 0.0:
        high *= 2.0
    h_zero = brentq(h, 0.0, high, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return CorollaryBound(Tbar=tbar, h_zero=h_zero)


def optimize_theta(objective: Callable[[float], float]) -> float:
    """Maximize objective(theta) on (0, 1): coarse scan, then bounded refinement"""
    values = np.array([objective(theta) for theta in THETA_SCAN])
    best = int(np.argmax(values))
    low = THETA_SCAN[max(best - 1, 0)]
    high = THETA_SCAN[min(best + 1, THETA_SCAN.size - 1)]
    result = minimize_scalar(lambda t: -objective(t), bounds=(low, high), method='bounded',
                             options={'xatol': 1e-8})
    if result.success and -result.fun >= values[best]:
        return float(result.x)
    return float(THETA_SCAN[best])


def applicability(spec: SystemSpec) -> Dict[str, bool]:
    """Which results apply to the scenario"""
    low, high, _ = embedding_exponent_range(spec.domain.dimension)
    embedding_ok = all(low <= r < high for r in (2.0 * spec.p, 2.0 * spec.q))
    sources_ok = spec.coefficients.sources_positive(spec.horizon)
    return {
        "lower_bounds": embedding_ok and sources_ok,
        "upper_bounds": spec.upper_bound_applicable and sources_ok,
        "corollary": spec.upper_bound_applicable and sources_ok and spec.p == spec.q,
    }


def compute_bounds(
    spec: SystemSpec,
    *,
    eig: Optional[EigenPair] = None,
    sobolev: Optional[Dict[float, SobolevEstimate]] = None,
    epsilon_mode: str = EQUAL_SPLIT,
    envelope_horizon: Optional[float] = None
) -> BoundReport:
    """All constants and bounds for one scenario"""
    applies = applicability(spec)
    if not spec.coefficients.sources_positive(spec.horizon):
        raise ValidationError("Bounds need k1, k2 > 0 on the horizon", hypothesis="k_i > 0")

    disc = discretize(spec.domain)
    eig = eig or clamped_eigenpair(spec.domain)
    initial = functionals(spec.u0, spec.v0, disc, eig)
    p, q = spec.p, spec.q
    horizon = envelope_horizon or spec.horizon
    diagnostics: List[str] = []

    sobolev = dict(sobolev or {})
    if applies["lower_bounds"]:
        for r in sorted({2.0 * p, 2.0 * q}):
            if r not in sobolev:
                sobolev[r] = sobolev_constant(spec.domain, r, disc=disc, eig=eig)
        S2p, S2q = sobolev[2.0 * p].S, sobolev[2.0 * q].S
    else:
        S2p = S2q = float('nan')
        diagnostics.append(f"2p={2 * p:g} or 2q={2 * q:g} is outside the embedding range; no lower bounds")

    def build(eps: EpsilonProfiles) -> EnvelopeConstants:
        return envelope_constants(
            spec, eps, S2p=S2p, S2q=S2q, lambda1=eig.lambda1,
            Phi0=initial.phi, Psi0=initial.psi, horizon=horizon
        )

    eps = select_epsilons(spec, EQUAL_SPLIT, horizon=horizon)
    if epsilon_mode == OPTIMIZED and applies["lower_bounds"] and initial.phi > 0:
        def objective(theta: float) -> float:
            return lower_bound_T(build(select_epsilons(spec, OPTIMIZED, theta, horizon)), p, q)
        theta = optimize_theta(objective)
        eps = select_epsilons(spec, OPTIMIZED, theta, horizon)
        logging.info(f"Optimized epsilon split: theta={theta:.6f}")
    elif epsilon_mode not in EPSILON_MODES:
        raise ValidationError(f"Unknown epsilon mode '{epsilon_mode}'", hypothesis="epsilon-mode")
    consts = build(eps)

    T_lower = T_tilde = None
    if applies["lower_bounds"]:
        if initial.phi > 0:
            T_lower = lower_bound_T(consts, p, q)
            T_tilde = lower_bound_T_tilde(consts, p)
        else:
            diagnostics.append("Phi0 = 0: the solution stays zero and no finite lower bound is reported")

    flags = {"H_positive_at_Psi0": False, "H_positive_on_ray": False, "corollary_condition": False}
    T0 = Tbar = h_zero = None
    if applies["upper_bounds"]:
        flags.update(t0_admissibility(consts, q, initial.psi))
        T0 = upper_bound_T0(consts, p, q, initial.psi)
        if T0 is None:
            diagnostics.append("H is not positive on [Psi0, inf); T0 not applicable")
        if p == q:
            flags["corollary_condition"] = corollary_condition(consts, p, initial.psi)
            corollary = upper_bound_Tbar(consts, p, initial.psi)
            if corollary is not None:
                Tbar, h_zero = corollary
            else:
                diagnostics.append("corollary condition on Psi0 fails; Tbar not applicable")
    else:
        diagnostics.append("upper bounds need a ball with h1 = h2 = 0")

    logging.info(
        f"Bounds for {spec.domain.describe()}: T={T_lower}, T~={T_tilde}, T0={T0}, Tbar={Tbar}"
    )
    return BoundReport(
        T_lower=T_lower,
        T_tilde=T_tilde,
        T0_upper=T0,
        Tbar_upper=Tbar,
        Tbar_h_zero=h_zero,
        constants=consts,
        admissible_upper=flags,
        applies=applies,
        epsilon_mode=eps.mode,
        theta=eps.theta,
        sobolev={f"{r:g}": est for r, est in sorted(sobolev.items())},
        diagnostics=diagnostics
    )
