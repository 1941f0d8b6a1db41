"""
Scalar comparison ODEs used as oracles for the closed-form bounds.

Each model x' = f(x) is integrated in the variable y = x^(1-e), e the model
exponent, which stays finite through blow-up: x -> inf becomes y -> 0.
"""

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.integrate import solve_ivp

from .exceptions import ValidationError

# x below this is treated as having decayed to zero
DECAY_FLOOR = 1e-200


@dataclass(frozen=True)
class Majorant:
    """x' = 2A x^p + B x"""
    A: float
    B: float
    p: float

    @property
    def exponent(self) -> float:
        return self.p

    def rhs(self, x: float) -> float:
        return 2.0 * self.A * x ** self.p + self.B * x

    def transformed_rhs(self, y: float) -> float:
        return (1.0 - self.p) * (2.0 * self.A + self.B * y)


@dataclass(frozen=True)
class Minorant:
    """x' = -a x + cbar x^p with a = delta * Lambda_1"""
    a: float
    cbar: float
    p: float

    @property
    def exponent(self) -> float:
        return self.p

    def rhs(self, x: float) -> float:
        return -self.a * x + self.cbar * x ** self.p

    def transformed_rhs(self, y: float) -> float:
        return (1.0 - self.p) * (-self.a * y + self.cbar)


@dataclass(frozen=True)
class HFlow:
    """x' = H(x) = -Lambda_1 delta x + 2^(1-q) c x^q - c Q"""
    lambda1: float
    delta: float
    c: float
    Q: float
    q: float

    @property
    def exponent(self) -> float:
        return self.q

    def rhs(self, x: float) -> float:
        return -self.lambda1 * self.delta * x + 2.0 ** (1.0 - self.q) * self.c * x ** self.q - self.c * self.Q

    def transformed_rhs(self, y: float) -> float:
        y = max(y, 0.0)
        q = self.q
        return (1.0 - q) * (
            -self.lambda1 * self.delta * y
            + 2.0 ** (1.0 - q) * self.c
            - self.c * self.Q * y ** (q / (q - 1.0))
        )


ScalarModel = Union[Majorant, Minorant, HFlow]


@dataclass(frozen=True, eq=False)
class ScalarODEResult:
    t: np.ndarray
    x: np.ndarray
    blowup_time: Optional[float]
    reached_threshold: bool = False
    decayed: bool = False


def integrate_scalar_ode(
    model: ScalarModel,
    x0: float,
    *,
    t_end: Optional[float] = None,
    x_threshold: Optional[float] = None,
    rtol: float = 1e-11,
    max_time: float = 1e12
) -> ScalarODEResult:
    """
    Adaptive Dormand-Prince (RK45) integration with blow-up continuation.

    Stops at t_end, when x reaches x_threshold, when x decays below
    DECAY_FLOOR, or at blow-up (y crosses zero), whichever comes first.
    """
    if x0 <= 0:
        raise ValidationError(f"Initial value must be positive, got {x0}", hypothesis="x0 > 0")
    e = model.exponent
    if e <= 1:
        raise ValidationError(f"Exponent must exceed 1, got {e}", hypothesis="p > 1")

    y0 = x0 ** (1.0 - e)

    def blowup(t, y):
        return y[0]
    blowup.terminal = True
    blowup.direction = -1

    events = [blowup]

    if x_threshold is not None:
        y_threshold = x_threshold ** (1.0 - e)

        def threshold(t, y):
            return y[0] - y_threshold
        threshold.terminal = True
        threshold.direction = -1
        events.append(threshold)

    y_floor = math.exp(min((1.0 - e) * math.log(DECAY_FLOOR), 690.0))

    def decayed(t, y):
        return y[0] - y_floor
    decayed.terminal = True
    decayed.direction = 1
    events.append(decayed)

    horizon = t_end if t_end is not None else max_time
    solution = solve_ivp(
        lambda t, y: [model.transformed_rhs(y[0])],
        (0.0, horizon),
        [y0],
        method='RK45',
        rtol=rtol,
        atol=1e-14 * max(min(abs(y0), 1.0), 1e-300),
        events=events
    )
    if solution.status == -1:
        raise ValidationError(f"Scalar ODE integration failed: {solution.message}", hypothesis="scalar-ode")

    t = solution.t
    y = np.clip(solution.y[0], 0.0, None)
    with np.errstate(divide='ignore', over='ignore'):
        x = np.where(y > 0, y ** (1.0 / (1.0 - e)), np.inf)

    blowup_time = None
    if solution.t_events[0].size:
        blowup_time = float(solution.t_events[0][0])
    reached = x_threshold is not None and solution.t_events[1].size > 0
    decay_hit = solution.t_events[-1].size > 0

    return ScalarODEResult(
        t=t,
        x=x,
        blowup_time=blowup_time,
        reached_threshold=bool(reached),
        decayed=bool(decay_hit)
    )


def majorant_solution(model: Majorant, x0: float, t: np.ndarray) -> np.ndarray:
    """Closed-form majorant solution; inf at and past its blow-up time"""
    p, A, B = model.p, model.A, model.B
    t = np.asarray(t, dtype=float)
    y0 = x0 ** (1.0 - p)
    if B == 0.0:
        y = y0 - 2.0 * A * (p - 1.0) * t
    else:
        ratio = 2.0 * A / B
        y = (y0 + ratio) * np.exp(-B * (p - 1.0) * t) - ratio
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.where(y > 0, y ** (1.0 / (1.0 - p)), np.inf)


def minorant_blowup_time(model: Minorant, x0: float) -> Optional[float]:
    """Exact blow-up time of the minorant, None below the threshold"""
    p, a, cbar = model.p, model.a, model.cbar
    fraction = a / (cbar * x0 ** (p - 1.0))
    if fraction >= 1.0:
        return None
    return -math.log1p(-fraction) / ((p - 1.0) * a)
