"""Energy tank: a scalar reservoir, its charts, and the routing valve.

The tank is an integrator x_t with a nonnegative energy T(x_t).  Routing a
control action through the tank's power port makes the action draw its energy
from T instead of creating it, which keeps the closed loop passive as long
as the tank gradient stays away from zero.  The valve decides when the action
must be scaled back or cut because the reservoir is nearly empty.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class SingularTankError(RuntimeError):
    """The tank gradient is too close to zero to route power through it."""

    def __init__(self, x_t: float, energy: float):
        self.x_t = x_t
        self.energy = energy
        super().__init__(
            f"tank interconnection is singular: x_t={x_t:.6g}, T={energy:.6g}"
        )


class EnergyLaw(enum.Enum):
    """Choice of chart for the tank energy.

    QUADRATIC stores T = x_t^2 / 2 (gradient x_t, singular at x_t = 0);
    EXPONENTIAL stores T = exp(x_t) (gradient exp(x_t), nominally never zero,
    but the zero-energy boundary sits at x_t = -inf and can be reached by a
    finite-time state escape).
    """

    QUADRATIC = "quadratic"
    EXPONENTIAL = "exponential"

    def energy(self, x_t: float) -> float:
        if self is EnergyLaw.QUADRATIC:
            return 0.5 * x_t * x_t
        try:
            return math.exp(x_t)
        except OverflowError:
            return math.inf

    def gradient(self, x_t: float) -> float:
        if self is EnergyLaw.QUADRATIC:
            return x_t
        try:
            return math.exp(x_t)
        except OverflowError:
            return math.inf

    def state_from_energy(self, energy: float) -> float:
        """Chart state holding the given energy (nonnegative branch for QUADRATIC)."""
        if self is EnergyLaw.QUADRATIC:
            if energy < 0.0:
                raise ValueError(f"tank energy must be nonnegative, got {energy}")
            return math.sqrt(2.0 * energy)
        if energy <= 0.0:
            raise ValueError(f"exponential chart needs positive energy, got {energy}")
        return math.log(energy)


@dataclass
class Tank:
    """Scalar energy reservoir: chart state x_t under a chosen energy law."""

    law: EnergyLaw
    x_t: float = 0.0

    def energy(self) -> float:
        return self.law.energy(self.x_t)

    def gradient(self) -> float:
        return self.law.gradient(self.x_t)

    @classmethod
    def with_energy(cls, law: EnergyLaw, energy: float) -> "Tank":
        return cls(law=law, x_t=law.state_from_energy(energy))


@dataclass(frozen=True)
class ValveConfig:
    """Valve and safety-extension settings for the tank interconnection.

    epsilon : detachment threshold (J); at 0 the valve never cuts the action.
    smooth_width : None for the hard switch, else the energy width (J) of the
        smoothstep ramp replacing the hard 1-branch while the tank drains.
    t_max : optional ceiling (J); inflow above it is dissipated virtually.
    p_max : optional bound (W) on the power extracted from the tank.
    beta : fraction of the plant's dissipated power routed back into the tank.
    singularity_delta : minimum |dT/dx_t| accepted by the interconnection.
    """

    epsilon: float = 1e-2
    smooth_width: float | None = None
    t_max: float | None = None
    p_max: float | None = None
    beta: float = 0.0
    singularity_delta: float = 1e-9

    def __post_init__(self) -> None:
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.smooth_width is not None and self.smooth_width <= 0.0:
            raise ValueError(f"smooth_width must be > 0, got {self.smooth_width}")
        if self.t_max is not None and self.t_max <= self.epsilon:
            raise ValueError(f"t_max must exceed epsilon, got t_max={self.t_max}, epsilon={self.epsilon}")
        if self.p_max is not None and self.p_max <= 0.0:
            raise ValueError(f"p_max must be > 0, got {self.p_max}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.singularity_delta <= 0.0:
            raise ValueError(f"singularity_delta must be > 0, got {self.singularity_delta}")


def interconnect(w, y_c, tank: Tank, cfg: ValveConfig) -> tuple[np.ndarray, float]:
    """Route the action w through the tank's lossless power coupling.

    Returns (u_c, u_t): the plant's control input comes out as w verbatim and
    the tank input u_t = -(w . y_c) / dT balances it, so u_c.y_c + u_t*y_t = 0
    and the pair exchanges power without creating or destroying any.

    Raises SingularTankError when |dT| < cfg.singularity_delta; dividing by a
    collapsed gradient is where the scheme stops being implementable.
    """
    grad = tank.gradient()
    if abs(grad) < cfg.singularity_delta:
        raise SingularTankError(tank.x_t, tank.energy())
    w = np.atleast_1d(np.asarray(w, dtype=float))
    y_c = np.atleast_1d(np.asarray(y_c, dtype=float))
    u_c = w.copy()
    u_t = -float(w @ y_c) / grad
    return u_c, u_t


def _smoothstep(z: float) -> float:
    return z * z * (3.0 - 2.0 * z)


def valve_alpha(tank_energy: float, tank_power: float, cfg: ValveConfig) -> float:
    """Scaling factor applied to the action based on tank level and its trend.

    Hard mode: 1 when the tank holds at least epsilon, or is below epsilon but
    refilling (tank_power > 0); 0 when below epsilon and draining.  Smooth
    mode keeps the same logic but, while draining, ramps over
    [epsilon, epsilon + smooth_width] with the C^1 smoothstep 3z^2 - 2z^3.
    """
    if cfg.smooth_width is None:
        if tank_energy >= cfg.epsilon or tank_power > 0.0:
            return 1.0
        return 0.0
    if tank_power > 0.0:
        return 1.0
    z = (tank_energy - cfg.epsilon) / cfg.smooth_width
    if z <= 0.0:
        return 0.0
    if z >= 1.0:
        return 1.0
    return _smoothstep(z)


def refill_from_dissipation(p_diss: float, cfg: ValveConfig, tank: Tank) -> float:
    """Tank input that injects beta * p_diss of already-dissipated power.

    The energy was lost by the plant, so rerouting a fraction of it into the
    reservoir cannot break closed-loop passivity.  A singular tank cannot
    accept power through its gradient; the refill is skipped with a warning.
    """
    if p_diss < 0.0:
        raise ValueError(f"dissipated power must be >= 0, got {p_diss}")
    if cfg.beta == 0.0 or p_diss == 0.0:
        return 0.0
    grad = tank.gradient()
    if abs(grad) < cfg.singularity_delta:
        log.warning("refill skipped: tank gradient collapsed (x_t=%.6g, T=%.6g)",
                    tank.x_t, tank.energy())
        return 0.0
    return cfg.beta * p_diss / grad


def overflow_valve(tank_energy: float, incoming_power: float, cfg: ValveConfig) -> float:
    """Clip tank inflow once the level reaches the ceiling; never block outflow."""
    if cfg.t_max is None:
        return incoming_power
    if tank_energy >= cfg.t_max and incoming_power > 0.0:
        return 0.0
    return incoming_power


def power_limit(extracted_power: float, cfg: ValveConfig) -> float:
    """Action scale in (0, 1] keeping the power drawn from the tank under p_max."""
    if cfg.p_max is None:
        return 1.0
    if extracted_power > cfg.p_max:
        return cfg.p_max / extracted_power
    return 1.0
