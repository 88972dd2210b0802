"""Closed loop: plant + tank + action policy + valve, and the passivity audit.

The plant's port is split into a control side (fed by the tank-routed action)
and an interaction side (fed by the environment); both see the same output y.
One evaluation of the loop produces the state derivatives and a record of all
port powers, which is what the audit later consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np

from .ph_core import PhPlant, eval_maps
from .tank import SingularTankError, Tank, ValveConfig, power_limit, valve_alpha

if TYPE_CHECKING:
    from .sim_engine import Trace

ActionPolicy = Callable[[float, np.ndarray, float], np.ndarray]

_zeros_cache: dict[int, np.ndarray] = {}


def _zeros(m: int) -> np.ndarray:
    # shared read-only buffer for the open-port force; never mutated downstream
    z = _zeros_cache.get(m)
    if z is None:
        z = _zeros_cache[m] = np.zeros(m)
    return z


def constant_action(value: float, m: int = 1) -> ActionPolicy:
    """Policy that always requests the same effort on every channel."""
    w = np.full(m, float(value))
    return lambda t, x, x_t: w


def zero_action(m: int = 1) -> ActionPolicy:
    return constant_action(0.0, m)


@dataclass(frozen=True)
class EnvironmentModel:
    """What sits on the interaction port.

    kind "open" leaves the port undriven (u_e = 0).  kind "spring_damper"
    attaches a linear spring-damper to each channel; the spring needs its own
    elongation state s (integrated alongside the plant, ds/dt = y), so the
    closed-loop ODE gains state_dim extra components.

    declared_passive is the caller's claim about the environment, recorded in
    trace metadata and verified by the audit, not enforced here.
    """

    kind: str
    stiffness: float = 0.0
    damping: float = 0.0
    declared_passive: bool = True

    def __post_init__(self) -> None:
        if self.kind not in ("open", "spring_damper"):
            raise ValueError(f"unknown environment kind {self.kind!r}")

    def state_dim(self, m: int) -> int:
        return m if self.kind == "spring_damper" else 0

    def force(self, t: float, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        if self.kind == "open":
            return _zeros(y.shape[0])
        return -(self.stiffness * s + self.damping * y)

    def flow(self, t: float, y: np.ndarray, s: np.ndarray) -> np.ndarray:
        if self.kind == "open":
            return s
        return y

    def energy(self, s: np.ndarray) -> float:
        if self.kind == "open":
            return 0.0
        return 0.5 * self.stiffness * float(s @ s)


def open_port() -> EnvironmentModel:
    return EnvironmentModel(kind="open")


def spring_damper(stiffness: float, damping: float) -> EnvironmentModel:
    """Built-in passive environment; rejects parameters that would make it active."""
    if stiffness < 0.0 or damping < 0.0:
        raise ValueError(
            f"passive spring-damper needs k >= 0 and c >= 0, got k={stiffness}, c={damping}"
        )
    return EnvironmentModel(kind="spring_damper", stiffness=stiffness, damping=damping)


@dataclass
class ClosedLoopSystem:
    """Plant, tank, desired-action policy, valve, and environment in one loop."""

    plant: PhPlant
    tank: Tank
    policy: ActionPolicy
    valve: ValveConfig
    environment: EnvironmentModel
    x0: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def initial_state(self) -> np.ndarray:
        if self.x0 is None:
            return np.zeros(self.plant.n)
        from .ph_core import as_vector

        return as_vector(self.x0, self.plant.n, "initial state").copy()

    def initial_env_state(self) -> np.ndarray:
        return np.zeros(self.environment.state_dim(self.plant.m))


@dataclass(frozen=True)
class StepControls:
    """Valve decisions frozen for the duration of one integration step.

    gradient_sign pins which branch of the tank chart the step started on; a
    substage evaluated on the other branch means the step straddles the
    singular point and must be aborted.
    """

    alpha: float
    scale: float
    overflow_blocked: bool
    gradient_sign: float = 1.0


@dataclass
class StepRecord:
    """Everything observable about the loop at one instant."""

    t: float
    x: np.ndarray
    x_t: float
    plant_energy: float
    tank_energy: float
    total_energy: float
    alpha: float
    p_c: float
    p_t: float
    p_e: float
    p_d: float
    u_c: np.ndarray
    u_e: np.ndarray
    y: np.ndarray


def evaluate_loop(sys: ClosedLoopSystem, t: float, x: np.ndarray, x_t: float,
                  s_env: np.ndarray, controls: StepControls | None,
                  want_record: bool, check: bool = False):
    """One evaluation of the closed loop at (t, x, x_t, s_env).

    With controls=None the valve decisions are made here, one-pass: the
    candidate tank power is computed as if the full action were applied
    (including the dissipation refill), alpha and the power-limit scale follow
    from it, and the overflow gate looks at the resulting inflow.  Passing
    frozen controls reuses decisions from the start of an integration step.

    Returns (x_dot, x_t_dot, s_env_dot, controls, record-or-None).
    """
    plant = sys.plant
    valve = sys.valve
    law = sys.tank.law

    grad, J, R, g = eval_maps(plant, x, check=check)
    y = g.T @ grad
    u_e = sys.environment.force(t, y, s_env)

    tank_energy = law.energy(x_t)
    d_tank = law.gradient(x_t)
    if abs(d_tank) < valve.singularity_delta:
        raise SingularTankError(x_t, tank_energy)
    if controls is not None and d_tank * controls.gradient_sign < 0.0:
        # the step crossed the chart's singular point between substages
        raise SingularTankError(x_t, tank_energy)

    w = np.asarray(sys.policy(t, x, x_t), dtype=float)
    p_d = float(grad @ (R @ grad))
    if p_d < 0.0:
        p_d = 0.0
    refill_power = valve.beta * p_d
    drive = float(w @ y)

    if controls is None:
        candidate_t_dot = -drive + refill_power
        alpha = valve_alpha(tank_energy, candidate_t_dot, valve)
        scale = power_limit(max(0.0, -candidate_t_dot), valve)
        inflow = -alpha * scale * drive + refill_power
        blocked = (valve.t_max is not None
                   and tank_energy >= valve.t_max and inflow > 0.0)
        controls = StepControls(alpha=alpha, scale=scale, overflow_blocked=blocked,
                                gradient_sign=1.0 if d_tank > 0.0 else -1.0)

    if controls.alpha == 0.0:
        # full detachment: the action is cut and the tank state freezes
        u_c = np.zeros(plant.m)
        u_t = 0.0
        p_c = 0.0
        p_t = 0.0
    else:
        u_c = (controls.alpha * controls.scale) * w
        p_c = float(u_c @ y)
        u_t = -p_c / d_tank
        p_t = d_tank * u_t
        if refill_power > 0.0:
            u_t += refill_power / d_tank
        if controls.overflow_blocked and d_tank * u_t > 0.0:
            u_t = 0.0

    x_dot = (J - R) @ grad + g @ (u_c + u_e)
    s_env_dot = sys.environment.flow(t, y, s_env)

    record = None
    if want_record:
        h = float(plant.hamiltonian(x))
        record = StepRecord(
            t=t, x=x, x_t=x_t,
            plant_energy=h, tank_energy=tank_energy, total_energy=h + tank_energy,
            alpha=controls.alpha,
            p_c=p_c, p_t=p_t, p_e=float(u_e @ y), p_d=p_d,
            u_c=u_c, u_e=u_e, y=y,
        )
    return x_dot, u_t, s_env_dot, controls, record


def assemble_dynamics(sys: ClosedLoopSystem, t: float, x, x_t: float,
                      s_env=None) -> tuple[np.ndarray, float, np.ndarray, StepRecord]:
    """Closed-loop derivatives and the full port-power record at one instant.

    Raises SingularTankError when the tank gradient has collapsed and
    NumericError when a plant map stops returning finite values.
    """
    from .ph_core import as_vector

    x = as_vector(x, sys.plant.n, "state")
    if s_env is None:
        s_env = sys.initial_env_state()
    else:
        s_env = np.asarray(s_env, dtype=float)
    x_dot, x_t_dot, s_dot, _, record = evaluate_loop(
        sys, t, x, float(x_t), s_env, controls=None, want_record=True, check=True)
    return x_dot, x_t_dot, s_dot, record


class EscapeReason:
    STATE_BOUND = "state bound exceeded"
    ENERGY_FLOOR = "tank energy depleted"
    NON_FINITE = "non-finite sample"


@dataclass(frozen=True)
class EscapeEvent:
    time: float
    reason: str
    index: int


def detect_escape(trace: "Trace", state_bound: float = 1e3,
                  energy_floor: float = 1e-12) -> EscapeEvent | None:
    """First sample where the tank chart left its usable range.

    Flags, in order of precedence per sample: |x_t| beyond state_bound, tank
    energy below energy_floor, or any non-finite state entry.  Returns None
    for a clean trace.
    """
    x_t = trace.x_t
    tank_energy = trace.tank_energy
    for i in range(len(trace.t)):
        if abs(x_t[i]) > state_bound:
            return EscapeEvent(float(trace.t[i]), EscapeReason.STATE_BOUND, i)
        if tank_energy[i] < energy_floor:
            return EscapeEvent(float(trace.t[i]), EscapeReason.ENERGY_FLOOR, i)
        if not (np.isfinite(trace.x[i]).all() and np.isfinite(x_t[i])
                and np.isfinite(tank_energy[i])):
            return EscapeEvent(float(trace.t[i]), EscapeReason.NON_FINITE, i)
    return None


def _cumulative_trapezoid(values: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(t))
    return out


@dataclass
class AuditReport:
    """Outcome of a passivity audit over one trace."""

    passed: bool
    storage: str
    tolerance: float
    delta_storage: float
    supplied_energy: float
    dissipated_energy: float
    worst_violation: float
    worst_violation_time: float
    residual_max: float
    residual_mean: float
    env_checked: bool
    env_delivered_max: float
    env_initial_energy: float
    env_ok: bool
    samples_used: int
    samples_total: int
    dt: float
    duration: float
    fd_gradient: bool

    def to_text(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        lines = [
            f"passivity audit: {verdict}",
            f"  storage function      : {self.storage}",
            f"  samples               : {self.samples_used} of {self.samples_total}"
            f" (dt ~ {self.dt:.6g} s, duration {self.duration:.6g} s)",
            f"  stored-energy change  : {self.delta_storage: .9e} J",
            f"  supplied energy       : {self.supplied_energy: .9e} J",
            f"  dissipated energy     : {self.dissipated_energy: .9e} J",
            f"  worst violation       : {self.worst_violation: .9e} J"
            f" at t = {self.worst_violation_time:.6g} s",
            f"  tolerance             : {self.tolerance: .9e} J",
            f"  max |P_c + P_t|       : {self.residual_max: .9e} W",
            f"  mean |P_c + P_t|      : {self.residual_mean: .9e} W",
        ]
        if self.env_checked:
            state = "ok" if self.env_ok else "VIOLATED"
            lines.append(
                f"  environment (declared passive): {state},"
                f" net delivered {self.env_delivered_max: .9e} J"
                f" vs budget {self.env_initial_energy: .9e} J")
        else:
            lines.append("  environment check      : not applicable")
        if self.fd_gradient:
            lines.append("  note: plant gradient came from a finite-difference fallback")
        return "\n".join(lines)

    def to_kv(self) -> str:
        pairs = [
            ("audit.passed", str(self.passed).lower()),
            ("audit.storage", self.storage),
            ("audit.tolerance", f"{self.tolerance:.17g}"),
            ("audit.delta_storage", f"{self.delta_storage:.17g}"),
            ("audit.supplied_energy", f"{self.supplied_energy:.17g}"),
            ("audit.dissipated_energy", f"{self.dissipated_energy:.17g}"),
            ("audit.worst_violation", f"{self.worst_violation:.17g}"),
            ("audit.worst_violation_time", f"{self.worst_violation_time:.17g}"),
            ("audit.residual_max", f"{self.residual_max:.17g}"),
            ("audit.residual_mean", f"{self.residual_mean:.17g}"),
            ("audit.env_checked", str(self.env_checked).lower()),
            ("audit.env_delivered_max", f"{self.env_delivered_max:.17g}"),
            ("audit.env_ok", str(self.env_ok).lower()),
            ("audit.samples_used", str(self.samples_used)),
            ("audit.dt", f"{self.dt:.17g}"),
            ("audit.fd_gradient", str(self.fd_gradient).lower()),
        ]
        return "\n".join(f"{k}={v}" for k, v in pairs)


class TraceAuditError(ValueError):
    """The trace cannot be audited (too short, unordered, or inconsistent)."""


def default_audit_tolerance(dt: float, duration: float) -> float:
    """Discretization-aware tolerance: 1e-6 plus 10*dt^2 per unit time."""
    return 1e-6 + 10.0 * dt * dt * duration


def passivity_audit(trace: "Trace", storage: str = "total",
                    tol: float | None = None) -> AuditReport:
    """Check a trace against the passivity inequality of its storage function.

    storage "total" uses H + T with the interaction port as supply; "plant"
    uses H alone with the combined control + interaction port as supply.  The
    worst-case violation max_t [Delta V(t) - supplied(t)] is compared to tol
    (default: discretization-aware, see default_audit_tolerance).

    When the trace metadata declares the environment passive, the report also
    verifies that the environment never delivered more net energy than it
    initially stored; a power source mislabeled as passive fails the audit
    even though the loop's own storage inequality cannot be violated from
    inside.

    Trailing samples with non-finite entries (a recorded escape) are excluded.
    Note that "plant" storage integrates the sampled control-port power, which
    steps discontinuously when the valve detaches; each such switch carries an
    O(dt * |P_c|) quadrature error that the default tolerance does not cover,
    so audits of switching traces against plant storage need a caller-chosen
    tol.
    """
    if storage not in ("total", "plant"):
        raise ValueError(f"storage must be 'total' or 'plant', got {storage!r}")
    t = np.asarray(trace.t, dtype=float)
    if t.size < 2:
        raise TraceAuditError("audit needs at least 2 samples")
    if not (np.diff(t) > 0).all():
        raise TraceAuditError("trace times must be strictly increasing")

    v = trace.total_energy if storage == "total" else trace.plant_energy
    p_e = trace.p_e
    p_c = trace.p_c
    p_d = trace.p_d
    p_t = trace.p_t
    finite = (np.isfinite(v) & np.isfinite(p_e) & np.isfinite(p_c)
              & np.isfinite(p_d) & np.isfinite(p_t))
    bad = np.flatnonzero(~finite)
    used = int(bad[0]) if bad.size else t.size
    if used < 2:
        raise TraceAuditError("audit needs at least 2 finite samples")

    t_u = t[:used]
    v_u = v[:used]
    supply_rate = p_e[:used] if storage == "total" else p_c[:used] + p_e[:used]
    supplied = _cumulative_trapezoid(supply_rate, t_u)
    dissipated = _cumulative_trapezoid(p_d[:used], t_u)
    violation = (v_u - v_u[0]) - supplied
    worst = int(np.argmax(violation))

    dt = float(np.median(np.diff(t_u)))
    duration = float(t_u[-1] - t_u[0])
    if tol is None:
        tol = default_audit_tolerance(dt, duration)

    residual = np.abs(p_c[:used] + p_t[:used])

    meta = trace.meta or {}
    env_checked = bool(meta.get("env_declared_passive", False))
    env_initial = float(meta.get("env_initial_energy", 0.0))
    env_delivered = float(_cumulative_trapezoid(p_e[:used], t_u).max())
    env_ok = (not env_checked) or env_delivered <= env_initial + tol

    passed = violation[worst] <= tol and env_ok
    return AuditReport(
        passed=bool(passed),
        storage=storage,
        tolerance=float(tol),
        delta_storage=float(v_u[-1] - v_u[0]),
        supplied_energy=float(supplied[-1]),
        dissipated_energy=float(dissipated[-1]),
        worst_violation=float(violation[worst]),
        worst_violation_time=float(t_u[worst]),
        residual_max=float(residual.max()),
        residual_mean=float(residual.mean()),
        env_checked=env_checked,
        env_delivered_max=env_delivered,
        env_initial_energy=env_initial,
        env_ok=bool(env_ok),
        samples_used=used,
        samples_total=int(t.size),
        dt=dt,
        duration=duration,
        fd_gradient=bool(meta.get("fd_gradient", False)),
    )
