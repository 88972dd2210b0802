"""Fixed-step integration of a closed loop with full trace recording.

Runs are bit-reproducible: times come from i*dt (never accumulated), the
integrators are plain RK4 / explicit Euler, and every quantity in the trace
is a deterministic function of the inputs.  Valve decisions are evaluated at
the start of each step and held fixed through the substages, so the
discontinuous switching law cannot flip inside a step.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .closed_loop import ClosedLoopSystem, StepRecord, evaluate_loop
from .ph_core import NumericError, check_structure
from .tank import EnergyLaw, SingularTankError, Tank

_METHODS = ("rk4", "euler")


@dataclass(frozen=True)
class SimConfig:
    """Integration settings.  t_end is rounded to a whole number of dt steps."""

    dt: float = 1e-4
    t_end: float = 1.0
    method: str = "rk4"
    record_stride: int = 1
    seed: int = 0
    state_bound: float = 1e3
    energy_floor: float = 1e-12

    def __post_init__(self) -> None:
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if not (self.t_end > 0.0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be positive and finite, got {self.t_end}")
        if self.dt > self.t_end:
            raise ValueError(f"dt must not exceed t_end, got dt={self.dt}, t_end={self.t_end}")
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}, got {self.method!r}")
        if self.record_stride < 1:
            raise ValueError(f"record_stride must be >= 1, got {self.record_stride}")

    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))


@dataclass(frozen=True)
class TerminationReason:
    """Why a run ended: kind is 'completed', 'singularity', or 'escape'."""

    kind: str
    time: float
    detail: str = ""

    @property
    def completed(self) -> bool:
        return self.kind == "completed"

    def describe(self) -> str:
        if self.kind == "completed":
            return f"completed at t = {self.time:.6g} s"
        return f"{self.kind} at t = {self.time:.6g} s ({self.detail})"


@dataclass
class Trace:
    """Time-indexed record of states, energies, valve state, and port powers.

    u_c, u_e, y are present on traces produced in-process and None on traces
    read back from CSV (they are not part of the file contract).
    """

    t: np.ndarray
    x: np.ndarray
    x_t: np.ndarray
    plant_energy: np.ndarray
    tank_energy: np.ndarray
    total_energy: np.ndarray
    alpha: np.ndarray
    p_c: np.ndarray
    p_t: np.ndarray
    p_e: np.ndarray
    p_d: np.ndarray
    u_c: np.ndarray | None = None
    u_e: np.ndarray | None = None
    y: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def n_states(self) -> int:
        return int(self.x.shape[1])


class _TraceBuilder:
    def __init__(self, n: int, m: int):
        self.n = n
        self.m = m
        self.rows: list[StepRecord] = []

    def append(self, rec: StepRecord) -> None:
        self.rows.append(rec)

    def append_partial(self, t: float, x: np.ndarray, x_t: float, law: EnergyLaw) -> None:
        """Record a state whose port quantities could not be evaluated."""
        tank_e = law.energy(x_t) if math.isfinite(x_t) else float("nan")
        nan_vec = np.full(self.m, float("nan"))
        self.rows.append(StepRecord(
            t=t, x=x, x_t=x_t,
            plant_energy=float("nan"), tank_energy=tank_e, total_energy=float("nan"),
            alpha=float("nan"), p_c=float("nan"), p_t=float("nan"),
            p_e=float("nan"), p_d=float("nan"),
            u_c=nan_vec, u_e=nan_vec, y=nan_vec,
        ))

    def build(self, meta: dict) -> Trace:
        rows = self.rows
        return Trace(
            t=np.array([r.t for r in rows], dtype=float),
            x=np.array([r.x for r in rows], dtype=float).reshape(len(rows), self.n),
            x_t=np.array([r.x_t for r in rows], dtype=float),
            plant_energy=np.array([r.plant_energy for r in rows], dtype=float),
            tank_energy=np.array([r.tank_energy for r in rows], dtype=float),
            total_energy=np.array([r.total_energy for r in rows], dtype=float),
            alpha=np.array([r.alpha for r in rows], dtype=float),
            p_c=np.array([r.p_c for r in rows], dtype=float),
            p_t=np.array([r.p_t for r in rows], dtype=float),
            p_e=np.array([r.p_e for r in rows], dtype=float),
            p_d=np.array([r.p_d for r in rows], dtype=float),
            u_c=np.array([r.u_c for r in rows], dtype=float).reshape(len(rows), self.m),
            u_e=np.array([r.u_e for r in rows], dtype=float).reshape(len(rows), self.m),
            y=np.array([r.y for r in rows], dtype=float).reshape(len(rows), self.m),
            meta=meta,
        )


def config_hash(payload: dict) -> str:
    """Short stable hash of a JSON-serializable parameter set."""
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _rhs(sys, t, x, x_t, s, controls):
    dx, dxt, ds, _, _ = evaluate_loop(sys, t, x, x_t, s, controls, want_record=False)
    return dx, dxt, ds


def _step_rk4(sys, t, x, x_t, s, dt, controls, k1):
    h = 0.5 * dt
    k2 = _rhs(sys, t + h, x + h * k1[0], x_t + h * k1[1], s + h * k1[2], controls)
    k3 = _rhs(sys, t + h, x + h * k2[0], x_t + h * k2[1], s + h * k2[2], controls)
    k4 = _rhs(sys, t + dt, x + dt * k3[0], x_t + dt * k3[1], s + dt * k3[2], controls)
    w = dt / 6.0
    x_n = x + w * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0])
    xt_n = x_t + w * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1])
    s_n = s + w * (k1[2] + 2.0 * (k2[2] + k3[2]) + k4[2])
    return x_n, xt_n, s_n


def _step_euler(sys, t, x, x_t, s, dt, controls, k1):
    return x + dt * k1[0], x_t + dt * k1[1], s + dt * k1[2]


def _tank_failure(time: float, x_t: float, law: EnergyLaw,
                  energy_floor: float) -> TerminationReason:
    """Classify a collapsed tank gradient.

    At (or below) the energy floor the reservoir genuinely ran dry, which a
    chart without a finite singular point reaches by running its state away;
    above the floor the chart crossed its singular point at finite energy.
    """
    energy = law.energy(x_t) if math.isfinite(x_t) else 0.0
    if energy <= energy_floor:
        return TerminationReason("escape", time, "tank energy depleted")
    return TerminationReason(
        "singularity", time,
        f"tank gradient collapsed (x_t={x_t:.6g}, T={energy:.6g})")


def simulate(sys: ClosedLoopSystem, cfg: SimConfig, *, scenario: str = "",
             params: dict | None = None) -> tuple[Trace, TerminationReason]:
    """Integrate the closed loop from t = 0 until t_end or a failure event.

    Returns the recorded trace and the termination reason.  Identical inputs
    produce bit-identical traces.  On singularity or escape the partial trace
    is returned with a terminal sample appended (port powers are NaN when the
    terminal state cannot be evaluated).
    """
    plant = sys.plant
    law = sys.tank.law
    valve = sys.valve
    dt = cfg.dt
    stepper = _step_rk4 if cfg.method == "rk4" else _step_euler

    x = sys.initial_state()
    x_t = float(sys.tank.x_t)
    s = sys.initial_env_state()

    builder = _TraceBuilder(plant.n, plant.m)
    n_steps = cfg.n_steps()
    term: TerminationReason | None = None

    resolved_params = dict(sys.meta)
    if params:
        resolved_params.update(params)
    meta = {
        "scenario": scenario,
        "params": resolved_params,
        "law": law.value,
        "dt": dt,
        "t_end": cfg.t_end,
        "method": cfg.method,
        "record_stride": cfg.record_stride,
        "seed": cfg.seed,
        "valve": {
            "epsilon": valve.epsilon,
            "smooth_width": valve.smooth_width,
            "t_max": valve.t_max,
            "p_max": valve.p_max,
            "beta": valve.beta,
            "singularity_delta": valve.singularity_delta,
        },
        "env_kind": sys.environment.kind,
        "env_declared_passive": sys.environment.declared_passive,
        "env_initial_energy": sys.environment.energy(s),
        "fd_gradient": plant.uses_fd_gradient,
        "n": plant.n,
        "m": plant.m,
    }
    meta["config_hash"] = config_hash(meta)

    for i in range(n_steps):
        t = i * dt
        if i % plant.check_stride == 0:
            check_structure(plant, x)
        try:
            dx, dxt, ds, controls, record = evaluate_loop(
                sys, t, x, x_t, s, controls=None, want_record=True)
        except SingularTankError as err:
            builder.append_partial(t, x, x_t, law)
            term = _tank_failure(t, err.x_t, law, cfg.energy_floor)
            break
        except NumericError as err:
            builder.append_partial(t, x, x_t, law)
            term = TerminationReason("escape", t, f"non-finite plant evaluation: {err}")
            break
        if i % cfg.record_stride == 0:
            builder.append(record)

        t_next = (i + 1) * dt
        try:
            x_n, xt_n, s_n = stepper(sys, t, x, x_t, s, dt, controls, (dx, dxt, ds))
        except SingularTankError as err:
            # record the chart state at which the step was observed to fail
            builder.append_partial(t_next, x, err.x_t, law)
            term = _tank_failure(t_next, err.x_t, law, cfg.energy_floor)
            break
        except NumericError as err:
            builder.append_partial(t_next, x, x_t, law)
            term = TerminationReason("escape", t_next, f"non-finite plant evaluation: {err}")
            break

        g_now = law.gradient(x_t)
        g_next = law.gradient(xt_n) if math.isfinite(xt_n) else 0.0
        if g_now * g_next < 0.0 or abs(g_next) < valve.singularity_delta:
            term = _tank_failure(t_next, xt_n, law, cfg.energy_floor)
        elif abs(xt_n) > cfg.state_bound:
            term = TerminationReason("escape", t_next, "tank state escaped its bound")
        elif law.energy(xt_n) < cfg.energy_floor:
            term = TerminationReason("escape", t_next, "tank energy depleted")
        elif not (np.isfinite(x_n).all() and math.isfinite(xt_n) and np.isfinite(s_n).all()):
            term = TerminationReason("escape", t_next, "non-finite state")
        if term is not None:
            _append_terminal(builder, sys, t_next, x_n, xt_n, s_n, law)
            break
        x, x_t, s = x_n, xt_n, s_n
    else:
        t_final = n_steps * dt
        _append_terminal(builder, sys, t_final, x, x_t, s, law)
        term = TerminationReason("completed", t_final)

    meta["termination"] = {"kind": term.kind, "time": term.time, "detail": term.detail}
    return builder.build(meta), term


def _append_terminal(builder: _TraceBuilder, sys, t, x, x_t, s, law) -> None:
    try:
        with np.errstate(all="ignore"):
            _, _, _, _, record = evaluate_loop(
                sys, t, x, x_t, s, controls=None, want_record=True)
        builder.append(record)
    except (SingularTankError, NumericError, FloatingPointError):
        builder.append_partial(t, x, x_t, law)


def refill_tank(tank: Tank, delta_energy: float) -> Tank:
    """New tank holding the old energy plus delta_energy, in the same chart.

    The quadratic chart renormalizes to its nonnegative branch; the
    exponential chart rejects a zero total (its chart has no state for it).
    """
    if delta_energy < 0.0:
        raise ValueError(f"refill energy must be >= 0, got {delta_energy}")
    total = tank.energy() + delta_energy
    return Tank(law=tank.law, x_t=tank.law.state_from_energy(total))
