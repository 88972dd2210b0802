"""Built-in, exactly reproducible scenarios.

example1 is the canonical failure-mode demo: a unit mass pushed by a constant
force whose action is routed through the tank.  With tank energy T(0) and no
valve, the analytic solution is v(t) = f_bar*t/m and
T(t) = T(0) - f_bar^2 t^2 / (2m), so the reservoir empties at
t_bar = sqrt(2*m*T(0))/f_bar and the interconnection stops being realizable
there, in every chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .closed_loop import (ClosedLoopSystem, EnvironmentModel, constant_action,
                          open_port, spring_damper)
from .ph_core import PhPlant
from .sim_engine import SimConfig, Trace, TerminationReason, simulate
from .tank import EnergyLaw, Tank, ValveConfig


def point_mass_plant(mass: float) -> PhPlant:
    """Single mass with momentum state: H = p^2 / 2m, output is velocity."""
    if mass <= 0.0:
        raise ValueError(f"mass must be positive, got {mass}")
    zero = np.zeros((1, 1))
    one = np.ones((1, 1))
    return PhPlant(
        n=1, m=1,
        hamiltonian=lambda x: 0.5 * x[0] * x[0] / mass,
        grad_hamiltonian=lambda x: x / mass,
        structure_map=lambda x: zero,
        dissipation_map=lambda x: zero,
        input_map=lambda x: one,
    )


def mass_spring_damper_plant(mass: float, stiffness: float, damping: float) -> PhPlant:
    """Mass-spring-damper in (q, p) coordinates; the force port drives p."""
    if mass <= 0.0:
        raise ValueError(f"mass must be positive, got {mass}")
    if stiffness < 0.0 or damping < 0.0:
        raise ValueError(f"stiffness and damping must be >= 0, got k={stiffness}, c={damping}")
    j = np.array([[0.0, 1.0], [-1.0, 0.0]])
    r = np.array([[0.0, 0.0], [0.0, damping]])
    g = np.array([[0.0], [1.0]])
    inv_m = 1.0 / mass

    def ham(x):
        return 0.5 * stiffness * x[0] * x[0] + 0.5 * x[1] * x[1] * inv_m

    def grad(x):
        return np.array([stiffness * x[0], x[1] * inv_m])

    return PhPlant(n=2, m=1, hamiltonian=ham, grad_hamiltonian=grad,
                   structure_map=lambda x: j, dissipation_map=lambda x: r,
                   input_map=lambda x: g)


def escape_time(mass: float, f_bar: float, t0_energy: float = 1.0) -> float:
    """Instant the constant-force run empties its reservoir (analytic)."""
    return math.sqrt(2.0 * mass * t0_energy) / f_bar


def example1(m: float = 1.0, f_bar: float = 1.0,
             law: EnergyLaw = EnergyLaw.EXPONENTIAL, t0_energy: float = 1.0,
             valve: ValveConfig | None = None) -> ClosedLoopSystem:
    """Constant-force mass with a tank-routed action and an open environment.

    The valve is disabled by default (epsilon = 0) so the run exhibits the
    reservoir-emptying failure; pass a ValveConfig to rescue it.
    """
    if m <= 0.0:
        raise ValueError(f"mass must be positive, got {m}")
    if t0_energy <= 0.0:
        raise ValueError(f"initial tank energy must be positive, got {t0_energy}")
    if valve is None:
        valve = ValveConfig(epsilon=0.0)
    return ClosedLoopSystem(
        plant=point_mass_plant(m),
        tank=Tank.with_energy(law, t0_energy),
        policy=constant_action(f_bar),
        valve=valve,
        environment=open_port(),
        x0=np.zeros(1),
        meta={"m": m, "f_bar": f_bar, "law": law.value, "t0_energy": t0_energy,
              "epsilon": valve.epsilon},
    )


@dataclass
class LawComparison:
    """Paired runs of the constant-force scenario under both tank charts."""

    t: np.ndarray
    energy_quadratic: np.ndarray
    energy_exponential: np.ndarray
    state_quadratic: np.ndarray
    state_exponential: np.ndarray
    max_energy_diff: float
    window_end: float
    trace_quadratic: Trace
    trace_exponential: Trace
    termination_quadratic: TerminationReason
    termination_exponential: TerminationReason


def compare_energy_laws(cfg: SimConfig, m: float = 1.0, f_bar: float = 1.0,
                        t0_energy: float = 1.0) -> LawComparison:
    """Run both charts from equal initial energy and align their trajectories.

    The reported max energy difference is taken over the common time range;
    when either run terminates early the final 1% of that range is excluded,
    because the terminal samples sit on the wrong side of the singular point
    (quadratic) or at the chart's escape (exponential) and no longer describe
    a realizable interconnection.
    """
    tr_q, term_q = simulate(example1(m, f_bar, EnergyLaw.QUADRATIC, t0_energy), cfg,
                            scenario="example1")
    tr_e, term_e = simulate(example1(m, f_bar, EnergyLaw.EXPONENTIAL, t0_energy), cfg,
                            scenario="example1")
    k = min(len(tr_q), len(tr_e))
    t = tr_q.t[:k]
    overlap_end = float(min(tr_q.t[-1], tr_e.t[-1]))
    terminated = not (term_q.completed and term_e.completed)
    window_end = 0.99 * overlap_end if terminated else overlap_end
    mask = t <= window_end + 1e-12
    diff = np.abs(tr_q.tank_energy[:k][mask] - tr_e.tank_energy[:k][mask])
    return LawComparison(
        t=t,
        energy_quadratic=tr_q.tank_energy[:k],
        energy_exponential=tr_e.tank_energy[:k],
        state_quadratic=tr_q.x_t[:k],
        state_exponential=tr_e.x_t[:k],
        max_energy_diff=float(diff.max()),
        window_end=window_end,
        trace_quadratic=tr_q,
        trace_exponential=tr_e,
        termination_quadratic=term_q,
        termination_exponential=term_e,
    )


def sinusoid_action(amplitude: float, omega: float, phase: float):
    def policy(t, x, x_t):
        return np.array([amplitude * math.sin(omega * t + phase)])
    return policy


def random_passive_env(seed: int, n_cases: int) -> list[ClosedLoopSystem]:
    """Seeded batch of mass-spring-damper plants against spring-damper environments.

    Draws m in [0.1, 10], stiffnesses in [0, 100], dampings in [0, 10] for
    both plant and environment, a bounded sinusoidal action with |w| <= 5,
    and either tank chart with one unit of initial energy behind a hard valve.
    Same seed, same batch.
    """
    if n_cases < 1:
        raise ValueError(f"n_cases must be >= 1, got {n_cases}")
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(n_cases):
        m = rng.uniform(0.1, 10.0)
        k_plant = rng.uniform(0.0, 100.0)
        c_plant = rng.uniform(0.0, 10.0)
        k_env = rng.uniform(0.0, 100.0)
        c_env = rng.uniform(0.0, 10.0)
        amp = rng.uniform(-5.0, 5.0)
        omega = rng.uniform(0.0, 5.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        law = EnergyLaw.QUADRATIC if rng.integers(2) == 0 else EnergyLaw.EXPONENTIAL
        cases.append(ClosedLoopSystem(
            plant=mass_spring_damper_plant(m, k_plant, c_plant),
            tank=Tank.with_energy(law, 1.0),
            policy=sinusoid_action(amp, omega, phase),
            valve=ValveConfig(epsilon=0.01),
            environment=spring_damper(k_env, c_env),
            x0=np.zeros(2),
            meta={"case": i, "m": m, "k_plant": k_plant, "c_plant": c_plant,
                  "k_env": k_env, "c_env": c_env, "amp": amp, "omega": omega,
                  "phase": phase, "law": law.value},
        ))
    return cases


def negative_damping_case(seed: int = 0, damping: float = -2.0) -> ClosedLoopSystem:
    """A power-injecting environment mislabeled as passive, for audit testing."""
    rng = np.random.default_rng(seed)
    env = EnvironmentModel(kind="spring_damper", stiffness=rng.uniform(5.0, 20.0),
                           damping=damping, declared_passive=True)
    return ClosedLoopSystem(
        plant=mass_spring_damper_plant(1.0, 10.0, 0.5),
        tank=Tank.with_energy(EnergyLaw.QUADRATIC, 1.0),
        policy=sinusoid_action(1.0, 2.0, 0.0),
        valve=ValveConfig(epsilon=0.01),
        environment=env,
        x0=np.zeros(2),
        meta={"damping": damping},
    )


SCENARIOS = {
    "example1": example1,
}
