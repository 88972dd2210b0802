"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; the assertions make each criterion a hard gate either way.
"""

import math

import numpy as np
import pytest

from etank.cli import main as cli_main
from etank.closed_loop import detect_escape, passivity_audit
from etank.ph_core import dirac_apply
from etank.scenarios import example1, negative_damping_case, random_passive_env
from etank.sim_engine import SimConfig, simulate
from etank.tank import EnergyLaw
from test_ph_core import random_plant

T_BAR = math.sqrt(2.0)
FUZZ_CFG = SimConfig(dt=5e-4, t_end=0.5)


def _gate(name, passed, detail):
    print(f"[acceptance] {name}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, f"{name}: {detail}"


@pytest.fixture(scope="session")
def fuzz_runs():
    runs = []
    for sys_ in random_passive_env(seed=20260810, n_cases=100):
        trace, term = simulate(sys_, FUZZ_CFG)
        runs.append((sys_, trace, term))
    return runs


@pytest.fixture(scope="session")
def lossless_runs():
    cfg = SimConfig(dt=1e-3, t_end=1.0)
    return {law: simulate(example1(law=law), cfg) for law in EnergyLaw}


def test_criterion_01_escape_time(example1_runs):
    trace, term = example1_runs[EnergyLaw.EXPONENTIAL]
    event = detect_escape(trace)
    in_window = 1.41 <= term.time <= 1.42
    near_tbar = abs(term.time - T_BAR) <= 10 * 1e-4
    ok = (not term.completed) and in_window and near_tbar and event is not None
    _gate("C1 escape time", ok,
          f"terminated {term.kind} at t={term.time:.5f}, t_bar={T_BAR:.5f}, "
          f"detect_escape={event.reason if event else None}")


def test_criterion_02_tank_energy_trajectory(example1_runs):
    trace, _ = example1_runs[EnergyLaw.EXPONENTIAL]
    mask = trace.t <= 1.40 + 1e-12
    err = float(np.abs(trace.tank_energy[mask] - (1.0 - 0.5 * trace.t[mask] ** 2)).max())
    _gate("C2 tank energy vs closed form", err <= 1e-3,
          f"max deviation {err:.3e} on [0, 1.40], tol 1e-3")


def test_criterion_03_coordinate_invariance(example1_runs):
    tr_q, _ = example1_runs[EnergyLaw.QUADRATIC]
    tr_e, _ = example1_runs[EnergyLaw.EXPONENTIAL]
    t0_equal = abs(tr_q.tank_energy[0] - 1.0) <= 1e-12 and tr_e.tank_energy[0] == 1.0
    k = min(len(tr_q), len(tr_e))
    mask = tr_q.t[:k] <= 1.40 + 1e-12
    diff = float(np.abs(tr_q.tank_energy[:k][mask] - tr_e.tank_energy[:k][mask]).max())
    quad_final = tr_q.x_t[np.isfinite(tr_q.x_t)][-1]
    exp_min = float(tr_e.x_t[np.isfinite(tr_e.x_t)].min())
    ok = t0_equal and diff <= 1e-6 and abs(quad_final) < 0.1 and exp_min < -5.0
    _gate("C3 coordinate invariance", ok,
          f"max energy diff {diff:.3e} on [0, 1.40]; "
          f"quadratic x_t ends at {quad_final:.4f}, exponential reaches {exp_min:.1f}")


def test_criterion_04_lossless_routing(lossless_runs):
    drifts = {}
    for law, (trace, term) in lossless_runs.items():
        assert term.completed
        drifts[law.value] = float(np.abs(trace.total_energy - trace.total_energy[0]).max())
    worst = max(drifts.values())
    _gate("C4 lossless routing", worst <= 1e-8,
          f"max |H+T - (H+T)(0)| over 1 s at dt=1e-3: {worst:.3e}, tol 1e-8")


def test_criterion_05_power_preservation(example1_runs, valve_run, lossless_runs,
                                          fuzz_runs):
    traces = [example1_runs[law][0] for law in EnergyLaw]
    traces.append(valve_run[0])
    traces.extend(trace for _, (trace, _) in lossless_runs.items())
    traces.extend(trace for _, trace, _ in fuzz_runs)
    worst = 0.0
    samples = 0
    for trace in traces:
        finite = np.isfinite(trace.p_c) & np.isfinite(trace.p_t)
        worst = max(worst, float(np.abs(trace.p_c[finite] + trace.p_t[finite]).max()))
        samples += int(finite.sum())
    _gate("C5 power preservation", worst <= 1e-12,
          f"max |P_c + P_t| = {worst:.3e} over {samples} samples in "
          f"{len(traces)} traces, tol 1e-12")


def test_criterion_06_zero_power_relation():
    rng = np.random.default_rng(617)
    worst = 0.0
    for _ in range(1000):
        plant = random_plant(rng)
        x = rng.standard_normal(3)
        effort = rng.standard_normal(3)
        u_r = rng.standard_normal(3)
        u = rng.standard_normal(2)
        x_dot, y_r, y_neg = dirac_apply(plant, x, effort, u_r, u)
        worst = max(worst, abs(float(effort @ x_dot + y_r @ u_r + y_neg @ u)))
    _gate("C6 zero-power relation", worst <= 1e-12,
          f"max |pairing| = {worst:.3e} over 1000 random plants, tol 1e-12")


def test_criterion_07_valve_safety(valve_run):
    trace, term = valve_run
    switches = np.diff(trace.alpha)
    closed = int((switches < 0).sum())
    reopened = int((switches > 0).sum())
    detached = trace.alpha == 0.0
    u_c_after = float(np.abs(trace.u_c[detached]).max()) if detached.any() else 0.0
    ok = (term.completed and term.time == pytest.approx(3.0)
          and float(trace.tank_energy.min()) >= 0.0
          and closed == 1 and reopened == 0 and u_c_after == 0.0)
    _gate("C7 valve safety", ok,
          f"{term.kind} at t={term.time:.3g}, min T={trace.tank_energy.min():.4g}, "
          f"1->0 switches={closed}, reopenings={reopened}, "
          f"max |u_c| after detachment={u_c_after:.3g}")


def test_criterion_08_passivity_fuzz(fuzz_runs):
    failures = []
    for sys_, trace, term in fuzz_runs:
        if not term.completed:
            failures.append((sys_.meta["case"], "did not complete"))
            continue
        report = passivity_audit(trace, storage="total")
        if not report.passed:
            failures.append((sys_.meta["case"], f"violation {report.worst_violation:.2e}"))
    active_trace, _ = simulate(negative_damping_case(), FUZZ_CFG)
    active_report = passivity_audit(active_trace, storage="total")
    ok = not failures and not active_report.passed
    _gate("C8 passivity fuzz", ok,
          f"{len(fuzz_runs)} passive cases clean (failures: {failures[:3]}), "
          f"active environment flagged: {not active_report.passed}")


def test_criterion_09_integrator_order():
    errs = []
    for dt in (4e-4, 2e-4, 1e-4):
        trace, _ = simulate(example1(law=EnergyLaw.QUADRATIC),
                            SimConfig(dt=dt, t_end=1.41))
        analytic = 1.0 - 0.5 * trace.t ** 2
        errs.append(float(np.abs(trace.tank_energy - analytic).max()))
    r1 = errs[0] / errs[1]
    r2 = errs[1] / errs[2]
    _gate("C9 integrator order", r1 >= 8.0 and r2 >= 8.0,
          f"errors {errs[0]:.2e} / {errs[1]:.2e} / {errs[2]:.2e}, "
          f"halving ratios {r1:.1f} and {r2:.1f}, need >= 8")


def test_criterion_10_cli_determinism(tmp_path):
    args = ["simulate", "--scenario", "example1", "--tank", "exponential",
            "--dt", "1e-3", "--t-end", "3"]
    out_a = tmp_path / "a.csv"
    out_b = tmp_path / "b.csv"
    code_a = cli_main(args + ["--out", str(out_a)])
    code_b = cli_main(args + ["--out", str(out_b)])
    same = out_a.read_bytes() == out_b.read_bytes()
    _gate("C10 CLI determinism", code_a == code_b == 2 and same,
          f"exit codes {code_a}/{code_b}, byte-identical: {same}")
