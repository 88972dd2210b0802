import math

import numpy as np
import pytest

from etank.closed_loop import passivity_audit
from etank.scenarios import (compare_energy_laws, escape_time, example1,
                             negative_damping_case, random_passive_env)
from etank.sim_engine import SimConfig, simulate
from etank.tank import EnergyLaw


class TestExample1:
    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            example1(m=0.0)
        with pytest.raises(ValueError):
            example1(t0_energy=0.0)

    def test_initial_conditions(self):
        sys_q = example1(law=EnergyLaw.QUADRATIC)
        sys_e = example1(law=EnergyLaw.EXPONENTIAL)
        assert sys_q.tank.x_t == pytest.approx(math.sqrt(2.0))
        assert sys_e.tank.x_t == 0.0
        assert sys_q.initial_state() == pytest.approx([0.0])

    def test_tank_energy_matches_closed_form(self):
        trace, _ = simulate(example1(law=EnergyLaw.EXPONENTIAL), SimConfig(dt=1e-3, t_end=1.0))
        assert trace.tank_energy[-1] == pytest.approx(0.5, abs=1e-3)

    def test_velocity_matches_closed_form(self):
        for law in EnergyLaw:
            trace, _ = simulate(example1(law=law), SimConfig(dt=1e-3, t_end=1.0))
            assert trace.x[-1, 0] == pytest.approx(1.0, abs=1e-6)  # v = p/m, m = 1

    def test_termination_near_analytic_time(self):
        tr, term = simulate(example1(m=2.0, f_bar=1.0, law=EnergyLaw.EXPONENTIAL),
                            SimConfig(dt=1e-3, t_end=4.0))
        assert abs(term.time - 2.0) <= 1e-2

    @pytest.mark.parametrize("m", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("f_bar", [0.5, 1.0, 2.0])
    def test_termination_grid(self, m, f_bar):
        dt = 1e-3
        t_bar = escape_time(m, f_bar)
        for law in EnergyLaw:
            _, term = simulate(example1(m=m, f_bar=f_bar, law=law),
                               SimConfig(dt=dt, t_end=t_bar + 1.0))
            assert not term.completed
            assert abs(term.time - t_bar) <= 10 * dt, (m, f_bar, law)


class TestCompareEnergyLaws:
    def test_energy_curves_coincide(self):
        result = compare_energy_laws(SimConfig(dt=1e-3, t_end=1.0))
        assert result.termination_quadratic.completed
        assert result.max_energy_diff <= 1e-9
        assert result.window_end == pytest.approx(1.0)

    def test_initial_row(self):
        result = compare_energy_laws(SimConfig(dt=1e-3, t_end=1.0))
        assert result.t[0] == 0.0
        assert result.energy_quadratic[0] == pytest.approx(1.0, abs=1e-15)
        assert result.energy_exponential[0] == 1.0
        assert result.state_quadratic[0] == pytest.approx(math.sqrt(2.0))
        assert result.state_exponential[0] == 0.0

    def test_states_diverge_when_terminated(self):
        result = compare_energy_laws(SimConfig(dt=5e-4, t_end=3.0))
        assert not result.termination_quadratic.completed
        assert not result.termination_exponential.completed
        fin = np.isfinite(result.state_exponential)
        assert result.state_exponential[fin].min() < -5.0
        assert abs(result.state_quadratic[np.isfinite(result.state_quadratic)][-1]) < 0.1
        assert result.max_energy_diff <= 1e-6

    def test_scaled_parameters_terminate_together(self):
        result = compare_energy_laws(SimConfig(dt=1e-3, t_end=4.0), m=2.0, f_bar=1.0)
        assert abs(result.termination_quadratic.time - 2.0) <= 1e-2
        assert abs(result.termination_exponential.time - 2.0) <= 1e-2


class TestRandomPassiveEnv:
    def test_deterministic_batches(self):
        a = random_passive_env(seed=123, n_cases=4)
        b = random_passive_env(seed=123, n_cases=4)
        for sys_a, sys_b in zip(a, b):
            assert sys_a.meta == sys_b.meta
        c = random_passive_env(seed=124, n_cases=4)
        assert any(x.meta != y.meta for x, y in zip(a, c))

    def test_case_count_validated(self):
        with pytest.raises(ValueError):
            random_passive_env(seed=1, n_cases=0)

    def test_draws_stay_in_documented_ranges(self):
        for sys_ in random_passive_env(seed=9, n_cases=20):
            meta = sys_.meta
            assert 0.1 <= meta["m"] <= 10.0
            assert 0.0 <= meta["k_plant"] <= 100.0
            assert 0.0 <= meta["c_plant"] <= 10.0
            assert 0.0 <= meta["k_env"] <= 100.0
            assert 0.0 <= meta["c_env"] <= 10.0
            assert abs(meta["amp"]) <= 5.0

    def test_degenerate_open_port_case_audits_clean(self):
        base = random_passive_env(seed=5, n_cases=1)[0]
        from etank.closed_loop import spring_damper
        base.environment = spring_damper(0.0, 0.0)
        trace, term = simulate(base, SimConfig(dt=1e-3, t_end=1.0))
        assert term.completed
        assert passivity_audit(trace, storage="total").passed

    def test_sample_case_audits_clean(self):
        sys_ = random_passive_env(seed=8, n_cases=1)[0]
        trace, term = simulate(sys_, SimConfig(dt=5e-4, t_end=0.5))
        assert term.completed
        assert trace.tank_energy.min() >= 0.0  # hard valve keeps the reservoir nonnegative
        assert passivity_audit(trace, storage="total").passed


class TestNegativeDampingCase:
    def test_is_marked_passive_but_injects(self):
        sys_ = negative_damping_case()
        assert sys_.environment.declared_passive
        assert sys_.environment.damping < 0.0
