import numpy as np
import pytest

from etank.closed_loop import passivity_audit
from etank.scenarios import example1
from etank.sim_engine import SimConfig, simulate
from etank.tank import EnergyLaw, ValveConfig
from etank.trace_io import (RunManifest, TraceFormatError, manifest_path_for,
                            read_manifest, read_trace_csv, trace_header,
                            write_manifest, write_trace_csv)


@pytest.fixture(scope="module")
def short_run():
    sys_ = example1(law=EnergyLaw.EXPONENTIAL, valve=ValveConfig(epsilon=0.01))
    return simulate(sys_, SimConfig(dt=1e-3, t_end=0.5), scenario="example1")


class TestCsvRoundTrip:
    def test_header_contract(self):
        assert trace_header(2) == "t,x_0,x_1,x_t,H,T,Htot,alpha,P_c,P_t,P_e,P_d"

    def test_bit_exact_round_trip(self, short_run, tmp_path):
        trace, _ = short_run
        path = tmp_path / "run.csv"
        write_trace_csv(trace, path)
        back = read_trace_csv(path)
        for field in ("t", "x", "x_t", "plant_energy", "tank_energy",
                      "total_energy", "alpha", "p_c", "p_t", "p_e", "p_d"):
            assert np.array_equal(getattr(trace, field), getattr(back, field),
                                  equal_nan=True), field

    def test_audit_identical_after_round_trip(self, short_run, tmp_path):
        trace, _ = short_run
        path = tmp_path / "run.csv"
        write_trace_csv(trace, path)
        back = read_trace_csv(path)
        back.meta.update({k: trace.meta[k] for k in
                          ("env_declared_passive", "env_initial_energy", "fd_gradient")})
        a = passivity_audit(trace, storage="total")
        b = passivity_audit(back, storage="total")
        for field in ("delta_storage", "supplied_energy", "dissipated_energy",
                      "worst_violation", "residual_max", "residual_mean",
                      "env_delivered_max", "tolerance"):
            assert abs(getattr(a, field) - getattr(b, field)) <= 1e-12, field
        assert a.passed == b.passed

    def test_non_finite_values_survive(self, tmp_path, example1_runs):
        trace, _ = example1_runs[EnergyLaw.EXPONENTIAL]
        path = tmp_path / "escape.csv"
        write_trace_csv(trace, path)
        back = read_trace_csv(path)
        assert np.array_equal(trace.p_c, back.p_c, equal_nan=True)


class TestMalformedFiles:
    def test_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,stuff\n1,2\n")
        with pytest.raises(TraceFormatError) as err:
            read_trace_csv(path)
        assert err.value.line == 1

    def test_short_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(trace_header(1) + "\n" + ",".join(["0"] * 11) + "\n0,1,2\n")
        with pytest.raises(TraceFormatError) as err:
            read_trace_csv(path)
        assert err.value.line == 3

    def test_non_numeric_field_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        good = ",".join(["0"] * 11)
        bad = ",".join(["0"] * 10 + ["spam"])
        path.write_text(trace_header(1) + "\n" + good + "\n" + bad + "\n")
        with pytest.raises(TraceFormatError) as err:
            read_trace_csv(path)
        assert err.value.line == 3

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text(trace_header(1) + "\n")
        with pytest.raises(TraceFormatError):
            read_trace_csv(path)


class TestManifest:
    def test_round_trip(self, short_run, tmp_path):
        trace, term = short_run
        manifest = RunManifest.from_run(trace, term, ["run.csv"], "0.1.0")
        path = manifest_path_for(tmp_path / "run.csv")
        write_manifest(manifest, path)
        back = read_manifest(path)
        assert back.scenario == "example1"
        assert back.termination["kind"] == term.kind
        assert back.termination["time"] == term.time
        assert back.config_hash == trace.meta["config_hash"]
        assert back.trace_meta["law"] == "exponential"

    def test_manifest_path_convention(self):
        assert str(manifest_path_for("a/b.csv")).endswith("b.csv.manifest.json")
