import csv
import json

import numpy as np
import pytest

import csk_simulator
from experiments import (
    bcsk,
    export_result,
    load_scenario,
    run_bcsk,
    run_ber,
    run_demodulation,
    run_impulse,
    run_manifest,
    run_modulation,
    run_simulation,
    run_validate,
)
from experiments.bcsk import BIT_SEPARATION, compare_stochastic
from experiments.common import RunResult
from experiments.ber import BER_HEADER, ber_experiment, count_errors, random_bits
from experiments.export import TRACE_HEADER, write_json
from model.errors import ConfigError
from utils import utils

QUICK_BCSK = {"ts": "1 s", "horizon": "1 h", "start": "5 min"}


def write_config(tmp_path, text, name="scenario.json"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestScenario:
    def test_preset_resolves_units(self):
        scenario = load_scenario("fig10")
        assert scenario.kind == "bcsk"
        assert scenario.ts == pytest.approx(0.1)
        assert scenario.horizon == pytest.approx(3 * 3600.0)
        assert scenario.start == pytest.approx(3600.0)
        assert scenario.thresholds == {0: pytest.approx(0.01)}
        assert scenario.species["Repressor-TetR"].theta == pytest.approx(1.55)
        assert scenario.species["aCa"].k_d == pytest.approx(0.05 / 60)

    def test_flags_override_the_preset(self):
        scenario = load_scenario("fig10", overrides={"ts": "1 s", "seed": 5, "m": None})
        assert scenario.ts == 1.0
        assert scenario.seed == 5

    def test_config_merges_over_preset(self, tmp_path):
        path = write_config(tmp_path, '{\n  "geometry": {"table": "standard", "u": "0 um/s"},\n  "horizon": "2 h"\n}\n')
        scenario = load_scenario("fig10", path)
        assert scenario.geometry.u == 0.0
        assert scenario.geometry.L[-1] == 55.0
        assert scenario.horizon == 7200.0

    def test_unit_error_points_at_the_line(self, tmp_path):
        path = write_config(tmp_path, '{\n  "kind": "bcsk",\n  "ts": "0.01 parsecs",\n  "horizon": "1 h"\n}\n')
        with pytest.raises(ConfigError) as excinfo:
            load_scenario(config=path)
        assert excinfo.value.line == 3
        assert str(excinfo.value).startswith(f"{path}:3:")

    def test_unitless_number_is_rejected(self, tmp_path):
        path = write_config(tmp_path, '{\n  "kind": "bcsk",\n  "horizon": 3600\n}\n')
        with pytest.raises(ConfigError, match="no unit"):
            load_scenario(config=path)

    def test_invalid_json(self, tmp_path):
        path = write_config(tmp_path, '{\n  "kind": "bcsk",\n  "horizon": "1 h",\n}\n')
        with pytest.raises(ConfigError) as excinfo:
            load_scenario(config=path)
        assert excinfo.value.line is not None

    @pytest.mark.parametrize(
        "override, message",
        [
            ({"kind": "fm"}, "kind must be"),
            ({"engine": "quantum"}, "engine must be"),
            ({"thresholds": {"B0": "-1 nM"}}, ">= 0"),
            ({"wiring": ["aCa", "DOX", "GFP"]}, "not defined"),
            ({"realizations": 0}, ">= 1"),
        ],
    )
    def test_invalid_values(self, override, message):
        with pytest.raises(ConfigError, match=message):
            load_scenario("fig10", overrides=override)

    def test_ber_needs_enough_bits(self):
        with pytest.raises(ConfigError, match="at least 16 bits"):
            load_scenario("fig13", overrides={"bits": 8})

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="unknown preset"):
            load_scenario("fig99")

    def test_unreadable_data_file_is_reported(self, tmp_path, capsys):
        (tmp_path / "broken.json").write_text("{\"aCa\": ", encoding="utf-8")
        assert utils.load_file_info(tmp_path, "broken") == {}
        assert utils.load_file_info(tmp_path, "absent") == {}
        out = capsys.readouterr().out
        assert out.count("[WARNING]") == 2
        assert "JSONDecodeError" in out and "FileNotFoundError" in out
        assert str(tmp_path / "absent.json") in out

    def test_manifest_reruns_the_same_scenario(self, tmp_path):
        scenario = load_scenario("fig11", overrides={"seed": 9})
        path = tmp_path / "manifest.json"
        write_json(path, run_manifest(scenario, {"command": "analytic"}))
        again = load_scenario(config=path)
        assert again.ts == scenario.ts
        assert again.horizon == scenario.horizon
        assert again.thresholds == scenario.thresholds
        assert again.seed == 9
        assert again.layout().to_dict() == scenario.layout().to_dict()

    def test_manifest_carries_the_channel_values(self, tmp_path, monkeypatch):
        overrides = {"geometry": {"table": "standard", "u": "0.25 um/s"}}
        scenario = load_scenario("fig12", overrides=overrides)
        path = tmp_path / "manifest.json"
        write_json(path, run_manifest(scenario))
        written = json.loads(path.read_text(encoding="utf-8"))["scenario"]
        assert written["species"]["aCa"]["k_d"].endswith(" /s")
        assert written["geometry"]["u"] == "0.25 um/s"
        # no table lookups: the rerun must not depend on species/ or geometry/
        monkeypatch.setattr(utils, "load_file_info", lambda folder, filename: {})
        again = load_scenario(config=path)
        assert again.species == scenario.species
        assert again.geometry == scenario.geometry


class TestRunners:
    def test_bcsk_run_passes_its_checks(self, log):
        scenario = load_scenario("fig10", overrides=QUICK_BCSK)
        result = run_bcsk(scenario, log)
        assert result.passed, [c for c in result.checks if not c.passed]
        assert set(result.traces) == {"source", "tx_bit1", "rx_bit1", "tx_bit0", "rx_bit0"}
        assert result.summary["tx_total_molecules"] > 0

    def test_bcsk_bit1_dominates_bit0_at_the_receiver(self, log):
        result = run_bcsk(load_scenario("fig10", overrides=QUICK_BCSK), log)
        rx1, rx0 = result.summary["rx_total_molecules"], result.summary["rx_bit0_total_molecules"]
        assert rx1 > BIT_SEPARATION * rx0
        separation = next(c for c in result.checks if c.name == "bit 1 separates from bit 0 at the receiver")
        assert separation.required and separation.passed
        assert not result.failed_required

    def test_modulation_levels(self, log):
        result = run_modulation(load_scenario("fig11"), log)
        checks = {c.name: c.passed for c in result.checks}
        assert checks["symbol 0 releases nothing"]
        assert checks["levels increase with the symbol"]
        assert 1.8 <= result.summary["ratio_10_01"] <= 2.2

    def test_demodulation_reports_every_sink(self, log):
        scenario = load_scenario("fig12", overrides={"horizon": "6.5 h"})
        result = run_demodulation(scenario, log)
        assert len(result.traces) == 8
        for label in ("00", "01", "10", "11"):
            assert set(result.summary[label]["counts"]) == {"Y0", "Y1"}

    def test_demodulation_decodes_every_symbol(self, log):
        scenario = load_scenario("fig12", overrides={"horizon": "6.5 h"})
        result = run_demodulation(scenario, log)
        n_d = scenario.n_d[0]
        for label in ("00", "01", "10", "11"):
            counts = result.summary[label]["counts"]
            assert result.summary[label]["decided"] == label, counts
            assert (counts["Y1"] > n_d) == (label[0] == "1")
            assert (counts["Y0"] > n_d) == (label[1] == "1")
        assert not result.failed_required
        assert result.summary["bit1_spread"] <= 1.5

    def test_wrong_decision_fails_the_run(self, log):
        scenario = load_scenario("fig12", overrides={"horizon": "6.5 h", "n_d": [1e6]})
        result = run_demodulation(scenario, log)
        assert [c.name for c in result.failed_required] == ["decisions reproduce the transmitted bits"]
        assert any(severity == "ERROR" for severity, _, _ in log.messages)

    def test_export_writes_the_documented_columns(self, tmp_path, log):
        scenario = load_scenario("fig10", overrides=QUICK_BCSK)
        result = run_bcsk(scenario, log)
        written = export_result(result, tmp_path, run_manifest(scenario))
        assert (tmp_path / "manifest.json") in written
        with open(tmp_path / "fig10_rx_bit1.csv", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert rows[0] == TRACE_HEADER
        assert len(rows) == 3601
        summary = json.loads((tmp_path / "fig10_summary.json").read_text(encoding="utf-8"))
        assert all(c["passed"] for c in summary["checks"])

    def test_impulse_analytic(self, log):
        result = run_impulse(load_scenario("fig9", overrides={"engine": "analytic"}), log)
        assert set(result.traces) == {"analytic_S1", "analytic_S2"}
        assert result.passed
        assert result.summary["S1"]["total"] > result.summary["S2"]["total"]

    def test_impulse_particles_stay_within_the_release(self, log):
        overrides = {"horizon": "2 s", "realizations": 2, "impulse": {"particles": 50}}
        result = run_impulse(load_scenario("fig9", overrides=overrides), log, max_workers=1)
        assert {"stochastic_S1", "stochastic_S2"} <= set(result.traces)
        assert all(0 <= total <= 50 for total in result.summary["stochastic_totals"])
        assert "calibration" in result.summary

    def test_particle_simulation(self, log):
        overrides = {"ts": "1 s", "horizon": "30 s", "start": "0 s", "realizations": 2, "substeps": 1}
        result = run_simulation(load_scenario("fig10", overrides=overrides), log, max_workers=1)
        assert {"Y0", "tx0"} <= set(result.traces)
        assert {c.name: c.passed for c in result.checks}["particle census"]
        assert result.summary["realizations"] == 2

    def test_particle_engine_needs_a_circuit(self, log):
        with pytest.raises(ConfigError, match="circuit scenarios"):
            run_simulation(load_scenario("fig9"), log)

    def test_quantized_release_is_compared_over_bins(self, log):
        analytic = np.full(140, 0.35)
        mean = np.zeros(140)
        mean[::14] = 4.9
        stderr = np.zeros(140)
        per_sample = compare_stochastic(RunResult("q"), "Tx", analytic, mean, stderr, log, every=1)
        binned = compare_stochastic(RunResult("q"), "Tx", analytic, mean, stderr, log, carry=5)
        assert not per_sample
        assert binned

    def test_binned_comparison_still_catches_a_bias(self, log):
        analytic = np.full(140, 0.35)
        assert not compare_stochastic(RunResult("q"), "Tx", analytic, 3 * analytic, np.zeros(140), log, carry=5)

    @pytest.mark.slow
    def test_particle_engine_agrees_with_the_analytic_link(self, log):
        overrides = {"ts": "1 s", "horizon": "40 min", "start": "5 min", "realizations": 40}
        result = run_validate(load_scenario("fig10", overrides=overrides), log, max_workers=1)
        checks = {c.name: c for c in result.checks}
        assert checks["Tx within 3 standard errors"].passed, checks["Tx within 3 standard errors"].detail
        assert checks["Rx within 3 standard errors"].passed, checks["Rx within 3 standard errors"].detail
        assert checks["particle census"].passed

    def test_validate_rejects_qcsk(self, log):
        with pytest.raises(ConfigError, match="validation compares"):
            run_validate(load_scenario("fig11"), log)


class TestBer:
    def test_count_errors(self):
        counts = np.array([[0.0, 5.0, 5.0], [5.0, 0.0, 5.0]])
        assert count_errors(counts, [2, 1, 3], 1.0) == 0
        assert count_errors(counts, [0, 0, 0], 1.0) == 4

    def test_random_bits_are_seeded(self):
        assert random_bits(32, 4) == random_bits(32, 4)
        assert set(random_bits(64, 4)) <= {0, 1}

    def test_extreme_thresholds(self, log):
        scenario = load_scenario(
            "fig13", overrides={"bits": 16, "intervals": ["5 h"], "horizon": "41 h", "n_d": [0, 2]}
        )
        rows, sequence = ber_experiment(scenario, log)
        assert len(rows) == 3
        zeros, ones = sequence.count(0), sequence.count(1)
        assert rows[0].n_d == 0.0 and rows[0].errors == zeros
        assert rows[-1].errors == ones
        assert all(r.bits == 16 for r in rows)
        assert BER_HEADER == ["N_d", "T_b_s", "errors", "bits", "ber"]

    def test_error_free_band_must_be_ordered(self):
        with pytest.raises(ConfigError, match="error_free_n_d"):
            load_scenario("fig13", overrides={"error_free_n_d": [5, 1]})

    @pytest.mark.slow
    def test_long_interval_decodes_without_error(self, log):
        scenario = load_scenario("fig13", overrides={"bits": 32, "horizon": "170 h"})
        result = run_ber(scenario, log)
        header, rows = result.tables["ber"]
        ber = {(r[0], r[1]): r[4] for r in rows}
        errors = {(r[0], r[1]): r[2] for r in rows}
        for n_d in (1.0, 2.0, 3.0, 4.0, 5.0):
            assert errors[(n_d, 36000.0)] == 0
        for n_d in scenario.n_d:
            assert ber[(n_d, 36000.0)] <= ber[(n_d, 18000.0)]
        assert result.passed, [c for c in result.checks if not c.passed]
        assert not result.failed_required

    def test_horizon_too_short(self, log):
        scenario = load_scenario("fig13", overrides={"bits": 16, "intervals": ["5 h"], "horizon": "30 h"})
        with pytest.raises(ConfigError, match="too short"):
            ber_experiment(scenario, log)


class TestCli:
    def test_synth_writes_layout(self, tmp_path):
        code = csk_simulator.main(["synth", "--m", "2", "--out", str(tmp_path), "--no-file"])
        assert code == 0
        data = json.loads((tmp_path / "layout_m2.json").read_text(encoding="utf-8"))
        assert data["m"] == 2
        assert {p["kind"] for p in data["populations"]} == {"Source", "ID", "NOT", "Threshold", "Sink"}
        assert (tmp_path / "layout_m2.dot").is_file()

    def test_config_error_exit_code(self, tmp_path):
        path = write_config(tmp_path, '{\n  "kind": "bcsk",\n  "ts": 0.01,\n  "horizon": "1 h"\n}\n')
        code = csk_simulator.main(["analytic", "--config", str(path), "--out", str(tmp_path / "out"), "--no-file"])
        assert code == 2

    def test_analytic_run_is_repeatable(self, tmp_path):
        args = ["analytic", "--preset", "fig10", "--ts", "1 s", "--no-file"]
        assert csk_simulator.main(args + ["--out", str(tmp_path / "a")]) == 0
        assert csk_simulator.main(args + ["--out", str(tmp_path / "b")]) == 0
        first = (tmp_path / "a" / "fig10_rx_bit1.csv").read_bytes()
        assert first == (tmp_path / "b" / "fig10_rx_bit1.csv").read_bytes()
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["command"] == "analytic"
        assert manifest["kernels"] and len(set(manifest["kernels"])) == len(manifest["kernels"])

    def test_kernels_are_cached_under_the_output(self, tmp_path):
        args = ["analytic", "--preset", "fig10", "--ts", "1 s", "--no-file", "--out", str(tmp_path)]
        assert csk_simulator.main(args) == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
        stored = sorted(p.name for p in (tmp_path / "kernels").glob("kernel_*.npz"))
        assert stored == sorted(f"kernel_{key}.npz" for key in manifest["kernels"])

    def test_failed_required_check_sets_the_exit_code(self, tmp_path, monkeypatch):
        monkeypatch.setattr(bcsk, "BIT_SEPARATION", 1e12)
        args = ["analytic", "--preset", "fig10", "--ts", "1 s", "--no-file", "--out", str(tmp_path)]
        assert csk_simulator.main(args) == csk_simulator.EXIT_VALIDATION
        summary = json.loads((tmp_path / "fig10_summary.json").read_text(encoding="utf-8"))
        failed = [c for c in summary["checks"] if not c["passed"]]
        assert failed and all(c["required"] for c in failed)

    def test_result_log_is_written(self, tmp_path):
        code = csk_simulator.main(["synth", "--m", "1", "--out", str(tmp_path)])
        assert code == 0
        assert "m=1" in (tmp_path / "csk_simulator_result.txt").read_text(encoding="utf-8")
