import json

import numpy as np
import pytest

from lgcert.cli import (
    ScenarioError,
    SweepSpec,
    load_scenario,
    load_sweep,
    main,
    run_certification,
    run_sweep,
    scenario_from_dict,
    sweep_to_csv,
)


def lg3_scenario(**overrides):
    data = {
        "dimension": 2,
        "initial_state": "maximally_mixed",
        "hamiltonian": {"preset": "precession", "frequency": 1.0},
        "observable": "sigma_z",
        "schedule": [np.pi / 3, 2 * np.pi / 3, np.pi],
        "protocol": {"mode": "projective"},
        "checks": ["LG3"],
        "shots": 0,
        "seed": 0,
    }
    data.update(overrides)
    return data


def nsit_scenario(**overrides):
    data = {
        "dimension": 2,
        "initial_state": "ground",
        "hamiltonian": {"preset": "precession", "frequency": 1.0},
        "observable": "sigma_z",
        "schedule": [np.pi / 2, np.pi],
        "protocol": {"mode": "projective_dephased", "clumsiness": {"kind": "none"}},
        "checks": ["NSIT"],
        "shots": 0,
        "seed": 0,
    }
    data.update(overrides)
    return data


def write_json(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


class TestLoadScenario:
    def test_trace_invariant_named_in_error(self, tmp_path):
        bad = lg3_scenario(
            initial_state=[[[0.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.49, 0.0]]]
        )
        path = write_json(tmp_path, "bad.json", bad)
        with pytest.raises(ScenarioError, match="initial_state.*trace"):
            load_scenario(path)

    def test_schedule_ordering_named_in_error(self, tmp_path):
        path = write_json(tmp_path, "bad.json", lg3_scenario(schedule=[2.0, 1.0]))
        with pytest.raises(ScenarioError, match="schedule.*increasing"):
            load_scenario(path)

    def test_parse_error_reports_position(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"dimension": 2,\n  "schedule": [1.0,,]\n}', encoding="utf-8")
        with pytest.raises(ScenarioError, match="line 2"):
            load_scenario(str(path))

    def test_maximally_mixed_preset(self, tmp_path):
        s = load_scenario(write_json(tmp_path, "ok.json", lg3_scenario()))
        np.testing.assert_allclose(s.initial_state.matrix, np.eye(2) / 2.0, atol=1e-15)

    def test_unknown_check_rejected(self):
        with pytest.raises(ScenarioError, match="unknown identifiers"):
            scenario_from_dict(lg3_scenario(checks=["LG9"]))

    def test_unknown_preset_rejected(self):
        with pytest.raises(ScenarioError, match="preset"):
            scenario_from_dict(lg3_scenario(initial_state="excited"))


class TestRunCertification:
    def test_lg3_equal_gap_violation(self):
        report = run_certification(scenario_from_dict(lg3_scenario()))
        margins = {c["id"]: c["margin"] for c in report["conditions"]}
        assert margins["LG3-2"] == pytest.approx(-0.5, abs=1e-10)
        violated = [c["id"] for c in report["conditions"] if c["verdict"] == "violated"]
        assert violated == ["LG3-2"]
        assert report["verdict"] == "violations"
        assert report["mode"] == "exact"

    def test_lg3_empirical_within_three_stderr(self):
        report = run_certification(scenario_from_dict(lg3_scenario(shots=10**5, seed=42)))
        entry = next(c for c in report["conditions"] if c["id"] == "LG3-2")
        assert entry["verdict"] == "violated"
        assert abs(entry["margin"] + 0.5) <= 3 * entry["stderr"]
        assert report["mode"] == "empirical"

    def test_nsit_dephased_noninvasive(self):
        report = run_certification(scenario_from_dict(nsit_scenario()))
        wit = report["witnesses"][0]
        assert wit["id"] == "NSIT-(2;12)"
        assert wit["max_abs"] <= 1e-12
        assert wit["verdict"] == "non-invasive"
        assert report["verdict"] == "all_satisfied"

    def test_nsit_projective_invasive(self):
        report = run_certification(
            scenario_from_dict(nsit_scenario(protocol={"mode": "projective"}))
        )
        wit = report["witnesses"][0]
        assert wit["defects"]["+1"] == pytest.approx(-0.5, abs=1e-10)
        assert wit["verdict"] == "invasive"

    def test_experiment_isolation_one_table_per_moment(self):
        scenario = scenario_from_dict(lg3_scenario(checks=["LG2", "LG3"]))
        report = run_certification(scenario)
        assert set(report["experiments"]) == {"1", "2", "3", "12", "23", "13"}
        assert set(report["moments"]) == {"1", "2", "3", "12", "23", "13"}

    def test_derive_lower_moments_shares_one_experiment(self):
        report = run_certification(
            scenario_from_dict(lg3_scenario(checks=["LG2", "LG3"], derive_lower_moments=True))
        )
        assert set(report["experiments"]) == {"123"}

    def test_report_completeness_and_reproducibility(self):
        scenario = scenario_from_dict(
            lg3_scenario(checks=["LG2", "LG3", "NONNEG3", "NSIT", "MONO", "APPENDIX"], shots=2000, seed=7)
        )
        a = json.dumps(run_certification(scenario), sort_keys=True)
        b = json.dumps(run_certification(scenario), sort_keys=True)
        assert a == b
        report = json.loads(a)
        ids = [c["id"] for c in report["conditions"]]
        assert len(ids) == len(set(ids))
        assert sum(1 for i in ids if i.startswith("LG2-")) == 12
        assert sum(1 for i in ids if i.startswith("LG3-")) == 4
        assert sum(1 for i in ids if i.startswith("NONNEG-")) == 8
        assert sum(1 for i in ids if i.startswith("MONO-")) == 4
        assert [w["id"] for w in report["witnesses"]] == ["NSIT-(2;12)"]

    def test_inrm_mode_matches_projective_exact(self):
        plain = run_certification(scenario_from_dict(lg3_scenario()))
        inrm = run_certification(scenario_from_dict(lg3_scenario(protocol={"mode": "inrm"})))
        for a, b in zip(plain["conditions"], inrm["conditions"]):
            assert a["id"] == b["id"]
            assert a["margin"] == pytest.approx(b["margin"], abs=1e-12)

    def test_lg4_needs_four_times(self):
        with pytest.raises(ScenarioError, match="LG4 needs at least 4"):
            run_certification(scenario_from_dict(lg3_scenario(checks=["LG4"])))

    def test_nsit3_dephased_all_zero(self):
        scenario = scenario_from_dict(
            nsit_scenario(schedule=[0.7, 1.4, 2.3], checks=["NSIT3"])
        )
        report = run_certification(scenario)
        assert {w["id"] for w in report["witnesses"]} == {
            "NSIT-(3;23)", "NSIT-(13;123)", "NSIT-(23;123)",
        }
        assert all(w["max_abs"] <= 1e-12 for w in report["witnesses"])
        assert report["verdict"] == "all_satisfied"

    def test_nsit3_under_inrm_dephased_all_zero(self):
        # the blind at a non-detector time runs through the entrywise-equal
        # projective counterpart, so the complete set still closes exactly
        scenario = scenario_from_dict(
            nsit_scenario(
                schedule=[0.7, 1.4, 2.3],
                checks=["NSIT3"],
                protocol={"mode": "inrm_dephased"},
            )
        )
        report = run_certification(scenario)
        assert all(w["max_abs"] <= 1e-12 for w in report["witnesses"])

    def test_clumsy_scenario_keeps_clean_references_separate(self):
        # LG3 moment experiments carry the clumsiness channel; the NSIT3
        # reference runs are clean and must not share cached tables with them
        scenario = scenario_from_dict(
            lg3_scenario(
                checks=["LG3", "NSIT3"],
                protocol={
                    "mode": "projective",
                    "clumsiness": {"kind": "depolarizing", "strength": 0.2},
                },
                initial_state="ground",
            )
        )
        report = run_certification(scenario)
        exps = report["experiments"]
        assert "23" in exps and "23_clean" in exps and "13" in exps and "13_clean" in exps
        assert exps["23"]["probabilities"] != exps["23_clean"]["probabilities"]


class TestSweep:
    def test_gap_sweep_with_error_rows(self):
        spec = SweepSpec(
            template=lg3_scenario(),
            parameter="schedule.gap",
            values=(0.0, np.pi / 6, np.pi / 3, np.pi / 2),
        )
        rows = run_sweep(spec)
        assert [r["value"] for r in rows] == [0.0, np.pi / 6, np.pi / 3, np.pi / 2]
        # tau = 0 collapses the schedule, which the schedule invariant rejects
        assert rows[0]["error"] != "" and "schedule" in rows[0]["error"]
        at_third = rows[2]["margins"]
        assert at_third["LG3-2"] == pytest.approx(-0.5, abs=1e-10)
        csv_text = sweep_to_csv(rows)
        lines = csv_text.strip().split("\n")
        assert lines[0].startswith('value,"LG3-1","LG3-2","LG3-3","LG3-4"')
        assert len(lines) == 5

    def test_clumsiness_sweep_witness_column(self):
        template = nsit_scenario(schedule=[np.pi / 3, 2 * np.pi / 3])
        template["protocol"] = {
            "mode": "projective_dephased",
            "clumsiness": {"kind": "depolarizing", "strength": 0.0},
        }
        spec = SweepSpec(
            template=template,
            parameter="protocol.clumsiness.strength",
            values=(0.0, 0.05, 0.1),
        )
        rows = run_sweep(spec)
        witness = [row["margins"]["NSIT-(2;12)"] for row in rows]
        assert witness[0] <= 1e-12
        assert witness[1] > 1e-6 and witness[2] > witness[1]
        assert witness[1] == pytest.approx(0.05 / 8.0, abs=1e-10)

    def test_empty_values_rejected(self, tmp_path):
        path = write_json(
            tmp_path, "sweep.json", {"scenario": lg3_scenario(), "parameter": "seed", "values": []}
        )
        with pytest.raises(ScenarioError, match="values"):
            load_sweep(path)


class TestMainEntryPoint:
    def test_certify_exit_codes_and_output(self, tmp_path, capsys):
        scenario_path = write_json(tmp_path, "lg3.json", lg3_scenario())
        out_path = tmp_path / "report.json"
        code = main(["certify", scenario_path, "--out", str(out_path)])
        assert code == 1  # violations: the interesting physics case
        report = json.loads(out_path.read_text(encoding="utf-8"))
        assert report["verdict"] == "violations"

        ok_path = write_json(tmp_path, "nsit.json", nsit_scenario())
        assert main(["certify", ok_path, "--out", str(tmp_path / "ok.json")]) == 0

    def test_certify_csv_format(self, tmp_path):
        scenario_path = write_json(tmp_path, "lg3.json", lg3_scenario())
        out_path = tmp_path / "report.csv"
        main(["certify", scenario_path, "--format", "csv", "--out", str(out_path)])
        text = out_path.read_text(encoding="utf-8")
        assert text.startswith("id,kind,margin,stderr,verdict\n")
        assert '"LG3-2",condition' in text

    def test_certify_byte_identical_reports(self, tmp_path):
        scenario_path = write_json(tmp_path, "lg3.json", lg3_scenario(shots=5000, seed=9))
        out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
        main(["certify", scenario_path, "--out", str(out_a)])
        main(["certify", scenario_path, "--out", str(out_b)])
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_shots_and_seed_overrides(self, tmp_path):
        scenario_path = write_json(tmp_path, "lg3.json", lg3_scenario())
        out_path = tmp_path / "emp.json"
        main(["certify", scenario_path, "--shots", "1000", "--seed", "5", "--out", str(out_path)])
        report = json.loads(out_path.read_text(encoding="utf-8"))
        assert report["mode"] == "empirical" and report["shots"] == 1000 and report["seed"] == 5

    def test_oracle_dumps_tables_only(self, tmp_path, capsys):
        scenario_path = write_json(tmp_path, "lg3.json", lg3_scenario())
        assert main(["oracle", scenario_path]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload) == {"seed", "mode", "shots", "experiments"}
        assert "12" in payload["experiments"]

    def test_sweep_csv_emission(self, tmp_path):
        sweep_path = write_json(
            tmp_path,
            "sweep.json",
            {
                "scenario": lg3_scenario(),
                "parameter": "schedule.gap",
                "values": [np.pi / 6, np.pi / 3],
            },
        )
        out_path = tmp_path / "sweep.csv"
        code = main(["sweep", sweep_path, "--out", str(out_path)])
        assert code == 1  # the pi/3 row violates
        text = out_path.read_text(encoding="utf-8")
        assert "\r" not in text
        assert len(text.strip().split("\n")) == 3

    def test_invalid_input_exits_two(self, tmp_path, capsys):
        path = write_json(tmp_path, "bad.json", lg3_scenario(schedule=[2.0, 1.0, 3.0]))
        assert main(["certify", path]) == 2
        assert "schedule" in capsys.readouterr().err

    def test_missing_file_exits_two(self, capsys):
        assert main(["certify", "/nonexistent/scenario.json"]) == 2
