import csv
import json
from pathlib import Path

import pytest

from fdpo import cli

DEMO_INSTANCES = Path(__file__).resolve().parents[1] / "demos" / "instances"


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


class TestClassify:
    def test_all(self, capsys):
        code, out, _ = _run(capsys, "classify", "--all")
        rows = list(csv.DictReader(out.splitlines()))
        assert code == 0 and len(rows) == 9

    def test_single(self, capsys):
        code, out, _ = _run(capsys, "classify", "--gen", "squaredpo")
        (row,) = list(csv.DictReader(out.splitlines()))
        assert code == 0
        assert row["dpo_inducing"] == "true" and row["displacement_resistant"] == "true"

    def test_unknown_generator(self, capsys):
        code, _, err = _run(capsys, "classify", "--gen", "nosuch")
        assert code == 1 and "nosuch" in err

    def test_config_generators(self, capsys, tmp_path):
        cfg = _write_json(tmp_path / "c.json", {"generators": ["kl", "chi2"]})
        code, out, _ = _run(capsys, "--config", cfg, "classify")
        assert code == 0 and len(out.splitlines()) == 3

    def test_unknown_config_field(self, capsys, tmp_path):
        cfg = _write_json(tmp_path / "c.json", {"generators": ["kl"], "colour": "red"})
        code, _, err = _run(capsys, "classify", "--config", cfg)
        assert code == 1 and "colour" in err


class TestSolve:
    def test_partial_example_file(self, capsys):
        code, out, _ = _run(capsys, "solve", "--instance", str(DEMO_INSTANCES / "partial_kl.json"))
        doc = json.loads(out)
        assert code == 0
        assert doc["p"] == pytest.approx([0.18394, 0.81606], abs=1e-5)
        assert doc["kkt_ok"] and doc["bound_ok"] and doc["case"] == "FamilyOnArgmax"

    def test_full_matches_closed_form(self, capsys):
        code, out, _ = _run(capsys, "solve", "--instance", str(DEMO_INSTANCES / "full_kl.json"))
        doc = json.loads(out)
        assert code == 0 and doc["p"] == pytest.approx([0.7310585786300049, 0.2689414213699951], abs=1e-12)
        assert doc["implied_gaps"]["0>1"] == pytest.approx(1.0, abs=1e-9)

    def test_strict_subset_rejected(self, capsys):
        code, _, err = _run(capsys, "solve", "--instance", str(DEMO_INSTANCES / "strict_subset_error.json"))
        assert code == 1 and "strict subset" in err

    def test_numeric_partial_route(self, capsys, tmp_path):
        inst = _write_json(tmp_path / "i.json", {"r": [1.0, 0.0, 0.5], "q": [0.2, 0.5, 0.3], "beta": 0.5,
                                                 "s_set": [0, 1], "generator": "squaredpo"})
        code, out, _ = _run(capsys, "solve", "--instance", inst)
        doc = json.loads(out)
        assert code == 0 and doc["method"] == "numeric" and doc["kkt_ok"]
        assert doc["bound_ok"] is None and "in-sample reward" in doc["bound_note"]

    def test_missing_field(self, capsys, tmp_path):
        inst = _write_json(tmp_path / "i.json", {"r": [1.0, 0.0], "beta": 1.0})
        code, _, err = _run(capsys, "solve", "--instance", inst)
        assert code == 1 and "'q'" in err

    def test_bad_json(self, capsys, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        code, _, _ = _run(capsys, "solve", "--instance", str(p))
        assert code == 1


class TestTrain:
    def test_outputs(self, capsys, tmp_path):
        code, out, _ = _run(capsys, "--seed", "1", "--out-dir", str(tmp_path), "train", "--loss", "dpo")
        assert code == 0 and "monotone fractions" in out
        for name in ("checkpoints.json", "trajectories.csv", "report.json", "histogram.csv"):
            assert (tmp_path / name).exists()
        header = (tmp_path / "trajectories.csv").read_text().splitlines()[0]
        assert header == "triple_id,epoch,logratio"
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["epochs"] == 4 and set(report["monotone_fractions"]) == {"2", "3", "4"}

    def test_paired_runs(self, capsys, tmp_path):
        code, _, _ = _run(capsys, "train", "--loss", "dpo,squaredpo", "--out-dir", str(tmp_path), "--seed", "1")
        assert code == 0
        d = json.loads((tmp_path / "dpo" / "report.json").read_text())
        q = json.loads((tmp_path / "squaredpo" / "report.json").read_text())
        assert d["monotone_fractions"]["4"] > q["monotone_fractions"]["4"]
        assert "winner_effective_beta_mean_per_epoch" in q

    def test_single_epoch(self, capsys, tmp_path):
        code, out, _ = _run(capsys, "train", "--epochs", "1", "--out-dir", str(tmp_path))
        report = json.loads((tmp_path / "report.json").read_text())
        assert code == 0 and report["epochs"] == 1 and report["monotone_fractions"] == {}
        assert "absent" in out

    def test_config_sections(self, capsys, tmp_path):
        cfg = _write_json(tmp_path / "t.json", {"world": {"num_prompts": 10, "vocab_size": 4},
                                                "loss": {"id": "fdpo:jeffrey", "beta": 0.1},
                                                "optimizer": {"lr": 10, "epochs": 2}})
        code, _, _ = _run(capsys, "train", "--config", cfg, "--out-dir", str(tmp_path / "o"))
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert code == 0 and report["config"]["loss"] == "fdpo:jeffrey" and report["num_triples"] == 40

    @pytest.mark.parametrize("doc", [{"world": {"prompts": 3}}, {"schedule": {}}, {"optimizer": {"lr": "fast"}}])
    def test_rejects_bad_config(self, capsys, tmp_path, doc):
        cfg = _write_json(tmp_path / "t.json", doc)
        code, _, _ = _run(capsys, "train", "--config", cfg)
        assert code == 1

    def test_unknown_loss(self, capsys):
        code, _, err = _run(capsys, "train", "--loss", "ipo")
        assert code == 1 and "ipo" in err

    def test_divergence_exit_code(self, capsys, tmp_path):
        code, out, _ = _run(capsys, "train", "--lr", "inf", "--out-dir", str(tmp_path))
        assert code == 2 and "diverged" in out
        assert json.loads((tmp_path / "report.json").read_text())["diverged"]


class TestVerify:
    @pytest.mark.parametrize("suite", ["gradients", "taxonomy", "argmin"])
    def test_suites_pass(self, capsys, suite):
        code, out, _ = _run(capsys, "verify", "--suite", suite, "--count", "10")
        assert code == 0 and "FAIL" not in out

    def test_solver_suite(self, capsys):
        code, out, _ = _run(capsys, "verify", "--suite", "solver", "--n", "3", "--count", "5")
        assert code == 0 and "solver kl n=3" in out

    def test_unknown_suite(self, capsys):
        code, _, _ = _run(capsys, "verify", "--suite", "everything")
        assert code == 1

    def test_dimension_cap(self, capsys):
        code, _, _ = _run(capsys, "verify", "--suite", "solver", "--n", "7")
        assert code == 1


class TestGeneral:
    def test_missing_command(self, capsys):
        assert cli.main([]) == 1

    def test_help(self, capsys):
        assert cli.main(["--help"]) == 0

    def test_log_level_env(self, capsys, monkeypatch):
        monkeypatch.setenv("FDPO_LOG", "debug")
        code, _, _ = _run(capsys, "classify", "--gen", "kl")
        assert code == 0

    def test_deterministic_bytes(self, capsys, tmp_path):
        for sub in ("a", "b"):
            assert cli.main(["--seed", "3", "--out-dir", str(tmp_path / sub), "train", "--loss", "squaredpo"]) == 0
        for name in ("checkpoints.json", "trajectories.csv", "report.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
