"""Command-line interface: subcommand contracts, JSON output discipline, and
error behavior."""

import json
import re
import subprocess
import sys

import pytest

from survwright.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    payload = json.loads(captured.out) if captured.out.strip() else None
    err = captured.err
    return code, payload, err


@pytest.fixture(scope="module")
def store(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_store")
    code = main(["synth", "--out", str(out), "--n", "2500",
                 "--template", "paper-like", "--seed", "42"])
    assert code == 0
    return out


class TestSynth:
    def test_paper_like_store_files(self, store):
        assert (store / "cohort.csv").exists()
        assert (store / "schema.json").exists()
        assert (store / "ground_truth.json").exists()

    def test_linear_template(self, capsys, tmp_path):
        code, payload, _ = run_cli(
            capsys, "synth", "--out", str(tmp_path / "lin"), "--n", "500",
            "--template", "linear", "--beta", "[0.5, -0.5, 0.0]", "--seed", "1")
        assert code == 0
        assert payload["n"] == 500
        assert (tmp_path / "lin" / "ground_truth.json").exists()

    def test_deterministic_outputs(self, capsys, tmp_path):
        for name in ("a", "b"):
            run_cli(capsys, "synth", "--out", str(tmp_path / name), "--n", "300",
                    "--seed", "9")
        assert (tmp_path / "a" / "cohort.csv").read_text() == \
            (tmp_path / "b" / "cohort.csv").read_text()


class TestIngest:
    def test_quality_report_written(self, capsys, store, tmp_path):
        out = tmp_path / "validated"
        code, payload, _ = run_cli(
            capsys, "ingest", "--csv", str(store / "cohort.csv"),
            "--schema", str(store / "schema.json"), "--out", str(out),
            "--seed", "0")
        assert code == 0
        report = json.loads((out / "quality_report.json").read_text())
        assert report["n_rows"] == 2500
        assert "rare_condition" in report["dropped_rare_columns"]
        assert payload["n_train"] + payload["n_test"] == 2500

    def test_bad_csv_errors_on_stderr(self, capsys, store, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("just,one,header\n")
        code, payload, err = run_cli(
            capsys, "ingest", "--csv", str(bad),
            "--schema", str(store / "schema.json"), "--out", str(tmp_path / "x"),
            "--seed", "0")
        assert code == 1
        assert payload is None
        assert "error" in json.loads(err)


class TestTrainEval:
    def test_cox_train_eval_roundtrip(self, capsys, store, tmp_path):
        bundle = tmp_path / "cox.json"
        code, payload, _ = run_cli(
            capsys, "train", "--store", str(store), "--model", "cox",
            "--out", str(bundle), "--seed", "4",
            "--summary-csv", str(tmp_path / "coef.csv"))
        assert code == 0
        assert payload["id"] == "cox-full-all"
        header = (tmp_path / "coef.csv").read_text().splitlines()[0]
        assert header == "covariate,log_hr,ci_low,ci_high,neg_log2_p"

        code, payload, _ = run_cli(
            capsys, "eval", "--store", str(store), "--bundle", str(bundle),
            "--seed", "4", "--calibration-csv", str(tmp_path / "cal.csv"))
        assert code == 0
        assert re.fullmatch(r"0\.\d{4} \[0\.\d{4} – 0\.\d{4}\]",
                            payload["c_index_formatted"])
        cal_header = (tmp_path / "cal.csv").read_text().splitlines()[0]
        assert cal_header == "bin,mean_predicted,observed,count,n_events"

    def test_digital_variant_columns(self, capsys, store, tmp_path):
        bundle = tmp_path / "digital.json"
        code, payload, _ = run_cli(
            capsys, "train", "--store", str(store), "--model", "cox",
            "--variant", "digital", "--out", str(bundle), "--seed", "4")
        assert code == 0
        cols = payload["columns"]
        assert all("cholesterol" not in c for c in cols)
        assert "sbp" not in cols
        assert "heart_rate" in cols

    def test_sex_scope(self, capsys, store, tmp_path):
        bundle = tmp_path / "male.json"
        code, payload, _ = run_cli(
            capsys, "train", "--store", str(store), "--sex", "male",
            "--out", str(bundle), "--seed", "4")
        assert code == 0
        assert "sex_female" not in payload["columns"]

    def test_deepsurv_default_config_is_paper_best(self, capsys, store, tmp_path):
        bundle = tmp_path / "ds.json"
        code, payload, _ = run_cli(
            capsys, "train", "--store", str(store), "--model", "deepsurv",
            "--max-epochs", "20", "--out", str(bundle), "--seed", "4")
        assert code == 0
        doc = json.loads(bundle.read_text())
        cfg = doc["model"]["config"]
        assert cfg["topology"] == "32x32"
        assert cfg["activation"] == "relu"
        assert cfg["batch_norm"] is True
        assert cfg["dropout"] == pytest.approx(0.3338)
        assert cfg["weight_decay"] == pytest.approx(0.0596)
        assert cfg["learning_rate"] == pytest.approx(0.000309)
        assert cfg["optimizer"] == "adam"


class TestSelect:
    def test_trace_and_flags(self, capsys, store, tmp_path):
        trace = tmp_path / "trace.json"
        exclude = tmp_path / "exclude.txt"
        exclude.write_text("takes_supplements\n")
        code, payload, _ = run_cli(
            capsys, "select", "--store", str(store), "--alpha", "0.01",
            "--cindex-tol", "0.001", "--exclude-file", str(exclude),
            "--out", str(trace), "--seed", "4")
        assert code == 0
        assert "->" in payload["pipeline"]
        doc = json.loads(trace.read_text())
        assert doc["final_features"] == payload["final_features"]
        assert "takes_supplements" not in payload["final_features"]


class TestFramingham:
    def test_score_action(self, capsys, store):
        code, payload, _ = run_cli(
            capsys, "framingham", "score", "--store", str(store), "--seed", "4")
        assert code == 0
        assert payload["n_scored"] > 0
        assert 0 < payload["mean_risk"] < 1
        assert "Circulation" in payload["provenance"]

    def test_compare_action(self, capsys, store):
        code, payload, _ = run_cli(
            capsys, "framingham", "compare", "--store", str(store), "--seed", "4")
        assert code == 0
        scores = {row["score"] for row in payload["comparison"]}
        assert "framingham_formula" in scores
        assert "framingham_refit_cox" in scores
        for row in payload["comparison"]:
            assert set(row) == {"score", "men", "women", "all"}


class TestSearch:
    def test_budget_and_trials_log(self, capsys, store, tmp_path):
        trials = tmp_path / "trials.jsonl"
        best = tmp_path / "best.json"
        code, payload, _ = run_cli(
            capsys, "search", "--store", str(store), "--budget", "2",
            "--max-epochs", "8", "--trials", str(trials), "--out", str(best),
            "--seed", "4")
        assert code == 0
        lines = trials.read_text().strip().splitlines()
        assert len(lines) == 2
        assert json.loads(best.read_text())["learning_rate"] > 0


class TestEntryPoint:
    def test_installed_console_script(self, tmp_path):
        out = subprocess.run(
            [sys.executable, "-m", "survwright.cli", "synth",
             "--out", str(tmp_path / "s"), "--n", "50", "--seed", "1"],
            capture_output=True, text=True)
        assert out.returncode == 0
        assert json.loads(out.stdout)["n"] == 50
