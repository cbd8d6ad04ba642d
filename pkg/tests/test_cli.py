"""End-to-end subcommand behavior: chains, flag resolution, error paths."""

import dataclasses
import json

import numpy as np
import pytest

from delaycast.cli import main
from delaycast.features import build_table, fit_codebook, save_table
from delaycast.modelfile import load_model
from delaycast.schema import read_csv, write_csv
from delaycast.synth import SynthConfig, generate, read_labels

STAGE_OF_LABEL = {"cancelled": "cancelled_or_diverted",
                  "missing": "missing_components",
                  "mismatch": "sum_mismatch",
                  "outlier": "outlier"}


def run(argv):
    return main([str(a) for a in argv])


class TestChain:
    def test_prune_counts_match_generator_labels(self, tmp_path):
        flights = tmp_path / "flights.csv"
        pruned = tmp_path / "pruned.csv"
        assert run(["synth", "--count", 500, "--seed", 7,
                    "--cancelled-rate", 0.03, "--missing-rate", 0.3,
                    "--mismatch-rate", 0.01, "--outlier-rate", 0.012,
                    "--out", flights]) == 0
        assert run(["preprocess", "--in", flights, "--out", pruned]) == 0

        labels = read_labels(f"{flights}.labels.csv")
        report = json.loads((tmp_path / "pruned.csv.report.json").read_text())
        for label, stage in STAGE_OF_LABEL.items():
            assert report["removed"][stage] == labels.count(label)
        assert report["retained_count"] == labels.count("clean")

    def test_full_chain_to_report(self, tmp_path, capsys):
        flights, pruned = tmp_path / "f.csv", tmp_path / "p.csv"
        model, rep = tmp_path / "m.bin", tmp_path / "r.json"
        final = tmp_path / "final.json"
        assert run(["synth", "--count", 260, "--seed", 3, "--out", flights]) == 0
        assert run(["preprocess", "--in", flights, "--out", pruned]) == 0
        assert run(["analyze", "--in", pruned]) == 0
        assert run(["train", "--in", pruned, "--model", "tree",
                    "--out", model]) == 0
        assert run(["evaluate", "--model-file", model, "--in", pruned,
                    "--report-out", rep]) == 0
        assert run(["report", "--summaries", rep, "--format", "json",
                    "--out", final]) == 0
        text = capsys.readouterr().out
        assert "Pearson" in text
        assert "redundant" in text
        bundle = json.loads(final.read_text())
        assert bundle["models"][0]["name"] == "tree"
        assert "Carrier" in str(bundle["components"])

    def test_rerun_is_byte_identical(self, tmp_path):
        outs = []
        for tag in ("a", "b"):
            flights = tmp_path / f"{tag}.csv"
            pruned = tmp_path / f"{tag}p.csv"
            model = tmp_path / f"{tag}.bin"
            assert run(["synth", "--count", 220, "--seed", 9,
                        "--out", flights]) == 0
            assert run(["preprocess", "--in", flights, "--out", pruned]) == 0
            assert run(["train", "--in", pruned, "--model", "mlp",
                        "--epochs", 2, "--seed", 9, "--out", model]) == 0
            outs.append((flights.read_bytes(), pruned.read_bytes(),
                         model.read_bytes()))
        assert outs[0] == outs[1]


class TestTrainCommand:
    def test_ols_recovers_planted_coefficients(self, tmp_path):
        base = generate(SynthConfig(count=60, seed=3)).records
        doctored = [dataclasses.replace(r, arr_delay=1.0 + 2.0 * r.taxi_in)
                    for r in base]
        flights = tmp_path / "line.csv"
        write_csv(doctored, flights)
        model_path = tmp_path / "ols.bin"
        assert run(["train", "--in", flights, "--model", "ols",
                    "--targets", "total", "--out", model_path]) == 0
        trained = load_model(model_path)
        beta = trained.inner.beta[:, 0]
        taxi_in_row = 1 + trained.used_columns.index("TAXI_IN")
        assert beta[0] == pytest.approx(1.0, abs=1e-6)
        assert beta[taxi_in_row] == pytest.approx(2.0, abs=1e-6)
        others = [b for i, b in enumerate(beta)
                  if i not in (0, taxi_in_row)]
        assert max(abs(b) for b in others) < 1e-6

    def test_unknown_model_lists_valid_names(self, tmp_path, capsys):
        assert run(["train", "--in", "x.csv", "--model", "xgboost",
                    "--out", "m.bin"]) == 1
        err = capsys.readouterr().err
        assert err.startswith("error: ")
        assert "ols" in err and "hybrid" in err
        assert err.count("\n") == 1

    def test_conflicting_flags_reported_together(self, tmp_path, capsys):
        assert run(["train", "--in", "x.csv", "--model", "tree",
                    "--window", 0, "--epochs", 0, "--out", "m.bin"]) == 1
        err = capsys.readouterr().err
        assert "window" in err and "epochs" in err
        assert err.count("\n") == 1


class TestEvaluateCommand:
    def test_target_mode_mismatch_exits_nonzero(self, tmp_path, capsys):
        flights, pruned = tmp_path / "f.csv", tmp_path / "p.csv"
        model = tmp_path / "m.bin"
        assert run(["synth", "--count", 220, "--seed", 5, "--out", flights]) == 0
        assert run(["preprocess", "--in", flights, "--out", pruned]) == 0
        assert run(["train", "--in", pruned, "--model", "tree",
                    "--out", model]) == 0

        records, _ = read_csv(pruned)
        table = build_table(records, fit_codebook(records), "total")
        save_table(table, tmp_path / "total_table")
        assert run(["evaluate", "--model-file", model,
                    "--in", tmp_path / "total_table",
                    "--report-out", tmp_path / "r.json"]) == 1
        err = capsys.readouterr().err
        assert err.startswith("error: ")
        assert "total" in err

    def test_split_flag_controls_rows(self, tmp_path):
        flights, pruned = tmp_path / "f.csv", tmp_path / "p.csv"
        model = tmp_path / "m.bin"
        run(["synth", "--count", 220, "--seed", 5, "--out", flights])
        run(["preprocess", "--in", flights, "--out", pruned])
        run(["train", "--in", pruned, "--model", "tree", "--out", model])
        counts = {}
        for part in ("train", "test", "all"):
            rep = tmp_path / f"{part}.json"
            assert run(["evaluate", "--model-file", model, "--in", pruned,
                        "--split", part, "--report-out", rep]) == 0
            bundle = json.loads(rep.read_text())
            counts[part] = bundle["models"][0]["manifest"]["rows_scored"]
        assert counts["train"] + counts["test"] == counts["all"]
        assert counts["train"] > counts["test"]


class TestFlagResolution:
    def test_cli_beats_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"count": 30, "seed": 2}))
        out = tmp_path / "f.csv"
        assert run(["synth", "--config", cfg, "--count", 40,
                    "--out", out]) == 0
        rows = out.read_text().strip().splitlines()
        assert len(rows) == 41  # header + 40
        manifest = json.loads((tmp_path / "f.csv.manifest.json").read_text())
        assert manifest["config"]["count"] == 40
        assert manifest["seeds"]["seed"] == 2

    def test_env_seed_is_the_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DELAYCAST_SEED", "11")
        out = tmp_path / "f.csv"
        assert run(["synth", "--count", 25, "--out", out]) == 0
        manifest = json.loads((tmp_path / "f.csv.manifest.json").read_text())
        assert manifest["seeds"]["seed"] == 11

    def test_bad_env_seed_is_an_error(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("DELAYCAST_SEED", "eleven")
        assert run(["synth", "--count", 25, "--out", tmp_path / "f.csv"]) == 1
        assert "DELAYCAST_SEED" in capsys.readouterr().err

    def test_config_must_be_object(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("[1, 2]")
        assert run(["synth", "--config", cfg, "--count", 10,
                    "--out", tmp_path / "f.csv"]) == 1
        assert "JSON object" in capsys.readouterr().err

    def test_missing_required_flag(self, capsys):
        assert run(["synth", "--count", 10]) == 1
        assert "--out" in capsys.readouterr().err


class TestManifests:
    def test_every_command_writes_one(self, tmp_path):
        flights, pruned = tmp_path / "f.csv", tmp_path / "p.csv"
        model, rep = tmp_path / "m.bin", tmp_path / "r.json"
        run(["synth", "--count", 220, "--seed", 1, "--out", flights])
        run(["preprocess", "--in", flights, "--out", pruned])
        run(["analyze", "--in", pruned])
        run(["train", "--in", pruned, "--model", "tree", "--out", model])
        run(["evaluate", "--model-file", model, "--in", pruned,
             "--report-out", rep])
        run(["report", "--summaries", rep, "--format", "csv",
             "--out", tmp_path / "totals.csv"])
        expected = [f"{flights}.manifest.json", f"{pruned}.manifest.json",
                    f"{pruned}.analyze.manifest.json", f"{model}.manifest.json",
                    f"{rep}.manifest.json",
                    f"{tmp_path / 'totals.csv'}.manifest.json"]
        for path in expected:
            manifest = json.loads((tmp_path / path).read_text())
            assert manifest["wall_time_s"] >= 0.0
            assert manifest["command"] in ("synth", "preprocess", "analyze",
                                           "train", "evaluate", "report")
            assert isinstance(manifest["config"], dict)

    def test_missing_input_file_is_single_line_error(self, tmp_path, capsys):
        assert run(["preprocess", "--in", tmp_path / "absent.csv",
                    "--out", tmp_path / "p.csv"]) == 1
        err = capsys.readouterr().err
        assert err.startswith("error: ")
        assert err.count("\n") == 1
