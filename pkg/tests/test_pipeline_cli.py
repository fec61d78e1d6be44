"""End-to-end pipeline behavior and the CLI surface.

Covers stage composability through files, exit codes, and the documented
report formats.
"""
import csv
import filecmp
import json
import os

import pytest

from roomsense.cli import main
from roomsense.pipeline import (
    ESTIMATE_COLUMNS,
    MAPPING_COLUMNS,
    PCA_COLUMNS,
    read_estimates_csv,
    read_mapping_csv,
    run_pipeline,
)
from conftest import pipeline_config


@pytest.fixture(scope="module")
def small_run(small_corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("small_run")
    config = pipeline_config(small_corpus_dir, str(out), seed=7)
    paths = run_pipeline(config)
    return small_corpus_dir, config, paths


class TestRunPipeline:
    def test_all_report_files_present(self, small_run):
        _, _, paths = small_run
        for name in ("mapping", "pca", "mapping_report", "model", "estimates", "evaluation"):
            assert os.path.exists(paths[name]), name
        assert os.path.exists(os.path.join(os.path.dirname(paths["model"]), "config.txt"))

    def test_headers_and_decimal_points(self, small_run):
        _, _, paths = small_run
        with open(paths["estimates"]) as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == list(ESTIMATE_COLUMNS)
        with open(paths["mapping"]) as handle:
            header = next(csv.reader(handle))
        assert header == list(MAPPING_COLUMNS)
        with open(paths["pca"]) as handle:
            pca_rows = list(csv.reader(handle))
        assert pca_rows[0] == list(PCA_COLUMNS)
        for row in pca_rows[1:5]:
            assert "," not in row[2] and "." in row[2]  # locale-independent decimals

    def test_estimates_respect_count_invariants(self, small_run):
        _, _, paths = small_run
        estimates = read_estimates_csv(paths["estimates"])
        assert estimates, "no estimates written"
        for e in estimates:
            assert e.enrolled_wifi_count <= e.wifi_count
            assert e.lda_count <= e.wifi_count
            assert e.calibrated_count >= 0

    def test_rerun_byte_identical(self, small_corpus_dir, tmp_path):
        config_a = pipeline_config(small_corpus_dir, str(tmp_path / "a"), seed=7)
        config_b = pipeline_config(small_corpus_dir, str(tmp_path / "b"), seed=7)
        paths_a = run_pipeline(config_a)
        paths_b = run_pipeline(config_b)
        for key in ("estimates", "mapping", "pca", "evaluation", "model"):
            assert filecmp.cmp(paths_a[key], paths_b[key], shallow=False), key

    def test_evaluation_reports_all_methods(self, small_run):
        _, _, paths = small_run
        report = json.loads(open(paths["evaluation"]).read())
        assert set(report["methods"]) == {"wifi_count_lr", "enrolled_count_lr", "lda", "lda_lr"}
        assert report["train_classes"] > 0 and report["test_classes"] > 0


class TestStageComposability:
    def test_staged_files_match_single_process_run(self, small_run, tmp_path):
        corpus_dir, _, run_paths = small_run
        stage = tmp_path / "staged"
        base = [
            "--sessions", f"{corpus_dir}/sessions.csv",
            "--timetable", f"{corpus_dir}/timetable.csv",
            "--rosters", f"{corpus_dir}/roster.csv",
        ]
        assert main(
            ["map-aps", *base, "--inventory", f"{corpus_dir}/inventory.csv",
             "--seed", "7", "--out", str(stage)]
        ) == 0
        assert main(
            ["train", *base,
             "--ground-truth-counts", f"{corpus_dir}/ground_truth_counts.csv",
             "--mapping", str(stage / "mapping.csv"), "--seed", "7", "--out", str(stage)]
        ) == 0
        assert main(
            ["estimate", *base,
             "--ground-truth-counts", f"{corpus_dir}/ground_truth_counts.csv",
             "--mapping", str(stage / "mapping.csv"),
             "--model", str(stage / "model.txt"), "--out", str(stage)]
        ) == 0
        assert main(
            ["evaluate", "--estimates", str(stage / "estimates.csv"),
             "--seed", "7", "--out", str(stage)]
        ) == 0

        assert filecmp.cmp(stage / "mapping.csv", run_paths["mapping"], shallow=False)
        assert filecmp.cmp(stage / "model.txt", run_paths["model"], shallow=False)
        assert filecmp.cmp(stage / "estimates.csv", run_paths["estimates"], shallow=False)
        assert filecmp.cmp(stage / "evaluation.json", run_paths["evaluation"], shallow=False)

    def test_mapping_round_trip(self, small_run):
        _, _, paths = small_run
        results = read_mapping_csv(paths["mapping"])
        assert results
        for result in results.values():
            assert result.mapped.isdisjoint(result.not_mapped)
            assert set(result.scores) == result.featured

    def test_report_rates_match_recount_of_emitted_decisions(self, small_run):
        """Independent recount: rebuild the confusion from mapping.csv rows."""
        corpus_dir, _, paths = small_run
        from roomsense.store import load_inventory, load_timetable

        inventory, _ = load_inventory(f"{corpus_dir}/inventory.csv")
        events, _ = load_timetable(f"{corpus_dir}/timetable.csv")
        rooms = {e.class_id: e.room_id for e in events}
        mapped_by_class = {}
        with open(paths["mapping"]) as handle:
            for row in list(csv.reader(handle))[1:]:
                mapped_by_class.setdefault(row[0], set())
                if row[2] == "1":
                    mapped_by_class[row[0]].add(row[1])
        tp = fn = tn = fp = 0
        for class_id, mapped in mapped_by_class.items():
            positives = inventory.positives_for_room(rooms[class_id], adjacency=True)
            for ap in inventory:
                if ap in positives:
                    tp, fn = (tp + 1, fn) if ap in mapped else (tp, fn + 1)
                else:
                    fp, tn = (fp + 1, tn) if ap in mapped else (fp, tn + 1)
        report = json.loads(open(paths["mapping_report"]).read())
        assert report["counts"] == {"tp": tp, "fn": fn, "tn": tn, "fp": fp}
        assert report["tp_rate"] == pytest.approx(tp / (tp + fn), abs=1e-6)
        assert report["tn_rate"] == pytest.approx(tn / (tn + fp), abs=1e-6)


class TestCli:
    def test_simulate_writes_corpus(self, tmp_path):
        code = main(["simulate", "--out", str(tmp_path / "sim"), "--seed", "3", "--weeks", "1"])
        assert code == 0
        for name in ("sessions.csv", "timetable.csv", "roster.csv", "inventory.csv",
                     "ground_truth_users.csv", "ground_truth_counts.csv", "sim_config.txt"):
            assert (tmp_path / "sim" / name).exists(), name

    def test_missing_roster_file_exit_code_and_message(self, small_corpus_dir, tmp_path, capsys):
        code = main(
            ["run",
             "--sessions", f"{small_corpus_dir}/sessions.csv",
             "--timetable", f"{small_corpus_dir}/timetable.csv",
             "--rosters", f"{small_corpus_dir}/nope.csv",
             "--ground-truth-counts", f"{small_corpus_dir}/ground_truth_counts.csv",
             "--output-dir", str(tmp_path)]
        )
        assert code == 1
        assert "nope.csv" in capsys.readouterr().err

    def test_schema_mismatch_between_stages_fatal(self, tmp_path, capsys):
        bad = tmp_path / "estimates.csv"
        bad.write_text("wrong,columns\n1,2\n")
        code = main(["evaluate", "--estimates", str(bad), "--out", str(tmp_path)])
        assert code == 2
        err = capsys.readouterr().err
        assert "expected columns" in err

    def test_evaluate_on_handwritten_estimates(self, tmp_path):
        path = tmp_path / "estimates.csv"
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(ESTIMATE_COLUMNS)
            for i in range(10):
                truth = 50 + 10 * i
                writer.writerow([f"c{i}", "room1", truth + 20, truth + 5, truth - 8, truth, truth])
        code = main(["evaluate", "--estimates", str(path), "--seed", "1", "--out", str(tmp_path)])
        assert code == 0
        report = json.loads((tmp_path / "evaluation.json").read_text())
        assert set(report["methods"]) == {"wifi_count_lr", "enrolled_count_lr", "lda", "lda_lr"}

    def test_run_flag_overrides_config_file(self, small_corpus_dir, tmp_path):
        config_file = tmp_path / "pipe.cfg"
        config_file.write_text(
            "\n".join(
                [
                    f"sessions = {small_corpus_dir}/sessions.csv",
                    f"timetable = {small_corpus_dir}/timetable.csv",
                    f"rosters = {small_corpus_dir}/roster.csv",
                    f"inventory = {small_corpus_dir}/inventory.csv",
                    f"ground_truth_counts = {small_corpus_dir}/ground_truth_counts.csv",
                    f"output_dir = {tmp_path / 'from_file'}",
                    "seed = 99",
                ]
            )
        )
        code = main(["run", "--config", str(config_file), "--output-dir", str(tmp_path / "ovr"),
                     "--seed", "7"])
        assert code == 0
        assert (tmp_path / "ovr" / "estimates.csv").exists()
        echoed = (tmp_path / "ovr" / "config.txt").read_text()
        assert "seed = 7" in echoed

    def test_map_aps_class_filter(self, small_corpus_dir, tmp_path):
        with open(f"{small_corpus_dir}/timetable.csv") as handle:
            first_class = list(csv.reader(handle))[1][0]
        code = main(
            ["map-aps",
             "--sessions", f"{small_corpus_dir}/sessions.csv",
             "--timetable", f"{small_corpus_dir}/timetable.csv",
             "--rosters", f"{small_corpus_dir}/roster.csv",
             "--classes", first_class, "--seed", "7", "--out", str(tmp_path)]
        )
        assert code == 0
        with open(tmp_path / "mapping.csv") as handle:
            class_ids = {row[0] for row in list(csv.reader(handle))[1:]}
        assert class_ids == {first_class}
        # without an inventory the report carries no accuracy section
        report = json.loads((tmp_path / "mapping_report.json").read_text())
        assert "tp_rate" not in report

    def test_unknown_config_key_is_usage_error(self, tmp_path, capsys):
        config_file = tmp_path / "bad.cfg"
        config_file.write_text("definitely_not_a_key = 1\n")
        assert main(["run", "--config", str(config_file)]) == 1

    def test_map_aps_resolution_sweep_table(self, small_corpus_dir, tmp_path):
        code = main(
            ["map-aps",
             "--sessions", f"{small_corpus_dir}/sessions.csv",
             "--timetable", f"{small_corpus_dir}/timetable.csv",
             "--rosters", f"{small_corpus_dir}/roster.csv",
             "--inventory", f"{small_corpus_dir}/inventory.csv",
             "--sweep", "10,30", "--seed", "7", "--out", str(tmp_path)]
        )
        assert code == 0
        with open(tmp_path / "resolution_sweep.csv") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["resolution", "skipped", "classes", "tp_rate", "tn_rate"]
        assert [r[0] for r in rows[1:]] == ["10", "30"]

    def test_use_room_aps_fallback(self, small_corpus_dir, tmp_path):
        config = pipeline_config(
            small_corpus_dir, str(tmp_path / "roomaps"), seed=7, use_room_aps=True
        )
        paths = run_pipeline(config)
        estimates = read_estimates_csv(paths["estimates"])
        assert estimates and all(e.wifi_count >= 0 for e in estimates)

    def test_jobs_parallel_identical_output(self, small_corpus_dir, tmp_path):
        a = pipeline_config(small_corpus_dir, str(tmp_path / "serial"), seed=7)
        b = pipeline_config(small_corpus_dir, str(tmp_path / "parallel"), seed=7, jobs=4)
        paths_a = run_pipeline(a)
        paths_b = run_pipeline(b)
        for key in ("estimates", "mapping"):
            assert filecmp.cmp(paths_a[key], paths_b[key], shallow=False), key


class TestEnrolledNeverExceedsWifi:
    def test_on_small_corpus(self, small_run):
        _, _, paths = small_run
        for e in read_estimates_csv(paths["estimates"]):
            assert e.enrolled_wifi_count <= e.wifi_count


class TestModelReuseAcrossCorpora:
    def test_train_here_estimate_there(self, small_run, tmp_path):
        """A model file trained on one corpus drives estimates on a disjoint one."""
        from roomsense.model import load_model
        from roomsense.pipeline import estimate_stage, features_stage, load_corpus, map_stage
        from roomsense.simulate import SimConfig, simulate_corpus

        _, _, trained = small_run
        other = tmp_path / "other_corpus"
        simulate_corpus(
            SimConfig(seed=55, weeks=2, room_capacities=(110, 246), classes_per_room_per_week=2),
            other,
        )
        out = tmp_path / "other_out"
        base = [
            "--sessions", f"{other}/sessions.csv",
            "--timetable", f"{other}/timetable.csv",
            "--rosters", f"{other}/roster.csv",
        ]
        assert main(["map-aps", *base, "--seed", "55", "--out", str(out)]) == 0
        assert main(
            ["estimate", *base, "--mapping", str(out / "mapping.csv"),
             "--model", trained["model"], "--out", str(out)]
        ) == 0
        from_cli = read_estimates_csv(out / "estimates.csv")

        config = pipeline_config(str(other), str(tmp_path / "inproc"), seed=55)
        config.inventory = ""
        config.ground_truth_counts = ""
        corpus = load_corpus(config)
        results, _ = map_stage(corpus, config)
        lda, calibration = load_model(trained["model"])
        features = features_stage(corpus, results, config)
        in_process = estimate_stage(corpus, features, lda, calibration)

        assert [(e.class_id, e.wifi_count, e.lda_count, e.calibrated_count) for e in from_cli] == [
            (e.class_id, e.wifi_count, e.lda_count, e.calibrated_count) for e in in_process
        ]
