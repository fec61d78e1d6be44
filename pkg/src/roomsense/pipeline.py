"""End-to-end orchestration and the on-disk report formats.

Stages compose through files: running map-aps, train, estimate and evaluate
separately against the documented CSV/JSON formats yields byte-identical
results to one in-process `run_pipeline` call with the same config and seed.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import estimation, mapping, model as model_mod, userfeatures
from .clustering import pca_project
from .config import PipelineConfig, echo_config
from .records import ApInventory, ClassEvent, DataValidationError
from .simulate import load_ground_truth_counts
from .store import SessionStore, load_inventory, load_rosters, load_sessions, load_timetable

ESTIMATE_COLUMNS = (
    "class_id",
    "room_id",
    "wifi_count",
    "enrolled_wifi_count",
    "lda_count",
    "calibrated_count",
    "ground_truth",
)
MAPPING_COLUMNS = ("class_id", "ap_name", "mapped", "score")
PCA_COLUMNS = ("class_id", "ap_name", "pc1", "pc2", "mapped", "ground_truth")


@dataclass
class LoadedCorpus:
    store: SessionStore
    events: list[ClassEvent]
    rosters: dict[str, frozenset[str]]
    inventory: ApInventory | None
    truth_counts: dict[str, int] | None

    @property
    def events_by_id(self) -> dict[str, ClassEvent]:
        return {e.class_id: e for e in self.events}


def load_corpus(config: PipelineConfig) -> LoadedCorpus:
    records, _ = load_sessions(config.sessions, delimiter=config.delimiter)
    events, timetable_report = load_timetable(config.timetable, delimiter=config.delimiter)
    if timetable_report.rejects:
        first = timetable_report.rejects[0]
        raise DataValidationError(
            f"{config.timetable}: rejected row {first[0]}: {first[1]}"
        )
    rosters, _ = load_rosters(config.rosters, delimiter=config.delimiter)
    inventory = None
    if config.inventory:
        inventory, _ = load_inventory(config.inventory, delimiter=config.delimiter)
    truth = None
    if config.ground_truth_counts:
        truth = load_ground_truth_counts(config.ground_truth_counts, delimiter=config.delimiter)
    missing = [e.class_id for e in events if e.class_id not in rosters]
    if missing:
        raise DataValidationError(f"no roster for classes: {', '.join(sorted(missing)[:5])}")
    return LoadedCorpus(SessionStore(records), events, rosters, inventory, truth)


def _parallel(jobs: int, fn, items):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def map_stage(
    corpus: LoadedCorpus, config: PipelineConfig
) -> tuple[dict[str, mapping.MappingResult], dict[str, list[mapping.ApFeatureSeries]]]:
    def one(event: ClassEvent):
        return mapping.map_class_aps(
            corpus.store,
            event,
            corpus.rosters[event.class_id],
            resolution=config.resolution,
            resample_len=config.resample_len,
            algorithm=config.algorithm,
            seed=config.seed,
        )

    ordered = sorted(corpus.events, key=lambda e: e.class_id)
    outcomes = _parallel(config.jobs, one, ordered)
    results = {r.class_id: r for r, _ in outcomes}
    series = {e.class_id: s for e, (_, s) in zip(ordered, outcomes)}
    return results, series


def mapped_aps_for(
    event: ClassEvent,
    results: dict[str, mapping.MappingResult],
    corpus: LoadedCorpus,
    config: PipelineConfig,
) -> frozenset[str]:
    """Class AP set: the clustering's mapped set, or inventory room APs as fallback."""
    if config.use_room_aps:
        if corpus.inventory is None:
            raise DataValidationError("use_room_aps requires an inventory")
        return corpus.inventory.room_aps(event.room_id)
    return results[event.class_id].mapped


def features_stage(
    corpus: LoadedCorpus,
    results: dict[str, mapping.MappingResult],
    config: PipelineConfig,
) -> dict[str, list[userfeatures.UserFeatureVector]]:
    def one(event: ClassEvent):
        aps = mapped_aps_for(event, results, corpus, config)
        vectors = userfeatures.extract_class_features(corpus.store, event, aps)
        return event.class_id, userfeatures.label_vectors(
            vectors, corpus.rosters[event.class_id]
        )

    ordered = sorted(corpus.events, key=lambda e: e.class_id)
    return dict(_parallel(config.jobs, one, ordered))


def train_stage(
    corpus: LoadedCorpus,
    features: dict[str, list[userfeatures.UserFeatureVector]],
    train_ids: set,
) -> tuple[model_mod.LdaModel, model_mod.CalibrationModel]:
    training = [v for cid in sorted(train_ids) for v in features.get(cid, [])]
    fill = userfeatures.impute_rssi(training)
    lda = model_mod.train_lda(training, rssi_fill=fill)
    if corpus.truth_counts is None:
        raise DataValidationError("training requires ground-truth counts")
    pairs = []
    for cid in sorted(train_ids):
        if cid in corpus.truth_counts:
            vectors = features.get(cid, [])
            userfeatures.impute_rssi(vectors, fill)
            pairs.append((model_mod.count_occupants(lda, vectors), corpus.truth_counts[cid]))
    calibration = model_mod.fit_calibration(pairs)
    return lda, calibration


def estimate_stage(
    corpus: LoadedCorpus,
    features: dict[str, list[userfeatures.UserFeatureVector]],
    lda: model_mod.LdaModel,
    calibration: model_mod.CalibrationModel,
) -> list[estimation.OccupancyEstimate]:
    estimates = []
    for event in sorted(corpus.events, key=lambda e: e.class_id):
        vectors = features.get(event.class_id, [])
        userfeatures.impute_rssi(vectors, lda.rssi_fill)
        truth = None
        if corpus.truth_counts is not None:
            truth = corpus.truth_counts.get(event.class_id)
        estimates.append(
            estimation.estimate_class(
                event.class_id,
                event.room_id,
                vectors,
                corpus.rosters[event.class_id],
                lda,
                calibration,
                ground_truth=truth,
            )
        )
    return estimates


def write_mapping_csv(path, results: dict[str, mapping.MappingResult]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(MAPPING_COLUMNS)
        for class_id in sorted(results):
            result = results[class_id]
            for ap in sorted(result.featured):
                writer.writerow(
                    [class_id, ap, 1 if ap in result.mapped else 0, f"{result.scores.get(ap, 0.0):.6f}"]
                )


def read_mapping_csv(path) -> dict[str, mapping.MappingResult]:
    results: dict[str, dict] = {}
    try:
        with open(path, newline="") as handle:
            rows = csv.reader(handle)
            header = next(rows, None)
            if header is None or [h.strip() for h in header] != list(MAPPING_COLUMNS):
                raise DataValidationError(
                    f"{path}: expected columns {list(MAPPING_COLUMNS)}, found {header}"
                )
            for fields in rows:
                if len(fields) < 4:
                    continue
                class_id, ap, flag, score = fields[:4]
                entry = results.setdefault(class_id, {"mapped": set(), "not": set(), "scores": {}})
                (entry["mapped"] if flag.strip() == "1" else entry["not"]).add(ap)
                entry["scores"][ap] = float(score)
    except OSError as exc:
        raise DataValidationError(f"cannot read mapping file {path}: {exc}") from exc
    return {
        cid: mapping.MappingResult(
            cid, frozenset(e["mapped"]), frozenset(e["not"]), "file", e["scores"]
        )
        for cid, e in results.items()
    }


def write_pca_csv(
    path,
    corpus: LoadedCorpus,
    results: dict[str, mapping.MappingResult],
    series_by_class: dict[str, list[mapping.ApFeatureSeries]],
    config: PipelineConfig,
) -> None:
    """2-D projections of each class's AP features, for plotting only."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(PCA_COLUMNS)
        for event in sorted(corpus.events, key=lambda e: e.class_id):
            series = series_by_class.get(event.class_id, [])
            if len(series) < 2:
                continue
            result = results[event.class_id]
            matrix, ap_names = mapping.build_feature_matrix(series, config.resample_len)
            coords, _ = pca_project(matrix, components=2)
            positives = None
            if corpus.inventory is not None:
                positives = corpus.inventory.positives_for_room(
                    event.room_id, adjacency=config.adjacency
                )
            for ap, (x, y) in zip(ap_names, coords):
                truth_flag = "" if positives is None else (1 if ap in positives else 0)
                writer.writerow(
                    [
                        event.class_id,
                        ap,
                        f"{x:.6f}",
                        f"{y:.6f}",
                        1 if ap in result.mapped else 0,
                        truth_flag,
                    ]
                )


def mapping_report(
    corpus: LoadedCorpus, results: dict[str, mapping.MappingResult], config: PipelineConfig
) -> dict:
    report: dict = {"algorithm": config.algorithm, "resolution": config.resolution}
    if corpus.inventory is None:
        report["note"] = "no inventory supplied; accuracy not evaluated"
        return report
    scored = mapping.evaluate_mapping(
        list(results.values()), corpus.inventory, corpus.events_by_id, adjacency=config.adjacency
    )
    per_ap = mapping.consistency(
        list(results.values()), corpus.inventory, corpus.events_by_id, adjacency=config.adjacency
    )
    report.update(
        {
            "tp_rate": round(scored.tp_rate, 6),
            "tn_rate": round(scored.tn_rate, 6),
            "counts": {"tp": scored.tp, "fn": scored.fn, "tn": scored.tn, "fp": scored.fp},
            "per_room": scored.per_room,
            "unevaluable": scored.unevaluable,
            "consistency": {ap: round(v, 6) for ap, v in per_ap.items()},
            "consistency_ccdf": [
                [t, round(f, 6)] for t, f in mapping.consistency_ccdf(per_ap)
            ],
        }
    )
    return report


def write_sweep_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["resolution", "skipped", "classes", "tp_rate", "tn_rate"])
        for row in rows:
            if row.get("skipped"):
                writer.writerow([row["resolution"], 1, 0, "", ""])
            else:
                writer.writerow(
                    [
                        row["resolution"],
                        0,
                        row["classes"],
                        f"{row['tp_rate']:.6f}",
                        f"{row['tn_rate']:.6f}",
                    ]
                )


def write_estimates_csv(path, estimates: list[estimation.OccupancyEstimate]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ESTIMATE_COLUMNS)
        for e in sorted(estimates, key=lambda x: x.class_id):
            writer.writerow(
                [
                    e.class_id,
                    e.room_id,
                    e.wifi_count,
                    e.enrolled_wifi_count,
                    e.lda_count,
                    e.calibrated_count,
                    "" if e.ground_truth is None else e.ground_truth,
                ]
            )


def read_estimates_csv(path) -> list[estimation.OccupancyEstimate]:
    estimates = []
    try:
        with open(path, newline="") as handle:
            rows = csv.reader(handle)
            header = next(rows, None)
            if header is None or [h.strip() for h in header] != list(ESTIMATE_COLUMNS):
                raise DataValidationError(
                    f"{path}: expected columns {list(ESTIMATE_COLUMNS)}, found {header}"
                )
            for fields in rows:
                if len(fields) < 7 or not fields[0].strip():
                    continue
                estimates.append(
                    estimation.OccupancyEstimate(
                        class_id=fields[0].strip(),
                        room_id=fields[1].strip(),
                        wifi_count=int(fields[2]),
                        enrolled_wifi_count=int(fields[3]),
                        lda_count=int(fields[4]),
                        calibrated_count=int(fields[5]),
                        ground_truth=int(fields[6]) if fields[6].strip() else None,
                    )
                )
    except OSError as exc:
        raise DataValidationError(f"cannot read estimates file {path}: {exc}") from exc
    return estimates


def evaluate_estimates(estimates, seed: int, train_ratio: float) -> dict:
    """Method comparison on the seed-derived class split (reproducible across stages)."""
    train_ids, test_ids = estimation.split_classes(
        [e.class_id for e in estimates], train_ratio=train_ratio, seed=seed
    )
    report = estimation.method_comparison(estimates, train_ids, test_ids)
    report["seed"] = seed
    report["train_ratio"] = train_ratio
    for key, value in report["methods"].items():
        report["methods"][key] = round(value, 6)
    for row in report["by_occupancy_level"] + report["by_room"]:
        row["smape"] = round(row["smape"], 6)
        if "mean_occupancy" in row:
            row["mean_occupancy"] = round(row["mean_occupancy"], 6)
    return report


def write_json(path, payload: dict) -> None:
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def run_pipeline(config: PipelineConfig) -> dict[str, str]:
    """load -> map -> features -> train -> estimate -> evaluate, writing all reports.

    Returns the paths of the written report files.
    """
    config.validate(require_truth=True)
    os.makedirs(config.output_dir, exist_ok=True)
    corpus = load_corpus(config)

    results, series = map_stage(corpus, config)
    features = features_stage(corpus, results, config)
    train_ids, _ = estimation.split_classes(
        [e.class_id for e in corpus.events], train_ratio=config.train_ratio, seed=config.seed
    )
    lda, calibration = train_stage(corpus, features, train_ids)
    estimates = estimate_stage(corpus, features, lda, calibration)
    evaluation = evaluate_estimates(estimates, config.seed, config.train_ratio)

    paths = {
        "mapping": os.path.join(config.output_dir, "mapping.csv"),
        "pca": os.path.join(config.output_dir, "pca.csv"),
        "mapping_report": os.path.join(config.output_dir, "mapping_report.json"),
        "model": os.path.join(config.output_dir, "model.txt"),
        "estimates": os.path.join(config.output_dir, "estimates.csv"),
        "evaluation": os.path.join(config.output_dir, "evaluation.json"),
    }
    write_mapping_csv(paths["mapping"], results)
    write_pca_csv(paths["pca"], corpus, results, series, config)
    write_json(paths["mapping_report"], mapping_report(corpus, results, config))
    model_mod.save_model(paths["model"], lda, calibration)
    write_estimates_csv(paths["estimates"], estimates)
    write_json(paths["evaluation"], evaluation)
    echo_config(os.path.join(config.output_dir, "config.txt"), config)
    return paths
