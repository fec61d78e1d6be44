"""Shared fixtures: tiny hand-built stores plus one seeded synthetic corpus.

The seed-42 default corpus is expensive enough to build that every test
needing it shares a single session-scoped copy.
"""
from __future__ import annotations

import pytest

from roomsense.config import PipelineConfig
from roomsense.pipeline import LoadedCorpus, load_corpus, run_pipeline
from roomsense.records import SessionRecord, parse_stamp
from roomsense.simulate import SimConfig, simulate_corpus
from roomsense.store import SessionStore

DAY = "03/03/2025"


def make_session(
    user: str,
    ap: str,
    start: str,
    end: str,
    mac: str = "aa:aa:aa:aa:aa:01",
    rssi: int | None = -60,
    day: str = DAY,
) -> SessionRecord:
    """Closed session on one day, times as 'HH:MM'."""
    assoc = parse_stamp(f"{day} {start}")
    disassoc = parse_stamp(f"{day} {end}")
    minutes = int((disassoc - assoc).total_seconds() // 60)
    return SessionRecord(
        user_id=user,
        device_mac=mac,
        assoc_time=assoc,
        disassoc_time=disassoc,
        duration=minutes,
        ap_name=ap,
        bytes_tx=1000,
        bytes_rcvd=2000,
        snr=30,
        rssi=rssi,
        status="Disassociated",
    )


@pytest.fixture()
def store_builder():
    def build(*records: SessionRecord) -> SessionStore:
        return SessionStore(list(records))

    return build


@pytest.fixture(scope="session")
def sim42(tmp_path_factory):
    """Default-config seed-42 corpus, generated once: (dir, campus, ground truth)."""
    out = tmp_path_factory.mktemp("corpus42")
    campus, truth = simulate_corpus(SimConfig(seed=42), out)
    return str(out), campus, truth


@pytest.fixture(scope="session")
def corpus42_dir(sim42) -> str:
    return sim42[0]


@pytest.fixture(scope="session")
def corpus42(corpus42_dir) -> LoadedCorpus:
    return load_corpus(pipeline_config(corpus42_dir))


def pipeline_config(corpus_dir: str, out_dir: str | None = None, **overrides) -> PipelineConfig:
    config = PipelineConfig(
        sessions=f"{corpus_dir}/sessions.csv",
        timetable=f"{corpus_dir}/timetable.csv",
        rosters=f"{corpus_dir}/roster.csv",
        inventory=f"{corpus_dir}/inventory.csv",
        ground_truth_counts=f"{corpus_dir}/ground_truth_counts.csv",
        output_dir=out_dir or f"{corpus_dir}/out",
        seed=42,
    )
    for key, value in overrides.items():
        setattr(config, key, value)
    return config


@pytest.fixture(scope="session")
def pipeline42(corpus42_dir, tmp_path_factory) -> dict[str, str]:
    """Full pipeline report bundle for the seed-42 corpus."""
    out = tmp_path_factory.mktemp("pipeline42")
    return run_pipeline(pipeline_config(corpus42_dir, str(out)))


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory) -> str:
    """A fast 3-room corpus for pipeline and CLI tests."""
    out = tmp_path_factory.mktemp("small_corpus")
    config = SimConfig(
        seed=7, weeks=3, room_capacities=(42, 110, 246), classes_per_room_per_week=2
    )
    simulate_corpus(config, out)
    return str(out)
