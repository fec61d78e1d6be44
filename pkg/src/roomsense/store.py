"""Loading, validation and time-windowed querying of session logs.

The store is immutable after construction; every query is read-only, so
classes can be processed concurrently against one shared store.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .records import (
    ALLOWED_CLASS_MINUTES,
    CORRIDOR_MARKERS,
    DEFAULT_REPORT_HOUR,
    INVENTORY_COLUMNS,
    ROSTER_COLUMNS,
    SESSION_COLUMNS,
    STATUS_ASSOCIATED,
    STATUS_DISASSOCIATED,
    TIMETABLE_COLUMNS,
    ApInventory,
    ApLocation,
    ClassEvent,
    DataValidationError,
    SessionRecord,
    parse_stamp,
    to_minutes,
)


@dataclass
class LoadReport:
    """Per-file validation outcome: rejected rows and non-fatal warnings."""

    rejects: list[tuple[int, str]] = field(default_factory=list)
    warnings: list[tuple[int, str]] = field(default_factory=list)
    rows_read: int = 0

    def reject(self, line_no: int, reason: str) -> None:
        self.rejects.append((line_no, reason))

    def warn(self, line_no: int, message: str) -> None:
        self.warnings.append((line_no, message))


def merge_intervals(intervals):
    """Merge [start, end] pairs into a disjoint sorted list.

    Touching intervals (end == next start) coalesce, matching the half-open
    convention used everywhere else. Works on any comparable endpoint type.
    """
    spans = sorted((s, e) for s, e in intervals)
    merged: list[list] = []
    for start, end in spans:
        if merged and start <= merged[-1][1]:
            if end > merged[-1][1]:
                merged[-1][1] = end
        else:
            merged.append([start, end])
    return [(s, e) for s, e in merged]


def _open_rows(path, delimiter: str):
    try:
        handle = open(path, "r", newline="")
    except OSError as exc:
        raise DataValidationError(f"cannot read {path}: {exc}") from exc
    return handle, csv.reader(handle, delimiter=delimiter)


def _check_header(path, header, expected) -> None:
    if header is None:
        raise DataValidationError(f"{path}: empty file, expected header {expected}")
    got = [h.strip() for h in header[: len(expected)]]
    if [g.lower() for g in got] != [e.lower() for e in expected]:
        raise DataValidationError(
            f"{path}: header mismatch, expected {list(expected)}, found {got}"
        )


def _maybe_fatal_rejects(path, report: LoadReport) -> None:
    if report.rows_read and len(report.rejects) * 2 > report.rows_read:
        raise DataValidationError(
            f"{path}: {len(report.rejects)} of {report.rows_read} rows rejected; "
            "this does not look like the right file"
        )


def _parse_optional_int(text: str) -> int | None:
    text = text.strip()
    if text in ("", "-"):
        return None
    return int(text)


def parse_session_row(
    fields: list[str], report_time: datetime | None
) -> tuple[SessionRecord | None, str | None, str | None]:
    """Parse one data row; returns (record, reject_reason, warning)."""
    if len(fields) < len(SESSION_COLUMNS):
        return None, f"expected {len(SESSION_COLUMNS)} columns, found {len(fields)}", None
    vals = [f.strip() for f in fields]
    user_id, mac = vals[0], vals[1]
    if not user_id or not mac:
        return None, "missing user id or MAC address", None
    try:
        assoc = parse_stamp(vals[2])
    except (ValueError, IndexError):
        return None, f"bad association time {vals[2]!r}", None

    status_text = vals[10].lower()
    if status_text in ("ass", "associated"):
        status = STATUS_ASSOCIATED
    elif status_text in ("disass", "disassociated"):
        status = STATUS_DISASSOCIATED
    else:
        return None, f"unknown status {vals[10]!r}", None

    disassoc = None
    if vals[3] not in ("", "-"):
        try:
            disassoc = parse_stamp(vals[3])
        except (ValueError, IndexError):
            return None, f"bad disassociation time {vals[3]!r}", None

    if status == STATUS_DISASSOCIATED:
        if disassoc is None:
            return None, "disassociated session without disassociation time", None
        if disassoc < assoc:
            return None, "disassociation time precedes association time", None
        end = disassoc
    else:
        if disassoc is not None:
            return None, "ongoing session carries a disassociation time", None
        end = report_time if report_time is not None else assoc.replace(
            hour=DEFAULT_REPORT_HOUR, minute=0
        )
        if end < assoc:
            return None, "ongoing session starts after report generation time", None

    try:
        bytes_tx = int(vals[6])
        bytes_rcvd = int(vals[7])
        snr = _parse_optional_int(vals[8])
        rssi = _parse_optional_int(vals[9])
    except ValueError:
        return None, "bad numeric field", None

    duration = to_minutes(end) - to_minutes(assoc)
    warning = None
    logged = vals[4].split()
    if logged and logged[0].lstrip("-").isdigit() and int(logged[0]) != duration:
        warning = f"logged duration {logged[0]} min != recomputed {duration} min"

    retries = None
    if len(vals) > len(SESSION_COLUMNS):
        try:
            retries = _parse_optional_int(vals[len(SESSION_COLUMNS)])
        except ValueError:
            retries = None

    record = SessionRecord(
        user_id=user_id,
        device_mac=mac,
        assoc_time=assoc,
        disassoc_time=disassoc,
        duration=duration,
        ap_name=vals[5],
        bytes_tx=bytes_tx,
        bytes_rcvd=bytes_rcvd,
        snr=snr,
        rssi=rssi,
        status=status,
        retries=retries,
    )
    return record, None, warning


def load_sessions(
    path, report_time: datetime | None = None, delimiter: str = ","
) -> tuple[list[SessionRecord], LoadReport]:
    """Load and validate a session-log file.

    Ongoing (`Ass`) sessions get their effective end from `report_time`; when
    it is None, the default 9pm report time on the row's own date applies.
    """
    handle, rows = _open_rows(path, delimiter)
    report = LoadReport()
    records: list[SessionRecord] = []
    with handle:
        header = next(rows, None)
        _check_header(path, header, SESSION_COLUMNS)
        for line_no, fields in enumerate(rows, start=2):
            if not fields or all(not f.strip() for f in fields):
                continue
            report.rows_read += 1
            record, reason, warning = parse_session_row(fields, report_time)
            if reason is not None:
                report.reject(line_no, reason)
                continue
            if warning is not None:
                report.warn(line_no, warning)
            records.append(record)
    _maybe_fatal_rejects(path, report)
    return records, report


def load_timetable(path, delimiter: str = ",") -> tuple[list[ClassEvent], LoadReport]:
    handle, rows = _open_rows(path, delimiter)
    report = LoadReport()
    events: list[ClassEvent] = []
    seen_ids: set[str] = set()
    with handle:
        header = next(rows, None)
        _check_header(path, header, TIMETABLE_COLUMNS)
        for line_no, fields in enumerate(rows, start=2):
            if not fields or all(not f.strip() for f in fields):
                continue
            report.rows_read += 1
            if len(fields) < 5:
                report.reject(line_no, "expected 5 columns")
                continue
            class_id, room_id, date, start, end = (f.strip() for f in fields[:5])
            try:
                start_dt = parse_stamp(f"{date} {start}")
                end_dt = parse_stamp(f"{date} {end}")
            except ValueError:
                report.reject(line_no, "bad date or time")
                continue
            if end_dt <= start_dt:
                report.reject(line_no, "class end not after start")
                continue
            minutes = to_minutes(end_dt) - to_minutes(start_dt)
            if minutes not in ALLOWED_CLASS_MINUTES:
                report.reject(line_no, f"class duration {minutes} min not in allowed set")
                continue
            if class_id in seen_ids:
                report.reject(line_no, f"duplicate class_id {class_id}")
                continue
            seen_ids.add(class_id)
            events.append(ClassEvent(class_id, room_id, start_dt, end_dt))
    _maybe_fatal_rejects(path, report)
    return events, report


def load_rosters(path, delimiter: str = ",") -> tuple[dict[str, frozenset[str]], LoadReport]:
    handle, rows = _open_rows(path, delimiter)
    report = LoadReport()
    enrolled: dict[str, set[str]] = {}
    with handle:
        header = next(rows, None)
        _check_header(path, header, ROSTER_COLUMNS)
        for line_no, fields in enumerate(rows, start=2):
            if not fields or all(not f.strip() for f in fields):
                continue
            report.rows_read += 1
            if len(fields) < 2 or not fields[0].strip() or not fields[1].strip():
                report.reject(line_no, "expected class_id,user_id")
                continue
            class_id, user_id = fields[0].strip(), fields[1].strip()
            members = enrolled.setdefault(class_id, set())
            if user_id in members:
                report.warn(line_no, f"duplicate enrolment {user_id} in {class_id}")
            members.add(user_id)
    _maybe_fatal_rejects(path, report)
    return {cid: frozenset(m) for cid, m in enrolled.items()}, report


def load_inventory(path, delimiter: str = ",") -> tuple[ApInventory, LoadReport]:
    handle, rows = _open_rows(path, delimiter)
    report = LoadReport()
    locations: dict[str, ApLocation] = {}
    with handle:
        header = next(rows, None)
        _check_header(path, header, INVENTORY_COLUMNS)
        for line_no, fields in enumerate(rows, start=2):
            if not fields or all(not f.strip() for f in fields):
                continue
            report.rows_read += 1
            if len(fields) < 4:
                report.reject(line_no, "expected 4 columns")
                continue
            ap, room, building, floor = (f.strip() for f in fields[:4])
            if ap in locations:
                report.reject(line_no, f"duplicate ap_name {ap}")
                continue
            try:
                floor_no = int(floor)
            except ValueError:
                report.reject(line_no, f"bad floor {floor!r}")
                continue
            room_id = None if room.lower() in CORRIDOR_MARKERS else room
            locations[ap] = ApLocation(room_id, building, floor_no)
    _maybe_fatal_rejects(path, report)
    return ApInventory(locations), report


class _ApIndex:
    """Per-AP numpy views: raw sessions plus per-user merged intervals."""

    __slots__ = ("raw_start", "raw_end", "raw_user", "raw_row", "m_start", "m_end", "m_user")

    def __init__(self, rows, records_start, records_end, user_idx):
        order = sorted(rows, key=lambda r: (records_start[r], records_end[r]))
        self.raw_start = np.array([records_start[r] for r in order], dtype=np.int64)
        self.raw_end = np.array([records_end[r] for r in order], dtype=np.int64)
        self.raw_user = np.array([user_idx[r] for r in order], dtype=np.int64)
        self.raw_row = np.array(order, dtype=np.int64)

        by_user: dict[int, list[tuple[int, int]]] = {}
        for r in order:
            by_user.setdefault(user_idx[r], []).append((records_start[r], records_end[r]))
        m_start, m_end, m_user = [], [], []
        for uid in sorted(by_user):
            for s, e in merge_intervals(by_user[uid]):
                m_start.append(s)
                m_end.append(e)
                m_user.append(uid)
        self.m_start = np.array(m_start, dtype=np.int64)
        self.m_end = np.array(m_end, dtype=np.int64)
        self.m_user = np.array(m_user, dtype=np.int64)


@dataclass(frozen=True)
class ConnectionSnapshot:
    """Who is connected where at one instant: ap_name -> connected user set."""

    timestamp: datetime
    connections: dict[str, frozenset[str]]


class SessionStore:
    """Immutable queryable view over a validated list of session records."""

    def __init__(self, records: list[SessionRecord]):
        self._records = list(records)
        self._users: list[str] = sorted({r.user_id for r in self._records})
        self._user_index = {u: i for i, u in enumerate(self._users)}

        starts = [to_minutes(r.assoc_time) for r in self._records]
        ends = [s + r.duration for s, r in zip(starts, self._records)]
        users = [self._user_index[r.user_id] for r in self._records]

        by_ap: dict[str, list[int]] = {}
        for i, record in enumerate(self._records):
            by_ap.setdefault(record.ap_name, []).append(i)
        self._ap_index = {
            ap: _ApIndex(rows, starts, ends, users) for ap, rows in by_ap.items()
        }

    @property
    def records(self) -> list[SessionRecord]:
        return self._records

    @property
    def aps(self) -> list[str]:
        return sorted(self._ap_index)

    @property
    def users(self) -> list[str]:
        return list(self._users)

    def user_ids(self, user_names) -> np.ndarray:
        """Integer ids for the given user names; unknown names are dropped."""
        ids = [self._user_index[u] for u in user_names if u in self._user_index]
        return np.array(sorted(ids), dtype=np.int64)

    def user_name(self, user_id: int) -> str:
        return self._users[user_id]

    def connected_users(self, ap_name: str, at: datetime) -> frozenset[str]:
        """Users whose merged sessions on `ap_name` cover `at` ([start, end))."""
        index = self._ap_index.get(ap_name)
        if index is None:
            return frozenset()
        t = to_minutes(at)
        mask = (index.m_start <= t) & (t < index.m_end)
        return frozenset(self._users[u] for u in index.m_user[mask])

    def snapshot(self, at: datetime) -> ConnectionSnapshot:
        """Connected user set per AP at one instant; quiet APs are omitted."""
        connections = {}
        for ap in sorted(self._ap_index):
            users = self.connected_users(ap, at)
            if users:
                connections[ap] = users
        return ConnectionSnapshot(at, connections)

    def user_counts_at(
        self, ap_name: str, times: np.ndarray, member_ids: np.ndarray | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Distinct-user connection counts at each sample time.

        Returns (total, members); `member_ids` restricts the second count to a
        user subset (typically a class roster). Multi-device users count once
        because intervals are merged per user.
        """
        index = self._ap_index.get(ap_name)
        n = len(times)
        if index is None or index.m_start.size == 0:
            zero = np.zeros(n, dtype=np.int64)
            return zero, zero.copy()
        lo, hi = int(times.min()), int(times.max())
        window = (index.m_start <= hi) & (index.m_end > lo)
        starts, ends, users = index.m_start[window], index.m_end[window], index.m_user[window]
        cover = (starts[:, None] <= times[None, :]) & (times[None, :] < ends[:, None])
        total = cover.sum(axis=0)
        if member_ids is None or member_ids.size == 0:
            members = np.zeros(n, dtype=np.int64)
        else:
            members = cover[np.isin(users, member_ids)].sum(axis=0)
        return total, members

    def active_aps(self, lo: datetime, hi: datetime) -> list[str]:
        """APs with at least one session overlapping [lo, hi)."""
        lo_m, hi_m = to_minutes(lo), to_minutes(hi)
        out = []
        for ap in sorted(self._ap_index):
            index = self._ap_index[ap]
            if np.any((index.raw_start < hi_m) & (index.raw_end > lo_m)):
                out.append(ap)
        return out

    def sessions_overlapping(self, ap_names, lo: datetime, hi: datetime) -> list[SessionRecord]:
        """Raw (unclipped) sessions on the given APs overlapping [lo, hi)."""
        lo_m, hi_m = to_minutes(lo), to_minutes(hi)
        out: list[SessionRecord] = []
        for ap in sorted(set(ap_names)):
            index = self._ap_index.get(ap)
            if index is None:
                continue
            mask = (index.raw_start < hi_m) & (index.raw_end > lo_m)
            out.extend(self._records[r] for r in index.raw_row[mask])
        return out

    def class_window_sessions(self, event: ClassEvent, ap_names) -> list[SessionRecord]:
        """Sessions on the given APs clipped to the class window [start, end)."""
        overlapping = self.sessions_overlapping(ap_names, event.start, event.end)
        return [r.clipped(event.start, event.end) for r in overlapping]
