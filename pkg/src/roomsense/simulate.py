"""Synthetic campus generator with planted ground truth.

Behavioral rather than radio-physical: device-to-AP attachment is sampled
from configured probabilities. The generator plants every connection pattern
the estimator must cope with: multi-device users, session churn with short
gaps, occupants sticking to corridor APs near doorways, occupants attached
into adjacent rooms, passersby, long-dwell corridor workers, students using
idle rooms, enrolled no-shows lingering nearby or appearing across campus,
and occupants who never touch WiFi.
"""
from __future__ import annotations

import csv
import math
import os
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta

from .records import (
    INVENTORY_COLUMNS,
    ROSTER_COLUMNS,
    SESSION_COLUMNS,
    TIMETABLE_COLUMNS,
    ApInventory,
    ApLocation,
    ClassEvent,
    ConfigError,
    format_minutes,
    to_minutes,
)

SEMESTER_START = datetime(2025, 3, 3)  # a Monday
DAY_START_MIN = 9 * 60
DAY_END_MIN = 21 * 60


@dataclass
class SimConfig:
    seed: int = 42
    weeks: int = 10
    days_per_week: int = 5
    room_capacities: tuple = (42, 42, 110, 231, 246, 472, 497)
    room_ap_counts: tuple | None = None  # derived from capacity when None
    corner_ap_fraction: float = 0.15
    corner_ap_weight: float = 0.3
    corridor_aps_per_room: int = 1
    walkway_ap_count: int = 8
    classes_per_room_per_week: int = 3
    duration_weights: dict = field(
        default_factory=lambda: {60: 0.46, 90: 0.02, 120: 0.45, 150: 0.01, 180: 0.05, 240: 0.01}
    )
    enrollment_ratio: tuple = (0.75, 1.05)
    attendance_ratio: tuple = (0.3, 0.9)
    non_connect_prob: float = 0.18
    device_count_weights: dict = field(default_factory=lambda: {1: 0.55, 2: 0.35, 3: 0.10})
    churn_prob_per_10min: float = 0.22
    churn_gap_minutes: tuple = (0, 4)
    sticky_ap_prob: float = 0.6
    cross_room_attach_prob: float = 0.015
    near_room_attach_prob: float = 0.12
    arrival_mean: float = 8.0
    arrival_sd: float = 12.0
    early_arrival_limit: int = 15
    depart_sd: float = 4.0
    rssi_in_mean: float = 59.4
    rssi_in_sd: float = 6.0
    rssi_out_mean: float = 66.4
    rssi_out_sd: float = 6.0
    bystander_rate_per_hour: float = 10.0
    walkway_bystander_rate_per_hour: float = 8.0
    bystander_dwell_mean: float = 5.0
    bystander_in_room_prob: float = 0.15
    lingerer_prob: float = 0.35
    remote_prob: float = 0.12
    ambient_per_corridor_ap: float = 2.0  # mean concurrent long-dwell users per corridor AP
    ambient_per_walkway_ap: float = 2.0
    idle_room_users_per_ap: float = 1.5  # mean concurrent studiers per AP while a room is idle
    walkin_prob: float = 0.0
    report_hour: int = 21

    def validate(self) -> None:
        if not self.room_capacities:
            raise ConfigError("at least one room is required")
        if self.weeks < 1 or self.days_per_week < 1 or self.classes_per_room_per_week < 1:
            raise ConfigError("weeks, days and classes per room must be positive")
        probs = (
            self.non_connect_prob,
            self.cross_room_attach_prob,
            self.near_room_attach_prob,
            self.sticky_ap_prob,
            self.bystander_in_room_prob,
            self.lingerer_prob,
            self.remote_prob,
            self.walkin_prob,
            self.corner_ap_fraction,
        )
        if any(p < 0 or p > 1 for p in probs):
            raise ConfigError("probabilities must lie in [0, 1]")
        if abs(sum(self.duration_weights.values()) - 1.0) > 1e-9:
            raise ConfigError("duration weights must sum to 1")
        if abs(sum(self.device_count_weights.values()) - 1.0) > 1e-9:
            raise ConfigError("device count weights must sum to 1")


@dataclass
class Room:
    room_id: str
    building: str
    floor: int
    capacity: int
    aps: list[str]
    corner_aps: frozenset[str]
    corridor_aps: list[str]


@dataclass
class Campus:
    rooms: list[Room]
    inventory: ApInventory
    events: list[ClassEvent]
    rosters: dict[str, frozenset[str]]
    population: list[str]
    walkway_aps: list[str]


@dataclass
class GroundTruth:
    """Planted truth: who actually attended each class."""

    attendees: dict[str, frozenset[str]]
    non_connecting: dict[str, frozenset[str]]

    def count(self, class_id: str) -> int:
        return len(self.attendees[class_id])


def _weighted_choice(rng: random.Random, weights: dict):
    r = rng.random()
    acc = 0.0
    keys = sorted(weights)
    for key in keys:
        acc += weights[key]
        if r < acc:
            return key
    return keys[-1]


def _poisson(rng: random.Random, lam: float) -> int:
    if lam <= 0:
        return 0
    threshold = math.exp(-lam)
    k, p = 0, 1.0
    while True:
        p *= rng.random()
        if p <= threshold:
            return k
        k += 1


def generate_campus(config: SimConfig) -> Campus:
    """Rooms, APs, courses, rosters and a clash-free timetable, all seeded."""
    config.validate()
    rng = random.Random(config.seed)
    buildings = [f"bld{chr(ord('A') + i)}" for i in range((len(config.room_capacities) + 1) // 2)]

    rooms: list[Room] = []
    locations: dict[str, ApLocation] = {}
    for i, capacity in enumerate(config.room_capacities):
        room_id = f"room{i + 1}"
        building = buildings[i // 2]
        floor = i % 2 + 1
        if config.room_ap_counts is not None:
            ap_count = config.room_ap_counts[i]
        else:
            ap_count = max(3, math.ceil(capacity / 45))
        aps = [f"{room_id}-ap{j + 1:02d}" for j in range(ap_count)]
        n_corner = round(config.corner_ap_fraction * ap_count)
        corner = frozenset(aps[-n_corner:]) if n_corner else frozenset()
        corridor = [f"{building}-f{floor}-cor{j + 1}" for j in range(config.corridor_aps_per_room)]
        for ap in aps:
            locations[ap] = ApLocation(room_id, building, floor)
        for ap in corridor:
            locations[ap] = ApLocation(None, building, floor)
        rooms.append(Room(room_id, building, floor, capacity, aps, corner, corridor))

    walkways = [f"wk{j + 1:02d}" for j in range(config.walkway_ap_count)]
    for ap in walkways:
        locations[ap] = ApLocation(None, "campus", 0)

    slots = sum(config.room_capacities) * config.classes_per_room_per_week
    pop_size = max(2 * max(config.room_capacities), int(0.45 * slots))
    population = [f"u{i:05d}" for i in range(pop_size)]

    events: list[ClassEvent] = []
    rosters: dict[str, frozenset[str]] = {}
    for room in rooms:
        taken: list[tuple[int, int, int]] = []  # (weekday, start_min, end_min)
        for course_no in range(config.classes_per_room_per_week):
            for _ in range(200):
                weekday = rng.randrange(config.days_per_week)
                duration = _weighted_choice(rng, config.duration_weights)
                latest = DAY_END_MIN - duration
                start_min = rng.randrange(DAY_START_MIN // 60, latest // 60 + 1) * 60
                end_min = start_min + duration
                clash = any(
                    wd == weekday and start_min < e and end_min > s for wd, s, e in taken
                )
                if not clash:
                    taken.append((weekday, start_min, end_min))
                    break
            else:
                raise ConfigError(f"could not timetable {room.room_id} without clashes")
            size = max(2, round(rng.uniform(*config.enrollment_ratio) * room.capacity))
            roster = frozenset(rng.sample(population, min(size, len(population))))
            course_id = f"{room.room_id}c{course_no + 1}"
            for week in range(config.weeks):
                date = SEMESTER_START + timedelta(days=7 * week + weekday)
                start = date + timedelta(minutes=start_min)
                end = date + timedelta(minutes=end_min)
                class_id = f"{course_id}-w{week + 1:02d}"
                events.append(ClassEvent(class_id, room.room_id, start, end))
                rosters[class_id] = roster

    events.sort(key=lambda e: (e.start, e.room_id))
    return Campus(rooms, ApInventory(locations), events, rosters, population, walkways)


class _Emitter:
    """Collects raw sessions and cuts them at the daily report time."""

    def __init__(self, config: SimConfig, rng: random.Random):
        self.config = config
        self.rng = rng
        self.rows: list[tuple] = []

    def emit(self, user: str, device: int, ap: str, start: int, end: int, in_room: bool):
        report = (start // 1440) * 1440 + self.config.report_hour * 60
        if start >= report:
            return
        ongoing = end > report
        end = min(end, report)
        if end <= start:
            return
        cfg = self.config
        mean = cfg.rssi_in_mean if in_room else cfg.rssi_out_mean
        sd = cfg.rssi_in_sd if in_room else cfg.rssi_out_sd
        rssi = -round(min(95.0, max(30.0, self.rng.gauss(mean, sd))))
        snr = round(min(60.0, max(5.0, self.rng.gauss(32.0, 6.0))))
        minutes = end - start
        bytes_tx = self.rng.randint(1000, 5000) * max(1, minutes)
        bytes_rcvd = self.rng.randint(2000, 9000) * max(1, minutes)
        self.rows.append((start, user, device, ap, end, ongoing, rssi, snr, bytes_tx, bytes_rcvd))


def _device_mac(user: str, device: int) -> str:
    idx = int(user[1:])
    return f"02:00:{(idx >> 16) & 0xFF:02x}:{(idx >> 8) & 0xFF:02x}:{idx & 0xFF:02x}:{device:02x}"


def _presence_sessions(rng, config, t0: int, t1: int) -> list[tuple[int, int]]:
    """Churned connection segments covering a presence interval."""
    if t1 - t0 < 1:
        return []
    segments = []
    t = t0
    while t < t1:
        if config.churn_prob_per_10min <= 0:
            segments.append((t, t1))
            break
        mean_len = 10.0 / config.churn_prob_per_10min
        length = max(3, round(rng.expovariate(1.0 / mean_len)))
        end = min(t1, t + length)
        if end > t:
            segments.append((t, end))
        t = end + rng.randint(*config.churn_gap_minutes)
    return segments


def _pick_attendee_ap(rng, config, room: Room, rooms: list[Room], prev: str | None) -> str:
    if prev is not None and rng.random() < config.sticky_ap_prob:
        return prev
    r = rng.random()
    if r < config.cross_room_attach_prob and len(rooms) > 1:
        neighbours = [x for x in rooms if x.building == room.building and x.room_id != room.room_id]
        if not neighbours:
            neighbours = [x for x in rooms if x.room_id != room.room_id]
        other = neighbours[rng.randrange(len(neighbours))]
        return other.aps[rng.randrange(len(other.aps))]
    if r < config.cross_room_attach_prob + config.near_room_attach_prob:
        return room.corridor_aps[rng.randrange(len(room.corridor_aps))]
    weights = {ap: (config.corner_ap_weight if ap in room.corner_aps else 1.0) for ap in room.aps}
    total = sum(weights.values())
    return _weighted_choice(rng, {ap: w / total for ap, w in weights.items()})


def _free_user(rng, population, today_windows, t0: int, t1: int) -> str:
    """A user not enrolled in any class running during [t0, t1).

    Keeps background traffic physically consistent: someone attending (or due
    to attend) a class cannot simultaneously idle elsewhere on campus.
    """
    user = population[rng.randrange(len(population))]
    for _ in range(10):
        busy = any(s < t1 and e > t0 and user in roster for s, e, roster in today_windows)
        if not busy:
            return user
        user = population[rng.randrange(len(population))]
    return user


def simulate_sessions(campus: Campus, config: SimConfig) -> tuple[list[tuple], GroundTruth]:
    """Emit session-log rows (time-sorted tuples) plus the planted ground truth."""
    config.validate()
    rng = random.Random(config.seed + 1)
    emitter = _Emitter(config, rng)
    rooms_by_id = {r.room_id: r for r in campus.rooms}

    attendees: dict[str, frozenset[str]] = {}
    non_connecting: dict[str, frozenset[str]] = {}

    all_days = sorted({e.date for e in campus.events})
    events_by_day: dict[datetime, list[ClassEvent]] = {}
    for event in campus.events:
        events_by_day.setdefault(event.date, []).append(event)

    for day in all_days:
        midnight = to_minutes(day)
        day_lo, day_hi = midnight + DAY_START_MIN, midnight + DAY_END_MIN
        todays = sorted(events_by_day[day], key=lambda e: (e.room_id, e.start))
        today_windows = [
            (to_minutes(e.start), to_minutes(e.end), campus.rosters[e.class_id]) for e in todays
        ]

        for event in todays:
            room = rooms_by_id[event.room_id]
            roster = sorted(campus.rosters[event.class_id])
            start, end = to_minutes(event.start), to_minutes(event.end)
            duration = end - start

            ratio = rng.uniform(*config.attendance_ratio)
            going = rng.sample(roster, max(1, round(ratio * len(roster))))
            if config.walkin_prob > 0:
                extras = round(config.walkin_prob * len(going))
                outsiders = [u for u in campus.population if u not in campus.rosters[event.class_id]]
                going.extend(rng.sample(outsiders, min(extras, len(outsiders))))
            silent: set[str] = set()
            for user in sorted(going):
                if rng.random() < config.non_connect_prob:
                    silent.add(user)
                    continue
                offset = rng.gauss(config.arrival_mean, config.arrival_sd)
                offset = max(-config.early_arrival_limit, min(duration - 15, offset))
                arrive = start + round(offset)
                depart = max(arrive + 10, end + round(rng.gauss(0.0, config.depart_sd)))
                n_devices = _weighted_choice(rng, config.device_count_weights)
                for device in range(n_devices):
                    dev_start = arrive if device == 0 else min(depart - 5, arrive + rng.randint(0, 40))
                    prev = None
                    for s, e in _presence_sessions(rng, config, dev_start, depart):
                        ap = _pick_attendee_ap(rng, config, room, campus.rooms, prev)
                        prev = ap
                        emitter.emit(user, device, ap, s, e, in_room=ap in room.aps)

            attendees[event.class_id] = frozenset(going)
            non_connecting[event.class_id] = frozenset(silent)

            for user in sorted(set(roster) - set(going)):
                r = rng.random()
                if r < config.lingerer_prob:
                    win_lo = max(day_lo, start - 45)
                    win_hi = min(day_hi, end + 45)
                    for _ in range(rng.randint(1, 2)):
                        s = rng.randint(win_lo, max(win_lo, win_hi - 10))
                        e = min(win_hi, s + rng.randint(4, 14))
                        if rng.random() < 0.8:
                            ap = room.corridor_aps[rng.randrange(len(room.corridor_aps))]
                        else:
                            ap = room.aps[rng.randrange(len(room.aps))]
                        emitter.emit(user, 0, ap, s, e, in_room=False)
                elif r < config.lingerer_prob + config.remote_prob:
                    far_corridors = sorted(
                        x.corridor_aps[0]
                        for x in campus.rooms
                        if x.room_id != room.room_id and x.corridor_aps
                    )
                    if rng.random() < 0.6 or not far_corridors:
                        ap = campus.walkway_aps[rng.randrange(len(campus.walkway_aps))]
                    else:
                        ap = far_corridors[rng.randrange(len(far_corridors))]
                    s = rng.randint(day_lo, day_hi - 25)
                    e = min(day_hi, s + rng.randint(20, 120))
                    emitter.emit(user, 0, ap, s, e, in_room=False)

        # non-class traffic: short passersby plus a steady ambient population
        # of long-dwell users (staff, students between classes) per spot
        floor_spots = [
            (room.building, room.floor, room.corridor_aps, room,
             config.bystander_rate_per_hour, config.ambient_per_corridor_ap)
            for room in campus.rooms
        ]
        for ap in campus.walkway_aps:
            floor_spots.append(
                ("campus", 0, [ap], None,
                 config.walkway_bystander_rate_per_hour, config.ambient_per_walkway_ap)
            )
        for building, floor, corridor_aps, room, rate, ambient in sorted(
            floor_spots, key=lambda f: (f[0], f[1], f[2])
        ):
            n_pass = _poisson(rng, rate * (DAY_END_MIN - DAY_START_MIN) / 60)
            for _ in range(n_pass):
                t = rng.randint(day_lo, day_hi - 2)
                dwell = max(1, round(rng.expovariate(1.0 / config.bystander_dwell_mean)))
                user = _free_user(rng, campus.population, today_windows, t, t + dwell)
                if room is not None and rng.random() < config.bystander_in_room_prob:
                    ap = room.aps[rng.randrange(len(room.aps))]
                else:
                    ap = corridor_aps[rng.randrange(len(corridor_aps))]
                emitter.emit(user, 0, ap, t, t + dwell, in_room=False)
            target = ambient * len(corridor_aps)
            arrivals = [day_lo] * _poisson(rng, target)
            arrivals += [
                rng.randint(day_lo, day_hi - 30)
                for _ in range(_poisson(rng, target * 60 / 112 * (day_hi - day_lo) / 60))
            ]
            for t in sorted(arrivals):
                e = min(day_hi, t + rng.randint(45, 180))
                user = _free_user(rng, campus.population, today_windows, t, e)
                prev = None
                for s, seg_e in _presence_sessions(rng, config, t, e):
                    if prev is None or rng.random() > 0.6:
                        prev = corridor_aps[rng.randrange(len(corridor_aps))]
                    emitter.emit(user, 0, prev, s, seg_e, in_room=False)

        # students using rooms while idle
        for room in sorted(campus.rooms, key=lambda r: r.room_id):
            busy = sorted(
                (to_minutes(e.start), to_minutes(e.end))
                for e in todays
                if e.room_id == room.room_id
            )
            idle: list[tuple[int, int]] = []
            cursor = day_lo
            for s, e in busy:
                if s > cursor:
                    idle.append((cursor, s))
                cursor = max(cursor, e)
            if cursor < day_hi:
                idle.append((cursor, day_hi))
            # target a steady per-AP concurrency: an initial batch present when the
            # window opens plus Poisson arrivals balancing the ~112 min mean dwell
            target = config.idle_room_users_per_ap * len(room.aps)
            for win_lo, win_hi in idle:
                if win_hi - win_lo < 15:
                    continue
                hours = (win_hi - win_lo) / 60
                arrivals = [win_lo] * _poisson(rng, target)
                arrivals += [
                    rng.randint(win_lo, max(win_lo, win_hi - 10))
                    for _ in range(_poisson(rng, target * 60 / 112 * hours))
                ]
                for t in arrivals:
                    e = min(win_hi, t + rng.randint(45, 180))
                    user = _free_user(rng, campus.population, today_windows, t, e)
                    ap = room.aps[rng.randrange(len(room.aps))]
                    emitter.emit(user, 0, ap, t, e, in_room=True)

    emitter.rows.sort(key=lambda row: (row[0], row[1], row[2], row[3], row[4]))
    return emitter.rows, GroundTruth(attendees, non_connecting)


def write_sessions_csv(path, rows, delimiter: str = ",") -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, delimiter=delimiter)
        writer.writerow(SESSION_COLUMNS)
        for start, user, device, ap, end, ongoing, rssi, snr, tx, rcvd in rows:
            writer.writerow(
                [
                    user,
                    _device_mac(user, device),
                    format_minutes(start),
                    "-" if ongoing else format_minutes(end),
                    f"{end - start} min",
                    ap,
                    tx,
                    rcvd,
                    snr,
                    rssi,
                    "Ass" if ongoing else "Disass",
                ]
            )


def write_timetable_csv(path, events: list[ClassEvent], delimiter: str = ",") -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, delimiter=delimiter)
        writer.writerow(TIMETABLE_COLUMNS)
        for event in events:
            writer.writerow(
                [
                    event.class_id,
                    event.room_id,
                    event.start.strftime("%d/%m/%Y"),
                    event.start.strftime("%H:%M"),
                    event.end.strftime("%H:%M"),
                ]
            )


def write_roster_csv(path, rosters: dict[str, frozenset[str]], delimiter: str = ",") -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, delimiter=delimiter)
        writer.writerow(ROSTER_COLUMNS)
        for class_id in sorted(rosters):
            for user in sorted(rosters[class_id]):
                writer.writerow([class_id, user])


def write_inventory_csv(path, inventory: ApInventory, delimiter: str = ",") -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, delimiter=delimiter)
        writer.writerow(INVENTORY_COLUMNS)
        for ap in inventory:
            loc = inventory.location(ap)
            writer.writerow([ap, loc.room_id or "corridor", loc.building, loc.floor])


def write_ground_truth(users_path, counts_path, campus: Campus, truth: GroundTruth, delimiter=","):
    with open(users_path, "w", newline="") as handle:
        writer = csv.writer(handle, delimiter=delimiter)
        writer.writerow(["class_id", "user_id", "occupant"])
        for class_id in sorted(truth.attendees):
            present = truth.attendees[class_id]
            for user in sorted(campus.rosters[class_id] | present):
                writer.writerow([class_id, user, 1 if user in present else 0])
    with open(counts_path, "w", newline="") as handle:
        writer = csv.writer(handle, delimiter=delimiter)
        writer.writerow(["class_id", "true_count"])
        for class_id in sorted(truth.attendees):
            writer.writerow([class_id, truth.count(class_id)])


def load_ground_truth_counts(path, delimiter: str = ",") -> dict[str, int]:
    counts: dict[str, int] = {}
    with open(path, newline="") as handle:
        rows = csv.reader(handle, delimiter=delimiter)
        header = next(rows, None)
        for fields in rows:
            if len(fields) >= 2 and fields[0].strip():
                counts[fields[0].strip()] = int(fields[1])
    return counts


def simulate_corpus(config: SimConfig, out_dir) -> tuple[Campus, GroundTruth]:
    """Generate a campus and write the full corpus file set into `out_dir`."""
    campus = generate_campus(config)
    rows, truth = simulate_sessions(campus, config)
    os.makedirs(out_dir, exist_ok=True)
    write_sessions_csv(os.path.join(out_dir, "sessions.csv"), rows)
    write_timetable_csv(os.path.join(out_dir, "timetable.csv"), campus.events)
    write_roster_csv(os.path.join(out_dir, "roster.csv"), campus.rosters)
    write_inventory_csv(os.path.join(out_dir, "inventory.csv"), campus.inventory)
    write_ground_truth(
        os.path.join(out_dir, "ground_truth_users.csv"),
        os.path.join(out_dir, "ground_truth_counts.csv"),
        campus,
        truth,
    )
    return campus, truth
