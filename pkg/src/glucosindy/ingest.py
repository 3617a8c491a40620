"""Patient data ingestion.

The interchange format is a long CSV with header ``timestamp,channel,value``;
one row per glucose sample, basal rate change, bolus or meal. Timestamps are
RFC 3339 and ``channel`` is one of ``glucose``, ``basal``, ``bolus``, ``meal``.
"""

from __future__ import annotations

import csv
import io
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence
from zoneinfo import ZoneInfo

CHANNELS = ("glucose", "basal", "bolus", "meal")
CSV_HEADER = ("timestamp", "channel", "value")


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class EventList:
    """Impulse doses: insulin units for ``bolus``, carbohydrate grams for ``meal``."""

    kind: str
    events: tuple = ()

    def __post_init__(self):
        if self.kind not in ("bolus", "meal"):
            raise ValueError(f"unknown event kind {self.kind!r}")
        events = tuple((t, float(d)) for t, d in self.events)
        for (t0, _), (t1, _) in zip(events, events[1:]):
            if not t1 > t0:
                raise ValueError(f"{self.kind} timestamps must be strictly increasing ({t0} then {t1})")
        for t, d in events:
            if not (d > 0 and math.isfinite(d)):
                raise ValueError(f"{self.kind} dose at {t} must be positive and finite, got {d}")
        object.__setattr__(self, "events", events)

    def __len__(self) -> int:
        return len(self.events)

    def between(self, start: datetime, end: datetime) -> "EventList":
        """Events with ``start <= t < end``."""
        return EventList(self.kind, tuple(e for e in self.events if start <= e[0] < end))


@dataclass
class PatientDataset:
    patient_id: str
    glucose: list = field(default_factory=list)
    basal: list = field(default_factory=list)
    bolus: EventList = field(default_factory=lambda: EventList("bolus"))
    meals: EventList = field(default_factory=lambda: EventList("meal"))
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if not self.glucose:
            raise IngestError("dataset has no glucose samples")


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    t = datetime.fromisoformat(s)
    if t.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no UTC offset")
    return t.astimezone(timezone.utc)


def format_timestamp(t: datetime) -> str:
    t = t.astimezone(timezone.utc)
    spec = "seconds" if t.microsecond == 0 else "microseconds"
    return t.replace(tzinfo=None).isoformat(timespec=spec) + "Z"


def _build(patient_id: str, rows: Iterable[tuple[int, datetime, str, float]]) -> PatientDataset:
    seen: dict[tuple[datetime, str], int] = {}
    by_channel: dict[str, list] = {c: [] for c in CHANNELS}
    for line, t, channel, value in rows:
        key = (t, channel)
        if key in seen:
            raise IngestError(f"line {line}: duplicate {channel} at {format_timestamp(t)} "
                              f"(first seen on line {seen[key]})")
        seen[key] = line
        if channel in ("bolus", "meal") and not value > 0:
            raise IngestError(f"line {line}: {channel} dose must be positive, got {value}")
        by_channel[channel].append((t, value))
    for samples in by_channel.values():
        samples.sort(key=lambda tv: tv[0])
    return PatientDataset(patient_id, by_channel["glucose"], by_channel["basal"],
                          EventList("bolus", by_channel["bolus"]), EventList("meal", by_channel["meal"]))


def parse_events_csv(text: str, patient_id: str = "patient") -> PatientDataset:
    """Parse the ``timestamp,channel,value`` CSV. Errors carry the 1-based line number."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise IngestError(f"line 1: expected header {','.join(CSV_HEADER)!r}, got {header!r}")

    def rows():
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise IngestError(f"line {line}: expected 3 fields, got {len(row)}")
            ts, channel, value = (f.strip() for f in row)
            if channel not in CHANNELS:
                raise IngestError(f"line {line}: unknown channel {channel!r}")
            try:
                t = parse_timestamp(ts)
            except ValueError as exc:
                raise IngestError(f"line {line}: bad timestamp {ts!r} ({exc})") from None
            try:
                v = float(value)
            except ValueError:
                raise IngestError(f"line {line}: bad value {value!r}") from None
            if not math.isfinite(v):
                raise IngestError(f"line {line}: value must be finite, got {value!r}")
            yield line, t, channel, v

    return _build(patient_id, rows())


def dataset_to_csv(ds: PatientDataset) -> str:
    """Inverse of :func:`parse_events_csv`; rows sorted by (timestamp, channel)."""
    rows = [(t, "glucose", v) for t, v in ds.glucose]
    rows += [(t, "basal", v) for t, v in ds.basal]
    rows += [(t, "bolus", v) for t, v in ds.bolus.events]
    rows += [(t, "meal", v) for t, v in ds.meals.events]
    rows.sort(key=lambda r: (r[0], CHANNELS.index(r[1])))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for t, channel, v in rows:
        w.writerow((format_timestamp(t), channel, repr(float(v))))
    return buf.getvalue()


OHIO_GROUPS = {"glucose_level": "glucose", "basal": "basal", "bolus": "bolus", "meal": "meal"}
OHIO_TS_FORMAT = "%d-%m-%Y %H:%M:%S"


def parse_ohio_xml(text: str, tz: str = "UTC") -> PatientDataset:
    """Convert an OhioT1DM-style XML document.

    Uses ``glucose_level``, ``basal``, ``bolus`` and ``meal`` groups; bolus
    events are placed at ``ts_begin`` with their ``dose``, meals carry
    ``carbs``. Timestamps (``dd-mm-yyyy HH:MM:SS``) are read in zone ``tz``.
    Other groups are listed in ``warnings``.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise IngestError(f"malformed XML at line {line}, column {col}: {exc}") from None
    zone = ZoneInfo(tz)
    patient_id = root.get("id", "patient")
    if root.find("glucose_level") is None:
        raise IngestError("XML has no glucose_level group")

    def stamp(ev, attr):
        raw = ev.get(attr)
        try:
            return datetime.strptime(raw, OHIO_TS_FORMAT).replace(tzinfo=zone).astimezone(timezone.utc)
        except (TypeError, ValueError):
            raise IngestError(f"<{ev.tag}> has bad {attr}={raw!r}") from None

    def number(ev, attr):
        try:
            return float(ev.get(attr))
        except (TypeError, ValueError):
            raise IngestError(f"<{ev.tag}> has bad {attr}={ev.get(attr)!r}") from None

    rows, notes = [], []
    n = 0
    for group in root:
        channel = OHIO_GROUPS.get(group.tag)
        if channel is None:
            notes.append(f"ignored group <{group.tag}>")
            continue
        for ev in group.iter("event"):
            n += 1
            if channel == "glucose":
                t, v = stamp(ev, "ts"), number(ev, "value")
            elif channel == "basal":
                t, v = stamp(ev, "ts"), number(ev, "value")
            elif channel == "bolus":
                t, v = stamp(ev, "ts_begin"), number(ev, "dose")
            else:
                t, v = stamp(ev, "ts"), number(ev, "carbs")
            if channel in ("bolus", "meal") and v <= 0:
                notes.append(f"dropped {channel} with non-positive amount at {format_timestamp(t)}")
                continue
            rows.append((n, t, channel, v))
    ds = _build(patient_id, rows)
    ds.warnings = notes
    return ds
