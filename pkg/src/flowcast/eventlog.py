"""Event-log data model and ingestion.

An event log is a set of cases; each case is a timestamp-ordered sequence of
events carrying an activity label, a timestamp, and an arbitrary map of
string-valued event attributes.  Two on-disk formats are supported: a flat
CSV layout (``caseid, activity, time`` plus one column per attribute) and a
minimal XES subset (``<trace>``/``<event>`` elements with string and date
attributes).
"""

from __future__ import annotations

import csv
import io
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

STANDARD_ATTRIBUTES = ("caseid", "activity", "time")

# XES keys for the standard attributes.
_XES_ACTIVITY = "concept:name"
_XES_TIMESTAMP = "time:timestamp"


class LogSchemaError(ValueError):
    """A source file is structurally unusable (missing mandatory columns/keys)."""


class LogParseError(ValueError):
    """A source file has malformed content (bad timestamp, broken XML, ...)."""


@dataclass(frozen=True)
class Event:
    caseid: str
    activity: str
    time: datetime
    attrs: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Case:
    id: str
    events: tuple[Event, ...]

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class EventLog:
    cases: tuple[Case, ...]
    attribute_names: frozenset[str]

    @property
    def events(self) -> Iterable[Event]:
        for case in self.cases:
            yield from case.events

    def event_count(self) -> int:
        return sum(len(c) for c in self.cases)


@dataclass(frozen=True)
class AttributeSchema:
    """Deterministic orderings for activities, attributes, and their values.

    ``activities`` fixes the class ordering of the prediction target,
    ``attributes`` fixes the iteration order over selected event attributes,
    and ``vocab`` holds, per attribute, the ordered list of values seen in
    the training cases.  All orderings produced by :func:`build_schema` are
    lexicographic so that encoding is reproducible across runs.
    """

    activities: tuple[str, ...]
    attributes: tuple[str, ...]
    vocab: Mapping[str, tuple[str, ...]]

    def raw_width(self) -> int:
        return sum(len(self.vocab[a]) for a in self.attributes)


def _parse_timestamp(text: str) -> datetime:
    # ISO-8601; a trailing 'Z' is normalised for datetime.fromisoformat,
    # which does not accept it before Python 3.11.
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    moment = datetime.fromisoformat(raw)
    # Events carry millisecond precision; drop sub-millisecond digits so the
    # CSV writer round-trips exactly.
    return moment.replace(microsecond=(moment.microsecond // 1000) * 1000)


def _format_timestamp(moment: datetime) -> str:
    return moment.isoformat(timespec="milliseconds")


def _build_log(rows: list[Event]) -> EventLog:
    by_case: dict[str, list[Event]] = {}
    for event in rows:
        by_case.setdefault(event.caseid, []).append(event)
    cases = []
    for caseid, events in by_case.items():
        try:
            ordered = sorted(events, key=lambda e: e.time)
        except TypeError:
            raise LogParseError(
                f"case {caseid!r} mixes naive and timezone-aware timestamps"
            ) from None
        cases.append(Case(id=caseid, events=tuple(ordered)))
    names = frozenset(name for e in rows for name in e.attrs)
    return EventLog(cases=tuple(cases), attribute_names=names)


def _parse_csv(stream: IO[bytes]) -> EventLog:
    text = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise LogSchemaError("empty CSV: no header row") from None
    missing = [c for c in STANDARD_ATTRIBUTES if c not in header]
    if missing:
        raise LogSchemaError(f"CSV header is missing mandatory columns: {missing}")
    for name in header:
        if header.count(name) > 1:
            raise LogSchemaError(f"duplicate CSV column {name!r}")
    col = {name: i for i, name in enumerate(header)}
    attr_cols = [name for name in header if name not in STANDARD_ATTRIBUTES]

    rows: list[Event] = []
    for lineno, record in enumerate(reader, start=2):
        if not record:
            continue
        if len(record) != len(header):
            raise LogParseError(
                f"row {lineno}: expected {len(header)} fields, got {len(record)}"
            )
        activity = record[col["activity"]]
        if not activity:
            raise LogParseError(f"row {lineno}: empty activity label")
        try:
            moment = _parse_timestamp(record[col["time"]])
        except ValueError:
            raise LogParseError(
                f"row {lineno}: malformed timestamp {record[col['time']]!r}"
            ) from None
        attrs = {name: record[col[name]] for name in attr_cols if record[col[name]] != ""}
        rows.append(Event(caseid=record[col["caseid"]], activity=activity,
                          time=moment, attrs=attrs))
    return _build_log(rows)


def _localname(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _parse_xes(stream: IO[bytes]) -> EventLog:
    try:
        root = ET.parse(stream).getroot()
    except ET.ParseError as exc:
        raise LogParseError(f"malformed XES: {exc}") from None

    rows: list[Event] = []
    for trace in root.iter():
        if _localname(trace.tag) != "trace":
            continue
        caseid = None
        events = []
        for child in trace:
            name = _localname(child.tag)
            if name == "string" and child.get("key") == _XES_ACTIVITY:
                caseid = child.get("value")
            elif name == "event":
                events.append(child)
        if caseid is None:
            raise LogSchemaError("XES trace without a concept:name identifier")
        for element in events:
            activity = None
            moment = None
            attrs: dict[str, str] = {}
            for child in element:
                key = child.get("key")
                value = child.get("value")
                kind = _localname(child.tag)
                if kind == "date" and key == _XES_TIMESTAMP:
                    try:
                        moment = _parse_timestamp(value or "")
                    except ValueError:
                        raise LogParseError(
                            f"case {caseid!r}: malformed timestamp {value!r}"
                        ) from None
                elif kind == "string":
                    if key == _XES_ACTIVITY:
                        activity = value
                    elif key is not None and value:
                        attrs[key] = value
            if not activity:
                raise LogSchemaError(f"case {caseid!r}: event without concept:name")
            if moment is None:
                raise LogSchemaError(f"case {caseid!r}: event without time:timestamp")
            rows.append(Event(caseid=caseid, activity=activity, time=moment, attrs=attrs))
    return _build_log(rows)


def parse_log(source: str | Path | IO[bytes], format: str = "csv") -> EventLog:
    """Parse an event log from ``source`` in the given format ("csv" or "xes").

    Events are grouped by case id and sorted by ascending timestamp inside
    each case; ties keep source-file order.  Empty CSV attribute cells are
    treated as absent values.
    """
    if format not in ("csv", "xes"):
        raise ValueError(f"unknown log format {format!r}")
    if isinstance(source, (str, Path)):
        with open(source, "rb") as handle:
            return _parse_csv(handle) if format == "csv" else _parse_xes(handle)
    return _parse_csv(source) if format == "csv" else _parse_xes(source)


def write_csv(log: EventLog, sink: IO[str]) -> None:
    """Write ``log`` in the flat CSV layout accepted by :func:`parse_log`."""
    attr_cols = sorted(log.attribute_names)
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(list(STANDARD_ATTRIBUTES) + attr_cols)
    for case in log.cases:
        for event in case.events:
            row = [event.caseid, event.activity, _format_timestamp(event.time)]
            row += [event.attrs.get(name, "") for name in attr_cols]
            writer.writerow(row)


def filter_long_cases(log: EventLog, max_len: int = 100) -> EventLog:
    """Drop every case with more than ``max_len`` events."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    kept = tuple(c for c in log.cases if len(c) <= max_len)
    return EventLog(cases=kept, attribute_names=log.attribute_names)


def select_attributes(log: EventLog, usage_threshold: float = 0.04) -> list[str]:
    """Pick the event attributes worth encoding.

    An attribute qualifies when its most frequent single value occurs in
    strictly more than ``usage_threshold`` of all events and it has at least
    two distinct values.  The result is sorted lexicographically.
    """
    if not 0 < usage_threshold < 1:
        raise ValueError("usage_threshold must be in (0, 1)")
    total = log.event_count()
    if total == 0:
        return []
    counts: dict[str, dict[str, int]] = {}
    for event in log.events:
        for name, value in event.attrs.items():
            per_value = counts.setdefault(name, {})
            per_value[value] = per_value.get(value, 0) + 1
    selected = []
    for name, per_value in counts.items():
        if len(per_value) < 2:
            continue
        if max(per_value.values()) > usage_threshold * total:
            selected.append(name)
    return sorted(selected)


def build_schema(training_cases: Sequence[Case], selected: Sequence[str]) -> AttributeSchema:
    """Build the encoding schema from training cases only.

    Activity and value orderings are lexicographic; values appearing only
    outside the training cases never enter the vocabulary.
    """
    if not training_cases:
        raise ValueError("cannot build a schema from an empty training set")
    activities: set[str] = set()
    values: dict[str, set[str]] = {name: set() for name in selected}
    for case in training_cases:
        for event in case.events:
            activities.add(event.activity)
            for name in selected:
                if name in event.attrs:
                    values[name].add(event.attrs[name])
    return AttributeSchema(
        activities=tuple(sorted(activities)),
        attributes=tuple(sorted(selected)),
        vocab={name: tuple(sorted(vals)) for name, vals in values.items()},
    )


def log_from_cases(cases: Sequence[Case]) -> EventLog:
    """Assemble an :class:`EventLog` view over an existing list of cases."""
    names = frozenset(name for c in cases for e in c.events for name in e.attrs)
    return EventLog(cases=tuple(cases), attribute_names=names)
