"""Interaction-event ingestion: parse, validate, label, iterate.

The external log format is newline-delimited CSV with fields
``user_id,exercise_id,workbook_id,timestamp_ms,score`` (header optional,
detected by a non-numeric timestamp field). Dropout labels never appear
in files; they are derived from the log structure.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from studysim.errors import DuplicateEvent, InconsistentWorkbook, MalformedRecord
from studysim.persist import atomic_write_text

_ID_PATTERN = re.compile(r"[A-Za-z0-9_-]+\Z")

LOG_HEADER = "user_id,exercise_id,workbook_id,timestamp_ms,score"


@dataclass(frozen=True)
class InteractionEvent:
    """One exercise submission; dropout is a derived label, not input data."""

    user_id: str
    exercise_id: str
    workbook_id: str
    timestamp_ms: int
    score: int
    dropout: int = 0


@dataclass
class EventLog:
    """Globally timestamp-sorted events plus per-user and per-workbook indexes."""

    events: list[InteractionEvent] = field(default_factory=list)
    user_index: dict[str, list[int]] = field(default_factory=dict)
    workbook_index: dict[str, set[str]] = field(default_factory=dict)
    malformed_lines: int = 0

    def __len__(self) -> int:
        return len(self.events)

    @property
    def user_ids(self) -> list[str]:
        return sorted(self.user_index)

    def user_events(self, user_id: str) -> list[InteractionEvent]:
        return [self.events[i] for i in self.user_index.get(user_id, [])]


def _build_log(events: list[InteractionEvent], malformed: int = 0) -> EventLog:
    # Stable sort on timestamp keeps input order on ties, which also
    # yields per-user chronological order.
    indexed = sorted(enumerate(events), key=lambda pair: (pair[1].timestamp_ms, pair[0]))
    ordered = [ev for _, ev in indexed]
    log = EventLog(events=ordered, malformed_lines=malformed)
    for pos, ev in enumerate(ordered):
        log.user_index.setdefault(ev.user_id, []).append(pos)
        log.workbook_index.setdefault(ev.workbook_id, set()).add(ev.exercise_id)
    return log


def _parse_line(line: str, line_no: int) -> InteractionEvent | None:
    fields = line.split(",")
    if len(fields) != 5:
        raise MalformedRecord(f"line {line_no}: expected 5 fields, got {len(fields)}")
    user_id, exercise_id, workbook_id, ts_text, score_text = (f.strip() for f in fields)
    if line_no == 1 and not ts_text.lstrip("-").isdigit():
        return None  # header line
    for name, token in (("user_id", user_id), ("exercise_id", exercise_id),
                        ("workbook_id", workbook_id)):
        if not _ID_PATTERN.match(token):
            raise MalformedRecord(f"line {line_no}: invalid {name} {token!r}")
    try:
        timestamp = int(ts_text)
    except ValueError:
        raise MalformedRecord(f"line {line_no}: timestamp {ts_text!r} is not an integer")
    if score_text not in ("0", "1"):
        raise MalformedRecord(f"line {line_no}: score {score_text!r} not in {{0, 1}}")
    return InteractionEvent(user_id, exercise_id, workbook_id, timestamp, int(score_text))


def parse_log(source, strict: bool = True) -> EventLog:
    """Parse an event log from a path, bytes, or text/byte stream.

    Strict mode rejects the whole ingest on the first malformed or
    duplicate record; lenient mode skips and counts them. An exercise
    appearing under two workbooks is an error in both modes.
    """
    if isinstance(source, (str, Path)):
        with open(source, "rb") as handle:
            return parse_log(handle, strict=strict)
    if isinstance(source, bytes):
        return parse_log(io.BytesIO(source), strict=strict)

    events: list[InteractionEvent] = []
    malformed = 0
    seen: set[tuple[str, str, int]] = set()
    exercise_workbook: dict[str, str] = {}
    for line_no, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line:
            continue
        try:
            event = _parse_line(line, line_no)
        except MalformedRecord:
            if strict:
                raise
            malformed += 1
            continue
        if event is None:
            continue
        key = (event.user_id, event.exercise_id, event.timestamp_ms)
        if key in seen:
            if strict:
                raise DuplicateEvent(f"line {line_no}: duplicate event {key}")
            malformed += 1
            continue
        seen.add(key)
        known_wb = exercise_workbook.setdefault(event.exercise_id, event.workbook_id)
        if known_wb != event.workbook_id:
            raise InconsistentWorkbook(
                f"line {line_no}: exercise {event.exercise_id!r} in workbooks "
                f"{known_wb!r} and {event.workbook_id!r}"
            )
        events.append(event)
    return _build_log(events, malformed)


def derive_dropout_labels(log: EventLog, gap_threshold_ms: int | None = None,
                          workbook_sizes: Mapping[str, int] | None = None) -> EventLog:
    """Label each user's final event dropout=1 iff their last-touched workbook
    has exercises the user never answered.

    ``workbook_sizes`` gives the true exercise count per workbook; missing
    entries fall back to the count observed in the log. ``gap_threshold_ms``
    is accepted for a future session-based rule and is unused here.
    """
    del gap_threshold_ms
    sizes = dict(workbook_sizes) if workbook_sizes else {}
    labeled = list(log.events)
    for user_id, positions in log.user_index.items():
        last_pos = positions[-1]
        last_event = log.events[last_pos]
        wb = last_event.workbook_id
        answered = {log.events[p].exercise_id for p in positions
                    if log.events[p].workbook_id == wb}
        wb_size = sizes.get(wb, len(log.workbook_index[wb]))
        dropped = 1 if len(answered) < wb_size else 0
        for pos in positions:
            wanted = dropped if pos == last_pos else 0
            if labeled[pos].dropout != wanted:
                labeled[pos] = replace(labeled[pos], dropout=wanted)
    out = EventLog(events=labeled, malformed_lines=log.malformed_lines)
    out.user_index = {u: list(p) for u, p in log.user_index.items()}
    out.workbook_index = {w: set(s) for w, s in log.workbook_index.items()}
    return out


def chronological_stream(log: EventLog) -> Iterator[InteractionEvent]:
    """Events in global timestamp order (stable on ties)."""
    return iter(log.events)


def write_log(log_or_events: EventLog | Iterable[InteractionEvent],
              path: str | Path) -> None:
    """Serialize to the external log format (header included, no labels)."""
    events = log_or_events.events if isinstance(log_or_events, EventLog) else list(log_or_events)
    lines = [LOG_HEADER]
    lines.extend(
        f"{ev.user_id},{ev.exercise_id},{ev.workbook_id},{ev.timestamp_ms},{ev.score}"
        for ev in events
    )
    atomic_write_text(path, "\n".join(lines) + "\n")
