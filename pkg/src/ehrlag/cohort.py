"""Patient event streams, cohort eligibility and gold standards.

Events are kept per patient as parallel numpy arrays (time, channel, value)
rather than one object per event; cohorts routinely hold millions of rows.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import io
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

logger = logging.getLogger(__name__)

EVENT_HEADER = ("patient_id", "time_seconds", "channel", "value")
GOLD_HEADER = ("drug", "lab", "direction")


class Channel(enum.IntEnum):
    """Event channel. The integer order breaks ties between co-timed events."""

    LAB = 0
    TARGET_DRUG = 1
    OTHER_DRUG = 2
    ADMISSION = 3


class IngestError(ValueError):
    """Raised when an event or gold-standard file fails validation.

    ``problems`` holds ``(line_number, message)`` pairs; line numbers are
    1-based and count the header.
    """

    def __init__(self, path, problems):
        self.path = str(path)
        self.problems = list(problems)
        lines = "; ".join(f"line {n}: {msg}" for n, msg in self.problems[:20])
        more = "" if len(self.problems) <= 20 else f" (+{len(self.problems) - 20} more)"
        super().__init__(f"{self.path}: {lines}{more}")


@dataclass(frozen=True)
class Event:
    patient_id: str
    time: float
    channel: Channel
    value: float | None = None


@dataclass(frozen=True, eq=False)
class PatientEvents:
    """All events of one patient, sorted by (time, channel).

    ``value`` is NaN for non-LAB rows.
    """

    patient_id: str
    time: np.ndarray
    channel: np.ndarray
    value: np.ndarray

    def __len__(self):
        return len(self.time)

    def count(self, channel: Channel) -> int:
        return int(np.count_nonzero(self.channel == channel))

    def select(self, *channels: Channel) -> tuple[np.ndarray, np.ndarray]:
        mask = np.isin(self.channel, [int(c) for c in channels])
        return self.time[mask], self.value[mask]

    def events(self) -> list[Event]:
        return [
            Event(self.patient_id, float(t), Channel(int(c)), None if math.isnan(v) else float(v))
            for t, c, v in zip(self.time, self.channel, self.value)
        ]

    def __eq__(self, other):
        if not isinstance(other, PatientEvents):
            return NotImplemented
        return (
            self.patient_id == other.patient_id
            and np.array_equal(self.time, other.time)
            and np.array_equal(self.channel, other.channel)
            and np.array_equal(self.value, other.value, equal_nan=True)
        )

    @classmethod
    def from_events(cls, patient_id: str, events: Iterable[Event]) -> "PatientEvents":
        events = list(events)
        t = np.array([e.time for e in events], dtype=float)
        c = np.array([int(e.channel) for e in events], dtype=np.int8)
        v = np.array([np.nan if e.value is None else e.value for e in events], dtype=float)
        order = np.lexsort((c, t))
        return cls(patient_id, t[order], c[order], v[order])


@dataclass(frozen=True)
class CohortCandidate:
    """Ingested but not yet eligibility-filtered event lists."""

    patients: Mapping[str, PatientEvents]
    source: str = ""

    @property
    def n_events(self) -> int:
        return sum(len(p) for p in self.patients.values())


@dataclass(frozen=True)
class EligibilityCounts:
    retained: int
    dropped: int


@dataclass(frozen=True)
class Cohort:
    pair_id: tuple[str, str]
    patients: Mapping[str, PatientEvents]
    provenance: str = ""
    eligibility: EligibilityCounts | None = field(default=None, compare=False)

    @property
    def patient_ids(self) -> list[str]:
        return list(self.patients)

    def __len__(self):
        return len(self.patients)

    def digest(self) -> str:
        """SHA-256 of the canonical event serialization plus the pair id."""
        h = hashlib.sha256()
        h.update(f"{self.pair_id[0]}\x1f{self.pair_id[1]}\n".encode())
        h.update(serialize_events(self.patients).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class GoldStandard:
    entries: Mapping[tuple[str, str], int]
    label: str = ""

    def __len__(self):
        return len(self.entries)

    def counts(self) -> dict[int, int]:
        vals = list(self.entries.values())
        return {d: vals.count(d) for d in (1, -1, 0)}


# --------------------------------------------------------------------------
# event files


def _format_number(x: float) -> str:
    if float(x).is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(float(x))


def _parse_events(lines: Iterable[str], path) -> CohortCandidate:
    reader = csv.reader(lines)
    problems: list[tuple[int, str]] = []
    header = next(reader, None)
    if header is None:
        return CohortCandidate({}, str(path))
    if tuple(h.strip() for h in header) != EVENT_HEADER:
        raise IngestError(path, [(1, f"expected header {','.join(EVENT_HEADER)}, got {','.join(header)}")])

    rows: dict[str, list[tuple[float, int, float, int]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 4:
            problems.append((lineno, f"expected 4 fields, got {len(row)}"))
            continue
        pid, t_raw, ch_raw, v_raw = (cell.strip() for cell in row)
        if not pid:
            problems.append((lineno, "empty patient_id"))
            continue
        try:
            channel = Channel[ch_raw]
        except KeyError:
            problems.append((lineno, f"unknown channel {ch_raw!r}"))
            continue
        try:
            t = float(t_raw)
        except ValueError:
            problems.append((lineno, f"bad time {t_raw!r}"))
            continue
        if not math.isfinite(t):
            problems.append((lineno, f"non-finite time {t_raw!r}"))
            continue
        if channel is Channel.LAB:
            try:
                v = float(v_raw)
            except ValueError:
                problems.append((lineno, f"bad lab value {v_raw!r}"))
                continue
            if not math.isfinite(v):
                problems.append((lineno, f"non-finite lab value {v_raw!r}"))
                continue
        else:
            if v_raw:
                problems.append((lineno, f"{channel.name} rows carry no value, got {v_raw!r}"))
                continue
            v = math.nan
        rows.setdefault(pid, []).append((t, int(channel), v, lineno))

    patients: dict[str, PatientEvents] = {}
    for pid in sorted(rows):
        recs = sorted(rows[pid], key=lambda r: (r[0], r[1], r[3]))
        for prev, cur in zip(recs, recs[1:]):
            if prev[0] != cur[0] or prev[1] != cur[1]:
                continue
            same_value = (math.isnan(prev[2]) and math.isnan(cur[2])) or prev[2] == cur[2]
            if same_value:
                problems.append((cur[3], f"duplicate of line {prev[3]}"))
            elif cur[1] == Channel.LAB:
                problems.append((cur[3], f"conflicting co-timed LAB value (line {prev[3]})"))
        t = np.array([r[0] for r in recs], dtype=float)
        c = np.array([r[1] for r in recs], dtype=np.int8)
        v = np.array([r[2] for r in recs], dtype=float)
        patients[pid] = PatientEvents(pid, t, c, v)

    if problems:
        problems.sort()
        raise IngestError(path, problems)
    return CohortCandidate(patients, str(path))


def ingest_events(path) -> CohortCandidate:
    """Read an event file into per-patient sorted event arrays.

    Raises
    ------
    IngestError
        Listing every offending line (unknown channel, non-finite lab value,
        duplicated row, ...).
    OSError
        If the file cannot be read.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        candidate = _parse_events(fh, path)
    logger.info("ingested %d patients / %d events from %s",
                len(candidate.patients), candidate.n_events, path)
    return candidate


def parse_events(text: str, source: str = "<string>") -> CohortCandidate:
    return _parse_events(io.StringIO(text), source)


def serialize_events(patients: Mapping[str, PatientEvents]) -> str:
    """Canonical event-file text: patients sorted by id, rows by (time, channel)."""
    out = [",".join(EVENT_HEADER)]
    for pid in sorted(patients):
        p = patients[pid]
        for t, c, v in zip(p.time, p.channel, p.value):
            val = "" if math.isnan(v) else _format_number(v)
            out.append(f"{pid},{_format_number(t)},{Channel(int(c)).name},{val}")
    return "\n".join(out) + "\n"


def write_events(path, patients: Mapping[str, PatientEvents]) -> None:
    Path(path).write_text(serialize_events(patients))


# --------------------------------------------------------------------------
# eligibility


def is_eligible(p: PatientEvents) -> bool:
    n_lab = p.count(Channel.LAB)
    n_target = p.count(Channel.TARGET_DRUG)
    n_other = p.count(Channel.OTHER_DRUG)
    return n_lab >= 2 and n_target >= 1 and (n_lab + n_target + n_other) > 30


def filter_eligible(candidate: CohortCandidate | Cohort, pair_id=("", ""), provenance: str = "") -> Cohort:
    """Keep patients with >=2 labs, >=1 target order and >30 lab + drug-order events.

    Admission events do not count toward the >30 rule.
    """
    if isinstance(candidate, Cohort):
        pair_id = candidate.pair_id
        provenance = provenance or candidate.provenance
    else:
        provenance = provenance or candidate.source
    kept = {pid: p for pid, p in candidate.patients.items() if is_eligible(p)}
    counts = EligibilityCounts(len(kept), len(candidate.patients) - len(kept))
    logger.info("eligibility %s/%s: retained %d, dropped %d",
                pair_id[0], pair_id[1], counts.retained, counts.dropped)
    return Cohort(tuple(pair_id), kept, provenance, counts)


# --------------------------------------------------------------------------
# gold standards


def _parse_gold(lines: Iterable[str], path, label: str) -> GoldStandard:
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != GOLD_HEADER:
        raise IngestError(path, [(1, f"expected header {','.join(GOLD_HEADER)}")])
    entries: dict[tuple[str, str], int] = {}
    seen: dict[tuple[str, str], int] = {}
    problems = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 3:
            problems.append((lineno, f"expected 3 fields, got {len(row)}"))
            continue
        drug, lab, d = (cell.strip() for cell in row)
        if d not in ("-1", "0", "1"):
            problems.append((lineno, f"direction must be -1, 0 or 1, got {d!r}"))
            continue
        key = (drug, lab)
        if key in seen:
            problems.append((lineno, f"duplicate pair {drug}/{lab} (line {seen[key]})"))
            continue
        seen[key] = lineno
        entries[key] = int(d)
    if problems:
        raise IngestError(path, problems)
    return GoldStandard(entries, label)


def load_gold_standard(path, label: str | None = None) -> GoldStandard:
    path = Path(path)
    with path.open(newline="") as fh:
        gold = _parse_gold(fh, path, label if label is not None else path.stem)
    logger.info("gold standard %s: %d entries", gold.label, len(gold))
    return gold


def write_gold_standard(path, gold: GoldStandard) -> None:
    lines = [",".join(GOLD_HEADER)]
    lines += [f"{d},{l},{v}" for (d, l), v in gold.entries.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def shipped_gold_standard(which: str) -> GoldStandard:
    """The two gold standards of drug effects on labs, shipped as package data.

    ``which`` is ``"knowledge-base"`` or ``"expert"``.
    """
    files = {"knowledge-base": "gold_knowledge_base.csv", "kb": "gold_knowledge_base.csv",
             "expert": "gold_expert.csv"}
    name = files[which]
    label = "kb" if name.startswith("gold_knowledge") else "expert"
    text = resources.files("ehrlag.data").joinpath(name).read_text()
    return _parse_gold(io.StringIO(text), name, label)
