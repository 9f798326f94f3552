"""Study-level evidence, the treatment network and dataset ingestion."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence, TextIO

FIELDS = ("study_id", "treat_base", "treat_exp", "y1", "se1", "y2", "se2", "rho_w")


class DataValidationError(ValueError):
    """Raised when study data fail validation."""


class DisconnectedNetworkError(DataValidationError):
    def __init__(self, components: Sequence[Sequence[str]]):
        self.components = [list(c) for c in components]
        parts = "; ".join("{" + ", ".join(c) + "}" for c in self.components)
        super().__init__(f"disconnected network: components {parts}")


Contrast = tuple[str, str]


def contrast_key(a: str, b: str) -> Contrast:
    """Canonical (lexicographic) key of the unordered pair ``{a, b}``."""
    return (a, b) if a < b else (b, a)


def contrast_label(c: Contrast) -> str:
    return f"{c[0]}:{c[1]}"


@dataclass(frozen=True)
class StudyRecord:
    """One two-arm study: effects are (experimental - baseline) on both outcomes."""

    study_id: str
    treat_base: str
    treat_exp: str
    y1: float
    se1: float
    y2: float | None
    se2: float | None
    rho_w: float

    def __post_init__(self):
        if not self.study_id:
            raise DataValidationError("empty study_id")
        if self.treat_base == self.treat_exp:
            raise DataValidationError(
                f"study {self.study_id}: treat_base equals treat_exp ({self.treat_base})"
            )
        for name in ("y1", "se1", "rho_w"):
            v = getattr(self, name)
            if v is None or not math.isfinite(v):
                raise DataValidationError(f"study {self.study_id}: {name} must be finite")
        if self.se1 <= 0:
            raise DataValidationError(f"study {self.study_id}: se1 must be > 0")
        if (self.y2 is None) != (self.se2 is None):
            raise DataValidationError(
                f"study {self.study_id}: y2 and se2 must be both present or both missing"
            )
        if self.y2 is not None:
            if not (math.isfinite(self.y2) and math.isfinite(self.se2)):
                raise DataValidationError(f"study {self.study_id}: y2/se2 must be finite")
            if self.se2 <= 0:
                raise DataValidationError(f"study {self.study_id}: se2 must be > 0")
        if abs(self.rho_w) > 1:
            raise DataValidationError(f"study {self.study_id}: |rho_w| must be <= 1")

    @property
    def has_final(self) -> bool:
        return self.y2 is not None

    @property
    def contrast(self) -> Contrast:
        return contrast_key(self.treat_base, self.treat_exp)

    @property
    def orientation(self) -> int:
        """+1 if the study is stored in canonical orientation, -1 otherwise."""
        return 1 if (self.treat_base, self.treat_exp) == self.contrast else -1

    def without_final(self) -> "StudyRecord":
        return replace(self, y2=None, se2=None)


@dataclass(frozen=True)
class Network:
    treatments: tuple[str, ...]
    contrasts: tuple[Contrast, ...]
    study_index: Mapping[Contrast, tuple[str, ...]] = field(compare=False)

    @property
    def reference(self) -> str:
        return self.treatments[0]

    @property
    def n_treatments(self) -> int:
        return len(self.treatments)

    def index(self, treatment: str) -> int:
        return self.treatments.index(treatment)


def _components(nodes: Iterable[str], edges: Iterable[Contrast]) -> list[list[str]]:
    adj: dict[str, set[str]] = defaultdict(set)
    nodes = sorted(set(nodes))
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen: set[str] = set()
    comps = []
    for n in nodes:
        if n in seen:
            continue
        stack, comp = [n], []
        seen.add(n)
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def build_network(studies: Sequence[StudyRecord], reference: str | None = None) -> Network:
    """Derive the treatment network; the reference treatment is placed first.

    Remaining treatments are ordered lexicographically, so the result does not
    depend on study order.
    """
    if not studies:
        raise DataValidationError("no studies")
    labels = sorted({s.treat_base for s in studies} | {s.treat_exp for s in studies})
    if reference is None:
        reference = labels[0]
    elif reference not in labels:
        raise DataValidationError(f"reference treatment {reference!r} not among {labels}")
    index: dict[Contrast, list[str]] = defaultdict(list)
    for s in studies:
        index[s.contrast].append(s.study_id)
    contrasts = tuple(sorted(index))
    comps = _components(labels, contrasts)
    if len(comps) > 1:
        raise DisconnectedNetworkError(comps)
    treatments = (reference,) + tuple(t for t in labels if t != reference)
    return Network(
        treatments=treatments,
        contrasts=contrasts,
        study_index={c: tuple(index[c]) for c in contrasts},
    )


@dataclass(frozen=True)
class Dataset:
    studies: tuple[StudyRecord, ...]
    network: Network

    def __post_init__(self):
        ids = [s.study_id for s in self.studies]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise DataValidationError(f"duplicate study_id: {', '.join(dup)}")
        n_both = sum(s.has_final for s in self.studies)
        if n_both < 2:
            raise DataValidationError(
                f"need at least 2 studies with both outcomes observed, got {n_both}"
            )

    @classmethod
    def from_studies(
        cls, studies: Iterable[StudyRecord], reference: str | None = None
    ) -> "Dataset":
        studies = tuple(studies)
        return cls(studies, build_network(studies, reference))

    def __len__(self) -> int:
        return len(self.studies)

    def study(self, study_id: str) -> StudyRecord:
        for s in self.studies:
            if s.study_id == study_id:
                return s
        raise KeyError(study_id)

    def position(self, study_id: str) -> int:
        for i, s in enumerate(self.studies):
            if s.study_id == study_id:
                return i
        raise KeyError(study_id)

    def with_final_missing(self, study_id: str) -> "Dataset":
        """Copy with one study's final-outcome estimate removed (y1 kept)."""
        pos = self.position(study_id)
        studies = list(self.studies)
        studies[pos] = studies[pos].without_final()
        return Dataset(tuple(studies), self.network)

    def filter(self, keep) -> "Dataset":
        """Subset by predicate; the network is rebuilt with the same reference."""
        studies = tuple(s for s in self.studies if keep(s))
        ref = self.network.reference
        labels = {s.treat_base for s in studies} | {s.treat_exp for s in studies}
        return Dataset.from_studies(studies, ref if ref in labels else None)

    def content_hash(self) -> str:
        return hashlib.sha256(serialize_dataset(self, "csv").encode()).hexdigest()


def _parse_float(value, row: int, name: str, *, optional: bool = False) -> float | None:
    if value is None or (isinstance(value, str) and value.strip() == ""):
        if optional:
            return None
        raise DataValidationError(f"row {row}: field {name} is missing")
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise DataValidationError(f"row {row}: field {name} is not a number: {value!r}") from None
    if not math.isfinite(out):
        raise DataValidationError(f"row {row}: field {name} is not finite")
    return out


def _record_from_mapping(rec: Mapping, row: int) -> StudyRecord:
    missing = [f for f in FIELDS if f not in rec]
    if missing:
        raise DataValidationError(f"row {row}: missing field(s) {', '.join(missing)}")
    sid = rec["study_id"]
    base, exp = rec["treat_base"], rec["treat_exp"]
    for name, v in (("study_id", sid), ("treat_base", base), ("treat_exp", exp)):
        if v is None or str(v).strip() == "":
            raise DataValidationError(f"row {row}: field {name} is empty")
    values = {
        "y1": _parse_float(rec["y1"], row, "y1"),
        "se1": _parse_float(rec["se1"], row, "se1"),
        "y2": _parse_float(rec["y2"], row, "y2", optional=True),
        "se2": _parse_float(rec["se2"], row, "se2", optional=True),
        "rho_w": _parse_float(rec["rho_w"], row, "rho_w"),
    }
    if values["se1"] <= 0:
        raise DataValidationError(f"row {row}: field se1 must be > 0")
    if values["se2"] is not None and values["se2"] <= 0:
        raise DataValidationError(f"row {row}: field se2 must be > 0")
    if abs(values["rho_w"]) > 1:
        raise DataValidationError(f"row {row}: field rho_w must lie in [-1, 1]")
    try:
        return StudyRecord(str(sid).strip(), str(base).strip(), str(exp).strip(), **values)
    except DataValidationError as e:
        raise DataValidationError(f"row {row}: {e}") from None


def parse_dataset(
    source: TextIO | str, format: str = "csv", reference: str | None = None
) -> Dataset:
    """Read a dataset from CSV or JSON text.

    ``source`` is a text stream or a string holding the content. CSV lines
    starting with ``#`` are treated as comments. Row numbers in error messages
    are 1-based data rows.
    """
    text = source if isinstance(source, str) else source.read()
    if format == "csv":
        lines = [ln for ln in text.splitlines() if not ln.lstrip().startswith("#")]
        reader = csv.DictReader(lines)
        if reader.fieldnames is None:
            raise DataValidationError("empty CSV: header row required")
        absent = [f for f in FIELDS if f not in reader.fieldnames]
        if absent:
            raise DataValidationError(f"CSV header missing column(s) {', '.join(absent)}")
        rows = list(reader)
    elif format == "json":
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as e:
            raise DataValidationError(f"invalid JSON: {e}") from None
        if not isinstance(rows, list) or not all(isinstance(r, dict) for r in rows):
            raise DataValidationError("JSON dataset must be an array of objects")
    else:
        raise ValueError(f"unknown format {format!r}")
    studies = [_record_from_mapping(r, i + 1) for i, r in enumerate(rows)]
    seen: dict[str, int] = {}
    for i, s in enumerate(studies):
        if s.study_id in seen:
            raise DataValidationError(
                f"row {i + 1}: duplicate study_id {s.study_id!r} (first at row {seen[s.study_id]})"
            )
        seen[s.study_id] = i + 1
    return Dataset.from_studies(studies, reference)


def read_dataset(path: str, reference: str | None = None) -> Dataset:
    fmt = "json" if str(path).lower().endswith(".json") else "csv"
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh, fmt, reference)


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def serialize_dataset(dataset: Dataset, format: str = "csv") -> str:
    """Inverse of :func:`parse_dataset` (floats written with full precision)."""
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(FIELDS)
        for s in dataset.studies:
            w.writerow(
                [s.study_id, s.treat_base, s.treat_exp, _fmt(s.y1), _fmt(s.se1),
                 _fmt(s.y2), _fmt(s.se2), _fmt(s.rho_w)]
            )
        return buf.getvalue()
    if format == "json":
        return json.dumps([{f: getattr(s, f) for f in FIELDS} for s in dataset.studies], indent=1)
    raise ValueError(f"unknown format {format!r}")
