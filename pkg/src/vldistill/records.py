"""Canonical record types for every pipeline stage, plus JSONL I/O.

All on-disk interchange is line-delimited JSON: one object per line,
UTF-8, keys in declaration order. Ids are caller-supplied strings so
re-running curation can never silently shift identities.
"""
from __future__ import annotations

import dataclasses
import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Optional, Type, Union

_SHA256_RE = re.compile(r"^[0-9a-f]{64}$")

SOURCES = ("laion", "vflan")


class RecordError(Exception):
    """Base class for record-level failures."""


class MalformedLine(RecordError):
    def __init__(self, line_no: int, reason: str = "not a JSON object"):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class MissingField(RecordError):
    def __init__(self, line_no: int, field_name: str):
        self.line_no = line_no
        self.field = field_name
        super().__init__(f"line {line_no}: missing field {field_name!r}")


class DuplicateId(RecordError):
    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"duplicate id {record_id!r}")


class InvariantViolation(RecordError):
    def __init__(self, index: int, reason: str):
        self.index = index
        self.reason = reason
        super().__init__(f"record {index}: {reason}")


@dataclass
class Provenance:
    model_id: str
    prompt_id: str
    timestamp_utc: str
    raw_digest: str


@dataclass
class ImageMeta:
    id: str
    url: str
    width: int
    height: int
    alt_caption: str
    local_path: Optional[str] = None
    content_sha256: Optional[str] = None


@dataclass
class VflanItem:
    id: str
    image_ref: str
    category: str
    question: str
    gt_answer: str


@dataclass
class CaptionRecord:
    id: str
    image_ref: str
    caption: str
    source: str
    provenance: Provenance


@dataclass
class InstructRecord:
    id: str
    image_ref: str
    question: str
    answer: str
    source: str
    flags: list = field(default_factory=list)
    candidate_questions: Optional[list] = None
    provenance: Optional[Provenance] = None


Record = Union[ImageMeta, VflanItem, CaptionRecord, InstructRecord]

MANIFEST_TYPES = {"laion": ImageMeta, "vflan": VflanItem}


def _validate_provenance(p, prefix: str) -> list:
    out = []
    if p is None:
        out.append(f"{prefix} missing")
        return out
    if not p.model_id:
        out.append(f"{prefix}.model_id empty")
    if not _SHA256_RE.match(p.raw_digest or ""):
        out.append(f"{prefix}.raw_digest not 64 lowercase hex chars")
    return out


def validate_record(record: Record) -> list:
    """Return every violated invariant (empty list means ok)."""
    v = []
    if isinstance(record, ImageMeta):
        if not record.id:
            v.append("id empty")
        if record.width < 1:
            v.append("width < 1")
        if record.height < 1:
            v.append("height < 1")
        if (record.local_path is None) != (record.content_sha256 is None):
            v.append("content_sha256 present iff local_path present")
        if record.content_sha256 is not None and not _SHA256_RE.match(record.content_sha256):
            v.append("content_sha256 not 64 lowercase hex chars")
    elif isinstance(record, VflanItem):
        if not record.id:
            v.append("id empty")
        if not record.category:
            v.append("category empty")
        if not record.question:
            v.append("question empty")
    elif isinstance(record, CaptionRecord):
        if not record.id:
            v.append("id empty")
        if not record.caption:
            v.append("caption empty")
        if record.source not in SOURCES:
            v.append(f"unknown source {record.source!r}")
        v.extend(_validate_provenance(record.provenance, "provenance"))
    elif isinstance(record, InstructRecord):
        if not record.id:
            v.append("id empty")
        if not record.question:
            v.append("question empty")
        if not record.answer:
            v.append("answer empty")
        if record.source not in SOURCES:
            v.append(f"unknown source {record.source!r}")
        if record.source == "vflan" and record.candidate_questions is not None:
            v.append("candidate_questions present for vflan")
        v.extend(_validate_provenance(record.provenance, "provenance"))
    else:
        v.append(f"unknown record type {type(record).__name__}")
    return v


def to_json_dict(record: Record) -> dict:
    """Plain dict with keys in field-declaration order; None fields omitted."""
    out = {}
    for f in dataclasses.fields(record):
        value = getattr(record, f.name)
        if value is None:
            continue
        if isinstance(value, Provenance):
            value = dataclasses.asdict(value)
        out[f.name] = value
    return out


def from_json_dict(cls: Type[Record], obj: dict, line_no: int = 0) -> Record:
    kwargs = {}
    for f in dataclasses.fields(cls):
        required = (
            f.default is dataclasses.MISSING
            and f.default_factory is dataclasses.MISSING
        )
        if f.name not in obj:
            if required:
                raise MissingField(line_no, f.name)
            continue
        value = obj[f.name]
        if f.name == "provenance" and isinstance(value, dict):
            value = Provenance(**value)
        kwargs[f.name] = value
    return cls(**kwargs)


def load_records(cls: Type[Record], path: str) -> list:
    """Load a JSONL file of `cls` rows, preserving order.

    Raises MalformedLine / MissingField / DuplicateId; valid rows are
    never reordered or dropped.
    """
    out = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(line_no, str(exc)) from exc
            if not isinstance(obj, dict):
                raise MalformedLine(line_no)
            rec = from_json_dict(cls, obj, line_no)
            rid = getattr(rec, "id", None)
            if rid is not None:
                if rid in seen:
                    raise DuplicateId(rid)
                seen.add(rid)
            out.append(rec)
    return out


def load_manifest(kind: str, path: str) -> list:
    """Load a source manifest: kind "laion" -> ImageMeta, "vflan" -> VflanItem."""
    if kind not in MANIFEST_TYPES:
        raise ValueError(f"unknown manifest kind {kind!r}")
    return load_records(MANIFEST_TYPES[kind], path)


def write_records(records: Iterable[Record], path: str) -> int:
    """Write records as JSONL, atomically (temp file + rename). Returns count.

    Every record is validated first; the file is never partially written.
    """
    records = list(records)
    seen = set()
    for i, rec in enumerate(records):
        violations = validate_record(rec)
        if violations:
            raise InvariantViolation(i, violations[0])
        rid = getattr(rec, "id", None)
        if rid is not None:
            if rid in seen:
                raise InvariantViolation(i, f"duplicate id {rid!r}")
            seen.add(rid)

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(to_json_dict(rec), ensure_ascii=False))
                fh.write("\n")
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(records)
