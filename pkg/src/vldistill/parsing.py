"""Parse tag-delimited distillation responses into structured sections.

Strict mode demands the exact response grammar: every section's open and
close tag, in order, exactly once, with a nonempty body. Lenient mode
tolerates the drift real model output shows (tag case, a missing final
close tag, surrounding markdown fences); every tolerance applied is
itemized in `repairs` so a corpus stays auditable.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from typing import Optional

from .records import CaptionRecord, ImageMeta, InstructRecord, Provenance, VflanItem

FLAG_REFUSAL = "refusal_suspected"
FLAG_QUESTION_NOT_IN_CANDIDATES = "question_not_in_candidates"
FLAG_CANDIDATE_COUNT_MISMATCH = "candidate_count_mismatch"

EXPECTED_CANDIDATES = 5

# Ordered section names per source kind; tags are <start of X> / <end of X>.
GRAMMARS = {
    "laion": ("description", "candidate questions", "question", "answer"),
    "vflan": ("description", "detailed answer"),
}


class ParseError(Exception):
    def __init__(self, tag: str, message: str):
        self.tag = tag
        super().__init__(message)


class MissingTag(ParseError):
    def __init__(self, tag: str):
        super().__init__(tag, f"missing tag <{tag}>")


class DuplicateTag(ParseError):
    def __init__(self, tag: str):
        super().__init__(tag, f"duplicate tag <{tag}>")


class OutOfOrderTag(ParseError):
    def __init__(self, tag: str):
        super().__init__(tag, f"tag <{tag}> out of order")


class EmptySection(ParseError):
    def __init__(self, section: str):
        super().__init__(section, f"empty section {section!r}")


@dataclass
class ParsedDistillation:
    caption: str
    answer: str
    candidate_questions: Optional[list] = None
    question: Optional[str] = None
    repairs: list = field(default_factory=list)
    flags: list = field(default_factory=list)


def _find_all(haystack: str, needle: str, ignore_case: bool) -> list:
    pattern = re.escape(needle)
    flags = re.IGNORECASE if ignore_case else 0
    return [m.start() for m in re.finditer(pattern, haystack, flags)]


_FENCE_RE = re.compile(r"\A\s*```[a-zA-Z]*\n(.*)\n```\s*\Z", re.DOTALL)


def parse_response(text: str, kind: str, mode: str = "strict") -> ParsedDistillation:
    """Split a raw response into its grammar sections.

    Raises MissingTag / DuplicateTag / OutOfOrderTag / EmptySection; never
    anything else, for any input bytes.
    """
    if kind not in GRAMMARS:
        raise ValueError(f"unknown kind {kind!r}")
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown mode {mode!r}")
    if not isinstance(text, str):
        raise TypeError("text must be str")
    lenient = mode == "lenient"
    repairs = []

    if lenient:
        m = _FENCE_RE.match(text)
        if m:
            text = m.group(1)
            repairs.append("stripped markdown fence")

    sections = GRAMMARS[kind]
    bodies = {}
    cursor = -1
    last = len(sections) - 1
    for i, name in enumerate(sections):
        open_tag = f"<start of {name}>"
        close_tag = f"<end of {name}>"
        opens = _find_all(text, open_tag, lenient)
        closes = _find_all(text, close_tag, lenient)
        if len(opens) > 1:
            raise DuplicateTag(f"start of {name}")
        if len(closes) > 1:
            raise DuplicateTag(f"end of {name}")
        if not opens:
            raise MissingTag(f"start of {name}")
        if not closes:
            if lenient and i == last:
                closes = [len(text)]
                repairs.append(f"unterminated {name}")
            else:
                raise MissingTag(f"end of {name}")
        start, end = opens[0], closes[0]
        if start <= cursor:
            raise OutOfOrderTag(f"start of {name}")
        if end <= start:
            raise OutOfOrderTag(f"end of {name}")
        body = text[start + len(open_tag):end].strip()
        if lenient and text[start:start + len(open_tag)] != open_tag:
            repairs.append(f"tag case normalized for {name}")
        if not body:
            raise EmptySection(name)
        bodies[name] = body
        cursor = end

    if kind == "laion":
        return ParsedDistillation(
            caption=bodies["description"],
            candidate_questions=split_candidates(bodies["candidate questions"]),
            question=bodies["question"],
            answer=bodies["answer"],
            repairs=repairs,
        )
    return ParsedDistillation(
        caption=bodies["description"],
        answer=bodies["detailed answer"],
        repairs=repairs,
    )


_MARKER_RE = re.compile(r"^\s*(?:\d+\s*[.)]|[-*])\s*")


def split_candidates(section: str) -> list:
    """One candidate per nonempty line, enumeration markers stripped."""
    out = []
    for line in section.splitlines():
        line = _MARKER_RE.sub("", line).strip()
        if line:
            out.append(line)
    return out


def default_refusal_patterns() -> list:
    return load_refusal_patterns(
        resources.files("vldistill.resources").joinpath("refusal_patterns.txt")
    )


def load_refusal_patterns(path) -> list:
    out = []
    text = path.read_text(encoding="utf-8") if hasattr(path, "read_text") else \
        open(path, encoding="utf-8").read()
    for line in text.splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            out.append(line)
    return out


def _normalize(q: str) -> str:
    q = re.sub(r"\s+", " ", q.strip().lower())
    return q.rstrip(".?!,:;")


def validate_parsed(p: ParsedDistillation, kind: str,
                    refusal_patterns: list | None = None) -> ParsedDistillation:
    """Attach QC flags. Flags never reject a record; export filters decide."""
    patterns = refusal_patterns if refusal_patterns is not None else default_refusal_patterns()
    flags = list(p.flags)

    if kind == "laion":
        candidates = p.candidate_questions or []
        if len(candidates) != EXPECTED_CANDIDATES:
            flags.append(FLAG_CANDIDATE_COUNT_MISMATCH)
        if p.question is not None:
            q = _normalize(p.question)
            matched = any(
                q == c or q in c or c in q
                for c in (_normalize(c) for c in candidates)
            )
            if not matched:
                flags.append(FLAG_QUESTION_NOT_IN_CANDIDATES)

    answer = p.answer.lower()
    if any(pat in answer for pat in patterns):
        flags.append(FLAG_REFUSAL)

    p.flags = flags
    return p


def render_response(p: ParsedDistillation, kind: str) -> str:
    """Inverse of parse_response: re-assemble the tagged response text."""
    if kind == "laion":
        candidates = "\n".join(
            f"{i}. {c}" for i, c in enumerate(p.candidate_questions or [], start=1)
        )
        parts = [
            ("description", p.caption),
            ("candidate questions", candidates),
            ("question", p.question or ""),
            ("answer", p.answer),
        ]
    else:
        parts = [("description", p.caption), ("detailed answer", p.answer)]
    return "\n".join(
        f"<start of {name}>\n{body}\n<end of {name}>" for name, body in parts
    )


def make_provenance(model_id: str, prompt_id: str, raw_digest: str,
                    timestamp_utc: str | None = None) -> Provenance:
    ts = timestamp_utc or datetime.now(timezone.utc).isoformat()
    return Provenance(model_id=model_id, prompt_id=prompt_id,
                      timestamp_utc=ts, raw_digest=raw_digest)


def to_records(p: ParsedDistillation, item, provenance: Provenance):
    """Assemble the caption/instruct record pair for one parsed exchange.

    For vflan the instruct question is the item's ORIGINAL question; the
    model only regenerates the answer.
    """
    if isinstance(item, ImageMeta):
        source = "laion"
        image_ref = item.local_path or item.url
        question = p.question or ""
        candidates = p.candidate_questions
    elif isinstance(item, VflanItem):
        source = "vflan"
        image_ref = item.image_ref
        question = item.question
        candidates = None
    else:
        raise TypeError(f"unsupported item type {type(item).__name__}")

    caption = CaptionRecord(
        id=item.id, image_ref=image_ref, caption=p.caption,
        source=source, provenance=provenance,
    )
    instruct = InstructRecord(
        id=item.id, image_ref=image_ref, question=question, answer=p.answer,
        source=source, flags=list(p.flags), candidate_questions=candidates,
        provenance=provenance,
    )
    return caption, instruct
