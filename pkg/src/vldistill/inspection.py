"""Manual-inspection protocol: stratified sampling over task categories,
the direct-answer vs caption-then-answer ablation harness, and accuracy
tallying over human verdicts.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

from . import parsing
from .distill import STATUS_OK, LvlmClient, distill_one
from .prompts import ablation_prompt, ablation_prompt_id
from .ratelimit import RetryPolicy
from .rng import Xoshiro256StarStar

MODE_GT = "vflan_gt"
MODE_DIRECT = "direct_answer"
MODE_CAPTION = "caption_then_answer"
MODES = (MODE_GT, MODE_DIRECT, MODE_CAPTION)

VERDICTS = ("correct", "incorrect", "unsure", "ungraded")


class InspectionError(Exception):
    pass


class NotEnoughItems(InspectionError):
    pass


class NoGradedRecords(InspectionError):
    def __init__(self, mode: str):
        self.mode = mode
        super().__init__(f"no graded records for mode {mode!r}")


@dataclass
class InspectionRecord:
    sample_id: str
    mode: str
    answer_text: str
    verdict: str = "ungraded"
    inspector: str = ""
    graded_at: str = ""
    prompt_id: str = ""
    note: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "InspectionRecord":
        return cls(**json.loads(line))


@dataclass
class ModeAccuracy:
    graded: int
    correct: int
    accuracy_pct: float


@dataclass
class AccuracyReport:
    per_mode: dict
    excluded_unsure: int


def sample_stratified(items: list, n: int = 100, seed: int = 0) -> list:
    """Pick n item ids spread uniformly across categories.

    Each category's quota is n / #categories with largest-remainder
    rounding (ties by category name); categories smaller than their quota
    contribute everything and the shortfall is redistributed by the same
    rule. Within a category the draw is seeded uniform without
    replacement. Returns min(n, total) ids, deterministic per seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not items:
        raise NotEnoughItems("no items")
    by_cat: dict = {}
    for item in items:
        by_cat.setdefault(item.category, []).append(item)
    total = len(items)
    if total < n:
        raise NotEnoughItems(f"{total} items for n={n}")

    quotas = {c: 0 for c in by_cat}
    open_cats = sorted(by_cat)
    remaining = n
    while remaining > 0 and open_cats:
        share = remaining / len(open_cats)
        base = int(share)
        residue = remaining - base * len(open_cats)
        # Equal shares make every remainder tie; ties go by category name.
        alloc = {c: base + (1 if i < residue else 0)
                 for i, c in enumerate(open_cats)}
        remaining = 0
        next_open = []
        for c in open_cats:
            capacity = len(by_cat[c]) - quotas[c]
            take = min(alloc[c], capacity)
            quotas[c] += take
            remaining += alloc[c] - take
            if quotas[c] < len(by_cat[c]):
                next_open.append(c)
        open_cats = next_open

    rng = Xoshiro256StarStar(seed)
    chosen = []
    for c in sorted(by_cat):
        if quotas[c]:
            chosen.extend(item.id for item in rng.sample(by_cat[c], quotas[c]))
    return chosen


def run_ablation(client: LvlmClient, samples: list, modes,
                 policy: RetryPolicy | None = None) -> list:
    """One ungraded InspectionRecord per (sample, mode).

    vflan_gt copies the ground-truth answer with no request. Generation
    modes go through the endpoint and the response parser; a failed
    request or parse yields answer_text="" with a note, never an abort.
    """
    modes = list(modes)
    unknown = set(modes) - set(MODES)
    if unknown:
        raise ValueError(f"unknown modes {sorted(unknown)}")
    policy = policy or RetryPolicy()
    ordered = [m for m in MODES if m in modes]

    records = []
    for item in samples:
        for mode in ordered:
            if mode == MODE_GT:
                records.append(InspectionRecord(
                    sample_id=item.id, mode=mode, answer_text=item.gt_answer))
                continue
            prompt = ablation_prompt(mode, item.question)
            prompt_id = ablation_prompt_id(mode)
            exchange = distill_one(client, item.id, item.image_ref, prompt,
                                   policy, prompt_id)
            answer, note = "", ""
            if exchange.status != STATUS_OK:
                note = f"request failed after {exchange.attempts} attempts"
            else:
                try:
                    answer = _extract_answer(exchange.response_text, mode)
                except parsing.ParseError as exc:
                    note = f"parse failed: {exc}"
            records.append(InspectionRecord(
                sample_id=item.id, mode=mode, answer_text=answer,
                prompt_id=prompt_id, note=note))
    return records


def _extract_answer(text: str, mode: str) -> str:
    if mode == MODE_CAPTION:
        return parsing.parse_response(text, "vflan", mode="lenient").answer
    # Direct template: the response carries only the detailed-answer block.
    open_tag = "<start of detailed answer>"
    close_tag = "<end of detailed answer>"
    start = text.find(open_tag)
    if start < 0:
        raise parsing.MissingTag("start of detailed answer")
    end = text.find(close_tag, start)
    body = text[start + len(open_tag):end if end >= 0 else len(text)].strip()
    if not body:
        raise parsing.EmptySection("detailed answer")
    return body


def append_records(records: list, path: str) -> int:
    with open(path, "a", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json())
            fh.write("\n")
    return len(records)


def load_inspection_records(path: str) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(InspectionRecord.from_json(line))
    return out


def grade_record(record: InspectionRecord, verdict: str,
                 inspector: str) -> InspectionRecord:
    if verdict not in ("correct", "incorrect", "unsure"):
        raise ValueError(f"invalid verdict {verdict!r}")
    if not inspector:
        raise ValueError("inspector required for a graded record")
    record.verdict = verdict
    record.inspector = inspector
    record.graded_at = datetime.now(timezone.utc).isoformat()
    return record


def tally_accuracy(records: list, include_unsure: bool = False) -> AccuracyReport:
    """Accuracy per mode over graded records.

    unsure verdicts are excluded from the denominator unless
    include_unsure, in which case they count as incorrect. Ungraded
    records never affect the tally.
    """
    per_mode: dict = {}
    excluded_unsure = 0
    modes_seen = []
    for r in records:
        if r.mode not in modes_seen:
            modes_seen.append(r.mode)
        if r.verdict == "ungraded":
            continue
        correct, graded = per_mode.get(r.mode, (0, 0))
        if r.verdict == "unsure":
            if include_unsure:
                graded += 1
            else:
                excluded_unsure += 1
        else:
            graded += 1
            if r.verdict == "correct":
                correct += 1
        per_mode[r.mode] = (correct, graded)

    report = {}
    for mode in modes_seen:
        correct, graded = per_mode.get(mode, (0, 0))
        if graded == 0:
            raise NoGradedRecords(mode)
        # multiply first: integer-valued percentages come out exact
        report[mode] = ModeAccuracy(graded=graded, correct=correct,
                                    accuracy_pct=correct * 100.0 / graded)
    return AccuracyReport(per_mode=report, excluded_unsure=excluded_unsure)
