"""Compose per-stage training mixtures.

Each dataset is duplicated whole per its epoch count, then the full
multiset is shuffled once globally with a seeded xoshiro256** +
Fisher-Yates shuffle, so the same spec and seed reproduce the identical
order on any platform (or in any reimplementation of the generator).
Output is lightweight refs (dataset, index, copy); materialization joins
against the source JSONL files on demand.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .rng import Xoshiro256StarStar

STAGES = ("pretrain", "finetune")


class MixError(Exception):
    pass


@dataclass
class MixEntry:
    dataset_id: str
    path: str
    count: int
    epochs: int = 1


@dataclass
class MixSpec:
    stage: str
    entries: list
    seed: int = 0

    def __post_init__(self):
        if self.stage not in STAGES:
            raise MixError(f"unknown stage {self.stage!r}")
        seen = set()
        for e in self.entries:
            if e.count <= 0:
                raise MixError(f"{e.dataset_id}: count must be > 0")
            if e.epochs < 1:
                raise MixError(f"{e.dataset_id}: epochs must be >= 1")
            if e.dataset_id in seen:
                raise MixError(f"duplicate dataset_id {e.dataset_id!r}")
            seen.add(e.dataset_id)

    @classmethod
    def from_json_file(cls, path: str) -> "MixSpec":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        entries = [MixEntry(e["dataset_id"], e.get("path", ""), e["count"],
                            e.get("epochs", 1)) for e in obj["entries"]]
        return cls(stage=obj["stage"], entries=entries, seed=obj.get("seed", 0))


@dataclass
class MixEntryRef:
    dataset_id: str
    record_index: int
    copy: int

    def to_json(self) -> str:
        return json.dumps({"dataset_id": self.dataset_id,
                           "record_index": self.record_index,
                           "copy": self.copy})


@dataclass
class MixReport:
    per_dataset: dict = field(default_factory=dict)
    total: int = 0
    expected_total: int = 0
    ok: bool = False
    problem: str = ""


def compose_mix(spec: MixSpec) -> list:
    """Seeded uniform shuffle of every (dataset, index, copy) triple.

    Output length is sum(count_i * epochs_i); each triple appears exactly
    once; the same seed yields a byte-identical order.
    """
    refs = [
        MixEntryRef(e.dataset_id, idx, copy)
        for e in spec.entries
        for copy in range(e.epochs)
        for idx in range(e.count)
    ]
    rng = Xoshiro256StarStar(spec.seed)
    rng.shuffle(refs)
    return refs


def verify_mix(refs: list, spec: MixSpec) -> MixReport:
    """Check that refs are exactly the expected multiset."""
    report = MixReport()
    report.expected_total = sum(e.count * e.epochs for e in spec.entries)
    report.total = len(refs)

    expected_by_ds = {e.dataset_id: e for e in spec.entries}
    seen = set()
    for r in refs:
        report.per_dataset[r.dataset_id] = report.per_dataset.get(r.dataset_id, 0) + 1
        e = expected_by_ds.get(r.dataset_id)
        if e is None:
            report.problem = f"unknown dataset {r.dataset_id!r}"
            return report
        if not (0 <= r.record_index < e.count and 0 <= r.copy < e.epochs):
            report.problem = f"ref out of range: {r}"
            return report
        key = (r.dataset_id, r.record_index, r.copy)
        if key in seen:
            report.problem = f"duplicate ref: {key}"
            return report
        seen.add(key)

    if report.total != report.expected_total:
        missing = report.expected_total - report.total
        report.problem = f"{missing} refs missing"
        # Name one concrete missing triple to make the failure actionable.
        for e in spec.entries:
            for copy in range(e.epochs):
                for idx in range(e.count):
                    if (e.dataset_id, idx, copy) not in seen:
                        report.problem += f"; e.g. {(e.dataset_id, idx, copy)}"
                        break
                else:
                    continue
                break
            else:
                continue
            break
        return report

    report.ok = True
    return report


def write_refs(refs: list, path: str) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for r in refs:
            fh.write(r.to_json())
            fh.write("\n")
    return len(refs)


def materialize(refs: list, spec: MixSpec, out_path: str) -> int:
    """Join refs against the source JSONL files and emit full records."""
    sources = {}
    for e in spec.entries:
        with open(e.path, encoding="utf-8") as fh:
            sources[e.dataset_id] = [line.rstrip("\n") for line in fh if line.strip()]
    written = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for r in refs:
            rows = sources[r.dataset_id]
            if r.record_index >= len(rows):
                raise MixError(
                    f"{r.dataset_id}[{r.record_index}] beyond file of {len(rows)} rows")
            fh.write(rows[r.record_index])
            fh.write("\n")
            written += 1
    return written
