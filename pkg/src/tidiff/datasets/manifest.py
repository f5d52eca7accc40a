"""Line-oriented dataset manifests.

A manifest is JSON Lines, one record per line with at least
{id, path, label, split, dataset, config_hash}; extra keys (lesion ground
truth, synthetic flags) ride along.  Image paths are stored relative to the
manifest file so a dataset directory is relocatable and its manifest bytes
are reproducible.
"""
from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..errors import SplitLeakError

UNASSIGNED = "unassigned"


@dataclass
class SliceRecord:
    id: str
    path: str
    label: str
    split: str = UNASSIGNED
    dataset: str = ""
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        row = {k: v for k, v in asdict(self).items() if k != "extra"}
        row.update(self.extra)
        return json.dumps(row, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "SliceRecord":
        row = json.loads(line)
        known = {k: row.pop(k) for k in ("id", "path", "label", "split", "dataset", "config_hash")}
        return cls(extra=row, **known)


@dataclass
class DatasetManifest:
    records: list[SliceRecord]
    dataset: str
    config_hash: str = ""
    root: Path | None = None  # directory paths are relative to

    def class_counts(self) -> dict[str, int]:
        return dict(Counter(r.label for r in self.records))

    def split_counts(self) -> dict[str, dict[str, int]]:
        out: dict[str, Counter] = defaultdict(Counter)
        for r in self.records:
            out[r.split][r.label] += 1
        return {s: dict(c) for s, c in out.items()}

    def subset(self, split: str | None = None, label: str | None = None) -> list[SliceRecord]:
        return [
            r
            for r in self.records
            if (split is None or r.split == split) and (label is None or r.label == label)
        ]

    def resolve_path(self, record: SliceRecord) -> Path:
        p = Path(record.path)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p

    def validate_paths(self):
        missing = [str(self.resolve_path(r)) for r in self.records if not self.resolve_path(r).exists()]
        if missing:
            raise FileNotFoundError(
                f"{len(missing)} manifest paths do not exist, first: {missing[0]}"
            )

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for r in self.records:
                f.write(r.to_json() + "\n")
        meta = {
            "dataset": self.dataset,
            "config_hash": self.config_hash,
            "class_counts": self.class_counts(),
            "split_counts": self.split_counts(),
        }
        Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        return path

    @classmethod
    def read(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        records = [SliceRecord.from_json(line) for line in path.read_text().splitlines() if line]
        dataset = records[0].dataset if records else ""
        config_hash = records[0].config_hash if records else ""
        return cls(records=records, dataset=dataset, config_hash=config_hash, root=path.parent)


def validate_splits(records: Iterable[SliceRecord]):
    """Raise if any case id appears in more than one assigned split."""
    seen: dict[str, str] = {}
    for r in records:
        if r.split == UNASSIGNED:
            continue
        if r.id in seen and seen[r.id] != r.split:
            raise SplitLeakError(f"case {r.id!r} appears in both {seen[r.id]!r} and {r.split!r}")
        seen[r.id] = r.split


def split_manifest(
    manifest: DatasetManifest,
    counts: Mapping[str, int],
    seed: int,
) -> DatasetManifest:
    """Assign case-disjoint stratified splits with the given per-class counts.

    ``counts`` maps split name to the number of cases per class, e.g.
    ``{"train": 100, "val": 100, "test": 100}``.  The shuffle is seeded;
    records beyond the requested counts stay unassigned.
    """
    rng = np.random.default_rng(seed)
    by_label: dict[str, list[int]] = defaultdict(list)
    for i, r in enumerate(manifest.records):
        by_label[r.label].append(i)

    need = sum(counts.values())
    for label, idxs in by_label.items():
        if len(idxs) < need:
            raise ValueError(
                f"insufficient cases for label {label!r}: have {len(idxs)}, need {need}"
            )

    # operate on copies so the input manifest is untouched
    records = [
        SliceRecord(r.id, r.path, r.label, UNASSIGNED, r.dataset, r.config_hash, dict(r.extra))
        for r in manifest.records
    ]
    for label, idxs in sorted(by_label.items()):
        order = rng.permutation(len(idxs))
        cursor = 0
        for split_name, per_class in counts.items():
            for k in range(per_class):
                records[idxs[order[cursor + k]]].split = split_name
            cursor += per_class

    validate_splits(records)
    return DatasetManifest(
        records=records, dataset=manifest.dataset, config_hash=manifest.config_hash, root=manifest.root
    )
