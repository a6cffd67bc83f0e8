"""Training records and the segment-level dataset split.

A dataset record is one (traffic segment, caption) combination carrying the
app-type label and the caption's precomputed sentence embedding. Splitting
happens at segment granularity so all captions of one segment land in the
same split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotate import CaptionRecord
from .embeddings import get_embedder
from .errors import InvalidSplit
from .features import FlowFeatureSequence


@dataclass
class DatasetRecord:
    segment_id: str
    features: np.ndarray
    mask: np.ndarray
    caption: str
    app_type: int
    caption_embedding: np.ndarray
    embedder_id: str

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float32)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.caption_embedding = np.asarray(self.caption_embedding, dtype=np.float32)

    def to_json_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "features": self.features.tolist(),
            "mask": self.mask.tolist(),
            "caption": self.caption,
            "app_type": self.app_type,
            "caption_embedding": self.caption_embedding.tolist(),
            "embedder_id": self.embedder_id,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "DatasetRecord":
        return cls(
            segment_id=obj["segment_id"],
            features=np.asarray(obj["features"], dtype=np.float32),
            mask=np.asarray(obj["mask"], dtype=bool),
            caption=obj["caption"],
            app_type=int(obj["app_type"]),
            caption_embedding=np.asarray(obj["caption_embedding"], dtype=np.float32),
            embedder_id=obj["embedder_id"],
        )


def split_boundaries(n: int, fractions: tuple[float, float, float]) -> tuple[int, int]:
    """Rounded cumulative boundaries, so (0.8, 0.1, 0.1) of 10 gives 8/1/1."""
    total = sum(fractions)
    if abs(total - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise InvalidSplit(f"fractions must be non-negative and sum to 1, got {fractions}")
    first = int(round(n * fractions[0]))
    second = int(round(n * (fractions[0] + fractions[1])))
    return first, second


def build_dataset(
    pairs: list[tuple[FlowFeatureSequence, CaptionRecord]],
    split: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    embedder=None,
) -> tuple[list[DatasetRecord], list[DatasetRecord], list[DatasetRecord]]:
    """Expand (segment, captions) pairs into records and split by segment.

    Every caption of a record becomes its own DatasetRecord; the seeded
    shuffle and split operate on whole segments.
    """
    embedder = embedder or get_embedder("hashed")
    order = np.random.default_rng(seed).permutation(len(pairs))
    first, second = split_boundaries(len(pairs), split)
    splits: tuple[list[DatasetRecord], ...] = ([], [], [])
    for rank, pair_idx in enumerate(order):
        segment, record = pairs[pair_idx]
        bucket = 0 if rank < first else (1 if rank < second else 2)
        for caption in record.captions:
            splits[bucket].append(
                DatasetRecord(
                    segment_id=segment.segment_id,
                    features=segment.features,
                    mask=segment.mask,
                    caption=caption,
                    app_type=record.app_type,
                    caption_embedding=embedder.embed(caption),
                    embedder_id=embedder.embedder_id,
                )
            )
    return splits


def split_records(
    records: list[DatasetRecord],
    split: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[list[DatasetRecord], list[DatasetRecord], list[DatasetRecord]]:
    """Seeded segment-level split of already-expanded records."""
    segment_ids = sorted({r.segment_id for r in records})
    order = np.random.default_rng(seed).permutation(len(segment_ids))
    first, second = split_boundaries(len(segment_ids), split)
    bucket_of = {}
    for rank, idx in enumerate(order):
        bucket_of[segment_ids[idx]] = 0 if rank < first else (1 if rank < second else 2)
    splits: tuple[list[DatasetRecord], ...] = ([], [], [])
    for record in records:
        splits[bucket_of[record.segment_id]].append(record)
    return splits


def assert_no_leakage(*splits: list[DatasetRecord]) -> None:
    """Raise if any segment_id appears in more than one split."""
    seen: dict[str, int] = {}
    for idx, records in enumerate(splits):
        for record in records:
            prev = seen.setdefault(record.segment_id, idx)
            if prev != idx:
                raise InvalidSplit(
                    f"segment {record.segment_id} leaks across splits {prev} and {idx}"
                )


def write_records_jsonl(records: list[DatasetRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_dict()) + "\n")


def read_records_jsonl(path: str | Path) -> list[DatasetRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(DatasetRecord.from_json_dict(json.loads(line)))
    return records
