"""Corpus data model: clips, labeled segments, manifests, and splits.

Manifests are JSON Lines, one object per segment record. Segmentation cuts
clip audio on ground-truth timestamps; splitting is per-language stratified
70/15/15 so the minority language is present in every part.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestError
from .seeding import rng_for

LABELS = ("english", "mandarin", "nonspeech")
SPEECH_LABELS = ("english", "mandarin")
PARTS = ("train", "val", "test")

# Segments longer than this are rejected at load time (bounded memory).
MAX_SEGMENT_S = 30.0


@dataclass
class AudioClip:
    """Mono audio: id, sample rate, float samples in [-1, 1]."""

    clip_id: str
    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 1:
            raise ValueError("samples must be 1-D mono")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError(f"clip {self.clip_id!r} has non-finite samples")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class SegmentRecord:
    """One labeled time span inside a clip."""

    segment_id: str
    clip_id: str
    start_s: float
    end_s: float
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ManifestError(f"unknown label {self.label!r}")
        if self.start_s < 0:
            raise ManifestError(f"segment {self.segment_id!r}: start_s < 0")
        if self.end_s <= self.start_s:
            raise ManifestError(
                f"segment {self.segment_id!r}: end_s ({self.end_s}) must exceed "
                f"start_s ({self.start_s})"
            )
        if self.end_s - self.start_s > MAX_SEGMENT_S:
            raise ManifestError(
                f"segment {self.segment_id!r}: duration "
                f"{self.end_s - self.start_s:.2f}s exceeds {MAX_SEGMENT_S}s limit"
            )

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass
class Manifest:
    """Ordered segment records plus free-form metadata."""

    records: list[SegmentRecord] = field(default_factory=list)
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.segment_id in seen:
                raise ManifestError(f"duplicate segment_id {rec.segment_id!r}")
            seen.add(rec.segment_id)

    def __len__(self) -> int:
        return len(self.records)

    def by_clip(self, clip_id: str) -> list[SegmentRecord]:
        return [r for r in self.records if r.clip_id == clip_id]

    def label_counts(self) -> dict[str, int]:
        counts = {lab: 0 for lab in LABELS}
        for rec in self.records:
            counts[rec.label] += 1
        return counts


def load_manifest(path) -> Manifest:
    """Read a JSON Lines manifest, validating each record.

    Errors name the offending 1-based line number. Unknown keys are ignored.
    """
    path = Path(path)
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"{path.name}:{lineno}: malformed JSON ({e.msg})")
            try:
                rec = SegmentRecord(
                    segment_id=str(obj["segment_id"]),
                    clip_id=str(obj["clip_id"]),
                    start_s=float(obj["start_s"]),
                    end_s=float(obj["end_s"]),
                    label=str(obj["label"]),
                )
            except KeyError as e:
                raise ManifestError(f"{path.name}:{lineno}: missing key {e}")
            except (TypeError, ValueError) as e:
                raise ManifestError(f"{path.name}:{lineno}: bad field value ({e})")
            except ManifestError as e:
                raise ManifestError(f"{path.name}:{lineno}: {e}")
            records.append(rec)
    return Manifest(records=records)


def save_manifest(m: Manifest, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in m.records:
            fh.write(
                json.dumps(
                    {
                        "segment_id": rec.segment_id,
                        "clip_id": rec.clip_id,
                        "start_s": rec.start_s,
                        "end_s": rec.end_s,
                        "label": rec.label,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def drop_nonspeech(m: Manifest) -> Manifest:
    """Keep only speech records, order preserved."""
    return Manifest(
        records=[r for r in m.records if r.label != "nonspeech"],
        meta=dict(m.meta),
    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def cut_segments(clip: AudioClip, m: Manifest) -> list[tuple[str, AudioClip]]:
    """Cut a clip into per-record sub-clips on [start, end) sample indices.

    Timestamps convert to samples with round-half-up so adjacent records
    partition the clip exactly.
    """
    out = []
    n = len(clip.samples)
    for rec in m.records:
        if rec.clip_id != clip.clip_id:
            continue
        lo = _round_half_up(rec.start_s * clip.sample_rate)
        hi = _round_half_up(rec.end_s * clip.sample_rate)
        if hi > n:
            raise ManifestError(
                f"segment {rec.segment_id!r} ends at sample {hi} but clip "
                f"{clip.clip_id!r} has only {n} samples"
            )
        out.append(
            (
                rec.segment_id,
                AudioClip(rec.segment_id, clip.sample_rate, clip.samples[lo:hi].copy()),
            )
        )
    return out


@dataclass
class SplitAssignment:
    """segment_id -> train/val/test mapping, with the seed that produced it."""

    assignment: dict[str, str]
    seed: int

    def ids_for(self, part: str) -> list[str]:
        return [sid for sid, p in self.assignment.items() if p == part]

    def counts(self) -> dict[str, int]:
        c = {p: 0 for p in PARTS}
        for p in self.assignment.values():
            c[p] += 1
        return c


def split_dataset(
    m: Manifest,
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> SplitAssignment:
    """Per-language stratified random split.

    Within each language, val and test sizes are round(ratio * n); the
    remainder goes to train. Same seed reproduces the same assignment.
    """
    if len(m.records) == 0:
        raise ValueError("cannot split an empty manifest")
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be positive and sum to 1, got {ratios}")
    for rec in m.records:
        if rec.label == "nonspeech":
            raise ValueError(
                f"split expects speech-only manifest, found nonspeech "
                f"segment {rec.segment_id!r}"
            )

    rng = rng_for(seed, "split")
    assignment: dict[str, str] = {}
    for lang in SPEECH_LABELS:
        ids = sorted(r.segment_id for r in m.records if r.label == lang)
        if not ids:
            continue
        perm = rng.permutation(len(ids))
        n_val = _round_half_up(ratios[1] * len(ids))
        n_test = _round_half_up(ratios[2] * len(ids))
        if n_val + n_test > len(ids):
            raise ValueError(f"too few {lang} segments ({len(ids)}) to split")
        for k, idx in enumerate(perm):
            if k < n_val:
                part = "val"
            elif k < n_val + n_test:
                part = "test"
            else:
                part = "train"
            assignment[ids[idx]] = part
    # Report in manifest order.
    ordered = {r.segment_id: assignment[r.segment_id] for r in m.records}
    return SplitAssignment(assignment=ordered, seed=seed)


def save_split(split: SplitAssignment, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for sid, part in split.assignment.items():
            fh.write(json.dumps({"segment_id": sid, "part": part}, sort_keys=True) + "\n")


def load_split(path) -> SplitAssignment:
    path = Path(path)
    assignment: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                sid, part = str(obj["segment_id"]), str(obj["part"])
            except (json.JSONDecodeError, KeyError) as e:
                raise ManifestError(f"{path.name}:{lineno}: malformed split line ({e})")
            if part not in PARTS:
                raise ManifestError(f"{path.name}:{lineno}: unknown part {part!r}")
            if sid in assignment and assignment[sid] != part:
                raise ManifestError(
                    f"{path.name}:{lineno}: segment {sid!r} assigned to both "
                    f"{assignment[sid]!r} and {part!r}"
                )
            assignment[sid] = part
    return SplitAssignment(assignment=assignment, seed=-1)
