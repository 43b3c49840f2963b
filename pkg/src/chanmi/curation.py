"""Curation pipeline for a questionhood corpus.

Stages, in the only order that is sound, since the label is read off the
punctuation that later stages delete:

  1. label: an utterance is a question iff its transcript ends with '?',
     looking past trailing whitespace, closing quotes, and other terminal
     punctuation.
  2. strip: delete every '.', ',' and '?' so no classifier can shortcut
     through the labeling rule; transcripts emptied by this are dropped.
  3. duration floor: drop utterances shorter than the minimum seconds.
  4. duration matching: downsample the non-question majority so its length
     profile matches the questions, bin by bin.
  5. stratified split: per-class shuffle and cumulative-floor cuts keep the
     class mix of train/dev/test within a percent of each other.

Every stage reports what it dropped; the final report must conserve the
input count exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .estimation import SchemaError
from .infocore import ValidationError

QUESTION = "question"
NON_QUESTION = "non_question"
LABELS = (NON_QUESTION, QUESTION)

DEFAULT_MIN_DURATION = 2.0
DEFAULT_BINS = 20
DEFAULT_FRACTIONS = (0.72, 0.08, 0.20)

# Split sizes of the reference corpus this pipeline mirrors, kept in the
# report so a rerun at realistic scale can be sanity-checked at a glance.
REFERENCE_SPLIT_SIZES = (13842, 1538, 3845)

_STRIP_CHARS = (".", ",", "?")
_TRAILING_SKIP = set(" \t\n\r\"'”’».!,")


@dataclass(frozen=True)
class UtteranceRecord:
    utt_id: str
    transcript: str
    duration_s: float
    audio_ref: str | None = None
    label: str | None = None

    def __post_init__(self):
        if not self.utt_id:
            raise ValidationError("utterance id must be non-empty")
        if not self.transcript.strip():
            raise ValidationError(f"utterance {self.utt_id!r}: empty transcript")
        if not (math.isfinite(self.duration_s) and self.duration_s > 0):
            raise ValidationError(
                f"utterance {self.utt_id!r}: duration must be > 0, got {self.duration_s}"
            )
        if self.label is not None and self.label not in LABELS:
            raise ValidationError(
                f"utterance {self.utt_id!r}: unknown label {self.label!r}"
            )


def is_question(transcript: str) -> bool:
    for ch in reversed(transcript):
        if ch == "?":
            return True
        if ch in _TRAILING_SKIP:
            continue
        return False
    return False


def label_questionhood(records: Iterable[UtteranceRecord]) -> list[UtteranceRecord]:
    """Assign the question / non-question label from the raw transcript."""
    out = []
    for rec in records:
        if rec.label is not None:
            raise ValidationError(
                f"utterance {rec.utt_id!r} is already labeled; "
                "labeling must see raw records"
            )
        out.append(replace(rec, label=QUESTION if is_question(rec.transcript) else NON_QUESTION))
    return out


def strip_punctuation(
    records: Iterable[UtteranceRecord],
) -> tuple[list[UtteranceRecord], list[UtteranceRecord]]:
    """Delete every '.', ',' and '?'; returns (kept, dropped_as_empty)."""
    kept, dropped = [], []
    for rec in records:
        if rec.label is None:
            raise ValidationError(
                f"utterance {rec.utt_id!r} is unlabeled; stripping removes the "
                "characters the label is read from, so label first"
            )
        text = rec.transcript
        for ch in _STRIP_CHARS:
            text = text.replace(ch, "")
        if not text.strip():
            dropped.append(rec)
        else:
            kept.append(replace(rec, transcript=text))
    return kept, dropped


def filter_min_duration(
    records: Iterable[UtteranceRecord], min_s: float = DEFAULT_MIN_DURATION
) -> tuple[list[UtteranceRecord], list[UtteranceRecord]]:
    """Keep utterances at least min_s seconds long; returns (kept, dropped)."""
    if not (math.isfinite(min_s) and min_s > 0):
        raise ValidationError(f"minimum duration must be > 0, got {min_s}")
    kept, dropped = [], []
    for rec in records:
        (kept if rec.duration_s >= min_s else dropped).append(rec)
    return kept, dropped


@dataclass(frozen=True)
class BinAudit:
    low: float
    high: float
    questions: int
    available: int
    selected: int
    shortfall: int

    def to_dict(self) -> dict:
        return {
            "low": self.low,
            "high": self.high,
            "questions": self.questions,
            "available": self.available,
            "selected": self.selected,
            "shortfall": self.shortfall,
        }


@dataclass(frozen=True)
class DownsampleAudit:
    bin_edges: tuple[float, ...]
    bins: tuple[BinAudit, ...]
    out_of_range: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "bin_edges": list(self.bin_edges),
            "bins": [b.to_dict() for b in self.bins],
            "out_of_range": self.out_of_range,
            "seed": self.seed,
        }


def _bin_index(duration: float, edges: np.ndarray) -> int | None:
    if duration < edges[0] or duration > edges[-1]:
        return None
    i = int(np.searchsorted(edges, duration, side="right")) - 1
    return min(i, len(edges) - 2)  # top edge belongs to the last bin


def duration_matched_downsample(
    questions: Sequence[UtteranceRecord],
    non_questions: Sequence[UtteranceRecord],
    *,
    n_bins: int = DEFAULT_BINS,
    seed: int = 0,
) -> tuple[list[UtteranceRecord], DownsampleAudit]:
    """Pick non-questions so their duration histogram matches the questions'.

    Equal-width bins span the question durations; each bin contributes at
    most as many non-questions as it holds questions, sampled without
    replacement with a single seeded generator walked over bins in order.
    Bins with too few non-questions record a shortfall instead of borrowing
    from neighbors; non-questions outside the question range are never
    eligible and are counted separately.
    """
    if not questions:
        raise ValidationError("no question utterances to match against")
    if len(non_questions) < len(questions):
        raise ValidationError(
            f"{len(non_questions)} non-questions cannot be downsampled to match "
            f"{len(questions)} questions; the majority class is too small"
        )
    if n_bins < 1:
        raise ValidationError(f"bin count must be >= 1, got {n_bins}")
    for rec in questions:
        if rec.label != QUESTION:
            raise ValidationError(f"utterance {rec.utt_id!r} is not labeled {QUESTION!r}")
    for rec in non_questions:
        if rec.label != NON_QUESTION:
            raise ValidationError(f"utterance {rec.utt_id!r} is not labeled {NON_QUESTION!r}")

    durations_q = np.array([r.duration_s for r in questions])
    lo, hi = float(durations_q.min()), float(durations_q.max())
    if lo == hi:
        edges = np.array([lo, hi])
    else:
        edges = np.linspace(lo, hi, n_bins + 1)

    q_counts = np.zeros(len(edges) - 1, dtype=int)
    for d in durations_q:
        q_counts[_bin_index(float(d), edges)] += 1

    nq_by_bin: list[list[int]] = [[] for _ in range(len(edges) - 1)]
    out_of_range = 0
    for i, rec in enumerate(non_questions):
        b = _bin_index(rec.duration_s, edges)
        if b is None:
            out_of_range += 1
        else:
            nq_by_bin[b].append(i)

    rng = np.random.default_rng(seed)
    selected_indices: list[int] = []
    bins = []
    for b in range(len(edges) - 1):
        available = nq_by_bin[b]
        take = min(q_counts[b], len(available))
        if take > 0:
            picked = rng.choice(len(available), size=take, replace=False)
            selected_indices.extend(available[i] for i in picked.tolist())
        bins.append(
            BinAudit(
                low=float(edges[b]),
                high=float(edges[b + 1]),
                questions=int(q_counts[b]),
                available=len(available),
                selected=int(take),
                shortfall=int(q_counts[b] - take),
            )
        )
    selected = [non_questions[i] for i in sorted(selected_indices)]
    audit = DownsampleAudit(
        bin_edges=tuple(float(e) for e in edges),
        bins=tuple(bins),
        out_of_range=out_of_range,
        seed=seed,
    )
    return selected, audit


def _check_fractions(fractions: Sequence[float]) -> tuple[float, float, float]:
    if len(fractions) != 3:
        raise ValidationError("fractions must be (train, dev, test)")
    fr = tuple(float(f) for f in fractions)
    if any(f < 0 for f in fr):
        raise ValidationError(f"fractions must be >= 0, got {fr}")
    if abs(sum(fr) - 1.0) > 1e-9:
        raise ValidationError(f"fractions must sum to 1, got {sum(fr)!r}")
    return fr


def split_records(
    records: Sequence[UtteranceRecord],
    *,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    seed: int = 0,
) -> dict[str, list[UtteranceRecord]]:
    """Stratified train/dev/test split.

    Each class is shuffled and cut at cumulative-floor boundaries, so split
    class proportions track the overall mix as closely as flooring allows
    (within one example per class per split).
    """
    fr = _check_fractions(fractions)
    rng = np.random.default_rng(seed)
    parts: dict[str, list[UtteranceRecord]] = {"train": [], "dev": [], "test": []}
    for cls in (QUESTION, NON_QUESTION):
        rows = [r for r in records if r.label == cls]
        if any(r.label is None for r in records):
            raise ValidationError("cannot split unlabeled records")
        if not rows:
            continue
        order = rng.permutation(len(rows))
        shuffled = [rows[i] for i in order]
        n = len(rows)
        # the 1e-9 nudge keeps a cumulative fraction that is an integer in
        # exact arithmetic from flooring one short
        b1 = int(math.floor(n * fr[0] + 1e-9))
        b2 = int(math.floor(n * (fr[0] + fr[1]) + 1e-9))
        parts["train"].extend(shuffled[:b1])
        parts["dev"].extend(shuffled[b1:b2])
        parts["test"].extend(shuffled[b2:])
    for split, rows in parts.items():
        order = rng.permutation(len(rows))
        parts[split] = [rows[i] for i in order]
    return parts


@dataclass(frozen=True)
class CurationReport:
    input_records: int
    strip_dropped: dict[str, int]
    duration_dropped: dict[str, int]
    downsample_dropped: dict[str, int]
    final_counts: dict[str, dict[str, int]]
    downsample: DownsampleAudit
    min_duration: float
    n_bins: int
    fractions: tuple[float, float, float]
    seed: int
    reference_split_sizes: tuple[int, int, int] = REFERENCE_SPLIT_SIZES

    def total_dropped(self) -> int:
        return (
            sum(self.strip_dropped.values())
            + sum(self.duration_dropped.values())
            + sum(self.downsample_dropped.values())
        )

    def total_final(self) -> int:
        return sum(sum(by_class.values()) for by_class in self.final_counts.values())

    def check_conservation(self) -> None:
        total = self.total_dropped() + self.total_final()
        if total != self.input_records:
            raise ValidationError(
                f"record conservation violated: {self.input_records} in, "
                f"{self.total_dropped()} dropped + {self.total_final()} kept = {total}"
            )

    def to_dict(self) -> dict:
        return {
            "input_records": self.input_records,
            "strip_dropped": dict(self.strip_dropped),
            "duration_dropped": dict(self.duration_dropped),
            "downsample_dropped": dict(self.downsample_dropped),
            "final_counts": {k: dict(v) for k, v in self.final_counts.items()},
            "downsample": self.downsample.to_dict(),
            "min_duration": self.min_duration,
            "n_bins": self.n_bins,
            "fractions": list(self.fractions),
            "seed": self.seed,
            "reference_split_sizes": list(self.reference_split_sizes),
        }


@dataclass(frozen=True)
class CurationResult:
    splits: dict[str, list[UtteranceRecord]]
    report: CurationReport


def _per_class(records: Iterable[UtteranceRecord]) -> dict[str, int]:
    counts = {QUESTION: 0, NON_QUESTION: 0}
    for rec in records:
        counts[rec.label] += 1
    return counts


def curate(
    records: Sequence[UtteranceRecord],
    *,
    min_duration: float = DEFAULT_MIN_DURATION,
    n_bins: int = DEFAULT_BINS,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    seed: int = 0,
) -> CurationResult:
    """Run the whole pipeline on raw records; see the module docstring."""
    fr = _check_fractions(fractions)
    labeled = label_questionhood(records)
    stripped, strip_dropped = strip_punctuation(labeled)
    long_enough, duration_dropped = filter_min_duration(stripped, min_duration)
    questions = [r for r in long_enough if r.label == QUESTION]
    non_questions = [r for r in long_enough if r.label == NON_QUESTION]
    selected, audit = duration_matched_downsample(
        questions, non_questions, n_bins=n_bins, seed=seed
    )
    final = questions + selected
    splits = split_records(final, fractions=fr, seed=seed)
    report = CurationReport(
        input_records=len(records),
        strip_dropped=_per_class(strip_dropped),
        duration_dropped=_per_class(duration_dropped),
        downsample_dropped={
            QUESTION: 0,
            NON_QUESTION: len(non_questions) - len(selected),
        },
        final_counts={split: _per_class(rows) for split, rows in splits.items()},
        downsample=audit,
        min_duration=min_duration,
        n_bins=n_bins,
        fractions=fr,
        seed=seed,
    )
    report.check_conservation()
    return CurationResult(splits=splits, report=report)


# --- utterance wire format ------------------------------------------------
#
# One JSON object per line. Required: id, transcript, duration_s.
# Optional: audio_ref, label (written as null when absent).

_REQUIRED_KEYS = {"id", "transcript", "duration_s"}
_OPTIONAL_KEYS = {"audio_ref", "label"}


def read_utterances(path) -> list[UtteranceRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    records = []
    for line_no, raw in enumerate(lines, start=1):
        if not raw:
            raise SchemaError(f"line {line_no}: blank line")
        try:
            row = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {line_no}: not valid JSON ({exc.msg})") from None
        if not isinstance(row, dict):
            raise SchemaError(f"line {line_no}: expected a JSON object")
        keys = set(row)
        if not _REQUIRED_KEYS <= keys:
            raise SchemaError(
                f"line {line_no}: missing keys {sorted(_REQUIRED_KEYS - keys)}"
            )
        extra = keys - _REQUIRED_KEYS - _OPTIONAL_KEYS
        if extra:
            raise SchemaError(f"line {line_no}: unexpected keys {sorted(extra)}")
        if not isinstance(row["id"], str):
            raise SchemaError(f"line {line_no}: id must be a string")
        if not isinstance(row["transcript"], str):
            raise SchemaError(f"line {line_no}: transcript must be a string")
        if not isinstance(row["duration_s"], (int, float)) or isinstance(
            row["duration_s"], bool
        ):
            raise SchemaError(f"line {line_no}: duration_s must be a number")
        audio_ref = row.get("audio_ref")
        if audio_ref is not None and not isinstance(audio_ref, str):
            raise SchemaError(f"line {line_no}: audio_ref must be a string or null")
        label = row.get("label")
        if label is not None and not isinstance(label, str):
            raise SchemaError(f"line {line_no}: label must be a string or null")
        try:
            records.append(
                UtteranceRecord(
                    utt_id=row["id"],
                    transcript=row["transcript"],
                    duration_s=float(row["duration_s"]),
                    audio_ref=audio_ref,
                    label=label,
                )
            )
        except ValidationError as exc:
            raise SchemaError(f"line {line_no}: {exc}") from None
    return records


def write_utterances(records: Iterable[UtteranceRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            row = {
                "id": rec.utt_id,
                "transcript": rec.transcript,
                "duration_s": rec.duration_s,
                "audio_ref": rec.audio_ref,
                "label": rec.label,
            }
            fh.write(json.dumps(row, separators=(",", ":"), ensure_ascii=False) + "\n")


def emit_splits(result: CurationResult, out_dir) -> dict[str, Path]:
    """Write train/dev/test JSONL plus the report; byte-stable across reruns."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for split in ("train", "dev", "test"):
        path = out / f"{split}.jsonl"
        write_utterances(result.splits[split], path)
        paths[split] = path
    report_path = out / "report.json"
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result.report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["report"] = report_path
    return paths
