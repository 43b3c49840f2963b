"""Corpus-to-prediction-log export.

The output follows the chanmi prediction log wire contract: UTF-8, LF,
one compact JSON object per line, header first
({"task", "channel", "model", "labels", "unit"}), then one record per
corpus row ({"id", "gold", "p", "split", "fold"}), unit always "bits".
The exporter talks to chanmi only through this format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .models import ModelError, load_model

CHANNELS = ("text", "audio")
CORPUS_KEYS = {"id", "transcript", "duration_s", "audio_ref", "label"}
RENORM_TOL = 1e-9


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class ExportJob:
    corpus_path: str
    channel: str
    model_id: str
    labels: tuple[str, ...]
    out_path: str
    batch_size: int = 32
    split: str = "test"
    task_name: str | None = None

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ExportError(
                f"channel must be one of {CHANNELS}, got {self.channel!r}"
            )
        if not self.labels:
            raise ExportError("label space is empty")
        if len(set(self.labels)) != len(self.labels):
            raise ExportError("label space has duplicates")
        if self.batch_size < 1:
            raise ExportError(f"batch_size must be >= 1, got {self.batch_size}")

    @property
    def task(self) -> str:
        return self.task_name if self.task_name else Path(self.corpus_path).stem


@dataclass(frozen=True)
class ExportResult:
    out_path: str
    records_written: int
    skipped_missing_gold: int


def read_corpus(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExportError(f"line {line_no}: not valid JSON ({exc.msg})")
            if not isinstance(row, dict):
                raise ExportError(f"line {line_no}: expected an object")
            if set(row.keys()) != CORPUS_KEYS:
                missing = sorted(CORPUS_KEYS - set(row.keys()))
                extra = sorted(set(row.keys()) - CORPUS_KEYS)
                raise ExportError(
                    f"line {line_no}: missing keys {missing}, unexpected {extra}"
                )
            if not isinstance(row["id"], str) or not row["id"]:
                raise ExportError(f"line {line_no}: id must be a non-empty string")
            rows.append(row)
    return rows


def _renormalize(probs, row_id: str) -> list[float]:
    if len(probs) == 0:
        raise ExportError(f"row {row_id!r}: model returned no probabilities")
    values = [float(p) for p in probs]
    if any(not math.isfinite(p) or p < 0.0 for p in values):
        raise ExportError(f"row {row_id!r}: model probabilities must be finite and >= 0")
    total = math.fsum(values)
    if total <= 0.0:
        raise ExportError(f"row {row_id!r}: model probabilities sum to {total}")
    values = [p / total for p in values]
    if abs(math.fsum(values) - 1.0) > RENORM_TOL:
        raise ExportError(f"row {row_id!r}: renormalization failed")
    return values


def export(job: ExportJob) -> ExportResult:
    model = load_model(job.model_id)
    if job.channel not in model.channels:
        supported = ", ".join(sorted(model.channels))
        raise ModelError(
            f"model {job.model_id!r} does not support channel {job.channel!r} "
            f"(supports: {supported})"
        )

    rows = read_corpus(job.corpus_path)
    label_index = {label: i for i, label in enumerate(job.labels)}
    usable = []
    skipped = 0
    for row in rows:
        if row["label"] is None:
            skipped += 1
            continue
        if row["label"] not in label_index:
            raise ExportError(
                f"row {row['id']!r}: label {row['label']!r} not in label space "
                f"{list(job.labels)}"
            )
        usable.append(row)

    header = {
        "task": job.task,
        "channel": job.channel,
        "model": job.model_id,
        "labels": list(job.labels),
        "unit": "bits",
    }
    written = 0
    with open(job.out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for start in range(0, len(usable), job.batch_size):
            batch = usable[start : start + job.batch_size]
            probs = model.predict_batch(batch, job.labels)
            if len(probs) != len(batch):
                raise ExportError(
                    f"model returned {len(probs)} rows for a batch of {len(batch)}"
                )
            for row, p in zip(batch, probs):
                record = {
                    "id": row["id"],
                    "gold": label_index[row["label"]],
                    "p": _renormalize(p, row["id"]),
                    "split": job.split,
                    "fold": None,
                }
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")
                written += 1
    return ExportResult(
        out_path=str(job.out_path),
        records_written=written,
        skipped_missing_gold=skipped,
    )
