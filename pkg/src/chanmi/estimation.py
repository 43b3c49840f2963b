"""Estimation from model prediction logs.

A prediction log is the package's exchange format: one JSONL file per
(task, channel, model) holding a predicted distribution over the feature's
labels for every example. From logs this module computes plug-in entropies,
empirical cross-entropies (upper bounds on conditional entropy), full
channel decompositions, and percentile-bootstrap confidence intervals.

Resampling is deterministic and replicate-addressed: replicate k of a run
seeded s uses its own generator derived from (s, k), so results do not
depend on scheduling or worker count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import units
from .infocore import (
    ChannelDecomposition,
    Estimator,
    InfoEstimate,
    LabelSpace,
    ProbVector,
    ValidationError,
    build_decomposition,
    entropy_of,
)

SPLITS = ("train", "dev", "test")
CHANNELS = ("text", "audio", "audio_text", "other")

# Floor applied to the probability a model assigned to the gold label before
# taking the log, so a single zero cannot blow up the mean. Clamped rows are
# counted and reported; a clamp inflates the bound, never shrinks it.
P_CLAMP = 1e-12

MIN_BOOTSTRAP_REPLICATES = 100

STATISTICS = ("plugin_entropy", "cross_entropy", "mi", "conditional_mi")


class SchemaError(ValidationError):
    """A wire-format file does not match the documented schema."""


class InconsistentLogsError(ValidationError):
    """Two individually valid inputs disagree about the world."""


def _check_split(split: str) -> str:
    if split not in SPLITS:
        raise ValidationError(f"unknown split {split!r}; expected one of {SPLITS}")
    return split


def _check_channel(channel: str) -> str:
    if channel not in CHANNELS:
        raise ValidationError(f"unknown channel {channel!r}; expected one of {CHANNELS}")
    return channel


@dataclass(frozen=True)
class PredictionRecord:
    example_id: str
    gold: int
    predicted: ProbVector
    split: str
    fold: int | None = None

    def __post_init__(self):
        if not self.example_id:
            raise ValidationError("example id must be non-empty")
        if self.gold < 0:
            raise ValidationError(f"gold label index must be >= 0, got {self.gold}")
        _check_split(self.split)
        if self.fold is not None and self.fold < 0:
            raise ValidationError(f"fold index must be >= 0, got {self.fold}")


@dataclass(frozen=True)
class PredictionLog:
    task_name: str
    channel: str
    model_name: str
    label_space: LabelSpace
    records: tuple[PredictionRecord, ...]
    unit: str = "bits"

    def __post_init__(self):
        _check_channel(self.channel)
        if self.unit != "bits":
            raise ValidationError("prediction logs always store bits on the wire")
        object.__setattr__(self, "records", tuple(self.records))
        k = len(self.label_space)
        seen: set[tuple[str, int | None, str]] = set()
        for r in self.records:
            if r.gold >= k:
                raise ValidationError(
                    f"record {r.example_id!r}: gold index {r.gold} out of range "
                    f"for {k} labels"
                )
            if len(r.predicted) != k:
                raise ValidationError(
                    f"record {r.example_id!r}: prediction has {len(r.predicted)} "
                    f"entries for {k} labels"
                )
            key = (r.split, r.fold, r.example_id)
            if key in seen:
                raise ValidationError(
                    f"duplicate example id {r.example_id!r} in split {r.split!r}"
                    + (f" fold {r.fold}" if r.fold is not None else "")
                )
            seen.add(key)

    def rows(self, split: str) -> list[PredictionRecord]:
        _check_split(split)
        return [r for r in self.records if r.split == split]


@dataclass(frozen=True)
class EmpiricalDist:
    """Label counts observed in a sample."""

    counts: tuple[int, ...]
    label_space: LabelSpace

    def __post_init__(self):
        if len(self.counts) != len(self.label_space):
            raise ValidationError("one count per label required")
        if any(c < 0 for c in self.counts):
            raise ValidationError("counts must be >= 0")
        if sum(self.counts) == 0:
            raise ValidationError("cannot build a distribution from zero observations")
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def n(self) -> int:
        return sum(self.counts)

    def to_prob(self) -> ProbVector:
        n = self.n
        return ProbVector(tuple(c / n for c in self.counts))


def empirical_dist(gold_labels: Sequence[int], label_space: LabelSpace) -> EmpiricalDist:
    counts = [0] * len(label_space)
    for i, g in enumerate(gold_labels):
        g = int(g)
        if not 0 <= g < len(label_space):
            raise ValidationError(
                f"label index {g} at position {i} out of range for {len(label_space)} labels"
            )
        counts[g] += 1
    return EmpiricalDist(tuple(counts), label_space)


def empirical_dist_of_log(log: PredictionLog, split: str = "test") -> EmpiricalDist:
    rows = log.rows(split)
    if not rows:
        raise ValidationError(f"log has no records in split {split!r}")
    return empirical_dist([r.gold for r in rows], log.label_space)


def plugin_entropy(dist: EmpiricalDist) -> InfoEstimate:
    """Entropy of the observed label frequencies."""
    return InfoEstimate(
        value=entropy_of(dist.to_prob()),
        estimator=Estimator.PLUGIN,
        n=dist.n,
    )


def _gold_and_probs(rows: Sequence[PredictionRecord]) -> tuple[np.ndarray, np.ndarray]:
    gold = np.array([r.gold for r in rows], dtype=int)
    probs = np.array([r.predicted.probs for r in rows], dtype=float)
    return gold, probs


def _neg_log_probs(rows: Sequence[PredictionRecord]) -> tuple[np.ndarray, int]:
    gold, probs = _gold_and_probs(rows)
    p_gold = probs[np.arange(len(rows)), gold]
    clamped = int(np.sum(p_gold < P_CLAMP))
    return -np.log2(np.maximum(p_gold, P_CLAMP)), clamped


def cross_entropy_of_log(log: PredictionLog, split: str = "test") -> InfoEstimate:
    """Mean negative log-probability of the gold label, in the global unit.

    This empirically upper-bounds the feature's conditional entropy given
    whatever the model read, up to sampling error.
    """
    rows = log.rows(split)
    if not rows:
        raise ValidationError(f"log has no records in split {split!r}")
    nlp, clamped = _neg_log_probs(rows)
    notes = ()
    if clamped:
        notes = (f"{clamped} gold probabilities clamped to {P_CLAMP}",)
    return InfoEstimate(
        value=float(nlp.mean()) * units.scale_from_bits(),
        estimator=Estimator.CROSS_ENTROPY,
        n=len(rows),
        notes=notes,
    )


def _paired_rows(
    text_log: PredictionLog, audio_log: PredictionLog, split: str
) -> tuple[list[PredictionRecord], list[PredictionRecord]]:
    """Align two logs on an evaluation split, strictly.

    When both logs carry example ids for the same underlying items the rows
    are matched id by id; gold labels must agree per id. Logs with disjoint
    id schemes are accepted only if their gold label multisets agree, since
    the estimators then still measure the same feature distribution.
    """
    t_rows = text_log.rows(split)
    a_rows = audio_log.rows(split)
    if not t_rows or not a_rows:
        raise ValidationError(f"both logs need records in split {split!r}")
    t_ids = {r.example_id for r in t_rows}
    a_ids = {r.example_id for r in a_rows}
    if t_ids == a_ids:
        a_by_id = {r.example_id: r for r in a_rows}
        aligned = [a_by_id[r.example_id] for r in t_rows]
        for t, a in zip(t_rows, aligned):
            if t.gold != a.gold:
                raise InconsistentLogsError(
                    f"logs disagree on gold label for example {t.example_id!r}: "
                    f"{t.gold} vs {a.gold}"
                )
        return t_rows, aligned
    if sorted(r.gold for r in t_rows) != sorted(r.gold for r in a_rows):
        raise InconsistentLogsError(
            f"logs cover different examples in split {split!r} and their gold "
            "label multisets differ; they do not describe the same evaluation set"
        )
    if len(t_rows) != len(a_rows):
        raise InconsistentLogsError(
            f"logs have different sizes in split {split!r}: "
            f"{len(t_rows)} vs {len(a_rows)}"
        )
    return t_rows, a_rows


def decompose(
    text_log: PredictionLog,
    audio_log: PredictionLog,
    *,
    split: str = "test",
    h_source: EmpiricalDist | None = None,
) -> ChannelDecomposition:
    """Full channel decomposition from a text log and an audio log.

    The feature entropy defaults to the plug-in entropy of the evaluation
    split's own gold labels, so entropy and cross-entropies describe the
    same sample. An explicitly supplied distribution must match those gold
    counts exactly; a mismatch means the inputs describe different data.
    """
    if text_log.task_name != audio_log.task_name:
        raise InconsistentLogsError(
            f"logs describe different tasks: {text_log.task_name!r} vs "
            f"{audio_log.task_name!r}"
        )
    if text_log.label_space != audio_log.label_space:
        raise InconsistentLogsError(
            f"logs use different label spaces: {text_log.label_space.labels} vs "
            f"{audio_log.label_space.labels}"
        )
    t_rows, a_rows = _paired_rows(text_log, audio_log, split)
    observed = empirical_dist([r.gold for r in t_rows], text_log.label_space)
    if h_source is None:
        h_source = observed
    else:
        if h_source.label_space != text_log.label_space:
            raise InconsistentLogsError(
                "entropy source uses a different label space than the logs"
            )
        if h_source.counts != observed.counts:
            raise InconsistentLogsError(
                f"entropy source counts {h_source.counts} do not match the "
                f"evaluation split's gold counts {observed.counts}"
            )
    return build_decomposition(
        feature_name=text_log.task_name,
        label_space=text_log.label_space,
        h_f=plugin_entropy(h_source),
        ce_f_given_text=cross_entropy_of_log(text_log, split),
        ce_f_given_audio=cross_entropy_of_log(audio_log, split),
    )


@dataclass(frozen=True)
class BootstrapResult:
    statistic: str
    point: float
    ci_low: float
    ci_high: float
    replicates: int
    level: float
    seed: int
    n: int

    def apply_to(self, estimate: InfoEstimate) -> InfoEstimate:
        # quantiles can in principle land past the point estimate; widen so
        # the interval always brackets the value it annotates
        return estimate.with_ci(
            min(self.ci_low, estimate.value), max(self.ci_high, estimate.value)
        )


def _entropy_bits_from_counts(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log2(p)))


def bootstrap_ci(
    log: PredictionLog,
    statistic: str,
    *,
    replicates: int = 1000,
    seed: int = 0,
    level: float = 0.95,
    split: str = "test",
    audio_log: PredictionLog | None = None,
) -> BootstrapResult:
    """Percentile bootstrap over examples for one statistic.

    Replicate k resamples row indices with a generator seeded by (seed, k).
    For "mi" the entropy and cross-entropy terms are computed from the same
    resampled rows; for "conditional_mi" `log` is the text log, `audio_log`
    the audio log, rows are paired by example id, and the replicate value is
    the mean paired difference of negative log-probabilities (the entropy
    term cancels exactly).
    """
    if statistic not in STATISTICS:
        raise ValidationError(
            f"unknown statistic {statistic!r}; expected one of {STATISTICS}"
        )
    if replicates < MIN_BOOTSTRAP_REPLICATES:
        raise ValidationError(
            f"insufficient replicates: {replicates} < {MIN_BOOTSTRAP_REPLICATES} "
            "needed for stable quantiles"
        )
    if not 0.0 < level < 1.0:
        raise ValidationError(f"confidence level must be in (0, 1), got {level}")
    if (statistic == "conditional_mi") != (audio_log is not None):
        raise ValidationError(
            "audio_log is required for conditional_mi and meaningless otherwise"
        )

    k_labels = len(log.label_space)
    if statistic == "conditional_mi":
        t_rows, a_rows = _paired_rows(log, audio_log, split)
        if {r.example_id for r in t_rows} != {r.example_id for r in a_rows}:
            raise InconsistentLogsError(
                "conditional MI resampling needs logs with matching example ids"
            )
        nlp_t, _ = _neg_log_probs(t_rows)
        nlp_a, _ = _neg_log_probs(a_rows)
        diffs = nlp_t - nlp_a
        n = len(diffs)

        def stat_bits(idx: np.ndarray) -> float:
            return float(diffs[idx].mean())

        point_bits = float(diffs.mean())
    else:
        rows = log.rows(split)
        if not rows:
            raise ValidationError(f"log has no records in split {split!r}")
        gold, _ = _gold_and_probs(rows)
        nlp, _ = _neg_log_probs(rows)
        n = len(rows)
        if statistic == "plugin_entropy":

            def stat_bits(idx: np.ndarray) -> float:
                counts = np.bincount(gold[idx], minlength=k_labels)
                return _entropy_bits_from_counts(counts, n)

        elif statistic == "cross_entropy":

            def stat_bits(idx: np.ndarray) -> float:
                return float(nlp[idx].mean())

        else:  # mi

            def stat_bits(idx: np.ndarray) -> float:
                counts = np.bincount(gold[idx], minlength=k_labels)
                return _entropy_bits_from_counts(counts, n) - float(nlp[idx].mean())

        point_bits = stat_bits(np.arange(n))

    values = np.empty(replicates)
    for k in range(replicates):
        rng = np.random.default_rng([seed, k])
        values[k] = stat_bits(rng.integers(0, n, n))
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(values, [alpha, 1.0 - alpha])
    scale = units.scale_from_bits()
    return BootstrapResult(
        statistic=statistic,
        point=point_bits * scale,
        ci_low=float(lo) * scale,
        ci_high=float(hi) * scale,
        replicates=replicates,
        level=level,
        seed=seed,
        n=n,
    )


@dataclass(frozen=True)
class FoldMetrics:
    fold: int
    loss: float
    accuracy: float
    n: int

    def __post_init__(self):
        if self.fold < 0:
            raise ValidationError(f"fold index must be >= 0, got {self.fold}")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValidationError(f"accuracy must be in [0, 1], got {self.accuracy}")
        if self.n < 1:
            raise ValidationError(f"fold size must be >= 1, got {self.n}")


@dataclass(frozen=True)
class FoldSummary:
    mean_loss: float
    mean_accuracy: float
    folds: int


def aggregate_folds(per_fold: Sequence[FoldMetrics]) -> FoldSummary:
    """Unweighted mean of per-fold metrics; every fold counts once."""
    if not per_fold:
        raise ValidationError("no folds to aggregate")
    if len({m.fold for m in per_fold}) != len(per_fold):
        raise ValidationError("duplicate fold indices in aggregation")
    return FoldSummary(
        mean_loss=float(np.mean([m.loss for m in per_fold])),
        mean_accuracy=float(np.mean([m.accuracy for m in per_fold])),
        folds=len(per_fold),
    )


# --- JSONL wire format -------------------------------------------------
#
# Line 1 header: {"task","channel","model","labels","unit"}
# Lines 2..N   : {"id","gold","p","split","fold"}
# UTF-8, LF line endings, compact separators, keys exactly as listed.

_HEADER_KEYS = {"task", "channel", "model", "labels", "unit"}
_RECORD_KEYS = {"id", "gold", "p", "split", "fold"}


def write_prediction_log(log: PredictionLog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = {
            "task": log.task_name,
            "channel": log.channel,
            "model": log.model_name,
            "labels": list(log.label_space.labels),
            "unit": log.unit,
        }
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for r in log.records:
            row = {
                "id": r.example_id,
                "gold": r.gold,
                "p": list(r.predicted.probs),
                "split": r.split,
                "fold": r.fold,
            }
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")


def _schema(line_no: int, message: str) -> SchemaError:
    return SchemaError(f"line {line_no}: {message}")


def _require_keys(obj: dict, expected: set[str], line_no: int, kind: str) -> None:
    keys = set(obj.keys())
    if keys != expected:
        missing = sorted(expected - keys)
        extra = sorted(keys - expected)
        parts = []
        if missing:
            parts.append(f"missing {missing}")
        if extra:
            parts.append(f"unexpected {extra}")
        raise _schema(line_no, f"{kind} keys wrong: " + ", ".join(parts))


def _parse_line(raw: str, line_no: int) -> dict:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise _schema(line_no, f"not valid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise _schema(line_no, "expected a JSON object")
    return obj


def read_prediction_log(path) -> PredictionLog:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError("line 1: empty file, missing header")

    header = _parse_line(lines[0], 1)
    _require_keys(header, _HEADER_KEYS, 1, "header")
    if not isinstance(header["labels"], list) or not all(
        isinstance(x, str) for x in header["labels"]
    ):
        raise _schema(1, "labels must be a list of strings")
    for key in ("task", "channel", "model", "unit"):
        if not isinstance(header[key], str):
            raise _schema(1, f"{key} must be a string")

    records = []
    for offset, raw in enumerate(lines[1:], start=2):
        if not raw:
            raise _schema(offset, "blank line")
        row = _parse_line(raw, offset)
        _require_keys(row, _RECORD_KEYS, offset, "record")
        if not isinstance(row["id"], str):
            raise _schema(offset, "id must be a string")
        if not isinstance(row["gold"], int) or isinstance(row["gold"], bool):
            raise _schema(offset, "gold must be an integer")
        if not isinstance(row["p"], list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in row["p"]
        ):
            raise _schema(offset, "p must be a list of numbers")
        if not isinstance(row["split"], str):
            raise _schema(offset, "split must be a string")
        if row["fold"] is not None and (
            not isinstance(row["fold"], int) or isinstance(row["fold"], bool)
        ):
            raise _schema(offset, "fold must be an integer or null")
        try:
            records.append(
                PredictionRecord(
                    example_id=row["id"],
                    gold=row["gold"],
                    predicted=ProbVector(tuple(float(x) for x in row["p"])),
                    split=row["split"],
                    fold=row["fold"],
                )
            )
        except ValidationError as exc:
            raise _schema(offset, str(exc)) from None

    try:
        return PredictionLog(
            task_name=header["task"],
            channel=header["channel"],
            model_name=header["model"],
            label_space=LabelSpace(tuple(header["labels"])),
            records=tuple(records),
            unit=header["unit"],
        )
    except ValidationError as exc:
        raise SchemaError(str(exc)) from None
