"""Reference multinomial log-linear classifier.

Channel comparisons only need per-example predicted distributions, so the
model here is deliberately plain: softmax regression trained by mini-batch
gradient descent on a loss measured in bits, with L2 decay on the weights
(never the bias). Zero initialization is exact for this convex objective,
which keeps training reproducible: same data, same config, same weights.

Checkpoint selection: after every epoch the model is scored on the dev
split by plain cross-entropy (no decay term), and the best epoch wins, with
the untrained epoch-0 model included as a candidate. Ties keep the earlier
epoch. A non-finite loss or weight aborts training with a diverged error
rather than returning garbage.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .estimation import (
    FoldMetrics,
    FoldSummary,
    PredictionLog,
    PredictionRecord,
    aggregate_folds,
    cross_entropy_of_log,
)
from .infocore import LabelSpace, ProbVector, ValidationError

_LN2 = math.log(2.0)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 50
    batch_size: int = 32
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValidationError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch size must be >= 1, got {self.batch_size}")
        if not (math.isfinite(self.weight_decay) and self.weight_decay >= 0):
            raise ValidationError(f"weight decay must be >= 0, got {self.weight_decay}")
        if self.seed < 0:
            raise ValidationError(f"seed must be >= 0, got {self.seed}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "weight_decay": self.weight_decay,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Example:
    example_id: str
    features: tuple[float, ...]
    gold: int
    split: str

    def __post_init__(self):
        if not self.example_id:
            raise ValidationError("example id must be non-empty")
        if not self.features:
            raise ValidationError(f"example {self.example_id!r}: empty feature vector")
        for v in self.features:
            if not math.isfinite(v):
                raise ValidationError(
                    f"example {self.example_id!r}: non-finite feature value {v!r}"
                )
        if self.gold < 0:
            raise ValidationError(f"example {self.example_id!r}: gold must be >= 0")


@dataclass(frozen=True)
class LabeledDataset:
    name: str
    label_space: LabelSpace
    examples: tuple[Example, ...]

    def __post_init__(self):
        if not self.examples:
            raise ValidationError("dataset must contain at least one example")
        dim = len(self.examples[0].features)
        seen: set[tuple[str, str]] = set()
        for ex in self.examples:
            if len(ex.features) != dim:
                raise ValidationError(
                    f"example {ex.example_id!r}: feature dim {len(ex.features)} "
                    f"differs from {dim}"
                )
            if ex.gold >= len(self.label_space):
                raise ValidationError(
                    f"example {ex.example_id!r}: gold {ex.gold} out of range for "
                    f"{len(self.label_space)} labels"
                )
            if ex.split not in ("train", "dev", "test"):
                raise ValidationError(
                    f"example {ex.example_id!r}: unknown split {ex.split!r}"
                )
            key = (ex.split, ex.example_id)
            if key in seen:
                raise ValidationError(
                    f"duplicate example id {ex.example_id!r} in split {ex.split!r}"
                )
            seen.add(key)
        object.__setattr__(self, "examples", tuple(self.examples))

    @property
    def feature_dim(self) -> int:
        return len(self.examples[0].features)

    def split(self, name: str) -> list[Example]:
        return [ex for ex in self.examples if ex.split == name]


@dataclass(frozen=True)
class ClassifierModel:
    weights: np.ndarray  # (labels, features)
    bias: np.ndarray  # (labels,)
    label_space: LabelSpace
    epochs_run: int
    best_epoch: int
    best_dev_loss: float
    seed: int


def _matrices(examples: Sequence[Example]) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([ex.features for ex in examples], dtype=float)
    y = np.array([ex.gold for ex in examples], dtype=int)
    return x, y


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _probs(weights: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    return _softmax(x @ weights.T + bias)


def loss_and_gradient(
    weights: np.ndarray,
    bias: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    weight_decay: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Training objective in bits and its exact gradient.

    objective = mean cross-entropy (base 2) + weight_decay * sum(weights^2)

    The decay term covers weights only; the bias is unpenalized. Exposed
    separately so the gradient can be finite-difference checked.
    """
    m, k = len(x), len(bias)
    probs = _probs(weights, bias, x)
    p_gold = probs[np.arange(m), y]
    loss = float(-np.mean(np.log2(np.maximum(p_gold, 1e-300))))
    loss += weight_decay * float(np.sum(weights * weights))
    onehot = np.zeros((m, k))
    onehot[np.arange(m), y] = 1.0
    dz = (probs - onehot) / (m * _LN2)
    dw = dz.T @ x + 2.0 * weight_decay * weights
    db = dz.sum(axis=0)
    return loss, dw, db


def _dev_loss_bits(weights: np.ndarray, bias: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    probs = _probs(weights, bias, x)
    p_gold = probs[np.arange(len(x)), y]
    return float(-np.mean(np.log2(np.maximum(p_gold, 1e-300))))


def train(data: LabeledDataset, config: TrainConfig) -> ClassifierModel:
    """Fit on the train split, checkpointing on dev loss each epoch."""
    train_rows = data.split("train")
    dev_rows = data.split("dev")
    if not train_rows:
        raise ValidationError("dataset has no train split")
    if not dev_rows:
        raise ValidationError(
            "dataset has no dev split; checkpoint selection needs one"
        )
    x, y = _matrices(train_rows)
    xd, yd = _matrices(dev_rows)
    k, d = len(data.label_space), data.feature_dim

    weights = np.zeros((k, d))
    bias = np.zeros(k)
    best_loss = _dev_loss_bits(weights, bias, xd, yd)
    best_epoch = 0
    best_weights, best_bias = weights.copy(), bias.copy()

    rng = np.random.default_rng(config.seed)
    m = len(x)
    # runaway weights are detected by the explicit finiteness checks below,
    # so numpy's overflow warnings on the way there are noise
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(m)
            for start in range(0, m, config.batch_size):
                batch = order[start : start + config.batch_size]
                _, dw, db = loss_and_gradient(
                    weights, bias, x[batch], y[batch], config.weight_decay
                )
                weights -= config.learning_rate * dw
                bias -= config.learning_rate * db
            if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
                raise TrainingDivergedError("diverged; reduce learning_rate")
            dev_loss = _dev_loss_bits(weights, bias, xd, yd)
            if not math.isfinite(dev_loss):
                raise TrainingDivergedError("diverged; reduce learning_rate")
            if dev_loss < best_loss:
                best_loss = dev_loss
                best_epoch = epoch
                best_weights, best_bias = weights.copy(), bias.copy()

    best_weights.flags.writeable = False
    best_bias.flags.writeable = False
    return ClassifierModel(
        weights=best_weights,
        bias=best_bias,
        label_space=data.label_space,
        epochs_run=config.epochs,
        best_epoch=best_epoch,
        best_dev_loss=best_loss,
        seed=config.seed,
    )


def predict_proba(model: ClassifierModel, features: Sequence[float]) -> ProbVector:
    vec = np.asarray(features, dtype=float)
    if vec.shape != (model.weights.shape[1],):
        raise ValidationError(
            f"feature vector has {vec.shape[0] if vec.ndim == 1 else vec.shape} "
            f"entries, model expects {model.weights.shape[1]}"
        )
    row = _probs(model.weights, model.bias, vec[None, :])[0]
    return ProbVector(tuple(row.tolist()))


@dataclass(frozen=True)
class EvalResult:
    loss: float
    accuracy: float
    log: PredictionLog


def evaluate(
    model: ClassifierModel,
    data: LabeledDataset,
    split: str = "test",
    *,
    task_name: str | None = None,
    channel: str = "other",
    model_name: str = "softmax",
    fold: int | None = None,
) -> EvalResult:
    """Score a split and package the predictions as a log.

    The reported loss is computed from the emitted log itself, so the number
    in the summary and the number recomputable from the artifact can never
    drift apart.
    """
    rows = data.split(split)
    if not rows:
        raise ValidationError(f"dataset has no records in split {split!r}")
    x, y = _matrices(rows)
    probs = _probs(model.weights, model.bias, x)
    records = tuple(
        PredictionRecord(
            example_id=ex.example_id,
            gold=ex.gold,
            predicted=ProbVector(tuple(row.tolist())),
            split=split,
            fold=fold,
        )
        for ex, row in zip(rows, probs)
    )
    log = PredictionLog(
        task_name=task_name or data.name,
        channel=channel,
        model_name=model_name,
        label_space=data.label_space,
        records=records,
    )
    loss = cross_entropy_of_log(log, split).value
    accuracy = float(np.mean(probs.argmax(axis=1) == y))
    return EvalResult(loss=loss, accuracy=accuracy, log=log)


@dataclass(frozen=True)
class KFoldResult:
    per_fold: tuple[FoldMetrics, ...]
    summary: FoldSummary
    log: PredictionLog
    models: tuple[ClassifierModel, ...]


def _fold_seed(base: int, fold: int) -> int:
    return int(np.random.SeedSequence([base, fold]).generate_state(1)[0])


def kfold_cv(
    data: LabeledDataset,
    k: int,
    config: TrainConfig,
    *,
    dev_fraction: float = 0.1,
    task_name: str | None = None,
    channel: str = "other",
    model_name: str = "softmax",
) -> KFoldResult:
    """Cross-validate over the whole dataset, ignoring its split tags.

    Fold assignment is a seeded permutation cut into k nearly equal parts
    (sizes differ by at most one). Within each fold the held-out part is the
    test set and a dev slice of the remainder (at least one example) drives
    checkpoint selection; each fold trains with its own derived seed. The
    merged log tags every prediction with its fold, and every example is
    predicted exactly once.
    """
    if k < 2:
        raise ValidationError(f"k-fold needs k >= 2, got {k}")
    n = len(data.examples)
    if n < k:
        raise ValidationError(f"cannot make {k} folds from {n} examples")
    if not 0.0 < dev_fraction < 1.0:
        raise ValidationError(f"dev fraction must be in (0, 1), got {dev_fraction}")

    order = np.random.default_rng(config.seed).permutation(n)
    fold_indices = np.array_split(order, k)

    per_fold = []
    models = []
    merged: list[PredictionRecord] = []
    for fold, test_idx in enumerate(fold_indices):
        test_set = set(test_idx.tolist())
        pool = [i for i in order.tolist() if i not in test_set]
        if len(pool) < 2:
            raise ValidationError(f"fold {fold}: not enough examples to train on")
        rng = np.random.default_rng([config.seed, fold])
        rng.shuffle(pool)
        n_dev = max(1, int(dev_fraction * len(pool)))
        dev_ids = set(pool[:n_dev])
        reassigned = []
        for i in pool:
            ex = data.examples[i]
            reassigned.append(replace(ex, split="dev" if i in dev_ids else "train"))
        for i in test_idx.tolist():
            reassigned.append(replace(data.examples[i], split="test"))
        fold_data = LabeledDataset(data.name, data.label_space, tuple(reassigned))
        model = train(fold_data, replace(config, seed=_fold_seed(config.seed, fold)))
        result = evaluate(
            model, fold_data, "test",
            task_name=task_name, channel=channel, model_name=model_name, fold=fold,
        )
        per_fold.append(FoldMetrics(fold, result.loss, result.accuracy, len(test_idx)))
        models.append(model)
        merged.extend(result.log.records)

    log = PredictionLog(
        task_name=task_name or data.name,
        channel=channel,
        model_name=model_name,
        label_space=data.label_space,
        records=tuple(merged),
    )
    return KFoldResult(
        per_fold=tuple(per_fold),
        summary=aggregate_folds(per_fold),
        log=log,
        models=tuple(models),
    )


# --- hyperparameter sweeps ----------------------------------------------

# Learning rates sit two decades above the published-protocol range for
# deep encoders; with a convex objective and zero init, rates that small
# never move off the uniform model within the epoch budget.
DEFAULT_GRID: dict[str, list] = {
    "learning_rate": [1e-4, 3.16e-4, 1e-3, 3.16e-3, 1e-2],
    "epochs": [5, 10, 15],
    "batch_size": [8, 16, 32, 64],
    "weight_decay": [0.0, 0.01, 0.1],
}

_GRID_FIELDS = ("learning_rate", "epochs", "batch_size", "weight_decay")


def sweep_configs(
    grid: Mapping[str, Sequence] | None = None,
    *,
    runs: int | None = None,
    seed: int = 0,
) -> list[TrainConfig]:
    """Expand a grid into train configs in a deterministic order.

    The full cartesian product is enumerated with fields varying slowest to
    fastest in the order (learning_rate, epochs, batch_size, weight_decay).
    If `runs` is smaller than the product, a seeded sample without
    replacement is taken, preserving enumeration order.
    """
    grid = dict(DEFAULT_GRID if grid is None else grid)
    if set(grid) != set(_GRID_FIELDS):
        raise ValidationError(
            f"grid keys must be exactly {_GRID_FIELDS}, got {sorted(grid)}"
        )
    for key, values in grid.items():
        if not isinstance(values, (list, tuple)) or not values:
            raise ValidationError(f"grid entry {key!r} must be a non-empty list")
    combos = list(product(*(grid[f] for f in _GRID_FIELDS)))
    if runs is not None:
        if runs < 1:
            raise ValidationError(f"runs must be >= 1, got {runs}")
        if runs < len(combos):
            keep = np.random.default_rng(seed).choice(len(combos), size=runs, replace=False)
            combos = [combos[i] for i in sorted(keep.tolist())]
    return [
        TrainConfig(
            learning_rate=float(lr),
            epochs=int(ep),
            batch_size=int(bs),
            weight_decay=float(wd),
            seed=seed,
        )
        for lr, ep, bs, wd in combos
    ]


@dataclass(frozen=True)
class SweepEntry:
    config: TrainConfig
    metric: float | None
    diverged: bool


@dataclass(frozen=True)
class SweepResult:
    entries: tuple[SweepEntry, ...]
    best_index: int
    criterion: str
    best_model: ClassifierModel | None
    best_log: PredictionLog

    @property
    def best(self) -> SweepEntry:
        return self.entries[self.best_index]


def run_sweep(
    data: LabeledDataset,
    configs: Sequence[TrainConfig],
    *,
    kfold: int | None = None,
    dev_fraction: float = 0.1,
    task_name: str | None = None,
    channel: str = "other",
    model_name: str = "softmax",
    eval_split: str = "test",
    workers: int = 1,
) -> SweepResult:
    """Train every config and keep the one with the lowest selection metric.

    Without k-fold the metric is the best dev loss seen during training and
    the winning model is evaluated once on `eval_split`. With k-fold the
    metric is the mean cross-validated test loss and the winner's merged
    fold log is kept. Diverged configs score None and never win; if every
    config diverges the sweep raises. Results are independent of `workers`
    because each entry is fully determined by (data, config).
    """
    if not configs:
        raise ValidationError("sweep needs at least one config")
    if workers < 1:
        raise ValidationError(f"workers must be >= 1, got {workers}")

    def run_one(config: TrainConfig):
        try:
            if kfold is None:
                model = train(data, config)
                result = evaluate(
                    model, data, eval_split,
                    task_name=task_name, channel=channel, model_name=model_name,
                )
                return model.best_dev_loss, model, result.log
            cv = kfold_cv(
                data, kfold, config,
                dev_fraction=dev_fraction, task_name=task_name,
                channel=channel, model_name=model_name,
            )
            return cv.summary.mean_loss, None, cv.log
        except TrainingDivergedError:
            return None

    if workers == 1:
        outcomes = [run_one(c) for c in configs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_one, configs))

    entries = tuple(
        SweepEntry(config=c, metric=None if o is None else o[0], diverged=o is None)
        for c, o in zip(configs, outcomes)
    )
    scored = [(e.metric, i) for i, e in enumerate(entries) if not e.diverged]
    if not scored:
        raise TrainingDivergedError(
            "every configuration diverged; reduce learning_rate"
        )
    best_index = min(scored)[1]
    _, best_model, best_log = outcomes[best_index]
    return SweepResult(
        entries=entries,
        best_index=best_index,
        criterion="cv_loss" if kfold is not None else "dev_loss",
        best_model=best_model,
        best_log=best_log,
    )


# --- dataset wire format -------------------------------------------------
#
# One JSON object per line: {"id","x","y","split"}, keys exactly as listed.

_ROW_KEYS = {"id", "x", "y", "split"}


def read_dataset(
    path,
    *,
    name: str | None = None,
    labels: Sequence[str] | None = None,
) -> LabeledDataset:
    """Load examples from JSONL; label names default to class0..classN."""
    from .estimation import SchemaError  # shared wire-format error type

    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError("line 1: empty dataset file")
    examples = []
    max_gold = -1
    for line_no, raw in enumerate(lines, start=1):
        if not raw:
            raise SchemaError(f"line {line_no}: blank line")
        try:
            row = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {line_no}: not valid JSON ({exc.msg})") from None
        if not isinstance(row, dict):
            raise SchemaError(f"line {line_no}: expected a JSON object")
        if set(row) != _ROW_KEYS:
            missing = sorted(_ROW_KEYS - set(row))
            extra = sorted(set(row) - _ROW_KEYS)
            parts = []
            if missing:
                parts.append(f"missing {missing}")
            if extra:
                parts.append(f"unexpected {extra}")
            raise SchemaError(f"line {line_no}: row keys wrong: " + ", ".join(parts))
        if not isinstance(row["id"], str):
            raise SchemaError(f"line {line_no}: id must be a string")
        if not isinstance(row["x"], list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in row["x"]
        ):
            raise SchemaError(f"line {line_no}: x must be a list of numbers")
        if not isinstance(row["y"], int) or isinstance(row["y"], bool):
            raise SchemaError(f"line {line_no}: y must be an integer")
        if not isinstance(row["split"], str):
            raise SchemaError(f"line {line_no}: split must be a string")
        try:
            examples.append(
                Example(
                    example_id=row["id"],
                    features=tuple(float(v) for v in row["x"]),
                    gold=row["y"],
                    split=row["split"],
                )
            )
        except ValidationError as exc:
            raise SchemaError(f"line {line_no}: {exc}") from None
        max_gold = max(max_gold, row["y"])
    if labels is None:
        labels = tuple(f"class{i}" for i in range(max_gold + 1))
    try:
        return LabeledDataset(
            name=name or path.stem,
            label_space=LabelSpace(tuple(labels)),
            examples=tuple(examples),
        )
    except ValidationError as exc:
        raise SchemaError(str(exc)) from None


def write_dataset(data: LabeledDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in data.examples:
            row = {
                "id": ex.example_id,
                "x": list(ex.features),
                "y": ex.gold,
                "split": ex.split,
            }
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
