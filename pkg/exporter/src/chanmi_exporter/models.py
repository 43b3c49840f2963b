"""Model registry.

A model maps corpus rows to per-label probability lists. The two built-in
stubs need no downloads: `uniform` ignores its input, `gold_oracle` reads
the gold label back out. Real classifiers register the same way: implement
predict_batch and add a factory to MODEL_REGISTRY.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class StubModel:
    name: str
    channels: frozenset[str]
    predict: Callable[[Sequence[Mapping], Sequence[str]], list[list[float]]]

    def predict_batch(self, rows: Sequence[Mapping], labels: Sequence[str]):
        return self.predict(rows, labels)


def _uniform(rows, labels):
    k = len(labels)
    return [[1.0 / k] * k for _ in rows]


def _gold_oracle(rows, labels):
    index = {label: i for i, label in enumerate(labels)}
    out = []
    for row in rows:
        probs = [0.0] * len(labels)
        probs[index[row["label"]]] = 1.0
        out.append(probs)
    return out


MODEL_REGISTRY: dict[str, Callable[[], StubModel]] = {
    "uniform": lambda: StubModel("uniform", frozenset({"text", "audio"}), _uniform),
    "gold_oracle": lambda: StubModel(
        "gold_oracle", frozenset({"text", "audio"}), _gold_oracle
    ),
}


def load_model(identifier: str) -> StubModel:
    factory = MODEL_REGISTRY.get(identifier)
    if factory is None:
        known = ", ".join(sorted(MODEL_REGISTRY))
        raise ModelError(f"cannot load model {identifier!r}; available: {known}")
    return factory()
