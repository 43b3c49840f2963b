"""Exact information oracles on small discrete joint distributions.

A synthetic world is a joint distribution P(feature, channel) given as an
explicit matrix, so every information quantity the estimators approximate can
be computed here by direct summation with no sampling error. The estimators
are validated by sampling from these worlds and comparing against the exact
values; a deterministic column-merge ("garbling") builds a coarser channel
from a finer one, which is how a text-like view is derived from an audio-like
one while guaranteeing the nesting the conditional-MI arithmetic assumes.

Exactness contract: `exact_feature_entropy(s) - exact_conditional_entropy(s)`
equals `exact_mi(s)` to within 1e-12 bits for any valid spec, because all
three are direct sums over the same cells.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import units
from .estimation import PredictionLog, PredictionRecord
from .infocore import LabelSpace, ProbVector, ValidationError

JOINT_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """A named joint distribution over (feature label, channel symbol)."""

    name: str
    feature_space: LabelSpace
    channel_space: LabelSpace
    joint: np.ndarray

    def __post_init__(self):
        try:
            matrix = np.array(self.joint, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"joint must be a rectangular numeric matrix: {exc}") from None
        expected = (len(self.feature_space), len(self.channel_space))
        if matrix.shape != expected:
            raise ValidationError(
                f"joint shape {matrix.shape} does not match "
                f"{len(self.feature_space)} feature labels x "
                f"{len(self.channel_space)} channel symbols"
            )
        if not np.all(np.isfinite(matrix)):
            raise ValidationError("joint entries must be finite")
        if np.any(matrix < 0):
            raise ValidationError("joint entries must be >= 0")
        total = math.fsum(matrix.ravel().tolist())
        if abs(total - 1.0) > JOINT_SUM_TOL:
            raise ValidationError(
                f"joint entries must sum to 1 within {JOINT_SUM_TOL}, got {total!r}"
            )
        row_sums = matrix.sum(axis=1)
        if np.any(row_sums == 0.0):
            dead = [self.feature_space.labels[i] for i in np.nonzero(row_sums == 0.0)[0]]
            raise ValidationError(f"feature labels with zero probability: {dead}")
        matrix.flags.writeable = False
        object.__setattr__(self, "joint", matrix)

    def feature_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    def channel_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "f_labels": list(self.feature_space.labels),
            "c_labels": list(self.channel_space.labels),
            "joint": [[float(x) for x in row] for row in self.joint],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SyntheticSpec":
        required = {"name", "f_labels", "c_labels", "joint"}
        keys = set(d.keys())
        if keys != required:
            missing = sorted(required - keys)
            extra = sorted(keys - required)
            parts = []
            if missing:
                parts.append(f"missing keys {missing}")
            if extra:
                parts.append(f"unexpected keys {extra}")
            raise ValidationError("bad synthetic spec: " + ", ".join(parts))
        return cls(
            name=str(d["name"]),
            feature_space=LabelSpace(tuple(d["f_labels"])),
            channel_space=LabelSpace(tuple(d["c_labels"])),
            joint=d["joint"],
        )


def _nonzero_cells(spec: SyntheticSpec):
    fs, cs = np.nonzero(spec.joint)
    return fs, cs, spec.joint[fs, cs]


def exact_feature_entropy(spec: SyntheticSpec) -> float:
    """H(feature) by direct summation over the feature marginal."""
    pf = spec.feature_marginal()
    return float(-np.sum(pf * np.log2(pf))) * units.scale_from_bits()


def exact_conditional_entropy(spec: SyntheticSpec) -> float:
    """H(feature|channel) by direct summation over nonzero joint cells."""
    fs, cs, cells = _nonzero_cells(spec)
    pc = spec.channel_marginal()
    bits = float(-np.sum(cells * np.log2(cells / pc[cs])))
    return max(bits, 0.0) * units.scale_from_bits()


def exact_mi(spec: SyntheticSpec) -> float:
    """I(feature;channel) by direct summation over nonzero joint cells."""
    fs, cs, cells = _nonzero_cells(spec)
    pf = spec.feature_marginal()
    pc = spec.channel_marginal()
    bits = float(np.sum(cells * np.log2(cells / (pf[fs] * pc[cs]))))
    return max(bits, 0.0) * units.scale_from_bits()


def sample(spec: SyntheticSpec, n: int, seed: int) -> np.ndarray:
    """Draw n (feature index, channel index) pairs; shape (n, 2).

    Same (spec, n, seed) always yields the same array.
    """
    if n < 1:
        raise ValidationError(f"sample count must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    flat = spec.joint.ravel()
    idx = rng.choice(flat.size, size=n, p=flat)
    n_channels = len(spec.channel_space)
    return np.stack([idx // n_channels, idx % n_channels], axis=1)


def bayes_posterior(spec: SyntheticSpec, channel_symbol: int | str) -> ProbVector:
    """P(feature | channel symbol): the best any predictor of this channel can do."""
    if isinstance(channel_symbol, str):
        ci = spec.channel_space.index(channel_symbol)
    else:
        ci = int(channel_symbol)
        if not 0 <= ci < len(spec.channel_space):
            raise ValidationError(
                f"channel index {ci} out of range for {len(spec.channel_space)} symbols"
            )
    column = spec.joint[:, ci]
    mass = column.sum()
    if mass == 0.0:
        raise ValidationError(
            f"channel symbol {spec.channel_space.labels[ci]!r} has zero probability; "
            "posterior undefined"
        )
    return ProbVector(tuple((column / mass).tolist()))


@dataclass(frozen=True)
class Garbling:
    """Deterministic map from fine channel symbols to coarse ones."""

    mapping: Mapping[str, str]

    def __post_init__(self):
        object.__setattr__(self, "mapping", dict(self.mapping))


def column_map(spec: SyntheticSpec, garbling: Garbling) -> tuple[np.ndarray, LabelSpace]:
    """Coarse index for each fine channel index, plus the coarse label space.

    Coarse labels are ordered by first appearance along the fine symbol order,
    so the result is deterministic. Every fine symbol must be mapped.
    """
    unmapped = [c for c in spec.channel_space.labels if c not in garbling.mapping]
    if unmapped:
        raise ValidationError(f"garbling leaves channel symbols unmapped: {unmapped}")
    coarse_order: list[str] = []
    for fine in spec.channel_space.labels:
        coarse = garbling.mapping[fine]
        if coarse not in coarse_order:
            coarse_order.append(coarse)
    coarse_space = LabelSpace(tuple(coarse_order))
    indices = np.array(
        [coarse_order.index(garbling.mapping[fine]) for fine in spec.channel_space.labels],
        dtype=int,
    )
    return indices, coarse_space


def garble(spec: SyntheticSpec, garbling: Garbling) -> SyntheticSpec:
    """Merge channel columns per the garbling; feature rows are untouched.

    The coarse channel is a deterministic function of the fine one, so
    `exact_mi(garble(s, g)) <= exact_mi(s)` always holds.
    """
    indices, coarse_space = column_map(spec, garbling)
    merged = np.zeros((len(spec.feature_space), len(coarse_space)))
    for fine_idx, coarse_idx in enumerate(indices):
        merged[:, coarse_idx] += spec.joint[:, fine_idx]
    return SyntheticSpec(
        name=f"{spec.name}-garbled",
        feature_space=spec.feature_space,
        channel_space=coarse_space,
        joint=merged,
    )


def garble_samples(spec: SyntheticSpec, garbling: Garbling, samples: np.ndarray) -> np.ndarray:
    """Rewrite sampled (feature, channel) pairs onto the coarse channel."""
    indices, _ = column_map(spec, garbling)
    out = samples.copy()
    out[:, 1] = indices[samples[:, 1]]
    return out


def bayes_prediction_log(
    spec: SyntheticSpec,
    samples: np.ndarray,
    *,
    task_name: str | None = None,
    channel: str = "other",
    split: str = "test",
    model_name: str = "bayes",
) -> PredictionLog:
    """Package samples as a prediction log whose rows are Bayes posteriors.

    This is the strongest possible predictor for the world's channel: its
    cross-entropy converges to the exact conditional entropy from above as
    the sample grows, which is what makes it the reference point for
    validating the estimation pipeline end to end.
    """
    posteriors = [
        bayes_posterior(spec, ci) if spec.channel_marginal()[ci] > 0 else None
        for ci in range(len(spec.channel_space))
    ]
    records = []
    for i, (f, c) in enumerate(np.asarray(samples)):
        records.append(
            PredictionRecord(
                example_id=f"ex{i:06d}",
                gold=int(f),
                predicted=posteriors[int(c)],
                split=split,
            )
        )
    return PredictionLog(
        task_name=task_name or spec.name,
        channel=channel,
        model_name=model_name,
        label_space=spec.feature_space,
        records=tuple(records),
    )


def write_spec(spec: SyntheticSpec, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(spec.to_dict(), fh, indent=2)
        fh.write("\n")


def read_spec(path) -> SyntheticSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"synthetic spec is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError("synthetic spec must be a JSON object")
    return SyntheticSpec.from_dict(raw)


# Frozen validation worlds. s1 is a binary feature seen through a symmetric
# 10%-flip channel; s2 refines each of the two channel states into a
# confident and a hesitant variant (garbling them back recovers s1's
# channel); s3 is a skewed ten-class world with a mostly-faithful channel.

def fixture_s1() -> SyntheticSpec:
    return SyntheticSpec(
        name="s1",
        feature_space=LabelSpace(("f0", "f1")),
        channel_space=LabelSpace(("c0", "c1")),
        joint=[[0.45, 0.05], [0.05, 0.45]],
    )


def fixture_s2() -> SyntheticSpec:
    return SyntheticSpec(
        name="s2",
        feature_space=LabelSpace(("f0", "f1")),
        channel_space=LabelSpace(("c0", "c1", "c2", "c3")),
        joint=[
            [0.36, 0.09, 0.04, 0.01],
            [0.01, 0.04, 0.09, 0.36],
        ],
    )


def s2_text_garbling() -> Garbling:
    return Garbling({"c0": "g0", "c1": "g0", "c2": "g1", "c3": "g1"})


def fixture_s3() -> SyntheticSpec:
    k = 10
    weights = np.array([1.0 / (i + 1) for i in range(k)])
    pf = weights / weights.sum()
    conditional = np.full((k, k), 0.05)
    np.fill_diagonal(conditional, 0.55)
    joint = pf[:, None] * conditional
    return SyntheticSpec(
        name="s3",
        feature_space=LabelSpace(tuple(f"f{i}" for i in range(k))),
        channel_space=LabelSpace(tuple(f"c{i}" for i in range(k))),
        joint=joint,
    )


FIXTURES = {"s1": fixture_s1, "s2": fixture_s2, "s3": fixture_s3}
