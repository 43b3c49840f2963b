"""Information arithmetic over discrete feature distributions.

Entropies, mutual informations computed as entropy differences, conditional
MI for nested channels, uncertainty coefficients, and the ten-region overlap
solver for the text/audio/prosody decomposition of a feature's entropy.

Conventions: quantities are in the global unit (bits by default, see
``chanmi.units``); 0 * log 0 is taken as 0. Negative MI estimates are
possible because a classifier's cross-entropy only upper-bounds conditional
entropy; they are reported with a warning note, never clamped, since
clamping would hide estimator failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import units

PROB_SUM_TOL = 1e-9
IDENTITY_TOL = 1e-9


class ValidationError(ValueError):
    """An input violates a documented invariant; message names the invariant."""


class Estimator(str, Enum):
    PLUGIN = "plugin"
    CROSS_ENTROPY = "cross_entropy"
    DIFFERENCE = "difference"


@dataclass(frozen=True)
class LabelSpace:
    """Ordered, unique class names; label indices are stable."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.labels:
            raise ValidationError("label space must be non-empty")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError(f"label names must be unique, got {self.labels}")
        object.__setattr__(self, "labels", tuple(str(name) for name in self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown label {label!r}") from None


@dataclass(frozen=True)
class ProbVector:
    """A distribution over a label space: entries >= 0, summing to 1 within 1e-9."""

    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if not probs:
            raise ValidationError("probability vector must be non-empty")
        for i, p in enumerate(probs):
            if not math.isfinite(p):
                raise ValidationError(f"probabilities must be finite, entry {i} is {p!r}")
            if p < 0:
                raise ValidationError(f"probabilities must be >= 0, entry {i} is {p}")
        total = math.fsum(probs)
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValidationError(
                f"probabilities must sum to 1 within {PROB_SUM_TOL}, got {total!r}"
            )

    def __len__(self) -> int:
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)


@dataclass(frozen=True)
class InfoEstimate:
    """A point estimate of an information quantity, in the global unit."""

    value: float
    estimator: Estimator
    n: int
    ci_low: float | None = None
    ci_high: float | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"sample count must be >= 1, got {self.n}")
        if (self.ci_low is None) != (self.ci_high is None):
            raise ValidationError("confidence bounds must be supplied together")
        if self.ci_low is not None:
            if not (self.ci_low <= self.value <= self.ci_high):
                raise ValidationError(
                    f"confidence interval [{self.ci_low}, {self.ci_high}] "
                    f"must bracket the value {self.value}"
                )
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        object.__setattr__(self, "notes", tuple(self.notes))

    def with_ci(self, ci_low: float, ci_high: float) -> "InfoEstimate":
        return replace(self, ci_low=ci_low, ci_high=ci_high)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "estimator": self.estimator.value,
            "n": self.n,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "InfoEstimate":
        return cls(
            value=float(d["value"]),
            estimator=Estimator(d["estimator"]),
            n=int(d["n"]),
            ci_low=None if d.get("ci_low") is None else float(d["ci_low"]),
            ci_high=None if d.get("ci_high") is None else float(d["ci_high"]),
            notes=tuple(d.get("notes", ())),
        )


@dataclass(frozen=True)
class ChannelDecomposition:
    """Measured information quantities for one feature over text and audio.

    The mutual informations are definitional differences of the entropy
    fields, so the identities checked by :meth:`violated_identities` hold
    bit-exactly for any decomposition produced by this package.
    """

    feature_name: str
    label_space: LabelSpace
    h_f: InfoEstimate
    ce_f_given_text: InfoEstimate
    ce_f_given_audio: InfoEstimate
    mi_f_text: InfoEstimate
    mi_f_audio: InfoEstimate
    mi_f_audio_given_text: InfoEstimate
    uc_text: float | None
    uc_audio: float | None

    def violated_identities(self, tol: float = IDENTITY_TOL) -> list[str]:
        """Return human-readable descriptions of any broken identities."""
        h = self.h_f.value
        ce_t = self.ce_f_given_text.value
        ce_a = self.ce_f_given_audio.value
        mi_t = self.mi_f_text.value
        mi_a = self.mi_f_audio.value
        mi_at = self.mi_f_audio_given_text.value
        broken = []
        if abs(mi_t - (h - ce_t)) > tol:
            broken.append(
                f"mi_f_text must equal h_f - ce_f_given_text "
                f"({mi_t!r} != {h!r} - {ce_t!r})"
            )
        if abs(mi_a - (h - ce_a)) > tol:
            broken.append(
                f"mi_f_audio must equal h_f - ce_f_given_audio "
                f"({mi_a!r} != {h!r} - {ce_a!r})"
            )
        if abs(mi_at - (mi_a - mi_t)) > tol:
            broken.append(
                f"mi_f_audio_given_text must equal mi_f_audio - mi_f_text "
                f"({mi_at!r} != {mi_a!r} - {mi_t!r})"
            )
        if h > 0 and self.uc_audio is not None and abs(self.uc_audio - mi_a / h) > tol:
            broken.append(
                f"uc_audio must equal mi_f_audio / h_f ({self.uc_audio!r} != {mi_a / h!r})"
            )
        if h > 0 and self.uc_text is not None and abs(self.uc_text - mi_t / h) > tol:
            broken.append(
                f"uc_text must equal mi_f_text / h_f ({self.uc_text!r} != {mi_t / h!r})"
            )
        return broken

    def to_dict(self) -> dict:
        return {
            "feature_name": self.feature_name,
            "labels": list(self.label_space.labels),
            "unit": units.current_unit(),
            "h_f": self.h_f.to_dict(),
            "ce_f_given_text": self.ce_f_given_text.to_dict(),
            "ce_f_given_audio": self.ce_f_given_audio.to_dict(),
            "mi_f_text": self.mi_f_text.to_dict(),
            "mi_f_audio": self.mi_f_audio.to_dict(),
            "mi_f_audio_given_text": self.mi_f_audio_given_text.to_dict(),
            "uc_text": self.uc_text,
            "uc_audio": self.uc_audio,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ChannelDecomposition":
        return cls(
            feature_name=str(d["feature_name"]),
            label_space=LabelSpace(tuple(d["labels"])),
            h_f=InfoEstimate.from_dict(d["h_f"]),
            ce_f_given_text=InfoEstimate.from_dict(d["ce_f_given_text"]),
            ce_f_given_audio=InfoEstimate.from_dict(d["ce_f_given_audio"]),
            mi_f_text=InfoEstimate.from_dict(d["mi_f_text"]),
            mi_f_audio=InfoEstimate.from_dict(d["mi_f_audio"]),
            mi_f_audio_given_text=InfoEstimate.from_dict(d["mi_f_audio_given_text"]),
            uc_text=None if d.get("uc_text") is None else float(d["uc_text"]),
            uc_audio=None if d.get("uc_audio") is None else float(d["uc_audio"]),
        )


# Ten-region taxonomy of the overlap between a feature's entropy and the
# text / prosody / audio channels. Region numbering is kept stable so
# reports stay comparable across runs.
REGION_QUANTITIES: dict[int, str] = {
    1: "I(text;prosody)",
    2: "I(feature;prosody|text)",
    3: "I(feature;text)",
    4: "I(feature;audio)",
    5: "I(feature;prosody;text)",
    6: "H(feature|prosody)",
    7: "H(feature|text)",
    8: "H(feature|audio)",
    9: "I(feature;audio|text)",
    10: "I(feature;audio|text,prosody)",
}

DETERMINED = "determined"
UNDERDETERMINED = "underdetermined"


@dataclass(frozen=True)
class RegionStatus:
    region: int
    quantity: str
    status: str
    value: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "region": self.region,
            "quantity": self.quantity,
            "status": self.status,
            "value": self.value,
            "note": self.note,
        }


@dataclass(frozen=True)
class RegionReport:
    regions: tuple[RegionStatus, ...]

    def __getitem__(self, region: int) -> RegionStatus:
        for r in self.regions:
            if r.region == region:
                return r
        raise KeyError(region)

    def determined(self) -> dict[int, float]:
        return {r.region: r.value for r in self.regions if r.status == DETERMINED}

    def to_dict(self) -> dict:
        return {"regions": [r.to_dict() for r in self.regions]}


@dataclass(frozen=True)
class ProsodyEstimates:
    """Optional prosody-channel measurements; any subset may be supplied."""

    mi_f_prosody: float | None = None
    mi_f_prosody_given_text: float | None = None
    mi_text_prosody: float | None = None


def _coerce_prob_vector(dist) -> ProbVector:
    if isinstance(dist, ProbVector):
        return dist
    if isinstance(dist, np.ndarray):
        return ProbVector(tuple(dist.tolist()))
    if isinstance(dist, Iterable):
        return ProbVector(tuple(dist))
    raise ValidationError(f"cannot interpret {type(dist).__name__} as a distribution")


def entropy_of(dist: ProbVector | Sequence[float] | np.ndarray) -> float:
    """Shannon entropy of a distribution, in the global unit.

    Uses the continuity convention 0 * log 0 = 0. The result lies in
    [0, log2(k)] (bits) for a k-class distribution.
    """
    vec = _coerce_prob_vector(dist)
    p = vec.as_array()
    nonzero = p[p > 0.0]
    h_bits = float(-np.sum(nonzero * np.log2(nonzero)))
    # exact -0.0 from a degenerate distribution reads better as 0.0
    return max(h_bits, 0.0) * units.scale_from_bits()


def mi_from_entropies(h_f: float, ce_f_given_c: float, n: int = 1) -> InfoEstimate:
    """Mutual information as the difference H(feature) - CE(feature|channel).

    Because the cross-entropy only upper-bounds the conditional entropy, the
    difference is a lower bound on the true MI and can come out negative; a
    negative value is returned as-is with a warning note attached.
    """
    if h_f < 0:
        raise ValidationError(f"entropy must be >= 0, got {h_f}")
    value = h_f - ce_f_given_c
    notes = ()
    if value < 0:
        notes = ("classifier underperforms marginal; MI lower bound is negative",)
    return InfoEstimate(value=value, estimator=Estimator.DIFFERENCE, n=n, notes=notes)


def conditional_mi(
    mi_f_audio: InfoEstimate | float, mi_f_text: InfoEstimate | float
) -> InfoEstimate:
    """I(feature;audio|text) for a nested channel pair, as MI(audio) - MI(text).

    Valid when the text channel is a deterministic coarsening of the audio
    channel, so the audio MI decomposes as text MI plus the conditional term.
    Both inputs must be difference estimates over the same feature entropy.
    """
    inputs = []
    for est in (mi_f_audio, mi_f_text):
        if isinstance(est, InfoEstimate):
            if est.estimator is not Estimator.DIFFERENCE:
                raise ValidationError(
                    f"conditional MI needs difference estimates, got {est.estimator.value}"
                )
            inputs.append(est)
        else:
            inputs.append(InfoEstimate(float(est), Estimator.DIFFERENCE, n=1))
    audio, text = inputs
    value = audio.value - text.value
    notes = tuple(dict.fromkeys(audio.notes + text.notes))
    if value < 0:
        notes = notes + ("text channel estimate exceeds audio channel estimate",)
    return InfoEstimate(
        value=value,
        estimator=Estimator.DIFFERENCE,
        n=min(audio.n, text.n),
        notes=notes,
    )


def uncertainty_coefficient(mi: float, h_f: float) -> float:
    """Fraction of the feature's entropy carried by a channel: MI / H(feature)."""
    if h_f <= 0:
        raise ValidationError("feature carries no information")
    return mi / h_f


def build_decomposition(
    feature_name: str,
    label_space: LabelSpace,
    h_f: InfoEstimate,
    ce_f_given_text: InfoEstimate,
    ce_f_given_audio: InfoEstimate,
) -> ChannelDecomposition:
    """Derive the MI and uncertainty-coefficient fields from base estimates.

    The three inputs are the only measured quantities; everything else in the
    decomposition is definitional arithmetic on their values, which is what
    makes the identity checks exact. Uncertainty coefficients are None when
    the feature entropy is zero (no information to apportion).
    """
    h = h_f.value
    mi_t = mi_from_entropies(h, ce_f_given_text.value, n=ce_f_given_text.n)
    mi_a = mi_from_entropies(h, ce_f_given_audio.value, n=ce_f_given_audio.n)
    mi_at = conditional_mi(mi_a, mi_t)
    uc_t = uncertainty_coefficient(mi_t.value, h) if h > 0 else None
    uc_a = uncertainty_coefficient(mi_a.value, h) if h > 0 else None
    return ChannelDecomposition(
        feature_name=feature_name,
        label_space=label_space,
        h_f=h_f,
        ce_f_given_text=ce_f_given_text,
        ce_f_given_audio=ce_f_given_audio,
        mi_f_text=mi_t,
        mi_f_audio=mi_a,
        mi_f_audio_given_text=mi_at,
        uc_text=uc_t,
        uc_audio=uc_a,
    )


def solve_regions(
    decomp: ChannelDecomposition,
    prosody_estimates: ProsodyEstimates | None = None,
) -> RegionReport:
    """Resolve the ten overlap regions from a text/audio decomposition.

    Regions 3, 4, 7, 8, 9 follow arithmetically from the decomposition.
    Regions involving the prosody channel stay underdetermined unless the
    corresponding prosody estimate is supplied; region 5 (the three-way
    interaction, which has no agreed sign convention) is always reported as
    underdetermined.
    """
    broken = decomp.violated_identities()
    if broken:
        raise ValidationError(
            "inconsistent decomposition: " + "; ".join(broken)
        )
    h = decomp.h_f.value
    mi_t = decomp.mi_f_text.value
    mi_a = decomp.mi_f_audio.value
    mi_at = decomp.mi_f_audio_given_text.value
    p = prosody_estimates or ProsodyEstimates()

    no_prosody = "requires a prosody-channel estimate"

    def determined(region: int, value: float, note: str = "") -> RegionStatus:
        return RegionStatus(region, REGION_QUANTITIES[region], DETERMINED, value, note)

    def missing(region: int, note: str = no_prosody) -> RegionStatus:
        return RegionStatus(region, REGION_QUANTITIES[region], UNDERDETERMINED, None, note)

    statuses = [
        determined(1, p.mi_text_prosody) if p.mi_text_prosody is not None else missing(1),
        determined(2, p.mi_f_prosody_given_text)
        if p.mi_f_prosody_given_text is not None
        else missing(2, no_prosody + "; approximated by region 9 for nested channels"),
        determined(3, mi_t),
        determined(4, mi_a),
        missing(5, "three-way interaction has no agreed sign convention; not solved"),
        determined(6, h - p.mi_f_prosody) if p.mi_f_prosody is not None else missing(6),
        determined(7, h - mi_t),
        determined(8, h - mi_a),
        determined(9, mi_at),
        determined(10, mi_at - p.mi_f_prosody_given_text)
        if p.mi_f_prosody_given_text is not None
        else missing(10),
    ]
    return RegionReport(regions=tuple(statuses))
