"""Builders and oracles shared by several test modules."""

import re

import numpy as np

from chanmi.classifier import Example, LabeledDataset
from chanmi.curation import UtteranceRecord
from chanmi.synthetic import SyntheticSpec

_CIRCLE = re.compile(r"<circle\b[^>]*/>")
_ATTR = re.compile(r'([\w-]+)="([^"]*)"')


def parse_circles(svg):
    """Attribute dicts for the data-bearing circles, document order."""
    out = []
    for tag in _CIRCLE.findall(svg):
        attrs = dict(_ATTR.findall(tag))
        if "data-quantity" in attrs:
            out.append(attrs)
    return out


def raster_areas(svg, size, n=2000):
    """Supersampled pixel count per circle; the oracle the SVG must satisfy."""
    xs = (np.arange(n) + 0.5) * (size / n)
    cell = (size / n) ** 2
    col = xs[None, :]
    row = xs[:, None]
    areas = {}
    for attrs in parse_circles(svg):
        cx, cy, r = float(attrs["cx"]), float(attrs["cy"]), float(attrs["r"])
        mask = (col - cx) ** 2 + (row - cy) ** 2 <= r * r
        areas[attrs["data-quantity"]] = float(mask.sum()) * cell
    return areas


def one_hot_dataset(
    spec: SyntheticSpec,
    draws: np.ndarray,
    split_sizes: list[tuple[str, int]],
    *,
    name: str = "synthetic",
) -> LabeledDataset:
    """Classifier dataset whose features one-hot encode the channel symbol.

    With this encoding the Bayes-optimal softmax model exists exactly (its
    weights are the log posteriors), so trained cross-entropy should approach
    the world's exact conditional entropy from above.
    """
    n_channels = len(spec.channel_space)
    examples = []
    pos = 0
    for split, count in split_sizes:
        for _ in range(count):
            f, c = draws[pos]
            features = [0.0] * n_channels
            features[int(c)] = 1.0
            examples.append(Example(f"ex{pos:06d}", tuple(features), int(f), split))
            pos += 1
    if pos > len(draws):
        raise ValueError("split sizes exceed available draws")
    return LabeledDataset(name, spec.feature_space, tuple(examples))


def curation_corpus() -> list[UtteranceRecord]:
    """200 raw utterances whose path through the pipeline is known by hand.

    With min_duration=2.0, n_bins=3, fractions=(0.72, 0.08, 0.20):

      questions (72):   2 strip-dropped, 10 under the floor, 60 kept
                        kept durations: 30 in [2,4), 20 in [4,6), 10 in [6,8]
      non-questions (128): 3 strip-dropped, 10 under the floor,
                        115 eligible: 50 / 12 / 40 per bin plus 13 above 8.0s
      downsample picks 30 / 12 / 10 (shortfall 8 in the middle bin),
      so 52 non-questions survive and 63 drop; final = 112.
      splits: questions 43/5/12, non-questions 37/4/11.
    """
    records: list[UtteranceRecord] = []

    def add(transcript: str, duration: float) -> None:
        records.append(
            UtteranceRecord(
                utt_id=f"u{len(records):03d}", transcript=transcript, duration_s=duration
            )
        )

    add("?", 3.0)
    add("??", 3.0)
    for i in range(10):
        add(f"quick check {i}?", 1.0)
    for i in range(9):
        add(f"ready for item {i}?", 2.0)
    add('he said "really?"', 2.0)
    for i in range(19):
        add(f"does sample {i} look fine?", 3.0)
    add("really?!", 3.0)
    for i in range(19):
        add(f"could we revisit point {i}?", 5.0)
    add("wait, what?", 5.0)
    for i in range(5):
        add(f"shall we schedule block {i}?", 7.0)
    for i in range(5):
        add(f"any objections to plan {i}?", 8.0)

    add("...", 3.0)
    add(",", 3.0)
    add(".", 3.0)
    for i in range(10):
        add(f"too short {i}", 1.5)
    for i in range(25):
        add(f"statement alpha {i}.", 2.5)
    for i in range(25):
        add(f"statement beta {i}.", 3.0)
    for i in range(12):
        add(f"statement gamma {i}.", 5.0)
    for i in range(20):
        add(f"statement delta {i}.", 6.5)
    for i in range(20):
        add(f"statement epsilon {i}.", 8.0)
    for i in range(13):
        add(f"rambling monologue {i}.", 9.5)

    assert len(records) == 200
    return records
