"""Proportional-area information diagrams as standalone SVG.

The feature entropy and the two channel informations are drawn as nested
circles under one global scale: circle area is proportional to bits, so the
audio circle visibly dwarfing the text circle IS the headline ratio. Nesting
is sound because the estimates satisfy 0 <= I(F;text) <= I(F;audio) <= H(F);
inputs violating that ordering are rejected with a pointer at the offending
pair rather than silently clipped.

Rendering is deterministic: same decomposition, same bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from . import units
from .infocore import ChannelDecomposition, ValidationError

OUTER_RADIUS_SHARE = 0.38  # of the square canvas edge

COLOR_ENTROPY = "#d9d9d9"
COLOR_AUDIO = "#7fb3d5"
COLOR_TEXT = "#f5b041"
STROKE = "#333333"

_ORDER_TOL = 1e-12


@dataclass(frozen=True)
class CircleSpec:
    quantity: str
    bits: float
    cx: float
    cy: float
    radius: float
    color: str

    @property
    def area(self) -> float:
        return math.pi * self.radius * self.radius

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "bits": self.bits,
            "cx": self.cx,
            "cy": self.cy,
            "radius": self.radius,
            "area": self.area,
            "color": self.color,
        }


@dataclass(frozen=True)
class DiagramSpec:
    feature_name: str
    circles: tuple[CircleSpec, ...]  # outermost first
    containment: tuple[tuple[int, int], ...]  # (inner index, outer index)
    size: float
    unit: str
    annotations: tuple[str, ...]
    degenerate: bool = False

    def check_containment(self, tol: float = 1e-9) -> None:
        for inner, outer in self.containment:
            a, b = self.circles[inner], self.circles[outer]
            gap = math.hypot(a.cx - b.cx, a.cy - b.cy) + a.radius - b.radius
            if gap > tol:
                raise ValidationError(
                    f"circle {a.quantity!r} escapes {b.quantity!r} by {gap!r}"
                )

    def to_dict(self) -> dict:
        return {
            "feature_name": self.feature_name,
            "circles": [c.to_dict() for c in self.circles],
            "containment": [list(pair) for pair in self.containment],
            "size": self.size,
            "unit": self.unit,
            "annotations": list(self.annotations),
            "degenerate": self.degenerate,
        }


def _nonneg(value: float, name: str) -> float:
    if value < -_ORDER_TOL:
        raise ValidationError(
            f"cannot draw proportional areas: {name} is negative ({value!r}); "
            "this usually means a classifier underperformed the marginal, "
            "see the estimate's notes"
        )
    return max(value, 0.0)


def layout(
    decomp: ChannelDecomposition,
    *,
    size: float = 420.0,
    offset: float = 0.0,
    underdetermined: tuple[str, ...] = (),
) -> DiagramSpec:
    """Place the three circles for a decomposition.

    offset = 0 nests them concentrically; offset = 1 pushes each inner circle
    down until it touches its container from inside. Anything in between
    slides proportionally, never breaking containment.
    """
    if not (math.isfinite(size) and size > 0):
        raise ValidationError(f"canvas size must be > 0, got {size}")
    if not 0.0 <= offset <= 1.0:
        raise ValidationError(f"offset must be in [0, 1], got {offset}")
    broken = decomp.violated_identities()
    if broken:
        raise ValidationError("inconsistent decomposition: " + "; ".join(broken))

    name = decomp.feature_name
    h = _nonneg(decomp.h_f.value, f"H({name})")
    mi_a = _nonneg(decomp.mi_f_audio.value, f"I({name};audio)")
    mi_t = _nonneg(decomp.mi_f_text.value, f"I({name};text)")
    if mi_a - h > _ORDER_TOL:
        raise ValidationError(
            f"cannot draw proportional areas: I({name};audio) = {mi_a!r} exceeds "
            f"H({name}) = {h!r}; a channel cannot carry more than the feature "
            "holds, see the estimate's notes"
        )
    if mi_t - mi_a > _ORDER_TOL:
        raise ValidationError(
            f"cannot draw proportional areas: I({name};text) = {mi_t!r} exceeds "
            f"I({name};audio) = {mi_a!r}; the text channel is nested inside "
            "audio, see the estimate's notes"
        )

    unit = units.current_unit()
    if h == 0.0:
        return DiagramSpec(
            feature_name=name,
            circles=(),
            containment=(),
            size=size,
            unit=unit,
            annotations=underdetermined,
            degenerate=True,
        )

    center = size / 2.0
    r_outer = OUTER_RADIUS_SHARE * size
    r_audio = r_outer * math.sqrt(mi_a / h)
    r_text = r_outer * math.sqrt(mi_t / h)
    cy_audio = center + offset * (r_outer - r_audio)
    cy_text = cy_audio + offset * (r_audio - r_text)
    circles = (
        CircleSpec(f"H({name})", h, center, center, r_outer, COLOR_ENTROPY),
        CircleSpec(f"I({name};audio)", mi_a, center, cy_audio, r_audio, COLOR_AUDIO),
        CircleSpec(f"I({name};text)", mi_t, center, cy_text, r_text, COLOR_TEXT),
    )
    spec = DiagramSpec(
        feature_name=name,
        circles=circles,
        containment=((1, 0), (2, 1)),
        size=size,
        unit=unit,
        annotations=underdetermined,
        degenerate=False,
    )
    spec.check_containment()
    return spec


def _f(value: float) -> str:
    return f"{value:.4f}"


def render_svg(spec: DiagramSpec) -> str:
    """Serialize a layout to SVG 1.1; same spec, same bytes."""
    legend_rows = len(spec.circles) + len(spec.annotations) + (1 if spec.degenerate else 0)
    legend_top = spec.size + 16.0
    height = legend_top + 22.0 * legend_rows + 10.0
    lines = [
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_f(spec.size)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(spec.size)} {_f(height)}">',
        f"  <title>channel information for {spec.feature_name}</title>",
    ]
    if spec.degenerate:
        center = spec.size / 2.0
        lines.append(
            f'  <circle cx="{_f(center)}" cy="{_f(center)}" r="3.0000" '
            f'fill="{STROKE}"/>'
        )
        lines.append(
            f'  <text x="{_f(center)}" y="{_f(center + 24.0)}" '
            'text-anchor="middle" font-family="sans-serif" font-size="13">'
            f"H({spec.feature_name}) = 0 {spec.unit}: nothing to apportion</text>"
        )
    for circle in spec.circles:
        lines.append(
            f'  <circle cx="{_f(circle.cx)}" cy="{_f(circle.cy)}" '
            f'r="{_f(circle.radius)}" fill="{circle.color}" '
            f'stroke="{STROKE}" stroke-width="1" '
            f'data-quantity="{circle.quantity}" data-bits="{_f(circle.bits)}"/>'
        )
    y = legend_top
    for circle in spec.circles:
        lines.append(
            f'  <rect x="12.0000" y="{_f(y)}" width="14.0000" height="14.0000" '
            f'fill="{circle.color}" stroke="{STROKE}" stroke-width="1"/>'
        )
        lines.append(
            f'  <text x="32.0000" y="{_f(y + 12.0)}" font-family="sans-serif" '
            f'font-size="13">{circle.quantity} = {_f(circle.bits)} {spec.unit}</text>'
        )
        y += 22.0
    if spec.degenerate:
        y += 22.0
    for note in spec.annotations:
        lines.append(
            f'  <rect x="12.0000" y="{_f(y)}" width="14.0000" height="14.0000" '
            f'fill="none" stroke="{STROKE}" stroke-width="1" '
            'stroke-dasharray="3,2"/>'
        )
        lines.append(
            f'  <text x="32.0000" y="{_f(y + 12.0)}" font-family="sans-serif" '
            f'font-size="13" fill="#555555">{note}: underdetermined</text>'
        )
        y += 22.0
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_diagram(spec: DiagramSpec, svg_path, sidecar_path=None) -> None:
    """Write the SVG and, optionally, a JSON sidecar of the exact geometry."""
    with open(svg_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_svg(spec))
    if sidecar_path is not None:
        with open(sidecar_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
