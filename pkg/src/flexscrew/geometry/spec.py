"""Parametric screw dimensions and the axial section profile."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

REGIONS = ("rigid", "flexible", "tip")


class SpecError(ValueError):
    """Raised when an operation receives a ScrewSpec that violates its invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid screw spec: " + "; ".join(self.violations))


@dataclass(frozen=True)
class ScrewSpec:
    """All dimensions in mm.

    ``thread_height`` is diametral: the radial thread depth is half of it, so
    the thread crest sits at ``core_d/2 + thread_height/2 <= od/2``.
    ``tip_radius`` defaults to ``core_d / 2``. ``slot_starts = 0`` disables
    the flexure slot.
    """

    od: float = 9.0
    core_d: float = 6.0
    pitch: float = 4.0
    thread_height: float = 3.0
    len_flexible: float = 30.8
    len_rigid: float = 18.0
    cannula_d: float = 3.0
    tip_radius: float | None = None
    slot_width: float = 1.0
    slot_pitch: float = 4.0
    slot_starts: int = 1
    # trapezoidal thread shape; not among the reference dimensions
    crest_width: float | None = None
    flank_angle_deg: float = 30.0

    def __post_init__(self):
        if self.tip_radius is None:
            object.__setattr__(self, "tip_radius", self.core_d / 2.0)
        if self.crest_width is None:
            object.__setattr__(self, "crest_width", self.pitch / 8.0)

    @property
    def body_length(self) -> float:
        return self.len_rigid + self.len_flexible

    @property
    def thread_depth(self) -> float:
        return self.thread_height / 2.0

    @property
    def tip_length(self) -> float:
        """Axial extent of the rounded tip up to where the bore exits it."""
        r, rc = self.tip_radius, self.cannula_d / 2.0
        return math.sqrt(max(r * r - rc * rc, 0.0))

    @classmethod
    def from_dict(cls, data: dict) -> "ScrewSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise SpecError([f"unknown field '{k}'" for k in sorted(unknown)])
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def validate_spec(spec: ScrewSpec) -> list[str]:
    """Return every violated invariant; an empty list means the specification is valid."""
    v = []
    try:
        values = {k: float(x) for k, x in spec.to_dict().items()}
    except (TypeError, ValueError):
        return ["all fields must be numeric"]
    if not all(math.isfinite(x) for x in values.values()):
        v.append("all fields must be finite")
        return v

    if not spec.cannula_d > 0:
        v.append("0 < cannula_d")
    if not spec.cannula_d < spec.core_d:
        v.append("cannula_d < core_d")
    if not spec.core_d < spec.od:
        v.append("core_d < od")
    if spec.thread_height < 0:
        v.append("thread_height >= 0")
    if spec.thread_height > spec.od - spec.core_d + 1e-12:
        v.append("thread_height <= od - core_d (thread_height is diametral)")
    for name in ("len_flexible", "len_rigid", "pitch", "slot_pitch"):
        if not getattr(spec, name) > 0:
            v.append(f"{name} > 0")
    if not 0 <= spec.slot_width < spec.slot_pitch:
        v.append("slot_width < slot_pitch")
    if spec.slot_starts != int(spec.slot_starts) or spec.slot_starts < 0:
        v.append("slot_starts is a non-negative integer")
    if spec.slot_starts > 0 and not spec.slot_width > 0:
        v.append("slot_width > 0 when slot_starts > 0")
    if not spec.cannula_d / 2.0 < spec.tip_radius <= spec.core_d / 2.0 + 1e-12:
        v.append("cannula_d/2 < tip_radius <= core_d/2")
    if spec.thread_height > 0:
        flank = spec.thread_depth * math.tan(math.radians(spec.flank_angle_deg))
        if not 0 <= spec.flank_angle_deg < 90:
            v.append("0 <= flank_angle_deg < 90")
        elif not (0 < spec.crest_width and spec.crest_width + 2 * flank < spec.pitch):
            v.append("0 < crest_width and crest_width + 2*flank run < pitch")
    return v


@dataclass(frozen=True)
class SectionProfile:
    """Axial stations ``(z, outer_d, inner_d, region)`` of the load-bearing core.

    Threads are not part of the profile: it describes the continuous wall the
    beam model sees.
    """

    z: np.ndarray
    outer_d: np.ndarray
    inner_d: np.ndarray
    region: tuple[str, ...]

    def __len__(self):
        return len(self.z)

    def rows(self):
        for z, do, di, r in zip(self.z, self.outer_d, self.inner_d, self.region):
            yield float(z), float(do), float(di), r


def section_properties(outer_d: float, inner_d: float) -> tuple[float, float]:
    """Area (mm^2) and second moment of area (mm^4) of an annulus."""
    if not 0 <= inner_d < outer_d:
        raise ValueError(f"need 0 <= inner_d < outer_d, got ({outer_d}, {inner_d})")
    area = math.pi * (outer_d**2 - inner_d**2) / 4.0
    second_moment = math.pi * (outer_d**4 - inner_d**4) / 64.0
    return area, second_moment


def build_profile(spec: ScrewSpec, step: float = 0.5) -> SectionProfile:
    """Sample the rigid, flexible and tip regions at roughly ``step`` spacing.

    The rigid region covers ``[0, len_rigid]``, the flexible region
    ``(len_rigid, body_length]``, and the tip runs over the hemispherical cap
    until its outer diameter meets the bore.
    """
    violations = validate_spec(spec)
    if violations:
        raise SpecError(violations)

    def stations(a, b, include_start):
        n = max(1, math.ceil((b - a) / step - 1e-9))
        s = np.linspace(a, b, n + 1)
        return s if include_start else s[1:]

    rigid = stations(0.0, spec.len_rigid, True)
    flexible = stations(spec.len_rigid, spec.body_length, False)
    tip_local = stations(0.0, spec.tip_length, False)

    r_tip, d_in = spec.tip_radius, spec.cannula_d
    tip_outer = 2.0 * np.sqrt(np.maximum(r_tip**2 - tip_local**2, 0.0))
    # last tip station is where the cap meets the bore; keep inner < outer
    tip_local, tip_outer = tip_local[tip_outer > d_in + 1e-9], tip_outer[tip_outer > d_in + 1e-9]

    z = np.concatenate([rigid, flexible, spec.body_length + tip_local])
    outer = np.concatenate(
        [np.full(len(rigid) + len(flexible), spec.core_d), tip_outer]
    )
    inner = np.full(len(z), d_in)
    region = ("rigid",) * len(rigid) + ("flexible",) * len(flexible) + ("tip",) * len(tip_local)
    return SectionProfile(z, outer, inner, region)
