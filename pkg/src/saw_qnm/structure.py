"""Strip-array geometry: piecewise-constant index profiles and their builders.

A structure is an ordered list of segments, each either a free-surface gap
(index 1) or a metallized strip (index ``n_h >= 1``).  The first and last
segments are gaps, and amplitude nodes sit at segment midpoints.  Builders
start and end with half-gaps so the two outermost nodes lie next to the
crystal ends.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import yaml

DEFAULT_V0 = 3158.0  # m/s, ST-X quartz free surface
DEFAULT_STRIP_REFLECTANCE = 0.015
DEFAULT_METALLIZATION_RATIO = 0.5
DEFAULT_CENTER_PITCH = 0.475e-6
DEFAULT_MIRROR_PITCH = 0.48e-6

GAP = "gap"
STRIP = "strip"


class StructureError(ValueError):
    """Invalid geometry or structure configuration."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class Segment:
    length: float
    index: float
    kind: str

    def __post_init__(self):
        if self.kind not in (GAP, STRIP):
            raise StructureError("kind", f"expected 'gap' or 'strip', got {self.kind!r}")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise StructureError("length", f"must be positive and finite, got {self.length!r}")
        if self.kind == GAP and self.index != 1.0:
            raise StructureError("index", f"gap segments have index 1, got {self.index!r}")
        if self.kind == STRIP and not self.index >= 1.0:
            raise StructureError("index", f"strip index must be >= 1, got {self.index!r}")


@dataclass(frozen=True)
class StructureSpec:
    segments: tuple[Segment, ...]
    v0: float = DEFAULT_V0
    label: str = ""

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise StructureError("segments", "at least one segment is required")
        if segs[0].kind != GAP or segs[-1].kind != GAP:
            raise StructureError("segments", "first and last segments must be gaps")
        for k, (a, b) in enumerate(zip(segs, segs[1:])):
            if a.kind == b.kind:
                raise StructureError("segments", f"segments {k} and {k + 1} are both {a.kind}s")
        if not (self.v0 > 0 and math.isfinite(self.v0)):
            raise StructureError("v0", f"must be positive, got {self.v0!r}")

    @property
    def length(self) -> float:
        return math.fsum(s.length for s in self.segments)

    @property
    def n_strips(self) -> int:
        return sum(s.kind == STRIP for s in self.segments)

    @property
    def optical_length(self) -> float:
        """Sum of index * length; sets the free spectral range v0 / (2 * optical_length)."""
        return math.fsum(s.length * s.index for s in self.segments)

    def boundaries(self) -> list[float]:
        """Segment edge positions from x = 0 to x = d (len(segments) + 1 values)."""
        edges = [0.0]
        for s in self.segments:
            edges.append(edges[-1] + s.length)
        return edges

    def reversed(self) -> "StructureSpec":
        return replace(self, segments=tuple(reversed(self.segments)))

    def scaled(self, factor: float) -> "StructureSpec":
        segs = tuple(replace(s, length=s.length * factor) for s in self.segments)
        return replace(self, segments=segs)

    def with_v0(self, v0: float) -> "StructureSpec":
        return replace(self, v0=v0)


def strip_index(single_strip_reflectance: float) -> float:
    """Strip index n_h for n_l = 1, from r_s = 2 (n_h - n_l) / (n_h + n_l)."""
    half = single_strip_reflectance / 2.0
    if not -1.0 < half < 1.0:
        raise StructureError("single_strip_reflectance", "|r_s| must be below 2")
    return (1.0 + half) / (1.0 - half)


@dataclass(frozen=True)
class CrystalRecipe:
    n_total: int
    n_mirror: int = 0
    center_strip_period: float = DEFAULT_CENTER_PITCH
    mirror_strip_period: float = DEFAULT_MIRROR_PITCH
    metallization_ratio: float = DEFAULT_METALLIZATION_RATIO
    single_strip_reflectance: float = DEFAULT_STRIP_REFLECTANCE

    def __post_init__(self):
        if int(self.n_total) != self.n_total or self.n_total < 1:
            raise StructureError("n_total", f"must be a positive integer, got {self.n_total!r}")
        if int(self.n_mirror) != self.n_mirror or self.n_mirror < 0:
            raise StructureError("n_mirror", f"must be a non-negative integer, got {self.n_mirror!r}")
        if 2 * self.n_mirror > self.n_total:
            raise StructureError("n_mirror", "2 * n_mirror exceeds n_total")
        for name in ("center_strip_period", "mirror_strip_period"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise StructureError(name, f"must be positive, got {value!r}")
        if not 0.0 < self.metallization_ratio < 1.0:
            raise StructureError("metallization_ratio", f"must lie in (0, 1), got {self.metallization_ratio!r}")
        if self.single_strip_reflectance < 0:
            raise StructureError("single_strip_reflectance", "must be non-negative")
        strip_index(self.single_strip_reflectance)

    @property
    def n_high(self) -> float:
        return strip_index(self.single_strip_reflectance)

    @property
    def n_center(self) -> int:
        return self.n_total - 2 * self.n_mirror


def central_bragg_frequency(recipe: CrystalRecipe, v0: float = DEFAULT_V0) -> float:
    """Stopband midpoint of the central strip pitch, using the length-averaged index."""
    ratio = recipe.metallization_ratio
    n_avg = ratio * recipe.n_high + (1.0 - ratio)
    return v0 / (2.0 * recipe.center_strip_period * n_avg)


def _strip_array(pitches: Sequence[float], ratio: float, n_high: float) -> list[Segment]:
    # Gap between strips k and k+1 is half of each neighbour's own gap, so a
    # period change happens at that gap's midpoint.
    half_gaps = [p * (1.0 - ratio) / 2.0 for p in pitches]
    segs = [Segment(half_gaps[0], 1.0, GAP)]
    for k, p in enumerate(pitches):
        segs.append(Segment(p * ratio, n_high, STRIP))
        if k + 1 < len(pitches):
            segs.append(Segment(half_gaps[k] + half_gaps[k + 1], 1.0, GAP))
        else:
            segs.append(Segment(half_gaps[k], 1.0, GAP))
    return segs


def build_uniform_crystal(recipe: CrystalRecipe, v0: float = DEFAULT_V0, label: str = "") -> StructureSpec:
    """N identical strips at the center pitch, ``2N + 1`` segments, length N * pitch."""
    if recipe.n_mirror != 0:
        raise StructureError("n_mirror", "uniform crystal requires n_mirror = 0")
    pitches = [recipe.center_strip_period] * recipe.n_total
    segs = _strip_array(pitches, recipe.metallization_ratio, recipe.n_high)
    return StructureSpec(tuple(segs), v0=v0, label=label)


def build_mirrored_crystal(recipe: CrystalRecipe, v0: float = DEFAULT_V0, label: str = "") -> StructureSpec:
    """Crystal whose ``n_mirror`` outermost strips on each side use the mirror pitch."""
    if recipe.n_mirror == 0:
        return build_uniform_crystal(recipe, v0=v0, label=label)
    if 2 * recipe.n_mirror >= recipe.n_total:
        raise StructureError("n_mirror", "mirrors leave no center region (2 * n_mirror >= n_total)")
    mirror = [recipe.mirror_strip_period] * recipe.n_mirror
    pitches = mirror + [recipe.center_strip_period] * recipe.n_center + mirror
    segs = _strip_array(pitches, recipe.metallization_ratio, recipe.n_high)
    return StructureSpec(tuple(segs), v0=v0, label=label)


def build_empty_cavity(
    gap_length: float,
    n_mirror: int,
    mirror_strip_period: float = DEFAULT_MIRROR_PITCH,
    metallization_ratio: float = DEFAULT_METALLIZATION_RATIO,
    single_strip_reflectance: float = DEFAULT_STRIP_REFLECTANCE,
    v0: float = DEFAULT_V0,
    label: str = "",
) -> StructureSpec:
    """Two Bragg mirrors separated by a single metal-free gap of ``gap_length``.

    With ``n_mirror = 0`` the result is one bare gap segment.
    """
    if not (gap_length > 0 and math.isfinite(gap_length)):
        raise StructureError("gap_length", f"must be positive, got {gap_length!r}")
    if int(n_mirror) != n_mirror or n_mirror < 0:
        raise StructureError("n_mirror", f"must be a non-negative integer, got {n_mirror!r}")
    if n_mirror == 0:
        return StructureSpec((Segment(gap_length, 1.0, GAP),), v0=v0, label=label)
    # Validates the shared fields.
    recipe = CrystalRecipe(
        n_total=n_mirror,
        mirror_strip_period=mirror_strip_period,
        metallization_ratio=metallization_ratio,
        single_strip_reflectance=single_strip_reflectance,
    )
    mirror = _strip_array([mirror_strip_period] * n_mirror, metallization_ratio, recipe.n_high)
    cavity = Segment(gap_length, 1.0, GAP)
    segs = mirror[:-1] + [cavity] + mirror[1:]
    return StructureSpec(tuple(segs), v0=v0, label=label)


def build_from_recipe(recipe: CrystalRecipe, v0: float = DEFAULT_V0, label: str = "") -> StructureSpec:
    return build_mirrored_crystal(recipe, v0=v0, label=label)


_CATALOG = (
    ("R1", 300, 0),
    ("R2", 300, 50),
    ("R3", 300, 100),
    ("R4", 400, 0),
    ("R5", 400, 100),
    ("R6", 400, 150),
    ("R7", 600, 0),
    ("R8", 600, 200),
    ("R9", 600, 250),
)


def recipe_catalog() -> list[tuple[str, CrystalRecipe]]:
    """The nine reference crystals: three lengths, each with three mirror sizes."""
    return [(label, CrystalRecipe(n_total=n, n_mirror=ng)) for label, n, ng in _CATALOG]


def catalog_structure(label: str, v0: float = DEFAULT_V0) -> StructureSpec:
    for name, recipe in recipe_catalog():
        if name == label:
            return build_mirrored_crystal(recipe, v0=v0, label=name)
    raise StructureError("label", f"unknown catalog entry {label!r}")


# --- configuration files ----------------------------------------------------

_CONFIG_KEYS = {"label", "v0_m_per_s", "strip_reflectance", "metallization_ratio", "recipe", "segments"}
_RECIPE_KEYS = {"n_total", "n_mirror", "center_strip_period_m", "mirror_strip_period_m"}


def _as_float(value, name: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise StructureError(name, f"expected a number, got {value!r}") from None


def structure_from_config(data: dict) -> StructureSpec:
    """Build a structure from a parsed configuration mapping.

    An explicit ``segments`` list takes precedence over ``recipe``.
    """
    if not isinstance(data, dict):
        raise StructureError("config", "top level must be a mapping")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise StructureError("config", f"unknown keys {sorted(unknown)}")
    label = str(data.get("label", ""))
    v0 = _as_float(data.get("v0_m_per_s", DEFAULT_V0), "v0_m_per_s")
    r_s = _as_float(data.get("strip_reflectance", DEFAULT_STRIP_REFLECTANCE), "strip_reflectance")
    ratio = _as_float(data.get("metallization_ratio", DEFAULT_METALLIZATION_RATIO), "metallization_ratio")

    if data.get("segments") is not None:
        raw = data["segments"]
        if not isinstance(raw, list):
            raise StructureError("segments", "expected a list of [length_m, index, kind]")
        segs = []
        for k, item in enumerate(raw):
            if isinstance(item, dict):
                item = [item.get("length_m"), item.get("index"), item.get("kind")]
            if not isinstance(item, (list, tuple)) or len(item) != 3:
                raise StructureError(f"segments[{k}]", "expected [length_m, index, kind]")
            length, index, kind = item
            segs.append(Segment(_as_float(length, f"segments[{k}].length_m"),
                                _as_float(index, f"segments[{k}].index"), str(kind)))
        return StructureSpec(tuple(segs), v0=v0, label=label)

    rec = data.get("recipe")
    if rec is None:
        raise StructureError("config", "either 'recipe' or 'segments' is required")
    if not isinstance(rec, dict):
        raise StructureError("recipe", "expected a mapping")
    unknown = set(rec) - _RECIPE_KEYS
    if unknown:
        raise StructureError("recipe", f"unknown keys {sorted(unknown)}")
    if "n_total" not in rec:
        raise StructureError("recipe.n_total", "missing")
    recipe = CrystalRecipe(
        n_total=rec["n_total"],
        n_mirror=rec.get("n_mirror", 0),
        center_strip_period=_as_float(rec.get("center_strip_period_m", DEFAULT_CENTER_PITCH),
                                      "recipe.center_strip_period_m"),
        mirror_strip_period=_as_float(rec.get("mirror_strip_period_m", DEFAULT_MIRROR_PITCH),
                                      "recipe.mirror_strip_period_m"),
        metallization_ratio=ratio,
        single_strip_reflectance=r_s,
    )
    return build_mirrored_crystal(recipe, v0=v0, label=label)


def load_structure_config(path: str | Path) -> StructureSpec:
    """Read a YAML (or JSON) structure file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise StructureError("config", f"cannot parse {path}: {exc}") from None
    return structure_from_config(data)


def segments_from_pairs(pairs: Iterable[tuple[float, float, str]]) -> tuple[Segment, ...]:
    return tuple(Segment(float(l), float(n), k) for l, n, k in pairs)
