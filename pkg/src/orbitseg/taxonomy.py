"""Class taxonomy: the ordered semantic space shared by masks, meshes, and metrics.

A taxonomy is a list of classes with contiguous indices starting at 0,
where index 0 is always the background ("no geometry") class. Each class
carries a display color used both as the mask palette and as the flat
albedo of that class in rendered images, so the color/index mapping must
be a bijection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ._config import ConfigError, read_kv_lines

VALID_ROLES = frozenset({"fixate", "avoid", "neutral", "background"})

# Default 11-class palette. Background is black; component colors are a
# maximally-separated set chosen for human inspection of masks. Classes 7-10
# are placeholder component slots, overridable via a taxonomy config file.
_DEFAULT_CLASSES = [
    (0, "background", (0, 0, 0), "background"),
    (1, "main_module", (230, 25, 75), "neutral"),
    (2, "solar_panel", (60, 180, 75), "neutral"),
    (3, "sensor", (255, 225, 25), "neutral"),
    (4, "thruster", (0, 130, 200), "avoid"),
    (5, "parabolic_reflector", (245, 130, 48), "neutral"),
    (6, "launch_vehicle_adapter", (145, 30, 180), "fixate"),
    (7, "component_7", (70, 240, 240), "neutral"),
    (8, "component_8", (240, 50, 230), "neutral"),
    (9, "component_9", (210, 245, 60), "neutral"),
    (10, "component_10", (250, 190, 212), "neutral"),
]


class TaxonomyError(ValueError):
    pass


@dataclass(frozen=True)
class ClassDef:
    """One semantic class: index, name, display color, and a rendezvous role hint.

    role_hint is advisory metadata (components to fixate on vs. avoid during
    approach); no operation branches on it.
    """

    index: int
    name: str
    display_color: tuple[int, int, int]
    role_hint: str = "neutral"

    def __post_init__(self):
        if not self.name or any(c.isspace() for c in self.name):
            raise TaxonomyError(f"class {self.index}: name must be nonempty without whitespace, got {self.name!r}")
        if len(self.display_color) != 3 or any(not (0 <= c <= 255) for c in self.display_color):
            raise TaxonomyError(f"class {self.name!r}: display color must be three 0-255 values")
        if self.role_hint not in VALID_ROLES:
            raise TaxonomyError(f"class {self.name!r}: unknown role hint {self.role_hint!r}")


@dataclass(frozen=True)
class ClassTaxonomy:
    """Ordered, validated set of classes. Immutable; safe to share across threads."""

    classes: tuple[ClassDef, ...]
    background_index: int = 0
    _color_lut: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        k = len(self.classes)
        if k < 2:
            raise TaxonomyError(f"taxonomy needs at least 2 classes, got {k}")
        indices = [c.index for c in self.classes]
        if indices != list(range(k)):
            raise TaxonomyError(f"non-contiguous indices: {sorted(indices)}")
        names = [c.name for c in self.classes]
        if len(set(names)) != k:
            dup = sorted({n for n in names if names.count(n) > 1})
            raise TaxonomyError(f"duplicate class name: {dup[0]!r}")
        colors = [c.display_color for c in self.classes]
        if len(set(colors)) != k:
            dup = sorted({c for c in colors if colors.count(c) > 1})
            raise TaxonomyError(f"duplicate display color: {dup[0]}")
        if self.background_index != 0 or self.classes[0].role_hint != "background":
            raise TaxonomyError("class 0 must be the background class")
        if sum(1 for c in self.classes if c.role_hint == "background") != 1:
            raise TaxonomyError("exactly one class may carry the background role")
        object.__setattr__(self, "_color_lut", {c.display_color: c.index for c in self.classes})

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def color_of(self, index: int) -> tuple[int, int, int]:
        return self.classes[index].display_color

    def name_of(self, index: int) -> str:
        return self.classes[index].name

    def palette(self):
        """Display colors as a (K, 3) uint8 array, row k = color of class k."""
        import numpy as np

        return np.array([c.display_color for c in self.classes], dtype=np.uint8)

    def serialize(self) -> str:
        lines = ["# orbitseg taxonomy v1"]
        for c in self.classes:
            r, g, b = c.display_color
            lines.append(f"class = {c.index} {c.name} {r} {g} {b} {c.role_hint}")
        return "\n".join(lines) + "\n"


def default_taxonomy() -> ClassTaxonomy:
    """The built-in 11-class spacecraft-component taxonomy (background + 10 components)."""
    return ClassTaxonomy(tuple(ClassDef(i, n, c, r) for i, n, c, r in _DEFAULT_CLASSES))


def load_taxonomy(path: str | Path) -> ClassTaxonomy:
    """Load and validate a taxonomy config file.

    Each record line is ``class = <index> <name> <r> <g> <b> <role>``.
    Raises TaxonomyError or ConfigError with file/line context on any
    invariant violation (duplicate color or name, non-contiguous indices, ...).
    """
    path = Path(path)
    records = []
    for lineno, key, value in read_kv_lines(path):
        where = f"{path}:{lineno}"
        if key != "class":
            raise ConfigError(f"{where}: unknown key {key!r} (expected 'class')")
        parts = value.split()
        if len(parts) != 6:
            raise ConfigError(f"{where}: expected '<index> <name> <r> <g> <b> <role>', got {value!r}")
        try:
            index = int(parts[0])
            color = tuple(int(p) for p in parts[2:5])
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        try:
            records.append(ClassDef(index, parts[1], color, parts[5]))
        except TaxonomyError as exc:
            raise TaxonomyError(f"{where}: {exc}") from exc
    records.sort(key=lambda c: c.index)
    try:
        return ClassTaxonomy(tuple(records))
    except TaxonomyError as exc:
        raise TaxonomyError(f"{path}: {exc}") from exc


def save_taxonomy(taxonomy: ClassTaxonomy, path: str | Path) -> None:
    Path(path).write_text(taxonomy.serialize())


def color_to_index(taxonomy: ClassTaxonomy, color) -> int:
    """Exact-match lookup of a display color; no nearest-color guessing."""
    key = (int(color[0]), int(color[1]), int(color[2]))
    idx = taxonomy._color_lut.get(key)
    if idx is None:
        raise TaxonomyError(f"color {key} is not in the taxonomy palette")
    return idx
