"""Annotated triangle mesh loading.

Geometry comes from Wavefront-style text files (v/f records). Per-face class
labels ride on the material or group names already present in the file,
resolved through a sidecar material map, so a single mesh drives both the
shaded render and the mask render with guaranteed registration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._config import ConfigError, read_kv_lines
from .taxonomy import ClassTaxonomy

log = logging.getLogger(__name__)

# Triangles with area at or below this (m^2) are dropped as degenerate.
DEGENERATE_AREA = 1e-12

# Radius floor for degenerate (single-point) bounding spheres, meters.
MIN_SPHERE_RADIUS = 1e-6


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialClassMap:
    """Maps material/group names appearing in a mesh file to class indices.

    A ``*`` entry, if present, is the fallback for unmapped names.
    """

    entries: dict[str, int]

    def class_for(self, name: str) -> int | None:
        if name in self.entries:
            return self.entries[name]
        return self.entries.get("*")


@dataclass
class AnnotatedMesh:
    """Triangle mesh where every face carries a (non-background) class index.

    Immutable after load. ``face_normal`` is recomputed from winding
    (counter-clockwise seen from outside); normals in the source file are
    ignored. ``_bvh`` is a lazily built acceleration structure cache, derived
    entirely from the geometry.
    """

    vertices: np.ndarray        # (n, 3) float64, meters, model frame
    triangles: np.ndarray       # (m, 3) int64 vertex indices
    face_class: np.ndarray      # (m,) int64 class index per triangle
    bounds_min: np.ndarray      # (3,) axis-aligned bounding box
    bounds_max: np.ndarray
    sphere_center: np.ndarray   # (3,) bounding sphere
    sphere_radius: float
    face_normal: np.ndarray = field(repr=False, default=None)
    _bvh: object = field(repr=False, default=None, compare=False)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)


def _face_normals(vertices, triangles):
    v0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - v0
    e2 = vertices[triangles[:, 2]] - v0
    n = np.cross(e1, e2)
    norm = np.linalg.norm(n, axis=1)
    norm[norm == 0.0] = 1.0
    return n / norm[:, None]


def _triangle_areas(vertices, triangles):
    v0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - v0
    e2 = vertices[triangles[:, 2]] - v0
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def ritter_sphere(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Near-minimal bounding sphere of a point set (Ritter's two-pass method).

    Radius is within 1.1x of the minimal enclosing sphere in practice; a
    final growth pass guarantees containment of every point.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise MeshError("bounding sphere needs at least one vertex")
    x = points[0]
    y = points[np.argmax(((points - x) ** 2).sum(axis=1))]
    z = points[np.argmax(((points - y) ** 2).sum(axis=1))]
    center = (y + z) / 2.0
    radius = float(np.linalg.norm(z - y)) / 2.0
    # grow to cover outliers
    for _ in range(2):
        d = np.sqrt(((points - center) ** 2).sum(axis=1))
        worst = int(np.argmax(d))
        if d[worst] <= radius * (1.0 + 1e-12):
            break
        new_r = (radius + d[worst]) / 2.0
        center = center + (points[worst] - center) * ((d[worst] - new_r) / d[worst])
        radius = new_r
    # containment guarantee
    d = np.sqrt(((points - center) ** 2).sum(axis=1))
    radius = max(radius, float(d.max()))
    return center, max(radius, MIN_SPHERE_RADIUS)


def compute_bounding_sphere(mesh: AnnotatedMesh) -> tuple[np.ndarray, float]:
    """Recompute the bounding sphere of a mesh from its vertices."""
    return ritter_sphere(mesh.vertices)


def load_material_map(path: str | Path, taxonomy: ClassTaxonomy) -> MaterialClassMap:
    """Load ``name = class_index`` records; indices validated against the taxonomy.

    Geometry is never background, so mapping a material to class 0 is rejected.
    """
    path = Path(path)
    entries: dict[str, int] = {}
    for lineno, key, value in read_kv_lines(path):
        where = f"{path}:{lineno}"
        try:
            idx = int(value)
        except ValueError as exc:
            raise ConfigError(f"{where}: class index must be an integer, got {value!r}") from exc
        if not (0 <= idx < taxonomy.num_classes):
            raise ConfigError(f"{where}: class index {idx} out of range for {taxonomy.num_classes}-class taxonomy")
        if idx == taxonomy.background_index:
            raise ConfigError(f"{where}: material {key!r} mapped to background; geometry cannot be background")
        if key in entries:
            raise ConfigError(f"{where}: duplicate material entry {key!r}")
        entries[key] = idx
    return MaterialClassMap(entries)


def _parse_obj(path: Path):
    """Parse v/f records with usemtl/g/o label tracking. Returns (verts, polys).

    Each polygon is (label, [vertex ids]). The label of a face is the active
    usemtl name if one was seen, else the active group name, else "".
    """
    verts: list[list[float]] = []
    polys: list[tuple[str, list[int]]] = []
    cur_mtl = ""
    cur_group = ""
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        toks = raw.split()
        if not toks or toks[0].startswith("#"):
            continue
        rec = toks[0]
        if rec == "v":
            if len(toks) < 4:
                raise MeshError(f"{path}:{lineno}: vertex needs 3 coordinates")
            verts.append([float(t) for t in toks[1:4]])
        elif rec == "f":
            ids = []
            for tok in toks[1:]:
                head = tok.split("/", 1)[0]
                try:
                    i = int(head)
                except ValueError as exc:
                    raise MeshError(f"{path}:{lineno}: bad face index {tok!r}") from exc
                if i < 0:
                    i = len(verts) + 1 + i
                if not (1 <= i <= len(verts)):
                    raise MeshError(f"{path}:{lineno}: face references vertex {i} of {len(verts)}")
                ids.append(i - 1)
            if len(ids) < 3:
                raise MeshError(f"{path}:{lineno}: face needs at least 3 vertices")
            polys.append((cur_mtl or cur_group, ids))
        elif rec == "usemtl":
            cur_mtl = toks[1] if len(toks) > 1 else ""
        elif rec in ("g", "o"):
            cur_group = toks[1] if len(toks) > 1 else ""
        # vn/vt/s/mtllib and anything else: geometry-irrelevant, skipped
    return verts, polys


def load_annotated_mesh(mesh_path: str | Path, class_map: MaterialClassMap,
                        taxonomy: ClassTaxonomy) -> AnnotatedMesh:
    """Load a Wavefront-style mesh and attach a class index to every triangle.

    Polygons with more than 3 vertices are fan-triangulated from their first
    vertex; every fan triangle inherits the polygon's class. Degenerate
    triangles (area <= 1e-12 m^2) are dropped with a logged count.
    """
    mesh_path = Path(mesh_path)
    verts, polys = _parse_obj(mesh_path)
    if not verts or not polys:
        raise MeshError(f"{mesh_path}: empty mesh (no vertices or faces)")

    tri_rows = []
    cls_rows = []
    for label, ids in polys:
        cls = class_map.class_for(label)
        if cls is None:
            shown = label if label else "(unlabeled)"
            raise MeshError(f"{mesh_path}: material/group {shown!r} has no class mapping")
        for k in range(2, len(ids)):
            tri_rows.append((ids[0], ids[k - 1], ids[k]))
            cls_rows.append(cls)

    vertices = np.asarray(verts, dtype=np.float64)
    triangles = np.asarray(tri_rows, dtype=np.int64)
    face_class = np.asarray(cls_rows, dtype=np.int64)

    areas = _triangle_areas(vertices, triangles)
    keep = areas > DEGENERATE_AREA
    dropped = int((~keep).sum())
    if dropped:
        log.warning("%s: dropped %d degenerate triangle(s)", mesh_path, dropped)
        triangles = triangles[keep]
        face_class = face_class[keep]
    if len(triangles) == 0:
        raise MeshError(f"{mesh_path}: no non-degenerate triangles")
    if int(face_class.max()) >= taxonomy.num_classes or int(face_class.min()) <= 0:
        raise MeshError(f"{mesh_path}: face class out of range")

    center, radius = ritter_sphere(vertices)
    return AnnotatedMesh(
        vertices=vertices,
        triangles=triangles,
        face_class=face_class,
        bounds_min=vertices.min(axis=0),
        bounds_max=vertices.max(axis=0),
        sphere_center=center,
        sphere_radius=radius,
        face_normal=_face_normals(vertices, triangles),
    )


def mesh_from_arrays(vertices, triangles, face_class, taxonomy: ClassTaxonomy) -> AnnotatedMesh:
    """Build an AnnotatedMesh directly from arrays (programmatic meshes, tests)."""
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    face_class = np.ascontiguousarray(face_class, dtype=np.int64)
    if len(triangles) == 0:
        raise MeshError("no triangles")
    if triangles.max() >= len(vertices):
        raise MeshError("triangle references missing vertex")
    if int(face_class.max()) >= taxonomy.num_classes or int(face_class.min()) <= 0:
        raise MeshError("face class out of range")
    areas = _triangle_areas(vertices, triangles)
    if (areas <= DEGENERATE_AREA).any():
        raise MeshError("degenerate triangle")
    center, radius = ritter_sphere(vertices)
    return AnnotatedMesh(
        vertices=vertices,
        triangles=triangles,
        face_class=face_class,
        bounds_min=vertices.min(axis=0),
        bounds_max=vertices.max(axis=0),
        sphere_center=center,
        sphere_radius=radius,
        face_normal=_face_normals(vertices, triangles),
    )
