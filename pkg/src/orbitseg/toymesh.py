"""Procedural test meshes: boxes, icospheres, and a toy satellite.

These exist so datasets, demos, and tests never depend on binary mesh
assets. Everything is generated deterministically; the satellite's part
names line up with the default taxonomy's class names.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh_io import AnnotatedMesh, mesh_from_arrays
from .taxonomy import ClassTaxonomy, default_taxonomy

# quad faces of a unit box, outward winding, as corner selectors
_BOX_QUADS = (
    ((0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)),  # -z
    ((0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)),  # +z
    ((0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)),  # -y
    ((0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)),  # +y
    ((0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)),  # -x
    ((1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)),  # +x
)


def box_geometry(center, size):
    """Vertices (8, 3) and triangles (12, 3) of an axis-aligned box."""
    center = np.asarray(center, dtype=np.float64)
    half = np.asarray(size, dtype=np.float64) / 2.0
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
                       dtype=np.float64)
    verts = center + (corners * 2.0 - 1.0) * half
    corner_index = {(x, y, z): (x * 4 + y * 2 + z) for x in (0, 1) for y in (0, 1) for z in (0, 1)}
    tris = []
    for quad in _BOX_QUADS:
        a, b, c, d = (corner_index[sel] for sel in quad)
        tris.append([a, b, c])
        tris.append([a, c, d])
    return verts, np.array(tris, dtype=np.int64)


def icosphere_geometry(radius: float = 1.0, subdivisions: int = 3, center=(0.0, 0.0, 0.0)):
    """Vertices and triangles of a subdivided icosahedron (20 * 4^n faces)."""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    vlist = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            got = cache.get(key)
            if got is not None:
                return got
            m = np.array(vlist[a]) + np.array(vlist[b])
            m /= np.linalg.norm(m)
            vlist.append(tuple(m))
            cache[key] = len(vlist) - 1
            return cache[key]

        nxt = []
        for a, b, c in faces:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            nxt += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nxt
    verts = np.array(vlist, dtype=np.float64) * radius + np.asarray(center, dtype=np.float64)
    return verts, np.array(faces, dtype=np.int64)


def cube_mesh(taxonomy: ClassTaxonomy | None = None, class_index: int = 1,
              center=(0.0, 0.0, 0.0), size=(1.0, 1.0, 1.0)) -> AnnotatedMesh:
    """Axis-aligned box, 12 triangles, all one class."""
    taxonomy = taxonomy or default_taxonomy()
    verts, tris = box_geometry(center, size)
    return mesh_from_arrays(verts, tris, np.full(len(tris), class_index, dtype=np.int64), taxonomy)


def sphere_mesh(taxonomy: ClassTaxonomy | None = None, class_index: int = 1,
                radius: float = 1.0, subdivisions: int = 3,
                center=(0.0, 0.0, 0.0)) -> AnnotatedMesh:
    """Icosphere of a single class."""
    taxonomy = taxonomy or default_taxonomy()
    verts, tris = icosphere_geometry(radius, subdivisions, center)
    return mesh_from_arrays(verts, tris, np.full(len(tris), class_index, dtype=np.int64), taxonomy)


# toy satellite parts: (part name, kind, params, default-taxonomy class name)
_SATELLITE_PARTS = (
    ("bus", "box", ((0.0, 0.0, 0.0), (1.2, 1.2, 1.6)), "main_module"),
    ("panel_left", "box", ((-2.1, 0.0, 0.0), (2.6, 1.0, 0.05)), "solar_panel"),
    ("panel_right", "box", ((2.1, 0.0, 0.0), (2.6, 1.0, 0.05)), "solar_panel"),
    ("sensor_head", "box", ((0.0, 0.45, 0.98), (0.32, 0.32, 0.36)), "sensor"),
    ("thruster_a", "box", ((-0.38, -0.38, -0.92), (0.22, 0.22, 0.34)), "thruster"),
    ("thruster_b", "box", ((0.38, 0.38, -0.92), (0.22, 0.22, 0.34)), "thruster"),
    ("dish", "sphere", ((0.0, -0.92, 0.35), 0.45, 2), "parabolic_reflector"),
    ("adapter", "box", ((0.0, 0.0, -1.02), (0.74, 0.74, 0.28)), "launch_vehicle_adapter"),
)


def _part_geometry(kind: str, params):
    if kind == "box":
        return box_geometry(*params)
    center, radius, subdiv = params
    return icosphere_geometry(radius, subdiv, center)


def satellite_mesh(taxonomy: ClassTaxonomy | None = None) -> AnnotatedMesh:
    """Toy six-part spacecraft: bus, two panels, sensor, thrusters, dish, adapter."""
    taxonomy = taxonomy or default_taxonomy()
    name_to_index = {c.name: c.index for c in taxonomy.classes}
    all_v = []
    all_t = []
    all_c = []
    offset = 0
    for _, kind, params, class_name in _SATELLITE_PARTS:
        verts, tris = _part_geometry(kind, params)
        all_v.append(verts)
        all_t.append(tris + offset)
        all_c.append(np.full(len(tris), name_to_index[class_name], dtype=np.int64))
        offset += len(verts)
    return mesh_from_arrays(np.vstack(all_v), np.vstack(all_t), np.concatenate(all_c), taxonomy)


def _obj_text(parts) -> str:
    """Wavefront text for (name, verts, tris) parts, usemtl per part."""
    lines = ["# generated toy mesh"]
    offset = 1  # OBJ indices are 1-based
    for name, verts, tris in parts:
        lines.append(f"o {name}")
        lines.append(f"usemtl {name}")
        for v in verts:
            lines.append("v {:.12g} {:.12g} {:.12g}".format(*v))
        for t in tris:
            lines.append("f {} {} {}".format(t[0] + offset, t[1] + offset, t[2] + offset))
        offset += len(verts)
    return "\n".join(lines) + "\n"


def satellite_obj() -> tuple[str, str]:
    """The toy satellite as (obj text, material map text) for file-based loads."""
    taxonomy = default_taxonomy()
    name_to_index = {c.name: c.index for c in taxonomy.classes}
    parts = []
    map_lines = ["# material -> class index"]
    for name, kind, params, class_name in _SATELLITE_PARTS:
        verts, tris = _part_geometry(kind, params)
        parts.append((name, verts, tris))
        map_lines.append(f"{name} = {name_to_index[class_name]}")
    return _obj_text(parts), "\n".join(map_lines) + "\n"


def sphere_obj(radius: float = 1.0, subdivisions: int = 3, class_index: int = 1) -> tuple[str, str]:
    """Single-class icosphere as (obj text, material map text)."""
    verts, tris = icosphere_geometry(radius, subdivisions)
    return _obj_text([("shell", verts, tris)]), f"shell = {class_index}\n"


def write_mesh_files(out_dir: str | Path, stem: str, obj_text: str, map_text: str) -> tuple[Path, Path]:
    """Write <stem>.obj and <stem>.materials under out_dir; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    obj_path = out / f"{stem}.obj"
    map_path = out / f"{stem}.materials"
    obj_path.write_text(obj_text, encoding="utf-8")
    map_path.write_text(map_text, encoding="utf-8")
    return obj_path, map_path
