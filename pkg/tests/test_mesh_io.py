import numpy as np
import pytest

from orbitseg._config import ConfigError
from orbitseg.mesh_io import (MeshError, compute_bounding_sphere,
                              load_annotated_mesh, load_material_map,
                              mesh_from_arrays, ritter_sphere)
from orbitseg.toymesh import (box_geometry, icosphere_geometry, satellite_obj,
                              sphere_obj, write_mesh_files)

CUBE_OBJ = """\
# unit cube, quad faces
usemtl hull
v -0.5 -0.5 -0.5
v -0.5 -0.5 0.5
v -0.5 0.5 -0.5
v -0.5 0.5 0.5
v 0.5 -0.5 -0.5
v 0.5 -0.5 0.5
v 0.5 0.5 -0.5
v 0.5 0.5 0.5
f 1 2 4 3
f 5 7 8 6
f 1 5 6 2
f 3 4 8 7
f 1 3 7 5
f 2 6 8 4
"""


def _write(tmp_path, obj_text, map_text):
    obj = tmp_path / "m.obj"
    mp = tmp_path / "m.materials"
    obj.write_text(obj_text)
    mp.write_text(map_text)
    return obj, mp


def test_cube_loads_with_twelve_triangles(tmp_path, tax):
    obj, mp = _write(tmp_path, CUBE_OBJ, "hull = 3\n")
    mesh = load_annotated_mesh(obj, load_material_map(mp, tax), tax)
    assert len(mesh.triangles) == 12
    assert (mesh.face_class == 3).all()
    assert mesh.sphere_radius == pytest.approx(np.sqrt(3) / 2, rel=1e-12)
    assert np.allclose(mesh.sphere_center, 0.0, atol=1e-12)
    assert np.allclose(mesh.bounds_min, -0.5) and np.allclose(mesh.bounds_max, 0.5)


def test_quad_face_fan_triangulates(tmp_path, tax):
    obj, mp = _write(tmp_path,
                     "usemtl wing\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n",
                     "wing = 2\n")
    mesh = load_annotated_mesh(obj, load_material_map(mp, tax), tax)
    assert len(mesh.triangles) == 2
    assert (mesh.face_class == 2).all()


def test_negative_obj_indices(tmp_path, tax):
    obj, mp = _write(tmp_path,
                     "usemtl a\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n",
                     "a = 1\n")
    mesh = load_annotated_mesh(obj, load_material_map(mp, tax), tax)
    assert len(mesh.triangles) == 1
    assert (mesh.triangles[0] == [0, 1, 2]).all()


def test_group_label_used_when_no_usemtl(tmp_path, tax):
    obj, mp = _write(tmp_path,
                     "g tank\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n",
                     "tank = 4\n")
    mesh = load_annotated_mesh(obj, load_material_map(mp, tax), tax)
    assert (mesh.face_class == 4).all()


def test_usemtl_wins_over_group(tmp_path, tax):
    obj, mp = _write(tmp_path,
                     "g tank\nusemtl shell\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n",
                     "shell = 5\ntank = 4\n")
    mesh = load_annotated_mesh(obj, load_material_map(mp, tax), tax)
    assert (mesh.face_class == 5).all()


def test_unmapped_material_rejected(tmp_path, tax):
    obj, mp = _write(tmp_path,
                     "usemtl mystery\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n",
                     "other = 1\n")
    with pytest.raises(MeshError, match="mystery"):
        load_annotated_mesh(obj, load_material_map(mp, tax), tax)


def test_wildcard_material_fallback(tmp_path, tax):
    obj, mp = _write(tmp_path,
                     "usemtl whatever\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n",
                     "* = 6\n")
    mesh = load_annotated_mesh(obj, load_material_map(mp, tax), tax)
    assert (mesh.face_class == 6).all()


def test_degenerate_triangles_dropped(tmp_path, tax):
    obj, mp = _write(tmp_path,
                     "usemtl a\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\n"
                     "f 1 2 3\nf 1 2 4\n",  # second is collinear
                     "a = 1\n")
    mesh = load_annotated_mesh(obj, load_material_map(mp, tax), tax)
    assert len(mesh.triangles) == 1


def test_material_map_rejects_background(tmp_path, tax):
    mp = tmp_path / "m.materials"
    mp.write_text("hull = 0\n")
    with pytest.raises(ConfigError, match="background"):
        load_material_map(mp, tax)


def test_material_map_rejects_out_of_range(tmp_path, tax):
    mp = tmp_path / "m.materials"
    mp.write_text("hull = 11\n")
    with pytest.raises(ConfigError):
        load_material_map(mp, tax)


def test_material_map_rejects_duplicates(tmp_path, tax):
    mp = tmp_path / "m.materials"
    mp.write_text("hull = 1\nhull = 2\n")
    with pytest.raises(ConfigError, match="duplicate"):
        load_material_map(mp, tax)


def test_mesh_from_arrays_rejects_background_faces(tax):
    verts, tris = box_geometry((0, 0, 0), (1, 1, 1))
    with pytest.raises(MeshError):
        mesh_from_arrays(verts, tris, np.zeros(len(tris), dtype=np.int64), tax)


def test_mesh_from_arrays_rejects_missing_vertex(tax):
    verts = np.zeros((2, 3))
    with pytest.raises(MeshError):
        mesh_from_arrays(verts, np.array([[0, 1, 2]]), np.array([1]), tax)


def test_face_normals_unit_and_outward(tax):
    mesh = mesh_from_arrays(*box_geometry((0, 0, 0), (2, 2, 2)),
                            face_class=np.ones(12, dtype=np.int64), taxonomy=tax)
    norms = np.linalg.norm(mesh.face_normal, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-12)
    centers = mesh.vertices[mesh.triangles].mean(axis=1)
    # outward winding: normal points away from the box center
    assert (np.einsum("ij,ij->i", mesh.face_normal, centers) > 0).all()


def test_bounding_sphere_contains_all_vertices():
    rng = np.random.default_rng(7)
    for _ in range(50):
        pts = rng.normal(size=(int(rng.integers(4, 300)), 3)) * rng.uniform(0.01, 100)
        center, radius = ritter_sphere(pts)
        assert np.linalg.norm(pts - center, axis=1).max() <= radius + 1e-9


def test_bounding_sphere_radius_floor():
    pts = np.zeros((5, 3))
    _, radius = ritter_sphere(pts)
    assert radius > 0


def test_compute_bounding_sphere_on_mesh(tax):
    verts, tris = icosphere_geometry(2.0, 2)
    mesh = mesh_from_arrays(verts, tris, np.ones(len(tris), dtype=np.int64), tax)
    center, radius = compute_bounding_sphere(mesh)
    assert radius == pytest.approx(2.0, rel=1e-6)
    assert np.allclose(center, 0.0, atol=1e-9)


def test_generated_satellite_round_trips_through_files(tmp_path, tax):
    obj_text, map_text = satellite_obj()
    obj, mp = write_mesh_files(tmp_path, "sat", obj_text, map_text)
    mesh = load_annotated_mesh(obj, load_material_map(mp, tax), tax)
    assert set(np.unique(mesh.face_class)) == {1, 2, 3, 4, 5, 6}
    assert len(mesh.triangles) > 100


def test_generated_sphere_round_trips(tmp_path, tax):
    obj_text, map_text = sphere_obj(radius=1.5, subdivisions=2, class_index=2)
    obj, mp = write_mesh_files(tmp_path, "ball", obj_text, map_text)
    mesh = load_annotated_mesh(obj, load_material_map(mp, tax), tax)
    assert (mesh.face_class == 2).all()
    assert mesh.sphere_radius == pytest.approx(1.5, rel=1e-6)
