import numpy as np
import pytest

from orbitseg.mesh_io import mesh_from_arrays
from orbitseg.taxonomy import default_taxonomy
from orbitseg.toymesh import box_geometry


@pytest.fixture(scope="session")
def tax():
    return default_taxonomy()


@pytest.fixture(scope="session", autouse=True)
def warm_kernels(tax):
    """Compile (or load from cache) the ray kernels once per session so no
    individual test pays the jit cost."""
    from orbitseg.render import default_scene, render_pair, sample_poses
    from orbitseg.toymesh import cube_mesh
    mesh = cube_mesh(tax, class_index=1)
    pose = sample_poses(mesh, 1, [1.0], seed=0)[0]
    render_pair(mesh, default_scene(mesh.sphere_radius), pose, 4, 4, tax)


@pytest.fixture(scope="session")
def two_box_mesh(tax):
    """Two separated boxes with distinct classes; the two-component toy scene."""
    v1, t1 = box_geometry((-0.8, 0.0, 0.0), (1.2, 1.2, 1.2))
    v2, t2 = box_geometry((0.8, 0.0, 0.0), (1.2, 1.2, 1.2))
    verts = np.vstack([v1, v2])
    tris = np.vstack([t1, t2 + len(v1)])
    classes = np.concatenate([np.full(len(t1), 1), np.full(len(t2), 2)])
    return mesh_from_arrays(verts, tris, classes, tax)
