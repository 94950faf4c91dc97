"""Axis-aligned BVH over mesh triangles, median split on the widest centroid axis.

Construction is fully deterministic: ties in centroid order are broken by
triangle id, so identical geometry always yields an identical tree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF_SIZE = 4


@dataclass
class FlatBVH:
    """Array-of-nodes BVH plus precomputed triangle data for the intersection kernels."""

    node_min: np.ndarray    # (n_nodes, 3)
    node_max: np.ndarray    # (n_nodes, 3)
    node_left: np.ndarray   # (n_nodes,) child index, -1 for leaves
    node_right: np.ndarray
    leaf_start: np.ndarray  # (n_nodes,) offset into tri_order, -1 for inner nodes
    leaf_count: np.ndarray  # (n_nodes,) 0 for inner nodes
    tri_order: np.ndarray   # (m,) permutation of triangle ids, leaf-contiguous
    tri_v0: np.ndarray      # (m, 3) first vertex per original triangle id
    tri_e1: np.ndarray      # (m, 3) edges from v0
    tri_e2: np.ndarray


def build_bvh(vertices: np.ndarray, triangles: np.ndarray, leaf_size: int = LEAF_SIZE) -> FlatBVH:
    n = len(triangles)
    tv = vertices[triangles]                       # (n, 3, 3)
    tri_min = tv.min(axis=1)
    tri_max = tv.max(axis=1)
    centroid = (tri_min + tri_max) * 0.5

    order = np.arange(n, dtype=np.int64)
    node_min, node_max = [], []
    node_left, node_right, leaf_start, leaf_count = [], [], [], []

    def new_node():
        node_min.append(None)
        node_max.append(None)
        node_left.append(-1)
        node_right.append(-1)
        leaf_start.append(-1)
        leaf_count.append(0)
        return len(node_left) - 1

    root = new_node()
    work = [(root, 0, n)]
    while work:
        node, s, e = work.pop()
        idx = order[s:e]
        node_min[node] = tri_min[idx].min(axis=0)
        node_max[node] = tri_max[idx].max(axis=0)
        if e - s <= leaf_size:
            leaf_start[node] = s
            leaf_count[node] = e - s
            continue
        c = centroid[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        # stable order: (coordinate, triangle id)
        order[s:e] = idx[np.lexsort((idx, c[:, axis]))]
        mid = s + (e - s) // 2
        left = new_node()
        right = new_node()
        node_left[node] = left
        node_right[node] = right
        work.append((right, mid, e))
        work.append((left, s, mid))

    v0 = np.ascontiguousarray(tv[:, 0, :])
    return FlatBVH(
        node_min=np.ascontiguousarray(node_min, dtype=np.float64),
        node_max=np.ascontiguousarray(node_max, dtype=np.float64),
        node_left=np.asarray(node_left, dtype=np.int64),
        node_right=np.asarray(node_right, dtype=np.int64),
        leaf_start=np.asarray(leaf_start, dtype=np.int64),
        leaf_count=np.asarray(leaf_count, dtype=np.int64),
        tri_order=order,
        tri_v0=v0,
        tri_e1=np.ascontiguousarray(tv[:, 1, :] - v0),
        tri_e2=np.ascontiguousarray(tv[:, 2, :] - v0),
    )


def bvh_for(mesh) -> FlatBVH:
    """Build (once) and cache the BVH on an AnnotatedMesh."""
    if mesh._bvh is None:
        mesh._bvh = build_bvh(mesh.vertices, mesh.triangles)
    return mesh._bvh
