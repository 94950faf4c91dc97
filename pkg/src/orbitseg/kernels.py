"""Numba kernels: watertight ray/triangle intersection, BVH traversal, frame rendering.

The triangle test is the shear/edge-function formulation (translate to ray
origin, shear so the ray is +z, evaluate 2D edge functions). Rays cannot
slip between triangles sharing an edge: boundary hits (edge function 0) are
accepted, and equal-distance ties are broken by lower triangle id.

All kernels write disjoint per-pixel outputs and share only immutable
inputs, so results are bit-identical regardless of thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

T_MIN = 1e-6  # minimum hit distance, meters


@njit(cache=True, error_model="numpy")
def traverse(o0, o1, o2, d0, d1, d2, t_min, any_hit,
             node_min, node_max, node_left, node_right, leaf_start, leaf_count,
             tri_order, tri_v0, tri_e1, tri_e2):
    """Nearest-hit (or first-hit when any_hit) BVH traversal.

    Returns (t, tri_id, w0, w1, w2); tri_id is -1 on miss. (w0, w1, w2)
    are barycentric weights of the triangle's three vertices.
    """
    # shear setup: kz is the dominant direction axis
    ax = abs(d0)
    ay = abs(d1)
    az = abs(d2)
    if az >= ax and az >= ay:
        kz = 2
    elif ay >= ax:
        kz = 1
    else:
        kz = 0
    kx = kz + 1
    if kx == 3:
        kx = 0
    ky = kx + 1
    if ky == 3:
        ky = 0
    if kz == 0:
        dkz = d0
    elif kz == 1:
        dkz = d1
    else:
        dkz = d2
    if dkz < 0.0:
        kx, ky = ky, kx
    # components after the (possible) swap
    if kx == 0:
        dkx = d0
    elif kx == 1:
        dkx = d1
    else:
        dkx = d2
    if ky == 0:
        dky = d0
    elif ky == 1:
        dky = d1
    else:
        dky = d2
    sz = 1.0 / dkz
    sx = dkx * sz
    sy = dky * sz

    inv0 = 1.0 / d0
    inv1 = 1.0 / d1
    inv2 = 1.0 / d2

    best_t = np.inf
    best_tri = np.int64(-1)
    best_w0 = 0.0
    best_w1 = 0.0
    best_w2 = 0.0

    stack = np.empty(64, dtype=np.int64)
    sp = 0
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        # slab test against [t_min, best_t]; NaN comparisons fall through (conservative)
        tn = t_min
        tf = best_t
        t0 = (node_min[node, 0] - o0) * inv0
        t1 = (node_max[node, 0] - o0) * inv0
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > tn:
            tn = t0
        if t1 < tf:
            tf = t1
        t0 = (node_min[node, 1] - o1) * inv1
        t1 = (node_max[node, 1] - o1) * inv1
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > tn:
            tn = t0
        if t1 < tf:
            tf = t1
        t0 = (node_min[node, 2] - o2) * inv2
        t1 = (node_max[node, 2] - o2) * inv2
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > tn:
            tn = t0
        if t1 < tf:
            tf = t1
        if tn > tf:
            continue

        if leaf_count[node] > 0:
            for k in range(leaf_start[node], leaf_start[node] + leaf_count[node]):
                tri = tri_order[k]
                # vertices translated to ray origin
                a0 = tri_v0[tri, 0] - o0
                a1 = tri_v0[tri, 1] - o1
                a2 = tri_v0[tri, 2] - o2
                b0 = a0 + tri_e1[tri, 0]
                b1 = a1 + tri_e1[tri, 1]
                b2 = a2 + tri_e1[tri, 2]
                c0 = a0 + tri_e2[tri, 0]
                c1 = a1 + tri_e2[tri, 1]
                c2 = a2 + tri_e2[tri, 2]
                # pick sheared components
                if kx == 0:
                    akx, bkx, ckx = a0, b0, c0
                elif kx == 1:
                    akx, bkx, ckx = a1, b1, c1
                else:
                    akx, bkx, ckx = a2, b2, c2
                if ky == 0:
                    aky, bky, cky = a0, b0, c0
                elif ky == 1:
                    aky, bky, cky = a1, b1, c1
                else:
                    aky, bky, cky = a2, b2, c2
                if kz == 0:
                    akz, bkz, ckz = a0, b0, c0
                elif kz == 1:
                    akz, bkz, ckz = a1, b1, c1
                else:
                    akz, bkz, ckz = a2, b2, c2
                ax_ = akx - sx * akz
                ay_ = aky - sy * akz
                bx_ = bkx - sx * bkz
                by_ = bky - sy * bkz
                cx_ = ckx - sx * ckz
                cy_ = cky - sy * ckz
                u = cx_ * by_ - cy_ * bx_
                v = ax_ * cy_ - ay_ * cx_
                w = bx_ * ay_ - by_ * ax_
                if (u < 0.0 or v < 0.0 or w < 0.0) and (u > 0.0 or v > 0.0 or w > 0.0):
                    continue
                det = u + v + w
                if det == 0.0:
                    continue
                t = (u * (sz * akz) + v * (sz * bkz) + w * (sz * ckz)) / det
                if t <= t_min:
                    continue
                if any_hit:
                    return t, tri, u / det, v / det, w / det
                if t < best_t - 1e-12:
                    best_t = t
                    best_tri = tri
                    best_w0 = u / det
                    best_w1 = v / det
                    best_w2 = w / det
                elif abs(t - best_t) <= 1e-12 and tri < best_tri:
                    best_tri = tri
                    best_w0 = u / det
                    best_w1 = v / det
                    best_w2 = w / det
        else:
            stack[sp] = node_right[node]
            sp += 1
            stack[sp] = node_left[node]
            sp += 1
    return best_t, best_tri, best_w0, best_w1, best_w2


@njit(cache=True, error_model="numpy")
def _shade(px, py, pz, d0, d1, d2, t, tri,
           node_min, node_max, node_left, node_right, leaf_start, leaf_count,
           tri_order, tri_v0, tri_e1, tri_e2,
           face_normal, face_class, albedo,
           sun_dir, sun_rgb, earth_pts, earth_rgb, ambient, shadow_bias):
    """Linear-light Lambert shading of one hit: sun (hard-shadowed) + planar
    earthshine (centroid + 4 corner samples, unshadowed) + ambient floor."""
    hx = px + t * d0
    hy = py + t * d1
    hz = pz + t * d2
    n0 = face_normal[tri, 0]
    n1 = face_normal[tri, 1]
    n2 = face_normal[tri, 2]

    sun_term = 0.0
    ndl = n0 * sun_dir[0] + n1 * sun_dir[1] + n2 * sun_dir[2]
    if ndl > 0.0:
        so0 = hx + n0 * shadow_bias
        so1 = hy + n1 * shadow_bias
        so2 = hz + n2 * shadow_bias
        _, occ, _, _, _ = traverse(so0, so1, so2, sun_dir[0], sun_dir[1], sun_dir[2],
                                   T_MIN, True,
                                   node_min, node_max, node_left, node_right,
                                   leaf_start, leaf_count, tri_order, tri_v0, tri_e1, tri_e2)
        if occ < 0:
            sun_term = ndl

    earth_term = 0.0
    for k in range(earth_pts.shape[0]):
        w0 = earth_pts[k, 0] - hx
        w1 = earth_pts[k, 1] - hy
        w2 = earth_pts[k, 2] - hz
        wn = np.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
        if wn > 0.0:
            ndw = (n0 * w0 + n1 * w1 + n2 * w2) / wn
            if ndw > 0.0:
                earth_term += ndw
    earth_term /= earth_pts.shape[0]

    cls = face_class[tri]
    r = albedo[cls, 0] * (sun_rgb[0] * sun_term + earth_rgb[0] * earth_term + ambient)
    g = albedo[cls, 1] * (sun_rgb[1] * sun_term + earth_rgb[1] * earth_term + ambient)
    b = albedo[cls, 2] * (sun_rgb[2] * sun_term + earth_rgb[2] * earth_term + ambient)
    return r, g, b


@njit(cache=True, parallel=True, error_model="numpy")
def render_frame(width, height, cam_o, fwd, rgt, upv, half_w, half_h, supersample,
                 node_min, node_max, node_left, node_right, leaf_start, leaf_count,
                 tri_order, tri_v0, tri_e1, tri_e2,
                 face_normal, face_class, albedo,
                 sun_dir, sun_rgb, earth_pts, earth_rgb, ambient, shadow_bias,
                 out_rgb, out_tri):
    """Fill linear RGB (float64 HxWx3) and hit triangle ids (int64 HxW, -1 = miss).

    The mask/registration ray is always the pixel-center ray; supersampling
    (an s x s grid) affects only the RGB average.
    """
    for i in prange(height):
        for j in range(width):
            # pixel-center ray
            ndx = (2.0 * (j + 0.5) / width - 1.0) * half_w
            ndy = (1.0 - 2.0 * (i + 0.5) / height) * half_h
            d0 = fwd[0] + ndx * rgt[0] + ndy * upv[0]
            d1 = fwd[1] + ndx * rgt[1] + ndy * upv[1]
            d2 = fwd[2] + ndx * rgt[2] + ndy * upv[2]
            dn = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
            d0 /= dn
            d1 /= dn
            d2 /= dn
            t, tri, _, _, _ = traverse(cam_o[0], cam_o[1], cam_o[2], d0, d1, d2,
                                       T_MIN, False,
                                       node_min, node_max, node_left, node_right,
                                       leaf_start, leaf_count, tri_order, tri_v0, tri_e1, tri_e2)
            out_tri[i, j] = tri

            if supersample <= 1:
                if tri >= 0:
                    r, g, b = _shade(cam_o[0], cam_o[1], cam_o[2], d0, d1, d2, t, tri,
                                     node_min, node_max, node_left, node_right,
                                     leaf_start, leaf_count, tri_order, tri_v0, tri_e1, tri_e2,
                                     face_normal, face_class, albedo,
                                     sun_dir, sun_rgb, earth_pts, earth_rgb, ambient, shadow_bias)
                else:
                    r = 0.0
                    g = 0.0
                    b = 0.0
            else:
                r = 0.0
                g = 0.0
                b = 0.0
                for si in range(supersample):
                    for sj in range(supersample):
                        sx = (2.0 * (j + (sj + 0.5) / supersample) / width - 1.0) * half_w
                        sy = (1.0 - 2.0 * (i + (si + 0.5) / supersample) / height) * half_h
                        e0 = fwd[0] + sx * rgt[0] + sy * upv[0]
                        e1_ = fwd[1] + sx * rgt[1] + sy * upv[1]
                        e2_ = fwd[2] + sx * rgt[2] + sy * upv[2]
                        en = np.sqrt(e0 * e0 + e1_ * e1_ + e2_ * e2_)
                        e0 /= en
                        e1_ /= en
                        e2_ /= en
                        ts, tris, _, _, _ = traverse(cam_o[0], cam_o[1], cam_o[2], e0, e1_, e2_,
                                                     T_MIN, False,
                                                     node_min, node_max, node_left, node_right,
                                                     leaf_start, leaf_count, tri_order,
                                                     tri_v0, tri_e1, tri_e2)
                        if tris >= 0:
                            sr, sg, sb = _shade(cam_o[0], cam_o[1], cam_o[2], e0, e1_, e2_, ts, tris,
                                                node_min, node_max, node_left, node_right,
                                                leaf_start, leaf_count, tri_order, tri_v0, tri_e1, tri_e2,
                                                face_normal, face_class, albedo,
                                                sun_dir, sun_rgb, earth_pts, earth_rgb, ambient, shadow_bias)
                            r += sr
                            g += sg
                            b += sb
                n_s = supersample * supersample
                r /= n_s
                g /= n_s
                b /= n_s
            out_rgb[i, j, 0] = r
            out_rgb[i, j, 1] = g
            out_rgb[i, j, 2] = b


@njit(cache=True, parallel=True, error_model="numpy")
def hit_frame(width, height, cam_o, fwd, rgt, upv, half_w, half_h,
              node_min, node_max, node_left, node_right, leaf_start, leaf_count,
              tri_order, tri_v0, tri_e1, tri_e2, out_tri):
    """Pixel-center primary-ray hit ids only (for registration checks and dry stats)."""
    for i in prange(height):
        for j in range(width):
            ndx = (2.0 * (j + 0.5) / width - 1.0) * half_w
            ndy = (1.0 - 2.0 * (i + 0.5) / height) * half_h
            d0 = fwd[0] + ndx * rgt[0] + ndy * upv[0]
            d1 = fwd[1] + ndx * rgt[1] + ndy * upv[1]
            d2 = fwd[2] + ndx * rgt[2] + ndy * upv[2]
            dn = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
            _, tri, _, _, _ = traverse(cam_o[0], cam_o[1], cam_o[2], d0 / dn, d1 / dn, d2 / dn,
                                       T_MIN, False,
                                       node_min, node_max, node_left, node_right,
                                       leaf_start, leaf_count, tri_order, tri_v0, tri_e1, tri_e2)
            out_tri[i, j] = tri
