"""Scene model and the paired render: shaded RGB pass + categorical mask pass.

Lighting is a sun at infinity (parallel rays, hard shadows) plus a planar
earthshine panel (centroid + 4 corner samples, unshadowed) and a small
ambient floor. Both passes trace the same pixel-center primary rays, so a
pixel is non-background in the mask exactly when its primary ray hits
geometry in the RGB pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels
from ._config import ConfigError, parse_floats, read_kv_lines
from .bvh import bvh_for
from .mesh_io import AnnotatedMesh
from .taxonomy import ClassTaxonomy

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

DEFAULT_FOV = math.radians(45.0)

RANGE_TIER_NAMES = {1: "near", 2: "mid", 3: "far"}


def _unit(v, name: str, tol: float = 1e-9) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(3)
    n = float(np.linalg.norm(v))
    if abs(n - 1.0) > tol:
        raise ValueError(f"{name} must be unit length (norm {n:.12g})")
    return v


@dataclass(frozen=True)
class SceneConfig:
    """Lighting and tone-map parameters, world frame, meters."""

    sun_direction: np.ndarray      # unit vector toward the sun
    sun_irradiance: np.ndarray     # RGB, relative W/m^2 scale
    earthshine_quad: np.ndarray    # (4, 3) corner points, planar convex quad
    earthshine_radiance: np.ndarray  # RGB radiance scale of the panel
    ambient_floor: float = 0.02
    exposure: float = 1.0
    gamma: float = 2.2

    def __post_init__(self):
        object.__setattr__(self, "sun_direction", _unit(self.sun_direction, "sun_direction"))
        sun = np.asarray(self.sun_irradiance, dtype=np.float64).reshape(3)
        quad = np.asarray(self.earthshine_quad, dtype=np.float64).reshape(4, 3)
        earth = np.asarray(self.earthshine_radiance, dtype=np.float64).reshape(3)
        object.__setattr__(self, "sun_irradiance", sun)
        object.__setattr__(self, "earthshine_quad", quad)
        object.__setattr__(self, "earthshine_radiance", earth)
        for name, arr in (("sun_irradiance", sun), ("earthshine_radiance", earth)):
            if not np.isfinite(arr).all() or (arr < 0).any():
                raise ValueError(f"{name} must be finite and non-negative")
        if not np.isfinite(quad).all():
            raise ValueError("earthshine_quad must be finite")
        _check_planar_convex(quad)
        if not 0.0 <= self.ambient_floor <= 0.05:
            raise ValueError("ambient_floor must be in [0, 0.05]; space is dark")
        if not self.exposure > 0:
            raise ValueError("exposure must be > 0")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")


def _check_planar_convex(quad: np.ndarray) -> None:
    # Newell normal is robust to near-degenerate orderings
    n = np.zeros(3)
    for i in range(4):
        a = quad[i]
        b = quad[(i + 1) % 4]
        n[0] += (a[1] - b[1]) * (a[2] + b[2])
        n[1] += (a[2] - b[2]) * (a[0] + b[0])
        n[2] += (a[0] - b[0]) * (a[1] + b[1])
    nn = np.linalg.norm(n)
    if nn == 0.0:
        raise ValueError("earthshine_quad is degenerate")
    n /= nn
    centroid = quad.mean(axis=0)
    off = (quad - centroid) @ n
    if np.abs(off).max() > 1e-6:
        raise ValueError(f"earthshine_quad corners not coplanar within 1e-6 m "
                         f"(max deviation {np.abs(off).max():.3g})")
    signs = []
    for i in range(4):
        e0 = quad[(i + 1) % 4] - quad[i]
        e1 = quad[(i + 2) % 4] - quad[(i + 1) % 4]
        signs.append(float(np.dot(np.cross(e0, e1), n)))
    if not (all(s > 0 for s in signs) or all(s < 0 for s in signs)):
        raise ValueError("earthshine_quad corners do not form a convex quad")


@dataclass(frozen=True)
class CameraPose:
    position: np.ndarray   # meters
    look_at: np.ndarray    # meters
    up_hint: np.ndarray    # unit vector; roll reference
    vertical_fov: float    # radians
    range_tier: int        # 1 = near, 2 = mid, 3 = far
    pose_id: int

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        tgt = np.asarray(self.look_at, dtype=np.float64).reshape(3)
        up = np.asarray(self.up_hint, dtype=np.float64).reshape(3)
        un = np.linalg.norm(up)
        if un == 0.0:
            raise ValueError("up_hint must be nonzero")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "look_at", tgt)
        object.__setattr__(self, "up_hint", up / un)
        if np.array_equal(pos, tgt):
            raise ValueError("camera position equals look_at")
        if not 0.0 < self.vertical_fov < math.pi:
            raise ValueError("vertical_fov must be in (0, pi)")
        if self.range_tier < 1:
            raise ValueError("range_tier must be >= 1")
        if self.pose_id < 0:
            raise ValueError("pose_id must be >= 0")


@dataclass(frozen=True)
class RenderedPair:
    rgb: np.ndarray    # (H, W, 3) uint8, gamma-encoded
    mask: np.ndarray   # (H, W) uint8 class indices
    pose: CameraPose
    seed: int

    def __post_init__(self):
        if self.rgb.shape[:2] != self.mask.shape:
            raise ValueError("rgb and mask dimensions differ")


class RayHit(NamedTuple):
    t: float
    triangle: int
    bary: np.ndarray   # weights of the triangle's three vertices, sum 1


def default_scene(radius: float = 1.0) -> SceneConfig:
    """Scene defaults scaled to a target of the given bounding radius.

    Sun is white; earthshine panel sits below at -Z with a 100:8
    sun-to-panel radiance ratio. None of these are physical claims, just
    stable documented defaults.
    """
    if not radius > 0:
        raise ValueError("radius must be > 0")
    r = float(radius)
    quad = np.array([
        [-10.0 * r, -10.0 * r, -4.0 * r],
        [10.0 * r, -10.0 * r, -4.0 * r],
        [10.0 * r, 10.0 * r, -4.0 * r],
        [-10.0 * r, 10.0 * r, -4.0 * r],
    ])
    sun = np.array([0.4, -0.35, 0.85])
    return SceneConfig(
        sun_direction=sun / np.linalg.norm(sun),
        sun_irradiance=np.array([1.0, 1.0, 1.0]),
        earthshine_quad=quad,
        earthshine_radiance=np.array([0.08, 0.08, 0.08]),
        ambient_floor=0.02,
        exposure=1.0,
        gamma=2.2,
    )


def save_scene(scene: SceneConfig, path: str | Path) -> None:
    lines = ["# scene lighting configuration"]
    lines.append("sun_direction = {:.17g} {:.17g} {:.17g}".format(*scene.sun_direction))
    lines.append("sun_irradiance = {:.17g} {:.17g} {:.17g}".format(*scene.sun_irradiance))
    for i in range(4):
        lines.append("earthshine_corner_{} = {:.17g} {:.17g} {:.17g}".format(i, *scene.earthshine_quad[i]))
    lines.append("earthshine_radiance = {:.17g} {:.17g} {:.17g}".format(*scene.earthshine_radiance))
    lines.append(f"ambient_floor = {scene.ambient_floor:.17g}")
    lines.append(f"exposure = {scene.exposure:.17g}")
    lines.append(f"gamma = {scene.gamma:.17g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_scene(path: str | Path) -> SceneConfig:
    fields: dict[str, list[float]] = {}
    for lineno, key, value in read_kv_lines(path):
        where = f"{path}:{lineno}"
        if key in ("sun_direction", "sun_irradiance", "earthshine_radiance"):
            fields[key] = parse_floats(value, 3, where)
        elif key.startswith("earthshine_corner_"):
            fields[key] = parse_floats(value, 3, where)
        elif key in ("ambient_floor", "exposure", "gamma"):
            fields[key] = parse_floats(value, 1, where)
        else:
            raise ConfigError(f"{where}: unknown scene key {key!r}")
    try:
        quad = np.array([fields[f"earthshine_corner_{i}"] for i in range(4)])
        scene = SceneConfig(
            sun_direction=np.array(fields["sun_direction"]),
            sun_irradiance=np.array(fields["sun_irradiance"]),
            earthshine_quad=quad,
            earthshine_radiance=np.array(fields["earthshine_radiance"]),
            ambient_floor=fields["ambient_floor"][0],
            exposure=fields["exposure"][0],
            gamma=fields["gamma"][0],
        )
    except KeyError as exc:
        raise ConfigError(f"{path}: missing scene key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return scene


def sample_poses(mesh: AnnotatedMesh, n_positions: int, range_multipliers,
                 base_distance_factor: float = 2.5, seed: int = 0,
                 vertical_fov: float = DEFAULT_FOV,
                 mode: str = "fibonacci") -> list[CameraPose]:
    """Camera poses on jittered spherical shells around the bounding sphere.

    Directions come from a Fibonacci lattice with a seeded tangent-plane
    jitter (mode="random" draws uniform directions instead). Each direction
    yields one pose per range multiplier at distance
    base_distance_factor * bounding_radius * multiplier, sharing the same
    direction vector, so the offsets of a direction's poses are exactly
    parallel and their lengths scale exactly with the multipliers. look_at
    is always the bounding-sphere center. Deterministic in (mesh bounds,
    n_positions, multipliers, seed).
    """
    multipliers = [float(m) for m in range_multipliers]
    if n_positions < 1:
        raise ValueError("n_positions must be >= 1")
    if not multipliers:
        raise ValueError("range_multipliers must be nonempty")
    if any(m < 1.0 for m in multipliers):
        raise ValueError("range multipliers must each be >= 1")
    if not base_distance_factor >= 1.0:
        raise ValueError("base_distance_factor must be >= 1")
    if mode not in ("fibonacci", "random"):
        raise ValueError(f"unknown pose sampling mode {mode!r}")

    rng = np.random.default_rng(seed)
    n = int(n_positions)
    if mode == "fibonacci":
        i = np.arange(n, dtype=np.float64)
        z = 1.0 - (2.0 * i + 1.0) / n
        phi = i * GOLDEN_ANGLE
        rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        dirs = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
        # jitter within roughly half a lattice cell, in the tangent plane
        amp = 0.35 * math.sqrt(4.0 * math.pi / n)
        ref = np.where(np.abs(dirs[:, 2:3]) > 0.9,
                       np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 0.0, 1.0]]))
        t1 = np.cross(dirs, ref)
        t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
        t2 = np.cross(dirs, t1)
        u = rng.uniform(-1.0, 1.0, size=(n, 2))
        dirs = dirs + amp * (u[:, :1] * t1 + u[:, 1:] * t2)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    else:
        zr = rng.uniform(-1.0, 1.0, size=n)
        pr = rng.uniform(0.0, 2.0 * math.pi, size=n)
        rr = np.sqrt(np.maximum(0.0, 1.0 - zr * zr))
        dirs = np.column_stack([rr * np.cos(pr), rr * np.sin(pr), zr])

    center = mesh.sphere_center
    base = float(base_distance_factor) * float(mesh.sphere_radius)
    poses = []
    for idx in range(n):
        d = dirs[idx]
        # roll reference: +Z, or +X when the view axis is (nearly) vertical
        if abs(d[2]) > 1.0 - 1e-9:
            up = np.array([1.0, 0.0, 0.0])
        else:
            up = np.array([0.0, 0.0, 1.0])
        for k, m in enumerate(multipliers):
            poses.append(CameraPose(
                position=center + d * (base * m),
                look_at=center,
                up_hint=up,
                vertical_fov=vertical_fov,
                range_tier=k + 1,
                pose_id=idx,
            ))
    return poses


def _camera_frame(pose: CameraPose):
    fwd = pose.look_at - pose.position
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, pose.up_hint)
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        alt = np.array([1.0, 0.0, 0.0]) if abs(fwd[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, alt)
        rn = np.linalg.norm(right)
    right = right / rn
    up = np.cross(right, fwd)
    return fwd, right, up


def _bvh_args(mesh: AnnotatedMesh):
    b = bvh_for(mesh)
    return (b.node_min, b.node_max, b.node_left, b.node_right,
            b.leaf_start, b.leaf_count, b.tri_order, b.tri_v0, b.tri_e1, b.tri_e2)


def render_pair(mesh: AnnotatedMesh, scene: SceneConfig, pose: CameraPose,
                width: int, height: int, taxonomy: ClassTaxonomy,
                supersample: int = 1, seed: int = 0) -> RenderedPair:
    """Render the registered RGB + mask pair for one pose.

    The mask and the registration contract always use 1 ray per pixel
    center. supersample > 1 averages an s x s in-pixel grid for the RGB
    pass only; the default keeps both passes on identical rays.
    """
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    if supersample < 1:
        raise ValueError("supersample must be >= 1")
    if int(mesh.face_class.max()) >= taxonomy.num_classes:
        raise ValueError("mesh face classes exceed taxonomy size")

    fwd, right, up = _camera_frame(pose)
    half_h = math.tan(pose.vertical_fov / 2.0)
    half_w = half_h * (width / height)
    albedo = taxonomy.palette().astype(np.float64) / 255.0
    earth_pts = np.vstack([scene.earthshine_quad.mean(axis=0, keepdims=True),
                           scene.earthshine_quad])
    shadow_bias = max(1e-4 * float(mesh.sphere_radius), 1e-9)

    out_rgb = np.zeros((height, width, 3), dtype=np.float64)
    out_tri = np.empty((height, width), dtype=np.int64)
    kernels.render_frame(
        width, height, pose.position, fwd, right, up, half_w, half_h, supersample,
        *_bvh_args(mesh),
        mesh.face_normal, mesh.face_class, albedo,
        scene.sun_direction, scene.sun_irradiance, earth_pts,
        scene.earthshine_radiance, scene.ambient_floor, shadow_bias,
        out_rgb, out_tri)

    encoded = np.clip(out_rgb * scene.exposure, 0.0, 1.0) ** (1.0 / scene.gamma)
    rgb8 = np.rint(encoded * 255.0).astype(np.uint8)

    mask = np.full((height, width), taxonomy.background_index, dtype=np.uint8)
    hit = out_tri >= 0
    mask[hit] = mesh.face_class[out_tri[hit]].astype(np.uint8)
    return RenderedPair(rgb=rgb8, mask=mask, pose=pose, seed=seed)


def primary_hit_mask(mesh: AnnotatedMesh, pose: CameraPose,
                     width: int, height: int) -> np.ndarray:
    """Boolean (H, W): True where the pixel-center primary ray hits geometry.

    Re-traces the exact rays render_pair uses for the mask pass, so
    (mask != background) must equal this array for every rendered pair.
    """
    fwd, right, up = _camera_frame(pose)
    half_h = math.tan(pose.vertical_fov / 2.0)
    half_w = half_h * (width / height)
    out_tri = np.empty((height, width), dtype=np.int64)
    kernels.hit_frame(width, height, pose.position, fwd, right, up,
                      half_w, half_h, *_bvh_args(mesh), out_tri)
    return out_tri >= 0


def intersect(origin, direction, mesh: AnnotatedMesh) -> RayHit | None:
    """Nearest intersection of one ray with the mesh, or None.

    Hits require t > 1e-6 m; equal-t ties (within 1e-12) go to the lower
    triangle id. Direction must be unit length.
    """
    o = np.asarray(origin, dtype=np.float64).reshape(3)
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    if abs(float(np.linalg.norm(d)) - 1.0) > 1e-6:
        raise ValueError("ray direction must be unit length")
    t, tri, w0, w1, w2 = kernels.traverse(
        o[0], o[1], o[2], d[0], d[1], d[2], kernels.T_MIN, False, *_bvh_args(mesh))
    if tri < 0:
        return None
    return RayHit(t=float(t), triangle=int(tri), bary=np.array([w0, w1, w2]))
