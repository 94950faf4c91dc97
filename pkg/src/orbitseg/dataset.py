"""Dataset orchestration: corpus generation, manifests, splits, augmentation.

A generated corpus is a directory of per-spacecraft rgb/mask PNG pairs plus
a line-delimited manifest whose header records the seed and a hash of every
input that influenced the pixels. Same config + seed means byte-identical
files, so corpora are auditable and diffable.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .mask_codec import CategoricalMask, MaskCodecError, decode_mask, encode_mask
from .mesh_io import AnnotatedMesh
from .render import (DEFAULT_FOV, SceneConfig, render_pair, sample_poses,
                     save_scene)
from .taxonomy import ClassTaxonomy, save_taxonomy

SPLITS = ("train", "val", "test", "unknown_target")

# spacecraft-name column must survive a round trip through the TSV manifest
_NAME_BAD = set("\t\n/\\")

MANIFEST_NAME = "manifest.tsv"
MANIFEST_VERSION = 1

# train/val/test defaults; proportions normalized so they sum to 1
DEFAULT_SPLIT_FRACTIONS = (0.8152, 0.0867, 0.0981)

ROTATE_MODES = ("quarter_turns", "any_angle_nearest")


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenConfig:
    """Geometry of one generation run (applies to every mesh in the run)."""

    n_positions: int
    range_multipliers: tuple[float, ...]
    width: int
    height: int
    base_distance_factor: float = 2.5
    vertical_fov: float = DEFAULT_FOV
    supersample: int = 1
    pose_mode: str = "fibonacci"

    def __post_init__(self):
        object.__setattr__(self, "range_multipliers",
                           tuple(float(m) for m in self.range_multipliers))
        if self.n_positions < 1:
            raise ValueError("n_positions must be >= 1")
        if not self.range_multipliers or any(m < 1 for m in self.range_multipliers):
            raise ValueError("range_multipliers must be nonempty, each >= 1")
        if self.width < 1 or self.height < 1:
            raise ValueError("width and height must be >= 1")
        if self.base_distance_factor < 1:
            raise ValueError("base_distance_factor must be >= 1")
        if not 0 < self.vertical_fov < math.pi:
            raise ValueError("vertical_fov must be in (0, pi)")
        if self.supersample < 1:
            raise ValueError("supersample must be >= 1")
        if self.pose_mode not in ("fibonacci", "random"):
            raise ValueError("pose_mode must be 'fibonacci' or 'random'")

    def serialize(self) -> str:
        mults = " ".join(f"{m:.17g}" for m in self.range_multipliers)
        return "\n".join([
            f"n_positions = {self.n_positions}",
            f"range_multipliers = {mults}",
            f"width = {self.width}",
            f"height = {self.height}",
            f"base_distance_factor = {self.base_distance_factor:.17g}",
            f"vertical_fov = {self.vertical_fov:.17g}",
            f"supersample = {self.supersample}",
            f"pose_mode = {self.pose_mode}",
        ]) + "\n"


@dataclass(frozen=True)
class FrameRecord:
    id: str
    spacecraft: str
    pose_id: int
    range_tier: int
    rgb_path: str    # relative to the manifest directory, posix separators
    mask_path: str
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.pose_id < 0 or self.range_tier < 1:
            raise ValueError("pose_id must be >= 0 and range_tier >= 1")


@dataclass
class DatasetManifest:
    records: list[FrameRecord]
    seed: int
    config_hash: str
    taxonomy_file: str = "taxonomy.cfg"
    root: Path | None = None  # directory the relative paths resolve against

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate record ids in manifest")

    def counts_by_split(self) -> dict[str, int]:
        out = {s: 0 for s in SPLITS}
        for r in self.records:
            out[r.split] += 1
        return out

    def resolve(self, rel: str) -> Path:
        if self.root is None:
            raise DatasetError("manifest has no root directory; read or write it first")
        return self.root / rel


def mesh_digest(mesh: AnnotatedMesh) -> str:
    """Content hash of the geometry and labels that reach the renderer."""
    h = hashlib.sha256()
    for arr in (mesh.vertices, mesh.triangles, mesh.face_class):
        h.update(np.ascontiguousarray(arr).tobytes())
        h.update(str(arr.shape).encode())
    return h.hexdigest()


def pose_seed_for(seed: int, spacecraft: str) -> int:
    """Per-mesh pose seed, stable across runs and mesh orderings."""
    digest = hashlib.sha256(f"{seed}:{spacecraft}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _config_hash(meshes: dict[str, AnnotatedMesh], scene: SceneConfig,
                 config: GenConfig, taxonomy: ClassTaxonomy, seed: int) -> str:
    h = hashlib.sha256()
    h.update(config.serialize().encode())
    h.update(taxonomy.serialize().encode())
    h.update(f"seed = {seed}\n".encode())
    h.update(np.array2string(scene.sun_direction, precision=17).encode())
    h.update(np.array2string(scene.sun_irradiance, precision=17).encode())
    h.update(np.array2string(scene.earthshine_quad, precision=17).encode())
    h.update(np.array2string(scene.earthshine_radiance, precision=17).encode())
    h.update(f"{scene.ambient_floor:.17g} {scene.exposure:.17g} {scene.gamma:.17g}".encode())
    for name in sorted(meshes):
        h.update(f"mesh {name} {mesh_digest(meshes[name])}\n".encode())
    return h.hexdigest()


def generate_dataset(meshes: dict[str, AnnotatedMesh], scene: SceneConfig,
                     config: GenConfig, taxonomy: ClassTaxonomy, seed: int,
                     out_dir: str | Path,
                     unknown_targets: tuple[str, ...] = ()) -> DatasetManifest:
    """Render every pose of every mesh and write the corpus under out_dir.

    Produces len(meshes) * n_positions * len(multipliers) rgb/mask pairs,
    the taxonomy and scene config files, and the manifest. Meshes named in
    unknown_targets are tagged as the held-out split; everything else
    starts as train. Deterministic in (meshes, scene, config, seed).
    """
    if not meshes:
        raise ValueError("need at least one mesh")
    for name in meshes:
        if not name or set(name) & _NAME_BAD:
            raise ValueError(f"bad spacecraft name {name!r}")
    unknown = set(unknown_targets)
    missing = unknown - set(meshes)
    if missing:
        raise ValueError(f"unknown_targets not among meshes: {sorted(missing)}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records: list[FrameRecord] = []
    written = 0
    total = len(meshes) * config.n_positions * len(config.range_multipliers)
    try:
        for name in sorted(meshes):
            mesh = meshes[name]
            (out / name / "rgb").mkdir(parents=True, exist_ok=True)
            (out / name / "mask").mkdir(parents=True, exist_ok=True)
            poses = sample_poses(mesh, config.n_positions, config.range_multipliers,
                                 base_distance_factor=config.base_distance_factor,
                                 seed=pose_seed_for(seed, name),
                                 vertical_fov=config.vertical_fov,
                                 mode=config.pose_mode)
            split = "unknown_target" if name in unknown else "train"
            for pose in poses:
                pair = render_pair(mesh, scene, pose, config.width, config.height,
                                   taxonomy, supersample=config.supersample, seed=seed)
                stem = f"{pose.pose_id:05d}_{pose.range_tier}.png"
                rgb_rel = f"{name}/rgb/{stem}"
                mask_rel = f"{name}/mask/{stem}"
                Image.fromarray(pair.rgb, mode="RGB").save(out / rgb_rel, format="PNG")
                encode_mask(CategoricalMask(pair.mask), taxonomy, out / mask_rel)
                written += 1
                records.append(FrameRecord(
                    id=f"{name}/{pose.pose_id:05d}_{pose.range_tier}",
                    spacecraft=name, pose_id=pose.pose_id,
                    range_tier=pose.range_tier,
                    rgb_path=rgb_rel, mask_path=mask_rel, split=split))
        save_taxonomy(taxonomy, out / "taxonomy.cfg")
        save_scene(scene, out / "scene.cfg")
    except OSError as exc:
        raise DatasetError(
            f"generation aborted after writing {written} of {total} pairs: {exc}") from exc

    records.sort(key=lambda r: (r.spacecraft, r.pose_id, r.range_tier))
    manifest = DatasetManifest(records=records, seed=seed,
                               config_hash=_config_hash(meshes, scene, config, taxonomy, seed),
                               root=out)
    write_manifest(manifest, out / MANIFEST_NAME)
    return manifest


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    lines = [
        f"# manifest v{MANIFEST_VERSION}",
        f"# seed = {manifest.seed}",
        f"# config_hash = {manifest.config_hash}",
        f"# taxonomy_file = {manifest.taxonomy_file}",
        f"# record_count = {len(manifest.records)}",
        "# fields = id spacecraft pose_id range_tier rgb mask split",
    ]
    for r in manifest.records:
        lines.append("\t".join([r.id, r.spacecraft, str(r.pose_id), str(r.range_tier),
                                r.rgb_path, r.mask_path, r.split]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest.root = path.parent


def read_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    seed = None
    config_hash = None
    taxonomy_file = "taxonomy.cfg"
    declared = None
    records: list[FrameRecord] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if "=" in body:
                key, _, value = body.partition("=")
                key = key.strip()
                value = value.strip()
                if key == "seed":
                    seed = int(value)
                elif key == "config_hash":
                    config_hash = value
                elif key == "taxonomy_file":
                    taxonomy_file = value
                elif key == "record_count":
                    declared = int(value)
            continue
        parts = line.split("\t")
        if len(parts) != 7:
            raise DatasetError(f"{path}:{lineno}: expected 7 tab-separated fields, got {len(parts)}")
        try:
            rec = FrameRecord(id=parts[0], spacecraft=parts[1], pose_id=int(parts[2]),
                              range_tier=int(parts[3]), rgb_path=parts[4],
                              mask_path=parts[5], split=parts[6])
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from None
        records.append(rec)
    if seed is None or config_hash is None:
        raise DatasetError(f"{path}: manifest header missing seed or config_hash")
    if declared is not None and declared != len(records):
        raise DatasetError(f"{path}: header declares {declared} records, found {len(records)}")
    return DatasetManifest(records=records, seed=seed, config_hash=config_hash,
                           taxonomy_file=taxonomy_file, root=path.parent)


def split_manifest(manifest: DatasetManifest, fractions=DEFAULT_SPLIT_FRACTIONS,
                   seed: int = 0) -> DatasetManifest:
    """Reassign train/val/test by a seeded shuffle.

    Fractions are (train, val, test), each positive, summing to at most 1.
    val and test counts are floors; train absorbs the remainder.
    unknown_target records pass through untouched.
    """
    f_train, f_val, f_test = (float(f) for f in fractions)
    if min(f_train, f_val, f_test) <= 0:
        raise ValueError("fractions must be positive")
    if f_train + f_val + f_test > 1.0 + 1e-12:
        raise ValueError("fractions must sum to at most 1")
    splittable = [r for r in manifest.records if r.split != "unknown_target"]
    if not splittable:
        raise DatasetError("manifest has no records to split")

    order = sorted(range(len(splittable)), key=lambda i: splittable[i].id)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(order))
    n = len(order)
    n_val = int(math.floor(f_val * n))
    n_test = int(math.floor(f_test * n))
    assignment: dict[str, str] = {}
    for rank, pi in enumerate(perm):
        rec = splittable[order[pi]]
        if rank < n_val:
            assignment[rec.id] = "val"
        elif rank < n_val + n_test:
            assignment[rec.id] = "test"
        else:
            assignment[rec.id] = "train"
    new_records = [r if r.split == "unknown_target" else replace(r, split=assignment[r.id])
                   for r in manifest.records]
    return DatasetManifest(records=new_records, seed=manifest.seed,
                           config_hash=manifest.config_hash,
                           taxonomy_file=manifest.taxonomy_file, root=manifest.root)


@dataclass(frozen=True)
class AugmentationPolicy:
    """Mask-safe geometric augmentation probabilities."""

    p_flip: float = 0.5
    p_transpose: float = 0.5
    p_rotate: float = 0.4
    rotate_mode: str = "quarter_turns"

    def __post_init__(self):
        for name in ("p_flip", "p_transpose", "p_rotate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.rotate_mode not in ROTATE_MODES:
            raise ValueError(f"rotate_mode must be one of {ROTATE_MODES}")


@dataclass(frozen=True)
class AugmentOps:
    """A concrete draw from an AugmentationPolicy."""

    flip: bool
    transpose: bool
    quarter_turns: int    # 0 when not rotating (quarter_turns mode)
    angle_deg: float      # 0 when not rotating (any_angle_nearest mode)
    rotate_mode: str = "quarter_turns"


def sample_augmentation(policy: AugmentationPolicy, seed: int) -> AugmentOps:
    """Draw one transform combination. The stream consumes a fixed number of
    variates regardless of which transforms fire, so draws are comparable
    across seeds."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=3)
    flip = bool(u[0] < policy.p_flip)
    transpose = bool(u[1] < policy.p_transpose)
    rotate = bool(u[2] < policy.p_rotate)
    quarters = 0
    angle = 0.0
    if policy.rotate_mode == "quarter_turns":
        choice = int(rng.integers(1, 4))  # drawn unconditionally: fixed stream length
        if rotate:
            quarters = choice
    else:
        drawn = float(rng.uniform(0.0, 360.0))
        if rotate:
            angle = drawn
    return AugmentOps(flip=flip, transpose=transpose, quarter_turns=quarters,
                      angle_deg=angle, rotate_mode=policy.rotate_mode)


def _rotate_nearest(arr: np.ndarray, angle_deg: float) -> np.ndarray:
    from scipy.ndimage import rotate as nd_rotate
    return nd_rotate(arr, angle_deg, axes=(1, 0), reshape=False, order=0,
                     mode="constant", cval=0, prefilter=False)


def apply_augmentation(rgb: np.ndarray, mask: np.ndarray, ops: AugmentOps):
    """Apply identical spatial transforms to both images.

    Quarter-turn mode permutes pixel positions only, so per-class pixel
    histograms are preserved exactly; mask values are never interpolated.
    """
    rgb = np.asarray(rgb)
    mask = np.asarray(mask)
    if rgb.shape[:2] != mask.shape:
        raise ValueError("rgb and mask dimensions differ")
    if ops.flip:
        rgb = rgb[:, ::-1]
        mask = mask[:, ::-1]
    if ops.transpose:
        rgb = np.swapaxes(rgb, 0, 1)
        mask = np.swapaxes(mask, 0, 1)
    if ops.quarter_turns:
        rgb = np.rot90(rgb, k=ops.quarter_turns)
        mask = np.rot90(mask, k=ops.quarter_turns)
    elif ops.rotate_mode == "any_angle_nearest" and ops.angle_deg:
        rgb = _rotate_nearest(rgb, ops.angle_deg)
        mask = _rotate_nearest(mask, ops.angle_deg)
    return np.ascontiguousarray(rgb), np.ascontiguousarray(mask)


def augment_pair(rgb: np.ndarray, mask: np.ndarray, policy: AugmentationPolicy,
                 seed: int):
    """Seeded draw + apply; the documented one-call path."""
    return apply_augmentation(rgb, mask, sample_augmentation(policy, seed))


@dataclass
class ValidationReport:
    record_count: int
    failures: list[str]
    pixel_counts: np.ndarray   # (K,) pixels of each class over all decodable masks
    case_counts: np.ndarray    # (K,) frames containing the class
    pixel_total: int

    @property
    def ok(self) -> bool:
        return not self.failures


def validate_manifest(manifest: DatasetManifest, taxonomy: ClassTaxonomy) -> ValidationReport:
    """Existence + decodability + index-range audit with prevalence stats.

    Never raises on bad frames; every problem becomes a failure line.
    """
    k = taxonomy.num_classes
    pixel_counts = np.zeros(k, dtype=np.int64)
    case_counts = np.zeros(k, dtype=np.int64)
    pixel_total = 0
    failures: list[str] = []

    by_craft: dict[str, set[str]] = {}
    for r in manifest.records:
        by_craft.setdefault(r.spacecraft, set()).add(r.split)
    for craft, splits in sorted(by_craft.items()):
        if "unknown_target" in splits and len(splits) > 1:
            failures.append(f"{craft}: mixes unknown_target with other splits")

    for r in manifest.records:
        rgb_path = manifest.resolve(r.rgb_path)
        mask_path = manifest.resolve(r.mask_path)
        if not rgb_path.is_file():
            failures.append(f"{r.id}: missing rgb file {r.rgb_path}")
            continue
        if not mask_path.is_file():
            failures.append(f"{r.id}: missing mask file {r.mask_path}")
            continue
        try:
            mask = decode_mask(mask_path, taxonomy)
        except (MaskCodecError, OSError) as exc:
            failures.append(f"{r.id}: {exc}")
            continue
        with Image.open(rgb_path) as img:
            if img.size != (mask.width, mask.height):
                failures.append(f"{r.id}: rgb size {img.size} != mask size "
                                f"{(mask.width, mask.height)}")
                continue
        counts = np.bincount(mask.data.reshape(-1), minlength=k)
        pixel_counts += counts
        case_counts += counts > 0
        pixel_total += mask.data.size
    return ValidationReport(record_count=len(manifest.records), failures=failures,
                            pixel_counts=pixel_counts, case_counts=case_counts,
                            pixel_total=pixel_total)


@dataclass(frozen=True)
class LabeledFrame:
    """One decoded training example."""

    rgb: np.ndarray            # (H, W, 3) uint8
    mask: CategoricalMask
    record: FrameRecord | None = None


def load_frame(manifest: DatasetManifest, record: FrameRecord,
               taxonomy: ClassTaxonomy) -> LabeledFrame:
    with Image.open(manifest.resolve(record.rgb_path)) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    mask = decode_mask(manifest.resolve(record.mask_path), taxonomy)
    if rgb.shape[:2] != mask.data.shape:
        raise DatasetError(f"{record.id}: rgb and mask dimensions differ")
    return LabeledFrame(rgb=rgb, mask=mask, record=record)


def load_split(manifest: DatasetManifest, split: str,
               taxonomy: ClassTaxonomy) -> list[LabeledFrame]:
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    return [load_frame(manifest, r, taxonomy)
            for r in manifest.records if r.split == split]
