import hashlib

import numpy as np
import pytest
from PIL import Image

from orbitseg.dataset import (AugmentationPolicy, AugmentOps, DatasetError,
                              DatasetManifest, FrameRecord, GenConfig,
                              apply_augmentation, augment_pair,
                              generate_dataset, load_split, pose_seed_for,
                              read_manifest, sample_augmentation,
                              split_manifest, validate_manifest,
                              write_manifest)
from orbitseg.render import default_scene
from orbitseg.toymesh import cube_mesh, sphere_mesh

SMALL = GenConfig(n_positions=2, range_multipliers=(1.0, 2.0), width=16, height=16)


@pytest.fixture(scope="module")
def pair_of_meshes(tax):
    return {"boxcraft": cube_mesh(tax, class_index=1),
            "ballcraft": sphere_mesh(tax, class_index=2, subdivisions=1)}


@pytest.fixture(scope="module")
def corpus(tax, pair_of_meshes, tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    scene = default_scene(1.0)
    manifest = generate_dataset(pair_of_meshes, scene, SMALL, tax, seed=3, out_dir=out)
    return out, manifest


# --- GenConfig ----------------------------------------------------------

def test_gen_config_validation():
    ok = dict(n_positions=1, range_multipliers=(1.0,), width=8, height=8)
    GenConfig(**ok)
    with pytest.raises(ValueError):
        GenConfig(**{**ok, "n_positions": 0})
    with pytest.raises(ValueError):
        GenConfig(**{**ok, "range_multipliers": ()})
    with pytest.raises(ValueError):
        GenConfig(**{**ok, "range_multipliers": (0.5,)})
    with pytest.raises(ValueError):
        GenConfig(**{**ok, "width": 0})
    with pytest.raises(ValueError):
        GenConfig(**{**ok, "supersample": 0})
    with pytest.raises(ValueError):
        GenConfig(**{**ok, "pose_mode": "grid"})
    with pytest.raises(ValueError):
        GenConfig(**{**ok, "vertical_fov": 4.0})


def test_gen_config_serialize_lists_every_field():
    text = SMALL.serialize()
    for key in ("n_positions", "range_multipliers", "width", "height",
                "base_distance_factor", "vertical_fov", "supersample", "pose_mode"):
        assert f"{key} = " in text


# --- generation ---------------------------------------------------------

def test_generate_produces_expected_count_and_layout(corpus, pair_of_meshes):
    out, manifest = corpus
    expected = len(pair_of_meshes) * SMALL.n_positions * len(SMALL.range_multipliers)
    assert len(manifest.records) == expected
    for rec in manifest.records:
        assert (out / rec.rgb_path).is_file()
        assert (out / rec.mask_path).is_file()
        assert rec.rgb_path == f"{rec.spacecraft}/rgb/{rec.pose_id:05d}_{rec.range_tier}.png"
        assert rec.mask_path == f"{rec.spacecraft}/mask/{rec.pose_id:05d}_{rec.range_tier}.png"
    assert (out / "manifest.tsv").is_file()
    assert (out / "taxonomy.cfg").is_file()
    assert (out / "scene.cfg").is_file()


def test_generate_records_are_sorted(corpus):
    _, manifest = corpus
    keys = [(r.spacecraft, r.pose_id, r.range_tier) for r in manifest.records]
    assert keys == sorted(keys)


def test_manifest_round_trips_through_file(corpus):
    out, manifest = corpus
    back = read_manifest(out / "manifest.tsv")
    assert back.seed == manifest.seed
    assert back.config_hash == manifest.config_hash
    assert back.records == manifest.records
    assert back.root == out


def test_generated_corpus_passes_validation(corpus, tax):
    out, manifest = corpus
    report = validate_manifest(manifest, tax)
    assert report.ok
    assert report.record_count == len(manifest.records)
    assert report.pixel_total == len(manifest.records) * SMALL.width * SMALL.height
    assert report.pixel_counts.sum() == report.pixel_total
    # both craft render something, so their classes show up
    assert report.pixel_counts[1] > 0 and report.pixel_counts[2] > 0


def test_unknown_target_tagging(tax, pair_of_meshes, tmp_path):
    scene = default_scene(1.0)
    manifest = generate_dataset(pair_of_meshes, scene, SMALL, tax, seed=3,
                                out_dir=tmp_path, unknown_targets=("ballcraft",))
    splits = {r.spacecraft: r.split for r in manifest.records}
    assert splits["ballcraft"] == "unknown_target"
    assert splits["boxcraft"] == "train"


def test_generation_is_byte_deterministic(tax, pair_of_meshes, tmp_path):
    scene = default_scene(1.0)
    digests = []
    for run in ("a", "b"):
        out = tmp_path / run
        generate_dataset(pair_of_meshes, scene, SMALL, tax, seed=11, out_dir=out)
        tree = {}
        for p in sorted(out.rglob("*")):
            if p.is_file():
                tree[str(p.relative_to(out))] = hashlib.sha256(p.read_bytes()).hexdigest()
        digests.append(tree)
    assert digests[0] == digests[1]


def test_generate_rejects_bad_inputs(tax, pair_of_meshes, tmp_path):
    scene = default_scene(1.0)
    with pytest.raises(ValueError):
        generate_dataset({}, scene, SMALL, tax, seed=0, out_dir=tmp_path)
    with pytest.raises(ValueError):
        generate_dataset({"a/b": list(pair_of_meshes.values())[0]}, scene, SMALL,
                         tax, seed=0, out_dir=tmp_path)
    with pytest.raises(ValueError):
        generate_dataset(pair_of_meshes, scene, SMALL, tax, seed=0,
                         out_dir=tmp_path, unknown_targets=("ghost",))


def test_pose_seed_derivation_is_stable():
    expected = int.from_bytes(
        hashlib.sha256(b"7:boxcraft").digest()[:8], "big")
    assert pose_seed_for(7, "boxcraft") == expected
    assert pose_seed_for(7, "boxcraft") != pose_seed_for(7, "ballcraft")
    assert pose_seed_for(7, "boxcraft") != pose_seed_for(8, "boxcraft")


# --- manifest mechanics --------------------------------------------------

def synthetic_manifest(n, split="train", craft="craft"):
    records = [FrameRecord(id=f"{craft}/{i:05d}_1", spacecraft=craft, pose_id=i,
                           range_tier=1, rgb_path=f"{craft}/rgb/{i:05d}_1.png",
                           mask_path=f"{craft}/mask/{i:05d}_1.png", split=split)
               for i in range(n)]
    return DatasetManifest(records=records, seed=0, config_hash="0" * 12)


def test_duplicate_record_ids_rejected():
    rec = FrameRecord(id="x/00000_1", spacecraft="x", pose_id=0, range_tier=1,
                      rgb_path="r.png", mask_path="m.png", split="train")
    with pytest.raises(DatasetError):
        DatasetManifest(records=[rec, rec], seed=0, config_hash="abc")


def test_record_validation():
    with pytest.raises(ValueError):
        FrameRecord(id="a", spacecraft="a", pose_id=0, range_tier=1,
                    rgb_path="r", mask_path="m", split="holdout")
    with pytest.raises(ValueError):
        FrameRecord(id="a", spacecraft="a", pose_id=-1, range_tier=1,
                    rgb_path="r", mask_path="m", split="train")


def test_resolve_requires_root():
    manifest = synthetic_manifest(1)
    with pytest.raises(DatasetError):
        manifest.resolve("x.png")


def test_manifest_write_read_without_generation(tmp_path):
    manifest = synthetic_manifest(5)
    path = tmp_path / "manifest.tsv"
    write_manifest(manifest, path)
    back = read_manifest(path)
    assert back.records == manifest.records


def test_read_manifest_rejects_malformed(tmp_path):
    path = tmp_path / "manifest.tsv"
    path.write_text("# seed = 0\n# config_hash = abc\nonly\tthree\tfields\n")
    with pytest.raises(DatasetError, match="7 tab-separated"):
        read_manifest(path)
    path.write_text("a\tb\t0\t1\tr\tm\ttrain\n")  # missing header
    with pytest.raises(DatasetError, match="header"):
        read_manifest(path)
    path.write_text("# seed = 0\n# config_hash = abc\n# record_count = 2\n"
                    "a\ta\t0\t1\tr\tm\ttrain\n")
    with pytest.raises(DatasetError, match="declares 2"):
        read_manifest(path)


# --- splitting -----------------------------------------------------------

def test_split_fraction_example():
    manifest = synthetic_manifest(10)
    out = split_manifest(manifest, fractions=(0.8, 0.1, 0.1), seed=0)
    counts = out.counts_by_split()
    assert counts["train"] == 8 and counts["val"] == 1 and counts["test"] == 1


def test_split_counts_use_floors():
    manifest = synthetic_manifest(7)
    out = split_manifest(manifest, fractions=(0.5, 0.25, 0.25), seed=1)
    counts = out.counts_by_split()
    assert counts["val"] == 1 and counts["test"] == 1 and counts["train"] == 5


def test_split_is_deterministic_and_seed_sensitive():
    manifest = synthetic_manifest(40)
    a = split_manifest(manifest, fractions=(0.6, 0.2, 0.2), seed=9)
    b = split_manifest(manifest, fractions=(0.6, 0.2, 0.2), seed=9)
    c = split_manifest(manifest, fractions=(0.6, 0.2, 0.2), seed=10)
    assert [r.split for r in a.records] == [r.split for r in b.records]
    assert [r.split for r in a.records] != [r.split for r in c.records]


def test_split_assigns_every_record_exactly_once():
    manifest = synthetic_manifest(23)
    out = split_manifest(manifest, fractions=(0.7, 0.15, 0.15), seed=4)
    assert len(out.records) == 23
    assert {r.id for r in out.records} == {r.id for r in manifest.records}
    assert all(r.split in ("train", "val", "test") for r in out.records)


def test_split_leaves_unknown_target_untouched():
    known = synthetic_manifest(10).records
    held = synthetic_manifest(4, split="unknown_target", craft="mystery").records
    manifest = DatasetManifest(records=known + held, seed=0, config_hash="x")
    out = split_manifest(manifest, fractions=(0.5, 0.25, 0.25), seed=2)
    for rec in out.records:
        if rec.spacecraft == "mystery":
            assert rec.split == "unknown_target"
    assert out.counts_by_split()["unknown_target"] == 4


def test_split_rejects_bad_fractions():
    manifest = synthetic_manifest(10)
    with pytest.raises(ValueError):
        split_manifest(manifest, fractions=(0.9, 0.1, 0.1))
    with pytest.raises(ValueError):
        split_manifest(manifest, fractions=(0.8, 0.0, 0.1))


def test_split_requires_splittable_records():
    held = synthetic_manifest(3, split="unknown_target")
    with pytest.raises(DatasetError):
        split_manifest(held, fractions=(0.8, 0.1, 0.1))


# --- augmentation --------------------------------------------------------

def checker_pair():
    rgb = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    mask = np.array([[0, 1, 2], [3, 4, 5]], dtype=np.uint8)
    return rgb, mask


def test_identity_policy_is_a_no_op():
    rgb, mask = checker_pair()
    policy = AugmentationPolicy(p_flip=0.0, p_transpose=0.0, p_rotate=0.0)
    out_rgb, out_mask = augment_pair(rgb, mask, policy, seed=0)
    assert np.array_equal(out_rgb, rgb)
    assert np.array_equal(out_mask, mask)


def test_forced_flip_reverses_columns():
    mask = np.array([[0, 1], [2, 3]], dtype=np.uint8)
    rgb = np.stack([mask] * 3, axis=-1)
    ops = AugmentOps(flip=True, transpose=False, quarter_turns=0, angle_deg=0.0)
    out_rgb, out_mask = apply_augmentation(rgb, mask, ops)
    assert np.array_equal(out_mask, [[1, 0], [3, 2]])
    assert np.array_equal(out_rgb[..., 0], out_mask)


def test_forced_transpose_swaps_axes():
    rgb, mask = checker_pair()
    ops = AugmentOps(flip=False, transpose=True, quarter_turns=0, angle_deg=0.0)
    out_rgb, out_mask = apply_augmentation(rgb, mask, ops)
    assert out_mask.shape == (3, 2)
    assert np.array_equal(out_mask, mask.T)
    assert out_rgb.shape == (3, 2, 3)


def test_forced_quarter_turn_rotates():
    rgb, mask = checker_pair()
    ops = AugmentOps(flip=False, transpose=False, quarter_turns=1, angle_deg=0.0)
    _, out_mask = apply_augmentation(rgb, mask, ops)
    assert np.array_equal(out_mask, np.rot90(mask, 1))


def test_histograms_survive_default_policy():
    rng = np.random.default_rng(0)
    rgb = rng.integers(0, 256, size=(9, 7, 3), dtype=np.uint8)
    mask = rng.integers(0, 6, size=(9, 7), dtype=np.uint8)
    policy = AugmentationPolicy()
    base_mask_hist = np.bincount(mask.reshape(-1), minlength=6)
    base_rgb_hist = np.bincount(rgb.reshape(-1), minlength=256)
    for seed in range(200):
        out_rgb, out_mask = augment_pair(rgb, mask, policy, seed=seed)
        assert np.array_equal(np.bincount(out_mask.reshape(-1), minlength=6),
                              base_mask_hist)
        assert np.array_equal(np.bincount(out_rgb.reshape(-1), minlength=256),
                              base_rgb_hist)
        assert out_mask.dtype == np.uint8


def test_sampling_is_reproducible_and_varied():
    policy = AugmentationPolicy()
    assert sample_augmentation(policy, 5) == sample_augmentation(policy, 5)
    draws = {sample_augmentation(policy, s) for s in range(64)}
    assert len(draws) > 4


def test_quarter_turn_draw_spans_all_three():
    policy = AugmentationPolicy(p_flip=0.0, p_transpose=0.0, p_rotate=1.0)
    seen = {sample_augmentation(policy, s).quarter_turns for s in range(64)}
    assert seen == {1, 2, 3}


def test_any_angle_mode_keeps_shape_and_classes():
    rng = np.random.default_rng(1)
    rgb = rng.integers(0, 256, size=(15, 15, 3), dtype=np.uint8)
    mask = rng.integers(1, 4, size=(15, 15), dtype=np.uint8)
    policy = AugmentationPolicy(p_flip=0.0, p_transpose=0.0, p_rotate=1.0,
                                rotate_mode="any_angle_nearest")
    ops = sample_augmentation(policy, 3)
    assert ops.angle_deg != 0.0
    out_rgb, out_mask = apply_augmentation(rgb, mask, ops)
    assert out_rgb.shape == rgb.shape and out_mask.shape == mask.shape
    assert set(np.unique(out_mask)) <= {0, 1, 2, 3}  # nearest pulls no blends


def test_augmentation_rejects_mismatched_pair():
    with pytest.raises(ValueError):
        apply_augmentation(np.zeros((4, 4, 3), dtype=np.uint8),
                           np.zeros((4, 5), dtype=np.uint8),
                           AugmentOps(flip=False, transpose=False,
                                      quarter_turns=0, angle_deg=0.0))


def test_policy_validation():
    with pytest.raises(ValueError):
        AugmentationPolicy(p_flip=1.5)
    with pytest.raises(ValueError):
        AugmentationPolicy(rotate_mode="spin")


# --- validation and loading ----------------------------------------------

def test_validation_reports_missing_and_corrupt_files(corpus, tax, tmp_path):
    out, manifest = corpus
    import shutil
    work = tmp_path / "damaged"
    shutil.copytree(out, work)
    damaged = read_manifest(work / "manifest.tsv")
    victim = damaged.records[0]
    (work / victim.rgb_path).unlink()
    bad_mask = damaged.records[1]
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(work / bad_mask.mask_path)
    report = validate_manifest(damaged, tax)
    assert not report.ok
    assert any("missing rgb" in f for f in report.failures)
    assert any(bad_mask.id in f for f in report.failures)
    assert len(report.failures) == 2


def test_validation_flags_split_mixing(tax, tmp_path):
    a = synthetic_manifest(2).records
    b = [FrameRecord(id="craft/9_1", spacecraft="craft", pose_id=9, range_tier=1,
                     rgb_path="r9.png", mask_path="m9.png", split="unknown_target")]
    manifest = DatasetManifest(records=a + b, seed=0, config_hash="x", root=tmp_path)
    report = validate_manifest(manifest, tax)
    assert any("mixes unknown_target" in f for f in report.failures)


def test_load_split_round_trips_pixels(corpus, tax):
    out, manifest = corpus
    frames = load_split(manifest, "train", tax)
    assert len(frames) == len(manifest.records)
    for frame in frames:
        assert frame.rgb.shape == (SMALL.height, SMALL.width, 3)
        assert frame.mask.data.shape == (SMALL.height, SMALL.width)
    with pytest.raises(ValueError):
        load_split(manifest, "holdout", tax)
