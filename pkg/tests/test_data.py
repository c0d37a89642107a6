"""Scene generation, camera model, patches, batching and dataset I/O."""
import json

import numpy as np
import pytest

from src.data.batching import UnpairedPatchLoader, unpaired_batch_iterator
from src.data.camera import apply_camera_effects
from src.data.dataset_io import MANIFEST_NAME, load_dataset, save_dataset
from src.data.patches import bicubic_resize, random_crop
from src.data.samples import LabeledDataset, quantize_to_8bit
from src.data.scenes import (
    generate_dataset,
    generate_synthetic_scene,
    render_object_mask,
    sample_scene_layout,
    scene_id,
)
from src.errors import ConfigurationError, DataError, FormatError, PatchSizeError
from src.schemas import CameraEffectConfig, Domain, PatchSpec
from tests.conftest import random_dataset, random_sample


# ============================================================
# Scenes
# ============================================================

def test_scene_is_deterministic(scene_cfg):
    a = generate_synthetic_scene(scene_cfg, 3)
    b = generate_synthetic_scene(scene_cfg, 3)
    assert np.array_equal(a.image, b.image)
    assert np.array_equal(a.labels, b.labels)
    assert a.id == b.id == scene_id(3)


def test_scene_labels_use_declared_classes(scene_cfg):
    cfg = scene_cfg.model_copy(update={"num_classes": 3, "objects_per_scene": (5, 5)})
    sample = generate_synthetic_scene(cfg, 7)
    assert set(np.unique(sample.labels)) <= {0, 1, 2}
    assert (sample.labels > 0).mean() > 0


@pytest.mark.parametrize("seed", [0, 1, 2, 11, 42])
def test_scene_labels_are_pixel_exact(scene_cfg, seed):
    layout = sample_scene_layout(scene_cfg, seed)
    h, w = scene_cfg.image_size
    expected = np.zeros((h, w), dtype=np.uint8)
    for placement in layout.objects:
        expected[render_object_mask(placement, h, w)] = placement.class_id
    assert np.array_equal(generate_synthetic_scene(scene_cfg, seed).labels, expected)


@pytest.mark.parametrize("update", [
    {"objects_per_scene": (0, 3)},
    {"objects_per_scene": (4, 2)},
    {"shape_palette": []},
    {"background_palette": []},
    {"num_classes": 1},
    {"image_size": (30, 32)},
])
def test_invalid_scene_config_is_rejected(scene_cfg, update):
    with pytest.raises(ConfigurationError):
        generate_synthetic_scene(scene_cfg.model_copy(update=update), 0)


def test_generated_images_sit_on_the_8bit_grid(scene_cfg):
    image = generate_synthetic_scene(scene_cfg, 5).image
    assert np.array_equal(image, quantize_to_8bit(image))


def test_same_seed_in_two_domains_gives_matching_ids(scene_cfg, real_scene_cfg):
    syn = generate_dataset(scene_cfg, [4, 5], Domain.SYNTHETIC)
    real = generate_dataset(real_scene_cfg, [4, 5], Domain.PSEUDO_REAL)
    assert syn.ids == real.ids
    # same objects, different backgrounds
    for a, b in zip(syn, real):
        assert np.array_equal(a.labels, b.labels)


# ============================================================
# Camera effects
# ============================================================

@pytest.mark.parametrize("seed", range(5))
def test_identity_camera_leaves_any_image_unchanged(seed):
    img = np.random.default_rng(seed).random((24, 20, 3)).astype(np.float32)
    assert np.array_equal(apply_camera_effects(img, CameraEffectConfig(), seed), img)


def test_white_balance_gain():
    img = np.full((8, 8, 3), 0.4, dtype=np.float32)
    out = apply_camera_effects(img, CameraEffectConfig(white_balance_gain=(2.0, 1.0, 1.0)), 0)
    assert out[..., 0] == pytest.approx(np.full((8, 8), 0.8), abs=1e-6)
    assert out[..., 1:] == pytest.approx(np.full((8, 8, 2), 0.4), abs=1e-6)


def test_sensor_noise_is_seeded_with_the_configured_sigma():
    img = np.full((128, 128, 3), 0.5, dtype=np.float32)
    cfg = CameraEffectConfig(noise_sigma=0.05)
    a = apply_camera_effects(img, cfg, 9)
    b = apply_camera_effects(img, cfg, 9)
    assert np.array_equal(a, b)
    assert np.std(a.astype(np.float64) - img) == pytest.approx(0.05, rel=0.1)


def test_camera_output_is_clamped():
    img = np.full((8, 8, 3), 0.9, dtype=np.float32)
    out = apply_camera_effects(img, CameraEffectConfig(white_balance_gain=(3.0, 3.0, 3.0), noise_sigma=0.5), 1)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_chromatic_shift_moves_only_the_shifted_channel():
    img = np.zeros((16, 16, 3), dtype=np.float32)
    img[:, 8, :] = 1.0
    cfg = CameraEffectConfig(chromatic_shift_px=((1.0, 0.0), (0.0, 0.0), (0.0, 0.0)))
    out = apply_camera_effects(img, cfg, 0)
    assert np.array_equal(out[:, 9, 0], np.ones(16, dtype=np.float32))
    assert np.array_equal(out[..., 1], img[..., 1])


# ============================================================
# Patches
# ============================================================

@pytest.mark.parametrize("requested,effective", [(16, 16), (30, 28), (60, 60), (90, 88), (101, 100)])
def test_effective_patch_size(requested, effective):
    spec = PatchSpec(requested_size=requested)
    assert spec.effective_size == effective
    assert spec.effective_size % 4 == 0
    assert spec.effective_size <= requested < spec.effective_size + 4


def test_full_size_crop_returns_the_whole_sample():
    sample = random_sample(64, 64)
    crop = random_crop(sample, PatchSpec(requested_size=64), np.random.default_rng(0))
    assert np.array_equal(crop.image, sample.image)
    assert np.array_equal(crop.labels, sample.labels)
    assert crop.domain == sample.domain


def test_crop_is_the_matching_subarray():
    sample = random_sample(128, 128, seed=3)
    rng = np.random.default_rng(5)
    for _ in range(10):
        crop = random_crop(sample, PatchSpec(requested_size=90), rng)
        assert crop.image.shape == (88, 88, 3)
        # locate the crop by its first row
        matches = [(t, l) for t in range(41) for l in range(41)
                   if np.array_equal(sample.image[t, l:l + 88], crop.image[0])]
        assert len(matches) == 1
        t, l = matches[0]
        assert np.array_equal(sample.image[t:t + 88, l:l + 88], crop.image)
        assert np.array_equal(sample.labels[t:t + 88, l:l + 88], crop.labels)


def test_crop_larger_than_image_is_rejected():
    with pytest.raises(PatchSizeError):
        random_crop(random_sample(128, 128), PatchSpec(requested_size=200), np.random.default_rng(0))


def test_legacy_rescale_resizes_to_the_effective_size():
    sample = random_sample(128, 128)
    spec = PatchSpec(requested_size=90, legacy_rescale=True)
    crop = random_crop(sample, spec, np.random.default_rng(0))
    assert crop.image.shape == (88, 88, 3)
    assert crop.labels.shape == (88, 88)
    assert set(np.unique(crop.labels)) <= set(np.unique(sample.labels))


def test_bicubic_same_size_is_a_no_op():
    img = np.random.default_rng(0).random((88, 88, 3)).astype(np.float32)
    assert np.array_equal(bicubic_resize(img, (88, 88)), img)


def test_bicubic_preserves_constants():
    img = np.full((60, 60, 3), 0.3, dtype=np.float32)
    assert bicubic_resize(img, (88, 88)) == pytest.approx(np.full((88, 88, 3), 0.3), abs=1e-6)


def test_bicubic_upscaled_ramp_matches_the_analytic_ramp():
    w = 32
    ramp = np.tile((np.arange(w) / (w - 1))[None, :, None], (w, 1, 3)).astype(np.float32)
    out = bicubic_resize(ramp, (2 * w, 2 * w))
    x_src = (np.arange(2 * w) + 0.5) / 2 - 0.5
    expected = x_src / (w - 1)
    interior = slice(4, 2 * w - 4)
    assert np.abs(out[10, interior, 0] - expected[interior]).max() < 0.02


def test_bicubic_rejects_degenerate_targets():
    with pytest.raises(PatchSizeError):
        bicubic_resize(np.zeros((16, 16, 3), dtype=np.float32), (2, 16))


# ============================================================
# Unpaired batches
# ============================================================

def test_one_step_has_batch_patches_per_domain():
    X = random_dataset(50, 32, 32, seed=1, name="x")
    Y = random_dataset(50, 32, 32, seed=2, name="y")
    batch = next(iter(UnpairedPatchLoader(X, Y, 40, PatchSpec(requested_size=18), seed=0)))
    assert batch.x.shape == (40, 16, 16, 3)
    assert batch.y.shape == (40, 16, 16, 3)


def test_epoch_is_one_pass_over_the_larger_set():
    X = random_dataset(10, seed=1, name="x")
    Y = random_dataset(30, seed=2, name="y")
    loader = UnpairedPatchLoader(X, Y, 4, PatchSpec(requested_size=16), seed=3)
    plans = loader.plan_epoch(0)
    assert len(plans) == loader.steps_per_epoch == 8
    y_indices = [p.index for _, ys in plans for p in ys]
    assert set(y_indices) == set(range(30))
    x_indices = [p.index for xs, _ in plans for p in xs]
    assert len(x_indices) == 32
    assert max(np.bincount(x_indices)) > 1


def test_batch_sequence_is_seed_deterministic_and_thread_independent():
    X = random_dataset(9, 24, 24, seed=1, name="x")
    Y = random_dataset(5, 24, 24, seed=2, name="y")
    spec = PatchSpec(requested_size=16)
    a = list(unpaired_batch_iterator(X, Y, 4, spec, seed=7, epochs=2))
    b = list(unpaired_batch_iterator(X, Y, 4, spec, seed=7, epochs=2, num_workers=3))
    assert [s.x_plan for s in a] == [s.x_plan for s in b]
    assert [s.y_plan for s in a] == [s.y_plan for s in b]
    assert all(np.array_equal(s.x, t.x) and np.array_equal(s.y, t.y) for s, t in zip(a, b))

    c = list(unpaired_batch_iterator(X, Y, 4, spec, seed=8, epochs=2))
    assert [s.x_plan for s in a] != [s.x_plan for s in c]


def test_empty_dataset_is_rejected():
    empty = LabeledDataset(name="empty", num_classes=4, samples=())
    with pytest.raises(DataError):
        UnpairedPatchLoader(empty, random_dataset(3), 2, PatchSpec(requested_size=16), seed=0)


# ============================================================
# Dataset I/O
# ============================================================

def test_save_load_round_trip(tmp_path, syn_dataset):
    save_dataset(syn_dataset, tmp_path / "ds")
    loaded = load_dataset(tmp_path / "ds", workers=2)
    assert loaded.name == syn_dataset.name
    assert loaded.num_classes == syn_dataset.num_classes
    for a, b in zip(syn_dataset, loaded):
        assert a.id == b.id and a.domain == b.domain
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.labels, b.labels)


def test_missing_file_is_a_format_error(tmp_path, syn_dataset):
    save_dataset(syn_dataset, tmp_path / "ds")
    missing = tmp_path / "ds" / "images" / f"{syn_dataset[0].id}.png"
    missing.unlink()
    with pytest.raises(FormatError, match=missing.name):
        load_dataset(tmp_path / "ds", workers=0)


def test_missing_manifest_is_a_format_error(tmp_path):
    with pytest.raises(FormatError):
        load_dataset(tmp_path / "nothing")


def test_out_of_range_class_id_is_a_format_error(tmp_path):
    dataset = random_dataset(2, num_classes=4)
    save_dataset(dataset, tmp_path / "ds")
    manifest_path = tmp_path / "ds" / MANIFEST_NAME
    manifest = json.loads(manifest_path.read_text())
    manifest["num_classes"] = 2
    manifest["class_names"] = manifest["class_names"][:2]
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(FormatError):
        load_dataset(tmp_path / "ds", workers=0)
