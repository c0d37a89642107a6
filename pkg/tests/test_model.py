"""Generator, discriminator, projection heads, segmenter and checkpoints."""
import numpy as np
import pytest
import torch

from src.errors import ConfigurationError, FormatError, LocationError, ShapeError
from src.models.checkpoint import (
    build_translation_models,
    load_segmenter_checkpoint,
    load_translation_checkpoint,
    save_segmenter_checkpoint,
    save_translation_checkpoint,
)
from src.models.discriminator import Discriminator
from src.models.generator import Generator
from src.models.projection import ProjectionHeads, extract_and_project, gather_locations
from src.models.segmenter import Segmenter
from src.models.tensors import images_to_tensor, tensor_to_images
from src.schemas import (
    DiscriminatorConfig,
    GeneratorConfig,
    NoiseConfig,
    SegmenterConfig,
    TranslationConfig,
)


def small_generator(**overrides) -> Generator:
    cfg = GeneratorConfig(trunk_channels=16, n_blocks=2, nce_dim=8).model_copy(update=overrides)
    torch.manual_seed(0)
    return Generator(cfg).eval()


# ============================================================
# Generator
# ============================================================

def test_generator_output_shape_range_and_features():
    G = small_generator()
    x = torch.rand(2, 3, 16, 16)
    with torch.no_grad():
        out, feats = G(x)
    assert out.shape == (2, 3, 16, 16)
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert list(feats) == ["input", "stem", "down1", "down2", "trunk_mid"]
    assert feats["stem"].shape == (2, 4, 16, 16)
    assert feats["down1"].shape == (2, 8, 8, 8)
    assert feats["down2"].shape == (2, 16, 4, 4)
    assert feats["trunk_mid"].shape == (2, 16, 4, 4)
    assert {k: v.shape[1] for k, v in feats.items()} == G.nce_channels()


def test_generator_rejects_sizes_not_divisible_by_four():
    with pytest.raises(ShapeError):
        small_generator()(torch.rand(1, 3, 18, 16))


def test_generator_noise_is_controlled_by_the_seed():
    G = small_generator(noise=NoiseConfig(n_noise=4))
    x = torch.rand(1, 3, 16, 16)
    with torch.no_grad():
        a, _ = G(x, noise_seed=1)
        b, _ = G(x, noise_seed=1)
        c, _ = G(x, noise_seed=2)
    assert torch.equal(a, b)
    assert not torch.equal(a, c)


def test_generator_without_noise_ignores_the_seed():
    G = small_generator()
    x = torch.rand(1, 3, 16, 16)
    with torch.no_grad():
        assert torch.equal(G(x, noise_seed=1)[0], G(x, noise_seed=2)[0])


@pytest.mark.parametrize("update", [
    {"trunk_channels": 10},
    {"n_blocks": 0},
    {"nce_layers": ["bogus"]},
    {"noise": NoiseConfig(n_noise=3)},
    {"noise": NoiseConfig(n_noise=8)},
])
def test_invalid_generator_config_is_rejected(update):
    with pytest.raises(ConfigurationError):
        Generator(GeneratorConfig(trunk_channels=16, n_blocks=1).model_copy(update=update))


def test_generator_is_covariant_under_four_pixel_shifts():
    G = small_generator(padding_mode="circular").double()
    x = torch.rand(1, 3, 16, 16, dtype=torch.float64)
    with torch.no_grad():
        shifted_then_translated, _ = G(torch.roll(x, shifts=4, dims=3))
        translated_then_shifted = torch.roll(G(x)[0], shifts=4, dims=3)
        down, _ = G(torch.roll(x, shifts=8, dims=2))
        up = torch.roll(G(x)[0], shifts=8, dims=2)
    assert torch.allclose(shifted_then_translated, translated_then_shifted, atol=1e-9)
    assert torch.allclose(down, up, atol=1e-9)


def test_generator_parameters_do_not_depend_on_input_size():
    G = small_generator()
    n_params = sum(p.numel() for p in G.parameters())
    with torch.no_grad():
        for size in (16, 32, 44):
            out, _ = G(torch.rand(1, 3, size, size))
            assert out.shape[-2:] == (size, size)
    assert sum(p.numel() for p in G.parameters()) == n_params


# ============================================================
# Discriminator
# ============================================================

@pytest.mark.parametrize("size", [16, 32, 88])
def test_discriminator_logit_map_size(size):
    D = Discriminator(DiscriminatorConfig(channels=4))
    out = D(torch.rand(2, 3, size, size))
    assert out.shape == (2, 1, Discriminator.output_size(size), Discriminator.output_size(size))


def test_discriminator_output_size_for_default_patch():
    assert Discriminator.output_size(88) == 20


def test_discriminator_rejects_small_inputs():
    with pytest.raises(ShapeError):
        Discriminator(DiscriminatorConfig(channels=4))(torch.rand(1, 3, 8, 8))


# ============================================================
# Projection heads
# ============================================================

def test_projections_are_unit_norm():
    torch.manual_seed(0)
    heads = ProjectionHeads({"a": 3, "b": 8}, dim=16)
    maps = {"a": torch.randn(2, 3, 8, 8), "b": torch.randn(2, 8, 4, 4)}
    locations = {"a": torch.tensor([0, 5, 63]), "b": torch.tensor([1, 2, 15])}
    embeddings = extract_and_project(heads, maps, locations)
    for emb in embeddings.values():
        assert emb.shape == (2, 3, 16)
        assert torch.allclose(emb.norm(dim=-1), torch.ones(2, 3), atol=1e-6)


def test_gather_picks_the_flat_index():
    fmap = torch.arange(2 * 3 * 4 * 4, dtype=torch.float32).reshape(2, 3, 4, 4)
    picked = gather_locations(fmap, torch.tensor([5]))
    assert torch.equal(picked[:, 0, :], fmap[:, :, 1, 1])


def test_out_of_range_location_is_rejected():
    fmap = torch.zeros(1, 3, 4, 4)
    with pytest.raises(LocationError):
        gather_locations(fmap, torch.tensor([3, 16]))
    with pytest.raises(IndexError):
        gather_locations(fmap, torch.tensor([-1]))


def test_missing_layer_locations_are_rejected():
    heads = ProjectionHeads({"a": 3}, dim=4)
    with pytest.raises(ShapeError):
        extract_and_project(heads, {"a": torch.zeros(1, 3, 4, 4)}, {})


# ============================================================
# Segmenter
# ============================================================

def test_segmenter_shapes():
    model = Segmenter(4, SegmenterConfig(width=4)).eval()
    x = torch.rand(2, 3, 16, 16)
    with torch.no_grad():
        assert model(x).shape == (2, 4, 16, 16)
        assert model.features(x, "enc1").shape == (2, 8, 8, 8)
        assert model.features(x, "enc3").shape == (2, 32, 2, 2)
    assert model.layer_channels("dec1") == 8


@pytest.mark.parametrize("size", [(12, 16), (36, 36), (36, 44), (20, 28)])
def test_segmenter_pads_sizes_not_divisible_by_eight(size):
    h, w = size
    model = Segmenter(4, SegmenterConfig(width=4)).eval()
    x = torch.rand(2, 3, h, w)
    with torch.no_grad():
        assert model(x).shape == (2, 4, h, w)
        assert model.features(x, "enc1").shape == (2, 8, h // 2, w // 2)
        assert model.features(x, "enc3").shape == (2, 32, -(-h // 8), -(-w // 8))


def test_segmenter_prediction_is_the_crop_of_the_edge_padded_frame():
    torch.manual_seed(0)
    model = Segmenter(4, SegmenterConfig(width=4)).eval()
    x = torch.rand(1, 3, 36, 36)
    padded = torch.nn.functional.pad(x, (0, 4, 0, 4), mode="replicate")
    with torch.no_grad():
        assert torch.allclose(model(x), model(padded)[..., :36, :36], atol=1e-6)


def test_segmenter_rejects_non_image_tensors():
    with pytest.raises(ShapeError):
        Segmenter(4, SegmenterConfig(width=4))(torch.rand(3, 16, 16))


def test_segmenter_rejects_unknown_layers():
    model = Segmenter(4, SegmenterConfig(width=4))
    with pytest.raises(ConfigurationError):
        model.features(torch.rand(1, 3, 16, 16), "enc9")


# ============================================================
# Tensors and checkpoints
# ============================================================

def test_image_tensor_conversion():
    images = np.random.default_rng(0).random((2, 8, 12, 3)).astype(np.float32)
    tensor = images_to_tensor(images)
    assert tensor.shape == (2, 3, 8, 12)
    assert np.array_equal(tensor_to_images(tensor), images)
    with pytest.raises(ShapeError):
        images_to_tensor(np.zeros((2, 8, 8, 4), dtype=np.float32))


def test_translation_checkpoint_round_trip(tmp_path, tiny_translation_cfg):
    torch.manual_seed(3)
    G, D, H = build_translation_models(tiny_translation_cfg)
    save_translation_checkpoint(tmp_path / "ckpt", G, D, H, tiny_translation_cfg, "abc123", step=7, epoch=2)

    loaded = load_translation_checkpoint(tmp_path / "ckpt")
    assert loaded.meta.step == 7 and loaded.meta.epoch == 2
    assert loaded.meta.config_hash == "abc123"
    assert loaded.cfg == tiny_translation_cfg
    for original, restored in ((G, loaded.generator), (D, loaded.discriminator), (H, loaded.heads)):
        for key, tensor in original.state_dict().items():
            assert torch.equal(tensor, restored.state_dict()[key])


def test_checkpoint_with_missing_blob_is_a_format_error(tmp_path, tiny_translation_cfg):
    G, D, H = build_translation_models(tiny_translation_cfg)
    ckpt = save_translation_checkpoint(tmp_path / "ckpt", G, D, H, tiny_translation_cfg, "h", 0, 0)
    next(ckpt.glob("generator.*.f32")).unlink()
    with pytest.raises(FormatError):
        load_translation_checkpoint(ckpt)


def test_checkpoint_kind_is_checked(tmp_path, tiny_translation_cfg):
    G, D, H = build_translation_models(tiny_translation_cfg)
    ckpt = save_translation_checkpoint(tmp_path / "ckpt", G, D, H, tiny_translation_cfg, "h", 0, 0)
    with pytest.raises(FormatError):
        load_segmenter_checkpoint(ckpt)
    with pytest.raises(FormatError):
        load_translation_checkpoint(tmp_path / "nowhere")


def test_checkpoint_with_other_architecture_is_a_format_error(tmp_path, tiny_translation_cfg):
    G, D, H = build_translation_models(tiny_translation_cfg)
    ckpt = save_translation_checkpoint(tmp_path / "ckpt", G, D, H, tiny_translation_cfg, "h", 0, 0)
    wider = tiny_translation_cfg.model_copy(
        update={"generator": tiny_translation_cfg.generator.model_copy(update={"trunk_channels": 32})}
    )
    G2, D2, H2 = build_translation_models(wider)
    other = save_translation_checkpoint(tmp_path / "other", G2, D2, H2, wider, "h", 0, 0)
    # architecture says 16 channels but blobs hold 32
    (ckpt / "meta.json").write_text((other / "meta.json").read_text().replace('"trunk_channels": 32',
                                                                              '"trunk_channels": 16'))
    for blob in other.glob("*.f32"):
        (ckpt / blob.name).write_bytes(blob.read_bytes())
    with pytest.raises(FormatError):
        load_translation_checkpoint(ckpt)


def test_segmenter_checkpoint_round_trip(tmp_path):
    cfg = SegmenterConfig(width=4)
    torch.manual_seed(0)
    model = Segmenter(3, cfg)
    ema = Segmenter(3, cfg)
    save_segmenter_checkpoint(tmp_path / "seg", model, ema, cfg, "segh", step=5, epoch=1)

    loaded = load_segmenter_checkpoint(tmp_path / "seg")
    assert loaded.model.num_classes == 3
    assert loaded.meta.config_hash == "segh"
    x = torch.rand(1, 3, 16, 16)
    model.eval()
    ema.eval()
    with torch.no_grad():
        assert torch.equal(loaded.model(x), model(x))
        assert torch.equal(loaded.ema(x), ema(x))


def test_translation_config_default_is_valid():
    TranslationConfig().check()
