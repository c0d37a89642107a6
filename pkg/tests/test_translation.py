"""Translation training, collapse detection and refinement."""
import dataclasses
import json

import numpy as np
import pytest
import torch

import src.services.translation_trainer as translation_trainer
from src.config import REFINE_NOISE_SEED
from src.data.samples import LabeledDataset, quantize_to_8bit
from src.errors import DataError, ShapeError, TrainingAbortedError
from src.models.checkpoint import load_translation_checkpoint, read_meta
from src.schemas import Domain, GeneratorConfig, NoiseConfig
from src.services.refiner import REFINED_PREFIX, refine_dataset, source_id
from src.services.translation_trainer import (
    DIAGNOSTIC_DIR,
    LOG_NAME,
    SNAPSHOT_DIR,
    TranslationTrainer,
    build_seeded_models,
    collapse_distance,
    lr_factor,
    train_cut,
)
from tests.conftest import random_dataset


def read_log(path):
    records = [json.loads(line) for line in path.read_text().splitlines()]
    steps = [r for r in records if "loss" in r]
    epochs = [r for r in records if "wall_seconds" in r]
    return steps, epochs


@pytest.fixture
def trained(tmp_path, app_config, tiny_translation_cfg, syn_dataset, real_dataset):
    result = TranslationTrainer(tiny_translation_cfg, app_config).train(syn_dataset, real_dataset, tmp_path / "cut")
    return result


# ============================================================
# Training
# ============================================================

def test_training_writes_log_snapshots_and_final_checkpoint(trained, tmp_path):
    out = tmp_path / "cut"
    # |X|=6, batch 4 -> 2 steps per epoch, 2 epochs
    assert trained.steps == 4
    steps, epochs = read_log(out / LOG_NAME)
    assert [s["step"] for s in steps] == [1, 2, 3, 4]
    assert [e["epoch"] for e in epochs] == [0, 1]
    assert all(np.isfinite(s["loss"]["total"]) for s in steps)

    meta = read_meta(out)
    assert meta.epoch == 2 and meta.step == 4
    assert meta.config_hash == trained.config_hash
    assert (out / SNAPSHOT_DIR / "epoch_0001").is_dir()
    assert not (out / SNAPSHOT_DIR / "epoch_0002").exists()

    assert len(trained.timings) == 2
    assert len(trained.collapse_distances) == 2
    assert all(d is not None and d >= 0 for d in trained.collapse_distances)
    assert trained.mean_epoch_seconds > 0


def test_training_is_seed_deterministic(tmp_path, app_config, tiny_translation_cfg, syn_dataset, real_dataset):
    a = TranslationTrainer(tiny_translation_cfg, app_config).train(syn_dataset, real_dataset, tmp_path / "a")
    b = TranslationTrainer(tiny_translation_cfg, app_config).train(syn_dataset, real_dataset, tmp_path / "b")
    steps_a, _ = read_log(tmp_path / "a" / LOG_NAME)
    steps_b, _ = read_log(tmp_path / "b" / LOG_NAME)
    for sa, sb in zip(steps_a, steps_b):
        assert sa["loss"]["total"] == pytest.approx(sb["loss"]["total"], rel=1e-5)
    assert a.config_hash == b.config_hash


def test_run_hash_is_recorded(tmp_path, app_config, tiny_translation_cfg, syn_dataset, real_dataset):
    cfg = tiny_translation_cfg.model_copy(update={"epochs": 1})
    TranslationTrainer(cfg, app_config, run_hash="stage-hash").train(syn_dataset, real_dataset, tmp_path / "cut")
    assert read_meta(tmp_path / "cut").config_hash == "stage-hash"


def test_empty_source_is_rejected(tmp_path, app_config, tiny_translation_cfg, real_dataset):
    empty = LabeledDataset(name="empty", num_classes=4, samples=())
    with pytest.raises(DataError):
        TranslationTrainer(tiny_translation_cfg, app_config).train(empty, real_dataset, tmp_path / "cut")


def test_non_finite_loss_aborts_with_a_diagnostic_checkpoint(tmp_path, app_config, tiny_translation_cfg,
                                                             syn_dataset, real_dataset, monkeypatch):
    real_total_loss = translation_trainer.total_loss

    def poisoned(*args, **kwargs):
        terms = real_total_loss(*args, **kwargs)
        return dataclasses.replace(terms, nce_x=terms.nce_x * float("nan"))

    monkeypatch.setattr(translation_trainer, "total_loss", poisoned)
    with pytest.raises(TrainingAbortedError) as info:
        TranslationTrainer(tiny_translation_cfg, app_config).train(syn_dataset, real_dataset, tmp_path / "cut")

    diagnostic = info.value.diagnostic_checkpoint
    assert diagnostic == tmp_path / "cut" / DIAGNOSTIC_DIR
    assert read_meta(diagnostic).step == 0
    assert info.value.exit_code == 4


@pytest.mark.parametrize("epochs", [1, 2, 5, 40])
def test_learning_rate_schedule(epochs):
    factors = [lr_factor(e, epochs) for e in range(epochs)]
    assert factors[0] == (1.0 if epochs > 1 else 0.5)
    assert all(0.0 < f <= 1.0 for f in factors)
    assert all(a >= b for a, b in zip(factors, factors[1:]))
    assert all(f == 1.0 for f in factors[:max(epochs // 2 - 1, 0)])


@pytest.mark.parametrize("epochs,last", [(1, 0.5), (2, 0.5), (5, 0.25), (40, 1 / 21)])
def test_learning_rate_ends_one_step_above_zero(epochs, last):
    assert lr_factor(epochs - 1, epochs) == pytest.approx(last)


def test_seeded_models_are_reproducible(tiny_translation_cfg):
    G1, _, _ = build_seeded_models(tiny_translation_cfg)
    G2, _, _ = build_seeded_models(tiny_translation_cfg)
    for p1, p2 in zip(G1.parameters(), G2.parameters()):
        assert torch.equal(p1, p2)


def test_collapse_distance_is_zero_for_identical_inputs(tiny_translation_cfg):
    G, _, _ = build_seeded_models(tiny_translation_cfg)
    probe = torch.rand(1, 3, 16, 16).repeat(3, 1, 1, 1)
    assert collapse_distance(G.eval(), probe, noise_seed=0) == pytest.approx(0.0, abs=1e-7)
    assert collapse_distance(G, torch.rand(3, 3, 16, 16), noise_seed=0) > 0


# ============================================================
# Refinement
# ============================================================

def test_refinement_keeps_labels_and_prefixes_ids(trained, tmp_path, syn_dataset):
    refined = refine_dataset(tmp_path / "cut", syn_dataset, noise_seed=0)
    assert len(refined) == len(syn_dataset)
    assert refined.num_classes == syn_dataset.num_classes
    for src, out in zip(syn_dataset, refined):
        assert out.id == REFINED_PREFIX + src.id
        assert source_id(out.id) == src.id
        assert out.domain == Domain.REFINED
        assert out.image.shape == src.image.shape
        assert np.array_equal(out.labels, src.labels)
        assert np.array_equal(out.image, quantize_to_8bit(out.image))


def test_refinement_from_directory_matches_loaded_models(trained, tmp_path, syn_dataset):
    from_dir = refine_dataset(tmp_path / "cut", syn_dataset, noise_seed=3)
    from_models = refine_dataset(load_translation_checkpoint(tmp_path / "cut"), syn_dataset, noise_seed=3)
    for a, b in zip(from_dir, from_models):
        assert np.array_equal(a.image, b.image)
    assert from_dir.config_hash == from_models.config_hash


def test_refinement_runs_at_full_resolution(trained, tmp_path):
    frames = random_dataset(2, 128, 96, seed=4, name="frames")
    refined = refine_dataset(tmp_path / "cut", frames, noise_seed=0)
    assert [s.image.shape for s in refined] == [(128, 96, 3)] * 2


def test_refinement_rejects_sizes_not_divisible_by_four(trained, tmp_path):
    with pytest.raises(ShapeError):
        refine_dataset(tmp_path / "cut", random_dataset(1, 30, 32), noise_seed=0)


@pytest.fixture
def noisy_checkpoint(tmp_path, app_config, tiny_translation_cfg, syn_dataset, real_dataset):
    cfg = tiny_translation_cfg.model_copy(update={
        "epochs": 1,
        "generator": GeneratorConfig(trunk_channels=16, n_blocks=1, nce_dim=16, noise=NoiseConfig(n_noise=4)),
    })
    TranslationTrainer(cfg, app_config).train(syn_dataset, real_dataset, tmp_path / "noisy")
    return tmp_path / "noisy"


def test_refinement_noise_seed_controls_the_output(noisy_checkpoint, syn_dataset):
    a = refine_dataset(noisy_checkpoint, syn_dataset, noise_seed=1)
    b = refine_dataset(noisy_checkpoint, syn_dataset, noise_seed=1)
    c = refine_dataset(noisy_checkpoint, syn_dataset, noise_seed=2)
    assert all(np.array_equal(x.image, y.image) for x, y in zip(a, b))
    assert a.config_hash != c.config_hash


def test_refinement_without_a_seed_ignores_global_rng_state(noisy_checkpoint, syn_dataset):
    torch.manual_seed(11)
    a = refine_dataset(noisy_checkpoint, syn_dataset)
    torch.manual_seed(12)
    torch.rand(100)
    b = refine_dataset(noisy_checkpoint, syn_dataset)
    default = refine_dataset(noisy_checkpoint, syn_dataset, noise_seed=REFINE_NOISE_SEED)
    assert all(np.array_equal(x.image, y.image) for x, y in zip(a, b))
    assert all(np.array_equal(x.image, y.image) for x, y in zip(a, default))
    assert a.config_hash == default.config_hash


def test_train_cut_function(tmp_path, app_config, tiny_translation_cfg, syn_dataset, real_dataset):
    cfg = tiny_translation_cfg.model_copy(update={"epochs": 1})
    result = train_cut(cfg, syn_dataset, real_dataset, tmp_path / "cut", app_config)
    assert result.checkpoint == tmp_path / "cut"
    assert result.steps == 2
    assert read_meta(result.checkpoint).epoch == 1
