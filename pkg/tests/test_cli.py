"""Command-line surface: commands, chaining and exit codes."""
import pytest

from src.data.dataset_io import load_dataset
from src.schemas import ArmReport, EmbeddingDocument, IoUReport, read_document, write_document
from src.scripts.cli import main


@pytest.fixture(autouse=True)
def cli_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SYN2REAL_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("SYN2REAL_OUTPUT_ROOT", str(tmp_path / "runs"))
    monkeypatch.setenv("SYN2REAL_DATA_WORKERS", "0")
    monkeypatch.setenv("SYN2REAL_DEVICE", "cpu")


@pytest.fixture
def manifest_file(tmp_path, tiny_manifest):
    path = tmp_path / "manifest.json"
    write_document(tiny_manifest, path)
    return path


@pytest.fixture
def data_dir(tmp_path, manifest_file):
    out = tmp_path / "data"
    assert main(["gen-data", "--config", str(manifest_file), "--out", str(out)]) == 0
    return out


def test_gen_data_writes_four_datasets(data_dir):
    sizes = {name: len(load_dataset(data_dir / name, 0))
             for name in ("syn_train", "real_train", "real_test", "analysis_real")}
    assert sizes == {"syn_train": 6, "real_train": 4, "real_test": 2, "analysis_real": 3}


def test_translate_segment_and_evaluate(tmp_path, data_dir, tiny_translation_cfg, tiny_segmenter_cfg,
                                        tiny_analysis_cfg):
    cut_cfg = tmp_path / "cut.json"
    seg_cfg = tmp_path / "seg.json"
    write_document(tiny_translation_cfg, cut_cfg)
    write_document(tiny_segmenter_cfg, seg_cfg)

    assert main(["train-cut", "--config", str(cut_cfg), "--x", str(data_dir / "syn_train"),
                 "--y", str(data_dir / "real_train"), "--out", str(tmp_path / "cut")]) == 0
    assert main(["refine", "--ckpt", str(tmp_path / "cut"), "--in", str(data_dir / "syn_train"),
                 "--out", str(tmp_path / "refined"), "--noise-seed", "0"]) == 0
    assert len(load_dataset(tmp_path / "refined", 0)) == 6

    assert main(["train-seg", "--config", str(seg_cfg),
                 "--train", f"{data_dir / 'real_train'},{tmp_path / 'refined'}", "--p-real", "0.5",
                 "--test", str(data_dir / "real_test"), "--out", str(tmp_path / "seg")]) == 0
    report = read_document(ArmReport, tmp_path / "seg" / "report.json")
    assert report.distribution.k == 2

    assert main(["eval", "--ckpt", str(tmp_path / "seg"), "--test", str(data_dir / "real_test"),
                 "--report", str(tmp_path / "eval.json")]) == 0
    evaluation = read_document(IoUReport, tmp_path / "eval.json")
    assert evaluation.config_hash == report.final_ema.config_hash
    assert evaluation.mean_iou == pytest.approx(report.final_ema.mean_iou)

    assert main(["plot", "--reports", str(tmp_path / "seg" / "report.json"),
                 "--out", str(tmp_path / "plot.svg")]) == 0
    assert (tmp_path / "plot.svg").stat().st_size > 0

    analysis_cfg = tmp_path / "analysis.json"
    write_document(tiny_analysis_cfg, analysis_cfg)
    assert main(["analyze", "--config", str(analysis_cfg), "--syn", str(data_dir / "syn_train"),
                 "--refined", str(tmp_path / "refined"), "--real", str(data_dir / "analysis_real"),
                 "--ckpt", str(tmp_path / "seg"), "--out", str(tmp_path / "embedding.json"),
                 "--plot", str(tmp_path / "embedding.svg")]) == 0
    embedding = read_document(EmbeddingDocument, tmp_path / "embedding.json")
    assert len(embedding.points) == 9


def test_unparsable_environment_exits_with_2(monkeypatch, manifest_file):
    monkeypatch.setenv("SYN2REAL_DATA_WORKERS", "many")
    assert main(["gen-data", "--config", str(manifest_file)]) == 2


def test_unsupported_device_exits_with_2(monkeypatch, manifest_file):
    monkeypatch.setenv("SYN2REAL_DEVICE", "abacus")
    assert main(["gen-data", "--config", str(manifest_file)]) == 2


def test_invalid_manifest_exits_with_2(tmp_path, tiny_manifest):
    data = tiny_manifest.model_dump(mode="json")
    data["synthetic_scene"]["image_size"] = [30, 32]
    path = tmp_path / "bad.json"
    path.write_text(type(tiny_manifest).model_validate(data).model_dump_json())
    assert main(["gen-data", "--config", str(path), "--out", str(tmp_path / "data")]) == 2


def test_missing_config_file_exits_with_2(tmp_path):
    assert main(["pipeline", "--config", str(tmp_path / "nowhere.json")]) == 2


def test_missing_dataset_exits_with_3(tmp_path):
    assert main(["train-cut", "--x", str(tmp_path / "no_x"), "--y", str(tmp_path / "no_y"),
                 "--out", str(tmp_path / "cut")]) == 3


def test_missing_out_exits_with_2(data_dir):
    assert main(["train-cut", "--x", str(data_dir / "syn_train"), "--y", str(data_dir / "real_train")]) == 2


def test_unknown_command_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["teleport"])
    assert info.value.code == 2
