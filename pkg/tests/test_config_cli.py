"""Configuration round-trips and the command-line contracts."""

import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import small_pipeline_config
from isarec.config import PipelineConfig
from isarec.errors import ConfigError


class TestConfigFormat:
    def test_roundtrip_lossless(self):
        cfg = PipelineConfig()
        cfg.dataset.root = "/data/somewhere"
        cfg.layer1.whiten_eps = 0.17
        cfg.svm.grid_c = [2.0**-5, 3.14159, 2.0**15]
        cfg.run.splits = "alice,bob"
        back = PipelineConfig.from_text(cfg.to_text())
        assert back == cfg

    def test_default_roundtrip(self):
        cfg = PipelineConfig()
        assert PipelineConfig.from_text(cfg.to_text()) == cfg

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown config section"):
            PipelineConfig.from_text("[nope]\nx = 1\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            PipelineConfig.from_text("[dataset]\nnot_a_key = 1\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="bad value"):
            PipelineConfig.from_text("[layer1]\nfilters = many\n")

    def test_bad_modality_rejected(self):
        with pytest.raises(ConfigError, match="modality"):
            PipelineConfig.from_text("[dataset]\nmodality = infrared\n")

    def test_overrides(self):
        cfg = PipelineConfig().with_overrides(
            ["layer1.filters=64", "svm.grid_c=1.0,2.0", "dataset.modality=depth"]
        )
        assert cfg.layer1.filters == 64
        assert cfg.svm.grid_c == [1.0, 2.0]
        assert cfg.dataset.modality == "depth"
        # the original defaults are untouched
        assert PipelineConfig().layer1.filters == 300

    def test_override_bad_shape(self):
        with pytest.raises(ConfigError, match="section.key=value"):
            PipelineConfig().with_overrides(["filters=64"])

    def test_every_stage_has_a_seed(self):
        cfg = PipelineConfig()
        seeds = [
            cfg.layer1.sample_seed,
            cfg.layer1.train_seed,
            cfg.layer2.sample_seed,
            cfg.layer2.train_seed,
            cfg.vocabulary.seed,
            cfg.svm.cv_seed,
        ]
        assert all(isinstance(s, int) for s in seeds)


def run_cli(args, env_extra=None):
    env = os.environ.copy()
    env["PYTHONPATH"] = "/root/pkg/src"
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "isarec", *args],
        capture_output=True,
        text=True,
        env=env,
    )


@pytest.fixture(scope="module")
def cli_config(small_dataset, tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "config.ini"
    cfg = small_pipeline_config(small_dataset, "gray")
    cfg.to_file(path)
    return path


class TestCliContracts:
    def test_missing_root_exits_2(self, tmp_path):
        r = run_cli(["pretrain", "--root", str(tmp_path / "missing"), "--out", str(tmp_path / "o")])
        assert r.returncode == 2
        assert "not found" in r.stderr

    def test_usage_error_exits_2(self):
        r = run_cli(["frobnicate"])
        assert r.returncode == 2

    def test_pretrain_rejects_fused(self, cli_config, tmp_path):
        r = run_cli(
            ["pretrain", "--config", str(cli_config), "--modality", "fused",
             "--out", str(tmp_path / "o")]
        )
        assert r.returncode == 2
        assert "single modality" in r.stderr

    def test_pretrain_deterministic_model_files(self, cli_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            r = run_cli(["pretrain", "--config", str(cli_config), "--out", str(out)])
            assert r.returncode == 0, r.stderr
            assert (out / "resolved_config").is_file()
        f1 = (out1 / "network_gray.isanet").read_bytes()
        f2 = (out2 / "network_gray.isanet").read_bytes()
        assert f1 == f2

    def test_pretrain_depth_modality(self, cli_config, tmp_path):
        out = tmp_path / "d"
        r = run_cli(
            ["pretrain", "--config", str(cli_config), "--modality", "depth", "--out", str(out)]
        )
        assert r.returncode == 0, r.stderr
        assert (out / "network_depth.isanet").is_file()

    def test_encode_rerun_with_existing_vocab_identical(self, cli_config, tmp_path):
        out = tmp_path / "enc"
        r = run_cli(["pretrain", "--config", str(cli_config), "--out", str(out)])
        assert r.returncode == 0, r.stderr
        net = str(out / "network_gray.isanet")
        r = run_cli(["encode", "--config", str(cli_config), "--out", str(out), "--network", net])
        assert r.returncode == 0, r.stderr
        hist1 = (out / "histograms_gray.csv").read_bytes()
        assert (out / "skipped.csv").read_text().startswith("clip_id,reason")
        vocab = str(out / "vocab_gray.isavocab")
        r = run_cli(
            ["encode", "--config", str(cli_config), "--out", str(out),
             "--network", net, "--vocab", vocab]
        )
        assert r.returncode == 0, r.stderr
        assert (out / "histograms_gray.csv").read_bytes() == hist1

    def test_histogram_rows_sum_to_one(self, cli_config, tmp_path):
        out = tmp_path / "sums"
        run_cli(["pretrain", "--config", str(cli_config), "--out", str(out)])
        r = run_cli(
            ["encode", "--config", str(cli_config), "--out", str(out),
             "--network", str(out / "network_gray.isanet")]
        )
        assert r.returncode == 0, r.stderr
        lines = (out / "histograms_gray.csv").read_text().splitlines()[1:]
        for line in lines:
            weights = np.array([float(v) for v in line.split(",")[2:]])
            assert abs(weights.sum() - 1.0) <= 1e-9

    def test_train_svm_produces_model(self, cli_config, tmp_path):
        out = tmp_path / "svm"
        run_cli(["pretrain", "--config", str(cli_config), "--out", str(out)])
        run_cli(
            ["encode", "--config", str(cli_config), "--out", str(out),
             "--network", str(out / "network_gray.isanet")]
        )
        r = run_cli(
            ["train-svm", "--config", str(cli_config), "--out", str(out),
             "--histograms", str(out / "histograms_gray.csv")]
        )
        assert r.returncode == 0, r.stderr
        assert (out / "svm_gray.isasvm").is_file()
        assert (out / "grid_search.csv").read_text().startswith("C,gamma,cv_accuracy")

    def test_evaluate_writes_three_reports(self, cli_config, tmp_path):
        out = tmp_path / "eval"
        r = run_cli(
            ["evaluate", "--config", str(cli_config), "--out", str(out),
             "--splits", "subject01"]
        )
        assert r.returncode == 0, r.stderr
        for name in ("accuracy.txt", "confusion.csv", "per_split.csv", "resolved_config"):
            assert (out / name).is_file()
        per_split = (out / "per_split.csv").read_text().splitlines()
        assert len(per_split) == 2  # header + the one split requested

    def test_env_threads_fallback(self, cli_config, tmp_path):
        out = tmp_path / "envthreads"
        r = run_cli(
            ["evaluate", "--config", str(cli_config), "--out", str(out),
             "--splits", "subject01"],
            env_extra={"ISAREC_THREADS": "2"},
        )
        assert r.returncode == 0, r.stderr
        resolved = (out / "resolved_config").read_text()
        assert "threads = 2" in resolved

    def test_resolved_config_roundtrips(self, cli_config, tmp_path):
        out = tmp_path / "resolved"
        r = run_cli(
            ["evaluate", "--config", str(cli_config), "--out", str(out),
             "--splits", "subject01", "--set", "vocabulary.size=16"]
        )
        assert r.returncode == 0, r.stderr
        resolved = PipelineConfig.from_file(out / "resolved_config")
        assert resolved.vocabulary.size == 16
        assert resolved.run.splits == "subject01"

    def test_too_small_clip_listed_in_skipped(self, tmp_path):
        from isarec.synthetic import build_synthetic_dataset, moving_bar_clip
        from isarec.video import GRAY, save_clip

        root = tmp_path / "data"
        build_synthetic_dataset(
            root, n_subjects=2, clips_per_subject=2, width=40, height=30,
            n_frames=12, with_depth=False, seed=3,
        )
        # a clip with too few frames for one layer-2 block (block_t = 5)
        short = moving_bar_clip(
            "shorty", GRAY, width=40, height=30, n_frames=2, direction=1,
            speed=1.0, bar_half_width=2.0, contrast=0.5, background=0.2,
            noise=0.01, seed=9,
        )
        save_clip(short, root / "clips" / "shorty" / "gray")
        manifest = root / "manifest.csv"
        manifest.write_text(
            manifest.read_text() + "shorty,clips/shorty/gray,,left,subject01\n"
        )
        cfg_path = tmp_path / "cfg.ini"
        small_pipeline_config(root, "gray").to_file(cfg_path)
        # pretraining requires every named clip to fit a layer-2 block, so
        # point it at the full-length clips only
        keep = tmp_path / "pretrain_ids.txt"
        keep.write_text(
            "\n".join(
                line.split(",")[0]
                for line in (root / "manifest.csv").read_text().splitlines()[1:]
                if not line.startswith("shorty")
            )
            + "\n"
        )
        out = tmp_path / "out"
        r = run_cli(
            ["pretrain", "--config", str(cfg_path), "--out", str(out),
             "--pretrain-set", str(keep)]
        )
        assert r.returncode == 0, r.stderr
        r = run_cli(
            ["encode", "--config", str(cfg_path), "--out", str(out),
             "--network", str(out / "network_gray.isanet"),
             "--pretrain-set", str(keep)]
        )
        assert r.returncode == 0, r.stderr
        skipped = (out / "skipped.csv").read_text().splitlines()
        assert any(line.startswith("shorty,") for line in skipped[1:])
        hist = (out / "histograms_gray.csv").read_text()
        assert "shorty" not in hist

    def test_pipeline_runs_all_stages(self, cli_config, tmp_path):
        out = tmp_path / "pipe"
        r = run_cli(
            ["pipeline", "--config", str(cli_config), "--out", str(out),
             "--splits", "subject01"]
        )
        assert r.returncode == 0, r.stderr
        for name in (
            "network_gray.isanet",
            "vocab_gray.isavocab",
            "histograms_gray.csv",
            "svm_gray.isasvm",
            "accuracy.txt",
            "confusion.csv",
            "per_split.csv",
        ):
            assert (out / name).is_file(), name
