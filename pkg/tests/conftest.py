import numpy as np
import pytest

from isarec.config import PipelineConfig
from isarec.synthetic import build_synthetic_dataset


def small_pipeline_config(root, modality="gray"):
    """A configuration small enough for test-speed end-to-end runs."""
    cfg = PipelineConfig()
    cfg.dataset.root = str(root)
    cfg.dataset.modality = modality
    cfg.dataset.frame_width = 40
    cfg.dataset.frame_height = 30
    cfg.layer1.block_x = 6
    cfg.layer1.block_y = 6
    cfg.layer1.block_t = 3
    cfg.layer1.stride_x = 2
    cfg.layer1.stride_y = 2
    cfg.layer1.stride_t = 2
    cfg.layer1.whiten_dim = 20
    cfg.layer1.filters = 20
    cfg.layer1.step_size = 0.5
    cfg.layer1.max_iters = 40
    cfg.layer1.patches = 800
    cfg.layer2.block_x = 8
    cfg.layer2.block_y = 8
    cfg.layer2.block_t = 5
    cfg.layer2.stride_x = 8
    cfg.layer2.stride_y = 8
    cfg.layer2.stride_t = 5
    cfg.layer2.whiten_dim = 16
    cfg.layer2.filters = 16
    cfg.layer2.step_size = 0.5
    cfg.layer2.max_iters = 40
    cfg.layer2.patches = 400
    cfg.vocabulary.size = 20
    cfg.svm.grid_c = [1.0, 32.0]
    cfg.svm.grid_gamma = [4.0, 32.0]
    cfg.svm.folds = 3
    return cfg


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Tiny bar-translation dataset: 3 subjects x 4 clips, 40x30x12, both modalities."""
    root = tmp_path_factory.mktemp("small_dataset")
    build_synthetic_dataset(
        root,
        n_subjects=3,
        clips_per_subject=4,
        width=40,
        height=30,
        n_frames=12,
        with_depth=True,
        seed=19,
    )
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
