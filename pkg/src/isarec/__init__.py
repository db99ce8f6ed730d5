"""Activity recognition from grayscale/depth video with learned features.

The pipeline: spatiotemporal blocks -> contrast normalization -> PCA
whitening -> two stacked subspace-pooling feature layers trained by
projected gradient descent -> k-means visual vocabulary -> bag-of-words
clip histograms -> one-vs-one RBF SVM -> leave-one-person-out evaluation.
"""

from .blocks import (
    BlockGeometry,
    Patch,
    contrast_normalize,
    contrast_normalize_rows,
    dense_blocks,
    flatten_block,
    sample_random_blocks,
    unflatten_block,
)
from .config import FUSED, PipelineConfig
from .errors import (
    ConfigError,
    DegenerateFilterError,
    EmptyClipError,
    FrameSequenceError,
    GeometryError,
    IsarecError,
    ManifestError,
    ModelFormatError,
    PgmError,
)
from .evaluation import (
    EvaluationReport,
    Split,
    fuse_histograms,
    lopo_splits,
    render_reports,
    run_evaluation,
)
from .isa import (
    IsaLayer,
    IsaNetwork,
    IsaTrainConfig,
    LayerSpec,
    StackGeometry,
    activations,
    extract_layer1,
    extract_stacked,
    extract_stacked_batch,
    gradient,
    objective,
    pretrain_network,
    project_orthonormal,
    train_layer,
)
from .modelio import (
    load_histograms,
    load_network,
    load_svm,
    load_vocabulary,
    save_histograms,
    save_network,
    save_svm,
    save_vocabulary,
)
from .svm import (
    BinarySvm,
    GridSearchResult,
    SvmModel,
    grid_search,
    predict,
    predict_binary,
    rbf_kernel,
    train_binary_svm,
    train_multiclass,
)
from .video import (
    DEPTH,
    GRAY,
    DatasetManifest,
    ManifestEntry,
    VideoClip,
    load_clip,
    load_manifest,
    resize_clip,
    save_clip,
    save_manifest,
)
from .vocabulary import (
    BowHistogram,
    Vocabulary,
    assign,
    clip_descriptors,
    encode_clip,
    kmeans_fit,
)
from .whitening import WhiteningTransform, apply_whitening, fit_pca_whitening

__version__ = "0.1.0"
