"""Subspace feature layers trained by batch projected gradient descent.

A layer holds k unit filters (rows of W, kept mutually orthonormal) whose
responses are pooled over m contiguous groups of size g:

    p_i(x) = sqrt( sum_{j in group i} (w_j . x)^2 + eps )

Training minimizes the mean total pooled response over a fixed batch of
whitened patch vectors,

    L(W) = (1/N) sum_t sum_i p_i(x_t),

by gradient steps followed by symmetric orthogonalization
W <- (W W^T)^{-1/2} W.  A step is kept only if it does not increase the
objective; otherwise the step size is halved for that iteration (up to 20
halvings, after which training stops).  This makes the objective trace
non-increasing by construction.

Two layers stack: a trained first layer is evaluated on a fixed grid of
sub-block placements inside a larger block, the pooled outputs are
concatenated in placement order (t-major, then y, then x), reduced by a
second whitening transform, and fed to the second layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import (
    BlockGeometry,
    Patch,
    contrast_normalize_rows,
    dense_origins,
    sample_random_blocks,
)
from .errors import DegenerateFilterError, GeometryError
from .video import VideoClip
from .whitening import WhiteningTransform, apply_whitening, fit_pca_whitening

DEFAULT_EPS = 1e-4

# Residual above which the orthogonalization result is re-projected; keeps
# max|W W^T - I| <= 1e-10 after every call even on ill-conditioned input.
_POLISH_RESIDUAL = 1e-11


@dataclass
class IsaLayer:
    """k orthonormal filters over n inputs, pooled in contiguous groups of g."""

    W: np.ndarray
    group_size: int
    eps: float

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        if self.W.ndim != 2:
            raise ValueError("W must be a (k, n) matrix")
        if self.group_size < 1 or self.W.shape[0] % self.group_size != 0:
            raise ValueError(
                f"filter count {self.W.shape[0]} not divisible by group size {self.group_size}"
            )
        # eps 0 keeps the pooled response exact for analytic inputs;
        # training requires eps > 0 for differentiability at 0.
        if self.eps < 0:
            raise ValueError("eps must be >= 0")

    @property
    def n_filters(self) -> int:
        return self.W.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def n_groups(self) -> int:
        return self.W.shape[0] // self.group_size


@dataclass(frozen=True)
class IsaTrainConfig:
    step_size: float = 0.25
    step_decay: float = 1.0
    max_iters: int = 1000
    rel_tol: float = 1e-6
    seed: int = 0
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not (0.0 < self.step_decay <= 1.0):
            raise ValueError("step_decay must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be >= 0")
        if self.eps <= 0:
            raise ValueError("training eps must be positive")


def activations(layer: IsaLayer, x: np.ndarray) -> np.ndarray:
    """Pooled responses p_i(x); accepts one vector (n,) or a batch (N, n)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.input_dim:
        raise ValueError(
            f"input dimension {x.shape[-1]} != layer input dimension {layer.input_dim}"
        )
    r = x @ layer.W.T
    sq = np.square(r).reshape(*r.shape[:-1], layer.n_groups, layer.group_size)
    return np.sqrt(sq.sum(axis=-1) + layer.eps)


def objective(layer: IsaLayer, X: np.ndarray) -> float:
    """Mean over samples of the total pooled response."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("objective needs a non-empty batch")
    return float(activations(layer, X).sum(axis=1).mean())


def gradient(layer: IsaLayer, X: np.ndarray) -> np.ndarray:
    """Analytic d objective / d W, shape (k, n).

    For filter j in group i:  (1/N) sum_t (w_j . x_t / p_i(x_t)) x_t.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("gradient needs a non-empty batch")
    if layer.eps <= 0:
        raise ValueError("gradient requires eps > 0")
    m, g = layer.n_groups, layer.group_size
    r = X @ layer.W.T                                    # (N, k)
    p = np.sqrt(np.square(r).reshape(-1, m, g).sum(axis=-1, keepdims=True) + layer.eps)
    scaled = (r.reshape(-1, m, g) / p).reshape(-1, layer.n_filters)
    return (scaled.T @ X) / X.shape[0]


def orthonormality_residual(W: np.ndarray) -> float:
    """max |W W^T - I|."""
    WWt = W @ W.T
    return float(np.abs(WWt - np.eye(W.shape[0])).max())


def project_orthonormal(W: np.ndarray) -> np.ndarray:
    """Symmetric orthogonalization (W W^T)^{-1/2} W.

    The result has orthonormal rows spanning the same row space as W.
    Raises DegenerateFilterError when W W^T is singular (duplicate or
    vanishing filters), since the inverse square root is then undefined.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.shape[0] > W.shape[1]:
        raise ValueError(f"need k <= n, got shape {W.shape}")
    R = W
    for _ in range(3):
        WWt = R @ R.T
        eigvals, U = np.linalg.eigh(WWt)
        if eigvals[0] <= 1e-12 * max(eigvals[-1], 1.0):
            raise DegenerateFilterError(
                f"filter matrix is rank deficient (smallest eigenvalue {eigvals[0]:.3e})"
            )
        R = (U / np.sqrt(eigvals)) @ U.T @ R
        if orthonormality_residual(R) <= _POLISH_RESIDUAL:
            break
    return R


def train_layer(
    X: np.ndarray, k: int, g: int, cfg: IsaTrainConfig
) -> tuple[IsaLayer, np.ndarray]:
    """Fit one layer on whitened vectors X (rows); returns (layer, objective trace).

    The trace holds the objective at initialization and after every
    accepted step, and is non-increasing.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a (N, n) matrix of whitened vectors")
    n_samples, n = X.shape
    if k % g != 0:
        raise ValueError(f"k={k} not divisible by g={g}")
    if k > n:
        raise ValueError(f"k={k} filters cannot be orthonormal in dimension n={n}")
    if n_samples < k:
        raise ValueError(f"need at least k={k} samples, got {n_samples}")

    rng = np.random.default_rng(cfg.seed)
    W = project_orthonormal(rng.standard_normal((k, n)))
    layer = IsaLayer(W, g, cfg.eps)
    obj = objective(layer, X)
    trace = [obj]

    for it in range(cfg.max_iters):
        grad = gradient(layer, X)
        eta = cfg.step_size * cfg.step_decay**it
        accepted = None
        for _ in range(21):  # first attempt plus up to 20 halvings
            try:
                W_new = project_orthonormal(layer.W - eta * grad)
            except DegenerateFilterError:
                eta *= 0.5
                continue
            obj_new = objective(IsaLayer(W_new, g, cfg.eps), X)
            if obj_new <= obj:
                accepted = (W_new, obj_new)
                break
            eta *= 0.5
        if accepted is None:
            break
        layer = IsaLayer(accepted[0], g, cfg.eps)
        obj_prev, obj = obj, accepted[1]
        trace.append(obj)
        if (obj_prev - obj) / obj_prev < cfg.rel_tol:
            break
    return layer, np.array(trace)


@dataclass(frozen=True)
class StackGeometry:
    """Block sizes for both layers plus the sub-block placement grid.

    ``layer1.stride_*`` are the placement strides of layer-1 blocks inside
    one layer-2 block; ``layer2.stride_*`` are the dense extraction
    strides over a clip.
    """

    layer1: BlockGeometry
    layer2: BlockGeometry

    def __post_init__(self):
        g1, g2 = self.layer1, self.layer2
        if g1.sx > g2.sx or g1.sy > g2.sy or g1.st > g2.st:
            raise ValueError("layer-1 block does not fit inside the layer-2 block")

    def placements(self) -> list[tuple[int, int, int]]:
        """Layer-1 sub-block origins inside one layer-2 block (t-major, y, x)."""
        return dense_origins(self.layer2.sx, self.layer2.sy, self.layer2.st, self.layer1)

    @property
    def n_placements(self) -> int:
        return len(self.placements())


@dataclass
class IsaNetwork:
    """Two trained layers, their whitening transforms, and the stacking geometry."""

    layer1: IsaLayer
    layer2: IsaLayer
    whiten1: WhiteningTransform
    whiten2: WhiteningTransform
    geometry: StackGeometry

    def __post_init__(self):
        g = self.geometry
        if self.whiten1.in_dim != g.layer1.size:
            raise ValueError(
                f"whiten1 expects {self.whiten1.in_dim} inputs, layer-1 blocks have {g.layer1.size}"
            )
        if self.layer1.input_dim != self.whiten1.out_dim:
            raise ValueError("layer1 input dimension != whiten1 output dimension")
        concat = g.n_placements * self.layer1.n_groups
        if self.whiten2.in_dim != concat:
            raise ValueError(
                f"whiten2 expects {self.whiten2.in_dim} inputs, "
                f"{g.n_placements} placements x {self.layer1.n_groups} pooled outputs give {concat}"
            )
        if self.layer2.input_dim != self.whiten2.out_dim:
            raise ValueError("layer2 input dimension != whiten2 output dimension")

    @property
    def feature_dim(self) -> int:
        return self.layer2.n_groups


def _layer1_batch(layer1: IsaLayer, whiten1: WhiteningTransform, raw: np.ndarray) -> np.ndarray:
    """Raw layer-1 block rows -> pooled layer-1 features (N, m1)."""
    normalized = contrast_normalize_rows(raw)
    return activations(layer1, apply_whitening(whiten1, normalized))


def _stack_inputs(
    geometry: StackGeometry,
    layer1: IsaLayer,
    whiten1: WhiteningTransform,
    raw2: np.ndarray,
) -> np.ndarray:
    """Raw layer-2 block rows -> concatenated layer-1 features (N, P*m1)."""
    g1, g2 = geometry.layer1, geometry.layer2
    n = raw2.shape[0]
    blocks = raw2.reshape(n, g2.st, g2.sy, g2.sx)
    subs = [
        blocks[:, t : t + g1.st, y : y + g1.sy, x : x + g1.sx].reshape(n, -1)
        for (x, y, t) in geometry.placements()
    ]
    stacked = np.stack(subs, axis=1)  # (N, P, layer1 size)
    feats = _layer1_batch(layer1, whiten1, stacked.reshape(n * len(subs), -1))
    return feats.reshape(n, -1)


def extract_layer1(net: IsaNetwork, patch: Patch) -> np.ndarray:
    """Pooled first-layer feature vector (length m1) for one layer-1 block."""
    if patch.values.size != net.geometry.layer1.size:
        raise GeometryError(
            f"patch has {patch.values.size} values, layer-1 blocks have {net.geometry.layer1.size}"
        )
    return _layer1_batch(net.layer1, net.whiten1, patch.values[None, :])[0]


def extract_stacked_batch(net: IsaNetwork, raw2: np.ndarray) -> np.ndarray:
    """Stacked two-layer features for rows of raw layer-2 blocks: (N, m2)."""
    raw2 = np.atleast_2d(np.asarray(raw2, dtype=np.float64))
    if raw2.shape[1] != net.geometry.layer2.size:
        raise GeometryError(
            f"patch has {raw2.shape[1]} values, layer-2 blocks have {net.geometry.layer2.size}"
        )
    concat = _stack_inputs(net.geometry, net.layer1, net.whiten1, raw2)
    return activations(net.layer2, apply_whitening(net.whiten2, concat))


def extract_stacked(net: IsaNetwork, patch: Patch) -> np.ndarray:
    """Stacked two-layer feature vector (length m2) for one layer-2 block."""
    return extract_stacked_batch(net, patch.values[None, :])[0]


@dataclass(frozen=True)
class LayerSpec:
    """Everything needed to fit one layer during pretraining."""

    whiten_dim: int
    whiten_eps: float
    n_filters: int
    group_size: int
    n_patches: int
    sample_seed: int
    train: IsaTrainConfig


def _sample_across_clips(
    clips: list[VideoClip], geom: BlockGeometry, n: int, seed: int
) -> np.ndarray:
    """Random blocks spread over clips, as one (n, block size) matrix."""
    if not clips:
        raise ValueError("no clips to sample from")
    rng = np.random.default_rng(seed)
    clip_seeds = rng.integers(0, 2**63, size=len(clips))
    base, extra = divmod(n, len(clips))
    rows = []
    for i, clip in enumerate(clips):
        count = base + (1 if i < extra else 0)
        if count == 0:
            continue
        for p in sample_random_blocks(clip, geom, count, int(clip_seeds[i])):
            rows.append(p.values)
    return np.stack(rows)


def pretrain_network(
    clips: list[VideoClip],
    geometry: StackGeometry,
    layer1: LayerSpec,
    layer2: LayerSpec,
) -> tuple[IsaNetwork, dict]:
    """Fit whitening and both layers from unlabeled clips.

    Labels are never consulted; grayscale and depth clips go through the
    identical path.  Returns the network plus a dict with the objective
    traces of both layers.
    """
    if not clips:
        raise ValueError("pretraining needs at least one clip")
    for clip in clips:
        if (
            clip.width < geometry.layer2.sx
            or clip.height < geometry.layer2.sy
            or clip.n_frames < geometry.layer2.st
        ):
            raise GeometryError(
                f"clip {clip.clip_id!r} too small for layer-2 blocks "
                f"{geometry.layer2.sx}x{geometry.layer2.sy}x{geometry.layer2.st}"
            )

    # First layer: random layer-1 blocks -> normalize -> whiten -> train.
    raw1 = _sample_across_clips(clips, geometry.layer1, layer1.n_patches, layer1.sample_seed)
    w1 = fit_pca_whitening(contrast_normalize_rows(raw1), layer1.whiten_dim, layer1.whiten_eps)
    z1 = apply_whitening(w1, contrast_normalize_rows(raw1))
    l1, trace1 = train_layer(z1, layer1.n_filters, layer1.group_size, layer1.train)

    # Second layer: random layer-2 blocks -> concatenated layer-1 features
    # on the placement grid -> whiten -> train.  Layer-1 weights stay fixed.
    raw2 = _sample_across_clips(clips, geometry.layer2, layer2.n_patches, layer2.sample_seed)
    concat = _stack_inputs(geometry, l1, w1, raw2)
    w2 = fit_pca_whitening(concat, layer2.whiten_dim, layer2.whiten_eps)
    z2 = apply_whitening(w2, concat)
    l2, trace2 = train_layer(z2, layer2.n_filters, layer2.group_size, layer2.train)

    net = IsaNetwork(layer1=l1, layer2=l2, whiten1=w1, whiten2=w2, geometry=geometry)
    return net, {"layer1_trace": trace1, "layer2_trace": trace2}
