"""Visual vocabulary via k-means and bag-of-words clip encoding.

Centroids are fit with classic k-means++ seeding followed by Lloyd
iterations.  Assignment is hard nearest-centroid with ties broken toward
the lowest index.  Empty clusters are re-seeded with the point farthest
from its assigned centroid, which keeps the within-cluster sum of squares
non-increasing; this monotonicity is asserted on every fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import dense_blocks, stack_patches
from .errors import EmptyClipError, GeometryError
from .isa import IsaNetwork, extract_stacked_batch
from .video import VideoClip

_ASSIGN_CHUNK = 4096


@dataclass
class Vocabulary:
    centroids: np.ndarray  # (k_v, d)

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 1:
            raise ValueError("centroids must be a non-empty (k_v, d) matrix")
        if len(np.unique(self.centroids, axis=0)) != self.centroids.shape[0]:
            raise ValueError("duplicate centroids")

    @property
    def size(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass
class BowHistogram:
    weights: np.ndarray
    clip_id: str
    modality: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if np.any(self.weights < 0):
            raise ValueError("histogram weights must be non-negative")
        total = self.weights.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"histogram weights sum to {total}, expected 1")


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (n_points, n_centers), clipped at 0."""
    d2 = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers**2, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _assign_rows(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest-centroid index per row; argmin takes the lowest index on ties."""
    out = np.empty(features.shape[0], dtype=np.intp)
    for start in range(0, features.shape[0], _ASSIGN_CHUNK):
        chunk = features[start : start + _ASSIGN_CHUNK]
        d2 = np.sum((chunk[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        out[start : start + _ASSIGN_CHUNK] = np.argmin(d2, axis=1)
    return out


def kmeans_fit(
    features: np.ndarray,
    k_v: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-6,
    wcss_trace: list | None = None,
) -> Vocabulary:
    """Fit k_v centroids on feature rows; deterministic for a fixed seed.

    Pass a list as ``wcss_trace`` to collect the within-cluster sum of
    squares measured at each Lloyd iteration.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a (N, d) matrix")
    n = X.shape[0]
    if n < k_v:
        raise ValueError(f"need at least k_v={k_v} features, got {n}")

    rng = np.random.default_rng(seed)

    # k-means++ seeding: next center drawn proportionally to squared
    # distance from the nearest already-chosen center.
    centers = np.empty((k_v, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = _sq_dists(X, centers[:1]).ravel()
    for i in range(1, k_v):
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers[i] = X[idx]
        d2 = np.minimum(d2, _sq_dists(X, centers[i : i + 1]).ravel())

    prev_wcss = np.inf
    for _ in range(max_iter):
        d2 = _sq_dists(X, centers)
        labels = np.argmin(d2, axis=1)
        wcss = float(d2[np.arange(n), labels].sum())
        # Non-increasing up to float rounding of the recomputed sums.
        assert wcss <= prev_wcss * (1.0 + 1e-12) + 1e-12, (
            "within-cluster sum of squares increased"
        )
        prev_wcss = wcss
        if wcss_trace is not None:
            wcss_trace.append(wcss)

        new_centers = centers.copy()
        for j in range(k_v):
            members = labels == j
            if members.any():
                new_centers[j] = X[members].mean(axis=0)
        # Re-seed empty clusters with the point farthest from its centroid.
        point_d2 = d2[np.arange(n), labels]
        for j in range(k_v):
            if not (labels == j).any():
                far = int(np.argmax(point_d2))
                new_centers[j] = X[far]
                point_d2[far] = 0.0
        movement = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if movement < tol:
            break
    return Vocabulary(centers)


def assign(vocab: Vocabulary, feature: np.ndarray) -> int:
    """Index of the nearest centroid (Euclidean); ties go to the lowest index."""
    feature = np.asarray(feature, dtype=np.float64)
    if feature.shape != (vocab.dim,):
        raise ValueError(f"feature has shape {feature.shape}, expected ({vocab.dim},)")
    return int(_assign_rows(feature[None, :], vocab.centroids)[0])


def assign_many(vocab: Vocabulary, features: np.ndarray) -> np.ndarray:
    """Nearest-centroid index for each feature row; same tie rule as assign."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != vocab.dim:
        raise ValueError(
            f"features have dimension {features.shape[1]}, expected {vocab.dim}"
        )
    return _assign_rows(features, vocab.centroids)


def clip_descriptors(net: IsaNetwork, clip: VideoClip) -> np.ndarray:
    """Stacked two-layer features of all dense layer-2 blocks: (D, m2)."""
    try:
        patches = dense_blocks(clip, net.geometry.layer2)
    except GeometryError as exc:
        raise EmptyClipError(str(exc)) from None
    return extract_stacked_batch(net, stack_patches(patches))


def histogram_from_words(words: np.ndarray, k_v: int, clip_id: str, modality: str) -> BowHistogram:
    counts = np.bincount(words, minlength=k_v).astype(np.float64)
    return BowHistogram(counts / counts.sum(), clip_id, modality)


def encode_clip(net: IsaNetwork, vocab: Vocabulary, clip: VideoClip) -> BowHistogram:
    """L1-normalized word histogram over the clip's dense block descriptors."""
    feats = clip_descriptors(net, clip)
    words = _assign_rows(feats, vocab.centroids)
    return histogram_from_words(words, vocab.size, clip.clip_id, clip.modality)
