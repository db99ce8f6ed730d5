"""PCA whitening with dimensionality reduction.

Fits on a matrix of patch vectors: the basis rows are the leading
eigenvectors of the sample covariance (denominator T-1), each scaled by
1/sqrt(eigenvalue + eps).  Eigenvector signs are fixed so the
largest-magnitude entry of each row is positive, which makes the
transform deterministic for a given fitting set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class WhiteningTransform:
    mean: np.ndarray   # (in_dim,)
    basis: np.ndarray  # (out_dim, in_dim), rows already scaled by 1/sqrt(eig + eps)
    eps: float

    @property
    def in_dim(self) -> int:
        return self.basis.shape[1]

    @property
    def out_dim(self) -> int:
        return self.basis.shape[0]


def fit_pca_whitening(patches: np.ndarray, out_dim: int, eps: float) -> WhiteningTransform:
    """Fit the whitening transform on rows of ``patches``.

    Requires at least 2 patches and out_dim <= input dimension.
    """
    X = np.asarray(patches, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least 2 patch vectors to fit whitening")
    n = X.shape[1]
    if out_dim > n:
        raise ValueError(f"out_dim {out_dim} exceeds input dimension {n}")
    if out_dim < 1:
        raise ValueError("out_dim must be >= 1")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / (X.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending
    order = np.argsort(eigvals)[::-1][:out_dim]
    eigvals = eigvals[order]
    if eigvals.min() < -1e-10:
        raise ValueError(f"covariance produced negative eigenvalue {eigvals.min()}")
    eigvals = np.maximum(eigvals, 0.0)
    rows = eigvecs[:, order].T.copy()
    # Sign convention: largest-magnitude entry of each row positive
    # (argmax takes the first index on ties).
    for i in range(out_dim):
        j = np.argmax(np.abs(rows[i]))
        if rows[i, j] < 0:
            rows[i] = -rows[i]
    basis = rows / np.sqrt(eigvals + eps)[:, None]
    return WhiteningTransform(mean=mean, basis=basis, eps=float(eps))


def apply_whitening(transform: WhiteningTransform, x: np.ndarray) -> np.ndarray:
    """basis @ (x - mean); accepts a single vector or rows of vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != transform.in_dim:
        raise ValueError(
            f"input dimension {x.shape[-1]} != transform in_dim {transform.in_dim}"
        )
    return (x - transform.mean) @ transform.basis.T
