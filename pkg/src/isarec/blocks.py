"""Spatiotemporal block extraction and per-patch contrast normalization.

Blocks of shape (st frames, sy rows, sx columns) are cut out of a clip and
flattened frame by frame: output index ``i*(sx*sy) + r*sx + c`` holds
frame i, row r, column c.  Training samples blocks at uniformly random
origins; inference enumerates a dense stride grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .video import VideoClip

CONTRAST_EPS = 1e-8


@dataclass(frozen=True)
class BlockGeometry:
    """Block size (sx, sy, st) and extraction strides, all in samples."""

    sx: int
    sy: int
    st: int
    stride_x: int
    stride_y: int
    stride_t: int

    def __post_init__(self):
        for name in ("sx", "sy", "st", "stride_x", "stride_y", "stride_t"):
            if getattr(self, name) < 1:
                raise ValueError(f"BlockGeometry.{name} must be >= 1")

    @property
    def size(self) -> int:
        return self.sx * self.sy * self.st


@dataclass
class Patch:
    """One flattened block plus where it came from."""

    values: np.ndarray
    origin: tuple[int, int, int]  # (x, y, t)
    source_clip: str


def flatten_block(block: np.ndarray) -> np.ndarray:
    """Flatten a (st, sy, sx) block frame-major, then row-major."""
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 3:
        raise ValueError("block must be a (st, sy, sx) array")
    return block.reshape(-1)


def unflatten_block(values: np.ndarray, geom: BlockGeometry) -> np.ndarray:
    """Inverse of flatten_block for the given geometry."""
    values = np.asarray(values, dtype=np.float64)
    if values.size != geom.size:
        raise ValueError(f"expected {geom.size} values, got {values.size}")
    return values.reshape(geom.st, geom.sy, geom.sx)


def _check_fits(clip: VideoClip, geom: BlockGeometry) -> None:
    if clip.width < geom.sx or clip.height < geom.sy or clip.n_frames < geom.st:
        raise GeometryError(
            f"clip {clip.clip_id!r} ({clip.width}x{clip.height}x{clip.n_frames}) "
            f"too small for {geom.sx}x{geom.sy}x{geom.st} blocks"
        )


def sample_random_blocks(
    clip: VideoClip, geom: BlockGeometry, n: int, seed: int
) -> list[Patch]:
    """Sample n blocks at origins drawn uniformly from all valid origins.

    Deterministic for a fixed seed: the same call yields identical patches.
    """
    _check_fits(clip, geom)
    rng = np.random.default_rng(seed)
    xs = rng.integers(0, clip.width - geom.sx + 1, size=n)
    ys = rng.integers(0, clip.height - geom.sy + 1, size=n)
    ts = rng.integers(0, clip.n_frames - geom.st + 1, size=n)
    patches = []
    for x, y, t in zip(xs, ys, ts):
        x, y, t = int(x), int(y), int(t)
        block = clip.frames[t : t + geom.st, y : y + geom.sy, x : x + geom.sx]
        patches.append(Patch(block.reshape(-1).copy(), (x, y, t), clip.clip_id))
    return patches


def dense_origins(
    width: int, height: int, n_frames: int, geom: BlockGeometry
) -> list[tuple[int, int, int]]:
    """All in-bounds origins on the stride grid, ordered t-major, then y, then x."""
    return [
        (x, y, t)
        for t in range(0, n_frames - geom.st + 1, geom.stride_t)
        for y in range(0, height - geom.sy + 1, geom.stride_y)
        for x in range(0, width - geom.sx + 1, geom.stride_x)
    ]


def dense_blocks(clip: VideoClip, geom: BlockGeometry) -> list[Patch]:
    """Extract every block on the stride grid that lies fully inside the clip."""
    _check_fits(clip, geom)
    patches = []
    for x, y, t in dense_origins(clip.width, clip.height, clip.n_frames, geom):
        block = clip.frames[t : t + geom.st, y : y + geom.sy, x : x + geom.sx]
        patches.append(Patch(block.reshape(-1).copy(), (x, y, t), clip.clip_id))
    return patches


def contrast_normalize_rows(values: np.ndarray) -> np.ndarray:
    """Per-row (v - mean) / sqrt(var + eps); constant rows map to zero-ish."""
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean(axis=-1, keepdims=True)
    var = values.var(axis=-1, keepdims=True)
    return (values - mean) / np.sqrt(var + CONTRAST_EPS)


def contrast_normalize(patch: Patch) -> Patch:
    return Patch(contrast_normalize_rows(patch.values), patch.origin, patch.source_clip)


def stack_patches(patches) -> np.ndarray:
    """Stack patch value vectors into one (n_patches, block_size) matrix."""
    if not patches:
        raise ValueError("no patches to stack")
    return np.stack([p.values for p in patches])
