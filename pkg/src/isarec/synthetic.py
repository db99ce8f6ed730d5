"""Synthetic moving-bar video data for demos and self-contained tests.

Clips contain a soft-edged vertical bar translating horizontally with
wrap-around.  The translation direction plays the role of the activity
("left" vs "right"), while per-subject bar width, contrast, and speed act
as nuisance variation, so a leave-one-person-out run has something real
to generalize across.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .video import (
    DEPTH,
    GRAY,
    DatasetManifest,
    ManifestEntry,
    VideoClip,
    save_clip,
    save_manifest,
)

ACTIVITY_LEFT = "left"
ACTIVITY_RIGHT = "right"


def _bar_profile(columns: np.ndarray, center: float, half_width: float, width: int) -> np.ndarray:
    """Triangular bar profile with circular wrap-around, peak 1 at the center."""
    d = np.abs(columns - center)
    d = np.minimum(d, width - d)
    return np.clip(1.0 - d / half_width, 0.0, 1.0)


def moving_bar_clip(
    clip_id: str,
    modality: str,
    width: int,
    height: int,
    n_frames: int,
    direction: int,
    speed: float,
    bar_half_width: float,
    contrast: float,
    background: float,
    noise: float,
    seed: int,
) -> VideoClip:
    """One clip of a bar drifting horizontally; direction +1 right, -1 left."""
    rng = np.random.default_rng(seed)
    columns = np.arange(width, dtype=np.float64)
    start = rng.uniform(0.0, width)
    frames = np.empty((n_frames, height, width))
    for t in range(n_frames):
        center = (start + direction * speed * t) % width
        profile = _bar_profile(columns, center, bar_half_width, width)
        frame = background + contrast * profile[None, :]
        frame = frame + rng.normal(0.0, noise, size=(height, width))
        frames[t] = np.clip(frame, 0.0, 1.0)
    return VideoClip(clip_id, modality, frames)


def build_synthetic_dataset(
    root,
    n_subjects: int = 4,
    clips_per_subject: int = 10,
    width: int = 80,
    height: int = 60,
    n_frames: int = 30,
    with_depth: bool = True,
    seed: int = 7,
) -> Path:
    """Write a bar-translation dataset (PGM frames + manifest); returns manifest path.

    Activities alternate between leftward and rightward translation within
    each subject; subjects differ in bar geometry, contrast, and speed.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for s in range(n_subjects):
        subject = f"subject{s + 1:02d}"
        bar_half_width = rng.uniform(2.0, 4.0)
        contrast = rng.uniform(0.45, 0.65)
        background = rng.uniform(0.15, 0.3)
        base_speed = rng.uniform(1.2, 2.2)
        for c in range(clips_per_subject):
            label = ACTIVITY_RIGHT if c % 2 == 0 else ACTIVITY_LEFT
            direction = 1 if label == ACTIVITY_RIGHT else -1
            clip_id = f"{subject}_clip{c + 1:03d}"
            speed = base_speed * rng.uniform(0.9, 1.1)
            gray_dir = Path("clips") / clip_id / "gray"
            gray = moving_bar_clip(
                clip_id, GRAY, width, height, n_frames, direction, speed,
                bar_half_width, contrast, background, noise=0.02,
                seed=int(rng.integers(2**31)),
            )
            save_clip(gray, root / gray_dir)
            depth_dir = None
            if with_depth:
                depth_dir = Path("clips") / clip_id / "depth"
                # Same motion, inverted contrast: the bar sits nearer
                # (smaller depth value) than the background.
                depth = moving_bar_clip(
                    clip_id, DEPTH, width, height, n_frames, direction, speed,
                    bar_half_width * 1.2, contrast=-0.4, background=0.75,
                    noise=0.01, seed=int(rng.integers(2**31)),
                )
                save_clip(depth, root / depth_dir)
            entries.append(
                ManifestEntry(
                    clip_id,
                    str(gray_dir),
                    str(depth_dir) if depth_dir else None,
                    label,
                    subject,
                )
            )
    manifest = DatasetManifest(entries)
    manifest_path = root / "manifest.csv"
    save_manifest(manifest, manifest_path)
    return manifest_path


def _bar_patch(
    sx: int, sy: int, st: int, theta: float, speed: float, offset: float,
    half_width: float, x_shift: float = 0.0,
) -> np.ndarray:
    """Flattened patch of an oriented bar translating across frames.

    ``x_shift`` displaces the whole pattern along x, which is how the
    1-pixel-shift pairs for the translation-tolerance check are made.
    """
    ys, xs = np.mgrid[0:sy, 0:sx]
    coord = (xs - x_shift) * np.cos(theta) + ys * np.sin(theta)
    frames = np.empty((st, sy, sx))
    for t in range(st):
        d = np.abs(coord - (offset + speed * t))
        frames[t] = np.clip(1.0 - d / half_width, 0.0, 1.0)
    return frames.reshape(-1)


def translating_bar_patches(
    n: int, sx: int, sy: int, st: int, seed: int, paired_shift: float | None = None
):
    """Random oriented translating-bar patches as rows of a matrix.

    With ``paired_shift`` set, also returns a second matrix whose rows
    show the identical pattern displaced by that many pixels along x.
    """
    rng = np.random.default_rng(seed)
    diag = float(np.hypot(sx, sy))
    rows = np.empty((n, sx * sy * st))
    shifted = np.empty_like(rows) if paired_shift is not None else None
    for i in range(n):
        theta = rng.uniform(0.0, np.pi)
        speed = rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0])
        # keep the bar inside the patch for the whole duration
        offset = rng.uniform(0.25 * diag, 0.75 * diag) - 0.5 * speed * (st - 1)
        half_width = rng.uniform(1.5, 3.0)
        rows[i] = _bar_patch(sx, sy, st, theta, speed, offset, half_width)
        if shifted is not None:
            shifted[i] = _bar_patch(
                sx, sy, st, theta, speed, offset, half_width, x_shift=paired_shift
            )
    if shifted is not None:
        return rows, shifted
    return rows
