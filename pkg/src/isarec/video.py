"""Clip and dataset loading: PGM frame sequences, CSV manifests, resizing.

Storage layout
--------------
A dataset is a directory tree with one CSV manifest and one directory of
PGM frames per clip and modality.  Frames are binary (P5) PGM files named
``frame_000001.pgm``, ``frame_000002.pgm``, ... with consecutive indices.
Grayscale frames use maxval 255 (one byte per sample), depth frames use
maxval 65535 (two bytes per sample, big endian).  Loaded samples are
divided by the maxval so every pixel lands in [0, 1].

The manifest is UTF-8 CSV with the exact header
``clip_id,gray_path,depth_path,label,subject``; paths are relative to the
dataset root and an empty ``depth_path`` means the clip has no depth
stream.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FrameSequenceError, ManifestError, PgmError

GRAY = "gray"
DEPTH = "depth"
MODALITIES = (GRAY, DEPTH)

MANIFEST_HEADER = ["clip_id", "gray_path", "depth_path", "label", "subject"]

_FRAME_RE = re.compile(r"^frame_(\d{6})\.pgm$")
_MAXVALS = {GRAY: 255, DEPTH: 65535}


@dataclass
class VideoClip:
    """Ordered frame sequence of one modality, pixels in [0, 1].

    frames has shape (n_frames, height, width), dtype float64.
    """

    clip_id: str
    modality: str
    frames: np.ndarray

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise ValueError("frames must be a non-empty (T, H, W) array")
        lo, hi = self.frames.min(), self.frames.max()
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"pixel values outside [0, 1]: min={lo}, max={hi}")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    gray_path: str
    depth_path: str | None
    label: str
    subject: str


@dataclass
class DatasetManifest:
    """Parsed dataset manifest; entry order follows the file."""

    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.clip_id in seen:
                raise ManifestError(f"duplicate clip_id {e.clip_id!r}")
            seen.add(e.clip_id)
            if not e.label:
                raise ManifestError(f"clip {e.clip_id!r} has an empty label")
            if not e.subject:
                raise ManifestError(f"clip {e.clip_id!r} has an empty subject")

    def subjects(self) -> list[str]:
        return sorted({e.subject for e in self.entries})

    def labels(self) -> list[str]:
        return sorted({e.label for e in self.entries})

    def by_id(self, clip_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.clip_id == clip_id:
                return e
        raise KeyError(clip_id)


def load_manifest(path) -> DatasetManifest:
    """Parse a manifest CSV; see the module docstring for the format."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty file, expected header") from None
        if header != MANIFEST_HEADER:
            raise ManifestError(
                f"{path}: bad header {header!r}, expected {','.join(MANIFEST_HEADER)}"
            )
        entries = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise ManifestError(
                    f"{path}:{lineno}: expected {len(MANIFEST_HEADER)} fields, got {len(row)}"
                )
            clip_id, gray_path, depth_path, label, subject = row
            entries.append(
                ManifestEntry(clip_id, gray_path, depth_path or None, label, subject)
            )
    return DatasetManifest(entries)


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            writer.writerow([e.clip_id, e.gray_path, e.depth_path or "", e.label, e.subject])


def _read_pgm(path: Path) -> tuple[np.ndarray, int]:
    """Read one binary PGM file; returns (uint array H x W, maxval)."""
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise PgmError(f"frame file not found: {path}") from None
    if data[:2] != b"P5":
        raise PgmError(f"{path}: not a binary PGM (missing P5 magic)")
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments running to end of line, then one whitespace byte.
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmError(f"{path}: truncated header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise PgmError(f"{path}: non-numeric header tokens {tokens!r}") from None
    if maxval == 255:
        dtype, nbytes = np.dtype(np.uint8), width * height
    elif maxval == 65535:
        dtype, nbytes = np.dtype(">u2"), 2 * width * height
    else:
        raise PgmError(f"{path}: unsupported maxval {maxval} (expected 255 or 65535)")
    raster = data[pos : pos + nbytes]
    if len(raster) != nbytes:
        raise PgmError(f"{path}: raster truncated ({len(raster)} of {nbytes} bytes)")
    return np.frombuffer(raster, dtype=dtype).reshape(height, width), maxval


def _write_pgm(path: Path, frame: np.ndarray, maxval: int) -> None:
    values = np.rint(np.asarray(frame, dtype=np.float64) * maxval)
    header = f"P5\n{frame.shape[1]} {frame.shape[0]}\n{maxval}\n".encode("ascii")
    if maxval == 255:
        raster = values.astype(np.uint8).tobytes()
    else:
        raster = values.astype(">u2").tobytes()
    path.write_bytes(header + raster)


def load_clip(directory, modality: str, clip_id: str | None = None) -> VideoClip:
    """Load the ``frame_NNNNNN.pgm`` sequence in a directory as one clip.

    Indices must start at 000001 and be consecutive.  Samples are scaled
    by their file's maxval so pixels land in [0, 1].
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FrameSequenceError(f"clip directory not found: {directory}")
    indexed = []
    for p in directory.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            indexed.append((int(m.group(1)), p))
    if not indexed:
        raise FrameSequenceError(f"{directory}: no frame_NNNNNN.pgm files")
    indexed.sort()
    indices = [i for i, _ in indexed]
    if indices != list(range(1, len(indices) + 1)):
        raise FrameSequenceError(
            f"{directory}: frame indices not consecutive from 000001: {indices[:8]}..."
        )
    frames = []
    shape = None
    for _, p in indexed:
        raw, maxval = _read_pgm(p)
        if shape is None:
            shape = raw.shape
        elif raw.shape != shape:
            raise FrameSequenceError(
                f"{p}: frame size {raw.shape} differs from first frame {shape}"
            )
        frames.append(raw.astype(np.float64) / maxval)
    return VideoClip(clip_id or directory.name, modality, np.stack(frames))


def save_clip(clip: VideoClip, directory) -> None:
    """Write a clip as a PGM sequence (maxval 255 for gray, 65535 for depth)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    maxval = _MAXVALS[clip.modality]
    for i in range(clip.n_frames):
        _write_pgm(directory / f"frame_{i + 1:06d}.pgm", clip.frames[i], maxval)


def _resize_frame(frame: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize with pixel-center alignment, clamped at the borders."""
    in_h, in_w = frame.shape
    xs = np.clip((np.arange(out_w) + 0.5) * in_w / out_w - 0.5, 0.0, in_w - 1.0)
    ys = np.clip((np.arange(out_h) + 0.5) * in_h / out_h - 0.5, 0.0, in_h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    fx = xs - x0
    fy = (ys - y0)[:, None]
    top = frame[y0][:, x0] * (1.0 - fx) + frame[y0][:, x1] * fx
    bottom = frame[y1][:, x0] * (1.0 - fx) + frame[y1][:, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def resize_clip(clip: VideoClip, out_w: int, out_h: int) -> VideoClip:
    """Resize each frame independently to out_w x out_h."""
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    frames = np.stack([_resize_frame(f, out_w, out_h) for f in clip.frames])
    # Bilinear weights are a convex combination, but guard against rounding.
    np.clip(frames, 0.0, 1.0, out=frames)
    return VideoClip(clip.clip_id, clip.modality, frames)
