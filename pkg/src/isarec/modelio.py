"""Textual model files and histogram CSV batches.

All three model formats are line oriented: a versioned magic line, then
named sections whose matrices are written row-major, one row per line,
space-separated decimal floats with 17 significant digits (enough to
round-trip IEEE doubles exactly).  Parsers reject unknown versions.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .blocks import BlockGeometry
from .errors import ModelFormatError
from .isa import IsaLayer, IsaNetwork, StackGeometry
from .svm import BinarySvm, SvmModel
from .video import MODALITIES
from .vocabulary import BowHistogram, Vocabulary
from .whitening import WhiteningTransform

NET_MAGIC = "ISAREC-NET v1"
VOCAB_MAGIC = "ISAREC-VOCAB v1"
SVM_MAGIC = "ISAREC-SVM v1"


def _fmt_row(row) -> str:
    return " ".join(f"{float(v):.17g}" for v in row)


def _parse_row(line: str, expected: int, path, lineno: int) -> np.ndarray:
    parts = line.split()
    if len(parts) != expected:
        raise ModelFormatError(
            f"{path}:{lineno}: expected {expected} values, got {len(parts)}"
        )
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise ModelFormatError(f"{path}:{lineno}: non-numeric value") from None


class _LineReader:
    def __init__(self, path):
        self.path = Path(path)
        if not self.path.is_file():
            raise ModelFormatError(f"model file not found: {self.path}")
        self.lines = self.path.read_text(encoding="utf-8").splitlines()
        self.pos = 0

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise ModelFormatError(f"{self.path}: unexpected end of file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def expect_magic(self, magic: str) -> None:
        line = self.next()
        if line != magic:
            raise ModelFormatError(
                f"{self.path}: unsupported format/version {line!r}, expected {magic!r}"
            )

    def header(self, section: str) -> dict:
        line = self.next()
        prefix = f"[{section}]"
        if not line.startswith(prefix):
            raise ModelFormatError(f"{self.path}:{self.pos}: expected {prefix} section")
        out = {}
        for tok in line[len(prefix):].split():
            if "=" not in tok:
                raise ModelFormatError(f"{self.path}:{self.pos}: bad token {tok!r}")
            key, val = tok.split("=", 1)
            out[key] = val
        return out

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        data = np.empty((rows, cols))
        for r in range(rows):
            data[r] = _parse_row(self.next(), cols, self.path, self.pos)
        return data


def _require(header: dict, keys, path) -> None:
    for k in keys:
        if k not in header:
            raise ModelFormatError(f"{path}: section missing key {k!r}")


def _triple(text: str, path) -> tuple[int, int, int]:
    parts = text.split("x")
    if len(parts) != 3:
        raise ModelFormatError(f"{path}: bad geometry triple {text!r}")
    return tuple(int(p) for p in parts)


# network --------------------------------------------------------------------

def _write_whitening(lines: list, name: str, t: WhiteningTransform) -> None:
    lines.append(f"[{name}] in={t.in_dim} out={t.out_dim} eps={t.eps:.17g}")
    lines.append(_fmt_row(t.mean))
    for row in t.basis:
        lines.append(_fmt_row(row))


def _write_layer(lines: list, name: str, layer: IsaLayer) -> None:
    lines.append(f"[{name}] k={layer.n_filters} g={layer.group_size} eps={layer.eps:.17g}")
    for row in layer.W:
        lines.append(_fmt_row(row))


def _read_whitening(reader: _LineReader, name: str) -> WhiteningTransform:
    h = reader.header(name)
    _require(h, ("in", "out", "eps"), reader.path)
    in_dim, out_dim, eps = int(h["in"]), int(h["out"]), float(h["eps"])
    mean = _parse_row(reader.next(), in_dim, reader.path, reader.pos)
    basis = reader.matrix(out_dim, in_dim)
    return WhiteningTransform(mean=mean, basis=basis, eps=eps)


def _read_layer(reader: _LineReader, name: str, input_dim: int) -> IsaLayer:
    h = reader.header(name)
    _require(h, ("k", "g", "eps"), reader.path)
    k, g, eps = int(h["k"]), int(h["g"]), float(h["eps"])
    return IsaLayer(reader.matrix(k, input_dim), g, eps)


def save_network(net: IsaNetwork, path) -> None:
    lines = [NET_MAGIC]
    _write_whitening(lines, "whiten1", net.whiten1)
    _write_layer(lines, "layer1", net.layer1)
    _write_whitening(lines, "whiten2", net.whiten2)
    _write_layer(lines, "layer2", net.layer2)
    g1, g2 = net.geometry.layer1, net.geometry.layer2
    lines.append(
        "[geometry] "
        f"l1={g1.sx}x{g1.sy}x{g1.st} l1_stride={g1.stride_x}x{g1.stride_y}x{g1.stride_t} "
        f"l2={g2.sx}x{g2.sy}x{g2.st} l2_stride={g2.stride_x}x{g2.stride_y}x{g2.stride_t}"
    )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_network(path) -> IsaNetwork:
    reader = _LineReader(path)
    reader.expect_magic(NET_MAGIC)
    whiten1 = _read_whitening(reader, "whiten1")
    layer1 = _read_layer(reader, "layer1", whiten1.out_dim)
    whiten2 = _read_whitening(reader, "whiten2")
    layer2 = _read_layer(reader, "layer2", whiten2.out_dim)
    h = reader.header("geometry")
    _require(h, ("l1", "l1_stride", "l2", "l2_stride"), reader.path)
    s1 = _triple(h["l1"], reader.path)
    t1 = _triple(h["l1_stride"], reader.path)
    s2 = _triple(h["l2"], reader.path)
    t2 = _triple(h["l2_stride"], reader.path)
    geometry = StackGeometry(
        layer1=BlockGeometry(s1[0], s1[1], s1[2], t1[0], t1[1], t1[2]),
        layer2=BlockGeometry(s2[0], s2[1], s2[2], t2[0], t2[1], t2[2]),
    )
    try:
        return IsaNetwork(
            layer1=layer1, layer2=layer2, whiten1=whiten1, whiten2=whiten2, geometry=geometry
        )
    except ValueError as exc:
        raise ModelFormatError(f"{path}: inconsistent model: {exc}") from None


# vocabulary -----------------------------------------------------------------

def save_vocabulary(vocab: Vocabulary, path) -> None:
    lines = [VOCAB_MAGIC, f"k={vocab.size} d={vocab.dim}"]
    for row in vocab.centroids:
        lines.append(_fmt_row(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vocabulary(path) -> Vocabulary:
    reader = _LineReader(path)
    reader.expect_magic(VOCAB_MAGIC)
    head = reader.next().split()
    if len(head) != 2 or not head[0].startswith("k=") or not head[1].startswith("d="):
        raise ModelFormatError(f"{path}: bad vocabulary header")
    k, d = int(head[0][2:]), int(head[1][2:])
    return Vocabulary(reader.matrix(k, d))


# svm ------------------------------------------------------------------------

def save_svm(model: SvmModel, path) -> None:
    for c in model.classes:
        if "," in c or "\n" in c:
            raise ModelFormatError(f"class label {c!r} may not contain commas or newlines")
    lines = [SVM_MAGIC, "classes=" + ",".join(model.classes)]
    lines.append(f"C={model.C:.17g} gamma={model.gamma:.17g}")
    index = {c: i for i, c in enumerate(model.classes)}
    for (a, b), m in sorted(model.machines.items()):
        lines.append(
            f"[pair] a={index[a]} b={index[b]} nsv={len(m.dual_coefs)} bias={m.bias:.17g}"
        )
        for coef, sv in zip(m.dual_coefs, m.support_vectors):
            lines.append(f"{coef:.17g} {_fmt_row(sv)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_svm(path, dim: int | None = None) -> SvmModel:
    reader = _LineReader(path)
    reader.expect_magic(SVM_MAGIC)
    classes_line = reader.next()
    if not classes_line.startswith("classes="):
        raise ModelFormatError(f"{path}: expected classes= line")
    classes = classes_line[len("classes="):].split(",")
    params = reader.next()
    toks = dict(t.split("=", 1) for t in params.split())
    _require(toks, ("C", "gamma"), reader.path)
    C, gamma = float(toks["C"]), float(toks["gamma"])
    machines = {}
    n_pairs = len(classes) * (len(classes) - 1) // 2
    for _ in range(n_pairs):
        h = reader.header("pair")
        _require(h, ("a", "b", "nsv", "bias"), reader.path)
        a, b = classes[int(h["a"])], classes[int(h["b"])]
        nsv, bias = int(h["nsv"]), float(h["bias"])
        coefs = np.empty(nsv)
        rows = []
        for r in range(nsv):
            parts = reader.next().split()
            if dim is not None and len(parts) != dim + 1:
                raise ModelFormatError(
                    f"{path}:{reader.pos}: expected {dim + 1} values, got {len(parts)}"
                )
            coefs[r] = float(parts[0])
            rows.append([float(p) for p in parts[1:]])
        svs = np.array(rows) if rows else np.zeros((0, dim or 0))
        machines[(a, b)] = BinarySvm(
            support_vectors=svs, dual_coefs=coefs, bias=bias, gamma=gamma, C=C
        )
    return SvmModel(classes=classes, machines=machines, C=C, gamma=gamma)


# histograms -----------------------------------------------------------------

def save_histograms(histograms: list, path) -> None:
    """CSV with header clip_id,modality,w0,...  Weights keep full precision."""
    if not histograms:
        raise ValueError("no histograms to save")
    k = len(histograms[0].weights)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["clip_id", "modality"] + [f"w{i}" for i in range(k)])
        for h in histograms:
            if len(h.weights) != k:
                raise ValueError("histograms have inconsistent lengths")
            writer.writerow([h.clip_id, h.modality] + [f"{w:.17g}" for w in h.weights])


def load_histograms(path) -> list:
    path = Path(path)
    if not path.is_file():
        raise ModelFormatError(f"histogram file not found: {path}")
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["clip_id", "modality"]:
            raise ModelFormatError(f"{path}: bad histogram header")
        k = len(header) - 2
        for lineno, row in enumerate(reader, start=2):
            if len(row) != k + 2:
                raise ModelFormatError(f"{path}:{lineno}: expected {k + 2} fields")
            clip_id, modality = row[0], row[1]
            if modality not in MODALITIES:
                raise ModelFormatError(f"{path}:{lineno}: unknown modality {modality!r}")
            weights = np.array([float(v) for v in row[2:]])
            out.append(BowHistogram(weights, clip_id, modality))
    return out
