"""Pipeline configuration: defaults, INI-style file format, overrides.

The file format is flat ``key = value`` lines under section headers that
match the pipeline stages, e.g.::

    [dataset]
    root = /data/office
    modality = gray

    [layer1]
    filters = 300

Every stochastic stage carries its own seed, and a config round-trips
through its file format losslessly (floats are written with repr
precision).
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .blocks import BlockGeometry
from .errors import ConfigError
from .isa import IsaTrainConfig, LayerSpec, StackGeometry
from .video import DEPTH, GRAY

FUSED = "fused"
RUN_MODALITIES = (GRAY, DEPTH, FUSED)


@dataclass
class DatasetSection:
    root: str = "."
    manifest: str = "manifest.csv"
    modality: str = GRAY
    frame_width: int = 80
    frame_height: int = 60


@dataclass
class LayerSection:
    """One feature layer.

    For layer 1 the strides are the sub-block placement strides inside a
    layer-2 block; for layer 2 they are the dense extraction strides over
    a clip.
    """

    block_x: int
    block_y: int
    block_t: int
    stride_x: int
    stride_y: int
    stride_t: int
    whiten_dim: int
    whiten_eps: float
    filters: int
    group_size: int
    eps: float
    step_size: float
    step_decay: float
    max_iters: int
    rel_tol: float
    patches: int
    sample_seed: int
    train_seed: int


def _default_layer1() -> LayerSection:
    return LayerSection(
        block_x=16, block_y=16, block_t=10,
        stride_x=4, stride_y=4, stride_t=4,
        whiten_dim=300, whiten_eps=0.1,
        filters=300, group_size=2, eps=1e-4,
        step_size=0.25, step_decay=1.0, max_iters=1000, rel_tol=1e-6,
        patches=50000, sample_seed=101, train_seed=102,
    )


def _default_layer2() -> LayerSection:
    return LayerSection(
        block_x=20, block_y=20, block_t=14,
        stride_x=10, stride_y=10, stride_t=7,
        whiten_dim=200, whiten_eps=0.1,
        filters=200, group_size=2, eps=1e-4,
        step_size=0.25, step_decay=1.0, max_iters=1000, rel_tol=1e-6,
        patches=20000, sample_seed=201, train_seed=202,
    )


@dataclass
class VocabularySection:
    size: int = 100
    seed: int = 301
    max_iter: int = 300
    tol: float = 1e-6
    max_descriptors: int = 200000


@dataclass
class SvmSection:
    grid_c: list = field(default_factory=lambda: [2.0**p for p in range(-5, 16, 2)])
    grid_gamma: list = field(default_factory=lambda: [2.0**p for p in range(-15, 4, 2)])
    folds: int = 5
    kkt_tol: float = 1e-3
    cv_seed: int = 401


@dataclass
class RunSection:
    out_dir: str = "out"
    threads: int = 1
    splits: str = ""        # comma-separated test subjects; empty = all
    pretrain_set: str = ""  # path to a file of clip_ids; empty = default rule


@dataclass
class PipelineConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    layer1: LayerSection = field(default_factory=_default_layer1)
    layer2: LayerSection = field(default_factory=_default_layer2)
    vocabulary: VocabularySection = field(default_factory=VocabularySection)
    svm: SvmSection = field(default_factory=SvmSection)
    run: RunSection = field(default_factory=RunSection)

    def validate(self) -> None:
        if self.dataset.modality not in RUN_MODALITIES:
            raise ConfigError(
                f"modality must be one of {', '.join(RUN_MODALITIES)}, "
                f"got {self.dataset.modality!r}"
            )
        if self.run.threads < 1:
            raise ConfigError("threads must be >= 1")

    # bridges to the core types -------------------------------------------

    def geometry(self) -> StackGeometry:
        l1, l2 = self.layer1, self.layer2
        return StackGeometry(
            layer1=BlockGeometry(l1.block_x, l1.block_y, l1.block_t,
                                 l1.stride_x, l1.stride_y, l1.stride_t),
            layer2=BlockGeometry(l2.block_x, l2.block_y, l2.block_t,
                                 l2.stride_x, l2.stride_y, l2.stride_t),
        )

    def layer_spec(self, section: LayerSection) -> LayerSpec:
        return LayerSpec(
            whiten_dim=section.whiten_dim,
            whiten_eps=section.whiten_eps,
            n_filters=section.filters,
            group_size=section.group_size,
            n_patches=section.patches,
            sample_seed=section.sample_seed,
            train=IsaTrainConfig(
                step_size=section.step_size,
                step_decay=section.step_decay,
                max_iters=section.max_iters,
                rel_tol=section.rel_tol,
                seed=section.train_seed,
                eps=section.eps,
            ),
        )

    def manifest_path(self) -> Path:
        p = Path(self.dataset.manifest)
        return p if p.is_absolute() else Path(self.dataset.root) / p

    def clip_modalities(self) -> list[str]:
        """Frame modalities the run touches (fused needs both)."""
        if self.dataset.modality == FUSED:
            return [GRAY, DEPTH]
        return [self.dataset.modality]

    # file format ----------------------------------------------------------

    def to_text(self) -> str:
        out = io.StringIO()
        for section_name, obj in self._sections():
            out.write(f"[{section_name}]\n")
            for f in fields(obj):
                out.write(f"{f.name} = {_format_value(getattr(obj, f.name))}\n")
            out.write("\n")
        return out.getvalue()

    def to_file(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        cfg = cls()
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"bad config: {exc}") from None
        sections = dict(cfg._sections())
        for section_name in parser.sections():
            if section_name not in sections:
                raise ConfigError(f"unknown config section [{section_name}]")
            obj = sections[section_name]
            known = {f.name: f for f in fields(obj)}
            for key, raw in parser.items(section_name):
                if key not in known:
                    raise ConfigError(f"unknown key {key!r} in section [{section_name}]")
                setattr(obj, key, _parse_value(raw, getattr(obj, key), section_name, key))
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_text(path.read_text(encoding="utf-8"))

    def with_overrides(self, pairs: list[str]) -> "PipelineConfig":
        """Apply ``section.key=value`` strings on top of this config."""
        cfg = replace(
            self,
            dataset=replace(self.dataset),
            layer1=replace(self.layer1),
            layer2=replace(self.layer2),
            vocabulary=replace(self.vocabulary),
            svm=replace(self.svm),
            run=replace(self.run),
        )
        sections = dict(cfg._sections())
        for pair in pairs:
            if "=" not in pair or "." not in pair.split("=", 1)[0]:
                raise ConfigError(f"override must look like section.key=value: {pair!r}")
            target, raw = pair.split("=", 1)
            section_name, key = target.strip().split(".", 1)
            if section_name not in sections:
                raise ConfigError(f"unknown config section {section_name!r}")
            obj = sections[section_name]
            if key not in {f.name for f in fields(obj)}:
                raise ConfigError(f"unknown key {key!r} in section [{section_name}]")
            setattr(obj, key, _parse_value(raw.strip(), getattr(obj, key), section_name, key))
        cfg.validate()
        return cfg

    def _sections(self):
        return [
            ("dataset", self.dataset),
            ("layer1", self.layer1),
            ("layer2", self.layer2),
            ("vocabulary", self.vocabulary),
            ("svm", self.svm),
            ("run", self.run),
        ]


def _format_value(value) -> str:
    if isinstance(value, list):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(raw: str, current, section: str, key: str):
    raw = raw.strip()
    try:
        if isinstance(current, list):
            return [float(tok) for tok in raw.split(",") if tok.strip()]
        if isinstance(current, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from None
