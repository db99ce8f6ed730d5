"""Leave-one-person-out evaluation and report rendering.

For every distinct subject, all of that subject's clips form the test
fold and everything else is the training fold.  Each split re-runs the
whole fitting pipeline (pretraining, vocabulary, grid search, final SVM)
on its training fold only; every clip read goes through a stage-tagged
store so tests can audit that no fitting stage ever touched a test-fold
clip.

Reports follow the layout of the published office-activity (OA2)
results: computed numbers are printed next to the published reference
columns, which are for comparison only and never used as pass/fail.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import FUSED, PipelineConfig
from .errors import ConfigError, ManifestError
from .isa import pretrain_network
from .svm import GridSearchResult, grid_search, predict, train_multiclass
from .video import DEPTH, GRAY, DatasetManifest, VideoClip, load_clip, resize_clip
from .vocabulary import (
    BowHistogram,
    assign_many,
    clip_descriptors,
    histogram_from_words,
    kmeans_fit,
)

# Published OA2 reference accuracies (percent), printed beside computed values.
REFERENCE_OVERALL = {GRAY: 60.0, DEPTH: 50.8, FUSED: 61.3}
REFERENCE_PER_ACTIVITY = {
    "Ask": 44.7,
    "Call": 60.5,
    "Carry": 73.7,
    "Chat": 36.8,
    "Deliver": 50.0,
    "Eat&Chat": 86.8,
    "HaveGuest": 86.8,
    "SeekHelp": 68.4,
    "ShakeHands": 60.5,
    "Show": 44.7,
}
MODALITY_DISPLAY = {GRAY: "Grayscale", DEPTH: "Depth", FUSED: "Grayscale & Depth"}


@dataclass
class Split:
    test_subject: str
    train_clips: list[str]
    test_clips: list[str]


def lopo_splits(manifest: DatasetManifest) -> list[Split]:
    """One split per distinct subject, ordered lexicographically by subject."""
    subjects = manifest.subjects()
    if len(subjects) < 2:
        raise ManifestError(
            f"leave-one-person-out needs >= 2 subjects, found {len(subjects)}"
        )
    splits = []
    for subject in subjects:
        test = [e.clip_id for e in manifest.entries if e.subject == subject]
        train = [e.clip_id for e in manifest.entries if e.subject != subject]
        splits.append(Split(subject, train, test))
    return splits


def fuse_histograms(h_gray: BowHistogram, h_depth: BowHistogram) -> np.ndarray:
    """Concatenate (gray first) and halve, keeping the result L1-normalized."""
    if h_gray.clip_id != h_depth.clip_id:
        raise ValueError(
            f"clip_id mismatch: {h_gray.clip_id!r} vs {h_depth.clip_id!r}"
        )
    return np.concatenate([h_gray.weights, h_depth.weights]) / 2.0


class ClipStore:
    """Loads, resizes, and caches clips; records every access with its stage.

    The stage tag is what the leakage audit keys on: any access whose
    stage starts with ``fit`` must never name a test-fold clip.
    """

    def __init__(self, root, manifest: DatasetManifest, frame_w: int, frame_h: int):
        self.root = Path(root)
        self.frame_w = frame_w
        self.frame_h = frame_h
        self._entries = {e.clip_id: e for e in manifest.entries}
        self._cache = {}
        self._stage = "init"
        self._lock = threading.Lock()
        self.access_log: list[tuple[str, str, str]] = []

    @contextmanager
    def stage(self, name: str):
        previous = self._stage
        self._stage = name
        try:
            yield
        finally:
            self._stage = previous

    def get(self, clip_id: str, modality: str) -> VideoClip:
        with self._lock:
            self.access_log.append((self._stage, clip_id, modality))
        key = (clip_id, modality)
        if key not in self._cache:
            entry = self._entries[clip_id]
            if modality == GRAY:
                rel = entry.gray_path
            else:
                if entry.depth_path is None:
                    raise ManifestError(f"clip {clip_id!r} has no depth stream")
                rel = entry.depth_path
            clip = load_clip(self.root / rel, modality, clip_id)
            if (clip.width, clip.height) != (self.frame_w, self.frame_h):
                clip = resize_clip(clip, self.frame_w, self.frame_h)
            self._cache[key] = clip
        return self._cache[key]

    def fit_reads(self) -> set:
        return {cid for stage, cid, _ in self.access_log if stage.startswith("fit")}


@dataclass
class SplitResult:
    test_subject: str
    confusion: np.ndarray  # global class order, rows truth / columns prediction
    best_C: float
    best_gamma: float
    cv_accuracy: float
    access_log: list = field(default_factory=list, repr=False)

    @property
    def n_test(self) -> int:
        return int(self.confusion.sum())

    @property
    def n_correct(self) -> int:
        return int(np.trace(self.confusion))

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_test


@dataclass
class EvaluationReport:
    modality: str
    classes: list[str]
    splits: list[SplitResult]

    @property
    def confusion(self) -> np.ndarray:
        return sum(s.confusion for s in self.splits)

    @property
    def overall_accuracy(self) -> float:
        c = self.confusion
        return float(np.trace(c) / c.sum())

    def per_class_accuracy(self) -> dict:
        """Mean over splits where the class appears in the test fold; None if never."""
        out = {}
        for i, label in enumerate(self.classes):
            values = []
            for s in self.splits:
                row = s.confusion[i]
                if row.sum() > 0:
                    values.append(row[i] / row.sum())
            out[label] = float(np.mean(values)) if values else None
        return out

    def fit_reads(self) -> set:
        return {
            cid
            for s in self.splits
            for stage, cid, _ in s.access_log
            if stage.startswith("fit")
        }


def _read_pretrain_set(config: PipelineConfig, manifest: DatasetManifest) -> set | None:
    if not config.run.pretrain_set:
        return None
    path = Path(config.run.pretrain_set)
    if not path.is_file():
        raise ConfigError(f"pretrain-set file not found: {path}")
    ids = {line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()}
    known = {e.clip_id for e in manifest.entries}
    unknown = ids - known
    if unknown:
        raise ConfigError(f"pretrain-set names unknown clip_ids: {sorted(unknown)[:5]}")
    return ids


def _modality_histograms(
    config: PipelineConfig,
    store: ClipStore,
    modality: str,
    pretrain_ids: list[str],
    train_ids: list[str],
    test_ids: list[str],
):
    """Pretrain, fit vocabulary, and encode one modality for one split."""
    geometry = config.geometry()
    with store.stage(f"fit:pretrain:{modality}"):
        clips = [store.get(cid, modality) for cid in pretrain_ids]
        net, _ = pretrain_network(
            clips,
            geometry,
            config.layer_spec(config.layer1),
            config.layer_spec(config.layer2),
        )

    with store.stage(f"fit:descriptors:{modality}"):
        train_desc = {cid: clip_descriptors(net, store.get(cid, modality)) for cid in train_ids}

    pool = np.concatenate([train_desc[cid] for cid in train_ids])
    limit = config.vocabulary.max_descriptors
    if pool.shape[0] > limit:
        rng = np.random.default_rng(config.vocabulary.seed)
        pool = pool[rng.choice(pool.shape[0], size=limit, replace=False)]
    vocab = kmeans_fit(
        pool,
        config.vocabulary.size,
        seed=config.vocabulary.seed,
        max_iter=config.vocabulary.max_iter,
        tol=config.vocabulary.tol,
    )

    def encode(cid, desc):
        words = assign_many(vocab, desc)
        return histogram_from_words(words, vocab.size, cid, modality)

    train_hist = {cid: encode(cid, train_desc[cid]) for cid in train_ids}
    with store.stage(f"encode:test:{modality}"):
        test_hist = {
            cid: encode(cid, clip_descriptors(net, store.get(cid, modality)))
            for cid in test_ids
        }
    return train_hist, test_hist


def _feature_vectors(config, train_hist, test_hist, train_ids, test_ids):
    if config.dataset.modality == FUSED:
        train_X = np.stack(
            [fuse_histograms(train_hist[GRAY][c], train_hist[DEPTH][c]) for c in train_ids]
        )
        test_X = np.stack(
            [fuse_histograms(test_hist[GRAY][c], test_hist[DEPTH][c]) for c in test_ids]
        )
    else:
        m = config.dataset.modality
        train_X = np.stack([train_hist[m][c].weights for c in train_ids])
        test_X = np.stack([test_hist[m][c].weights for c in test_ids])
    return train_X, test_X


def _evaluate_split(
    manifest: DatasetManifest,
    config: PipelineConfig,
    split: Split,
    classes: list[str],
    pretrain_override: set | None,
) -> SplitResult:
    store = ClipStore(
        config.dataset.root, manifest, config.dataset.frame_width, config.dataset.frame_height
    )
    label_of = {e.clip_id: e.label for e in manifest.entries}
    train_ids, test_ids = split.train_clips, split.test_clips
    if pretrain_override is None:
        pretrain_ids = list(train_ids)
    else:
        # Never allow the override to reach into the test fold.
        pretrain_ids = [cid for cid in train_ids if cid in pretrain_override]
        if not pretrain_ids:
            raise ConfigError(
                f"pretrain-set leaves no clips for split {split.test_subject!r}"
            )

    train_hist, test_hist = {}, {}
    for modality in config.clip_modalities():
        train_hist[modality], test_hist[modality] = _modality_histograms(
            config, store, modality, pretrain_ids, train_ids, test_ids
        )

    train_X, test_X = _feature_vectors(config, train_hist, test_hist, train_ids, test_ids)
    train_labels = [label_of[c] for c in train_ids]

    gs: GridSearchResult = grid_search(
        train_X,
        train_labels,
        config.svm.grid_c,
        config.svm.grid_gamma,
        folds=config.svm.folds,
        seed=config.svm.cv_seed,
        kkt_tol=config.svm.kkt_tol,
    )
    model = train_multiclass(train_X, train_labels, gs.best_C, gs.best_gamma, config.svm.kkt_tol)

    class_index = {c: i for i, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for cid, x in zip(test_ids, test_X):
        pred = predict(model, x)
        confusion[class_index[label_of[cid]], class_index[pred]] += 1

    leaked = store.fit_reads() & set(test_ids)
    if leaked:
        raise RuntimeError(
            f"leakage: fitting stage read test-fold clips {sorted(leaked)[:5]}"
        )
    return SplitResult(
        test_subject=split.test_subject,
        confusion=confusion,
        best_C=gs.best_C,
        best_gamma=gs.best_gamma,
        cv_accuracy=gs.cv_accuracy,
        access_log=list(store.access_log),
    )


def run_evaluation(manifest: DatasetManifest, config: PipelineConfig) -> EvaluationReport:
    """Run the full leave-one-person-out protocol; deterministic given seeds."""
    config.validate()
    splits = lopo_splits(manifest)
    if config.run.splits:
        wanted = [s.strip() for s in config.run.splits.split(",") if s.strip()]
        known = {s.test_subject for s in splits}
        missing = [w for w in wanted if w not in known]
        if missing:
            raise ConfigError(f"unknown subjects in --splits: {missing}")
        splits = [s for s in splits if s.test_subject in wanted]
    classes = manifest.labels()
    pretrain_override = _read_pretrain_set(config, manifest)

    if config.run.threads > 1:
        with ThreadPoolExecutor(max_workers=config.run.threads) as pool:
            results = list(
                pool.map(
                    lambda s: _evaluate_split(manifest, config, s, classes, pretrain_override),
                    splits,
                )
            )
    else:
        results = [
            _evaluate_split(manifest, config, s, classes, pretrain_override) for s in splits
        ]
    return EvaluationReport(modality=config.dataset.modality, classes=classes, splits=results)


# report rendering -------------------------------------------------------------

def _pct(value) -> str:
    return "n/a" if value is None else f"{100.0 * value:.1f}%"


def render_reports(report: EvaluationReport, out_dir) -> list[Path]:
    """Write accuracy.txt, confusion.csv, and per_split.csv into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = []
    lines.append("Activity recognition evaluation (leave-one-person-out)")
    lines.append("=======================================================")
    total = int(report.confusion.sum())
    lines.append(
        f"Modality: {MODALITY_DISPLAY[report.modality]}   "
        f"Test clips: {total}   Splits: {len(report.splits)}   "
        f"Classes: {len(report.classes)}"
    )
    lines.append("")
    lines.append("Overall accuracy by modality")
    lines.append("----------------------------")
    lines.append(f"{'modality':<20}{'computed':>10}{'reference':>11}")
    for m in (GRAY, DEPTH, FUSED):
        computed = report.overall_accuracy if m == report.modality else None
        ref = REFERENCE_OVERALL[m] / 100.0
        lines.append(f"{MODALITY_DISPLAY[m]:<20}{_pct(computed):>10}{_pct(ref):>11}")
    lines.append("")
    lines.append("Per-activity accuracy")
    lines.append("---------------------")
    width = max(10, max((len(c) for c in report.classes), default=0) + 2)
    lines.append(f"{'activity':<{width}}{'computed':>10}{'reference':>11}")
    per_class = report.per_class_accuracy()
    for label in report.classes:
        ref = REFERENCE_PER_ACTIVITY.get(label)
        lines.append(
            f"{label:<{width}}{_pct(per_class[label]):>10}"
            f"{_pct(ref / 100.0 if ref is not None else None):>11}"
        )
    lines.append("")
    lines.append(
        "Reference columns are previously published OA2 results, shown for"
    )
    lines.append(
        "comparison only; they are never used as pass/fail. Per-activity"
    )
    lines.append(
        "accuracy is the mean over splits whose test fold contains the"
    )
    lines.append(
        "activity; 'n/a' marks activities absent from every test fold."
    )
    accuracy_path = out_dir / "accuracy.txt"
    accuracy_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    confusion_path = out_dir / "confusion.csv"
    rows = ["," + ",".join(report.classes)]
    for i, label in enumerate(report.classes):
        rows.append(label + "," + ",".join(str(int(v)) for v in report.confusion[i]))
    confusion_path.write_text("\n".join(rows) + "\n", encoding="utf-8")

    per_split_path = out_dir / "per_split.csv"
    rows = ["test_subject,n_test,n_correct,accuracy,best_C,best_gamma"]
    for s in report.splits:
        rows.append(
            f"{s.test_subject},{s.n_test},{s.n_correct},{s.accuracy:.6f},"
            f"{s.best_C:.17g},{s.best_gamma:.17g}"
        )
    per_split_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return [accuracy_path, confusion_path, per_split_path]
