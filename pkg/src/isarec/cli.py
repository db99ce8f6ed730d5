"""Command-line interface wiring configuration, stages, and model files.

Subcommands: ``pretrain``, ``encode``, ``train-svm``, ``evaluate``, and
``pipeline`` (all stages in sequence).  Every command echoes its fully
resolved configuration to ``<out>/resolved_config`` so runs are
self-describing.  Exit codes: 0 success, 1 internal failure, 2
usage/input error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import modelio
from .config import FUSED, PipelineConfig
from .errors import ConfigError, EmptyClipError, IsarecError
from .evaluation import ClipStore, render_reports, run_evaluation
from .isa import pretrain_network
from .svm import grid_search, train_multiclass
from .video import DEPTH, GRAY, load_manifest
from .vocabulary import (
    assign_many,
    clip_descriptors,
    histogram_from_words,
    kmeans_fit,
)

MODALITY_LABEL = {GRAY: "grayscale", DEPTH: "depth", FUSED: "grayscale & depth"}


def _build_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    if args.set:
        cfg = cfg.with_overrides(args.set)
    if args.root is not None:
        cfg.dataset.root = args.root
    if args.manifest is not None:
        cfg.dataset.manifest = args.manifest
    if args.modality is not None:
        cfg.dataset.modality = args.modality
    if args.out is not None:
        cfg.run.out_dir = args.out
    if args.splits is not None:
        cfg.run.splits = args.splits
    if args.pretrain_set is not None:
        cfg.run.pretrain_set = args.pretrain_set
    if args.threads is not None:
        cfg.run.threads = args.threads
    elif os.environ.get("ISAREC_THREADS"):
        try:
            cfg.run.threads = int(os.environ["ISAREC_THREADS"])
        except ValueError:
            raise ConfigError(
                f"bad ISAREC_THREADS value {os.environ['ISAREC_THREADS']!r}"
            ) from None
    cfg.validate()
    return cfg


def _prepare(cfg: PipelineConfig):
    root = Path(cfg.dataset.root)
    if not root.is_dir():
        raise ConfigError(f"dataset root not found: {root}")
    manifest = load_manifest(cfg.manifest_path())
    out = Path(cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.to_file(out / "resolved_config")
    return manifest, out


def _single_modality(cfg: PipelineConfig, command: str) -> str:
    if cfg.dataset.modality == FUSED:
        raise ConfigError(
            f"{command} works on a single modality; use --modality gray or depth "
            "(fused is handled by evaluate/pipeline)"
        )
    return cfg.dataset.modality


def _pretrain_clip_ids(cfg: PipelineConfig, manifest) -> list[str]:
    if cfg.run.pretrain_set:
        path = Path(cfg.run.pretrain_set)
        if not path.is_file():
            raise ConfigError(f"pretrain-set file not found: {path}")
        wanted = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
        known = {e.clip_id for e in manifest.entries}
        unknown = [w for w in wanted if w not in known]
        if unknown:
            raise ConfigError(f"pretrain-set names unknown clip_ids: {unknown[:5]}")
        return wanted
    return [e.clip_id for e in manifest.entries]


def _do_pretrain(cfg, manifest, out, modality) -> Path:
    store = ClipStore(cfg.dataset.root, manifest, cfg.dataset.frame_width, cfg.dataset.frame_height)
    ids = _pretrain_clip_ids(cfg, manifest)
    clips = [store.get(cid, modality) for cid in ids]
    net, info = pretrain_network(
        clips, cfg.geometry(), cfg.layer_spec(cfg.layer1), cfg.layer_spec(cfg.layer2)
    )
    path = out / f"network_{modality}.isanet"
    modelio.save_network(net, path)
    t1, t2 = info["layer1_trace"], info["layer2_trace"]
    print(
        f"pretrained {modality} network on {len(clips)} clips: "
        f"layer1 objective {t1[0]:.4f} -> {t1[-1]:.4f}, "
        f"layer2 objective {t2[0]:.4f} -> {t2[-1]:.4f}"
    )
    print(f"wrote {path}")
    return path


def _do_encode(cfg, manifest, out, modality, network_path, vocab_path=None):
    net = modelio.load_network(network_path)
    store = ClipStore(cfg.dataset.root, manifest, cfg.dataset.frame_width, cfg.dataset.frame_height)
    descriptors = {}
    skipped = []
    for entry in manifest.entries:
        try:
            descriptors[entry.clip_id] = clip_descriptors(
                net, store.get(entry.clip_id, modality)
            )
        except EmptyClipError as exc:
            skipped.append((entry.clip_id, str(exc)))

    if vocab_path is not None:
        vocab = modelio.load_vocabulary(vocab_path)
        vocab_out = Path(vocab_path)
    else:
        fit_ids = [cid for cid in _pretrain_clip_ids(cfg, manifest) if cid in descriptors]
        if not fit_ids:
            raise ConfigError("no encodable clips available to fit a vocabulary")
        pool = np.concatenate([descriptors[cid] for cid in fit_ids])
        if pool.shape[0] > cfg.vocabulary.max_descriptors:
            rng = np.random.default_rng(cfg.vocabulary.seed)
            pool = pool[
                rng.choice(pool.shape[0], size=cfg.vocabulary.max_descriptors, replace=False)
            ]
        vocab = kmeans_fit(
            pool,
            cfg.vocabulary.size,
            seed=cfg.vocabulary.seed,
            max_iter=cfg.vocabulary.max_iter,
            tol=cfg.vocabulary.tol,
        )
        vocab_out = out / f"vocab_{modality}.isavocab"
        modelio.save_vocabulary(vocab, vocab_out)
        print(f"wrote {vocab_out}")

    histograms = []
    for entry in manifest.entries:
        if entry.clip_id not in descriptors:
            continue
        words = assign_many(vocab, descriptors[entry.clip_id])
        histograms.append(
            histogram_from_words(words, vocab.size, entry.clip_id, modality)
        )
    hist_path = out / f"histograms_{modality}.csv"
    modelio.save_histograms(histograms, hist_path)
    skipped_path = out / "skipped.csv"
    with open(skipped_path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("clip_id,reason\n")
        for cid, reason in skipped:
            fh.write(f"{cid},{reason.replace(',', ';')}\n")
    print(f"encoded {len(histograms)} clips ({len(skipped)} skipped); wrote {hist_path}")
    return hist_path, vocab_out


def _do_train_svm(cfg, manifest, out, histograms_path, fuse_path=None) -> Path:
    hists = modelio.load_histograms(histograms_path)
    label_of = {e.clip_id: e.label for e in manifest.entries}
    missing = [h.clip_id for h in hists if h.clip_id not in label_of]
    if missing:
        raise ConfigError(f"histograms name clips absent from the manifest: {missing[:5]}")
    if fuse_path is not None:
        others = {h.clip_id: h for h in modelio.load_histograms(fuse_path)}
        rows, labels, tag = [], [], FUSED
        for h in hists:
            if h.clip_id not in others:
                raise ConfigError(f"clip {h.clip_id!r} missing from {fuse_path}")
            rows.append(np.concatenate([h.weights, others[h.clip_id].weights]) / 2.0)
            labels.append(label_of[h.clip_id])
    else:
        rows = [h.weights for h in hists]
        labels = [label_of[h.clip_id] for h in hists]
        tag = hists[0].modality if hists else "unknown"
    X = np.stack(rows)

    gs = grid_search(
        X, labels, cfg.svm.grid_c, cfg.svm.grid_gamma,
        folds=cfg.svm.folds, seed=cfg.svm.cv_seed, kkt_tol=cfg.svm.kkt_tol,
    )
    model = train_multiclass(X, labels, gs.best_C, gs.best_gamma, cfg.svm.kkt_tol)
    path = out / f"svm_{tag}.isasvm"
    modelio.save_svm(model, path)
    grid_path = out / "grid_search.csv"
    with open(grid_path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("C,gamma,cv_accuracy\n")
        for C, gamma, acc in gs.grid:
            fh.write(f"{C:.17g},{gamma:.17g},{acc:.6f}\n")
    note = " (folds reduced for stratification)" if gs.folds_reduced else ""
    print(
        f"grid search over {len(gs.grid)} cells, {gs.folds_used}-fold CV{note}: "
        f"best C={gs.best_C:g} gamma={gs.best_gamma:g} accuracy={gs.cv_accuracy:.3f}"
    )
    print(f"wrote {path}")
    return path


def cmd_pretrain(args) -> int:
    cfg = _build_config(args)
    manifest, out = _prepare(cfg)
    modality = _single_modality(cfg, "pretrain")
    _do_pretrain(cfg, manifest, out, modality)
    return 0


def cmd_encode(args) -> int:
    cfg = _build_config(args)
    manifest, out = _prepare(cfg)
    modality = _single_modality(cfg, "encode")
    _do_encode(cfg, manifest, out, modality, args.network, args.vocab)
    return 0


def cmd_train_svm(args) -> int:
    cfg = _build_config(args)
    manifest, out = _prepare(cfg)
    _do_train_svm(cfg, manifest, out, args.histograms, args.fuse)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _build_config(args)
    manifest, out = _prepare(cfg)
    report = run_evaluation(manifest, cfg)
    files = render_reports(report, out)
    print(
        f"evaluated {len(report.splits)} splits ({MODALITY_LABEL[cfg.dataset.modality]}): "
        f"overall accuracy {100 * report.overall_accuracy:.1f}%"
    )
    for f in files:
        print(f"wrote {f}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _build_config(args)
    manifest, out = _prepare(cfg)
    hist_paths = {}
    for modality in cfg.clip_modalities():
        net_path = _do_pretrain(cfg, manifest, out, modality)
        hist_paths[modality], _ = _do_encode(cfg, manifest, out, modality, net_path)
    if cfg.dataset.modality == FUSED:
        _do_train_svm(cfg, manifest, out, hist_paths[GRAY], hist_paths[DEPTH])
    else:
        _do_train_svm(cfg, manifest, out, hist_paths[cfg.dataset.modality])
    report = run_evaluation(manifest, cfg)
    files = render_reports(report, out)
    print(
        f"evaluated {len(report.splits)} splits: "
        f"overall accuracy {100 * report.overall_accuracy:.1f}%"
    )
    for f in files:
        print(f"wrote {f}")
    return 0


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file (INI-style sections)")
    common.add_argument(
        "--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override one configuration value (repeatable)",
    )
    common.add_argument("--root", help="dataset root directory")
    common.add_argument("--manifest", help="manifest CSV (relative to root)")
    common.add_argument("--modality", choices=[GRAY, DEPTH, FUSED])
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker cap (env ISAREC_THREADS is the fallback)")
    common.add_argument("--splits", help="comma-separated test subjects to evaluate")
    common.add_argument("--pretrain-set", dest="pretrain_set",
                        help="file of clip_ids to pretrain on (one per line)")

    p = argparse.ArgumentParser(prog="isarec", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("pretrain", parents=[common], help="fit the feature network")
    sp.set_defaults(func=cmd_pretrain)
    sp = sub.add_parser("encode", parents=[common], help="encode clips as word histograms")
    sp.add_argument("--network", required=True, help="network model file")
    sp.add_argument("--vocab", help="existing vocabulary file (else one is fitted)")
    sp.set_defaults(func=cmd_encode)
    sp = sub.add_parser("train-svm", parents=[common], help="grid-search and train the classifier")
    sp.add_argument("--histograms", required=True, help="histogram CSV")
    sp.add_argument("--fuse", help="second histogram CSV to fuse (gray first, then this)")
    sp.set_defaults(func=cmd_train_svm)
    sp = sub.add_parser("evaluate", parents=[common], help="leave-one-person-out evaluation")
    sp.set_defaults(func=cmd_evaluate)
    sp = sub.add_parser("pipeline", parents=[common], help="all stages, then evaluation")
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except IsarecError as exc:
        print(f"isarec: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failure
        print(f"isarec: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
