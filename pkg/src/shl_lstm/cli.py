"""Command-line entry point: ``shl-lstm <command> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import evaluation as ev
from . import ingestion, preprocessing, synthetic
from .config import RunConfig, check_seed
from .data_model import ShlError, Split
from .keyvalue import format_key_values
from .nn import init_params, load_checkpoint, save_checkpoint
from .nn import kernels
from .training import DivergedLoss, save_history, train

log = logging.getLogger("shl_lstm")


class ArchMismatch(ShlError):
    pass


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=check_seed(args.seed))
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_synthetic(args) -> int:
    cfg = _resolve_config(args).replace(blocks_per_class=args.blocks_per_class)
    if cfg.blocks_per_class < 1:
        print("error: blocks_per_class must be >= 1", file=sys.stderr)
        return 2
    out = _out_dir(args)
    manifests = synthetic.generate(out, cfg.blocks_per_class, cfg.seed)
    cfg = cfg.replace(manifests=[str(p.resolve()) for p in manifests.values()])
    cfg.save(out / "config.txt")
    for pos, path in manifests.items():
        print(f"{pos.value}: {path}")
    return 0


def cmd_preprocess(args) -> int:
    cfg = _resolve_config(args)
    if args.manifest:
        cfg = cfg.replace(manifests=[str(Path(m).resolve()) for m in args.manifest])
    if not cfg.manifests:
        print("error: at least one --manifest is required", file=sys.stderr)
        return 2
    out = _out_dir(args)
    by_split: dict[Split, list] = {s: [] for s in Split}
    for path in cfg.manifests:
        m = ingestion.load_manifest(path)
        by_split[m.split].append(ingestion.read_position(m))
    if not by_split[Split.Train]:
        raise ShlError("no manifest declares split = train")

    pcfg = cfg.pipeline
    train_ds, norm = preprocessing.run_pipeline(ingestion.merge_positions(by_split[Split.Train]), pcfg)
    preprocessing.save_dataset(train_ds, out / "train.mnds")
    norm.save(out / "normalizer.txt")
    ev.write_histogram(ev.label_histogram(train_ds.y), out / "train_histogram.csv")
    print(f"train: {len(train_ds)} samples -> {out / 'train.mnds'}")
    cfg = cfg.replace(train_dataset=str((out / "train.mnds").resolve()))

    if by_split[Split.Validation]:
        blocks = ingestion.merge_positions(by_split[Split.Validation])
        val_ds, _ = preprocessing.run_pipeline(blocks, pcfg, norm, Split.Validation)
        full_ds, _ = preprocessing.run_pipeline(
            blocks, preprocessing.PipelineConfig(pcfg.timesteps, pcfg.feature_dim, preprocessing.Balance.NONE),
            norm, Split.Validation)
        preprocessing.save_dataset(val_ds, out / "val.mnds")
        preprocessing.save_dataset(full_ds, out / "val_full.mnds")
        ev.write_histogram(ev.label_histogram(full_ds.y), out / "val_histogram.csv")
        print(f"validation: {len(val_ds)} balanced / {len(full_ds)} total samples")
        cfg = cfg.replace(val_dataset=str((out / "val.mnds").resolve()))
    if by_split[Split.Test]:
        test_cfg = preprocessing.PipelineConfig(pcfg.timesteps, pcfg.feature_dim, preprocessing.Balance.NONE)
        test_ds, _ = preprocessing.run_pipeline(ingestion.merge_positions(by_split[Split.Test]), test_cfg, norm,
                                                Split.Test)
        preprocessing.save_dataset(test_ds, out / "test.mnds")
        print(f"test: {len(test_ds)} samples")
    cfg.save(out / "config.txt")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    cfg = cfg.replace(epochs=args.epochs,
                      train_dataset=str(Path(args.dataset).resolve()) if args.dataset else None,
                      val_dataset=str(Path(args.val_dataset).resolve()) if args.val_dataset else None)
    if not cfg.train_dataset or not cfg.val_dataset:
        print("error: training and validation datasets are required (--dataset/--val-dataset or config)",
              file=sys.stderr)
        return 2
    out = _out_dir(args)
    train_ds = preprocessing.load_dataset(cfg.train_dataset, Split.Train)
    val_ds = preprocessing.load_dataset(cfg.val_dataset, Split.Validation)
    if train_ds.feature_dim != cfg.feature_dim or train_ds.timesteps != cfg.timesteps:
        cfg = cfg.replace(feature_dim=train_ds.feature_dim, timesteps=train_ds.timesteps)
    cfg.save(out / "config.txt")

    model = init_params(cfg.architecture, cfg.seed)
    t0 = time.perf_counter()
    try:
        best, history = train(model, train_ds, val_ds, cfg.training, checkpoint_dir=out)
    except DivergedLoss as exc:
        if exc.history.records:
            save_history(exc.history, out / "history.csv")
        print(f"error: {exc}; last good checkpoint kept at {out / 'ckpt_best.bin'}", file=sys.stderr)
        return 1
    save_history(history, out / "history.csv")
    save_checkpoint(best, out / "ckpt_best.bin")
    r = history.best
    print(f"trained {len(history)} epochs in {time.perf_counter() - t0:.1f}s ({kernels.backend} kernels)")
    print(f"best epoch {history.best_epoch}: train_loss {r.train_loss:.4f} train_acc {r.train_acc:.4f} "
          f"val_loss {r.val_loss:.4f} val_acc {r.val_acc:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    model = load_checkpoint(args.checkpoint)
    ds = preprocessing.load_dataset(args.dataset)
    if ds.feature_dim != model.feature_dim:
        raise ArchMismatch(
            f"checkpoint expects feature_dim {model.feature_dim}, dataset has {ds.feature_dim}")
    arch = model.architecture
    (out / "evaluate.txt").write_text(format_key_values({
        "checkpoint": Path(args.checkpoint).resolve(), "dataset": Path(args.dataset).resolve(),
        "feature_dim": arch.feature_dim, "hidden1": arch.hidden[0], "hidden2": arch.hidden[1],
        "cell_activation": arch.cell_activation.name.lower(), "dropout_p": repr(arch.dropout_p),
        "backend": kernels.backend,
    }), encoding="utf-8")
    preds = ev.predict(model, ds)
    ev.write_predictions(preds, out / "predictions.txt")
    ev.write_histogram(ev.label_histogram(preds), out / "predicted_histogram.csv")
    if len(ds) == 0:
        print("dataset is empty; wrote empty predictions")
        return 0
    cm = ev.confusion(preds, ds.y, model.n_classes)
    rep = ev.metrics(cm)
    ev.write_confusion(cm, out / "confusion.csv")
    ev.write_report(rep, out / "report.csv")
    print(f"samples {len(ds)}  accuracy {rep.accuracy:.4f}  macro_f1 {rep.macro_f1:.4f}  "
          f"weighted_f1 {rep.weighted_f1:.4f}")
    return 0


def cmd_table2_check(args) -> int:
    result = ev.published_check()
    for name, row in result.items():
        print(f"{name:12s} {row['value']:.5f}  reported {row['reported']:.4f}  delta {row['delta']:+.5f}")
    if args.out:
        out = _out_dir(args)
        cm = ev.ConfusionMatrix(ev.PUBLISHED_CONFUSION)
        ev.write_confusion(cm, out / "confusion.csv")
        ev.write_report(ev.metrics(cm), out / "report.csv")
        (out / "table2_check.txt").write_text(format_key_values(
            {f"{name}_{k}": repr(v) for name, row in result.items() for k, v in row.items()}), encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shl-lstm", description="Transportation-mode LSTM toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="key = value run config")
        p.add_argument("--seed", type=int, help="override the config seed (u64)")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("gen-synthetic", help="write a synthetic corpus with manifests")
    common(p)
    p.add_argument("--blocks-per-class", type=int, help="blocks per class and position")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("preprocess", help="turn raw manifests into dataset files")
    common(p)
    p.add_argument("--manifest", action="append", default=[], help="position manifest (repeatable)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train with best-on-validation checkpointing")
    common(p)
    p.add_argument("--dataset", help="training dataset file")
    p.add_argument("--val-dataset", help="validation dataset file")
    p.add_argument("--epochs", type=int, help="override the config epoch count")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="predict and score a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("table2-check", help="recompute metrics from the published confusion matrix")
    p.add_argument("--out", help="optionally write report.csv and confusion.csv here")
    p.set_defaults(func=cmd_table2_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ShlError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
