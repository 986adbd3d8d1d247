"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .errors import ConfigError, HoaDoaError

EXIT_OK, EXIT_USAGE = 0, 1

log = logging.getLogger("hoadoa")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _load_json(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return doc


def cmd_gen(args) -> int:
    from .dataset import GenConfig, generate_dataset

    doc = _load_json(args.config)
    if args.count is not None:
        doc["count"] = args.count
    doc["seed"] = args.seed
    cfg = GenConfig.from_dict(doc)
    records = generate_dataset(cfg, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def train_configs(doc: dict, seed: int):
    """Split a training JSON document into model and training configs.

    Layout: ``{"model": {...ModelConfig fields}, "train": {...TrainConfig
    fields}}``; both sections are optional.
    """
    from .dcnn import ModelConfig, TrainConfig

    unknown = set(doc) - {"model", "train"}
    if unknown:
        raise ConfigError(f"unknown training config sections: {sorted(unknown)}")
    try:
        mcfg = ModelConfig(**doc.get("model", {}))
        tcfg = TrainConfig(**{**doc.get("train", {}), "seed": seed})
    except TypeError as exc:
        raise ConfigError(f"bad training config: {exc}") from exc
    return mcfg, tcfg


def write_history(path, hist) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("epoch,train_loss,val_loss,val_recall,val_precision\n")
        fh.write(f"init,{hist.initial_loss!r},,,\n")
        for e, row in enumerate(zip(hist.train_loss, hist.val_loss, hist.val_recall, hist.val_precision)):
            fh.write(f"{e}," + ",".join(repr(float(v)) for v in row) + "\n")


def cmd_train(args) -> int:
    from .dataset import ArrayDataset
    from .dcnn import build_model, save_model, train

    mcfg, tcfg = train_configs(_load_json(args.config), args.seed)
    if args.epochs is not None:
        tcfg.epochs = args.epochs
    data = ArrayDataset.load(args.data)
    model = build_model(mcfg, seed=args.seed)

    def progress(epoch, hist):
        print(
            f"epoch {epoch + 1}/{tcfg.epochs} train {hist.train_loss[-1]:.5f} val {hist.val_loss[-1]:.5f} "
            f"recall {hist.val_recall[-1]:.3f}",
            flush=True,
        )

    model, hist = train(model, data, tcfg, progress=progress)
    save_model(model, args.out)
    write_history(args.out + ".history.csv", hist)
    print(f"saved model to {args.out} (best epoch {hist.best_epoch + 1})")
    return EXIT_OK


def _print_peaks(peaks) -> None:
    for d in peaks:
        print(f"peak az={d.azimuth:.1f} el={d.elevation:.1f}")


def cmd_infer(args) -> int:
    from .dataset import read_record
    from .dcnn import load_model, model_forward
    from .evaluation import emit_heatmap
    from .sps import extract_peaks

    model = load_model(args.model)
    rec = read_record(args.data, args.index)
    sps = model_forward(model, rec.feature)
    emit_heatmap(sps, args.heatmap, args.format, truth=rec.truth)
    _print_peaks(extract_peaks(sps, args.threshold))
    return EXIT_OK


def cmd_baseline_sps(args) -> int:
    from .dataset import TRUTH_PER_SOURCE, read_record
    from .evaluation import beamformer_sps, emit_heatmap
    from .sps import extract_peaks

    rec = read_record(args.data, args.index)
    sps = beamformer_sps(args.method, rec.feature, max(1, len(rec.truth) // TRUTH_PER_SOURCE))
    emit_heatmap(sps, args.heatmap, args.format, truth=rec.truth)
    _print_peaks(extract_peaks(sps, args.threshold))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import format_report, run_eval, write_report

    if args.method == "dcnn" and not args.model:
        raise UsageError("eval: --model is required with --method dcnn")
    result = run_eval(args.method, args.data, args.model, by_t60=args.by_t60, threshold=args.threshold)
    sys.stdout.write(format_report(result))
    if args.report:
        write_report(result, args.report)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    checks = run_selftest(args.seed)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    return EXIT_OK if all(c.passed for c in checks) else 3


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hoadoa", description="HOA-domain DOA estimation: simulation, training and evaluation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="simulate a dataset file")
    g.add_argument("--config", help="JSON generation config")
    g.add_argument("--seed", type=_seed, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, help="override the record count")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train the network on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--config", help="JSON with optional 'model' and 'train' sections")
    t.add_argument("--seed", type=_seed, required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, help="override the epoch count")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="network SPS for one record")
    i.add_argument("--model", required=True)
    i.add_argument("--data", required=True)
    i.add_argument("--index", type=int, required=True)
    i.add_argument("--heatmap", required=True)
    i.add_argument("--format", choices=("csv", "pgm"), default="csv")
    i.add_argument("--threshold", type=float, default=0.5)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="score a method on a dataset")
    e.add_argument("--method", choices=("dcnn", "eb-mvdr", "eb-music"), required=True)
    e.add_argument("--model")
    e.add_argument("--data", required=True)
    e.add_argument("--by-t60", action="store_true")
    e.add_argument("--report", help="write <report>, <report>.kv and <report>.records.csv")
    e.add_argument("--threshold", type=float, default=0.5)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("baseline-sps", help="classical SPS for one record")
    b.add_argument("--method", choices=("eb-mvdr", "eb-music"), required=True)
    b.add_argument("--data", required=True)
    b.add_argument("--index", type=int, required=True)
    b.add_argument("--heatmap", required=True)
    b.add_argument("--format", choices=("csv", "pgm"), default="csv")
    b.add_argument("--threshold", type=float, default=0.5)
    b.set_defaults(func=cmd_baseline_sps)

    s = sub.add_parser("selftest", help="gradient, Parseval and oracle checks")
    s.add_argument("--seed", type=_seed, default=0)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with np.errstate(over="ignore"):
            return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except HoaDoaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
