"""
Command line interface for the COCOA toolkit
One entry point with a subcommand per pipeline stage.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from colorama import Fore, Style

from .batching import WindowedDataset
from .bench import ratio_is_monotone, run_bench, write_report
from .config import CliConfig, load_config
from .constants import (
    BATCH_GRID, CLASSIFIER_NAME, CROSS_MODAL_METHODS, DATA_DIR_ENV,
    DEFAULT_DATA_DIR, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, LABEL_FRACTIONS, SSL_METHODS,
    ALL_METHODS, TAU_GRID,
)
from .dataset_io import EXPORT_SOURCES, export_embeddings, raw_features, read_dataset, write_dataset
from .encoder import load_checkpoint, save_checkpoint, write_tensors
from .errors import InputError, UsageError, ValidationError
from .log_utils import setup_logging
from .pipeline import (
    DataSplits, TrainConfig, best_batch_sizes, batch_sweep, embed, finetune, label_curve,
    linear_probe, modality_pair_runs, pretrain, random_encoders, tau_sweep,
)
from .progress_tracker import MetricsSink
from .synthgen import generate

logger = logging.getLogger(__name__)


class CocoaArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so bad usage maps to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from e


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from e


def _name_list(text: str) -> List[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _default_data_dir() -> str:
    return os.environ.get(DATA_DIR_ENV, DEFAULT_DATA_DIR)


def build_parser() -> argparse.ArgumentParser:
    common = CocoaArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (sections train, hyper, encoder, synth)")
    common.add_argument("--seed", type=int, help="Base seed for every random choice (default 0)")
    common.add_argument("--jobs", type=int, default=1, help="Parallel runs for sweeps (default 1)")
    common.add_argument("--verbose", action="store_true", help="Debug logging")
    common.add_argument("--quiet", action="store_true", help="Warnings and errors only")
    common.add_argument("--log-file", help="Also write log records to this file")

    data = CocoaArgumentParser(add_help=False)
    data.add_argument("--data", default=None,
                      help=f"Dataset directory (default ${DATA_DIR_ENV} or '{DEFAULT_DATA_DIR}')")
    data.add_argument("--modalities", type=_name_list, help="Comma-separated modality subset")

    train = CocoaArgumentParser(add_help=False)
    train.add_argument("--batch", type=int, dest="batch_size", help="Batch size")
    train.add_argument("--epochs", type=int, dest="max_epochs", help="Maximum epochs (default 100)")
    train.add_argument("--patience", type=int, dest="early_stop_patience", help="Early-stopping patience (default 5)")
    train.add_argument("--lr", type=float, help="Adam learning rate (default 0.001)")
    train.add_argument("--tau", type=float, help="Temperature (default 0.1)")
    train.add_argument("--lambda", type=float, dest="lambda_", help="COCOA discriminator weight (default 1.0)")
    train.add_argument("--num-seeds", type=int, help="Seeds per reported number in sweeps (default 5)")
    train.add_argument("--metrics", help="Newline-delimited JSON metrics file")

    parser = CocoaArgumentParser(
        prog="cocoa",
        description="COCOA - cross-modality contrastive learning for multimodal time series",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s synth --out data/ --seed 7
  %(prog)s pretrain --method cocoa --data data/ --batch 16 --out ckpt/ --metrics runs/m.jsonl
  %(prog)s probe --checkpoint ckpt/ --data data/
  %(prog)s finetune --checkpoint ckpt/ --data data/ --label-fraction 0.1
  %(prog)s label-curve --method cocoa --data data/ --fractions 0.1,0.5,1.0
  %(prog)s batch-sweep --methods cocoa,cmc --batches 8,32,128 --data data/
  %(prog)s bench --V 2,3,4 --N 8,64,256 --out bench.tsv
  %(prog)s export-embeddings --source ssl --checkpoint ckpt/ --data data/ --out emb.csv

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
        """,
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="Generate a synthetic multimodal dataset")
    p.add_argument("--out", default=None, help="Output directory (default: the data directory)")
    p.add_argument("--num-classes", type=int, help="Number of classes (default 4)")
    p.add_argument("--num-modalities", type=int, help="Number of modalities (default 3)")
    p.add_argument("--channels", type=int, dest="channels_per_modality", help="Channels per modality (default 3)")
    p.add_argument("--window", type=int, help="Samples per window (default 64)")
    p.add_argument("--windows-per-class", type=int, help="Windows generated per class (default 300)")
    p.add_argument("--noise-std", type=float, help="Standard deviation of the white noise (default 0.5)")
    p.add_argument("--distractor-ratio", type=float,
                   help="Nuisance oscillation amplitude as a multiple of --noise-std (default 8.0)")

    p = sub.add_parser("pretrain", parents=[common, data, train], help="Self-supervised pretraining")
    p.add_argument("--method", choices=SSL_METHODS, help="Self-supervised objective (default cocoa)")
    p.add_argument("--out", required=True, help="Checkpoint directory")

    p = sub.add_parser("probe", parents=[common, data, train], help="Linear probe on frozen encoders")
    p.add_argument("--checkpoint", help="Encoder checkpoint directory (omit for random encoders)")
    p.add_argument("--out", help="Directory for the classifier weights")

    p = sub.add_parser("finetune", parents=[common, data, train], help="End-to-end fine-tuning")
    p.add_argument("--checkpoint", help="Encoder checkpoint directory (omit for supervised training)")
    p.add_argument("--label-fraction", type=float, default=1.0, help="Share of training labels (default 1.0)")
    p.add_argument("--out", help="Directory for the fine-tuned encoder and classifier")

    p = sub.add_parser("label-curve", parents=[common, data, train], help="Macro-F1 against label fraction")
    p.add_argument("--method", choices=ALL_METHODS, help="Objective, or 'supervised' for the baseline (default cocoa)")
    p.add_argument("--fractions", type=_float_list, default=list(LABEL_FRACTIONS),
                   help="Comma-separated label fractions (default 0.1,0.2,...,1.0)")

    p = sub.add_parser("batch-sweep", parents=[common, data, train], help="Probe scores across batch sizes")
    p.add_argument("--methods", type=_name_list, default=list(CROSS_MODAL_METHODS),
                   help="Comma-separated methods (default cocoa,cmc)")
    p.add_argument("--batches", type=_int_list, default=list(BATCH_GRID),
                   help="Comma-separated batch sizes (default 8,32,128)")

    p = sub.add_parser("bench", parents=[common], help="Similarity-count benchmark, COCOA against CMC")
    p.add_argument("--V", type=_int_list, default=[2, 3, 4, 6], dest="v_list",
                   help="Comma-separated modality counts (default 2,3,4,6)")
    p.add_argument("--N", type=_int_list, default=[8, 64, 256], dest="n_list",
                   help="Comma-separated batch sizes (default 8,64,256)")
    p.add_argument("--dim", type=int, default=32, help="Embedding dimension of the random embeddings (default 32)")
    p.add_argument("--repeats", type=int, default=3, help="Timed repetitions per grid point (default 3)")
    p.add_argument("--out", help="Tab-separated report file")

    p = sub.add_parser("export-embeddings", parents=[common, data], help="Write embeddings with labels")
    p.add_argument("--source", choices=EXPORT_SOURCES, default="ssl",
                   help="raw windows, ssl encoder or finetuned encoder embeddings (default ssl)")
    p.add_argument("--checkpoint", help="Encoder checkpoint directory (ssl and finetuned sources)")
    p.add_argument("--out", required=True, help="Output delimited text file")

    p = sub.add_parser("modality-pairs", parents=[common, data, train],
                       help="Every two-modality combination against all modalities")
    p.add_argument("--method", choices=SSL_METHODS, help="Self-supervised objective (default cocoa)")

    p = sub.add_parser("tau-sweep", parents=[common, data, train], help="Temperature grid search")
    p.add_argument("--method", choices=SSL_METHODS, help="Self-supervised objective (default cocoa)")
    p.add_argument("--taus", type=_float_list, default=list(TAU_GRID),
                   help="Comma-separated temperatures (default 0.1,0.5,1.0)")
    return parser


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _train_config(args, cli_config: CliConfig, **extra) -> TrainConfig:
    overrides = {
        "method": getattr(args, "method", None),
        "batch_size": getattr(args, "batch_size", None),
        "max_epochs": getattr(args, "max_epochs", None),
        "early_stop_patience": getattr(args, "early_stop_patience", None),
        "lr": getattr(args, "lr", None),
        "seed": args.seed,
        "num_seeds": getattr(args, "num_seeds", None),
        "modalities": getattr(args, "modalities", None),
    }
    overrides.update(extra)
    hyper = {"tau": getattr(args, "tau", None), "lambda_": getattr(args, "lambda_", None)}
    return cli_config.train_config(overrides, hyper)


def _load_data(args) -> WindowedDataset:
    return read_dataset(args.data or _default_data_dir())


def _sink(args) -> Optional[MetricsSink]:
    path = getattr(args, "metrics", None)
    return MetricsSink(path) if path else None


def _ok(message: str):
    print(f"{Fore.GREEN}✓ {message}")


def _info(message: str):
    print(f"{Fore.BLUE}{message}")


def _header(title: str):
    print(f"{Fore.CYAN}{title}")
    print("=" * 50)


def _encoders_or_random(args, splits: DataSplits, config: TrainConfig):
    if args.checkpoint:
        return load_checkpoint(args.checkpoint)
    _info("No checkpoint given: using randomly initialised encoders")
    return random_encoders(splits.train, config)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args, cli_config: CliConfig) -> int:
    overrides = {key: getattr(args, key) for key in
                 ("num_classes", "num_modalities", "channels_per_modality", "window",
                  "windows_per_class", "noise_std", "distractor_ratio")}
    overrides["seed"] = args.seed
    synth_config = cli_config.synth_config(overrides)
    dataset = generate(synth_config)
    out = args.out or _default_data_dir()
    manifest = write_dataset(dataset, out)
    _ok(f"Wrote {dataset.num_windows} windows to {manifest}")
    _info(f"Dataset hash: {dataset.content_hash()}")
    return EXIT_OK


def cmd_pretrain(args, cli_config: CliConfig) -> int:
    config = _train_config(args, cli_config)
    dataset = _load_data(args)
    _header(f"Pretraining {config.method} (batch {config.batch_size}, seed {config.seed})")
    result = pretrain(dataset, config, _sink(args))
    path = save_checkpoint(result.params, args.out)
    _ok(f"Best epoch {result.best_epoch}, loss {result.best_val_loss:.5f}")
    _ok(f"Checkpoint written to {path}")
    return EXIT_OK


def cmd_probe(args, cli_config: CliConfig) -> int:
    config = _train_config(args, cli_config)
    splits = DataSplits.from_dataset(_load_data(args), config.seed, config.split)
    encoders = _encoders_or_random(args, splits.select_modalities(config.modalities), config)
    result = linear_probe(encoders, splits, config, _sink(args))
    if args.out:
        write_tensors(Path(args.out) / CLASSIFIER_NAME,
                      {"classifier.weight": result.classifier.weight.data,
                       "classifier.bias": result.classifier.bias.data})
    _ok(f"Frozen probe: val macro-F1 {result.val_f1:.4f}, test macro-F1 {result.test_f1:.4f}")
    return EXIT_OK


def cmd_finetune(args, cli_config: CliConfig) -> int:
    config = _train_config(args, cli_config)
    splits = DataSplits.from_dataset(_load_data(args), config.seed, config.split)
    encoders = load_checkpoint(args.checkpoint) if args.checkpoint else None
    if encoders is None:
        _info("No checkpoint given: training encoders from random initialisation")
    result = finetune(encoders, splits, config, args.label_fraction, _sink(args))
    if args.out:
        save_checkpoint(result.encoders, args.out)
        write_tensors(Path(args.out) / CLASSIFIER_NAME,
                      {"classifier.weight": result.classifier.weight.data,
                       "classifier.bias": result.classifier.bias.data})
    _ok(f"Fine-tuned at {args.label_fraction:g} labels: test macro-F1 {result.test_f1:.4f}")
    return EXIT_OK


def cmd_label_curve(args, cli_config: CliConfig) -> int:
    config = _train_config(args, cli_config)
    curve = label_curve(_load_data(args), config.method, args.fractions, config, _sink(args), args.jobs)
    _header(f"Label efficiency: {curve.method}")
    for point in curve.points:
        print(f"  {point.label_fraction:>5.2f}  {point.mean_f1:.4f} ± {point.std_f1:.4f}  ({point.num_seeds} seeds)")
    return EXIT_OK


def cmd_batch_sweep(args, cli_config: CliConfig) -> int:
    config = _train_config(args, cli_config)
    rows = batch_sweep(_load_data(args), args.methods, args.batches, config, _sink(args), args.jobs)
    _header("Batch-size sweep")
    for row in rows:
        print(f"  {row.method:<10} batch {row.batch_size:>4}  seed {row.seed:>3}  "
              f"F1 {row.macro_f1:.4f}  sims/step {row.similarity_evaluations}")
    for method, (batch_size, score) in best_batch_sizes(rows).items():
        _ok(f"{method}: best batch size {batch_size} (mean F1 {score:.4f})")
    return EXIT_OK


def cmd_bench(args, cli_config: CliConfig) -> int:
    report = run_bench(args.v_list, args.n_list, args.dim, args.repeats, seed=args.seed or 0)
    _header("Similarity evaluations per loss call")
    for row in report.rows:
        print(f"  {row.method:<6} V={row.num_modalities:<3} N={row.batch_size:<5} "
              f"{row.measured_count:>10}  {row.wall_seconds * 1000:8.3f} ms")
    if args.out:
        _ok(f"Report written to {write_report(report, args.out)}")
    if ratio_is_monotone(report):
        _ok("cmc/cocoa ratio grows with V and N")
    else:
        print(f"{Fore.YELLOW}cmc/cocoa ratio is not strictly increasing over this grid")
    return EXIT_OK


def cmd_export(args, cli_config: CliConfig) -> int:
    dataset = _load_data(args)
    if args.modalities:
        dataset = dataset.select_modalities(args.modalities)
    if args.source == "raw":
        matrix = raw_features(dataset)
    else:
        if not args.checkpoint:
            raise InputError(f"--source {args.source} needs --checkpoint")
        matrix = embed(load_checkpoint(args.checkpoint), dataset)
    path = export_embeddings(matrix, dataset.labels, args.out)
    _ok(f"Exported {matrix.shape[0]} x {matrix.shape[1]} {args.source} features to {path}")
    return EXIT_OK


def cmd_modality_pairs(args, cli_config: CliConfig) -> int:
    config = _train_config(args, cli_config)
    report = modality_pair_runs(_load_data(args), config, _sink(args), args.jobs)
    _header(f"Modality pairs: {config.method}")
    for pair, score in report.pair_scores.items():
        print(f"  {'+'.join(pair):<20} F1 {score:.4f}")
    _ok(f"Mean over pairs: {report.pair_mean:.4f}")
    if report.all_mean is not None:
        _ok(f"All modalities: {report.all_mean:.4f}")
    return EXIT_OK


def cmd_tau_sweep(args, cli_config: CliConfig) -> int:
    config = _train_config(args, cli_config)
    report = tau_sweep(_load_data(args), config, args.taus, _sink(args), args.jobs)
    _header(f"Temperature sweep: {config.method}")
    for tau in sorted(report.mean_val_f1):
        print(f"  tau {tau:<6g} val F1 {report.mean_val_f1[tau]:.4f}  test F1 {report.mean_test_f1[tau]:.4f}")
    _ok(f"Best tau: {report.best_tau:g}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "probe": cmd_probe,
    "finetune": cmd_finetune,
    "label-curve": cmd_label_curve,
    "batch-sweep": cmd_batch_sweep,
    "bench": cmd_bench,
    "export-embeddings": cmd_export,
    "modality-pairs": cmd_modality_pairs,
    "tau-sweep": cmd_tau_sweep,
}


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse ``argv`` and run the chosen subcommand.

    Returns:
        int: 0 on success, 1 for invalid input or usage, 2 for runtime failures
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"{Fore.RED}Error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as e:
        return int(e.code or 0)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    setup_logging(level, args.log_file)
    np.seterr(over="warn", invalid="warn")

    try:
        return COMMANDS[args.command](args, load_config(args.config))
    except ValidationError as e:
        logger.debug("Validation failure", exc_info=True)
        print(f"{Fore.RED}✗ {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        print(f"\n{Fore.YELLOW}Interrupted by user", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.debug("Runtime failure", exc_info=True)
        print(f"{Fore.RED}✗ {type(e).__name__}: {e}{Style.RESET_ALL}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(dispatch())
