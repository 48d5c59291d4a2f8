# for internal use only
"""Command-line interface: one subcommand per pipeline stage plus the full run."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from rich_argparse import ArgumentDefaultsRichHelpFormatter

import neural_tomography._lazy_rich as r
from neural_tomography import _io
from neural_tomography._common import child_rng
from neural_tomography._denoiser import TrainConfig, predict_array, train
from neural_tomography._errors import DimensionMismatchError, TomographyError
from neural_tomography._experiments import (
    PipelineConfig,
    evaluate,
    fraction_grid,
    learning_curve,
    run_pipeline,
)
from neural_tomography._mle import Estimate, MleConfig, reconstruct_batch
from neural_tomography._optics import (
    HG_BASIS,
    SPAM_ALIASES,
    SPAM_SCENARIOS,
    DetectionModel,
    SpamModel,
    crosstalk_matrix,
    effective_povm,
    gouy_channel,
    similarity,
)
from neural_tomography._povm import SicSearchConfig, build_sic, computational_basis_povm
from neural_tomography._process import (
    default_probes,
    dominant_kraus,
    extract_gouy_phases,
    reconstruct_process,
    simulate_process_data,
)
from neural_tomography._quantum import KrausChannel, unitary_channel
from neural_tomography._sampler import DatasetConfig, generate_dataset, inputs_and_targets

TYPE_CHECKING = False
if TYPE_CHECKING:
    from collections.abc import Sequence
    from typing import Any, Callable, ClassVar

    from neural_tomography._experiments import CurveRow, EvaluationReport
    from neural_tomography._process import ChiMatrix, GouyPhases
    from neural_tomography._quantum import Povm

_log = logging.getLogger(__name__)
_handler: logging.Handler | None = None

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


class ReportConsole:
    """Rich tables for command summaries printed on stdout."""

    styles: ClassVar[dict[str, str]] = {
        "nt.title": "bold",
        "nt.metric": "cyan",
        "nt.value": "default",
        "nt.path": "magenta",
    }
    """Table styles. Change them to customise the summaries."""

    def __init__(self, console: r.Console | None = None) -> None:
        self.console = console or r.Console()

    def _table(self, title: str, *columns: str) -> r.Table:
        table = r.Table(title=title, title_style=self.styles["nt.title"])
        table.add_column(columns[0], style=self.styles["nt.metric"])
        for column in columns[1:]:
            table.add_column(column, style=self.styles["nt.value"], justify="right")
        return table

    def evaluation(self, report: EvaluationReport) -> None:
        table = self._table(f"Evaluation ({len(report.ids)} records)", "metric", "mean", "std")
        for name, (mean, std) in sorted(report.aggregates.items()):
            table.add_row(name, f"{mean:.4f}", f"{std:.4f}")
        self.console.print(table)

    def gouy(self, chi: ChiMatrix, phases: GouyPhases | None) -> None:
        table = self._table("Process tomography", "quantity", "value")
        table.add_row("dominant weight", f"{chi.weights[0]:.6f}")
        table.add_row("projection residual", f"{chi.residual:.2e}")
        if phases is not None:
            table.add_row("phi1 (order 1)", f"{phases.phi1:.4f} ± {phases.spreads[0]:.4f}")
            table.add_row("phi2 (order 2)", f"{phases.phi2:.4f} ± {phases.spreads[1]:.4f}")
            for mode, phase in zip(HG_BASIS, phases.per_mode):
                table.add_row(str(mode), f"{phase:.4f}")
        self.console.print(table)

    def curve(self, rows: Sequence[CurveRow]) -> None:
        table = self._table("Learning curve", "fraction", "KL", "Bhattacharyya")
        for row in rows:
            table.add_row(
                f"{row.fraction:g}",
                f"{row.mean_kl:.5f} ± {row.std_kl:.5f}",
                f"{row.mean_bhattacharyya:.5f} ± {row.std_bhattacharyya:.5f}",
            )
        self.console.print(table)

    def wrote(self, *paths: Path) -> None:
        for path in paths:
            self.console.print(f"wrote [{self.styles['nt.path']}]{r.escape(str(path))}[/]")


# Argument types
# ==============
def int_tuple(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def split_arg(text: str) -> tuple[int, int, int]:
    values = int_tuple(text)
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected train,validation,test counts, got {text!r}")
    return values[0], values[1], values[2]


def fractions_arg(text: str) -> list[float]:
    """``start:stop:step`` (inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, step = (float(part) for part in text.split(":"))
            return fraction_grid(start, stop, step)
        return [float(part) for part in text.split(",")]
    except (ValueError, TomographyError) as e:
        raise argparse.ArgumentTypeError(f"invalid fractions {text!r}: {e}") from None


def channel_arg(text: str) -> KrausChannel:
    """``identity`` or ``gouy:PHI1,PHI2``."""
    name, _, params = text.partition(":")
    try:
        if name == "identity" and not params:
            return unitary_channel(np.eye(len(HG_BASIS)))
        if name == "gouy":
            phi1, phi2 = (float(part) for part in params.split(","))
            return gouy_channel(phi1, phi2)
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"expected 'identity' or 'gouy:PHI1,PHI2', got {text!r}")


# Commands
# ========
def _load_or_build_povm(path: Path | None, dim: int, seed: int) -> Povm:
    if path is not None:
        return _io.load_povm(path)
    return build_sic(SicSearchConfig(dim=dim, seed=seed))


def _train_config(args: argparse.Namespace, split: tuple[int, int, int]) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch_size,
        patience_epochs=args.patience,
        max_epochs=args.max_epochs,
        split=split,
        seed=args.seed,
        eta=args.eta,
        alpha=args.alpha,
        hidden=args.hidden,
        dropout_p=args.dropout,
    )


def cmd_gen_dataset(args: argparse.Namespace, out: ReportConsole) -> None:
    config = DatasetConfig(args.dim, args.states, args.shots, args.spam, args.seed)
    povm = _load_or_build_povm(args.povm, args.dim, 0)
    _io.save_dataset(generate_dataset(config, povm), args.out)
    out.wrote(args.out)


def cmd_build_povm(args: argparse.Namespace, out: ReportConsole) -> None:
    if args.kind == "sic":
        config = SicSearchConfig(
            dim=args.dim, seed=args.seed, restarts=args.restarts, tolerance=args.tolerance
        )
        povm = build_sic(config)
    else:
        povm = computational_basis_povm(args.dim)
    _io.save_povm(povm, args.out)
    out.wrote(args.out)


def cmd_train(args: argparse.Namespace, out: ReportConsole) -> None:
    records = _io.load_dataset(args.data)
    if args.povm is not None:
        povm = _io.load_povm(args.povm)
        if len(povm) != records[0].noisy_freqs.size:
            raise DimensionMismatchError(f"{args.povm} does not match the outcomes of {args.data}")
    config = _train_config(args, args.split)
    params, history = train(records, config)
    echo = {k: str(v) if isinstance(v, Path) else v for k, v in vars(args).items() if k != "func"}
    _io.save_weights(params, args.out, echo)
    out.wrote(args.out)
    if args.history is not None:
        _io.save_history(history, args.history)
        out.wrote(args.history)


def cmd_reconstruct(args: argparse.Namespace, out: ReportConsole) -> None:
    records = _io.load_dataset(args.data)
    povm = _io.load_povm(args.povm)
    rows, _ = inputs_and_targets(records)
    arm = args.arm or ("nn" if args.denoise else "raw")
    if args.denoise is not None:
        rows = predict_array(_io.load_weights(args.denoise), rows)
    config = MleConfig(args.max_iterations, args.tol, enforce_pure=args.pure)
    results = reconstruct_batch(rows, povm, config, args.workers)
    estimates = [
        Estimate.from_result(record.id, arm, result, pure=args.pure)
        for record, result in zip(records, results)
    ]
    truths = {record.id: record.true_state for record in records if record.true_state is not None}
    _io.save_estimates(estimates, args.out, truths, append=args.append)
    out.wrote(args.out)


def cmd_evaluate(args: argparse.Namespace, out: ReportConsole) -> None:
    estimates = [estimate for path in args.estimates for estimate in _io.load_estimates(path)]
    truths = {
        record.id: record.true_state
        for record in _io.load_dataset(args.truth)
        if record.true_state is not None
    }
    report = evaluate(estimates, truths)
    _io.save_report(report, args.out)
    out.wrote(args.out)
    if args.hist is not None:
        _io.save_histograms(report, args.hist)
        out.wrote(args.hist)
    out.evaluation(report)


def cmd_process_tomo(args: argparse.Namespace, out: ReportConsole) -> None:
    povm = _load_or_build_povm(args.povm, len(HG_BASIS), args.seed)
    rng = child_rng(args.seed, "process")
    data = simulate_process_data(args.channel, default_probes(povm), povm, args.shots, rng)
    chi = reconstruct_process(data)
    e1 = dominant_kraus(chi)
    phases = extract_gouy_phases(e1) if povm.dim == len(HG_BASIS) else None
    _io.save_chi(chi, e1, phases, args.out)
    out.wrote(args.out)
    out.gouy(chi, phases)


def cmd_learning_curve(args: argparse.Namespace, out: ReportConsole) -> None:
    records = _io.load_dataset(args.data)
    config = _train_config(args, (len(records), 0, 0))
    rows = learning_curve(
        records, args.fractions, args.repeats, config, args.epochs, args.test_size, args.seed
    )
    _io.save_curve(rows, args.out)
    out.wrote(args.out)
    out.curve(rows)


def cmd_run(args: argparse.Namespace, out: ReportConsole) -> None:
    config = PipelineConfig(
        dataset=DatasetConfig(args.dim, args.states, args.shots, args.spam, args.seed),
        train=_train_config(args, args.split),
        mle=MleConfig(args.max_iterations, args.tol),
        output_dir=args.out_dir,
        seed=args.seed,
        test_shots=args.test_shots,
        workers=args.workers,
    )
    povm = _io.load_povm(args.povm) if args.povm is not None else None
    report = run_pipeline(config, povm)
    out.evaluation(report)


def cmd_crosstalk(args: argparse.Namespace, out: ReportConsole) -> None:
    povm = _load_or_build_povm(args.povm, len(HG_BASIS), args.seed)
    model = DetectionModel(w=args.w, w_f=args.w_fiber, corrected=args.corrected)
    probes = default_probes(povm)
    measured = crosstalk_matrix(probes, effective_povm(povm, SpamModel(detection=model)))
    ideal = crosstalk_matrix(probes, povm)
    _io.save_crosstalk(measured, args.out)
    out.wrote(args.out)
    out.console.print(f"similarity to the ideal crosstalk matrix: {similarity(measured, ideal):.6f}")


# Parser
# ======
class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message: str) -> Any:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_training_options(parser: argparse.ArgumentParser, split: bool = True) -> None:
    group = parser.add_argument_group("training")
    if split:
        group.add_argument("--split", type=split_arg, default=(7000, 1500, 2000), metavar="T,V,S", help="train, validation and test record counts")
    group.add_argument("--eta", type=float, default=1e-3, help="RMSprop learning rate")
    group.add_argument("--alpha", type=float, default=0.1, help="RMSprop decay of the squared-gradient average")
    group.add_argument("--batch-size", type=int, default=40, help="mini-batch size")
    group.add_argument("--max-epochs", type=int, default=2000, help="epoch limit")
    group.add_argument("--patience", type=int, default=100, help="early-stopping patience in epochs")
    group.add_argument("--hidden", type=int_tuple, default=(400, 200), metavar="H1,H2", help="hidden layer widths")
    group.add_argument("--dropout", type=float, default=0.2, help="dropout rate after the first hidden layer")


def _add_mle_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("reconstruction")
    group.add_argument("--max-iterations", type=int, default=5000, help="RρR iteration limit")
    group.add_argument("--tol", type=float, default=1e-10, help="Frobenius convergence tolerance")
    group.add_argument("--workers", type=int, default=1, help="parallel reconstruction threads")


def build_parser() -> ArgumentParser:
    spam_choices = [*SPAM_SCENARIOS, *SPAM_ALIASES]
    parser = ArgumentParser(
        prog="neural-tomography",
        description="Qudit tomography with a denoising network against SPAM errors.",
        formatter_class=ArgumentDefaultsRichHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeat for debug)")
    parser.add_argument("-q", "--quiet", action="store_true", help="log errors only")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, func: Callable[[argparse.Namespace, ReportConsole], None], help: str) -> ArgumentParser:
        sub = subparsers.add_parser(name, help=help, description=help, formatter_class=parser.formatter_class)
        sub.set_defaults(func=func)
        return sub  # type: ignore[no-any-return]

    sub = add("gen-dataset", cmd_gen_dataset, "Simulate a dataset of measured Haar-random states.")
    sub.add_argument("--dim", type=int, default=6, help="qudit dimension")
    sub.add_argument("--states", type=int, default=10_500, help="number of states")
    sub.add_argument("--shots", type=int, default=10_000, help="shots per state (0 = exact)")
    sub.add_argument("--spam", choices=spam_choices, default="gouy", help="SPAM scenario")
    sub.add_argument("--povm", type=Path, help="POVM file (default: build a SIC)")
    sub.add_argument("--seed", type=int, default=0, help="random seed")
    sub.add_argument("--out", type=Path, required=True, help="dataset JSONL file")

    sub = add("build-povm", cmd_build_povm, "Construct a measurement and save it.")
    sub.add_argument("--dim", type=int, default=6, help="qudit dimension")
    sub.add_argument("--kind", choices=["sic", "basis"], default="sic", help="measurement kind")
    sub.add_argument("--seed", type=int, default=0, help="SIC search seed")
    sub.add_argument("--restarts", type=int, default=10, help="SIC search restarts")
    sub.add_argument("--tolerance", type=float, default=1e-7, help="largest allowed overlap deviation")
    sub.add_argument("--out", type=Path, required=True, help="POVM JSON file")

    sub = add("train", cmd_train, "Train the denoising network.")
    sub.add_argument("--data", type=Path, required=True, help="dataset JSONL file")
    sub.add_argument("--povm", type=Path, help="POVM file to check the dataset against")
    sub.add_argument("--seed", type=int, default=0, help="random seed")
    sub.add_argument("--out", type=Path, required=True, help="weights JSON file")
    sub.add_argument("--history", type=Path, help="training history CSV file")
    _add_training_options(sub)

    sub = add("reconstruct", cmd_reconstruct, "Reconstruct density matrices by maximum likelihood.")
    sub.add_argument("--data", type=Path, required=True, help="dataset JSONL file")
    sub.add_argument("--povm", type=Path, required=True, help="POVM JSON file")
    sub.add_argument("--denoise", type=Path, help="weights JSON file; reconstruct from network predictions")
    sub.add_argument("--pure", action="store_true", help="return the dominant-eigenvector estimate")
    sub.add_argument("--arm", help="arm tag of the estimates (default: nn with --denoise, else raw)")
    sub.add_argument("--append", action="store_true", help="append to the estimates file")
    sub.add_argument("--out", type=Path, required=True, help="estimates JSONL file")
    _add_mle_options(sub)

    sub = add("evaluate", cmd_evaluate, "Compare estimates with the true states.")
    sub.add_argument("--estimates", type=Path, action="append", required=True, help="estimates JSONL file (repeatable)")
    sub.add_argument("--truth", type=Path, required=True, help="dataset JSONL file with the true states")
    sub.add_argument("--out", type=Path, required=True, help="report JSON file")
    sub.add_argument("--hist", type=Path, help="histogram CSV file")

    sub = add("process-tomo", cmd_process_tomo, "Process tomography of a simulated channel.")
    sub.add_argument("--channel", type=channel_arg, default="gouy:0.92,1.97", help="'identity' or 'gouy:PHI1,PHI2'")
    sub.add_argument("--shots", type=int, default=0, help="shots per probe (0 = exact)")
    sub.add_argument("--povm", type=Path, help="POVM file (default: build a SIC)")
    sub.add_argument("--seed", type=int, default=0, help="random seed")
    sub.add_argument("--out", type=Path, required=True, help="chi JSON file")

    sub = add("learning-curve", cmd_learning_curve, "Test metrics against the training-data fraction.")
    sub.add_argument("--data", type=Path, required=True, help="dataset JSONL file")
    sub.add_argument("--fractions", type=fractions_arg, default="0.1:1.0:0.1", help="START:STOP:STEP or a comma-separated list")
    sub.add_argument("--repeats", type=int, default=5, help="repeats per fraction")
    sub.add_argument("--epochs", type=int, default=200, help="fixed training budget")
    sub.add_argument("--test-size", type=int, default=2000, help="held-out test records")
    sub.add_argument("--seed", type=int, default=0, help="random seed")
    sub.add_argument("--out", type=Path, required=True, help="curve CSV file")
    _add_training_options(sub, split=False)

    sub = add("run", cmd_run, "Run the whole pipeline: dataset, training, reconstruction, evaluation.")
    sub.add_argument("--dim", type=int, default=6, help="qudit dimension")
    sub.add_argument("--states", type=int, default=10_500, help="number of states")
    sub.add_argument("--shots", type=int, default=10_000, help="shots per state (0 = exact)")
    sub.add_argument("--spam", choices=spam_choices, default="gouy", help="SPAM scenario")
    sub.add_argument("--test-shots", type=int, help="measure the test states again with this many shots")
    sub.add_argument("--povm", type=Path, help="POVM file (default: build a SIC)")
    sub.add_argument("--seed", type=int, default=0, help="master seed")
    sub.add_argument("--out-dir", type=Path, required=True, help="output directory")
    _add_training_options(sub)
    _add_mle_options(sub)

    sub = add("crosstalk", cmd_crosstalk, "Crosstalk matrix of fibre-filtered detection.")
    sub.add_argument("--w", type=float, default=1.0, help="mode waist")
    sub.add_argument("--w-fiber", type=float, default=2.0, help="fibre mode waist")
    sub.add_argument("--corrected", action="store_true", help="use width-compensated holograms")
    sub.add_argument("--povm", type=Path, help="POVM file (default: build a SIC)")
    sub.add_argument("--seed", type=int, default=0, help="SIC search seed")
    sub.add_argument("--out", type=Path, required=True, help="crosstalk CSV file")
    return parser


def configure_logging(verbose: int = 0, quiet: bool = False) -> None:
    """Route package logs through a rich handler on stderr."""
    global _handler
    logger = logging.getLogger("neural_tomography")
    if _handler is not None:
        logger.removeHandler(_handler)
    _handler = r.RichHandler(console=r.Console(stderr=True), show_time=False, show_path=False)
    logger.addHandler(_handler)
    levels = [logging.WARNING, logging.INFO, logging.DEBUG]
    logger.setLevel(logging.ERROR if quiet else levels[min(verbose, 2)])


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        args.func(args, ReportConsole())
    except TomographyError as e:
        _log.error("%s", e)
        return e.exit_code
    except (OSError, json.JSONDecodeError) as e:
        _log.error("%s", e)
        return EXIT_IO
    return EXIT_OK
