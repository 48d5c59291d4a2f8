# for internal use only
"""End-to-end pipeline, evaluation statistics and learning curves."""

from __future__ import annotations

import dataclasses
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from neural_tomography import _io
from neural_tomography._common import child_rng
from neural_tomography._denoiser import (
    TrainConfig,
    fit,
    init_params,
    kl_loss,
    predict_array,
    train,
)
from neural_tomography._errors import (
    DimensionMismatchError,
    IdMismatchError,
    InsufficientDataError,
    PipelineStageError,
    UsageError,
)
from neural_tomography._mle import Estimate, MleConfig, pure_from_result, reconstruct_batch
from neural_tomography._optics import gouy_unitary
from neural_tomography._povm import SicSearchConfig, build_sic
from neural_tomography._process import calibrate_gouy
from neural_tomography._quantum import Povm, ProbDistribution, fidelity, purity
from neural_tomography._sampler import (
    DatasetConfig,
    generate_dataset,
    inputs_and_targets,
    resample_records,
    split_records,
)

TYPE_CHECKING = False
if TYPE_CHECKING:
    from collections.abc import Iterator, Mapping, Sequence
    from pathlib import Path
    from typing import Any

    from neural_tomography._common import IntArray, RealArray
    from neural_tomography._quantum import PureState
    from neural_tomography._sampler import TomographyRecord

_log = logging.getLogger(__name__)

HISTOGRAM_BIN_WIDTH = 0.01
HISTOGRAM_EDGES = np.linspace(0.0, 1.0, 101)


def _values(dist: ProbDistribution | RealArray) -> RealArray:
    if isinstance(dist, ProbDistribution):
        return dist.values
    return np.asarray(dist, dtype=np.float64)


def bhattacharyya(
    target: ProbDistribution | RealArray, predicted: ProbDistribution | RealArray
) -> float:
    """Classical fidelity ``Σ √(𝕡·p)``; rows of a batch are averaged."""
    t = _values(target)
    p = _values(predicted)
    if t.shape != p.shape:
        raise DimensionMismatchError(f"distribution shapes differ: {t.shape} != {p.shape}")
    return float(np.clip(np.mean(np.sum(np.sqrt(t * p), axis=-1)), 0.0, 1.0))


# Evaluation
# ==========
def metric_name(kind: str, arm: str, pure: bool) -> str:
    return f"{kind}_pure_{arm}" if pure else f"{kind}_{arm}"


@dataclass(eq=False)
class EvaluationReport:
    """Per-record metric columns aligned with ``ids``, their mean ± sample std and histograms.

    Columns are named ``fidelity_<arm>``, ``purity_<arm>`` and ``fidelity_pure_<arm>``.
    """

    ids: tuple[int, ...]
    columns: dict[str, RealArray]
    histograms: dict[str, IntArray] = field(default_factory=dict)
    bin_edges: RealArray = field(default_factory=lambda: HISTOGRAM_EDGES.copy())

    @property
    def aggregates(self) -> dict[str, tuple[float, float]]:
        out = {}
        for name, values in self.columns.items():
            std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
            out[name] = (float(np.mean(values)), std)
        return out

    def mean(self, name: str) -> float:
        return self.aggregates[name][0]

    def to_json(self) -> dict[str, Any]:
        names = sorted(self.columns)
        return {
            "n_records": len(self.ids),
            "aggregates": {n: {"mean": m, "std": s} for n, (m, s) in self.aggregates.items()},
            "records": [
                {"id": record_id, **{n: float(self.columns[n][k]) for n in names}}
                for k, record_id in enumerate(self.ids)
            ],
            "histogram_bin_width": HISTOGRAM_BIN_WIDTH,
        }


def evaluate(estimates: Sequence[Estimate], truths: Mapping[int, PureState]) -> EvaluationReport:
    """Fidelity with the true state and purity of every estimate, grouped into metric columns.

    Every column must cover the same record ids, and every id must have a known true state.
    """
    cells: dict[str, dict[int, float]] = {}

    def put(name: str, record_id: int, value: float) -> None:
        column = cells.setdefault(name, {})
        if record_id in column:
            raise IdMismatchError(f"duplicate estimate for record {record_id} in {name}")
        column[record_id] = value

    for estimate in estimates:
        if estimate.id not in truths:
            raise IdMismatchError(f"no true state for record {estimate.id}")
        truth = truths[estimate.id]
        name = metric_name("fidelity", estimate.arm, estimate.pure)
        put(name, estimate.id, fidelity(truth, estimate.rho))
        if not estimate.pure:
            put(f"purity_{estimate.arm}", estimate.id, purity(estimate.rho))
    if not cells:
        raise IdMismatchError("no estimates to evaluate")
    id_sets = {frozenset(column) for column in cells.values()}
    if len(id_sets) != 1:
        raise IdMismatchError("metric columns cover different record ids")
    ids = tuple(sorted(next(iter(id_sets))))
    columns = {name: np.array([column[i] for i in ids]) for name, column in cells.items()}
    histograms = {name: np.histogram(v, HISTOGRAM_EDGES)[0] for name, v in columns.items()}
    return EvaluationReport(ids, columns, histograms)


# Pipeline
# ========
@dataclass(frozen=True)
class PipelineConfig:
    """Every setting of an end-to-end run.

    ``seed`` overrides the seeds of the dataset and training configs. ``test_shots`` measures
    the test states again at another shot count before evaluation.
    """

    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    mle: MleConfig = field(default_factory=MleConfig)
    output_dir: Path | None = None
    seed: int = 0
    test_shots: int | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if sum(self.train.split) != self.dataset.n_states:
            raise UsageError(
                f"split {self.train.split} does not partition {self.dataset.n_states} states"
            )
        if self.test_shots is not None and self.test_shots < 0:
            raise UsageError("test_shots must be non-negative")
        if self.output_dir is not None and self.output_dir.is_file():
            raise UsageError(f"{self.output_dir} is not a directory")

    @property
    def spam(self) -> str:
        return self.dataset.spam


OUTPUT_FILES = {
    "dataset": "dataset.jsonl",
    "weights": "weights.json",
    "history": "history.csv",
    "estimates": "estimates.jsonl",
    "chi": "chi.json",
    "report": "report.json",
    "histograms": "hist.csv",
}


class _Stages:
    """Runs named stages, tags their failures and removes what they wrote on failure."""

    def __init__(self, output_dir: Path | None) -> None:
        self.output_dir = output_dir
        self.written: list[Path] = []
        self.created_dir = False

    def path(self, key: str) -> Path:
        assert self.output_dir is not None
        path = self.output_dir / OUTPUT_FILES[key]
        self.written.append(path)
        return path

    def prepare(self) -> None:
        if self.output_dir is not None and not self.output_dir.exists():
            self.output_dir.mkdir(parents=True)
            self.created_dir = True

    def cleanup(self) -> None:
        for path in self.written:
            if path.exists():
                path.unlink()
        if self.created_dir and self.output_dir is not None and not any(self.output_dir.iterdir()):
            self.output_dir.rmdir()

    @contextmanager
    def run(self, stage: str) -> Iterator[None]:
        _log.info("Stage %s", stage)
        try:
            yield
        except PipelineStageError:
            raise
        except Exception as e:
            self.cleanup()
            raise PipelineStageError(stage, e) from e


def _reconstruct_arm(
    arm: str,
    rows: RealArray,
    record_ids: Sequence[int],
    povm: Povm,
    config: PipelineConfig,
) -> list[Estimate]:
    """Mixed and pure-constrained estimates of every row, tagged with ``arm``."""
    mixed_config = dataclasses.replace(config.mle, enforce_pure=False)
    mixed = reconstruct_batch(rows, povm, mixed_config, config.workers)
    estimates = []
    for record_id, row, result in zip(record_ids, rows, mixed):
        estimates.append(Estimate.from_result(record_id, arm, result))
        pure = pure_from_result(result, row, povm)[1]
        estimates.append(Estimate.from_result(record_id, arm, pure, pure=True))
    return estimates


def corrected_povm(povm: Povm, phases: tuple[float, float]) -> Povm:
    """``E₁ M_j E₁†`` for the Gouy unitary ``E₁`` of ``phases``."""
    unitary = gouy_unitary(*phases)
    elements = np.einsum("ij,kjl,ml->kim", unitary, povm.elements, unitary.conj())
    vectors = None if povm.vectors is None else povm.vectors @ unitary.T
    return Povm(elements, povm.labels, povm.kind, vectors)


def run_pipeline(config: PipelineConfig, povm: Povm | None = None) -> EvaluationReport:
    """Generate, train, reconstruct every test record with each arm, evaluate and write outputs.

    A failing stage raises ``PipelineStageError`` and the files written so far are removed.
    """
    stages = _Stages(config.output_dir)
    dataset_config = dataclasses.replace(config.dataset, seed=config.seed)
    train_config = dataclasses.replace(config.train, seed=config.seed)
    scenario = dataset_config.scenario
    with stages.run("setup"):
        stages.prepare()
    with stages.run("povm"):
        if povm is None:
            povm = build_sic(SicSearchConfig(dim=dataset_config.dim))
    with stages.run("dataset"):
        records = generate_dataset(dataset_config, povm)
        if config.output_dir is not None:
            _io.save_dataset(records, stages.path("dataset"))
    with stages.run("train"):
        params, history = train(records, train_config)
        if config.output_dir is not None:
            _io.save_weights(params, stages.path("weights"), dataclasses.asdict(train_config))
            _io.save_history(history, stages.path("history"))
    with stages.run("predict"):
        _, _, test = split_records(records, train_config.split)
        if config.test_shots is not None:
            test = resample_records(test, povm, scenario.spam, config.test_shots, config.seed)
        inputs, _ = inputs_and_targets(test)
        predictions = predict_array(params, inputs)
        ids = [record.id for record in test]
    with stages.run("reconstruct"):
        estimates = _reconstruct_arm("raw", inputs, ids, povm, config)
        estimates += _reconstruct_arm("nn", predictions, ids, povm, config)
    if scenario.calibrated and scenario.spam.gouy is not None:
        with stages.run("calibrate"):
            shots = dataset_config.shots
            rng = child_rng(config.seed, "process")
            calibration = calibrate_gouy(povm, scenario.spam.gouy, shots=shots, rng=rng)
            phases = (calibration.phases.phi1, calibration.phases.phi2)
            corrected = corrected_povm(povm, phases)
            estimates += _reconstruct_arm("calibrated", inputs, ids, corrected, config)
            if config.output_dir is not None:
                chi_path = stages.path("chi")
                _io.save_chi(calibration.chi, calibration.e1, calibration.phases, chi_path)
    with stages.run("evaluate"):
        truths = {record.id: record.true_state for record in test if record.true_state is not None}
        report = evaluate(estimates, truths)
    if config.output_dir is not None:
        with stages.run("write"):
            _io.save_estimates(estimates, stages.path("estimates"), truths)
            _io.save_report(report, stages.path("report"))
            _io.save_histograms(report, stages.path("histograms"))
    _log.info(
        "Pipeline done: fidelity raw %.4f, nn %.4f",
        report.mean("fidelity_raw"), report.mean("fidelity_nn"),
    )  # fmt: skip
    return report


# Learning curve
# ==============
class CurveRow(NamedTuple):
    fraction: float
    mean_kl: float
    std_kl: float
    mean_bhattacharyya: float
    std_bhattacharyya: float


def fraction_grid(start: float, stop: float, step: float) -> list[float]:
    """Inclusive grid ``start, start+step, …, stop`` rounded to 10 decimals."""
    if step <= 0 or start <= 0 or stop > 1 or start > stop:
        raise UsageError(f"invalid fraction range {start}:{stop}:{step}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 10) for k in range(count)]


def _std(values: Sequence[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def learning_curve(
    dataset: Sequence[TomographyRecord],
    fractions: Sequence[float],
    repeats: int = 5,
    config: TrainConfig | None = None,
    epochs: int = 200,
    test_size: int = 2000,
    seed: int = 0,
) -> list[CurveRow]:
    """Test-set KL and Bhattacharyya fidelity against the fraction of training data used.

    Each repeat draws its own held-out test set; the remaining ``K`` records form the pool from
    which every fraction ``η`` samples ``η·K`` training records. A fresh network then trains for
    ``epochs`` epochs without validation. Metrics are averaged over repeats.
    """
    config = config or TrainConfig()
    if repeats < 1:
        raise UsageError("repeats must be at least 1")
    if not fractions or any(not 0 < eta <= 1 for eta in fractions):
        raise UsageError("fractions must lie in (0, 1]")
    if not 0 < test_size < len(dataset):
        raise UsageError(f"a test set of {test_size} does not fit {len(dataset)} records")
    pool_size = len(dataset) - test_size
    sizes = [int(round(eta * pool_size)) for eta in fractions]
    if min(sizes) < config.batch_size:
        raise InsufficientDataError(
            f"{min(sizes)} training records is less than one batch of {config.batch_size}"
        )
    records = list(dataset)
    kl: list[list[float]] = [[] for _ in fractions]
    bc: list[list[float]] = [[] for _ in fractions]
    for r in range(repeats):
        order = child_rng(seed, "curve", r).permutation(len(records))
        test_x, test_y = inputs_and_targets([records[k] for k in order[:test_size]])
        pool = order[test_size:]
        for i, size in enumerate(sizes):
            chosen = child_rng(seed, "curve", r, i + 1).choice(pool, size=size, replace=False)
            train_x, train_y = inputs_and_targets([records[k] for k in chosen])
            cell = dataclasses.replace(config, seed=seed * 1_000_003 + r * 1009 + i)
            rng = child_rng(cell.seed, "init")
            params = init_params(train_x.shape[1], cell.hidden, cell.dropout_p, rng)
            fit(params, train_x, train_y, cell, max_epochs=epochs)
            predicted = predict_array(params, test_x)
            kl[i].append(kl_loss(test_y, predicted))
            bc[i].append(bhattacharyya(test_y, predicted))
            _log.info(
                "learning curve: repeat %d, fraction %g (%d records): KL %.5f, B %.5f",
                r, fractions[i], size, kl[i][-1], bc[i][-1],
            )  # fmt: skip
    return [
        CurveRow(float(eta), float(np.mean(kl[i])), _std(kl[i]), float(np.mean(bc[i])), _std(bc[i]))
        for i, eta in enumerate(fractions)
    ]
