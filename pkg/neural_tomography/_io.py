# for internal use only
"""JSON, JSON Lines and CSV formats of POVMs, datasets, weights, estimates and reports."""

from __future__ import annotations

import csv
import json
from contextlib import contextmanager

import numpy as np

from neural_tomography._denoiser import NetworkParams
from neural_tomography._errors import DataFormatError, TomographyError
from neural_tomography._mle import Estimate
from neural_tomography._quantum import (
    DensityMatrix,
    Povm,
    ProbDistribution,
    PureState,
    fidelity,
    purity,
)
from neural_tomography._sampler import TomographyRecord

TYPE_CHECKING = False
if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator, Mapping, Sequence
    from pathlib import Path
    from typing import Any

    from neural_tomography._common import ComplexArray
    from neural_tomography._denoiser import TrainHistory
    from neural_tomography._experiments import CurveRow, EvaluationReport
    from neural_tomography._optics import CrosstalkMatrix
    from neural_tomography._process import ChiMatrix, GouyPhases


CURVE_COLUMNS = ("fraction", "mean_kl", "std_kl", "mean_bhattacharyya", "std_bhattacharyya")


def encode_complex(array: ComplexArray) -> dict[str, Any]:
    """``{"re": ..., "im": ...}`` nested lists in row-major order."""
    array = np.asarray(array, dtype=np.complex128)
    return {"re": array.real.tolist(), "im": array.imag.tolist()}


def decode_complex(obj: Any) -> ComplexArray:
    try:
        real = np.asarray(obj["re"], dtype=np.float64)
        imag = np.asarray(obj["im"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"malformed complex array: {e}") from e
    if real.shape != imag.shape:
        raise DataFormatError("real and imaginary parts have different shapes")
    return real + 1j * imag


@contextmanager
def _parsing(path: Path, line: int | None = None) -> Iterator[None]:
    where = f"{path}:{line}" if line is not None else str(path)
    try:
        yield
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{where}: invalid JSON ({e.msg})") from e
    except DataFormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError, TomographyError) as e:
        raise DataFormatError(f"{where}: {type(e).__name__}: {e}") from e


def _dump(obj: Any, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, sort_keys=True, indent=2)
        f.write("\n")


def _load(path: Path) -> Any:
    with open(path, encoding="utf-8") as f, _parsing(path):
        return json.load(f)


def _lines(path: Path) -> Iterator[tuple[int, Any]]:
    with open(path, encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if line.strip():
                with _parsing(path, number):
                    yield number, json.loads(line)


# POVMs
# =====
def save_povm(povm: Povm, path: Path) -> None:
    _dump(
        {
            "dim": povm.dim,
            "kind": povm.kind,
            "labels": list(povm.labels),
            "elements": encode_complex(povm.elements),
            "vectors": None if povm.vectors is None else encode_complex(povm.vectors),
        },
        path,
    )


def load_povm(path: Path) -> Povm:
    obj = _load(path)
    with _parsing(path):
        vectors = None if obj.get("vectors") is None else decode_complex(obj["vectors"])
        povm = Povm(decode_complex(obj["elements"]), tuple(obj["labels"]), obj["kind"], vectors)
        if povm.dim != obj["dim"]:
            raise DataFormatError(f"{path}: declared dimension {obj['dim']} != {povm.dim}")
    return povm


# Datasets
# ========
def _record_to_json(record: TomographyRecord) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "id": record.id,
        "ideal_probs": record.ideal_probs.values.tolist(),
        "shots": record.shots,
    }
    if record.true_state is not None:
        obj["state"] = encode_complex(record.true_state.amplitudes)
    if record.counts is not None:
        obj["counts"] = record.counts.tolist()
    else:
        obj["freqs"] = record.noisy_freqs.tolist()
    return obj


def _record_from_json(obj: Mapping[str, Any]) -> TomographyRecord:
    state = PureState(decode_complex(obj["state"])) if "state" in obj else None
    shots = int(obj["shots"])
    ideal = ProbDistribution(obj["ideal_probs"])
    if shots:
        counts = np.asarray(obj["counts"], dtype=np.int64)
        return TomographyRecord(int(obj["id"]), state, ideal, counts / shots, counts, shots)
    freqs = np.asarray(obj["freqs"], dtype=np.float64)
    return TomographyRecord(int(obj["id"]), state, ideal, freqs, None, 0)


def save_dataset(records: Iterable[TomographyRecord], path: Path) -> None:
    """One record per line; frequencies are stored only in exact mode."""
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(_record_to_json(record), sort_keys=True) + "\n")


def load_dataset(path: Path) -> list[TomographyRecord]:
    records = []
    for number, obj in _lines(path):
        with _parsing(path, number):
            records.append(_record_from_json(obj))
    return records


# Network weights and training history
# ====================================
def save_weights(
    params: NetworkParams, path: Path, config_echo: Mapping[str, Any] | None = None
) -> None:
    layers = [
        {"rows": int(w.shape[0]), "cols": int(w.shape[1]), "w": w.ravel().tolist(), "b": b.tolist()}
        for w, b in params.layers
    ]
    dim = int(round(np.sqrt(params.n_inputs)))
    obj = {"dim": dim, "layers": layers, "dropout_p": params.dropout_p}
    obj["train_config_echo"] = dict(config_echo or {})
    _dump(obj, path)


def load_weights(path: Path) -> NetworkParams:
    obj = _load(path)
    with _parsing(path):
        layers = [
            (
                np.asarray(layer["w"], dtype=np.float64).reshape(layer["rows"], layer["cols"]),
                np.asarray(layer["b"], dtype=np.float64),
            )
            for layer in obj["layers"]
        ]
        return NetworkParams(layers, float(obj["dropout_p"]))


def save_history(history: TrainHistory, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, train_loss in enumerate(history.train_loss):
            val = repr(float(history.val_loss[epoch])) if epoch < len(history.val_loss) else ""
            writer.writerow([epoch, repr(float(train_loss)), val])


# Estimates
# =========
def save_estimates(
    estimates: Iterable[Estimate],
    path: Path,
    truths: Mapping[int, PureState] | None = None,
    append: bool = False,
) -> None:
    with open(path, "a" if append else "w", encoding="utf-8") as f:
        for estimate in estimates:
            obj: dict[str, Any] = {
                "id": estimate.id,
                "arm": estimate.arm,
                "pure": estimate.pure,
                "rho": encode_complex(estimate.rho.matrix),
                "purity": purity(estimate.rho),
                "iterations": estimate.iterations,
                "converged": estimate.converged,
            }
            if truths is not None and estimate.id in truths:
                obj["fidelity"] = fidelity(truths[estimate.id], estimate.rho)
            f.write(json.dumps(obj, sort_keys=True) + "\n")


def load_estimates(path: Path) -> list[Estimate]:
    estimates = []
    for number, obj in _lines(path):
        with _parsing(path, number):
            estimates.append(
                Estimate(
                    int(obj["id"]),
                    str(obj.get("arm", "raw")),
                    DensityMatrix(decode_complex(obj["rho"])),
                    int(obj.get("iterations", 0)),
                    bool(obj.get("converged", True)),
                    bool(obj.get("pure", False)),
                )
            )
    return estimates


# Process tomography
# ==================
def save_chi(chi: ChiMatrix, e1: ComplexArray, phases: GouyPhases | None, path: Path) -> None:
    obj: dict[str, Any] = {
        "dim": chi.dim,
        "chi": encode_complex(chi.chi),
        "eigenvalues": chi.eigenvalues.tolist(),
        "weights": chi.weights.tolist(),
        "residual": chi.residual,
        "model_mismatch": chi.model_mismatch,
        "e1": encode_complex(e1),
    }
    if phases is not None:
        obj["gouy"] = {
            "phi1": phases.phi1,
            "phi2": phases.phi2,
            "per_mode": list(phases.per_mode),
            "spreads": list(phases.spreads),
        }
    _dump(obj, path)


# Reports
# =======
def save_report(report: EvaluationReport, path: Path) -> None:
    _dump(report.to_json(), path)


def save_histograms(report: EvaluationReport, path: Path) -> None:
    columns = sorted(report.histograms)
    edges = report.bin_edges
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_left", "bin_right", *columns])
        for k in range(edges.size - 1):
            row = [f"{edges[k]:.2f}", f"{edges[k + 1]:.2f}"]
            writer.writerow(row + [int(report.histograms[c][k]) for c in columns])


def save_curve(rows: Sequence[CurveRow], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CURVE_COLUMNS)
        for row in rows:
            writer.writerow([repr(float(getattr(row, name))) for name in CURVE_COLUMNS])


def save_crosstalk(matrix: CrosstalkMatrix, path: Path, labels: Sequence[str] = ()) -> None:
    """Rows are outcomes, columns are probe states."""
    probes = list(labels) or [f"probe{i}" for i in range(matrix.probs.shape[1])]
    outcomes = matrix.labels or tuple(str(j) for j in range(matrix.probs.shape[0]))
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["outcome", *probes])
        for label, row in zip(outcomes, matrix.probs):
            writer.writerow([label, *(repr(float(v)) for v in row)])
