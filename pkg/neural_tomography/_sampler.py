# for internal use only
"""Finite-statistics measurement simulation and dataset assembly."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from neural_tomography._common import child_rng
from neural_tomography._errors import DimensionMismatchError, InvalidStateError, UsageError
from neural_tomography._optics import effective_povm, get_scenario
from neural_tomography._povm import SicSearchConfig, build_sic
from neural_tomography._quantum import ProbDistribution, born_probabilities, haar_random_pure

TYPE_CHECKING = False
if TYPE_CHECKING:
    from collections.abc import Sequence

    from neural_tomography._common import IntArray, RealArray, SeedLike
    from neural_tomography._optics import SpamModel, SpamScenario
    from neural_tomography._quantum import Povm, PureState

_log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TomographyRecord:
    """One measured state: ideal SIC probabilities and the corrupted frequencies actually seen.

    ``shots == 0`` marks exact mode: ``noisy_freqs`` are the exact effective probabilities and
    there are no counts.
    """

    id: int
    true_state: PureState | None
    ideal_probs: ProbDistribution
    noisy_freqs: RealArray
    counts: IntArray | None
    shots: int

    def __post_init__(self) -> None:
        freqs = np.array(self.noisy_freqs, dtype=np.float64).reshape(-1)
        if freqs.size != len(self.ideal_probs):
            raise DimensionMismatchError(
                f"record {self.id}: {freqs.size} frequencies for {len(self.ideal_probs)} outcomes"
            )
        if self.shots < 0:
            raise UsageError(f"record {self.id}: negative shot count")
        if self.counts is not None:
            counts = np.array(self.counts, dtype=np.int64).reshape(-1)
            if counts.size != freqs.size or np.any(counts < 0) or counts.sum() != self.shots:
                raise InvalidStateError(f"record {self.id}: counts do not sum to {self.shots} shots")
            if not np.allclose(freqs, counts / self.shots, rtol=0, atol=1e-15):
                raise InvalidStateError(f"record {self.id}: frequencies differ from counts/shots")
            counts.setflags(write=False)
            object.__setattr__(self, "counts", counts)
        elif self.shots != 0:
            raise InvalidStateError(f"record {self.id}: counts are required when shots > 0")
        freqs.setflags(write=False)
        object.__setattr__(self, "noisy_freqs", freqs)

    @property
    def is_exact(self) -> bool:
        return self.shots == 0


@dataclass(frozen=True)
class DatasetConfig:
    """Dataset size, statistics and SPAM scenario.

    ``shots = 0`` selects exact mode (infinite statistics).
    """

    dim: int = 6
    n_states: int = 10_500
    shots: int = 10_000
    spam: str = "gouy"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_states < 1:
            raise UsageError("a dataset needs at least one state")
        if self.shots < 0:
            raise UsageError("shots must be non-negative (0 selects exact mode)")
        get_scenario(self.spam)

    @property
    def scenario(self) -> SpamScenario:
        return get_scenario(self.spam)


def sample_counts(probs: ProbDistribution, shots: int, rng: np.random.Generator) -> IntArray:
    """Multinomial outcome counts of ``shots`` independent measurements."""
    return rng.multinomial(shots, probs.values).astype(np.int64)


def measure(
    record_id: int,
    state: PureState,
    ideal: Povm,
    effective: Povm,
    shots: int,
    rng: np.random.Generator | None,
) -> TomographyRecord:
    rho = state.projector()
    ideal_probs = born_probabilities(rho, ideal)
    seen = born_probabilities(rho, effective)
    if shots == 0:
        return TomographyRecord(record_id, state, ideal_probs, seen.values, None, 0)
    assert rng is not None
    counts = sample_counts(seen, shots, rng)
    return TomographyRecord(record_id, state, ideal_probs, counts / shots, counts, shots)


def generate_dataset(config: DatasetConfig, povm: Povm | None = None) -> list[TomographyRecord]:
    """Haar-random states measured through the scenario's SPAM-corrupted POVM.

    Record ``i`` draws its state and its counts from child streams of ``config.seed`` keyed by
    ``i``, so every record is reproducible on its own.
    """
    ideal = povm if povm is not None else build_sic(SicSearchConfig(dim=config.dim))
    if ideal.dim != config.dim:
        raise DimensionMismatchError(f"POVM dimension {ideal.dim} != dataset dimension {config.dim}")
    effective = effective_povm(ideal, config.scenario.spam)
    records = []
    for i in range(config.n_states):
        state = haar_random_pure(config.dim, child_rng(config.seed, "state", i))
        counts_rng = child_rng(config.seed, "counts", i) if config.shots else None
        records.append(measure(i, state, ideal, effective, config.shots, counts_rng))
    _log.info(
        "Generated %d records (d=%d, shots=%s, spam=%s)",
        len(records), config.dim, config.shots or "exact", config.spam,
    )  # fmt: skip
    return records


def resample_records(
    records: Sequence[TomographyRecord], povm: Povm, spam: SpamModel, shots: int, seed: SeedLike
) -> list[TomographyRecord]:
    """Measure the same states again with another shot count."""
    effective = effective_povm(povm, spam)
    resampled = []
    for record in records:
        if record.true_state is None:
            raise UsageError(f"record {record.id} has no known state to measure again")
        rng = child_rng(seed, "resample", record.id) if shots else None
        resampled.append(measure(record.id, record.true_state, povm, effective, shots, rng))
    return resampled


def split_records(
    records: Sequence[TomographyRecord], split: tuple[int, int, int]
) -> tuple[list[TomographyRecord], list[TomographyRecord], list[TomographyRecord]]:
    """Contiguous ``(train, validation, test)`` partition in record order."""
    n_train, n_val, n_test = split
    if min(split) < 0 or n_train + n_val + n_test != len(records):
        raise UsageError(f"split {split} does not partition {len(records)} records")
    records = list(records)
    return records[:n_train], records[n_train : n_train + n_val], records[n_train + n_val :]


def inputs_and_targets(records: Sequence[TomographyRecord]) -> tuple[RealArray, RealArray]:
    """Stack noisy frequencies and ideal probabilities into ``(N, K)`` arrays."""
    if not records:
        raise UsageError("no records")
    inputs = np.stack([record.noisy_freqs for record in records])
    targets = np.stack([record.ideal_probs.values for record in records])
    return inputs, targets
