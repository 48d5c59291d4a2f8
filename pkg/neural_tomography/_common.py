# for internal use only
from __future__ import annotations

import numpy as np

TYPE_CHECKING = False
if TYPE_CHECKING:
    from collections.abc import Sequence
    from typing import Union

    import numpy.typing as npt

    ComplexArray = npt.NDArray[np.complex128]
    RealArray = npt.NDArray[np.float64]
    IntArray = npt.NDArray[np.int64]
    SeedLike = Union[int, Sequence[int], np.random.SeedSequence]

# Tolerances shared by every module
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
EIGEN_TOL = 1e-10
NORM_TOL = 1e-12
DISTRIBUTION_TOL = 1e-9
CHANNEL_TOL = 1e-8
PROBABILITY_FLOOR = 1e-12

MAX_DIM = 16

# Stable keys for child random streams
_PURPOSES = {
    "sic": 1,
    "state": 2,
    "counts": 3,
    "init": 4,
    "shuffle": 5,
    "dropout": 6,
    "process": 7,
    "curve": 8,
    "resample": 9,
}


def child_seed(seed: SeedLike, purpose: str, *index: int) -> np.random.SeedSequence:
    """Derive an independent, order-free seed sequence for ``purpose`` and ``index``."""
    if isinstance(seed, np.random.SeedSequence):
        entropy = seed.entropy
        base = tuple(seed.spawn_key)
    else:
        entropy = seed
        base = ()
    return np.random.SeedSequence(entropy, spawn_key=(*base, _PURPOSES[purpose], *index))


def child_rng(seed: SeedLike, purpose: str, *index: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(seed, purpose, *index))


def as_rng(rng: np.random.Generator | SeedLike | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def hermitian_part(matrix: ComplexArray) -> ComplexArray:
    return (matrix + matrix.conj().T) / 2


def circular_mean(angles: RealArray) -> float:
    """Mean direction of ``angles`` (radians), robust to the ±π wrap."""
    return float(np.angle(np.mean(np.exp(1j * np.asarray(angles)))))


def wrap_phase(angle: float) -> float:
    """Wrap ``angle`` into the interval (−π, π]."""
    wrapped = float(np.angle(np.exp(1j * angle)))
    return np.pi if wrapped == -np.pi else wrapped
