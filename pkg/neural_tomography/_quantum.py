# for internal use only
"""Dense linear-algebra primitives: states, measurements, channels and their metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from neural_tomography._common import (
    CHANNEL_TOL,
    DISTRIBUTION_TOL,
    EIGEN_TOL,
    HERMITIAN_TOL,
    MAX_DIM,
    NORM_TOL,
    TRACE_TOL,
    as_rng,
    hermitian_part,
)
from neural_tomography._errors import (
    DimensionMismatchError,
    InconsistentPovmError,
    InvalidChannelError,
    InvalidDimensionError,
    InvalidStateError,
)

TYPE_CHECKING = False
if TYPE_CHECKING:
    from collections.abc import Sequence

    from neural_tomography._common import ComplexArray, RealArray, SeedLike


def as_complex_matrix(
    entries: object, rows: int | None = None, cols: int | None = None
) -> ComplexArray:
    """Coerce ``entries`` into a finite ``complex128`` matrix, optionally of a known shape."""
    matrix = np.array(entries, dtype=np.complex128)
    if rows is not None and cols is not None:
        if matrix.size != rows * cols:
            raise DimensionMismatchError(f"expected {rows * cols} entries, got {matrix.size}")
        matrix = matrix.reshape(rows, cols)
    if matrix.ndim != 2:
        raise DimensionMismatchError(f"expected a matrix, got an array of shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidStateError("matrix has non-finite entries")
    return matrix


def _check_dim(dim: int) -> None:
    if not 2 <= dim <= MAX_DIM:
        raise InvalidDimensionError(f"dimension must be in [2, {MAX_DIM}], got {dim}")


@dataclass(frozen=True, eq=False)
class PureState:
    """A normalised state vector in the canonical basis."""

    amplitudes: ComplexArray

    def __post_init__(self) -> None:
        amplitudes = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        _check_dim(amplitudes.size)
        if not np.all(np.isfinite(amplitudes)):
            raise InvalidStateError("state has non-finite amplitudes")
        norm = np.linalg.norm(amplitudes)
        if abs(norm - 1) > NORM_TOL:
            raise InvalidStateError(f"state is not normalised (norm {norm!r})")
        amplitudes.setflags(write=False)
        object.__setattr__(self, "amplitudes", amplitudes)

    @classmethod
    def from_vector(cls, vector: object) -> PureState:
        """Normalise ``vector`` and wrap it."""
        amplitudes = np.array(vector, dtype=np.complex128).reshape(-1)
        norm = np.linalg.norm(amplitudes)
        if norm == 0 or not np.isfinite(norm):
            raise InvalidStateError("cannot normalise a zero or non-finite vector")
        return cls(amplitudes / norm)

    @property
    def dim(self) -> int:
        return int(self.amplitudes.size)

    def projector(self) -> DensityMatrix:
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A Hermitian, unit-trace, positive semidefinite operator.

    Eigenvalues in ``[-1e-10, 0)`` are round-off from iterative estimators: they are clipped to
    zero and the matrix renormalised. Anything more negative is rejected.
    """

    matrix: ComplexArray

    def __post_init__(self) -> None:
        matrix = as_complex_matrix(self.matrix)
        dim = matrix.shape[0]
        if matrix.shape != (dim, dim):
            raise DimensionMismatchError(f"density matrix must be square, got {matrix.shape}")
        _check_dim(dim)
        if np.max(np.abs(matrix - matrix.conj().T)) > HERMITIAN_TOL:
            raise InvalidStateError("density matrix is not Hermitian")
        trace = np.trace(matrix).real
        if abs(trace - 1) > TRACE_TOL:
            raise InvalidStateError(f"density matrix trace is {trace!r}, expected 1")
        matrix = hermitian_part(matrix)
        eigenvalues, eigenvectors = np.linalg.eigh(matrix)
        if eigenvalues[0] < -EIGEN_TOL:
            raise InvalidStateError(f"density matrix has eigenvalue {eigenvalues[0]!r} < 0")
        if eigenvalues[0] < 0:
            eigenvalues = np.clip(eigenvalues, 0, None)
            eigenvalues /= eigenvalues.sum()
            matrix = (eigenvectors * eigenvalues) @ eigenvectors.conj().T
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_matrix(cls, matrix: object) -> DensityMatrix:
        """Hermitise and trace-normalise ``matrix`` before validating it."""
        array = hermitian_part(as_complex_matrix(matrix))
        return cls(array / np.trace(array).real)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    def eigenvalues(self) -> RealArray:
        return np.linalg.eigvalsh(self.matrix)


@dataclass(frozen=True, eq=False)
class ProbDistribution:
    values: RealArray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise InvalidStateError("probabilities must be finite and non-negative")
        if abs(values.sum() - 1) > DISTRIBUTION_TOL:
            raise InvalidStateError(f"probabilities sum to {values.sum()!r}, expected 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True, eq=False)
class Povm:
    """Positive operators ``elements[γ]`` that sum to the identity."""

    elements: ComplexArray
    labels: tuple[str, ...] = ()
    kind: str = "custom"
    vectors: ComplexArray | None = field(default=None, repr=False)
    """Measurement directions of a rank-one POVM, ``M_γ = (1/d)|φ_γ⟩⟨φ_γ|``, when known."""

    def __post_init__(self) -> None:
        elements = np.array(self.elements, dtype=np.complex128)
        if elements.ndim != 3 or elements.shape[1] != elements.shape[2]:
            raise DimensionMismatchError(f"POVM elements must be (K, d, d), got {elements.shape}")
        _check_dim(elements.shape[1])
        if not np.all(np.isfinite(elements)):
            raise InconsistentPovmError("POVM has non-finite entries")
        if np.max(np.abs(elements - elements.conj().transpose(0, 2, 1))) > HERMITIAN_TOL:
            raise InconsistentPovmError("POVM elements are not Hermitian")
        elements = hermitian_part_batch(elements)
        if np.min(np.linalg.eigvalsh(elements)) < -EIGEN_TOL:
            raise InconsistentPovmError("POVM element is not positive semidefinite")
        residual = np.max(np.abs(elements.sum(axis=0) - np.eye(elements.shape[1])))
        if residual > HERMITIAN_TOL:
            raise InconsistentPovmError(f"POVM completeness residual {residual:.3e}")
        labels = tuple(self.labels) or tuple(str(k) for k in range(elements.shape[0]))
        if len(labels) != elements.shape[0]:
            raise DimensionMismatchError("one label per POVM element is required")
        elements.setflags(write=False)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "labels", labels)
        if self.vectors is not None:
            vectors = np.array(self.vectors, dtype=np.complex128)
            vectors.setflags(write=False)
            object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self) -> int:
        return int(self.elements.shape[1])

    def __len__(self) -> int:
        return int(self.elements.shape[0])

    def permuted(self, order: Sequence[int]) -> Povm:
        order = list(order)
        vectors = None if self.vectors is None else self.vectors[order]
        return Povm(self.elements[order], tuple(self.labels[k] for k in order), self.kind, vectors)


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """A trace-preserving map ``ρ ↦ Σ_k E_k ρ E_k†``."""

    operators: ComplexArray

    def __post_init__(self) -> None:
        operators = np.array(self.operators, dtype=np.complex128)
        if operators.ndim == 2:
            operators = operators[np.newaxis]
        if operators.ndim != 3 or operators.shape[1] != operators.shape[2]:
            raise DimensionMismatchError(f"Kraus operators must be (K, d, d), got {operators.shape}")
        dim = operators.shape[1]
        _check_dim(dim)
        if not 1 <= operators.shape[0] <= dim**2:
            raise InvalidChannelError(f"a channel needs between 1 and {dim**2} Kraus operators")
        gram = np.einsum("kji,kjl->il", operators.conj(), operators)
        residual = np.max(np.abs(gram - np.eye(dim)))
        if residual > CHANNEL_TOL:
            raise InvalidChannelError(f"channel is not trace preserving (residual {residual:.3e})")
        operators.setflags(write=False)
        object.__setattr__(self, "operators", operators)

    @property
    def dim(self) -> int:
        return int(self.operators.shape[1])


def hermitian_part_batch(matrices: ComplexArray) -> ComplexArray:
    return (matrices + matrices.conj().transpose(0, 2, 1)) / 2


def maximally_mixed(dim: int) -> DensityMatrix:
    return DensityMatrix(np.eye(dim, dtype=np.complex128) / dim)


def haar_random_pure(dim: int, rng: np.random.Generator | SeedLike | None = None) -> PureState:
    """Draw a Haar-random pure state: complex Gaussian amplitudes, normalised."""
    if dim < 2:
        raise InvalidDimensionError(f"dimension must be at least 2, got {dim}")
    generator = as_rng(rng)
    vector = generator.standard_normal(dim) + 1j * generator.standard_normal(dim)
    return PureState.from_vector(vector)


def unitary_channel(unitary: object) -> KrausChannel:
    return KrausChannel(as_complex_matrix(unitary)[np.newaxis])


def _require_same_dim(a: int, b: int) -> None:
    if a != b:
        raise DimensionMismatchError(f"dimension mismatch: {a} != {b}")


def born_probabilities(rho: DensityMatrix, povm: Povm) -> ProbDistribution:
    """Outcome probabilities ``Re Tr(M_γ ρ)``."""
    _require_same_dim(rho.dim, povm.dim)
    values = np.einsum("kij,ji->k", povm.elements, rho.matrix).real
    values = np.where((values < 0) & (values >= -1e-12), 0.0, values)
    total = values.sum()
    if abs(total - 1) > DISTRIBUTION_TOL or np.any(values < 0):
        raise InconsistentPovmError(f"Born probabilities sum to {total!r}")
    return ProbDistribution(values / total)


def fidelity(target: PureState, estimate: DensityMatrix) -> float:
    """Overlap ``⟨ψ|ρ|ψ⟩`` of an estimate with a pure target."""
    _require_same_dim(target.dim, estimate.dim)
    value = np.vdot(target.amplitudes, estimate.matrix @ target.amplitudes)
    return float(np.clip(value.real, 0.0, 1.0))


def purity(rho: DensityMatrix) -> float:
    return float(np.clip(np.einsum("ij,ji->", rho.matrix, rho.matrix).real, 0.0, 1.0))


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    _require_same_dim(rho.dim, sigma.dim)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(rho.matrix - sigma.matrix))))


def apply_channel(channel: KrausChannel, rho: DensityMatrix) -> DensityMatrix:
    """Apply the operator-sum ``Σ_k E_k ρ E_k†``."""
    _require_same_dim(channel.dim, rho.dim)
    ops = channel.operators
    out = np.einsum("kij,jl,kml->im", ops, rho.matrix, ops.conj())
    if abs(np.trace(out).real - 1) > TRACE_TOL:
        raise InvalidChannelError("channel output lost trace")
    return DensityMatrix(hermitian_part(out))
