# for internal use only
"""Process tomography in the matrix-unit chi representation and Gouy-phase read-off."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from neural_tomography._common import as_rng, circular_mean, hermitian_part, wrap_phase
from neural_tomography._errors import (
    DimensionMismatchError,
    InvalidChannelError,
    InvalidDimensionError,
    PhaseUndefinedError,
    ProbesNotCompleteError,
    UsageError,
)
from neural_tomography._optics import GOUY_PHASES, HG_BASIS, gouy_channel
from neural_tomography._quantum import KrausChannel, PureState, apply_channel, born_probabilities
from neural_tomography._sampler import sample_counts

TYPE_CHECKING = False
if TYPE_CHECKING:
    from collections.abc import Sequence

    from neural_tomography._common import ComplexArray, RealArray, SeedLike
    from neural_tomography._quantum import Povm

_log = logging.getLogger(__name__)

MODEL_MISMATCH_RESIDUAL = 0.1
CHI_HERMITIAN_TOL = 1e-8
CHI_TP_TOL = 1e-6
PHASE_MAGNITUDE_FLOOR = 1e-6
DEGENERACY_GAP = 1e-10


def matrix_units(dim: int) -> ComplexArray:
    """Operator basis ``B_{a·d+b} = |a⟩⟨b|``."""
    return np.eye(dim * dim, dtype=np.complex128).reshape(dim * dim, dim, dim)


def _tp_operator(chi: ComplexArray, dim: int) -> ComplexArray:
    # Σ_mn χ_mn B_n† B_m for matrix units
    return np.einsum("abae->eb", chi.reshape(dim, dim, dim, dim))


@dataclass(frozen=True, eq=False)
class ChiMatrix:
    """Completely positive, trace-preserving map as a ``d² × d²`` chi matrix with ``Tr χ = d``.

    ``residual`` is the relative Frobenius change made by the CP/TP projection of the linear
    estimate. ``weights`` are the eigenvalues divided by ``d``, in decreasing order.
    """

    dim: int
    chi: ComplexArray
    residual: float = 0.0
    model_mismatch: bool = False

    def __post_init__(self) -> None:
        chi = np.array(self.chi, dtype=np.complex128)
        if chi.shape != (self.dim**2, self.dim**2):
            raise DimensionMismatchError(f"chi must be {self.dim**2}x{self.dim**2}, got {chi.shape}")
        if np.max(np.abs(chi - chi.conj().T)) > CHI_HERMITIAN_TOL:
            raise InvalidChannelError("chi matrix is not Hermitian")
        chi = hermitian_part(chi)
        if np.linalg.eigvalsh(chi)[0] < -CHI_HERMITIAN_TOL:
            raise InvalidChannelError("chi matrix is not positive semidefinite")
        tp_residual = np.max(np.abs(_tp_operator(chi, self.dim) - np.eye(self.dim)))
        if tp_residual > CHI_TP_TOL:
            raise InvalidChannelError(f"chi matrix is not trace preserving (residual {tp_residual:.3e})")
        chi.setflags(write=False)
        object.__setattr__(self, "chi", chi)

    @property
    def basis(self) -> ComplexArray:
        return matrix_units(self.dim)

    @property
    def eigenvalues(self) -> RealArray:
        return np.linalg.eigvalsh(self.chi)[::-1]

    @property
    def weights(self) -> RealArray:
        return self.eigenvalues / self.dim

    @property
    def top_degenerate(self) -> bool:
        values = self.eigenvalues
        return bool(values[0] - values[1] < DEGENERACY_GAP)


@dataclass(frozen=True, eq=False)
class ProcessDataset:
    """Outcome probabilities or frequencies ``observed[p, γ]`` for every probe state ``p``."""

    probes: tuple[PureState, ...]
    povm: Povm
    observed: RealArray

    def __post_init__(self) -> None:
        observed = np.array(self.observed, dtype=np.float64)
        if observed.shape != (len(self.probes), len(self.povm)):
            raise DimensionMismatchError(
                f"observed data {observed.shape} != ({len(self.probes)} probes, {len(self.povm)} outcomes)"
            )
        if any(probe.dim != self.povm.dim for probe in self.probes):
            raise DimensionMismatchError("probe and POVM dimensions differ")
        object.__setattr__(self, "probes", tuple(self.probes))
        object.__setattr__(self, "observed", observed)


def default_probes(povm: Povm) -> tuple[PureState, ...]:
    """The POVM measurement directions reused as probe states."""
    if povm.vectors is None:
        raise UsageError("default probes need a rank-one POVM with known directions")
    return tuple(PureState.from_vector(vector) for vector in povm.vectors)


def simulate_process_data(
    channel: KrausChannel,
    probes: Sequence[PureState],
    povm: Povm,
    shots: int = 0,
    rng: np.random.Generator | SeedLike | None = None,
) -> ProcessDataset:
    """Send every probe through ``channel`` and measure; ``shots = 0`` gives exact probabilities."""
    if shots < 0:
        raise UsageError("shots must be non-negative")
    generator = as_rng(rng) if shots else None
    rows = []
    for probe in probes:
        probs = born_probabilities(apply_channel(channel, probe.projector()), povm)
        if generator is None:
            rows.append(probs.values)
        else:
            rows.append(sample_counts(probs, shots, generator) / shots)
    return ProcessDataset(tuple(probes), povm, np.stack(rows))


def _design_matrix(data: ProcessDataset) -> ComplexArray:
    # Tr(M_γ B_m ρ B_n†) for m = (a, b), n = (c, e) is ρ_be (M_γ)_ca
    dim = data.povm.dim
    rhos = np.stack([probe.projector().matrix for probe in data.probes])
    design = np.einsum("gca,pbe->pgabce", data.povm.elements, rhos)
    return design.reshape(len(data.probes) * len(data.povm), dim**4)


def project_chi(chi: ComplexArray, dim: int) -> ComplexArray:
    """Nearest CP map by eigenvalue clipping, then trace preservation by ``T^{-1/2}`` congruence.

    Both steps leave an already physical chi unchanged, so the projection is idempotent.
    """
    eigenvalues, eigenvectors = np.linalg.eigh(hermitian_part(chi))
    clipped = (eigenvectors * np.clip(eigenvalues, 0, None)) @ eigenvectors.conj().T
    tp = hermitian_part(_tp_operator(clipped, dim))
    t_values, t_vectors = np.linalg.eigh(tp)
    if t_values[0] <= 1e-12:
        raise InvalidChannelError("projected chi has a singular trace-preservation operator")
    # K ↦ K S for every Kraus operator K with S = T^{-1/2}
    s = (t_vectors / np.sqrt(t_values)) @ t_vectors.conj().T
    corrected = np.einsum("abce,bB,eE->aBcE", clipped.reshape(dim, dim, dim, dim), s, s.conj())
    return hermitian_part(corrected.reshape(dim * dim, dim * dim))


def reconstruct_process(data: ProcessDataset) -> ChiMatrix:
    """Linear inversion of the probe data followed by the CP/TP projection."""
    dim = data.povm.dim
    design = _design_matrix(data)
    rank = int(np.linalg.matrix_rank(design))
    if rank < dim**4:
        raise ProbesNotCompleteError(f"process design matrix has rank {rank} < {dim**4}")
    observed = data.observed.reshape(-1).astype(np.complex128)
    solution, *_ = np.linalg.lstsq(design, observed, rcond=None)
    linear = hermitian_part(solution.reshape(dim * dim, dim * dim))
    projected = project_chi(linear, dim)
    residual = float(np.linalg.norm(projected - linear) / np.linalg.norm(linear))
    mismatch = residual > MODEL_MISMATCH_RESIDUAL
    if mismatch:
        _log.warning("chi projection residual %.3f: data do not fit a CPTP map", residual)
    chi = ChiMatrix(dim, projected, residual, mismatch)
    _log.info("Process reconstructed (d=%d, dominant weight %.6f)", dim, chi.weights[0])
    return chi


def _top_eigenpair(chi: ChiMatrix) -> tuple[float, ComplexArray]:
    eigenvalues, eigenvectors = np.linalg.eigh(chi.chi)
    top = eigenvalues[-1]
    index = int(np.argmax(eigenvalues >= top - DEGENERACY_GAP))
    return float(max(top, 0.0)), eigenvectors[:, index]


def _fix_global_phase(operator: ComplexArray) -> ComplexArray:
    flat = operator.reshape(-1)
    pivot = flat[0] if abs(flat[0]) > 1e-12 else flat[np.argmax(np.abs(flat) > 1e-12)]
    return operator * np.exp(-1j * np.angle(pivot))


def dominant_kraus(chi: ChiMatrix) -> ComplexArray:
    """``E₁ = √λ₁ Σ_m u_m B_m`` for the top eigenpair, with entry (0, 0) real and non-negative."""
    if chi.top_degenerate:
        _log.warning("top chi eigenvalue is degenerate; using the lowest eigen-index")
    value, vector = _top_eigenpair(chi)
    return _fix_global_phase(np.sqrt(value) * vector.reshape(chi.dim, chi.dim))


def chi_to_channel(chi: ChiMatrix, cutoff: float = 1e-12) -> KrausChannel:
    """Kraus form from the eigendecomposition, dropping eigenvalues below ``cutoff·λ_max``."""
    eigenvalues, eigenvectors = np.linalg.eigh(chi.chi)
    keep = eigenvalues > cutoff * eigenvalues[-1]
    operators = [
        np.sqrt(value) * eigenvectors[:, k].reshape(chi.dim, chi.dim)
        for k, value in enumerate(eigenvalues)
        if keep[k]
    ]
    return KrausChannel(np.stack(operators[::-1]))


@dataclass(frozen=True)
class GouyPhases:
    """Order-1 and order-2 Gouy phases with the per-mode values they average.

    ``spreads`` is the largest distance of a per-mode phase from its order's mean.
    """

    phi1: float
    phi2: float
    per_mode: tuple[float, ...]
    spreads: tuple[float, float] = (0.0, 0.0)


def extract_gouy_phases(e1: ComplexArray) -> GouyPhases:
    """Phases of the diagonal of ``E₁`` relative to the fundamental mode, averaged per order."""
    e1 = np.asarray(e1, dtype=np.complex128)
    if e1.shape != (len(HG_BASIS), len(HG_BASIS)):
        raise InvalidDimensionError(f"Gouy phases need a 6x6 operator in the HG basis, got {e1.shape}")
    diagonal = np.diag(e1)
    small = np.flatnonzero(np.abs(diagonal) < PHASE_MAGNITUDE_FLOOR)
    if small.size:
        raise PhaseUndefinedError(f"|E1[{small[0]},{small[0]}]| is too small to define a phase")
    reference = np.angle(diagonal[0])
    per_mode = tuple(wrap_phase(float(np.angle(value) - reference)) for value in diagonal)
    means = []
    spreads = []
    for order in (1, 2):
        angles = np.array([per_mode[k] for k, mode in enumerate(HG_BASIS) if mode.order == order])
        mean = circular_mean(angles)
        means.append(mean)
        spreads.append(max(abs(wrap_phase(float(a - mean))) for a in angles))
    return GouyPhases(means[0], means[1], per_mode, (spreads[0], spreads[1]))


@dataclass(frozen=True, eq=False)
class GouyCalibration:
    chi: ChiMatrix
    e1: ComplexArray
    phases: GouyPhases


def calibrate_gouy(
    povm: Povm,
    phases: tuple[float, float] = GOUY_PHASES,
    probes: Sequence[PureState] | None = None,
    shots: int = 0,
    rng: np.random.Generator | SeedLike | None = None,
) -> GouyCalibration:
    """Simulate process tomography of the Gouy channel and read back its phases."""
    probes = default_probes(povm) if probes is None else probes
    data = simulate_process_data(gouy_channel(*phases), probes, povm, shots, rng)
    chi = reconstruct_process(data)
    e1 = dominant_kraus(chi)
    estimate = extract_gouy_phases(e1)
    _log.info("Gouy phases estimated: phi1=%.4f, phi2=%.4f", estimate.phi1, estimate.phi2)
    return GouyCalibration(chi, e1, estimate)
