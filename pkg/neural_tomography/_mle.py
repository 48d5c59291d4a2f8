# for internal use only
"""Maximum-likelihood state reconstruction with the RρR iteration."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from neural_tomography._common import PROBABILITY_FLOOR, hermitian_part
from neural_tomography._errors import DimensionMismatchError, UsageError
from neural_tomography._quantum import DensityMatrix, PureState

TYPE_CHECKING = False
if TYPE_CHECKING:
    from collections.abc import Sequence

    from neural_tomography._common import ComplexArray, RealArray
    from neural_tomography._quantum import Povm

_log = logging.getLogger(__name__)

DEGENERACY_GAP = 1e-10
MAX_BACKTRACKS = 40
MAX_EXTRAPOLATIONS = 30
MAX_BISECTIONS = 10
LIKELIHOOD_SLACK = 1e-12


@dataclass(frozen=True)
class MleConfig:
    """RρR stopping rule.

    ``convergence_tol`` bounds the Frobenius norm of the RρR direction ``ρ' - ρ``.
    An iteration that finds no ascent along either search line also ends the run as converged.
    ``debug`` validates every iterate as a density matrix and checks likelihood monotonicity.
    """

    max_iterations: int = 5000
    convergence_tol: float = 1e-10
    enforce_pure: bool = False
    debug: bool = False

    def __post_init__(self) -> None:
        if self.convergence_tol <= 0:
            raise UsageError("convergence_tol must be positive")
        if self.max_iterations < 1:
            raise UsageError("max_iterations must be positive")


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    rho_hat: DensityMatrix
    log_likelihood: float
    iterations_used: int
    converged: bool
    degenerate: bool = False
    """Set by the pure-state estimate when the top eigenvalue of the mixed estimate is tied."""


@dataclass(frozen=True, eq=False)
class Estimate:
    """A reconstructed state tagged with its record id and pipeline arm (raw, nn, calibrated)."""

    id: int
    arm: str
    rho: DensityMatrix
    iterations: int = 0
    converged: bool = True
    pure: bool = False

    @classmethod
    def from_result(
        cls, record_id: int, arm: str, result: ReconstructionResult, pure: bool = False
    ) -> Estimate:
        return cls(record_id, arm, result.rho_hat, result.iterations_used, result.converged, pure)


def _prepare_freqs(freqs: RealArray, povm: Povm) -> RealArray:
    f = np.array(freqs, dtype=np.float64).reshape(-1)
    if f.size != len(povm):
        raise DimensionMismatchError(f"{f.size} frequencies for a {len(povm)}-outcome POVM")
    if not np.all(np.isfinite(f)) or np.any(f < 0):
        raise UsageError("frequencies must be finite and non-negative")
    total = f.sum()
    if total <= 0:
        raise UsageError("frequencies sum to zero")
    return f / total


def _probabilities(rho: ComplexArray, povm: Povm) -> RealArray:
    return np.einsum("kij,ji->k", povm.elements, rho).real


def log_likelihood(freqs: RealArray, rho: ComplexArray, povm: Povm) -> float:
    """``Σ_γ f_γ log Tr(M_γ ρ)`` with the denominator floor applied to the probabilities."""
    q = np.maximum(_probabilities(rho, povm), PROBABILITY_FLOOR)
    return float(np.dot(freqs, np.log(q)))


def _is_psd(matrix: ComplexArray) -> bool:
    return bool(np.linalg.eigvalsh(matrix)[0] >= 0)


def _rrr_proposal(f: RealArray, rho: ComplexArray, povm: Povm) -> ComplexArray:
    q = np.maximum(_probabilities(rho, povm), PROBABILITY_FLOOR)
    r = np.einsum("k,kij->ij", f / q, povm.elements)
    proposal = hermitian_part(r @ rho @ r)
    return proposal / np.trace(proposal).real


def _linear_inversion(f: RealArray, povm: Povm) -> ComplexArray | None:
    """Least-squares solution of ``Tr(M_γ X) = f_γ`` with its negative eigenvalues clipped."""
    dim = povm.dim
    design = povm.elements.transpose(0, 2, 1).reshape(len(povm), dim * dim)
    solution = np.linalg.lstsq(design, f.astype(np.complex128), rcond=None)[0]
    eigenvalues, eigenvectors = np.linalg.eigh(hermitian_part(solution.reshape(dim, dim)))
    eigenvalues = np.clip(eigenvalues, 0, None)
    total = eigenvalues.sum()
    if not np.isfinite(total) or total <= PROBABILITY_FLOOR:
        return None
    return (eigenvectors * (eigenvalues / total)) @ eigenvectors.conj().T


def _line_search(
    f: RealArray, rho: ComplexArray, direction: ComplexArray, current: float, povm: Povm
) -> tuple[ComplexArray, float] | None:
    # t = 1 is plain RρR; the segment [ρ, ρ'] stays physical, extrapolation is checked for PSD
    t = 1.0
    for _ in range(MAX_BACKTRACKS):
        candidate = rho + t * direction
        value = log_likelihood(f, candidate, povm)
        if value > current:
            break
        t /= 2
    else:
        return None
    best, best_value = candidate, value
    for _ in range(MAX_EXTRAPOLATIONS):
        t *= 2
        candidate = rho + t * direction
        if not _is_psd(candidate):
            return _bisect_to_boundary(f, rho, direction, (t / 2, t), best, best_value, povm)
        value = log_likelihood(f, candidate, povm)
        if value <= best_value:
            break
        best, best_value = candidate, value
    return best, best_value


def _bisect_to_boundary(
    f: RealArray,
    rho: ComplexArray,
    direction: ComplexArray,
    bracket: tuple[float, float],
    best: ComplexArray,
    best_value: float,
    povm: Povm,
) -> tuple[ComplexArray, float]:
    # lo is PSD and ascending, hi has left the PSD set
    lo, hi = bracket
    for _ in range(MAX_BISECTIONS):
        mid = (lo + hi) / 2
        candidate = rho + mid * direction
        if _is_psd(candidate):
            value = log_likelihood(f, candidate, povm)
            if value > best_value:
                best, best_value = candidate, value
                lo = mid
                continue
        hi = mid
    return best, best_value


def _segment_step(
    f: RealArray,
    rho: ComplexArray,
    target: ComplexArray,
    q_target: RealArray,
    current: float,
    povm: Povm,
) -> tuple[ComplexArray, float] | None:
    """Maximise the likelihood on the segment from ``rho`` to the density matrix ``target``.

    The log-likelihood is concave along the segment, so the optimum is ``t = 1`` or the root of
    its slope.
    """
    q_rho = _probabilities(rho, povm)
    delta = q_target - q_rho
    mask = f > 0

    def slope(t: float) -> float:
        q = np.maximum(q_rho[mask] + t * delta[mask], PROBABILITY_FLOOR)
        return float(np.dot(f[mask], delta[mask] / q))

    if slope(0.0) <= 0:
        return None
    t = 1.0 if slope(1.0) >= 0 else scipy.optimize.brentq(slope, 0.0, 1.0)
    candidate = rho + t * (target - rho)
    value = log_likelihood(f, candidate, povm)
    if value <= current:
        return None
    return candidate, value


def mle_density(
    freqs: RealArray, povm: Povm, config: MleConfig | None = None
) -> ReconstructionResult:
    """Maximise ``Σ f_γ log Tr(M_γ ρ)`` over density matrices, starting from ``I/d``.

    Frequencies are renormalised on entry. Each iteration forms the RρR proposal and searches
    the step length along it, extrapolating up to the edge of the PSD set. It also maximises
    along the segment towards the clipped linear-inversion estimate and keeps the better of the
    two. Every accepted iterate is a density matrix with a log-likelihood no lower than the
    previous one.
    """
    config = config or MleConfig()
    f = _prepare_freqs(freqs, povm)
    dim = povm.dim
    rho = np.eye(dim, dtype=np.complex128) / dim
    current = log_likelihood(f, rho, povm)
    target = _linear_inversion(f, povm)
    segment = None if target is None else (target, _probabilities(target, povm))
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        direction = _rrr_proposal(f, rho, povm) - rho
        if np.linalg.norm(direction) < config.convergence_tol:
            converged = True
            break
        found = [_line_search(f, rho, direction, current, povm)]
        if segment is not None:
            found.append(_segment_step(f, rho, segment[0], segment[1], current, povm))
        steps = [step for step in found if step is not None]
        if not steps:
            # no ascent along either line: stationary up to round-off
            converged = True
            break
        new_rho, new_value = max(steps, key=lambda step: step[1])
        if config.debug:
            DensityMatrix(hermitian_part(new_rho))
            assert new_value >= current - LIKELIHOOD_SLACK
        rho, current = hermitian_part(new_rho), new_value
    if not converged:
        _log.warning("RρR did not converge within %d iterations", config.max_iterations)
    _log.debug("RρR stopped after %d iterations (log-likelihood %.12g)", iterations, current)
    return ReconstructionResult(DensityMatrix.from_matrix(rho), current, iterations, converged)


def dominant_eigenvector(rho: DensityMatrix) -> tuple[PureState, bool]:
    """Eigenvector of the largest eigenvalue; ties go to the lowest eigen-index."""
    eigenvalues, eigenvectors = np.linalg.eigh(rho.matrix)
    top = eigenvalues[-1]
    index = int(np.argmax(eigenvalues >= top - DEGENERACY_GAP))
    degenerate = eigenvalues.size > 1 and top - eigenvalues[-2] < DEGENERACY_GAP
    vector = eigenvectors[:, index]
    pivot = vector[np.argmax(np.abs(vector) > 1e-8)]
    vector = vector * np.exp(-1j * np.angle(pivot))
    return PureState.from_vector(vector), bool(degenerate)


def pure_from_result(
    result: ReconstructionResult, freqs: RealArray, povm: Povm
) -> tuple[PureState, ReconstructionResult]:
    """Project a mixed estimate onto its dominant eigenvector."""
    state, degenerate = dominant_eigenvector(result.rho_hat)
    if degenerate:
        _log.warning("top eigenvalue of the estimate is degenerate; using the lowest index")
    projector = state.projector()
    value = log_likelihood(_prepare_freqs(freqs, povm), projector.matrix, povm)
    pure = ReconstructionResult(
        projector, value, result.iterations_used, result.converged, degenerate
    )
    return state, pure


def mle_pure(
    freqs: RealArray, povm: Povm, config: MleConfig | None = None
) -> tuple[PureState, ReconstructionResult]:
    return pure_from_result(mle_density(freqs, povm, config), freqs, povm)


def reconstruct(
    freqs: RealArray, povm: Povm, config: MleConfig | None = None
) -> ReconstructionResult:
    """``mle_density``, or the rank-one estimate when ``config.enforce_pure`` is set."""
    if config is not None and config.enforce_pure:
        return mle_pure(freqs, povm, config)[1]
    return mle_density(freqs, povm, config)


def reconstruct_batch(
    rows: Sequence[RealArray] | RealArray,
    povm: Povm,
    config: MleConfig | None = None,
    workers: int = 1,
) -> list[ReconstructionResult]:
    """Reconstruct every row independently; results keep the input order."""
    if workers < 1:
        raise UsageError("workers must be at least 1")
    rows = list(rows)
    if workers == 1:
        results = [reconstruct(row, povm, config) for row in rows]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda row: reconstruct(row, povm, config), rows))
    failed = sum(not result.converged for result in results)
    _log.info("Reconstructed %d states (%d not converged)", len(results), failed)
    return results
