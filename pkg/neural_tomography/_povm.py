# for internal use only
"""Informationally complete measurements and the numerical SIC search."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from neural_tomography._common import child_rng
from neural_tomography._errors import InvalidDimensionError, SicNotConvergedError, UsageError
from neural_tomography._quantum import Povm

TYPE_CHECKING = False
if TYPE_CHECKING:
    from collections.abc import Callable

    from neural_tomography._common import ComplexArray, RealArray

_log = logging.getLogger(__name__)

IC_RANK_RTOL = 1e-8


@dataclass(frozen=True)
class SicSearchConfig:
    """Settings of the multi-start frame-potential descent.

    ``tolerance`` bounds the largest deviation of a pairwise overlap ``|⟨φ_i|φ_j⟩|²`` from
    ``1/(d+1)``. With ``covariant=True`` the ``d²`` vectors are the Weyl–Heisenberg orbit of a
    single fiducial vector, otherwise all ``d²`` vectors are optimised independently.
    """

    dim: int = 6
    max_iterations: int = 50_000
    tolerance: float = 1e-7
    seed: int = 0
    restarts: int = 10
    covariant: bool = True

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise InvalidDimensionError(f"dimension must be at least 2, got {self.dim}")
        if self.tolerance <= 0:
            raise UsageError("tolerance must be positive")
        if self.restarts < 1:
            raise UsageError("at least one restart is required")
        if self.max_iterations < 1:
            raise UsageError("max_iterations must be positive")


@dataclass(frozen=True, eq=False)
class SicSearchResult:
    vectors: ComplexArray
    potential: float
    initial_potential: float
    max_deviation: float
    restart: int


def weyl_heisenberg_displacements(dim: int) -> ComplexArray:
    """The ``d²`` operators ``X^a Z^b`` ordered by ``a·d + b``."""
    shift = np.roll(np.eye(dim, dtype=np.complex128), 1, axis=0)
    clock = np.diag(np.exp(2j * np.pi * np.arange(dim) / dim))
    ops = np.empty((dim * dim, dim, dim), dtype=np.complex128)
    for a in range(dim):
        xa = np.linalg.matrix_power(shift, a)
        for b in range(dim):
            ops[a * dim + b] = xa @ np.linalg.matrix_power(clock, b)
    return ops


def frame_potential(vectors: ComplexArray) -> float:
    """``Σ_{i≠j} (|⟨φ_i|φ_j⟩|² − 1/(d+1))²`` for unit rows ``vectors``."""
    dim = vectors.shape[1]
    overlaps = np.abs(vectors.conj() @ vectors.T) ** 2
    np.fill_diagonal(overlaps, 1 / (dim + 1))
    return float(np.sum((overlaps - 1 / (dim + 1)) ** 2))


def max_overlap_deviation(vectors: ComplexArray) -> float:
    dim = vectors.shape[1]
    unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    overlaps = np.abs(unit.conj() @ unit.T) ** 2
    np.fill_diagonal(overlaps, 1 / (dim + 1))
    return float(np.max(np.abs(overlaps - 1 / (dim + 1))))


def _normalise_gradient(vec: ComplexArray, norm: float, grad_unit: ComplexArray) -> ComplexArray:
    # pull a conjugate gradient back through vec -> vec / |vec|
    unit = vec / norm
    return (grad_unit - unit * np.real(np.vdot(unit, grad_unit))) / norm


def _covariant_objective(dim: int) -> Callable[[RealArray], tuple[float, RealArray]]:
    ops = weyl_heisenberg_displacements(dim)[1:]
    target = 1 / (dim + 1)
    n_pairs = dim * dim

    def objective(params: RealArray) -> tuple[float, RealArray]:
        vec = params[:dim] + 1j * params[dim:]
        norm = float(np.linalg.norm(vec))
        psi = vec / norm
        moved = ops @ psi
        moved_back = ops.conj().transpose(0, 2, 1) @ psi
        overlaps = moved @ psi.conj()
        excess = np.abs(overlaps) ** 2 - target
        # every off-diagonal pair of the orbit repeats one of the d²-1 displacement overlaps
        value = n_pairs * float(np.sum(excess**2))
        grad_unit = n_pairs * 2 * np.einsum(
            "k,kd->d", excess, overlaps.conj()[:, None] * moved + overlaps[:, None] * moved_back
        )
        grad = _normalise_gradient(vec, norm, grad_unit)
        return value, 2 * np.concatenate([grad.real, grad.imag])

    return objective


def _free_objective(dim: int) -> Callable[[RealArray], tuple[float, RealArray]]:
    count = dim * dim
    target = 1 / (dim + 1)

    def objective(params: RealArray) -> tuple[float, RealArray]:
        half = count * dim
        vecs = (params[:half] + 1j * params[half:]).reshape(count, dim)
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        unit = vecs / norms
        gram = unit.conj() @ unit.T
        excess = np.abs(gram) ** 2 - target
        np.fill_diagonal(excess, 0.0)
        value = float(np.sum(excess**2))
        grad_unit = 4 * (excess * gram.T) @ unit
        grad = (grad_unit - unit * np.real(np.sum(unit.conj() * grad_unit, axis=1, keepdims=True)))
        grad = grad / norms
        return value, 2 * np.concatenate([grad.real.ravel(), grad.imag.ravel()])

    return objective


def _vectors_from_params(params: RealArray, config: SicSearchConfig) -> ComplexArray:
    dim = config.dim
    if config.covariant:
        psi = params[:dim] + 1j * params[dim:]
        psi = psi / np.linalg.norm(psi)
        return weyl_heisenberg_displacements(dim) @ psi
    half = dim * dim * dim
    vecs = (params[:half] + 1j * params[half:]).reshape(dim * dim, dim)
    return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)


def _tighten_frame(vectors: ComplexArray) -> ComplexArray:
    # map the rows onto the nearest tight frame so that (1/d) Σ |φ⟩⟨φ| = I holds to round-off
    dim = vectors.shape[1]
    frame = vectors.T @ vectors.conj() / dim
    eigenvalues, eigenvectors = np.linalg.eigh(frame)
    inverse_sqrt = (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.conj().T
    return vectors @ inverse_sqrt.T


def search_sic(config: SicSearchConfig) -> SicSearchResult:
    """Run every restart and keep the best one (lowest residual, then lowest index)."""
    dim = config.dim
    objective = _covariant_objective(dim) if config.covariant else _free_objective(dim)
    n_params = 2 * dim if config.covariant else 2 * dim**3
    best: SicSearchResult | None = None
    for restart in range(config.restarts):
        rng = child_rng(config.seed, "sic", restart)
        start = rng.standard_normal(n_params)
        initial = frame_potential(_vectors_from_params(start, config))
        result = scipy.optimize.minimize(
            objective,
            start,
            jac=True,
            method="L-BFGS-B",
            options={
                "maxiter": config.max_iterations,
                "maxfun": 2 * config.max_iterations,
                "ftol": 0.0,
                "gtol": 0.0,
            },
        )
        vectors = _vectors_from_params(np.asarray(result.x), config)
        potential = frame_potential(vectors)
        deviation = max_overlap_deviation(vectors)
        _log.debug(
            "SIC restart %d (d=%d): potential %.3e -> %.3e, max deviation %.3e",
            restart, dim, initial, potential, deviation,
        )  # fmt: skip
        candidate = SicSearchResult(vectors, potential, initial, deviation, restart)
        if best is None or deviation < best.max_deviation:
            best = candidate
    assert best is not None
    if best.max_deviation > config.tolerance:
        raise SicNotConvergedError(
            f"no SIC found in d={dim} after {config.restarts} restarts "
            f"(best overlap deviation {best.max_deviation:.3e} > {config.tolerance:.1e})",
            best.max_deviation,
        )
    _log.info(
        "SIC found in d=%d (restart %d, deviation %.2e)", dim, best.restart, best.max_deviation
    )
    return best


def rank_one_povm(vectors: ComplexArray, kind: str = "custom", tighten: bool = True) -> Povm:
    """Build ``M_γ = (1/d)|φ_γ⟩⟨φ_γ|`` from ``d²`` measurement directions."""
    vectors = np.asarray(vectors, dtype=np.complex128)
    dim = vectors.shape[1]
    unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    directions = _tighten_frame(unit) if tighten else unit
    elements = np.einsum("ki,kj->kij", directions, directions.conj()) / dim
    labels = tuple(f"{kind}{k}" for k in range(len(directions)))
    return Povm(elements, labels, kind, directions)


def build_sic(config: SicSearchConfig | None = None) -> Povm:
    """Numerically construct the ``d²``-element SIC POVM."""
    search = search_sic(config or SicSearchConfig())
    return rank_one_povm(search.vectors, kind="sic")


def computational_basis_povm(dim: int) -> Povm:
    eye = np.eye(dim, dtype=np.complex128)
    labels = tuple(f"e{k}" for k in range(dim))
    return Povm(np.einsum("ki,kj->kij", eye, eye), labels, "custom", eye)


@dataclass(frozen=True)
class IcReport:
    rank: int
    is_ic: bool
    completeness_residual: float


def verify_ic(povm: Povm | ComplexArray) -> IcReport:
    """Rank of the real span of the POVM elements in operator space.

    A bare ``(K, d, d)`` element stack is accepted too, so that incomplete sets (for example a
    SIC with an element removed) can be inspected.
    """
    elements = povm.elements if isinstance(povm, Povm) else np.asarray(povm, dtype=np.complex128)
    count, dim = elements.shape[0], elements.shape[1]
    flat = elements.reshape(count, dim * dim)
    real_vectors = np.concatenate([flat.real, flat.imag], axis=1)
    singular = np.linalg.svd(real_vectors, compute_uv=False)
    rank = int(np.sum(singular > IC_RANK_RTOL * singular[0]))
    residual = float(np.max(np.abs(elements.sum(axis=0) - np.eye(dim))))
    return IcReport(rank, rank == dim * dim, residual)
