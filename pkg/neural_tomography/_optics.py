# for internal use only
"""Physical SPAM model: Hermite-Gaussian overlaps, fibre filtering and Gouy phases."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.polynomial import hermite

from neural_tomography._errors import (
    DimensionMismatchError,
    IntegrationError,
    InvalidDimensionError,
    InvalidSpamError,
    NoRealSolutionError,
    UsageError,
)
from neural_tomography._povm import rank_one_povm
from neural_tomography._quantum import KrausChannel, born_probabilities

TYPE_CHECKING = False
if TYPE_CHECKING:
    from collections.abc import Sequence

    from neural_tomography._common import ComplexArray, RealArray
    from neural_tomography._quantum import Povm, PureState

QUADRATURE_NODES = 40
QUADRATURE_RTOL = 1e-10

GOUY_PHASES = (0.92, 1.97)
"""Gouy phase shifts (radians) of order-1 and order-2 modes used by the default SPAM model."""


class HgModeIndex(NamedTuple):
    n: int
    m: int

    @property
    def order(self) -> int:
        return self.n + self.m

    def __str__(self) -> str:
        return f"HG{self.n}{self.m}"


def basis_modes(max_order: int = 2) -> tuple[HgModeIndex, ...]:
    """Modes with ``n + m <= max_order`` grouped by order, ``m`` decreasing within an order."""
    return tuple(
        HgModeIndex(n, order - n) for order in range(max_order + 1) for n in range(order + 1)
    )


HG_BASIS = basis_modes(2)
"""Canonical ordering ``HG00, HG01, HG10, HG02, HG11, HG20`` of the six-dimensional space."""


def mode_order(idx: HgModeIndex) -> int:
    return idx.order


@dataclass(frozen=True)
class DetectionModel:
    """Detection optics: mode waist ``w``, fibre waist ``w_f`` and the width compensation flag.

    Waists are dimensionless; only ``w_f / w`` matters.
    """

    w: float = 1.0
    w_f: float = 2.0
    corrected: bool = False
    gouy_phases: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.w <= 0 or self.w_f <= 0:
            raise UsageError("waists must be positive")
        if self.corrected and self.w_f <= self.w:
            raise NoRealSolutionError("width compensation needs w_f > w")

    @property
    def detection_width(self) -> float:
        """Gaussian width of the detection hologram mode."""
        return corrected_width(self.w, self.w_f) if self.corrected else self.w


def _hermite(n: int, u: RealArray) -> RealArray:
    coefficients = np.zeros(n + 1)
    coefficients[-1] = 1
    return np.asarray(hermite.hermval(u, coefficients))


def _norm(n: int, w: float) -> float:
    return (2 / math.pi) ** 0.25 / math.sqrt(2**n * math.factorial(n) * w)


def hg_1d(n: int, z: RealArray | float, w: float) -> RealArray:
    """Normalised 1-D factor ``HG_n(z) ∝ H_n(√2 z/w) exp(−z²/w²)``."""
    z = np.asarray(z, dtype=np.float64)
    return _norm(n, w) * _hermite(n, math.sqrt(2) * z / w) * np.exp(-(z**2) / w**2)


def hg_amplitude(
    idx: HgModeIndex, x: RealArray | float, y: RealArray | float, w: float
) -> RealArray:
    if w <= 0:
        raise UsageError("mode waist must be positive")
    return hg_1d(idx.n, x, w) * hg_1d(idx.m, y, w)


def corrected_width(w: float, w_f: float) -> float:
    """Width ``w̃`` with ``1/w̃² + 1/w_f² = 1/w²`` that cancels the fibre Gaussian."""
    if w_f <= w:
        raise NoRealSolutionError(f"no real compensated width for w={w}, w_f={w_f}")
    return 1 / math.sqrt(1 / w**2 - 1 / w_f**2)


def _axis_overlap(det: int, inp: int, model: DetectionModel, nodes: int) -> float:
    # ∫ H_det(√2z/w) e^{-z²/w_d²} · H_inp(√2z/w) e^{-z²/w²} · e^{-z²/w_f²} dz by Gauss-Hermite
    w, w_d = model.w, model.detection_width
    rate = 1 / w_d**2 + 1 / w**2 + 1 / model.w_f**2
    x, weights = hermite.hermgauss(nodes)
    z = x / math.sqrt(rate)
    u = math.sqrt(2) * z / w
    poly = _hermite(det, u) * _hermite(inp, u)
    return _norm(det, w) * _norm(inp, w) * float(np.dot(weights, poly)) / math.sqrt(rate)


def _converged_axis_overlap(det: int, inp: int, model: DetectionModel, nodes: int) -> float:
    value = _axis_overlap(det, inp, model, nodes)
    refined = _axis_overlap(det, inp, model, 2 * nodes)
    if abs(refined - value) > QUADRATURE_RTOL * max(1.0, abs(refined)):
        raise IntegrationError(f"quadrature did not converge for orders ({det}, {inp})")
    return refined


def smf_overlap(
    det: HgModeIndex, inp: HgModeIndex, model: DetectionModel, nodes: int = QUADRATURE_NODES
) -> complex:
    """Detection amplitude of input mode ``inp`` through the hologram for ``det`` and the fibre."""
    x_part = _converged_axis_overlap(det.n, inp.n, model, nodes)
    y_part = _converged_axis_overlap(det.m, inp.m, model, nodes)
    return complex(x_part * y_part)


def overlap_matrix(
    model: DetectionModel, modes: Sequence[HgModeIndex] = HG_BASIS, nodes: int = QUADRATURE_NODES
) -> ComplexArray:
    """``O[j, k] = smf_overlap(modes[j], modes[k])``."""
    return np.array(
        [[smf_overlap(det, inp, model, nodes) for inp in modes] for det in modes],
        dtype=np.complex128,
    )


def gouy_unitary(phi1: float, phi2: float, modes: Sequence[HgModeIndex] = HG_BASIS) -> ComplexArray:
    phases = {0: 0.0, 1: phi1, 2: phi2}
    return np.diag(np.exp(1j * np.array([phases[mode.order] for mode in modes])))


def gouy_channel(phi1: float, phi2: float) -> KrausChannel:
    """Single-Kraus unitary channel of mode-order-dependent Gouy phases."""
    return KrausChannel(gouy_unitary(phi1, phi2)[np.newaxis])


@dataclass(frozen=True, eq=False)
class CrosstalkMatrix:
    """``probs[j, i]``: probability of outcome ``j`` for probe state ``i``."""

    probs: RealArray
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 2:
            raise DimensionMismatchError("crosstalk matrix must be two-dimensional")
        if np.any(probs < 0) or np.any(probs > 1):
            raise UsageError("crosstalk probabilities must lie in [0, 1]")
        object.__setattr__(self, "probs", probs)


def crosstalk_matrix(probes: Sequence[PureState], povm_effective: Povm) -> CrosstalkMatrix:
    columns = [born_probabilities(probe.projector(), povm_effective).values for probe in probes]
    return CrosstalkMatrix(np.stack(columns, axis=1), povm_effective.labels)


def similarity(measured: CrosstalkMatrix, ideal: CrosstalkMatrix) -> float:
    """``(Σ √(P·𝕡))² / (ΣP · Σ𝕡)``; 1 only when the matrices are proportional."""
    if measured.probs.shape != ideal.probs.shape:
        raise DimensionMismatchError(
            f"crosstalk shapes differ: {measured.probs.shape} != {ideal.probs.shape}"
        )
    overlap = np.sum(np.sqrt(measured.probs * ideal.probs))
    return float(min(1.0, overlap**2 / (measured.probs.sum() * ideal.probs.sum())))


# SPAM models
# ===========
@dataclass(frozen=True)
class SpamModel:
    """Composite measurement corruption: Gouy conjugation and/or fibre crosstalk."""

    gouy: tuple[float, float] | None = None
    detection: DetectionModel | None = None

    @property
    def is_clean(self) -> bool:
        return self.gouy is None and self.detection is None


@dataclass(frozen=True)
class SpamScenario:
    name: str
    spam: SpamModel
    calibrated: bool = False
    """Whether raw reconstructions are corrected with process-tomography Gouy estimates."""


_SMF = DetectionModel(w=1.0, w_f=2.0, corrected=False)

SPAM_SCENARIOS: dict[str, SpamScenario] = {
    "clean": SpamScenario("clean", SpamModel()),
    "gouy": SpamScenario("gouy", SpamModel(gouy=GOUY_PHASES)),
    "smf": SpamScenario("smf", SpamModel(detection=_SMF)),
    "gouy+smf": SpamScenario(
        "gouy+smf", SpamModel(gouy=GOUY_PHASES, detection=_SMF), calibrated=True
    ),
    "agnostic": SpamScenario("agnostic", SpamModel(gouy=GOUY_PHASES, detection=_SMF)),
}
SPAM_ALIASES = {"none": "clean", "both": "gouy+smf"}


def get_scenario(name: str) -> SpamScenario:
    key = SPAM_ALIASES.get(name, name)
    try:
        return SPAM_SCENARIOS[key]
    except KeyError:
        choices = ", ".join(SPAM_SCENARIOS)
        raise InvalidSpamError(f"unknown SPAM scenario {name!r} (choose from {choices})") from None


def effective_povm(ideal: Povm, spam: SpamModel) -> Povm:
    """Corrupt the measurement directions of a rank-one POVM.

    Each direction becomes ``φ̃_j ∝ E₁·O·φ_j`` and the rank-one elements are renormalised to a
    complete POVM. With only Gouy phases this is exactly ``M̃_j = E₁ M_j E₁†``.
    """
    if spam.is_clean:
        return ideal
    if ideal.vectors is None:
        raise UsageError("SPAM corruption needs a rank-one POVM with known directions")
    if ideal.dim != len(HG_BASIS):
        raise InvalidDimensionError(f"the optics model is six-dimensional, got d={ideal.dim}")
    transform = np.eye(ideal.dim, dtype=np.complex128)
    if spam.detection is not None:
        transform = overlap_matrix(spam.detection) @ transform
    if spam.gouy is not None:
        transform = gouy_unitary(*spam.gouy) @ transform
    corrupted = ideal.vectors @ transform.T
    povm = rank_one_povm(corrupted, kind="custom", tighten=True)
    return type(povm)(povm.elements, ideal.labels, "custom", povm.vectors)
