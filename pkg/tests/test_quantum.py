from __future__ import annotations

import numpy as np
import pytest

from neural_tomography._errors import (
    DimensionMismatchError,
    InvalidChannelError,
    InvalidDimensionError,
    InvalidStateError,
)
from neural_tomography._optics import gouy_channel
from neural_tomography._quantum import (
    DensityMatrix,
    KrausChannel,
    ProbDistribution,
    PureState,
    apply_channel,
    born_probabilities,
    fidelity,
    haar_random_pure,
    maximally_mixed,
    purity,
    trace_distance,
    unitary_channel,
)
from tests.helpers import assert_density_matrix


def basis_state(dim, k):
    vector = np.zeros(dim, dtype=complex)
    vector[k] = 1
    return PureState(vector)


def random_unitary(dim, rng):
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(dim, rng, rank=None):
    rank = rank or dim
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    return DensityMatrix.from_matrix(g @ g.conj().T)


# States
# ======
def test_haar_random_pure_is_normalised_and_seeded():
    state = haar_random_pure(6, 7)
    assert np.linalg.norm(state.amplitudes) == pytest.approx(1, abs=1e-12)
    assert np.array_equal(state.amplitudes, haar_random_pure(6, 7).amplitudes)
    assert not np.array_equal(state.amplitudes, haar_random_pure(6, 8).amplitudes)


def test_haar_random_pure_mean_overlap(rng):
    # E|⟨ψ|φ⟩|² = 1/d with variance 2/(d(d+1)) − 1/d²
    n = 100_000
    overlaps = np.array(
        [
            abs(np.vdot(haar_random_pure(6, rng).amplitudes, haar_random_pure(6, rng).amplitudes))
            ** 2
            for _ in range(n)
        ]
    )
    sigma = np.sqrt((2 / 42 - 1 / 36) / n)
    assert abs(overlaps.mean() - 1 / 6) < 3 * sigma


def test_haar_random_pure_rejects_small_dimension():
    with pytest.raises(InvalidDimensionError):
        haar_random_pure(1, 0)


def test_pure_state_validation():
    with pytest.raises(InvalidStateError, match="not normalised"):
        PureState(np.array([1.0, 1.0]))
    with pytest.raises(InvalidStateError):
        PureState.from_vector(np.zeros(3))
    state = PureState.from_vector([3, 4j])
    assert state.dim == 2
    assert np.allclose(state.amplitudes, [0.6, 0.8j])


def test_density_matrix_clips_round_off_eigenvalues():
    matrix = np.diag([1 + 5e-11, -5e-11, 0.0]).astype(complex)
    rho = DensityMatrix(matrix)
    assert rho.eigenvalues()[0] >= 0
    assert_density_matrix(rho)


@pytest.mark.parametrize(
    ("matrix", "message"),
    (
        (np.diag([1.1, -0.1]), "eigenvalue"),
        (np.diag([0.5, 0.6]), "trace"),
        (np.array([[0.5, 0.1], [0.2, 0.5]]), "Hermitian"),
    ),
    ids=("negative", "trace", "non_hermitian"),
)
def test_density_matrix_rejects_unphysical(matrix, message):
    with pytest.raises(InvalidStateError, match=message):
        DensityMatrix(matrix)


def test_density_matrix_rejects_non_finite():
    with pytest.raises(InvalidStateError, match="non-finite"):
        DensityMatrix(np.array([[np.nan, 0], [0, 1]]))


def test_prob_distribution_validation():
    assert len(ProbDistribution([0.25, 0.75])) == 2
    with pytest.raises(InvalidStateError):
        ProbDistribution([0.5, 0.6])
    with pytest.raises(InvalidStateError):
        ProbDistribution([1.5, -0.5])


# Born rule
# =========
def test_born_probabilities_of_maximally_mixed_state(sic6):
    probs = born_probabilities(maximally_mixed(6), sic6)
    assert np.allclose(probs.values, 1 / 36, atol=1e-12)


def test_born_probabilities_of_sic_direction(sic6):
    state = PureState.from_vector(sic6.vectors[4])
    probs = born_probabilities(state.projector(), sic6).values
    assert probs[4] == pytest.approx(1 / 6, abs=1e-7)
    assert np.allclose(np.delete(probs, 4), 1 / 42, atol=1e-7)


def test_born_probabilities_sum_to_one(sic6, rng):
    for _ in range(10):
        probs = born_probabilities(random_density(6, rng), sic6)
        assert probs.values.sum() == pytest.approx(1, abs=1e-9)


def test_born_probabilities_permutation_equivariant(sic6, rng):
    rho = random_density(6, rng)
    order = rng.permutation(36)
    probs = born_probabilities(rho, sic6).values
    permuted = born_probabilities(rho, sic6.permuted(order)).values
    assert np.allclose(permuted, probs[order], atol=1e-14)


def test_born_probabilities_dimension_mismatch(sic2):
    with pytest.raises(DimensionMismatchError):
        born_probabilities(maximally_mixed(3), sic2)


# Metrics
# =======
def test_fidelity_examples():
    psi = haar_random_pure(6, 1)
    assert fidelity(psi, psi.projector()) == pytest.approx(1, abs=1e-12)
    assert fidelity(psi, maximally_mixed(6)) == pytest.approx(1 / 6, abs=1e-12)
    assert fidelity(basis_state(6, 1), basis_state(6, 2).projector()) == 0


def test_fidelity_is_linear_in_the_estimate(rng):
    psi = haar_random_pure(6, rng)
    rho1, rho2 = random_density(6, rng), random_density(6, rng, rank=2)
    a = 0.3
    mixture = DensityMatrix(a * rho1.matrix + (1 - a) * rho2.matrix)
    expected = a * fidelity(psi, rho1) + (1 - a) * fidelity(psi, rho2)
    assert fidelity(psi, mixture) == pytest.approx(expected, abs=1e-10)


def test_purity_examples():
    assert purity(haar_random_pure(6, 2).projector()) == pytest.approx(1, abs=1e-12)
    assert purity(maximally_mixed(6)) == pytest.approx(1 / 6, abs=1e-12)
    assert purity(DensityMatrix(np.diag([0.5, 0.5, 0, 0, 0, 0]))) == pytest.approx(0.5)


def test_trace_distance(rng):
    rho = random_density(4, rng)
    assert trace_distance(rho, rho) == pytest.approx(0, abs=1e-12)
    a, b = basis_state(4, 0).projector(), basis_state(4, 3).projector()
    assert trace_distance(a, b) == pytest.approx(1)


# Channels
# ========
def test_identity_channel_leaves_state_unchanged(rng):
    rho = random_density(6, rng)
    out = apply_channel(unitary_channel(np.eye(6)), rho)
    assert np.allclose(out.matrix, rho.matrix, atol=1e-14)


def test_gouy_channel_fixes_fundamental_mode():
    rho = basis_state(6, 0).projector()
    assert np.allclose(apply_channel(gouy_channel(0.92, 1.97), rho).matrix, rho.matrix)


def test_gouy_channel_rotates_coherence():
    psi = PureState.from_vector([1, 0, 0, 0, 0, 1])
    out = apply_channel(gouy_channel(0.92, 1.97), psi.projector())
    assert out.matrix[0, 5] == pytest.approx(0.5 * np.exp(-1.97j), abs=1e-12)


def test_unitary_channel_preserves_purity(rng):
    channel = unitary_channel(random_unitary(6, rng))
    rho = random_density(6, rng, rank=2)
    out = apply_channel(channel, rho)
    assert_density_matrix(out)
    assert purity(out) == pytest.approx(purity(rho), abs=1e-10)


def test_kraus_channel_must_preserve_trace():
    with pytest.raises(InvalidChannelError, match="trace preserving"):
        KrausChannel(np.eye(3)[np.newaxis] * 0.9)
    with pytest.raises(InvalidChannelError, match="between 1 and 4"):
        KrausChannel(np.stack([np.eye(2) / np.sqrt(5)] * 5))
