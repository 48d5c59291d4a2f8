from __future__ import annotations

import logging

import numpy as np
import pytest

from neural_tomography._errors import DimensionMismatchError, UsageError
from neural_tomography._mle import (
    Estimate,
    MleConfig,
    _line_search,
    dominant_eigenvector,
    log_likelihood,
    mle_density,
    mle_pure,
    reconstruct,
    reconstruct_batch,
)
from neural_tomography._povm import computational_basis_povm
from neural_tomography._quantum import (
    DensityMatrix,
    PureState,
    born_probabilities,
    fidelity,
    haar_random_pure,
    maximally_mixed,
)
from neural_tomography._sampler import sample_counts
from tests.helpers import assert_density_matrix


def exact_probs(state, povm):
    return born_probabilities(state.projector(), povm).values


def test_maximally_mixed_is_a_fixed_point(sic6):
    freqs = born_probabilities(maximally_mixed(6), sic6).values
    result = mle_density(freqs, sic6)
    assert result.converged
    assert result.iterations_used == 1
    assert np.allclose(result.rho_hat.matrix, np.eye(6) / 6, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_noise_free_pure_state_reconstruction(sic6, seed):
    psi = haar_random_pure(6, seed)
    result = mle_density(exact_probs(psi, sic6), sic6)
    assert fidelity(psi, result.rho_hat) > 1 - 1e-9
    assert result.converged
    assert result.iterations_used <= 10
    assert_density_matrix(result.rho_hat)


@pytest.mark.slow
def test_noise_free_reconstruction_of_many_states(sic6):
    for seed in range(100):
        psi = haar_random_pure(6, 1000 + seed)
        result = mle_density(exact_probs(psi, sic6), sic6)
        assert result.converged
        assert fidelity(psi, result.rho_hat) > 1 - 1e-6


def test_noise_free_qubit_reconstruction(sic2):
    psi = haar_random_pure(2, 3)
    assert fidelity(psi, mle_density(exact_probs(psi, sic2), sic2).rho_hat) > 1 - 1e-6


def test_shot_noise_baseline(sic6, rng):
    fidelities = []
    for _ in range(20):
        psi = haar_random_pure(6, rng)
        probs = born_probabilities(psi.projector(), sic6)
        freqs = sample_counts(probs, 10_000, rng) / 10_000
        fidelities.append(fidelity(psi, mle_density(freqs, sic6).rho_hat))
    assert np.mean(fidelities) >= 0.98


def test_debug_mode_checks_every_iterate(sic6, rng):
    psi = haar_random_pure(6, rng)
    freqs = sample_counts(born_probabilities(psi.projector(), sic6), 1000, rng) / 1000
    result = mle_density(freqs, sic6, MleConfig(debug=True))
    assert result.log_likelihood >= log_likelihood(freqs, np.eye(6) / 6, sic6)


def test_likelihood_is_monotone(sic6, rng):
    psi = haar_random_pure(6, rng)
    freqs = sample_counts(born_probabilities(psi.projector(), sic6), 2000, rng) / 2000
    values = [
        mle_density(freqs, sic6, MleConfig(max_iterations=n)).log_likelihood
        for n in (1, 2, 5, 20, 100)
    ]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_reconstruction_is_permutation_invariant(sic6, rng):
    psi = haar_random_pure(6, rng)
    freqs = sample_counts(born_probabilities(psi.projector(), sic6), 5000, rng) / 5000
    order = rng.permutation(36)
    direct = mle_density(freqs, sic6).rho_hat.matrix
    permuted = mle_density(freqs[order], sic6.permuted(order)).rho_hat.matrix
    assert np.allclose(direct, permuted, atol=1e-6)


def test_reconstruction_of_its_own_output_is_stable(sic6, rng):
    psi = haar_random_pure(6, rng)
    mixed = DensityMatrix(0.7 * psi.projector().matrix + 0.3 * np.eye(6) / 6)
    first = mle_density(born_probabilities(mixed, sic6).values, sic6).rho_hat
    second = mle_density(born_probabilities(first, sic6).values, sic6).rho_hat
    assert np.allclose(first.matrix, mixed.matrix, atol=1e-8)
    assert np.allclose(second.matrix, first.matrix, atol=1e-8)


def test_reconstruction_of_a_pure_output_is_stable(sic6, rng):
    psi = haar_random_pure(6, rng)
    first = mle_density(exact_probs(psi, sic6), sic6).rho_hat
    second = mle_density(born_probabilities(first, sic6).values, sic6).rho_hat
    assert np.allclose(second.matrix, first.matrix, atol=1e-8)
    assert np.linalg.matrix_rank(second.matrix, tol=1e-8) == 1


def test_reconstruction_with_an_incomplete_povm():
    freqs = np.array([0.2, 0.3, 0.5])
    result = mle_density(freqs, computational_basis_povm(3))
    assert result.converged
    assert np.allclose(result.rho_hat.matrix, np.diag(freqs), atol=1e-10)


def test_step_search_extrapolates_to_the_psd_boundary(sic2):
    freqs = exact_probs(PureState.from_vector([1, 0]), sic2)
    rho = np.eye(2, dtype=complex) / 2
    direction = 0.15 * np.diag([1.0, -1.0]).astype(complex)
    step = _line_search(freqs, rho, direction, log_likelihood(freqs, rho, sic2), sic2)
    assert step is not None
    smallest = np.linalg.eigvalsh(step[0])[0]
    assert 0 <= smallest < 1e-3


def test_non_convergence_is_flagged(sic6, caplog):
    caplog.set_level(logging.WARNING, logger="neural_tomography")
    psi = haar_random_pure(6, 0)
    result = mle_density(exact_probs(psi, sic6), sic6, MleConfig(max_iterations=1))
    assert not result.converged
    assert result.iterations_used == 1
    assert "did not converge" in caplog.text
    assert_density_matrix(result.rho_hat)


def test_frequencies_are_renormalised(sic2):
    psi = haar_random_pure(2, 5)
    probs = exact_probs(psi, sic2)
    scaled = mle_density(3 * probs, sic2).rho_hat.matrix
    assert np.allclose(scaled, mle_density(probs, sic2).rho_hat.matrix, atol=1e-9)


@pytest.mark.parametrize(
    ("freqs", "error"),
    (
        (np.full(5, 0.2), DimensionMismatchError),
        (np.zeros(4), UsageError),
        (np.array([1.0, -0.1, 0.05, 0.05]), UsageError),
    ),
    ids=("length", "zero", "negative"),
)
def test_invalid_frequencies(sic2, freqs, error):
    with pytest.raises(error):
        mle_density(freqs, sic2)


def test_mle_config_validation():
    with pytest.raises(UsageError):
        MleConfig(convergence_tol=0)
    with pytest.raises(UsageError):
        MleConfig(max_iterations=0)


# Pure-state estimate
# ===================
def test_mle_pure_recovers_noise_free_state(sic6):
    psi = haar_random_pure(6, 42)
    state, result = mle_pure(exact_probs(psi, sic6), sic6)
    assert abs(np.vdot(psi.amplitudes, state.amplitudes)) ** 2 > 1 - 1e-6
    assert not result.degenerate
    assert fidelity(psi, result.rho_hat) > 1 - 1e-6


def test_mle_pure_flags_degenerate_spectrum(sic6, caplog):
    caplog.set_level(logging.WARNING, logger="neural_tomography")
    freqs = born_probabilities(maximally_mixed(6), sic6).values
    state, result = mle_pure(freqs, sic6)
    assert result.degenerate
    assert state.dim == 6
    assert "degenerate" in caplog.text


def test_pure_constraint_does_not_lower_fidelity_on_pure_data(sic6, rng):
    for _ in range(3):
        psi = haar_random_pure(6, rng)
        freqs = exact_probs(psi, sic6)
        mixed = mle_density(freqs, sic6)
        _, pure = mle_pure(freqs, sic6)
        assert fidelity(psi, pure.rho_hat) >= fidelity(psi, mixed.rho_hat) - 1e-9


def test_dominant_eigenvector_tie_break():
    state, degenerate = dominant_eigenvector(DensityMatrix(np.diag([0.5, 0.5, 0.0])))
    assert degenerate
    assert np.isclose(np.abs(state.amplitudes[:2]), 1).any()
    state, degenerate = dominant_eigenvector(DensityMatrix(np.diag([0.2, 0.8])))
    assert not degenerate
    assert np.allclose(state.amplitudes, [0, 1])


def test_reconstruct_honours_enforce_pure(sic2):
    psi = haar_random_pure(2, 9)
    result = reconstruct(exact_probs(psi, sic2), sic2, MleConfig(enforce_pure=True))
    assert np.linalg.matrix_rank(result.rho_hat.matrix, tol=1e-8) == 1


# Batches
# =======
def test_reconstruct_batch_keeps_order(sic2):
    rows = np.stack([exact_probs(haar_random_pure(2, seed), sic2) for seed in range(6)])
    serial = reconstruct_batch(rows, sic2)
    threaded = reconstruct_batch(rows, sic2, workers=3)
    for a, b in zip(serial, threaded):
        assert np.array_equal(a.rho_hat.matrix, b.rho_hat.matrix)
    with pytest.raises(UsageError):
        reconstruct_batch(rows, sic2, workers=0)


def test_estimate_from_result(sic2):
    result = mle_density(np.full(4, 0.25), sic2)
    estimate = Estimate.from_result(7, "nn", result, pure=True)
    assert (estimate.id, estimate.arm, estimate.pure) == (7, "nn", True)
    assert estimate.rho is result.rho_hat
    assert estimate.iterations == result.iterations_used
