from __future__ import annotations

import io
import sys
from collections.abc import Callable
from unittest.mock import patch

import numpy as np
import pytest
from numpy.polynomial import hermite

from neural_tomography._cli import main
from neural_tomography._denoiser import NetworkParams
from neural_tomography._quantum import DensityMatrix


def assert_density_matrix(rho: DensityMatrix | np.ndarray, atol: float = 1e-10) -> None:
    """Hermitian, unit trace and positive semidefinite within ``atol``."""
    __tracebackhide__ = True
    matrix = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    assert np.max(np.abs(matrix - matrix.conj().T)) <= atol, "not Hermitian"
    assert abs(np.trace(matrix).real - 1) <= atol, "trace is not 1"
    assert np.linalg.eigvalsh(matrix)[0] >= -atol, "not positive semidefinite"


def finite_difference_gradient(
    loss: Callable[[], float], params: NetworkParams, step: float = 1e-6
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Central differences of ``loss()`` with respect to every parameter, perturbed in place."""
    grads = []
    for w, b in params.layers:
        pair = []
        for theta in (w, b):
            grad = np.zeros_like(theta)
            for index in np.ndindex(theta.shape):
                original = theta[index]
                theta[index] = original + step
                upper = loss()
                theta[index] = original - step
                lower = loss()
                theta[index] = original
                grad[index] = (upper - lower) / (2 * step)
            pair.append(grad)
        grads.append((pair[0], pair[1]))
    return grads


def relative_error(
    analytic: list[tuple[np.ndarray, np.ndarray]], numeric: list[tuple[np.ndarray, np.ndarray]]
) -> float:
    """``‖a − n‖ / (‖a‖ + ‖n‖)`` over all parameters together."""
    a = np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in analytic])
    n = np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in numeric])
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), 1e-300))


def gauss_hermite_integral(func: Callable[[np.ndarray], np.ndarray], width: float) -> float:
    """``∫ func(z) dz`` for integrands ``polynomial × exp(−2z²/width²)``."""
    x, weights = hermite.hermgauss(60)
    z = x * width / np.sqrt(2)
    return float(np.dot(weights, func(z) * np.exp(x**2)) * width / np.sqrt(2))


def get_cmd_output(cmd: list[str]) -> tuple[int | str | None, str]:
    """Exit code and stdout of a command that exits through argparse (``--help``, usage errors)."""
    __tracebackhide__ = True
    stdout = io.StringIO()
    with pytest.raises(SystemExit) as exc_info, patch.object(sys, "stdout", stdout):
        main(cmd)
    return exc_info.value.code, stdout.getvalue()
