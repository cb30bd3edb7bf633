"""Independent dense oracles shared by the test modules.

Nothing here calls the package's rotation code: measurement probabilities are
built from eigenvectors of explicit Pauli matrices and Kronecker products.
"""

from __future__ import annotations

from functools import reduce

import numpy as np
import pytest

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_all(mats):
    return reduce(np.kron, mats)


def pauli_operator(observable: str) -> np.ndarray:
    return kron_all([PAULI[c] for c in observable])


def eigen_projectors(label: str) -> np.ndarray:
    """Rows are the +1 and -1 eigenvectors (conjugated) of a Pauli matrix."""
    vals, vecs = np.linalg.eigh(PAULI[label])
    order = np.argsort(-vals)
    return vecs[:, order].conj().T


def basis_probabilities(state: np.ndarray, basis: str) -> np.ndarray:
    """Outcome distribution of a product-basis measurement, bit 0 = eigenvalue +1."""
    u = kron_all([eigen_projectors(c) for c in basis])
    return np.abs(u @ state) ** 2


def oracle_loss(state: np.ndarray, records) -> float:
    """Dense negative log-likelihood from explicit projector probabilities."""
    state = state / np.linalg.norm(state)
    labels = ["".join("XYZ"[c] for c in codes) for codes in records.codes]
    cache = {}
    total = 0.0
    for k, j, c in zip(records.basis, records.outcome, records.count):
        if k not in cache:
            cache[k] = basis_probabilities(state, labels[k])
        total -= c * np.log(cache[k][j])
    return total


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)))
    return float(np.max(np.abs(a - b)) / scale)


def random_state(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return psi / np.linalg.norm(psi)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed after the test session
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
