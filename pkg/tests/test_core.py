from __future__ import annotations

import numpy as np
import pytest

from conftest import PAULI, basis_probabilities, eigen_projectors, kron_all, random_state
from vqst import core


@pytest.mark.parametrize("label", ["X", "Y", "Z"])
def test_rotation_maps_eigenvectors_to_computational_basis(label):
    v = core.rotation_matrix(label)
    assert np.allclose(v.conj().T @ v, np.eye(2), atol=1e-14)
    vals, vecs = np.linalg.eigh(PAULI[label])
    plus, minus = vecs[:, np.argmax(vals)], vecs[:, np.argmin(vals)]
    assert abs(abs((v @ plus)[0]) - 1) < 1e-12
    assert abs(abs((v @ minus)[1]) - 1) < 1e-12


def test_rotation_rejects_unknown_label():
    with pytest.raises(ValueError):
        core.rotation_matrix("W")
    with pytest.raises(ValueError, match="site 2"):
        core.basis_codes("XQ")


def test_big_endian_indexing():
    assert core.bits_to_index([1, 0, 0]) == 4
    assert core.bits_to_index([0, 0, 1]) == 1
    assert core.bitstring(5, 4) == "0101"
    idx = np.arange(64)
    assert np.array_equal(core.bits_to_index(core.index_to_bits(idx, 6)), idx)
    assert core.all_configurations(3)[6].tolist() == [1, 1, 0]


def test_n_qubits_of_rejects_non_power_of_two():
    assert core.n_qubits_of(np.zeros(32)) == 5
    with pytest.raises(core.DimensionError):
        core.n_qubits_of(np.zeros(12))


@pytest.mark.parametrize("seed", range(3))
def test_local_rotation_matches_kronecker_product(seed):
    rng = np.random.default_rng(seed)
    n = 5
    psi = random_state(n, seed)
    basis = "".join(rng.choice(list("XYZ"), size=n))
    full = kron_all([core.rotation_matrix(p) for p in basis])
    assert np.allclose(core.apply_local_rotation(psi, basis), full @ psi, atol=1e-12)
    assert np.allclose(core.apply_local_rotation(psi, basis, adjoint=True), full.conj().T @ psi, atol=1e-12)
    # probabilities agree with the eigenvector oracle, independent of phase conventions
    assert np.allclose(np.abs(full @ psi) ** 2, basis_probabilities(psi, basis), atol=1e-12)


def test_rotate_many_matches_single_rotations():
    n = 4
    psi = random_state(n, 7)
    bases = ["XYZX", "ZZZZ", "YYXZ"]
    codes = np.stack([core.basis_codes(b) for b in bases])
    out = core.rotate_many(psi, codes)
    for k, b in enumerate(bases):
        assert np.allclose(out[k], core.apply_local_rotation(psi, b), atol=1e-13)
    back = core.rotate_many(out, codes, adjoint=True)
    assert np.allclose(back, np.broadcast_to(psi, back.shape), atol=1e-12)


def test_identity_label_leaves_site_untouched():
    psi = random_state(3, 1)
    assert np.allclose(core.apply_local_rotation(psi, "III"), psi)


def test_overlap_matches_projector_oracle():
    n = 3
    psi = random_state(n, 3)
    basis = "YXZ"
    u = kron_all([eigen_projectors(c) for c in basis])
    for j in range(1 << n):
        amp = core.overlap(core.bitstring(j, n), basis, psi)
        assert abs(abs(amp) ** 2 - abs((u @ psi)[j]) ** 2) < 1e-12


def test_fidelity_properties():
    a, b = random_state(4, 0), random_state(4, 1)
    assert core.fidelity(a, a) == pytest.approx(1.0, abs=1e-12)
    assert core.fidelity(a, np.exp(0.7j) * a) == pytest.approx(1.0, abs=1e-12)
    assert core.fidelity(a, b) == pytest.approx(core.fidelity(b, a), abs=1e-14)
    assert 0.0 <= core.fidelity(a, b) <= 1.0
    with pytest.raises(core.NormalizationError):
        core.fidelity(a, 2 * b)
    with pytest.raises(core.DimensionError):
        core.fidelity(a, random_state(3, 0))


def test_basis_state_and_random_state_are_normalized(rng):
    assert core.norm_squared(core.basis_state(3, 3)) == 1.0
    core.check_normalized(core.random_state(6, rng))
