"""Shared primitives: bit configurations, dense states, local Pauli rotations.

Conventions used throughout the package:

* qubit 1 is the leftmost bit and the most significant bit of the integer
  index (``index = sum_i s_i * 2**(N - i)``);
* a measurement basis is a string over ``"XYZ"`` with one letter per qubit;
* the rotation ``V(p)`` for a Pauli ``p`` maps its +1 eigenvector to ``|0>``
  and its -1 eigenvector to ``|1>``, so outcome bit 0 means eigenvalue +1.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

PAULI_LABELS = "XYZ"
NORM_ATOL = 1e-10

_SQ2 = 1.0 / np.sqrt(2.0)
_ROTATIONS = {
    "X": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "Y": np.array([[_SQ2, -1j * _SQ2], [_SQ2, 1j * _SQ2]], dtype=complex),
    "Z": np.eye(2, dtype=complex),
    "I": np.eye(2, dtype=complex),
}
# stacked in label-code order X=0, Y=1, Z=2
ROTATION_STACK = np.stack([_ROTATIONS[p] for p in PAULI_LABELS])


class DimensionError(ValueError):
    """Raised when qubit counts of the operands disagree."""


class NormalizationError(ValueError):
    """Raised when a state that must be normalized is not."""


def rotation_matrix(pauli: str) -> np.ndarray:
    """Return the 2x2 unitary taking the eigenbasis of ``pauli`` to the computational basis."""
    try:
        return _ROTATIONS[pauli].copy()
    except KeyError:
        raise ValueError(f"unknown Pauli label {pauli!r}") from None


def basis_codes(basis: str | Sequence[str]) -> np.ndarray:
    """Encode a Pauli string as an int8 array (X=0, Y=1, Z=2)."""
    codes = np.empty(len(basis), dtype=np.int8)
    for i, p in enumerate(basis):
        k = PAULI_LABELS.find(p)
        if k < 0 or len(p) != 1:
            raise ValueError(f"unknown Pauli label {p!r} at site {i + 1}")
        codes[i] = k
    return codes


def n_qubits_of(state: np.ndarray) -> int:
    """Infer N from a length-2**N amplitude vector."""
    dim = state.shape[-1]
    n = dim.bit_length() - 1
    if dim < 1 or 1 << n != dim:
        raise DimensionError(f"state length {dim} is not a power of two")
    return n


def bits_to_index(bits: Sequence[int] | np.ndarray) -> int | np.ndarray:
    """Big-endian encoding of bit configurations.

    Accepts a single configuration ``(N,)`` or a batch ``(B, N)``.
    """
    arr = np.asarray(bits, dtype=np.int64)
    n = arr.shape[-1]
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    out = arr @ weights
    return int(out) if arr.ndim == 1 else out


def index_to_bits(index: int | np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`bits_to_index`; returns uint8 bits with qubit 1 first."""
    idx = np.asarray(index, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[..., None] >> shifts) & 1).astype(np.uint8)


def bitstring(index: int, n: int) -> str:
    return format(int(index), f"0{n}b")


def all_configurations(n: int) -> np.ndarray:
    """All 2**n configurations as a (2**n, n) uint8 array, in index order."""
    return index_to_bits(np.arange(1 << n), n)


def basis_state(index: int, n: int) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=complex)
    psi[index] = 1.0
    return psi


def random_state(n: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return psi / np.linalg.norm(psi)


def norm_squared(state: np.ndarray) -> float:
    return float(np.vdot(state, state).real)


def check_normalized(state: np.ndarray, name: str = "state", atol: float = NORM_ATOL) -> None:
    deviation = abs(norm_squared(state) - 1.0)
    if deviation > atol:
        raise NormalizationError(f"{name} is not normalized (| |psi|^2 - 1 | = {deviation:.3e})")


def _site_matrices(basis, adjoint: bool) -> np.ndarray:
    if isinstance(basis, np.ndarray) and basis.dtype.kind in "iu":
        mats = ROTATION_STACK[basis]
    else:
        mats = np.stack([_ROTATIONS[p] if p in _ROTATIONS else rotation_matrix(p) for p in basis])
    return mats.conj().transpose(0, 2, 1) if adjoint else mats


def apply_site_matrices(state: np.ndarray, mats: np.ndarray) -> np.ndarray:
    """Apply ``mats[0] (x) ... (x) mats[N-1]`` to a dense state one qubit at a time.

    ``state`` may be a single vector ``(2**N,)`` or a batch ``(K, 2**N)``; in
    the batched case ``mats`` has shape ``(K, N, 2, 2)``.
    """
    batched = state.ndim == 2
    n = n_qubits_of(state)
    if mats.shape[-3] != n:
        raise DimensionError(f"{mats.shape[-3]} site factors for a {n}-qubit state")
    out = np.asarray(state, dtype=complex)
    if not batched:
        out = out[None]
        mats = mats[None]
    k = out.shape[0]
    for i in range(n):
        m = mats[:, i]
        if k == 1 and np.array_equal(m[0], _ROTATIONS["Z"]):
            continue
        view = out.reshape(k, 1 << i, 2, 1 << (n - i - 1))
        out = np.einsum("kab,kxby->kxay", m, view).reshape(k, -1)
    return out if batched else out[0]


def apply_local_rotation(state: np.ndarray, basis, adjoint: bool = False) -> np.ndarray:
    """Return ``(V_1 (x) ... (x) V_N) state`` without forming the full matrix.

    With ``adjoint=True`` the conjugate-transposed factors are applied, which
    undoes the forward rotation.
    """
    n = n_qubits_of(state)
    if len(basis) != n:
        raise DimensionError(f"basis of length {len(basis)} for a {n}-qubit state")
    return apply_site_matrices(state, _site_matrices(basis, adjoint))


def rotate_many(state: np.ndarray, codes: np.ndarray, adjoint: bool = False) -> np.ndarray:
    """Rotate one state (or one state per basis) into each basis of ``codes`` (K, N).

    Returns a (K, 2**N) array. A 2-D ``state`` must already carry one row per basis.
    """
    codes = np.asarray(codes)
    mats = ROTATION_STACK[codes]
    if adjoint:
        mats = mats.conj().transpose(0, 1, 3, 2)
    stack = state if state.ndim == 2 else np.broadcast_to(state, (codes.shape[0], state.shape[0]))
    return apply_site_matrices(np.ascontiguousarray(stack), mats)


def overlap(outcome, basis, state: np.ndarray) -> complex:
    """Amplitude ``<j| U_basis |state>`` for a measured bit configuration ``j``."""
    n = n_qubits_of(state)
    if isinstance(outcome, str):
        outcome = [int(c) for c in outcome]
    if len(outcome) != n:
        raise DimensionError(f"outcome of length {len(outcome)} for a {n}-qubit state")
    return complex(apply_local_rotation(state, basis)[bits_to_index(outcome)])


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Squared overlap ``|<a|b>|**2`` of two normalized pure states."""
    if a.shape != b.shape:
        raise DimensionError(f"state shapes differ: {a.shape} vs {b.shape}")
    check_normalized(a, "first state")
    check_normalized(b, "second state")
    return float(min(1.0, abs(np.vdot(a, b)) ** 2))
