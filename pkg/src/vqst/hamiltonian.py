"""XY spin-chain dynamics: Hamiltonian, Krylov propagation, reference states.

Units: hbar = 1, couplings and fields in rad/s, times in seconds. Spin
convention: ``sigma_z|0> = +|0>``, ``sigma_z|1> = -|1>``, ``sigma_+|1> = |0>``.

State files (``write_state``/``read_state``) are little-endian binary: the
8-byte magic ``b"VQSTATE1"``, a uint32 qubit count N, then 2**N pairs of
float64 (real, imaginary) in big-endian bit-index order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .core import DimensionError, bits_to_index, check_normalized, n_qubits_of

DEFAULT_DENSE_CAP = 14
SECTOR_CAP = 20
STATE_MAGIC = b"VQSTATE1"


class EvolutionError(RuntimeError):
    """Raised when the Krylov propagator cannot reach the requested tolerance."""


@dataclass(frozen=True)
class XYModelParams:
    n_qubits: int
    j0: float = 2 * np.pi * 10.0
    alpha: float = 1.1
    field: float = 2 * np.pi * 1000.0

    def __post_init__(self):
        if self.n_qubits < 2:
            raise ValueError("XY model needs at least 2 qubits")
        if self.alpha <= 0 or self.j0 <= 0:
            raise ValueError("coupling prefactor and exponent must be positive")

    def coupling(self, i: int, j: int) -> float:
        """J_ij for 1-based sites i != j."""
        return self.j0 / abs(i - j) ** self.alpha

    def coupling_matrix(self) -> np.ndarray:
        n = self.n_qubits
        d = np.abs(np.subtract.outer(np.arange(n), np.arange(n))).astype(float)
        with np.errstate(divide="ignore"):
            jm = self.j0 / d**self.alpha
        np.fill_diagonal(jm, 0.0)
        return jm


@dataclass(frozen=True)
class HamiltonianMatrix:
    """Sparse full-space XY Hamiltonian."""

    params: XYModelParams
    matrix: sp.csr_matrix

    @property
    def n_qubits(self) -> int:
        return self.params.n_qubits

    def __matmul__(self, v):
        return self.matrix @ v


@dataclass(frozen=True)
class SectorOperator:
    """The Hamiltonian restricted to a fixed number of excitations (1-bits)."""

    params: XYModelParams
    excitations: int
    basis: np.ndarray  # sorted full-space indices spanning the sector
    matrix: sp.csr_matrix | None

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def embed(self, sector_vector: np.ndarray) -> np.ndarray:
        full = np.zeros(1 << self.params.n_qubits, dtype=complex)
        full[self.basis] = sector_vector
        return full

    def project(self, state: np.ndarray) -> np.ndarray:
        """Sector components of a full-space state; raises if weight leaks outside."""
        part = state[self.basis]
        leak = 1.0 - float(np.vdot(part, part).real) / float(np.vdot(state, state).real)
        if leak > 1e-12:
            raise ValueError(f"state has weight {leak:.3e} outside the {self.excitations}-excitation sector")
        return part.astype(complex)

    def __matmul__(self, v):
        return self.matrix @ v


def _popcount(x: np.ndarray) -> np.ndarray:
    c = np.zeros_like(x)
    y = x.copy()
    while np.any(y):
        c += y & 1
        y >>= 1
    return c


def _hopping_entries(params: XYModelParams, configs: np.ndarray, lookup):
    n = params.n_qubits
    rows, cols, vals = [], [], []
    pos = np.arange(len(configs))
    for i in range(1, n + 1):
        bi = (configs >> (n - i)) & 1
        for j in range(i + 1, n + 1):
            bj = (configs >> (n - j)) & 1
            sel = bi != bj
            if not np.any(sel):
                continue
            mask = (1 << (n - i)) | (1 << (n - j))
            rows.append(pos[sel])
            cols.append(lookup(configs[sel] ^ mask))
            vals.append(np.full(int(sel.sum()), params.coupling(i, j)))
    return rows, cols, vals


def _assemble(params: XYModelParams, configs: np.ndarray, lookup) -> sp.csr_matrix:
    n = params.n_qubits
    rows, cols, vals = _hopping_entries(params, configs, lookup)
    diag = params.field * (n - 2 * _popcount(configs)).astype(float)
    pos = np.arange(len(configs))
    rows.append(pos)
    cols.append(pos)
    vals.append(diag)
    dim = len(configs)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )


def build_hamiltonian(params: XYModelParams, dense_cap: int = DEFAULT_DENSE_CAP) -> HamiltonianMatrix:
    """Sparse ``sum_{i<j} J_ij (s+_i s-_j + s-_i s+_j) + B sum_j sz_j`` on all 2**N configurations."""
    if params.n_qubits > dense_cap:
        raise DimensionError(
            f"N={params.n_qubits} exceeds the full-space cap {dense_cap}; use sector_restrict"
        )
    configs = np.arange(1 << params.n_qubits, dtype=np.int64)
    return HamiltonianMatrix(params, _assemble(params, configs, lambda c: c))


def sector_basis(n: int, excitations: int) -> np.ndarray:
    if not 0 <= excitations <= n:
        raise ValueError(f"excitations must lie in [0, {n}]")
    configs = np.arange(1 << n, dtype=np.int64)
    basis = configs[_popcount(configs) == excitations]
    assert len(basis) == math.comb(n, excitations)
    return basis


def sector_restrict(
    h: HamiltonianMatrix | XYModelParams, excitations: int, build: bool = True
) -> SectorOperator:
    """Restrict the Hamiltonian to configurations with ``excitations`` 1-bits.

    Accepts either a built full-space Hamiltonian or bare parameters; the
    latter reaches N up to 20 without ever forming the full-space matrix.
    With ``build=False`` only the sector basis is enumerated.
    """
    params = h.params if isinstance(h, HamiltonianMatrix) else h
    if params.n_qubits > SECTOR_CAP:
        raise DimensionError(f"N={params.n_qubits} exceeds the sector cap {SECTOR_CAP}")
    basis = sector_basis(params.n_qubits, excitations)
    matrix = None
    if build:
        matrix = _assemble(params, basis, lambda c: np.searchsorted(basis, c))
    return SectorOperator(params, excitations, basis, matrix)


def neel_state(n: int) -> np.ndarray:
    """The product state |1,0,1,0,...>."""
    if n < 1:
        raise ValueError("need at least one qubit")
    psi = np.zeros(1 << n, dtype=complex)
    psi[bits_to_index([(i + 1) % 2 for i in range(n)])] = 1.0
    return psi


def neel_excitations(n: int) -> int:
    return (n + 1) // 2


def volume_law_state(n: int, sign_convention: str = "parity") -> np.ndarray:
    """Equal-weight superposition of doubled configurations ``|s s>`` with signs.

    ``sign_convention="parity"`` uses (-1)**(number of 1-bits of s);
    ``"integer"`` uses (-1)**(integer value of s), i.e. the last bit of s.
    """
    if n % 2:
        raise ValueError(f"volume-law state needs an even qubit count, got {n}")
    half = n // 2
    s = np.arange(1 << half, dtype=np.int64)
    if sign_convention == "parity":
        signs = 1 - 2 * (_popcount(s) & 1)
    elif sign_convention == "integer":
        signs = 1 - 2 * (s & 1)
    else:
        raise ValueError(f"unknown sign convention {sign_convention!r}")
    psi = np.zeros(1 << n, dtype=complex)
    psi[(s << half) | s] = signs * 2.0 ** (-n / 4)
    return psi


def _lanczos(matvec, v: np.ndarray, m_max: int):
    beta0 = np.linalg.norm(v)
    basis = [v / beta0]
    alphas, betas = [], []
    w = None
    for k in range(m_max):
        w = matvec(basis[k])
        a = np.vdot(basis[k], w).real
        w = w - a * basis[k] - (betas[-1] * basis[k - 1] if k else 0)
        # full reorthogonalization keeps T accurate to machine precision
        for q in basis:
            w -= np.vdot(q, w) * q
        alphas.append(a)
        b = np.linalg.norm(w)
        if b < 1e-13 * max(1.0, abs(a)):
            return np.array(basis), np.array(alphas), np.array(betas), 0.0
        betas.append(b)
        if k + 1 < m_max:
            basis.append(w / b)
    return np.array(basis), np.array(alphas), np.array(betas[: len(alphas) - 1]), betas[-1]


def krylov_expm_multiply(matvec, v: np.ndarray, t: float, tol: float = 1e-12,
                         m_max: int = 30, max_steps: int = 100000) -> np.ndarray:
    """Compute ``exp(-1j * H * t) @ v`` by adaptive-step Lanczos propagation.

    Each substep builds an ``m_max``-dimensional Krylov space and shrinks the
    step until the standard a-posteriori error estimate
    ``beta_m * |[exp(-iT dt)]_{m,1}|`` is below ``tol * dt / t``.
    """
    w = np.array(v, dtype=complex)
    if t == 0 or not np.any(w):
        return w
    remaining = float(t)
    dt = remaining
    for _ in range(max_steps):
        norm = np.linalg.norm(w)
        q, alphas, betas, beta_next = _lanczos(matvec, w, m_max)
        tri = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
        dt = min(dt, remaining) if beta_next else remaining
        for _ in range(200):
            # Pade-based expm keeps the tiny corner entry accurate to its own size,
            # which an eigendecomposition sum loses to cancellation
            y = scipy.linalg.expm(-1j * dt * tri)[:, 0]
            err = beta_next * abs(y[-1])
            if err <= tol * dt / t:
                break
            dt *= 0.5
        else:
            raise EvolutionError("Krylov step size underflow")
        w = norm * (y @ q)
        remaining -= dt
        if remaining <= 1e-15 * t:
            return w
        dt *= 2.0
    raise EvolutionError(f"Krylov propagation did not finish within {max_steps} steps")


def evolve(state: np.ndarray, h, t: float, tol: float = 1e-12) -> np.ndarray:
    """Schrodinger evolution ``exp(-iHt)|state>`` for ``t >= 0`` seconds.

    ``h`` may be a :class:`HamiltonianMatrix` (full-space state), a
    :class:`SectorOperator` (state given either in the sector or in the full
    space, returned in the same representation), or a bare matrix.
    """
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    check_normalized(state)
    if isinstance(h, SectorOperator):
        if len(state) == h.dimension and h.dimension != 1 << h.params.n_qubits:
            return krylov_expm_multiply(h.matrix.dot, state, t, tol)
        part = h.project(state)
        return h.embed(krylov_expm_multiply(h.matrix.dot, part, t, tol))
    matrix = h.matrix if isinstance(h, HamiltonianMatrix) else h
    if matrix.shape[0] != len(state):
        raise DimensionError(f"operator of size {matrix.shape[0]} for a state of length {len(state)}")
    return krylov_expm_multiply(matrix.dot, state, t, tol)


def energy(state: np.ndarray, h) -> float:
    matrix = h.matrix if isinstance(h, (HamiltonianMatrix, SectorOperator)) else h
    return float(np.vdot(state, matrix @ state).real)


def write_state(path: str | Path, state: np.ndarray) -> None:
    n = n_qubits_of(state)
    body = np.empty(2 * len(state), dtype="<f8")
    body[0::2] = state.real
    body[1::2] = state.imag
    with open(path, "wb") as fh:
        fh.write(STATE_MAGIC)
        fh.write(struct.pack("<I", n))
        fh.write(body.tobytes())


def read_state(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != STATE_MAGIC:
        raise ValueError(f"{path}: not a state file (bad magic)")
    (n,) = struct.unpack("<I", raw[8:12])
    body = np.frombuffer(raw[12:], dtype="<f8")
    if body.size != 2 << n:
        raise ValueError(f"{path}: expected {1 << n} amplitudes for N={n}, found {body.size / 2:g}")
    return body[0::2] + 1j * body[1::2]
