"""Matrix-product-state ansatz for likelihood tomography.

Site tensors are stored as arrays of shape ``(2, chi_left, chi_right)`` where
the leading axis is the physical bit. The state is left unnormalized; the
likelihood subtracts ``ln <psi|psi>`` per shot, which makes it invariant under
rescaling of any tensor.

Real parameter vectors interleave (real, imaginary) of every complex entry,
site after site, i.e. ``np.concatenate([A.ravel() for A in tensors]).view(float)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ROTATION_STACK, DimensionError, basis_codes, index_to_bits, n_qubits_of
from .hamiltonian import DEFAULT_DENSE_CAP
from .measurement import Records


class ZeroAmplitudeError(ArithmeticError):
    """A data record has zero probability under the model, so the loss is infinite."""


def bond_dimensions(n: int, chi_max: int) -> list[int]:
    """Bond sizes chi_0..chi_N with chi_i = min(2**i, 2**(N-i), chi_max)."""
    return [min(2**i, 2 ** (n - i), chi_max) for i in range(n + 1)]


def parameter_count(n: int, chi_max: int) -> int:
    """Number of complex parameters."""
    chi = bond_dimensions(n, chi_max)
    return sum(2 * chi[i] * chi[i + 1] for i in range(n))


@dataclass
class MPS:
    tensors: list[np.ndarray]
    chi_max: int

    kind = "mps"

    @property
    def n_qubits(self) -> int:
        return len(self.tensors)

    def copy(self) -> MPS:
        return MPS([t.copy() for t in self.tensors], self.chi_max)

    def get_parameters(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors]).view(np.float64).copy()

    def set_parameters(self, x: np.ndarray) -> None:
        z = np.ascontiguousarray(x, dtype=np.float64).view(complex)
        off = 0
        for k, t in enumerate(self.tensors):
            self.tensors[k] = z[off : off + t.size].reshape(t.shape).copy()
            off += t.size

    # training protocol
    def prepare_epoch(self, samples: int | None = None) -> None:
        pass

    def loss_and_gradient(self, records: Records, floor: float = 0.0):
        return mps_loss_and_gradient(self, records, floor)

    def loss(self, records: Records, floor: float = 0.0) -> float:
        return mps_loss(self, records, floor)

    def to_dense(self) -> np.ndarray:
        return mps_to_dense(self)

    def save(self, path) -> None:
        save_mps(self, path)


def init_mps(n: int, chi_max: int, seed: int | np.random.Generator) -> MPS:
    """Complex Gaussian tensors with entry scale 1/sqrt(chi_max)."""
    if n < 2 or chi_max < 1:
        raise ValueError("need N >= 2 and chi_max >= 1")
    rng = np.random.default_rng(seed)
    chi = bond_dimensions(n, chi_max)
    scale = 1.0 / np.sqrt(chi_max)
    tensors = []
    for i in range(n):
        shape = (2, chi[i], chi[i + 1])
        re = rng.normal(size=shape)
        im = rng.normal(size=shape)
        tensors.append(scale * (re + 1j * im) / np.sqrt(2.0))
    return MPS(tensors, chi_max)


def product_state_mps(site_states, chi_max: int = 1) -> MPS:
    """Embed a product state ``(x)_i site_states[i]`` exactly, padding bonds with zeros."""
    n = len(site_states)
    chi = bond_dimensions(n, chi_max)
    tensors = []
    for i, v in enumerate(site_states):
        t = np.zeros((2, chi[i], chi[i + 1]), dtype=complex)
        t[:, 0, 0] = v
        tensors.append(t)
    return MPS(tensors, chi_max)


def mps_amplitudes(m: MPS, bits: np.ndarray) -> np.ndarray:
    """Amplitudes for a batch of configurations ``bits`` of shape (B, N)."""
    bits = np.atleast_2d(bits)
    if bits.shape[1] != m.n_qubits:
        raise DimensionError(f"configurations of length {bits.shape[1]} for {m.n_qubits} sites")
    vec = m.tensors[0][bits[:, 0], 0, :]
    for i in range(1, m.n_qubits):
        vec = np.einsum("ba,bac->bc", vec, m.tensors[i][bits[:, i]])
    return vec[:, 0]


def mps_amplitude(m: MPS, s) -> complex:
    """The matrix product ``A^1_{s_1} ... A^N_{s_N}``."""
    if isinstance(s, str):
        s = [int(c) for c in s]
    return complex(mps_amplitudes(m, np.asarray(s)[None])[0])


def rotate_mps(m: MPS, basis, adjoint: bool = False) -> MPS:
    """Site-wise mixing ``A'_s = sum_t V[s, t] A_t`` representing ``U_basis |psi>``."""
    if len(basis) != m.n_qubits:
        raise DimensionError(f"basis of length {len(basis)} for {m.n_qubits} sites")
    codes = basis if isinstance(basis, np.ndarray) else basis_codes(basis)
    out = []
    for t, c in zip(m.tensors, codes):
        v = ROTATION_STACK[c]
        if adjoint:
            v = v.conj().T
        out.append(np.einsum("st,tab->sab", v, t))
    return MPS(out, m.chi_max)


def _left_environments(m: MPS) -> tuple[list[np.ndarray], list[float]]:
    """Normalized transfer matrices from the left with their log scales.

    ``env[i]`` (chi_i x chi_i) times ``exp(logs[i])`` equals
    ``sum conj(P) (x) P`` over row vectors P = A^1 ... A^i.
    """
    env = [np.ones((1, 1), dtype=complex)]
    logs = [0.0]
    for t in m.tensors:
        e = np.einsum("sab,ac,scd->bd", t.conj(), env[-1], t)
        scale = np.abs(e).max() or 1.0
        env.append(e / scale)
        logs.append(logs[-1] + np.log(scale))
    return env, logs


def _right_environments(m: MPS) -> tuple[list[np.ndarray], list[float]]:
    n = m.n_qubits
    env = [None] * (n + 1)
    logs = [0.0] * (n + 1)
    env[n] = np.ones((1, 1), dtype=complex)
    for i in range(n - 1, -1, -1):
        t = m.tensors[i]
        e = np.einsum("sab,bd,scd->ac", t.conj(), env[i + 1], t)
        scale = np.abs(e).max() or 1.0
        env[i] = e / scale
        logs[i] = logs[i + 1] + np.log(scale)
    return env, logs


def mps_log_norm_squared(m: MPS) -> float:
    env, logs = _left_environments(m)
    return float(np.log(env[-1][0, 0].real) + logs[-1])


def mps_norm_squared(m: MPS) -> float:
    """``<psi|psi>`` by transfer-matrix contraction, O(N chi^3)."""
    return float(np.exp(mps_log_norm_squared(m)))


def mps_to_dense(m: MPS, dense_cap: int = DEFAULT_DENSE_CAP + 6) -> np.ndarray:
    """Normalized dense amplitude vector."""
    if m.n_qubits > dense_cap:
        raise DimensionError(f"N={m.n_qubits} exceeds the dense cap {dense_cap}")
    psi = m.tensors[0][:, 0, :]
    for t in m.tensors[1:]:
        psi = np.einsum("xa,sab->xsb", psi, t).reshape(-1, t.shape[2])
    psi = psi[:, 0]
    return psi / np.linalg.norm(psi)


def dense_to_mps(state: np.ndarray, chi_max: int | None = None) -> MPS:
    """Exact (or SVD-truncated) MPS of a dense state via successive SVDs."""
    n = n_qubits_of(state)
    chi_max = chi_max or 2 ** (n // 2)
    chi = bond_dimensions(n, chi_max)
    tensors = []
    rest = state.reshape(1, -1)
    for i in range(n - 1):
        mat = rest.reshape(chi[i] * 2, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        k = chi[i + 1]
        u = np.pad(u[:, :k], ((0, 0), (0, k - min(k, u.shape[1]))))
        sv = np.pad((s[:k, None] * vh[:k]), ((0, k - min(k, len(s))), (0, 0)))
        tensors.append(u.reshape(chi[i], 2, k).transpose(1, 0, 2))
        rest = sv
    tensors.append(rest.reshape(chi[n - 1], 2, 1).transpose(1, 0, 2))
    return MPS(tensors, chi_max)


def _rotated_site_stacks(m: MPS) -> list[np.ndarray]:
    """Per site: the 6 matrices ``(V_p A)_j`` indexed by ``3 labels x 2 outcomes``."""
    return [
        np.einsum("pst,tab->psab", ROTATION_STACK, t).reshape(6, t.shape[1], t.shape[2])
        for t in m.tensors
    ]


def _apply_left(vec: np.ndarray, stack: np.ndarray, sel: np.ndarray) -> np.ndarray:
    """Row-wise ``vec[r] @ stack[sel[r]]`` via one GEMM against all six matrices."""
    six, chl, chr_ = stack.shape
    allk = (vec @ stack.transpose(1, 0, 2).reshape(chl, six * chr_)).reshape(-1, six, chr_)
    return allk[np.arange(len(vec)), sel]


def _apply_right(stack: np.ndarray, vec: np.ndarray, sel: np.ndarray) -> np.ndarray:
    """Row-wise ``stack[sel[r]] @ vec[r]``."""
    six, chl, chr_ = stack.shape
    allk = (vec @ stack.transpose(2, 0, 1).reshape(chr_, six * chl)).reshape(-1, six, chl)
    return allk[np.arange(len(vec)), sel]


def _record_chain(m: MPS, records: Records):
    stacks = _rotated_site_stacks(m)
    sel = records.stack_selectors()  # (R, N) index into each site's stack
    n = m.n_qubits
    left = [None] * (n + 1)
    left[0] = np.ones((len(records), 1), dtype=complex)
    for i in range(n):
        left[i + 1] = _apply_left(left[i], stacks[i], sel[:, i])
    return stacks, sel, left


def _check_nonzero(amp: np.ndarray, records: Records) -> None:
    zero = np.flatnonzero(amp == 0)
    if len(zero):
        r = zero[0]
        raise ZeroAmplitudeError(
            f"record (basis {records.basis[r]}, outcome {format(int(records.outcome[r]), f'0{records.n_qubits}b')}) "
            "has zero amplitude"
        )


def mps_loss(m: MPS, records: Records, floor: float = 0.0) -> float:
    """``-sum_records count * ln(p + floor)`` with ``p = |<j|U_p|psi>|^2 / <psi|psi>``."""
    _, _, left = _record_chain(m, records)
    amp = left[-1][:, 0]
    log_z = mps_log_norm_squared(m)
    if floor == 0.0:
        _check_nonzero(amp, records)
        return float(-(records.count * (np.log(np.abs(amp) ** 2) - log_z)).sum())
    p = np.abs(amp) ** 2 / np.exp(log_z)
    return float(-(records.count * np.log(p + floor)).sum())


def mps_loss_and_gradient(m: MPS, records: Records, floor: float = 0.0) -> tuple[float, np.ndarray]:
    """Loss and its gradient with respect to the real parameter vector.

    The gradient is accumulated analytically from left/right partial products
    of each record's rotated chain and from transfer-matrix environments for
    the normalization term.
    """
    if len(records) == 0:
        raise ValueError("empty record set")
    n = m.n_qubits
    stacks, sel, left = _record_chain(m, records)
    amp = left[-1][:, 0]
    log_z = mps_log_norm_squared(m)
    z = np.exp(log_z)
    p = np.abs(amp) ** 2 / z
    if floor == 0.0:
        _check_nonzero(amp, records)
        loss = float(-(records.count * (np.log(np.abs(amp) ** 2) - log_z)).sum())
        # dL/d conj(psi_r)
        g = -records.count / amp.conj()
        norm_weight = records.total
    else:
        loss = float(-(records.count * np.log(p + floor)).sum())
        g = -records.count * amp / (np.abs(amp) ** 2 + floor * z)
        norm_weight = float((records.count * p / (p + floor)).sum())

    # right partial products, folded into the gradient sweep
    right = np.ones((len(records), 1), dtype=complex)
    groups = records.stack_groups()
    env_l, logs_l = _left_environments(m)
    env_r, logs_r = _right_environments(m)
    grads = [None] * n
    for i in range(n - 1, -1, -1):
        weighted = (2.0 * g)[:, None] * left[i].conj()
        rc = right.conj()
        g6 = np.zeros((6, left[i].shape[1], right.shape[1]), dtype=complex)
        for k, rows in groups[i]:
            g6[k] = weighted[rows].T @ rc[rows]
        g6 = g6.reshape(3, 2, left[i].shape[1], right.shape[1])
        # back through the rotation: G_A[t] = sum_{p,s} conj(V_p[s, t]) G'[p, s]
        grad = np.einsum("pst,psab->tab", ROTATION_STACK.conj(), g6)
        # normalization term: + W * ln Z, packed gradient 2 * (EL A_s ER^T) / Z
        t = m.tensors[i]
        scale = np.exp(logs_l[i] + logs_r[i + 1] - log_z)
        grad += norm_weight * 2.0 * scale * np.einsum("ac,scd,bd->sab", env_l[i], t, env_r[i + 1])
        grads[i] = grad
        right = _apply_right(stacks[i], right, sel[:, i])
    return loss, np.concatenate([gr.ravel() for gr in grads]).view(np.float64)


def save_mps(m: MPS, path) -> None:
    arrays = {f"site_{i}": t for i, t in enumerate(m.tensors)}
    np.savez(path, kind="mps", n_qubits=m.n_qubits, chi_max=m.chi_max, **arrays)


def load_mps(path) -> MPS:
    with np.load(path) as f:
        if str(f["kind"]) != "mps":
            raise ValueError(f"{path}: not an MPS checkpoint")
        n = int(f["n_qubits"])
        return MPS([f[f"site_{i}"].copy() for i in range(n)], int(f["chi_max"]))
