"""Likelihood machinery shared by the neural-network ansaetze.

A neural ansatz supplies complex log-amplitudes ``u(s) + i phi(s)`` on a set
``S`` of unique sampled configurations. Record amplitudes are

    a_r = sum_{s in S} psi(s) prod_i <j_i| V_i |s_i>,

with ``psi`` optionally renormalized over ``S``. Everything returned here is
expressed as cotangents ``dL/du`` and ``dL/dphi`` per support element, which
each ansatz then back-propagates through its own parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import ROTATION_STACK, index_to_bits, rotate_many
from .measurement import Records
from .mps import ZeroAmplitudeError

# above this many qubits the direct product-of-factors sum is used
DENSE_SCATTER_CAP = 20


@dataclass
class SampleSet:
    """Unique configurations (as indices) with their multiplicities."""

    unique: np.ndarray
    counts: np.ndarray

    @property
    def size(self) -> int:
        return int(self.counts.sum())

    def raw(self) -> np.ndarray:
        return np.repeat(self.unique, self.counts)


def support_amplitudes(log_amp: np.ndarray, renormalize: bool) -> tuple[np.ndarray, np.ndarray]:
    """Amplitudes on S and their probabilities, renormalized over S if requested."""
    u = log_amp.real
    if renormalize:
        log_z = logsumexp(2 * u)
        psi = np.exp(log_amp - 0.5 * log_z)
    else:
        psi = np.exp(log_amp)
    return psi, np.abs(psi) ** 2


def _dense_forward(n, support, psi, records: Records):
    vec = np.zeros(1 << n, dtype=complex)
    vec[support] = psi
    rotated = rotate_many(vec, records.codes)
    return rotated[records.basis, records.outcome]


def _dense_adjoint(n, support, g, records: Records):
    k = records.codes.shape[0]
    back = np.zeros((k, 1 << n), dtype=complex)
    np.add.at(back, (records.basis, records.outcome), g)
    return rotate_many(back, records.codes, adjoint=True).sum(axis=0)[support]


def transfer_factors(support: np.ndarray, records: Records, n: int, rows: slice = slice(None)) -> np.ndarray:
    """``T[r, s] = prod_i <j_i|V_i|s_i>`` for records ``rows`` and all of S."""
    sbits = index_to_bits(support, n)
    jbits = records.bits()[rows]
    codes = records.site_codes()[rows]
    out = np.ones((len(jbits), len(support)), dtype=complex)
    for i in range(n):
        v = ROTATION_STACK[codes[:, i]]  # (R, 2, 2)
        out *= v[np.arange(len(jbits))[:, None], jbits[:, i][:, None], sbits[None, :, i]]
    return out


def record_amplitudes(n: int, support: np.ndarray, psi: np.ndarray, records: Records,
                      method: str = "auto", chunk: int = 4096) -> np.ndarray:
    """Rotated amplitude of every record from the sample-restricted state."""
    if method == "auto":
        method = "dense" if n <= DENSE_SCATTER_CAP else "direct"
    if method == "dense":
        return _dense_forward(n, support, psi, records)
    out = np.empty(len(records), dtype=complex)
    for start in range(0, len(records), chunk):
        rows = slice(start, start + chunk)
        out[rows] = transfer_factors(support, records, n, rows) @ psi
    return out


def _record_adjoint(n, support, g, records, method, chunk=4096):
    if method == "auto":
        method = "dense" if n <= DENSE_SCATTER_CAP else "direct"
    if method == "dense":
        return _dense_adjoint(n, support, g, records)
    out = np.zeros(len(support), dtype=complex)
    for start in range(0, len(records), chunk):
        rows = slice(start, start + chunk)
        out += transfer_factors(support, records, n, rows).conj().T @ g[rows]
    return out


def restricted_loss(n: int, support: np.ndarray, log_amp: np.ndarray, records: Records,
                    renormalize: bool = True, floor: float = 0.0, grad: bool = True,
                    method: str = "auto"):
    """Negative log-likelihood of ``records`` under the S-restricted state.

    Returns ``loss`` or ``(loss, dL/du, dL/dphi)`` with the cotangents indexed
    like ``support``.
    """
    if len(support) == 0:
        raise ValueError("empty sample support")
    psi, w = support_amplitudes(log_amp, renormalize)
    amp = record_amplitudes(n, support, psi, records, method)
    prob = np.abs(amp) ** 2
    if floor == 0.0 and np.any(prob == 0):
        r = int(np.flatnonzero(prob == 0)[0])
        raise ZeroAmplitudeError(
            f"record (basis {records.basis[r]}, outcome {format(int(records.outcome[r]), f'0{n}b')}) "
            "has zero amplitude on the sampled support"
        )
    loss = float(-(records.count * np.log(prob + floor)).sum())
    if not grad:
        return loss
    g = -records.count * amp / (prob + floor)  # dL/d conj(a_r)
    back = _record_adjoint(n, support, g, records, method)  # dL/d conj(psi_s)
    c = back.conj() * psi
    du = 2.0 * c.real
    if renormalize:
        du -= 2.0 * w * c.real.sum()
    dphi = -2.0 * c.imag
    return loss, du, dphi


def overlap_objective(log_amp: np.ndarray, target: np.ndarray, renormalize: bool):
    """``-|<target|psi>|^2`` over a support and its (u, phi) cotangents.

    ``target`` holds the target amplitudes on the same support. Without
    renormalization ``psi`` must already be normalized over the whole space.
    """
    psi, w = support_amplitudes(log_amp, renormalize)
    a = np.vdot(target, psi)
    c = np.conj(a) * target.conj() * psi
    du = -2.0 * c.real
    if renormalize:
        du += 2.0 * w * c.real.sum()
    dphi = 2.0 * c.imag
    return -float(abs(a) ** 2), du, dphi
