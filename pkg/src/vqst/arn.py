"""Masked autoregressive network (MADE-style) wavefunction.

Inputs are the N bits mapped to +-1. Two tanh hidden layers each hold N
clusters of 3 units; cluster c sees only inputs with index < c, and output
cluster i (amplitude logit z_i, phase theta_i) sees only hidden clusters
c <= i. Hence site i's conditional depends on s_<i only, and

    psi(s) = prod_i sqrt(p_i(s_i)) * exp(2 pi 1j * s_i * theta_i)

with ``p_i(0) = sigmoid(z_i)``. The phase gauge fixes the s_i = 0 phase to zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import all_configurations, index_to_bits
from .hamiltonian import DEFAULT_DENSE_CAP
from .measurement import Records
from .nnqs import SampleSet, overlap_objective, restricted_loss

CLUSTER = 3
INIT_STD = 0.05
TWO_PI = 2.0 * np.pi


def made_masks(n: int, cluster: int = CLUSTER) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Connectivity masks in (inputs, outputs) layout for the three weight matrices."""
    hidden_deg = np.repeat(np.arange(n), cluster)  # cluster c has degree c
    inp = np.arange(n)
    m1 = inp[:, None] < hidden_deg[None, :]
    m2 = hidden_deg[:, None] <= hidden_deg[None, :]
    out_site = np.concatenate([inp, inp])  # amplitude logits then phases
    m3 = hidden_deg[:, None] <= out_site[None, :]
    return m1.astype(float), m2.astype(float), m3.astype(float)


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


@dataclass
class ARN:
    weights: list[np.ndarray]  # W1 (N, 3N), W2 (3N, 3N), W3 (3N, 2N); masked entries are zero
    biases: list[np.ndarray]  # b1 (3N,), b2 (3N,), b3 (2N,)
    masks: list[np.ndarray]
    rng: np.random.Generator
    renormalize: bool = True
    support: np.ndarray | None = None

    kind = "arn"

    @property
    def n_qubits(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_parameters(self) -> int:
        return int(sum(m.sum() for m in self.masks) + sum(b.size for b in self.biases))

    def get_parameters(self) -> np.ndarray:
        parts = [w[m > 0] for w, m in zip(self.weights, self.masks)] + list(self.biases)
        return np.concatenate(parts)

    def set_parameters(self, x: np.ndarray) -> None:
        off = 0
        for k, m in enumerate(self.masks):
            w = np.zeros_like(m)
            cnt = int(m.sum())
            w[m > 0] = x[off : off + cnt]
            self.weights[k] = w
            off += cnt
        for k, b in enumerate(self.biases):
            self.biases[k] = np.array(x[off : off + b.size])
            off += b.size

    def copy(self) -> ARN:
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = self.rng.bit_generator.state
        return ARN([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   self.masks, rng, self.renormalize,
                   None if self.support is None else self.support.copy())

    # training protocol
    def prepare_epoch(self, samples: int) -> None:
        self.support = arn_sample(self, samples).unique

    def loss_and_gradient(self, records: Records, floor: float = 0.0):
        return arn_loss_and_gradient(self, records, self._require_support(), floor)

    def loss(self, records: Records, floor: float = 0.0) -> float:
        return arn_loss(self, records, self._require_support(), floor)

    def fidelity_objective(self, target: np.ndarray):
        return arn_fidelity_training_objective(self, target)

    def to_dense(self) -> np.ndarray:
        return arn_to_dense(self)

    def save(self, path) -> None:
        save_arn(self, path)

    def _require_support(self) -> np.ndarray:
        if self.support is None or len(self.support) == 0:
            raise ValueError("no sample support: call prepare_epoch first")
        return self.support


def init_arn(n: int, seed, renormalize: bool = True, std: float = INIT_STD) -> ARN:
    rng = np.random.default_rng(seed)
    masks = list(made_masks(n))
    weights = [rng.normal(0.0, std, size=m.shape) * m for m in masks]
    biases = [np.zeros(m.shape[1]) for m in masks]
    return ARN(weights, biases, masks, rng, renormalize)


def _forward(a: ARN, bits: np.ndarray):
    x = 2.0 * np.atleast_2d(bits).astype(float) - 1.0
    h1 = np.tanh(x @ a.weights[0] + a.biases[0])
    h2 = np.tanh(h1 @ a.weights[1] + a.biases[1])
    out = h2 @ a.weights[2] + a.biases[2]
    n = a.n_qubits
    return x, h1, h2, out[:, :n], out[:, n:]


def arn_forward(a: ARN, s) -> tuple[np.ndarray, np.ndarray]:
    """Per-site conditional ``P(s_i = 0 | s_<i)`` and raw phase output ``theta_i``."""
    _, _, _, z, theta = _forward(a, s)
    p0 = expit(z)
    if np.ndim(s) == 1:
        return p0[0], theta[0]
    return p0, theta


def arn_log_amplitude(a: ARN, bits: np.ndarray) -> np.ndarray:
    bits = np.atleast_2d(bits)
    _, _, _, z, theta = _forward(a, bits)
    s = bits.astype(float)
    log_p = np.where(bits == 0, _log_sigmoid(z), _log_sigmoid(-z)).sum(axis=1)
    return 0.5 * log_p + 1j * TWO_PI * (s * theta).sum(axis=1)


def arn_amplitude(a: ARN, s) -> complex | np.ndarray:
    out = np.exp(arn_log_amplitude(a, s))
    return complex(out[0]) if np.ndim(s) == 1 else out


def arn_sample(a: ARN, count: int, rng: np.random.Generator | None = None) -> SampleSet:
    """Ancestral sampling of ``count`` configurations, one bit at a time.

    Identical prefixes are tracked as one group with a multiplicity, and a
    group's shots are split between the two continuations with a binomial
    draw. The multiset produced has exactly the law of ``count`` independent
    ancestral draws, at a cost set by the number of distinct prefixes.
    """
    if count < 1:
        raise ValueError("sample count must be positive")
    rng = rng or a.rng
    n = a.n_qubits
    prefixes = np.zeros((1, n), dtype=np.uint8)
    counts = np.array([count], dtype=np.int64)
    for i in range(n):
        _, _, _, z, _ = _forward(a, prefixes)
        n0 = rng.binomial(counts, expit(z[:, i]))
        n1 = counts - n0
        ones = prefixes.copy()
        ones[:, i] = 1
        prefixes = np.concatenate([prefixes[n0 > 0], ones[n1 > 0]])
        counts = np.concatenate([n0[n0 > 0], n1[n1 > 0]])
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    idx = prefixes.astype(np.int64) @ weights
    order = np.argsort(idx)
    return SampleSet(idx[order], counts[order])


def _backprop(a: ARN, bits: np.ndarray, du: np.ndarray, dphi: np.ndarray) -> np.ndarray:
    x, h1, h2, z, _ = _forward(a, bits)
    s = bits.astype(float)
    dz = du[:, None] * 0.5 * (1.0 - s - expit(z))
    dtheta = dphi[:, None] * TWO_PI * s
    dout = np.concatenate([dz, dtheta], axis=1)
    d2 = (dout @ a.weights[2].T) * (1.0 - h2**2)
    d1 = (d2 @ a.weights[1].T) * (1.0 - h1**2)
    grads_w = [x.T @ d1, h1.T @ d2, h2.T @ dout]
    grads_b = [d1.sum(axis=0), d2.sum(axis=0), dout.sum(axis=0)]
    parts = [g[m > 0] for g, m in zip(grads_w, a.masks)] + grads_b
    return np.concatenate(parts)


def arn_loss(a: ARN, records: Records, support: np.ndarray, floor: float = 0.0) -> float:
    bits = index_to_bits(support, a.n_qubits)
    return restricted_loss(a.n_qubits, support, arn_log_amplitude(a, bits), records,
                           a.renormalize, floor, grad=False)


def arn_loss_and_gradient(a: ARN, records: Records, support: np.ndarray, floor: float = 0.0,
                          method: str = "auto"):
    """Sample-restricted negative log-likelihood and its gradient over all unmasked parameters."""
    bits = index_to_bits(support, a.n_qubits)
    loss, du, dphi = restricted_loss(a.n_qubits, support, arn_log_amplitude(a, bits), records,
                                     a.renormalize, floor, method=method)
    return loss, _backprop(a, bits, du, dphi)


def arn_fidelity_training_objective(a: ARN, target: np.ndarray):
    """``-|<target|psi>|^2`` and its gradient.

    Only the target's nonzero support is evaluated; this is exact because the
    network is normalized over the full space by construction.
    """
    n = a.n_qubits
    if len(target) != 1 << n:
        raise ValueError(f"target of length {len(target)} for an {n}-qubit network")
    support = np.flatnonzero(target)
    bits = index_to_bits(support, n)
    value, du, dphi = overlap_objective(arn_log_amplitude(a, bits), target[support], renormalize=False)
    return value, _backprop(a, bits, du, dphi)


def arn_to_dense(a: ARN, dense_cap: int = DEFAULT_DENSE_CAP + 6) -> np.ndarray:
    if a.n_qubits > dense_cap:
        raise ValueError(f"N={a.n_qubits} exceeds the dense cap {dense_cap}")
    return np.exp(arn_log_amplitude(a, all_configurations(a.n_qubits)))


def save_arn(a: ARN, path) -> None:
    arrays = {}
    for k in range(3):
        arrays[f"w{k}"] = a.weights[k]
        arrays[f"b{k}"] = a.biases[k]
        arrays[f"m{k}"] = a.masks[k]
    np.savez(path, kind="arn", renormalize=a.renormalize,
             rng_state=json.dumps(a.rng.bit_generator.state), **arrays)


def load_arn(path) -> ARN:
    with np.load(path) as f:
        if str(f["kind"]) != "arn":
            raise ValueError(f"{path}: not an ARN checkpoint")
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = json.loads(str(f["rng_state"]))
        return ARN([f[f"w{k}"] for k in range(3)], [f[f"b{k}"] for k in range(3)],
                   [f[f"m{k}"] for k in range(3)], rng, bool(f["renormalize"]))
