"""Amplitude/phase RBM pair with persistent contrastive-divergence sampling.

``psi(s) = exp(log_p(s) / 2 + 1j * phi(s))`` where both ``log_p`` (amplitude
RBM) and ``phi`` (phase RBM) are the hidden-summed free energies
``a.s + sum_k log(1 + exp((sW + b)_k))``. Sampling uses only the amplitude
RBM. Hidden units switch on with probability ``sigmoid(sW + b)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import all_configurations, bits_to_index, index_to_bits
from .measurement import Records
from .nnqs import SampleSet, overlap_objective, restricted_loss

DEFAULT_CHAINS = 1024
INIT_STD = 0.01


def _softplus(x):
    return np.logaddexp(0.0, x)


@dataclass
class RBM:
    w_amp: np.ndarray  # (N, H)
    a_amp: np.ndarray  # (N,)
    b_amp: np.ndarray  # (H,)
    w_phase: np.ndarray
    a_phase: np.ndarray
    b_phase: np.ndarray
    chains: np.ndarray  # (L, N) uint8 persistent visible states
    rng: np.random.Generator
    renormalize: bool = True
    support: np.ndarray | None = None  # unique configuration indices from the last sampling

    kind = "rbm"

    @property
    def n_qubits(self) -> int:
        return self.w_amp.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.w_amp.shape[1]

    @property
    def n_parameters(self) -> int:
        return 2 * (self.w_amp.size + self.a_amp.size + self.b_amp.size)

    def _arrays(self):
        return [self.w_amp, self.a_amp, self.b_amp, self.w_phase, self.a_phase, self.b_phase]

    def get_parameters(self) -> np.ndarray:
        return np.concatenate([x.ravel() for x in self._arrays()])

    def set_parameters(self, x: np.ndarray) -> None:
        off = 0
        names = ["w_amp", "a_amp", "b_amp", "w_phase", "a_phase", "b_phase"]
        for name, arr in zip(names, self._arrays()):
            setattr(self, name, np.array(x[off : off + arr.size]).reshape(arr.shape))
            off += arr.size

    def copy(self) -> RBM:
        clone = RBM(*[x.copy() for x in self._arrays()], self.chains.copy(),
                    np.random.Generator(np.random.PCG64()), self.renormalize,
                    None if self.support is None else self.support.copy())
        clone.rng.bit_generator.state = self.rng.bit_generator.state
        return clone

    # training protocol
    def prepare_epoch(self, samples: int) -> None:
        self.support = rbm_sample(self, samples).unique

    def loss_and_gradient(self, records: Records, floor: float = 0.0):
        return rbm_loss_and_gradient(self, records, self._require_support(), floor)

    def loss(self, records: Records, floor: float = 0.0) -> float:
        return rbm_loss(self, records, self._require_support(), floor)

    def fidelity_objective(self, target: np.ndarray):
        return rbm_fidelity_objective(self, target)

    def to_dense(self) -> np.ndarray:
        return rbm_to_dense(self)

    def save(self, path) -> None:
        save_rbm(self, path)

    def _require_support(self) -> np.ndarray:
        if self.support is None or len(self.support) == 0:
            raise ValueError("no sample support: call prepare_epoch first")
        return self.support


def init_rbm(n: int, n_hidden: int, seed, chains: int = DEFAULT_CHAINS,
             renormalize: bool = True) -> RBM:
    """Weights ~ N(0, 0.01**2), zero biases, uniformly random persistent chains."""
    rng = np.random.default_rng(seed)
    w_amp = rng.normal(0.0, INIT_STD, size=(n, n_hidden))
    w_phase = rng.normal(0.0, INIT_STD, size=(n, n_hidden))
    chain_states = rng.integers(0, 2, size=(chains, n), dtype=np.uint8)
    return RBM(w_amp, np.zeros(n), np.zeros(n_hidden), w_phase, np.zeros(n), np.zeros(n_hidden),
               chain_states, rng, renormalize)


def parameter_count(n: int, n_hidden: int) -> int:
    return 2 * (n * n_hidden + n + n_hidden)


def _free_energy(bits, w, a, b):
    s = np.atleast_2d(bits).astype(float)
    return s @ a + _softplus(s @ w + b).sum(axis=1)


def rbm_log_unnormalized_p(r: RBM, s) -> np.ndarray | float:
    """``a.s + sum_k log(1 + exp((sW + b)_k))`` for the amplitude RBM."""
    out = _free_energy(s, r.w_amp, r.a_amp, r.b_amp)
    return float(out[0]) if np.ndim(s) == 1 else out


def rbm_phase(r: RBM, s) -> np.ndarray | float:
    out = _free_energy(s, r.w_phase, r.a_phase, r.b_phase)
    return float(out[0]) if np.ndim(s) == 1 else out


def rbm_log_amplitude(r: RBM, bits: np.ndarray) -> np.ndarray:
    return 0.5 * _free_energy(bits, r.w_amp, r.a_amp, r.b_amp) + 1j * _free_energy(
        bits, r.w_phase, r.a_phase, r.b_phase
    )


def rbm_amplitude(r: RBM, s) -> complex | np.ndarray:
    """Unnormalized amplitude ``sqrt(p~(s)) exp(i phi(s))``."""
    out = np.exp(rbm_log_amplitude(r, s))
    return complex(out[0]) if np.ndim(s) == 1 else out


def rbm_cd_step(r: RBM, rng: np.random.Generator | None = None) -> np.ndarray:
    """One Gibbs sweep s -> h -> s' on every persistent chain; returns the new chains."""
    rng = rng or r.rng
    s = r.chains.astype(float)
    ph = expit(s @ r.w_amp + r.b_amp)
    h = (rng.random(ph.shape) < ph).astype(float)
    ps = expit(h @ r.w_amp.T + r.a_amp)
    r.chains = (rng.random(ps.shape) < ps).astype(np.uint8)
    return r.chains


def rbm_sample(r: RBM, count: int) -> SampleSet:
    """Advance the chains ``ceil(count / L)`` CD steps, pooling every chain state."""
    steps = max(1, math.ceil(count / len(r.chains)))
    pooled = []
    for _ in range(steps):
        pooled.append(bits_to_index(rbm_cd_step(r)))
    unique, counts = np.unique(np.concatenate(pooled), return_counts=True)
    return SampleSet(unique, counts)


def _backprop(r: RBM, bits: np.ndarray, du: np.ndarray, dphi: np.ndarray) -> np.ndarray:
    s = bits.astype(float)
    out = []
    for w, b, cot, fac in ((r.w_amp, r.b_amp, du, 0.5), (r.w_phase, r.b_phase, dphi, 1.0)):
        sig = expit(s @ w + b)
        weighted = fac * cot
        out += [s.T @ (weighted[:, None] * sig), s.T @ weighted, weighted @ sig]
    return np.concatenate([x.ravel() for x in out])


def rbm_loss(r: RBM, records: Records, support: np.ndarray, floor: float = 0.0) -> float:
    bits = index_to_bits(support, r.n_qubits)
    return restricted_loss(r.n_qubits, support, rbm_log_amplitude(r, bits), records,
                           r.renormalize, floor, grad=False)


def rbm_loss_and_gradient(r: RBM, records: Records, support: np.ndarray, floor: float = 0.0,
                          method: str = "auto"):
    """Sample-restricted negative log-likelihood and its gradient over both RBMs."""
    bits = index_to_bits(support, r.n_qubits)
    loss, du, dphi = restricted_loss(r.n_qubits, support, rbm_log_amplitude(r, bits), records,
                                     r.renormalize, floor, method=method)
    return loss, _backprop(r, bits, du, dphi)


def rbm_to_dense(r: RBM) -> np.ndarray:
    """Exactly normalized state by enumerating all 2**N configurations."""
    log_amp = rbm_log_amplitude(r, all_configurations(r.n_qubits))
    psi = np.exp(log_amp - log_amp.real.max())
    return psi / np.linalg.norm(psi)


def rbm_fidelity_objective(r: RBM, target: np.ndarray):
    """``-|<target|psi>|^2`` with psi normalized over the full space, and its gradient."""
    bits = all_configurations(r.n_qubits)
    value, du, dphi = overlap_objective(rbm_log_amplitude(r, bits), target, renormalize=True)
    return value, _backprop(r, bits, du, dphi)


def save_rbm(r: RBM, path) -> None:
    np.savez(path, kind="rbm", w_amp=r.w_amp, a_amp=r.a_amp, b_amp=r.b_amp, w_phase=r.w_phase,
             a_phase=r.a_phase, b_phase=r.b_phase, chains=r.chains,
             renormalize=r.renormalize, rng_state=json.dumps(r.rng.bit_generator.state))


def load_rbm(path) -> RBM:
    with np.load(path) as f:
        if str(f["kind"]) != "rbm":
            raise ValueError(f"{path}: not an RBM checkpoint")
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = json.loads(str(f["rng_state"]))
        return RBM(f["w_amp"], f["a_amp"], f["b_amp"], f["w_phase"], f["a_phase"], f["b_phase"],
                   f["chains"], rng, bool(f["renormalize"]))
