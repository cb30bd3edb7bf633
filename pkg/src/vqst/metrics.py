"""Observables, direct-from-data estimators and likelihood comparisons.

Observables are Pauli strings over ``IXYZ`` with one label per qubit, for
example ``"IYIIY"``. Sites are 0-based. The measured bit 0 maps to the
eigenvalue +1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    PAULI_LABELS,
    DimensionError,
    apply_local_rotation,
    check_normalized,
    index_to_bits,
    n_qubits_of,
)
from .measurement import MeasurementDataset, Records
from .mps import ZeroAmplitudeError

SOURCES = ("theory", "reconstruction", "direct-data")


def pauli_observable(n: int, ops: dict[int, str]) -> str:
    """Build an ``n``-site observable string from ``{site: label}``."""
    chars = ["I"] * n
    for site, label in ops.items():
        if not 0 <= site < n:
            raise DimensionError(f"site {site} out of range for {n} qubits")
        if label not in PAULI_LABELS:
            raise ValueError(f"unknown Pauli label {label!r}")
        chars[site] = label
    return "".join(chars)


def _parse_observable(observable: str, n: int) -> list[int]:
    if len(observable) != n:
        raise DimensionError(f"observable of length {len(observable)} for {n} qubits")
    bad = set(observable) - set("I" + PAULI_LABELS)
    if bad:
        raise ValueError(f"unknown Pauli label {sorted(bad)[0]!r}")
    return [i for i, c in enumerate(observable) if c != "I"]


def expectation_from_state(state: np.ndarray, observable: str) -> float:
    """``<psi|O|psi>`` by rotating into the eigenbasis of ``O`` and summing signed probabilities."""
    check_normalized(state)
    n = n_qubits_of(state)
    sites = _parse_observable(observable, n)
    probs = np.abs(apply_local_rotation(state, observable)) ** 2
    if not sites:
        return float(probs.sum())
    bits = index_to_bits(np.arange(len(probs)), n)[:, sites]
    signs = np.prod(1 - 2 * bits.astype(np.int64), axis=1)
    return float(signs @ probs)


def _matching_outcomes(dataset: MeasurementDataset, observable: str) -> np.ndarray:
    sites = _parse_observable(observable, dataset.n_qubits)
    for i in sites:
        if not any(b[i] == observable[i] for b in dataset.bases):
            raise ValueError(f"no basis measures {observable[i]} at site {i}")
    picked = [o for b, o in zip(dataset.bases, dataset.outcomes) if all(b[i] == observable[i] for i in sites)]
    if not picked:
        labels = ", ".join(f"{observable[i]}@{i}" for i in sites)
        raise ValueError(f"no single basis measures {labels} jointly")
    return np.concatenate(picked)


def expectation_from_data(dataset: MeasurementDataset, observable: str) -> tuple[float, float]:
    """Empirical mean of the +-1 outcome product and its binomial standard error.

    All bases carrying the requested labels at the requested sites are pooled,
    so each basis contributes in proportion to its shot count.
    """
    sites = _parse_observable(observable, dataset.n_qubits)
    outcomes = _matching_outcomes(dataset, observable)
    if len(outcomes) == 0:
        raise ValueError(f"no shots recorded in the bases matching {observable}")
    bits = index_to_bits(outcomes, dataset.n_qubits)[:, sites]
    signs = np.prod(1 - 2 * bits.astype(np.int64), axis=1)
    mean = float(signs.mean())
    err = float(np.sqrt(max(0.0, 1.0 - mean * mean) / len(signs)))
    return mean, err


@dataclass
class CorrelationReport:
    """Single-site expectations and pairwise correlations of one Pauli label."""

    source: str
    pauli: str
    magnetization: np.ndarray  # (N,)
    raw: np.ndarray  # (N, N), unit diagonal
    magnetization_err: np.ndarray | None = None
    raw_err: np.ndarray | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.magnetization)

    @property
    def connected(self) -> np.ndarray:
        c = self.raw - np.outer(self.magnetization, self.magnetization)
        np.fill_diagonal(c, 1.0 - self.magnetization**2)
        return c

    def write_csv(self, directory: str | Path, prefix: str | None = None) -> list[Path]:
        """Write magnetization, raw and connected matrices as CSV; returns the paths."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = prefix or self.source
        paths = []
        mag_path = directory / f"{stem}_magnetization.csv"
        with open(mag_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["site", f"<{self.pauli}>", "stderr"])
            for i, m in enumerate(self.magnetization):
                err = "" if self.magnetization_err is None else repr(float(self.magnetization_err[i]))
                w.writerow([i, repr(float(m)), err])
        paths.append(mag_path)
        for name, mat in (("raw", self.raw), ("connected", self.connected)):
            p = directory / f"{stem}_{name}_correlations.csv"
            np.savetxt(p, mat, delimiter=",", fmt="%.12g")
            paths.append(p)
        return paths


def correlations_from_state(state: np.ndarray, pauli: str = "Y",
                            source: str = "theory") -> CorrelationReport:
    """All single-site and pair expectations from one rotation into the all-``pauli`` basis."""
    check_normalized(state)
    n = n_qubits_of(state)
    probs = np.abs(apply_local_rotation(state, pauli * n)) ** 2
    spins = 1.0 - 2.0 * index_to_bits(np.arange(len(probs)), n)
    mag = probs @ spins
    raw = spins.T @ (probs[:, None] * spins)
    raw = 0.5 * (raw + raw.T)
    np.fill_diagonal(raw, 1.0)
    return CorrelationReport(source, pauli, mag, raw)


def correlations_from_data(dataset: MeasurementDataset, pauli: str = "Y") -> CorrelationReport:
    n = dataset.n_qubits
    mag, mag_err = np.zeros(n), np.zeros(n)
    raw, raw_err = np.eye(n), np.zeros((n, n))
    for i in range(n):
        mag[i], mag_err[i] = expectation_from_data(dataset, pauli_observable(n, {i: pauli}))
        for j in range(i + 1, n):
            v, e = expectation_from_data(dataset, pauli_observable(n, {i: pauli, j: pauli}))
            raw[i, j] = raw[j, i] = v
            raw_err[i, j] = raw_err[j, i] = e
    return CorrelationReport("direct-data", pauli, mag, raw, mag_err, raw_err)


def state_loss(state: np.ndarray, records: Records, floor: float = 0.0) -> float:
    """``-sum count * ln(p + floor)`` for a normalized dense state, one rotation per basis."""
    check_normalized(state)
    if n_qubits_of(state) != records.n_qubits:
        raise DimensionError(f"{n_qubits_of(state)}-qubit state vs {records.n_qubits}-qubit records")
    probs = np.empty(len(records))
    codes = "".join(PAULI_LABELS)
    for k in np.unique(records.basis):
        rows = np.flatnonzero(records.basis == k)
        basis = "".join(codes[c] for c in records.codes[k])
        probs[rows] = np.abs(apply_local_rotation(state, basis)[records.outcome[rows]]) ** 2
    if floor == 0.0 and np.any(probs == 0):
        raise ZeroAmplitudeError(f"{int(np.sum(probs == 0))} records have zero probability")
    return float(-(records.count * np.log(probs + floor)).sum())


def _as_state(x) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x
    if hasattr(x, "to_dense"):
        return x.to_dense()
    raise TypeError(f"expected a state vector or an ansatz, got {type(x).__name__}")


def loss_difference(theory: np.ndarray, reconstruction, test, floor: float = 0.0) -> float:
    """Test loss of ``theory`` minus test loss of ``reconstruction``.

    Positive values mean the reconstruction explains the data better than the
    theory state. ``reconstruction`` is a state vector or any ansatz with
    ``to_dense``; ``test`` is a dataset or aggregated records.
    """
    records = test.records() if isinstance(test, MeasurementDataset) else test
    recon = _as_state(reconstruction)
    if recon.shape != theory.shape:
        raise DimensionError(f"state shapes differ: {theory.shape} vs {recon.shape}")
    return state_loss(theory, records, floor) - state_loss(recon, records, floor)
