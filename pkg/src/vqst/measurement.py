"""Measurement bases, synthetic shot sampling and the VQST1 dataset format.

VQST1 is a newline-terminated ASCII format::

    VQST1 N=<n> K=<k>
    BASIS <index> <pauli-string>        (k lines, index 0..k-1)
    <basis-index> <bitstring>           (one line per shot, acquisition order)

Shot order within each basis is significant: the train/test split keeps the
first ceil(0.8 * M_p) shots of basis p for training.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    PAULI_LABELS,
    DimensionError,
    basis_codes,
    check_normalized,
    index_to_bits,
    n_qubits_of,
    rotate_many,
)

FORMAT_TAG = "VQST1"
TRAIN_FRACTION = 0.8
MIN_SPLIT_RECORDS = 5


class DatasetFormatError(ValueError):
    """Malformed VQST1 content; the message names the offending line."""


def generate_bases(n: int) -> list[str]:
    """The 27 periodicity-3 Pauli strings of length ``n``, lexicographic in (i, j, k)."""
    if n < 3:
        raise ValueError(f"periodicity-3 bases need N >= 3, got {n}")
    return ["".join(t[l % 3] for l in range(n)) for t in itertools.product(PAULI_LABELS, repeat=3)]


@dataclass
class MeasurementDataset:
    """Outcomes per basis, stored as big-endian configuration indices."""

    n_qubits: int
    bases: list[str]
    outcomes: list[np.ndarray] = field(default_factory=list)
    seed: int | None = None

    def __post_init__(self):
        if not self.outcomes:
            self.outcomes = [np.zeros(0, dtype=np.int64) for _ in self.bases]
        if len(self.outcomes) != len(self.bases):
            raise ValueError("one outcome array per basis is required")
        for b in self.bases:
            if len(b) != self.n_qubits:
                raise DimensionError(f"basis {b!r} does not have length {self.n_qubits}")
            basis_codes(b)
        self.outcomes = [np.asarray(o, dtype=np.int64) for o in self.outcomes]

    @property
    def shots_per_basis(self) -> list[int]:
        return [len(o) for o in self.outcomes]

    @property
    def total_shots(self) -> int:
        return sum(self.shots_per_basis)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MeasurementDataset):
            return NotImplemented
        return (
            self.n_qubits == other.n_qubits
            and self.bases == other.bases
            and all(np.array_equal(a, b) for a, b in zip(self.outcomes, other.outcomes))
        )

    def records(self) -> Records:
        return Records.from_dataset(self)


def sample_dataset(
    state: np.ndarray, bases: list[str], shots_per_basis: int, seed: int
) -> MeasurementDataset:
    """Draw ``shots_per_basis`` projective outcomes in every basis.

    Each basis gets its own PCG64 stream spawned from ``SeedSequence(seed)``,
    so results do not depend on the order in which bases are processed.
    """
    check_normalized(state)
    n = n_qubits_of(state)
    codes = np.stack([basis_codes(b) for b in bases])
    probs = np.abs(rotate_many(state, codes)) ** 2
    streams = np.random.SeedSequence(seed).spawn(len(bases))
    outcomes = []
    for p, ss in zip(probs, streams):
        rng = np.random.Generator(np.random.PCG64(ss))
        p = np.clip(p, 0.0, None)
        outcomes.append(rng.choice(len(p), size=shots_per_basis, p=p / p.sum()))
    return MeasurementDataset(n, list(bases), outcomes, seed=seed)


def write_dataset(d: MeasurementDataset, path: str | Path) -> None:
    n = d.n_qubits
    lines = [f"{FORMAT_TAG} N={n} K={len(d.bases)}"]
    lines += [f"BASIS {k} {b}" for k, b in enumerate(d.bases)]
    for k, outs in enumerate(d.outcomes):
        lines += [f"{k} {format(int(o), f'0{n}b')}" for o in outs]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _parse_header(line: str):
    parts = line.split()
    if len(parts) != 3 or parts[0] != FORMAT_TAG:
        raise DatasetFormatError(f"line 1: expected '{FORMAT_TAG} N=<n> K=<k>', got {line!r}")
    try:
        key_n, n = parts[1].split("=")
        key_k, k = parts[2].split("=")
        if key_n != "N" or key_k != "K":
            raise ValueError
        return int(n), int(k)
    except ValueError:
        raise DatasetFormatError(f"line 1: malformed header {line!r}") from None


def read_dataset(path: str | Path) -> MeasurementDataset:
    text = Path(path).read_text(encoding="ascii")
    lines = text.splitlines()
    if not lines:
        raise DatasetFormatError("line 1: empty file")
    n, k = _parse_header(lines[0])
    bases = []
    for ln in range(2, k + 2):
        if ln > len(lines):
            raise DatasetFormatError(f"line {ln}: missing BASIS line ({k} expected)")
        parts = lines[ln - 1].split()
        if len(parts) != 3 or parts[0] != "BASIS" or parts[1] != str(ln - 2):
            raise DatasetFormatError(f"line {ln}: expected 'BASIS {ln - 2} <pauli-string>'")
        b = parts[2]
        if len(b) != n:
            raise DatasetFormatError(f"line {ln}: basis {b!r} has length {len(b)}, expected {n}")
        bad = set(b) - set(PAULI_LABELS)
        if bad:
            raise DatasetFormatError(f"line {ln}: unknown basis label {sorted(bad)[0]!r}")
        bases.append(b)
    per_basis: list[list[int]] = [[] for _ in range(k)]
    for ln in range(k + 2, len(lines) + 1):
        parts = lines[ln - 1].split()
        if len(parts) != 2:
            raise DatasetFormatError(f"line {ln}: expected '<basis-index> <bitstring>'")
        idx, bits = parts
        if not idx.isdigit() or int(idx) >= k:
            raise DatasetFormatError(f"line {ln}: basis index {idx!r} out of range")
        if len(bits) != n or set(bits) - {"0", "1"}:
            raise DatasetFormatError(f"line {ln}: bitstring {bits!r} is not {n} binary digits")
        per_basis[int(idx)].append(int(bits, 2))
    return MeasurementDataset(n, bases, [np.array(o, dtype=np.int64) for o in per_basis])


def split(d: MeasurementDataset) -> tuple[MeasurementDataset, MeasurementDataset]:
    """Prefix split per basis: first ceil(0.8 M_p) shots train, the rest test."""
    train, test = [], []
    for b, outs in zip(d.bases, d.outcomes):
        if len(outs) < MIN_SPLIT_RECORDS:
            raise ValueError(f"basis {b} has {len(outs)} records; at least {MIN_SPLIT_RECORDS} needed to split")
        cut = math.ceil(TRAIN_FRACTION * len(outs))
        train.append(outs[:cut])
        test.append(outs[cut:])
    return (
        MeasurementDataset(d.n_qubits, list(d.bases), train, seed=d.seed),
        MeasurementDataset(d.n_qubits, list(d.bases), test, seed=d.seed),
    )


@dataclass
class Records:
    """Shots aggregated into unique (basis, outcome) groups with multiplicities.

    This is the form consumed by every likelihood: the loss of a group equals
    ``count`` times the loss of one of its shots.
    """

    n_qubits: int
    codes: np.ndarray  # (K, N) basis label codes
    basis: np.ndarray  # (R,) basis index per group
    outcome: np.ndarray  # (R,) configuration index per group
    count: np.ndarray  # (R,) float multiplicities
    _selectors: np.ndarray | None = field(default=None, repr=False, compare=False)
    _groups: list | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_dataset(cls, d: MeasurementDataset) -> Records:
        codes = np.stack([basis_codes(b) for b in d.bases]).astype(np.int64)
        basis, outcome, count = [], [], []
        for k, outs in enumerate(d.outcomes):
            u, c = np.unique(outs, return_counts=True)
            basis.append(np.full(len(u), k, dtype=np.int64))
            outcome.append(u)
            count.append(c.astype(float))
        return cls(
            d.n_qubits,
            codes,
            np.concatenate(basis) if basis else np.zeros(0, np.int64),
            np.concatenate(outcome) if outcome else np.zeros(0, np.int64),
            np.concatenate(count) if count else np.zeros(0),
        )

    @property
    def total(self) -> float:
        return float(self.count.sum())

    def __len__(self) -> int:
        return len(self.outcome)

    def bits(self) -> np.ndarray:
        return index_to_bits(self.outcome, self.n_qubits)

    def site_codes(self) -> np.ndarray:
        """(R, N) Pauli code of every group at every site."""
        return self.codes[self.basis]

    def stack_selectors(self) -> np.ndarray:
        """(R, N) index ``2 * code + bit`` into a per-site stack of rotated matrices."""
        if self._selectors is None:
            self._selectors = 2 * self.site_codes() + self.bits()
        return self._selectors

    def stack_groups(self) -> list[list[tuple[int, np.ndarray]]]:
        """Per site, the record rows sharing each selector value."""
        if self._groups is None:
            sel = self.stack_selectors()
            self._groups = [
                [(k, np.flatnonzero(sel[:, i] == k)) for k in range(6) if np.any(sel[:, i] == k)]
                for i in range(self.n_qubits)
            ]
        return self._groups

    def subsample(self, size: int, rng: np.random.Generator) -> Records:
        """Draw a mini-batch of ``size`` shots without replacement."""
        total = int(self.total)
        if size >= total:
            return self
        picks = rng.choice(total, size=size, replace=False)
        owner = np.searchsorted(np.cumsum(self.count), picks, side="right")
        groups, counts = np.unique(owner, return_counts=True)
        return Records(self.n_qubits, self.codes, self.basis[groups], self.outcome[groups],
                       counts.astype(float))
