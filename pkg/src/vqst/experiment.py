"""Experiment configuration and the simulate, sample, train, evaluate pipeline.

A configuration is a JSON object whose keys mirror :class:`ExperimentConfig`.
Unknown keys are rejected so that typos do not silently fall back to defaults.
The ``train`` and ``ansatz_train`` sections are merged over the desk-scale
defaults, so a config only lists what it changes. Example::

    {
      "n_qubits": 8,
      "times": [0.5, 1.5, 2.5, 3.5],
      "shots": 1000,
      "seeds": [0, 1, 2],
      "ansatze": ["mps", "arn"],
      "train": {"max_epochs": 1000},
      "ansatz_train": {"rbm": {"max_epochs": 3000}}
    }

Times are in rescaled units ``J0 * t``.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arn import init_arn, load_arn
from .core import fidelity, n_qubits_of
from .hamiltonian import (
    DEFAULT_DENSE_CAP,
    XYModelParams,
    evolve,
    neel_excitations,
    neel_state,
    sector_restrict,
    volume_law_state,
)
from .measurement import MeasurementDataset, generate_bases, sample_dataset, split
from .metrics import loss_difference
from .mps import init_mps, load_mps
from .rbm import init_rbm, load_rbm
from .training import LearningCurve, TrainConfig, train

ANSATZE = ("mps", "rbm", "arn")
TARGETS = ("xy", "volume-law")
FORMAT_VERSIONS = {"dataset": "VQST1", "state": "VQSTATE1", "checkpoint": "npz-1", "manifest": 1}

# Desk-scale defaults. The RBM needs a larger step and more epochs to converge;
# every other hyperparameter is shared.
DEFAULT_TRAIN = {"learning_rate": 0.01, "max_epochs": 4000, "patience": 200, "samples_per_epoch": 30000}
DEFAULT_ANSATZ_TRAIN = {"rbm": {"learning_rate": 0.05, "max_epochs": 6000, "samples_per_epoch": 10240}}


@dataclass
class ExperimentConfig:
    n_qubits: int = 8
    j0: float = 2 * np.pi * 10.0
    alpha: float = 1.1
    field: float = 2 * np.pi * 1000.0
    times: list[float] = dataclasses.field(default_factory=lambda: [0.5 * k for k in range(8)])
    target: str = "xy"
    sign_convention: str = "parity"
    shots: int = 1000
    seeds: list[int] = dataclasses.field(default_factory=lambda: [0, 1, 2])
    ansatze: list[str] = dataclasses.field(default_factory=lambda: list(ANSATZE))
    chi_max: int = 10
    hidden: int | None = None  # RBM hidden units; None means 5 per qubit
    chains: int = 1024
    train: dict = dataclasses.field(default_factory=lambda: dict(DEFAULT_TRAIN))
    ansatz_train: dict = dataclasses.field(default_factory=lambda: json.loads(json.dumps(DEFAULT_ANSATZ_TRAIN)))
    dense_cap: int = DEFAULT_DENSE_CAP

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}, got {self.target!r}")
        bad = [a for a in self.ansatze if a not in ANSATZE]
        if bad:
            raise ValueError(f"unknown ansatz {bad[0]!r}; choose from {ANSATZE}")
        if self.shots < 1:
            raise ValueError("shots per basis must be positive")
        if any(t < 0 for t in self.times):
            raise ValueError("evolution times must be non-negative")
        if self.target == "volume-law" and self.n_qubits % 2:
            raise ValueError("the volume-law target needs an even qubit count")
        known = {f.name for f in dataclasses.fields(TrainConfig)}
        for section in [self.train, *self.ansatz_train.values()]:
            unknown = set(section) - known
            if unknown:
                raise ValueError(f"unknown training option {sorted(unknown)[0]!r}")
        self.train_config("mps", 0)  # validate eagerly

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config key {sorted(unknown)[0]!r}")
        d = dict(d)
        # training sections refine the defaults rather than replace them
        if "train" in d:
            d["train"] = {**DEFAULT_TRAIN, **d["train"]}
        if "ansatz_train" in d:
            merged = json.loads(json.dumps(DEFAULT_ANSATZ_TRAIN))
            for kind, opts in d["ansatz_train"].items():
                merged[kind] = {**merged.get(kind, {}), **opts}
            d["ansatz_train"] = merged
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> ExperimentConfig:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def model(self) -> XYModelParams:
        return XYModelParams(self.n_qubits, self.j0, self.alpha, self.field)

    @property
    def n_hidden(self) -> int:
        return self.hidden if self.hidden is not None else 5 * self.n_qubits

    def train_config(self, kind: str, seed: int) -> TrainConfig:
        opts = {**self.train, **self.ansatz_train.get(kind, {}), "ansatz": kind, "seed": seed}
        return TrainConfig(**opts)


@dataclass
class Target:
    label: str
    time: float | None
    state: np.ndarray


def targets(cfg: ExperimentConfig) -> list[Target]:
    """Ground-truth states: the evolved Neel state at each time, or the volume-law state."""
    n = cfg.n_qubits
    if cfg.target == "volume-law":
        return [Target("volume-law", None, volume_law_state(n, cfg.sign_convention))]
    params = cfg.model
    h = sector_restrict(params, neel_excitations(n))
    psi0 = neel_state(n)
    out = []
    for tau in cfg.times:
        psi = evolve(psi0, h, tau / params.j0)
        out.append(Target(f"tau={tau:g}", float(tau), psi / np.linalg.norm(psi)))
    return out


def dataset_seed(seed: int, target_index: int) -> list[int]:
    """Entropy for the measurement stream of one (seed, target) pair."""
    return [int(seed), int(target_index)]


def simulate_dataset(state: np.ndarray, shots: int, seed) -> MeasurementDataset:
    return sample_dataset(state, generate_bases(n_qubits_of(state)), shots, seed)


def make_ansatz(kind: str, n: int, seed: int, cfg: ExperimentConfig):
    """Fresh ansatz with an initialization stream independent of the data stream."""
    init_seed = [int(seed), 1000 + ANSATZE.index(kind)]
    if kind == "mps":
        return init_mps(n, cfg.chi_max, init_seed)
    if kind == "rbm":
        return init_rbm(n, cfg.n_hidden, init_seed, chains=cfg.chains)
    if kind == "arn":
        return init_arn(n, init_seed)
    raise ValueError(f"unknown ansatz {kind!r}")


def load_checkpoint(path: str | Path):
    """Load an MPS, RBM or ARN checkpoint, dispatching on its stored kind."""
    with np.load(path) as f:
        if "kind" not in f:
            raise ValueError(f"{path}: not a checkpoint (no kind field)")
        kind = str(f["kind"])
    loaders = {"mps": load_mps, "rbm": load_rbm, "arn": load_arn}
    if kind not in loaders:
        raise ValueError(f"{path}: unknown checkpoint kind {kind!r}")
    return loaders[kind](path)


@dataclass
class RunResult:
    kind: str
    target: str
    time: float | None
    seed: int
    fidelity: float  # at the early-stop checkpoint
    max_fidelity: float  # over the whole run
    best_epoch: int
    stopped_epoch: int
    test_loss: float
    loss_difference: float
    seconds: float
    curve: LearningCurve = dataclasses.field(repr=False)
    best: object = dataclasses.field(repr=False)

    def row(self) -> dict:
        return {
            "target": self.target,
            "ansatz": self.kind,
            "seed": self.seed,
            "fidelity": self.fidelity,
            "max_fidelity": self.max_fidelity,
            "test_loss": self.test_loss,
            "loss_difference": self.loss_difference,
            "best_epoch": self.best_epoch,
            "stopped_epoch": self.stopped_epoch,
            "seconds": round(self.seconds, 3),
        }


def run_training(kind: str, target: Target, dataset: MeasurementDataset, seed: int,
                 cfg: ExperimentConfig, train_overrides: dict | None = None) -> RunResult:
    """Train one ansatz on one dataset and score it against the ground truth."""
    tcfg = cfg.train_config(kind, seed)
    if train_overrides:
        tcfg = dataclasses.replace(tcfg, **train_overrides)
    train_set, test_set = split(dataset)
    train_rec, test_rec = train_set.records(), test_set.records()
    ansatz = make_ansatz(kind, dataset.n_qubits, seed, cfg)
    start = time.perf_counter()
    res = train(ansatz, (train_rec, test_rec), tcfg, target.state)
    seconds = time.perf_counter() - start
    best_state = res.best.to_dense()
    return RunResult(
        kind=kind,
        target=target.label,
        time=target.time,
        seed=seed,
        fidelity=fidelity(target.state, best_state),
        max_fidelity=float(np.nanmax(res.curve.fidelity)),
        best_epoch=res.best_epoch,
        stopped_epoch=res.stopped_epoch,
        test_loss=res.best_test_loss,
        loss_difference=loss_difference(target.state, best_state, test_rec, tcfg.prob_floor),
        seconds=seconds,
        curve=res.curve,
        best=res.best,
    )


def compare(cfg: ExperimentConfig, progress=None) -> list[RunResult]:
    """Every (target, seed, ansatz) combination of the configuration."""
    results = []
    for k, tgt in enumerate(targets(cfg)):
        for seed in cfg.seeds:
            data = simulate_dataset(tgt.state, cfg.shots, dataset_seed(seed, k))
            for kind in cfg.ansatze:
                r = run_training(kind, tgt, data, seed, cfg)
                results.append(r)
                if progress is not None:
                    progress(r)
    return results


def summarize(results: list[RunResult]) -> list[dict]:
    """Median over seeds per (target, ansatz), preserving first-seen order."""
    groups: dict[tuple[str, str], list[RunResult]] = {}
    for r in results:
        groups.setdefault((r.target, r.kind), []).append(r)
    rows = []
    for (tgt, kind), rs in groups.items():
        rows.append({
            "target": tgt,
            "ansatz": kind,
            "seeds": len(rs),
            "fidelity": float(np.median([r.fidelity for r in rs])),
            "max_fidelity": float(np.median([r.max_fidelity for r in rs])),
            "test_loss": float(np.median([r.test_loss for r in rs])),
            "loss_difference": float(np.median([r.loss_difference for r in rs])),
            "epochs_to_stop": float(np.median([r.best_epoch for r in rs])),
        })
    return rows
