"""Command-line entry point: ``vqst <subcommand> ...``.

Subcommands: gen-bases, simulate, sample, train, eval, compare. Every
subcommand that writes files takes ``--out DIR`` and leaves a
``manifest.json`` there echoing the resolved configuration, seeds and file
format versions. Failures print one ``error: ...`` line and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import experiment as ex
from .core import fidelity
from .hamiltonian import (
    SECTOR_CAP,
    STATE_MAGIC,
    build_hamiltonian,
    evolve,
    neel_excitations,
    neel_state,
    read_state,
    sector_restrict,
    volume_law_state,
    write_state,
)
from .measurement import generate_bases, read_dataset, sample_dataset, split, write_dataset
from .metrics import correlations_from_data, correlations_from_state, loss_difference, state_loss
from .training import train

log = logging.getLogger("vqst")

DATASET_FILE = "dataset.vqst"
CHECKPOINT_FILE = "checkpoint.npz"
CURVE_FILE = "curve.csv"
MANIFEST_FILE = "manifest.json"


class CliError(Exception):
    """User-facing failure; reported as a single line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _load_config(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.from_json(args.config) if args.config else ex.ExperimentConfig()
    changes = {}
    if getattr(args, "dense_cap", None) is not None:
        changes["dense_cap"] = args.dense_cap
    if getattr(args, "n_qubits", None) is not None:
        changes["n_qubits"] = args.n_qubits
    if getattr(args, "seed", None) is not None:
        changes["seeds"] = [args.seed]
    if getattr(args, "target", None):
        changes["target"] = args.target
    if getattr(args, "ansatz", None) and args.command == "compare":
        changes["ansatze"] = [args.ansatz]
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _write_manifest(out: Path, command: str, argv: list[str], **fields) -> Path:
    manifest = {
        "command": command,
        "argv": argv,
        "version": _version(),
        "format_versions": ex.FORMAT_VERSIONS,
        **fields,
    }
    path = out / MANIFEST_FILE
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def cmd_gen_bases(args, argv) -> None:
    bases = generate_bases(args.n)
    text = "\n".join(bases) + "\n"
    if args.out:
        out = _out_dir(args)
        (out / "bases.txt").write_text(text)
        _write_manifest(out, "gen-bases", argv, n_qubits=args.n, outputs=["bases.txt"])
    else:
        sys.stdout.write(text)


def cmd_simulate(args, argv) -> None:
    cfg = _load_config(args)
    out = _out_dir(args)
    n = cfg.n_qubits
    outputs = {}
    if cfg.target == "volume-law":
        name = "state_volume_law.bin"
        write_state(out / name, volume_law_state(n, cfg.sign_convention))
        outputs[name] = {"target": "volume-law", "sign_convention": cfg.sign_convention}
    else:
        params = cfg.model
        if args.sector:
            if n > SECTOR_CAP:
                raise CliError(f"N={n} exceeds the sector cap {SECTOR_CAP}")
            h = sector_restrict(params, neel_excitations(n))
        elif n > cfg.dense_cap:
            raise CliError(f"N={n} exceeds the dense cap {cfg.dense_cap}; pass --sector")
        else:
            h = build_hamiltonian(params, cfg.dense_cap)
        psi0 = neel_state(n)
        for tau in cfg.times:
            name = f"state_tau{tau:g}.bin"
            write_state(out / name, evolve(psi0, h, tau / params.j0))
            outputs[name] = {"tau": tau, "t_seconds": tau / params.j0}
    _write_manifest(out, "simulate", argv, config=cfg.to_dict(), sector=args.sector, outputs=outputs)
    print(f"wrote {len(outputs)} state file(s) to {out}")


def cmd_sample(args, argv) -> None:
    state = read_state(args.state)
    n = int(np.log2(len(state)))
    shots = args.shots if args.shots is not None else _load_config(args).shots
    seed = args.seed if args.seed is not None else 0
    out = _out_dir(args)
    data = sample_dataset(state, generate_bases(n), shots, seed)
    write_dataset(data, out / DATASET_FILE)
    _write_manifest(out, "sample", argv, state=str(args.state), n_qubits=n, shots_per_basis=shots,
                    seed=seed, records=data.total_shots, outputs=[DATASET_FILE])
    print(f"wrote {data.total_shots} records to {out / DATASET_FILE}")


def cmd_train(args, argv) -> None:
    cfg = _load_config(args)
    data = read_dataset(args.data)
    seed = args.seed if args.seed is not None else 0
    out = _out_dir(args)
    tcfg = cfg.train_config(args.ansatz, seed)
    if tcfg.checkpoint_every and not tcfg.checkpoint_dir:
        tcfg = dataclasses.replace(tcfg, checkpoint_dir=str(out / "checkpoints"))
    if tcfg.checkpoint_dir:
        Path(tcfg.checkpoint_dir).mkdir(parents=True, exist_ok=True)
    truth = read_state(args.state) if args.state else None
    ansatz = ex.make_ansatz(args.ansatz, data.n_qubits, seed, cfg)
    train_set, test_set = split(data)
    result = train(ansatz, (train_set, test_set), tcfg, truth)
    result.best.save(out / CHECKPOINT_FILE)
    result.curve.write_csv(out / CURVE_FILE)
    summary = {"best_epoch": result.best_epoch, "stopped_epoch": result.stopped_epoch,
               "best_test_loss": result.best_test_loss}
    if truth is not None:
        summary["fidelity"] = fidelity(truth, result.best.to_dense())
    _write_manifest(out, "train", argv, dataset=str(args.data), ansatz=args.ansatz, seed=seed,
                    config=cfg.to_dict(), train_config=dataclasses.asdict(tcfg), result=summary,
                    outputs=[CHECKPOINT_FILE, CURVE_FILE])
    print(json.dumps(summary))


def _is_state_file(path: str) -> bool:
    with open(path, "rb") as fh:
        return fh.read(len(STATE_MAGIC)) == STATE_MAGIC


def cmd_eval(args, argv) -> None:
    truth = read_state(args.state)
    data = read_dataset(args.data)
    _, test_set = split(data)
    test = test_set.records()
    if _is_state_file(args.checkpoint):
        recon = read_state(args.checkpoint)
        kind = "state"
    else:
        model = ex.load_checkpoint(args.checkpoint)
        recon, kind = model.to_dense(), model.kind
    if recon.shape != truth.shape:
        raise CliError(f"reconstruction has {len(recon)} amplitudes, ground truth {len(truth)}")
    floor = args.floor
    out = _out_dir(args)
    metrics = {
        "kind": kind,
        "n_qubits": data.n_qubits,
        "fidelity": fidelity(truth, recon),
        "test_loss": state_loss(recon, test, floor),
        "theory_test_loss": state_loss(truth, test, floor),
        "loss_difference": loss_difference(truth, recon, test, floor),
        "test_records": int(test.total),
    }
    outputs = ["metrics.json"]
    for report in (correlations_from_state(truth, args.pauli, "theory"),
                   correlations_from_state(recon, args.pauli, "reconstruction"),
                   correlations_from_data(data, args.pauli)):
        outputs += [p.name for p in report.write_csv(out)]
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, "eval", argv, checkpoint=args.checkpoint, state=args.state, dataset=args.data,
                    pauli=args.pauli, floor=floor, outputs=outputs)
    print(json.dumps(metrics, sort_keys=True))


def _write_rows(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def cmd_compare(args, argv) -> None:
    cfg = _load_config(args)
    out = _out_dir(args)
    curves = out / "curves"
    curves.mkdir(exist_ok=True)

    def progress(r: ex.RunResult) -> None:
        r.curve.write_csv(curves / f"{r.target}_{r.kind}_seed{r.seed}.csv")
        log.info("%s %s seed %d: fidelity %.4f (epoch %d)", r.target, r.kind, r.seed, r.fidelity, r.best_epoch)

    results = ex.compare(cfg, progress)
    n_targets = 1 if cfg.target == "volume-law" else len(cfg.times)
    rows = [r.row() for r in results]
    summary = ex.summarize(results)
    _write_rows(out / "runs.csv", rows)
    _write_rows(out / "summary.csv", summary)
    _write_manifest(out, "compare", argv, config=cfg.to_dict(),
                    dataset_seeds={s: [ex.dataset_seed(s, k) for k in range(n_targets)] for s in cfg.seeds},
                    outputs=["runs.csv", "summary.csv", "curves/"])
    header = f"{'target':>12} {'ansatz':>6} {'fidelity':>9} {'test_loss':>11} {'loss_diff':>10} {'epochs':>7}"
    print(header)
    for s in summary:
        print(f"{s['target']:>12} {s['ansatz']:>6} {s['fidelity']:9.4f} {s['test_loss']:11.1f} "
              f"{s['loss_difference']:10.2f} {s['epochs_to_stop']:7.0f}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vqst", description="Variational quantum state tomography toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="JSON experiment configuration")
        sp.add_argument("--seed", type=int, help="seed (overrides the config's seed list)")
        sp.add_argument("--out", required=out_required, help="output directory")

    g = sub.add_parser("gen-bases", help="print the 27 periodicity-3 measurement bases")
    g.add_argument("n", type=int, help="number of qubits (>= 3)")
    g.add_argument("--out", help="write bases.txt and a manifest here instead of stdout")

    s = sub.add_parser("simulate", help="evolve the Neel state and write one state file per time")
    common(s)
    s.add_argument("--n-qubits", type=int, help="override the config's qubit count")
    s.add_argument("--dense-cap", type=int, help="largest N for full-space Hamiltonians")
    s.add_argument("--sector", action="store_true", help="evolve in the Neel magnetization sector")

    m = sub.add_parser("sample", help="draw projective measurements from a state file")
    common(m)
    m.add_argument("state", help="state file written by simulate")
    m.add_argument("--shots", type=int, help="shots per basis (default: config value, 1000)")

    t = sub.add_parser("train", help="fit an ansatz to a dataset")
    common(t)
    t.add_argument("data", help="VQST1 dataset file")
    t.add_argument("--ansatz", choices=ex.ANSATZE, default="mps")
    t.add_argument("--state", help="ground-truth state file; adds fidelity to the learning curve")

    e = sub.add_parser("eval", help="score a checkpoint against a ground-truth state")
    e.add_argument("checkpoint", help="checkpoint .npz or state file")
    e.add_argument("--state", required=True, help="ground-truth state file")
    e.add_argument("--data", required=True, help="VQST1 dataset; its test split is scored")
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--pauli", default="Y", choices=list("XYZ"), help="correlation observable")
    e.add_argument("--floor", type=float, default=1e-12, help="probability floor inside the log")

    c = sub.add_parser("compare", help="simulate, sample, train and score every configured ansatz")
    common(c)
    c.add_argument("--ansatz", choices=ex.ANSATZE, help="restrict to one ansatz")
    c.add_argument("--target", choices=ex.TARGETS, help="override the config's target state")
    c.add_argument("--n-qubits", type=int, help="override the config's qubit count")
    c.add_argument("--dense-cap", type=int, help="largest N for full-space Hamiltonians")
    return p


COMMANDS = {
    "gen-bases": cmd_gen_bases,
    "simulate": cmd_simulate,
    "sample": cmd_sample,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args, argv)
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # every failure becomes one diagnostic line
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
