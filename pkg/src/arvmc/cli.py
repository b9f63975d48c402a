"""Command-line front end.

Subcommands: ``run``, ``sweep``, ``sample-benchmark``, ``make-fixtures``.
Results are JSON lines: a header record carrying the schema version and
the full configuration, then one record per iteration or row, then a
summary. Exit codes: 0 success, 1 input error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .ansatz import AnsatzConfig, init, load_checkpoint, save_checkpoint
from .hamio import FCIDumpError, load_fcidump
from .optim import TrainingError
from .oracle import ITERATIVE_CAP, ResourceError, cisd_ground_state, fci_ground_state, reference_configuration
from .qubit import HamiltonianError, assemble
from .sampler import sample_bas, sample_mcmc
from .sector import SectorSpec, sector_configs
from .vmc import CHEMICAL_ACCURACY, NeuralWavefunction, Problem, TrainConfig, run_vmc

SCHEMA = "arvmc-results"
SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2
DATA_DIR = Path(__file__).parent / "data"

# wall-clock fields are excluded from the determinism guarantee
NONDETERMINISTIC_FIELDS = ["timestamp", "wall_ms", "wall_s", "bas_s", "mcmc_s"]

RECORD_FIELDS = {
    "header": {"schema": str, "version": int, "command": str, "config": dict, "nondeterministic": list},
    "iteration": {"iteration": int, "energy": float, "variance": float, "n_unique": int, "wall_ms": float},
    "point": {"label": str, "bond_length": (float, type(None)), "e_vmc": (float, type(None)),
              "e_fci": (float, type(None)), "delta_e": (float, type(None)), "ok": bool},
    "benchmark": {"n_samples": int, "method": str, "wall_s": float, "n_unique": int},
    "summary": {"status": str},
    "error": {"kind": str, "message": str},
}


class InputError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def validate_record(record: dict) -> None:
    """Raise ``ValueError`` if ``record`` does not follow the results schema."""
    kind = record.get("record")
    if kind not in RECORD_FIELDS:
        raise ValueError(f"unknown record type {kind!r}")
    for name, typ in RECORD_FIELDS[kind].items():
        if name not in record:
            raise ValueError(f"{kind} record lacks field {name!r}")
        value = record[name]
        types = typ if isinstance(typ, tuple) else (typ,)
        if float in types and isinstance(value, int) and not isinstance(value, bool):
            continue
        if not isinstance(value, types):
            raise ValueError(f"{kind}.{name} has type {type(value).__name__}")


class ResultWriter:
    def __init__(self, path):
        self.path = path
        self.stream = sys.stdout if path in (None, "-") else open(path, "w")

    def emit(self, record_type: str, **fields):
        record = {"record": record_type, **fields}
        validate_record(record)
        self.stream.write(json.dumps(record, sort_keys=True) + "\n")
        self.stream.flush()
        return record

    def close(self):
        if self.stream is not sys.stdout:
            self.stream.close()


# ---------------------------------------------------------------------------
# argument handling


def _positive_int(text):
    value = int(float(text))
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _sector(text):
    m = re.fullmatch(r"\s*(\d+)\s*,\s*(\d+)\s*", text)
    if not m:
        raise argparse.ArgumentTypeError("sector must be 'n_alpha,n_beta'")
    return SectorSpec(int(m.group(1)), int(m.group(2)))


def _add_model_flags(p):
    p.add_argument("--sector", type=_sector, help="override as n_alpha,n_beta")
    p.add_argument("--iters", type=_positive_int, default=10_000)
    p.add_argument("--samples", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layers", type=_positive_int, default=2)
    p.add_argument("--dmodel", type=_positive_int, default=32)
    p.add_argument("--heads", type=_positive_int, default=4)
    p.add_argument("--lr", type=_positive_float, default=3e-4, help="peak learning rate; decays by cosine to lr/10")
    p.add_argument("--pretrain", choices=["none", "cisd", "fci"], default="cisd")
    p.add_argument("--anneal-temperature", type=float, default=0.0,
                   help="initial entropy weight (Hartree); useful with --pretrain none")
    p.add_argument("--anneal-iters", type=int, default=0)
    p.add_argument("--sampler", choices=["bas", "mcmc"], default="bas")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out", default="-", help="results file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arvmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="optimize the ansatz for one FCIDUMP")
    run.add_argument("--fcidump", required=True)
    run.add_argument("--checkpoint", help="write the final parameters here")
    _add_model_flags(run)

    sweep = sub.add_parser("sweep", help="run several geometries with shared settings")
    sweep.add_argument("--fcidump", required=True, nargs="+")
    sweep.add_argument("--bond-lengths", type=float, nargs="+", help="defaults to r<value> in file names")
    _add_model_flags(sweep)

    bench = sub.add_parser("sample-benchmark", help="time BAS against Metropolis sampling")
    bench.add_argument("--fcidump", required=True)
    bench.add_argument("--checkpoint", help="trained parameters; random init when absent")
    bench.add_argument("--grid", type=_positive_int, nargs="+", default=[10_000, 100_000, 1_000_000])
    bench.add_argument("--sector", type=_sector)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--layers", type=_positive_int, default=2)
    bench.add_argument("--dmodel", type=_positive_int, default=32)
    bench.add_argument("--heads", type=_positive_int, default=4)
    bench.add_argument("--chains", type=_positive_int, default=100)
    bench.add_argument("--burn-in", type=int, default=1000)
    bench.add_argument("--skip-mcmc-above", type=int, default=None)
    bench.add_argument("--out", default="-")

    fix = sub.add_parser("make-fixtures", help="recompute oracle values for bundled FCIDUMPs")
    fix.add_argument("--data-dir", default=str(DATA_DIR))
    fix.add_argument("--out", default=None, help="manifest path (default <data-dir>/manifest.json)")
    return parser


def _config_echo(args) -> dict:
    return {k: (asdict(v) if isinstance(v, SectorSpec) else v) for k, v in sorted(vars(args).items())}


def _load_problem(path, sector):
    if not os.path.exists(path):
        raise InputError("input-not-found", f"no such file: {path}")
    try:
        ints = load_fcidump(path)
    except FCIDumpError as exc:
        raise InputError("input-format", str(exc)) from exc
    try:
        sector = sector or SectorSpec.from_integrals(ints)
        sector.check(ints.n_orbitals)
    except ValueError as exc:
        raise InputError("invalid-argument", str(exc)) from exc
    return Problem.load(ints, sector)


def _ansatz(args, n_orbitals) -> AnsatzConfig:
    try:
        return AnsatzConfig(
            n_orbitals=n_orbitals, n_layers=args.layers, d_model=args.dmodel, n_heads=args.heads, seed=args.seed
        )
    except ValueError as exc:
        raise InputError("invalid-argument", str(exc)) from exc


def _train(args) -> TrainConfig:
    try:
        return TrainConfig(
            n_samples=args.samples, max_iters=args.iters, lr=args.lr, lr_min=args.lr / 10,
            seed=args.seed, sampler=args.sampler, pretrain=args.pretrain,
            anneal_temperature=args.anneal_temperature, anneal_iters=args.anneal_iters,
        )
    except ValueError as exc:
        raise InputError("invalid-argument", str(exc)) from exc


def _hf_energy(problem: Problem) -> float:
    ref = reference_configuration(problem.n_orbitals, problem.sector)
    _, el = problem.H.connected_batch(np.array([ref]))
    return float(el[0][problem.H.group_x == 0].sum())


def _summary_fields(problem: Problem, result) -> dict:
    e_hf = _hf_energy(problem)
    out = {
        "energy": result.energy,
        "std_error": result.std_error,
        "exact_energy": result.exact_energy,
        "e_fci": problem.e_fci,
        "e_hf": e_hf,
        "iterations": result.iterations,
        "stop_reason": result.stop_reason,
        "first_accurate": result.first_accurate,
        "pretrain_fidelity": result.pretrain_fidelity,
    }
    if problem.e_fci is not None:
        best = result.exact_energy if result.exact_energy is not None else result.energy
        out["error"] = best - problem.e_fci
        corr = e_hf - problem.e_fci
        out["correlation_fraction"] = (e_hf - best) / corr if corr else None
        out["chemical_accuracy"] = abs(best - problem.e_fci) < CHEMICAL_ACCURACY
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_run(args, writer: ResultWriter) -> int:
    t0 = time.perf_counter()
    problem = _load_problem(args.fcidump, args.sector)
    if args.pretrain == "fci" and problem.e_fci is None:
        raise InputError("invalid-argument", "pretrain=fci needs a sector within the iterative cap")
    cfg = _ansatz(args, problem.n_orbitals)
    train = _train(args)

    def emit(rec):
        writer.emit("iteration", **rec)

    result = run_vmc(problem, cfg, train, callback=emit)
    if args.checkpoint:
        save_checkpoint(args.checkpoint, result.state, None, energy=result.energy)
    writer.emit("summary", status="ok", wall_s=time.perf_counter() - t0, **_summary_fields(problem, result))
    return EXIT_OK


def _bond_length(path, given):
    if given is not None:
        return given
    m = re.search(r"_r(\d+(?:\.\d+)?)", Path(path).stem)
    return float(m.group(1)) if m else None


def _sweep_point(job):
    path, bond, args = job
    label = Path(path).stem
    try:
        problem = _load_problem(path, args.sector)
        result = run_vmc(problem, _ansatz(args, problem.n_orbitals), _train(args))
        e = result.exact_energy if result.exact_energy is not None else result.energy
        delta = e - problem.e_fci if problem.e_fci is not None else None
        return dict(label=label, bond_length=bond, e_vmc=e, e_fci=problem.e_fci, delta_e=delta,
                    e_sampled=result.energy, ok=True)
    except (InputError, FCIDumpError, TrainingError, ResourceError, HamiltonianError, ValueError) as exc:
        return dict(label=label, bond_length=bond, e_vmc=None, e_fci=None, delta_e=None, ok=False,
                    message=str(exc))


def cmd_sweep(args, writer: ResultWriter) -> int:
    t0 = time.perf_counter()
    if len(args.fcidump) < 2:
        raise InputError("invalid-argument", "a sweep needs at least two geometries")
    if args.bond_lengths is not None and len(args.bond_lengths) != len(args.fcidump):
        raise InputError("invalid-argument", "--bond-lengths must match --fcidump in length")
    bonds = args.bond_lengths or [None] * len(args.fcidump)
    jobs = [(p, _bond_length(p, b), args) for p, b in zip(args.fcidump, bonds)]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    for row in rows:
        writer.emit("point", **row)
    ok = all(r["ok"] for r in rows)
    good = [r for r in rows if r["ok"] and r["delta_e"] is not None]
    summary = {"n_points": len(rows), "n_failed": sum(not r["ok"] for r in rows)}
    if good:
        summary["max_abs_delta_e"] = max(abs(r["delta_e"]) for r in good)
        summary["argmin_vmc"] = min(good, key=lambda r: r["e_vmc"])["label"]
        summary["argmin_fci"] = min(good, key=lambda r: r["e_fci"])["label"]
    writer.emit("summary", status="ok" if ok else "failed", wall_s=time.perf_counter() - t0, **summary)
    return EXIT_OK if ok else EXIT_RUNTIME


def _tv_distance(batch, basis, probs):
    freq = np.zeros(len(basis))
    freq[np.searchsorted(basis, batch.configs)] = batch.frequencies()
    return 0.5 * float(np.abs(freq - probs).sum())


def cmd_sample_benchmark(args, writer: ResultWriter) -> int:
    t0 = time.perf_counter()
    if not os.path.exists(args.fcidump):
        raise InputError("input-not-found", f"no such file: {args.fcidump}")
    ints = load_fcidump(args.fcidump)
    sector = args.sector or SectorSpec.from_integrals(ints)
    if args.checkpoint:
        if not os.path.exists(args.checkpoint):
            raise InputError("input-not-found", f"no such file: {args.checkpoint}")
        state, _, _ = load_checkpoint(args.checkpoint)
        if state.config.n_orbitals != ints.n_orbitals:
            raise InputError("invalid-argument", "checkpoint width does not match the FCIDUMP")
    else:
        state = init(AnsatzConfig(ints.n_orbitals, args.layers, args.dmodel, args.heads, seed=args.seed))
    n_f = sector.dimension(ints.n_orbitals)
    basis = probs = None
    if n_f <= ITERATIVE_CAP:
        basis = sector_configs(ints.n_orbitals, sector)
        la, _ = NeuralWavefunction(state, sector).log_psi(basis)
        probs = np.exp(2 * la)
    rng = np.random.default_rng(args.seed)
    for ns in args.grid:
        t = time.perf_counter()
        batch = sample_bas(state, sector, ns, rng)
        dt = time.perf_counter() - t
        rec = dict(n_samples=ns, method="bas", wall_s=dt, n_unique=batch.unique, n_f=n_f)
        if basis is not None:
            rec["tv_distance"] = _tv_distance(batch, basis, probs)
        writer.emit("benchmark", **rec)
        if args.skip_mcmc_above is not None and ns > args.skip_mcmc_above:
            continue
        t = time.perf_counter()
        res = sample_mcmc(state, sector, ns, rng, burn_in=args.burn_in, n_chains=args.chains)
        dt = time.perf_counter() - t
        rec = dict(n_samples=ns, method="mcmc", wall_s=dt, n_unique=res.batch.unique, n_f=n_f,
                   acceptance=res.acceptance)
        if basis is not None:
            rec["tv_distance"] = _tv_distance(res.batch, basis, probs)
        writer.emit("benchmark", **rec)
    writer.emit("summary", status="ok", wall_s=time.perf_counter() - t0)
    return EXIT_OK


def make_fixtures(data_dir, out=None) -> dict:
    """Oracle values for every ``*.fcidump`` in ``data_dir``."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise InputError("input-not-found", f"no such directory: {data_dir}")
    manifest = {"version": 1, "molecules": {}}
    for path in sorted(data_dir.glob("*.fcidump")):
        ints = load_fcidump(path)
        sector = SectorSpec.from_integrals(ints)
        dim = sector.dimension(ints.n_orbitals)
        H = assemble(ints)
        entry = {
            "file": path.name,
            "n_orbitals": ints.n_orbitals,
            "n_electrons": ints.n_electrons,
            "sector": [sector.n_alpha, sector.n_beta],
            "dimension": dim,
            "n_pauli": H.n_terms,
            "n_groups": H.n_groups,
            "e_nuc": ints.e_nuc,
            "e_fci": None,
            "e_cisd": None,
        }
        if dim <= ITERATIVE_CAP:
            entry["e_fci"] = fci_ground_state(H, sector).energy
            entry["e_cisd"] = cisd_ground_state(H, sector).energy
        manifest["molecules"][path.stem] = entry
    target = Path(out) if out else data_dir / "manifest.json"
    target.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def cmd_make_fixtures(args, writer: ResultWriter) -> int:
    t0 = time.perf_counter()
    manifest = make_fixtures(args.data_dir, args.out)
    writer.emit("summary", status="ok", wall_s=time.perf_counter() - t0, n_molecules=len(manifest["molecules"]))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "sample-benchmark": cmd_sample_benchmark,
    "make-fixtures": cmd_make_fixtures,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    writer = ResultWriter(getattr(args, "out", None) if args.command != "make-fixtures" else "-")
    try:
        writer.emit(
            "header",
            schema=SCHEMA,
            version=SCHEMA_VERSION,
            command=args.command,
            config=_config_echo(args),
            nondeterministic=NONDETERMINISTIC_FIELDS,
            timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"),
        )
        return COMMANDS[args.command](args, writer)
    except InputError as exc:
        writer.emit("error", kind=exc.kind, message=str(exc))
        writer.emit("summary", status="failed")
        return EXIT_INPUT
    except FCIDumpError as exc:
        writer.emit("error", kind="input-format", message=str(exc))
        writer.emit("summary", status="failed")
        return EXIT_INPUT
    except (TrainingError, ResourceError, HamiltonianError, MemoryError, RuntimeError) as exc:
        writer.emit("error", kind=type(exc).__name__, message=str(exc))
        writer.emit("summary", status="failed")
        return EXIT_RUNTIME
    finally:
        writer.close()


if __name__ == "__main__":
    sys.exit(main())
