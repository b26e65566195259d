"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical-validity failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .compiler import (CompileError, PolynomialHamiltonian, PulseSequence, UnitarityError,
                       compile_target, effective_generator, fidelity, materialize, max_norm,
                       sequence_to_unitary, target_tree)
from .experiments import (DEFAULT_SEED, ConfigError, ExperimentConfig, ResultTable, ValidityError,
                          ops_check, run_fig2, run_info_content, run_network_sweep,
                          run_overlap_study, run_squeeze_protocols)
from .network import FitError, NetworkError, SingularNetworkError, load_network
from .spin import SpinError, SpinSystem, random_state

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _emit(obj: dict) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


def _table_out(table: ResultTable, out: str | None) -> None:
    if out:
        csv, meta = table.write(out)
        print(f"wrote {csv} and {meta}", file=sys.stderr)
    else:
        sys.stdout.write(table.to_csv_text())


def _load_config(path: str | None, experiment: str) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig.from_dict({}, experiment)
    return ExperimentConfig.load(path, experiment)


def cmd_ops_check(args) -> int:
    if args.n < 1:
        raise ConfigError("--n must be a positive integer")
    report = ops_check(args.n)
    _emit(report)
    return EXIT_OK if report["passed"] else EXIT_NUMERIC


def cmd_fig2(args) -> int:
    cfg = ExperimentConfig.load(args.config, "fig2")
    power, inset = run_fig2(cfg)
    out = Path(args.out or cfg.output or ".")
    power.write(out / "fig2_power.csv")
    inset.write(out / "fig2_inset.csv")
    _emit({"out": str(out), "inset": inset.metadata["inset"],
           "residual_ratio_first_to_last": inset.metadata.get("residual_ratio_first_to_last")})
    return EXIT_OK


def cmd_overlap(args) -> int:
    cfg = _load_config(args.config, "overlap")
    table = run_overlap_study(cfg)
    _table_out(table, args.out or cfg.output)
    if args.out or cfg.output:
        _emit(table.metadata["summary"])
    return EXIT_OK


def cmd_info(args) -> int:
    report = run_info_content(args.n, args.r, args.sq)
    _emit(report)
    return EXIT_OK if report["valid"] else EXIT_NUMERIC


def cmd_squeeze(args) -> int:
    params = {"N": args.n, "protocols": [args.protocol.upper()], "t_points": args.points}
    if args.t_max is not None:
        params["t_max"] = args.t_max
    table = run_squeeze_protocols({"params": params})
    _table_out(table, args.out)
    if args.out:
        _emit(table.metadata["summary"])
    return EXIT_OK


def cmd_compile(args) -> int:
    if args.dt <= 0:
        raise ConfigError("--dt must be positive")
    seq = compile_target(target_tree(args.target), args.time, args.dt, balanced=not args.plain,
                         label=args.target)
    seq.dump(args.out)
    _emit({"out": args.out, "target": args.target, "steps": len(seq),
           "total_duration": seq.total_duration, **seq.metadata})
    return EXIT_OK


def _sequence_modes(seq: PulseSequence, target: PolynomialHamiltonian | None) -> int:
    modes = {1}
    for st in seq.flat_steps():
        g = st.generator
        modes.update(g.modes if hasattr(g, "modes") else ())
    if target is not None:
        modes.update(target.modes)
    return max(modes)


def cmd_verify(args) -> int:
    try:
        seq = PulseSequence.load(args.seq)
    except FileNotFoundError:
        raise ConfigError(f"sequence file {args.seq} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"sequence file is not valid JSON: {exc}") from None
    label = seq.metadata.get("target")
    target = PolynomialHamiltonian.parse(label) if label else None
    n_modes = _sequence_modes(seq, target)
    sizes = list(args.n) if len(args.n) == n_modes else [args.n[0]] * n_modes
    if len(args.n) not in (1, n_modes):
        raise ConfigError(f"--n takes one value or {n_modes} values")
    system = SpinSystem(tuple(sizes))
    u = sequence_to_unitary(seq, system)
    report = {"n": sizes, "steps": len(seq), "total_duration": seq.total_duration,
              "unitarity_deviation": max_norm(u.conj().T @ u - np.eye(system.dim)),
              "seed": args.seed, "tool_version": __version__}
    t = seq.metadata.get("simulated_time")
    if target is not None and t:
        h = materialize(target, system)
        w, v = np.linalg.eigh(h.dense())
        exact = (v * np.exp(-1j * w * t)) @ v.conj().T
        rng = np.random.default_rng(args.seed)
        states = [random_state(system, rng).vector for _ in range(args.states)]
        report["target"] = label
        report["infidelity"] = 1 - fidelity(u, exact, states)
        report["generator_deviation"] = max_norm(effective_generator(u, t, system).dense() - h.dense())
    _emit(report)
    if args.max_infidelity is not None and report.get("infidelity", 0.0) > args.max_infidelity:
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_network(args) -> int:
    try:
        spec = load_network(args.spec)
        sweep = json.loads(Path(args.sweep).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    table = run_network_sweep(spec, sweep)
    _table_out(table, args.out)
    if "selectivity" in table.metadata:
        sel = table.metadata["selectivity"]
        _emit({"all_passed": sel["all_passed"], "max_ratio": sel["max_ratio"]})
        if not sel["all_passed"]:
            return EXIT_NUMERIC
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quasicv", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ops-check", help="su(2) and Casimir residuals for N atoms")
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_ops_check)

    p = sub.add_parser("fig2", help="intracavity power map and four-step inset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_fig2)

    p = sub.add_parser("overlap", help="displaced-state overlaps under TACT squeezing")
    p.add_argument("--config")
    p.add_argument("--out", help="CSV path; metadata goes next to it")
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("info", help="information content of squeezed states")
    p.add_argument("--n", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--sq", type=float, help="squeezing in dB")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("squeeze", help="OAT or TACT squeezing versus time")
    p.add_argument("--protocol", choices=["oat", "tact", "OAT", "TACT"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t-max", type=float)
    p.add_argument("--points", type=int, default=81)
    p.add_argument("--out")
    p.set_defaults(func=cmd_squeeze)

    p = sub.add_parser("compile", help="compile a polynomial target into a pulse sequence")
    p.add_argument("--target", required=True, help='e.g. "X^3", "X1^3 Z2", "YZ+ZY"')
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--time", type=float, default=1e-2, help="simulated evolution time")
    p.add_argument("--plain", action="store_true", help="third-order gadgets instead of balanced ones")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("verify", help="exact unitary of a sequence compared with its target")
    p.add_argument("--seq", required=True)
    p.add_argument("--n", type=int, nargs="+", required=True, help="atoms per mode")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--states", type=int, default=10)
    p.add_argument("--max-infidelity", type=float)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("network", help="fit effective Hamiltonians of an interferometer network")
    p.add_argument("--spec", required=True)
    p.add_argument("--sweep", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_network)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidityError, UnitarityError, SingularNetworkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, CompileError, NetworkError, FitError, SpinError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
