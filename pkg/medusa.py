#!/usr/bin/env python3
"""
Flag Compiler and Failure-Rate Simulator

Generates adder-like ICM circuits, inserts flag qubits, estimates failure
rates under depolarizing noise, tunes the flags' error multiplier and
prices the result in surface-code qubits.

Usage: python medusa.py <command> [options]
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import load_dotenv

from benchgen import AdderSpec, family_size_of, gen_adder_like
from circuit import GateKind, read_circuit, serialize_circuit
from errors import InfeasibleDistanceError, MedusaError
from flagger import compile_flagged, parse_budget
from frames import FaultEvent
from montecarlo import NoiseModel, SimConfig, estimate, inject_error_experiment, write_csv
from resources import estimate_from_counts
from sweep_runner import TUNE_COLUMNS, SweepRunner
from tuner import TuneRequest, target_from_smaller, tune

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2


class UsageError(Exception):
    """Bad command-line arguments."""


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors raised instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(message)


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    """Log to stderr (stdout carries JSON/CSV) and optionally to MEDUSA_LOG_FILE."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    log_file = os.getenv('MEDUSA_LOG_FILE')
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def emit_json(payload: Dict) -> None:
    print(json.dumps(payload, indent=2, ensure_ascii=False))


def status(message: str) -> None:
    print(message, file=sys.stderr)


def parse_float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise UsageError(f"Expected comma-separated numbers, got {text!r}")


def parse_size_range(text: str) -> List[int]:
    """'4..12' -> [4, ..., 12]; '4,6,8' -> [4, 6, 8]."""
    try:
        if '..' in text:
            lo, hi = text.split('..', 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise UsageError(f"Expected a size range like 4..12, got {text!r}")


def sim_config(args) -> SimConfig:
    try:
        return SimConfig(
            shots_per_input=args.shots,
            max_inputs=args.inputs,
            seed=args.seed,
            stabilizer_subsample_r=args.subsample,
            workers=args.workers,
        )
    except ValueError as e:
        raise UsageError(str(e))


def noise_model(p: float, m: float) -> NoiseModel:
    try:
        return NoiseModel(p, m)
    except ValueError as e:
        raise UsageError(str(e))


def write_text(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding='utf-8')
        status(f"✓ Wrote {out}")
    else:
        sys.stdout.write(text)


def emit_report(report, args) -> None:
    if args.csv:
        write_csv([report.to_csv_row()], sys.stdout)
    else:
        emit_json(report.to_json())


def cmd_gen(args) -> int:
    try:
        circuit = gen_adder_like(AdderSpec(args.size))
    except ValueError as e:
        raise UsageError(str(e))
    write_text(serialize_circuit(circuit), args.out)
    return EXIT_OK


def cmd_flag(args) -> int:
    try:
        budget = parse_budget(args.budget)
    except ValueError as e:
        raise UsageError(str(e))
    circuit = read_circuit(args.infile)
    flagged = compile_flagged(circuit, budget, size=args.size)
    status(f"✓ {flagged.n_flags} flag(s) inserted with budget {budget}")
    write_text(serialize_circuit(flagged), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    flagless = read_circuit(args.flagless)
    flagged = read_circuit(args.flagged) if args.flagged else flagless
    report = estimate(flagless, flagged, noise_model(args.p, args.m), sim_config(args))
    status(f"✓ FR={report.fr:.6f}  PSFR={report.psfr:.6f}  acceptance={report.acceptance_rate:.4f}")
    emit_report(report, args)
    return EXIT_OK


def cmd_inject(args) -> int:
    circuit = read_circuit(args.infile)
    if not 0 <= args.gate < len(circuit.body):
        raise UsageError(f"--gate must be a body gate index in 0..{len(circuit.body) - 1}")
    location = circuit.body_positions[args.gate]
    if circuit.gates[location].kind is not GateKind.CNOT:
        raise UsageError(f"Body gate {args.gate} is not a CNOT")
    fault = FaultEvent(location, args.pauli.upper())
    report = inject_error_experiment(circuit, fault, args.prob, sim_config(args))
    status(f"✓ FR={report.fr:.6f}  PSFR={report.psfr:.6f}")
    emit_report(report, args)
    return EXIT_OK


def cmd_tune(args) -> int:
    circuit = read_circuit(args.infile).strip_flags()
    cfg = sim_config(args)
    size = None
    if args.target_from_smaller:
        try:
            size = family_size_of(circuit)
        except ValueError as e:
            raise UsageError(f"--target-from-smaller needs an adder-like circuit: {e}")
        target, target_se = target_from_smaller(size, args.p, cfg)
        status(f"✓ Target from size {size - 1}: {target:.6f} ± {target_se:.2g}")
    else:
        target = args.target

    try:
        request = TuneRequest(fr_target=target, f_max=args.fmax, p_ncs=args.p, sim=cfg,
                              epsilon=args.eps, m_resolution=args.resolution, rate=args.rate)
    except ValueError as e:
        raise UsageError(str(e))
    result = tune(circuit, request, size=size)
    if not result.converged:
        emit_json({'status': 'not_converged', 'detail': result.to_json()})
        status(f"✗ Not converged: best rate {result.achieved_fr:.6f} vs target {target:.6f}")
        return EXIT_INFEASIBLE
    emit_json(result.to_json())
    status(f"✓ Converged: f={result.f}, m={result.m:.6f}, rate={result.achieved_fr:.6f}")
    return EXIT_OK


def cmd_resources(args) -> int:
    try:
        estimate_ = estimate_from_counts(args.data, args.flags, args.p, args.m)
    except InfeasibleDistanceError as e:
        emit_json({'status': 'infeasible', 'detail': {'p_ncs': e.p_ncs, 'p_f_target': e.p_f_target,
                                                      'reason': e.reason}})
        status(f"✗ {e}")
        return EXIT_INFEASIBLE
    except ValueError as e:
        raise UsageError(str(e))
    emit_json(estimate_.to_json())
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        budget = parse_budget(args.budget)
    except ValueError as e:
        raise UsageError(str(e))
    runner = SweepRunner(
        sizes=parse_size_range(args.sizes),
        p_grid=parse_float_list(args.p_grid),
        m_grid=parse_float_list(args.m_grid),
        budget=budget,
        sim=sim_config(args),
        progress_file=args.progress,
        tune_mode=args.tune,
        epsilon=args.eps,
        m_resolution=args.resolution,
    )
    rows = runner.run()
    out = open(args.out, 'w', encoding='utf-8', newline='') if args.out else sys.stdout
    try:
        if args.tune:
            write_csv(rows, out, TUNE_COLUMNS)
        else:
            write_csv(rows, out)
    finally:
        if args.out:
            out.close()
            status(f"✓ Wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def add_sim_options(parser: argparse.ArgumentParser, shots: int = 10_000) -> None:
    parser.add_argument('--shots', type=int, default=shots, help=f'Shots per input (default: {shots})')
    parser.add_argument('--inputs', type=int, default=100, help='Maximum number of input strings (default: 100)')
    parser.add_argument('--subsample', type=int, default=None,
                        help='Check r random stabilizers per input instead of all')


def add_output_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument('--json', action='store_true', help='Emit JSON (default)')
    group.add_argument('--csv', action='store_true', help='Emit a CSV row')


def build_parser() -> ArgumentParser:
    default_seed = int(os.getenv('MEDUSA_SEED', '0'))
    default_workers = int(os.getenv('MEDUSA_WORKERS', '1'))

    common = ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=default_seed, help='Random seed (default: $MEDUSA_SEED or 0)')
    common.add_argument('--workers', type=int, default=default_workers,
                        help='Worker processes for shot sampling (default: $MEDUSA_WORKERS or 1)')
    common.add_argument('--verbose', action='store_true', help='Debug logging')
    common.add_argument('--quiet', action='store_true', help='Warnings only')

    parser = ArgumentParser(
        description="Insert flag qubits into ICM circuits and estimate their failure rates",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python medusa.py gen --size 4 --out adder4.txt
  python medusa.py flag --in adder4.txt --budget log:5 --out adder4.flagged.txt
  python medusa.py simulate --flagless adder4.txt --flagged adder4.flagged.txt --p 0.001 --m 0
  python medusa.py resources --p 0.001 --m 0.1 --flags 10 --data 9
        """
    )
    sub = parser.add_subparsers(dest='command', required=True, parser_class=ArgumentParser)

    p = sub.add_parser('gen', parents=[common], help='Generate an adder-like circuit')
    p.add_argument('--size', type=int, required=True, help='Operand width N')
    p.add_argument('--out', help='Output file (default: stdout)')
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser('flag', parents=[common], help='Insert flags into a circuit')
    p.add_argument('--in', dest='infile', required=True, help='Flagless circuit file')
    p.add_argument('--budget', default='log:5', help='log:C | linear | fixed:K (default: log:5)')
    p.add_argument('--size', type=int, default=None, help='Size the log budget is taken over (default: data qubits)')
    p.add_argument('--out', help='Output file (default: stdout)')
    p.set_defaults(handler=cmd_flag)

    p = sub.add_parser('simulate', parents=[common], help='Estimate FR / PSFR')
    p.add_argument('--flagless', required=True, help='Flagless circuit file')
    p.add_argument('--flagged', help='Flagged circuit file (default: the flagless circuit)')
    p.add_argument('--p', type=float, required=True, help='CNOT depolarizing strength p_ncs')
    p.add_argument('--m', type=float, default=1.0, help='Flag error multiplier (default: 1)')
    add_sim_options(p)
    add_output_options(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser('inject', parents=[common], help='Inject a single fault with probability Q')
    p.add_argument('--in', dest='infile', required=True, help='Circuit file (flags optional)')
    p.add_argument('--gate', type=int, required=True, help='Body gate index the fault follows')
    p.add_argument('--pauli', required=True, help='Two-qubit Pauli on (control, target), e.g. XI')
    p.add_argument('--prob', type=float, required=True, help='Injection probability per shot')
    add_sim_options(p, shots=100)
    add_output_options(p)
    p.set_defaults(handler=cmd_inject)

    p = sub.add_parser('tune', parents=[common], help='Tune flag count and error multiplier')
    p.add_argument('--in', dest='infile', required=True, help='Flagless circuit file')
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument('--target', type=float, help='Target failure rate')
    target.add_argument('--target-from-smaller', action='store_true',
                        help='Use the flagless FR of the size N-1 adder-like circuit')
    p.add_argument('--p', type=float, required=True, help='CNOT depolarizing strength p_ncs')
    p.add_argument('--eps', type=float, default=0.0005, help='Allowed distance from target (default: 0.0005)')
    p.add_argument('--fmax', type=int, required=True, help='Maximum number of flags')
    p.add_argument('--resolution', type=int, default=128, help='Binary-search leaves M (default: 128)')
    p.add_argument('--rate', choices=['psfr', 'fr'], default='psfr', help='Rate being tuned (default: psfr)')
    add_sim_options(p)
    p.set_defaults(handler=cmd_tune)

    p = sub.add_parser('resources', parents=[common], help='Surface-code resource estimate')
    p.add_argument('--p', type=float, required=True, help='CNOT depolarizing strength p_ncs')
    p.add_argument('--m', type=float, required=True, help='Flag error multiplier')
    p.add_argument('--flags', type=int, required=True, help='Number of flags')
    p.add_argument('--data', type=int, required=True, help='Number of data qubits')
    p.set_defaults(handler=cmd_resources)

    p = sub.add_parser('sweep', parents=[common], help='Sweep sizes, p_ncs and m into a CSV table')
    p.add_argument('--sizes', required=True, help='Size range, e.g. 4..12 or 4,6,8')
    p.add_argument('--p-grid', required=True, help='Comma-separated p_ncs values')
    p.add_argument('--m-grid', default='0,1', help='Comma-separated m values (default: 0,1)')
    p.add_argument('--budget', default='log:5', help='Flag budget (default: log:5)')
    p.add_argument('--tune', action='store_true', help='Tune each N to the size N-1 flagless FR instead')
    p.add_argument('--eps', type=float, default=0.005, help='Tuning tolerance (default: 0.005)')
    p.add_argument('--resolution', type=int, default=128, help='Binary-search leaves M (default: 128)')
    p.add_argument('--progress', help='Progress file for resuming long sweeps')
    p.add_argument('--out', help='CSV output file (default: stdout)')
    add_sim_options(p)
    p.set_defaults(handler=cmd_sweep)

    return parser


def run(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        # bad MEDUSA_SEED / MEDUSA_WORKERS
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE

    setup_logging(args.verbose, args.quiet)
    try:
        return args.handler(args)
    except UsageError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (MedusaError, OSError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main():
    """Main entry point."""
    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
