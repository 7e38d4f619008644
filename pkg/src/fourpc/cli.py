"""Command-line entry point.

    fourpc run --circuit prog.txt --inputs in.json [--mode robust] [--fault mult:y1:1]
    fourpc run --circuit prog.txt --inputs in.json --list-fault-sites
    fourpc infer --model toy --inputs samples.json
    fourpc audit --report report.json

Exit codes: 0 output delivered (possibly via a trusted party), 2 abort,
3 internal or usage error. ``audit`` exits 1 when a cost differs.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback

from . import harness

EXIT_OK, EXIT_AUDIT_FAIL, EXIT_ABORT, EXIT_ERROR = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _add_session_args(p: argparse.ArgumentParser):
    p.add_argument("--mode", choices=("fair", "robust"), default="fair")
    p.add_argument("--pre", choices=("offline", "ondemand"), default="offline")
    p.add_argument("--mult", choices=("2in", "multi"), default="multi",
                   help="3/4-input products as one gate or as a tree of 2-input products")
    p.add_argument("--gc", type=int, choices=(1, 2), default=2, help="garbled-world variant")
    p.add_argument("--seed", default="00", help="hex seed (other strings are hashed)")
    p.add_argument("--transport", choices=("inproc", "socket"), default="inproc")
    p.add_argument("--fan-in", type=int, choices=(2, 3, 4), default=4, help="AND fan-in of the adder")
    p.add_argument("--ell", type=int, default=64)
    p.add_argument("--frac-bits", type=int, default=13)
    p.add_argument("--report", help="write the JSON report here (default: stdout)")


def _config(args, fault=None) -> harness.RunConfig:
    return harness.RunConfig(mode=args.mode, pre=args.pre, mult=args.mult, gc=args.gc, seed=args.seed,
                             transport=args.transport, fault=fault, fan_in=args.fan_in, ell=args.ell,
                             frac_bits=args.frac_bits)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fourpc", description="Four-party secure computation simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="evaluate a program on shared inputs")
    _add_session_args(run)
    run.add_argument("--circuit", required=True, help="program file")
    run.add_argument("--inputs", required=True, help="JSON object of input values")
    run.add_argument("--fault", help="flip a bit in one message: TAG:STEP:PARTY[:DST]")
    run.add_argument("--list-fault-sites", action="store_true", help="print every message site and exit")

    inf = sub.add_parser("infer", help="secure inference on a model")
    _add_session_args(inf)
    inf.add_argument("--model", required=True, help="model file, or toy[:SEED]")
    inf.add_argument("--inputs", required=True, help="JSON list of samples")

    aud = sub.add_parser("audit", help="compare a report's costs with the cost table")
    aud.add_argument("--report", required=True)
    aud.add_argument("--expect", help="cost table (default: the packaged one)")
    return parser


def _emit(report: dict, path: str | None):
    text = harness.dumps_report(report)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _exit_for(report: dict) -> int:
    return {"ok": EXIT_OK, "ttp": EXIT_OK, "abort": EXIT_ABORT}.get(report["verdict"], EXIT_ERROR)


def _run(args) -> int:
    with open(args.circuit) as fh:
        prog = harness.Program.parse(fh.read())
    with open(args.inputs) as fh:
        inputs = harness.parse_inputs(fh.read())
    if args.list_fault_sites:
        for site in harness.fault_sites(_config(args), prog, inputs):
            print(site)
        return EXIT_OK
    report, _ = harness.run_program(_config(args, args.fault), prog, inputs)
    _emit(report, args.report)
    return _exit_for(report)


def _infer(args) -> int:
    model = harness.load_model(args.model)
    with open(args.inputs) as fh:
        samples = json.load(fh)
    report = harness.run_infer(_config(args), model, samples)
    _emit(report, args.report)
    return _exit_for(report)


def _audit(args) -> int:
    with open(args.report) as fh:
        report = json.load(fh)
    exp = harness.load_expectations(args.expect)
    rows = harness.audit_costs(report, exp)
    for r in rows:
        mark = "ok  " if r["ok"] else "FAIL"
        print(f"{mark} {r['op']:<18} {r['metric']:<14} expected {r['expected']:<8} got {r['got']}")
    if not rows:
        print("no audited operations in report")
    return EXIT_OK if all(r["ok"] for r in rows) else EXIT_AUDIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return {"run": _run, "infer": _infer, "audit": _audit}[args.command](args)
    except (harness.ProgramError, ValueError, OSError) as exc:
        print(f"fourpc: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception:
        traceback.print_exc()
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
