"""Run programs and models on a four-party session and produce reports.

A program is a line-oriented text file in the same spirit as the boolean
circuit format: ``INPUT``/``OUTPUT`` declarations plus one statement per
line of the form ``OP out... = in... [FLAGS]``.

    INPUT a 1          # a is dealt by P1
    INPUT k 1,2        # k is known to P1 and P2 and joint-shared
    INPUT b 2 BITS     # boolean input
    ADD s = a b
    MUL y = s c TRUNC
    OUTPUT y
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from . import boolean, garbled, ml, mult, ring, sharing
from .circuits import identity, relu_circuit
from .ring import FxConfig
from .session import Session
from .shares import Shared
from .transport import FaultSpec

REPORT_FORMAT = "fourpc-report v1"

# name: (n_inputs, n_outputs, result kind); None means "same as first input"
OPS = {
    "ADD": (2, 1, None), "SUB": (2, 1, None), "NEG": (1, 1, None), "SCALE": (1, 1, None),
    "MUL": (2, 1, None), "MUL3": (3, 1, None), "MUL4": (4, 1, None),
    "DOTP": (2, 1, "ring"), "MATMUL": (2, 1, "ring"),
    "MSB": (1, 1, "bits"), "A2B": (1, 1, "bits"), "B2A": (1, 1, "ring"),
    "BIT2A": (1, 1, "ring"), "BITINJ": (2, 1, "ring"), "SELECT": (3, 1, "ring"),
    "RELU": (1, 1, "ring"), "DRELU": (1, 1, "ring"), "SIGMOID": (1, 1, "ring"),
    "ARGMIN": (1, 2, "bits"), "ARGMAX": (1, 2, "bits"), "MAXPOOL": (1, 1, "ring"),
    "GCRELU": (1, 1, "ring"), "GCOPEN": (1, 1, "bits"),
}
FLAGS = {"TRUNC"}


class ProgramError(ValueError):
    pass


@dataclass
class Statement:
    op: str
    outs: tuple[str, ...]
    ins: tuple[str, ...]
    flags: frozenset = frozenset()
    const: int | None = None
    line: int = 0


@dataclass
class Program:
    inputs: dict[str, tuple[tuple[int, ...], str]] = field(default_factory=dict)  # name -> (owners, kind)
    body: list[Statement] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)

    @classmethod
    def parse(cls, text: str) -> "Program":
        prog = cls()
        defined: set[str] = set()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            head = parts[0].upper()
            try:
                if head == "INPUT":
                    name, owners = parts[1], tuple(int(p) for p in parts[2].split(","))
                    kind = "bits" if len(parts) > 3 and parts[3].upper() == "BITS" else "ring"
                    if not 1 <= len(owners) <= 2 or any(not 0 <= p <= 3 for p in owners):
                        raise ProgramError("owner must be one party or a pair, 0..3")
                    prog.inputs[name] = (owners, kind)
                    defined.add(name)
                elif head == "OUTPUT":
                    for name in parts[1:]:
                        if name not in defined:
                            raise ProgramError(f"undefined {name!r}")
                        prog.outputs.append(name)
                elif head in OPS:
                    n_in, n_out, _ = OPS[head]
                    eq = parts.index("=")
                    outs, rest = tuple(parts[1:eq]), parts[eq + 1:]
                    flags = frozenset(t.upper() for t in rest if t.upper() in FLAGS)
                    args = [t for t in rest if t.upper() not in FLAGS]
                    const = None
                    if head == "SCALE":
                        const, args = int(args[1]), args[:1]
                    if len(args) != n_in or len(outs) != n_out:
                        raise ProgramError(f"{head} takes {n_in} input(s) and {n_out} output(s)")
                    for a in args:
                        if a not in defined:
                            raise ProgramError(f"undefined {a!r}")
                    prog.body.append(Statement(head, outs, tuple(args), flags, const, lineno))
                    defined.update(outs)
                else:
                    raise ProgramError(f"unknown statement {parts[0]!r}")
            except (IndexError, ValueError) as exc:
                raise ProgramError(f"line {lineno}: {exc}") from None
        if not prog.outputs:
            raise ProgramError("program has no OUTPUT")
        return prog


def parse_inputs(text: str) -> dict:
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ProgramError("inputs file must be a JSON object")
    return data


def _encode(value, kind: str, cfg: FxConfig) -> np.ndarray:
    """Integers are raw ring elements; floats are fixed-point reals."""
    arr = np.asarray(value)
    if kind == "bits":
        return np.atleast_1d(arr.astype(np.uint8) & 1)
    if arr.dtype.kind == "f":
        return np.atleast_1d(ring.encode_fx(arr, cfg))
    return np.atleast_1d(ring.from_signed(arr.astype(np.int64), cfg))


# ------------------------------------------------------------------- config
@dataclass
class RunConfig:
    mode: str = "fair"
    pre: str = "offline"
    mult: str = "multi"
    gc: int = 2
    seed: str = "00"
    transport: str = "inproc"
    fault: str | None = None
    fan_in: int = boolean.DEFAULT_FAN_IN
    ell: int = 64
    frac_bits: int = 13

    def __post_init__(self):
        if self.mode not in ("fair", "robust"):
            raise ValueError(f"mode must be fair or robust, got {self.mode!r}")
        if self.pre not in ("offline", "ondemand"):
            raise ValueError(f"pre must be offline or ondemand, got {self.pre!r}")
        if self.mult not in ("2in", "multi"):
            raise ValueError(f"mult must be 2in or multi, got {self.mult!r}")
        if self.gc not in (1, 2):
            raise ValueError(f"gc must be 1 or 2, got {self.gc!r}")
        if self.fault is not None:
            FaultSpec.parse(self.fault)

    @property
    def cfg(self) -> FxConfig:
        return FxConfig(ell=self.ell, frac_bits=self.frac_bits)

    def session(self) -> Session:
        return Session(self.mode, self.cfg, self.seed, fault=self.fault, transport=self.transport, pre=self.pre)


# ------------------------------------------------------------------ running
def _exec(sess: Session, st: Statement, env: dict, conf: RunConfig) -> dict[str, object]:
    x = [env[n] for n in st.ins]
    trunc = "TRUNC" in st.flags
    op = st.op
    two_in = conf.mult == "2in"
    if op == "ADD":
        return {st.outs[0]: sharing.add(sess, *x)}
    if op == "SUB":
        return {st.outs[0]: sharing.sub(sess, *x)}
    if op == "NEG":
        return {st.outs[0]: sharing.neg(sess, *x)}
    if op == "SCALE":
        return {st.outs[0]: mult.mult_const(sess, st.const, x[0], trunc)}
    if op == "MUL":
        return {st.outs[0]: mult.mult(sess, *x, trunc=trunc)}
    if op == "MUL3":
        if two_in:
            return {st.outs[0]: mult.mult(sess, mult.mult(sess, x[0], x[1], trunc), x[2], trunc)}
        return {st.outs[0]: mult.mult3(sess, *x, trunc=trunc)}
    if op == "MUL4":
        if two_in:
            ab = mult.mult(sess, x[0], x[1], trunc)
            cd = mult.mult(sess, x[2], x[3], trunc)
            return {st.outs[0]: mult.mult(sess, ab, cd, trunc)}
        return {st.outs[0]: mult.mult4(sess, *x, trunc=trunc)}
    if op == "DOTP":
        return {st.outs[0]: mult.dotp(sess, *x, trunc=trunc)}
    if op == "MATMUL":
        return {st.outs[0]: mult.matmul(sess, *x, trunc=trunc)}
    if op == "MSB":
        return {st.outs[0]: boolean.bit_extract(sess, x[0], conf.fan_in)}
    if op == "A2B":
        return {st.outs[0]: boolean.a2b(sess, x[0], conf.fan_in)}
    if op == "B2A":
        return {st.outs[0]: boolean.b2a(sess, x[0])}
    if op == "BIT2A":
        return {st.outs[0]: boolean.bit2a(sess, x[0])}
    if op == "BITINJ":
        return {st.outs[0]: boolean.bit_inject(sess, *x)}
    if op == "SELECT":
        return {st.outs[0]: boolean.obv_select(sess, *x)}
    if op == "RELU":
        return {st.outs[0]: ml.relu(sess, x[0])}
    if op == "DRELU":
        return {st.outs[0]: ml.relu_deriv(sess, x[0])}
    if op == "SIGMOID":
        return {st.outs[0]: ml.sigmoid(sess, x[0])}
    if op in ("ARGMIN", "ARGMAX"):
        b, y = (ml.argmin if op == "ARGMIN" else ml.argmax)(sess, x[0])
        return dict(zip(st.outs, (b, y)))
    if op == "MAXPOOL":
        return {st.outs[0]: ml.maxpool(sess, x[0])}
    if op == "GCRELU":
        return {st.outs[0]: garbled.convert(sess, "AGA", relu_circuit(sess.cfg.ell), {"x": x[0]}, conf.gc)}
    if op == "GCOPEN":
        return {st.outs[0]: garbled.gc_output(sess, identity(x[0].shape[-1]), {"x": x[0]}, conf.gc)}
    raise ProgramError(f"line {st.line}: no handler for {op}")


def _check_kinds(prog: Program, env_kinds: dict[str, str]) -> None:
    want = {
        "MSB": "ring", "A2B": "ring", "B2A": "bits", "BIT2A": "bits", "RELU": "ring", "DRELU": "ring",
        "SIGMOID": "ring", "ARGMIN": "ring", "ARGMAX": "ring", "MAXPOOL": "ring", "GCRELU": "ring",
        "GCOPEN": "bits", "DOTP": "ring", "MATMUL": "ring",
    }
    for st in prog.body:
        kinds = [env_kinds[n] for n in st.ins]
        if st.op in want and kinds[0] != want[st.op]:
            raise ProgramError(f"line {st.line}: {st.op} takes a {want[st.op]} input")
        if st.op == "BITINJ" and kinds != ["bits", "ring"]:
            raise ProgramError(f"line {st.line}: BITINJ takes a bits and a ring input")
        if st.op == "SELECT" and kinds != ["ring", "ring", "bits"]:
            raise ProgramError(f"line {st.line}: SELECT takes two ring inputs and a bits selector")
        if st.op in ("ADD", "SUB", "MUL", "MUL3", "MUL4") and len(set(kinds)) != 1:
            raise ProgramError(f"line {st.line}: {st.op} mixes ring and bits inputs")
        result = OPS[st.op][2] or kinds[0]
        for i, name in enumerate(st.outs):
            env_kinds[name] = "ring" if st.op in ("ARGMIN", "ARGMAX") and i == 1 else result


def _signed(values: np.ndarray, kind: str, cfg: FxConfig) -> list:
    if kind == "bits":
        return values.astype(int).tolist()
    return ring.to_signed(values, cfg).astype(int).tolist()


def run_program(conf: RunConfig, prog: Program, inputs: dict) -> tuple[dict, Session]:
    """Share inputs, evaluate every statement, open the outputs.

    Returns the report and the finished session. Each party's view of each
    output is kept so that a fault's effect on every party is visible.
    """
    kinds = {name: kind for name, (_, kind) in prog.inputs.items()}
    _check_kinds(prog, kinds)
    missing = [n for n in prog.inputs if n not in inputs]
    if missing:
        raise ProgramError(f"no value for input(s) {', '.join(missing)}")
    sess = conf.session()
    cfg = sess.cfg
    env: dict[str, object] = {}
    try:
        for name, (owners, kind) in prog.inputs.items():
            value = _encode(inputs[name], kind, cfg)
            if len(owners) == 1:
                env[name] = sharing.share(sess, owners[0], value, kind)
            else:
                env[name] = sharing.joint_share(sess, owners, value, kind)
        for st in prog.body:
            env.update(_exec(sess, st, env, conf))
        views: dict[str, dict] = {}
        for name in prog.outputs:
            val = env[name]
            opened = val if isinstance(val, sharing.Opened) else sharing.reconstruct(sess, val)
            views[name] = {f"P{p}": (None if v is None else _signed(np.asarray(v), kinds[name], cfg))
                           for p, v in sorted(opened.values.items())}
    finally:
        sess.close()
    report = _report("run", conf, sess, views)
    return report, sess


def _agreed(views: dict) -> object:
    vals = list(views.values())
    for v in vals:
        if v is not None and sum(w == v for w in vals) >= 3:
            return v
    return None


def _verdict(sess: Session) -> tuple[str, int | None]:
    st = sess.status
    return st[0], st[1]


def _report(command: str, conf: RunConfig, sess: Session, views: dict, extra: dict | None = None) -> dict:
    verdict, ttp = _verdict(sess)
    net = sess.net
    fault = None
    if net.fault is not None:
        fault = {"site": str(net.fault), "fired": net.fault.fired}
    out = {
        "format": REPORT_FORMAT,
        "command": command,
        "config": asdict(conf),
        "verdict": verdict,
        "ttp": ttp,
        "eliminated": sess.eliminated,
        "party_status": {f"P{p}": list(sess.party_status[p]) for p in range(4)},
        "outputs": {name: _agreed(v) for name, v in views.items()},
        "party_outputs": views,
        "fault": fault,
    }
    if extra:
        out.update(extra)
    out["costs"] = net.ledger.to_dict()
    return out


def run_circuit(conf: RunConfig, program_text: str, inputs_text: str) -> dict:
    return run_program(conf, Program.parse(program_text), parse_inputs(inputs_text))[0]


def fault_sites(conf: RunConfig, prog: Program, inputs: dict) -> list[str]:
    """Every (tag, step, sender, receiver) message site of an honest run."""
    honest = RunConfig(**{**asdict(conf), "fault": None})
    _, sess = run_program(honest, prog, inputs)
    return sess.net.fault_sites()


# -------------------------------------------------------------------- infer
def load_model(spec: str) -> ml.ModelSpec:
    """A model file path, or ``toy`` / ``toy:SEED`` for the built-in 8-4-3 network."""
    if spec == "toy" or spec.startswith("toy:"):
        seed = int(spec.split(":", 1)[1]) if ":" in spec else 7
        return ml.toy_model(seed)
    return ml.ModelSpec.load(spec)


def run_infer(conf: RunConfig, model: ml.ModelSpec, samples) -> dict:
    sess = conf.session()
    ledger = sess.net.ledger
    try:
        res = ml.infer(sess, model, samples)
    finally:
        sess.close()
    ref = ml.infer_clear(model, samples, sess.cfg)
    labels = None if res.labels is None else res.labels.astype(int).tolist()
    mm = ledger.by_label.get("matmul", {})
    dots = ledger.gates.get("matmul", 0)
    extra = {
        "labels": labels,
        "cleartext_labels": ref.astype(int).tolist(),
        "agreement": None if labels is None else float(np.mean(np.asarray(labels) == ref)),
        "layers": res.layer_costs,
        "dotp_online_bytes": (mm.get("online", 0) / dots / 8) if dots else None,
    }
    return _report("infer", conf, sess, {}, extra)


# -------------------------------------------------------------------- audit
def load_expectations(path=None) -> dict:
    if path is None:
        text = resources.files("fourpc").joinpath("data/cost_lemmas.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return json.loads(text)


def _expected(term, ell: int):
    if term is None:
        return None
    a, b = term
    return a * ell + b


def audit_costs(report: dict, expectations: dict | None = None) -> list[dict]:
    """Per-gate amortized bits and online rounds vs. the shipped cost table.

    Only operations present in the report are audited. Verify-phase traffic
    (hashes and complaint vectors) is excluded by construction.
    """
    exp = expectations or load_expectations()
    costs = report["costs"]
    ell = costs["ell"]
    ondemand = report.get("config", {}).get("pre") == "ondemand"
    rows = []
    for label, want in exp["operations"].items():
        got = costs["by_label"].get(label)
        if not got or not got.get("gates"):
            continue
        gates = got["gates"]
        if ondemand and label != "mult_nopre":
            # preprocessing runs inside the online phase; only the total is fixed
            if want.get("pre") is not None and want.get("online") is not None:
                target = _expected(want["pre"], ell) + _expected(want["online"], ell)
                per_gate = (got["pre"] + got["online"]) / gates
                rows.append({"op": label, "metric": "total_bits", "expected": target, "got": per_gate,
                             "ok": per_gate == target})
        else:
            for phase in ("pre", "online"):
                target = _expected(want.get(phase), ell)
                if target is None:
                    continue
                per_gate = got[phase] / gates
                rows.append({"op": label, "metric": f"{phase}_bits", "expected": target, "got": per_gate,
                             "ok": per_gate == target})
        if "online_rounds" in want:
            rows.append({"op": label, "metric": "online_rounds", "expected": want["online_rounds"],
                         "got": got["online_rounds"], "ok": got["online_rounds"] == want["online_rounds"]})
    return rows


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"
