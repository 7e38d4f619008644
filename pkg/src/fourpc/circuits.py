"""Boolean circuits: representation, text format, clear evaluation, adders.

Gates are ``XOR``, ``NOT`` and ``AND2``/``AND3``/``AND4``. XOR and NOT are
free; the AND depth is what costs online rounds.

Text format, one statement per line::

    INPUT x w0 w1 w2        # named input group, LSB first
    XOR w3 = w0 w1
    AND2 w4 = w3 w2
    NOT w5 = w4
    OUTPUT z w5
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

AND_OPS = {"AND2": 2, "AND3": 3, "AND4": 4}
ALL_OPS = {"XOR": 2, "NOT": 1, **AND_OPS}


@dataclass(frozen=True)
class Gate:
    op: str
    out: int
    ins: tuple[int, ...]


@dataclass
class BoolCircuit:
    n_wires: int
    inputs: dict[str, list[int]]
    outputs: dict[str, list[int]]
    gates: list[Gate]

    @cached_property
    def depth(self) -> dict[int, int]:
        """AND depth of every wire."""
        d = {w: 0 for ws in self.inputs.values() for w in ws}
        for g in self.gates:
            base = max(d[i] for i in g.ins)
            d[g.out] = base + 1 if g.op in AND_OPS else base
        return d

    @property
    def and_depth(self) -> int:
        outs = [w for ws in self.outputs.values() for w in ws]
        return max((self.depth[w] for w in outs), default=0)

    @property
    def and_count(self) -> dict[str, int]:
        counts = {op: 0 for op in AND_OPS}
        for g in self.gates:
            if g.op in AND_OPS:
                counts[g.op] += 1
        return counts

    def validate(self):
        seen = {w for ws in self.inputs.values() for w in ws}
        for g in self.gates:
            if len(g.ins) != ALL_OPS[g.op]:
                raise ValueError(f"{g.op} expects {ALL_OPS[g.op]} inputs")
            missing = [w for w in g.ins if w not in seen]
            if missing:
                raise ValueError(f"gate {g} reads undefined wire(s) {missing}")
            if g.out in seen:
                raise ValueError(f"wire w{g.out} assigned twice")
            seen.add(g.out)
        for name, ws in self.outputs.items():
            if any(w not in seen for w in ws):
                raise ValueError(f"output {name} reads an undefined wire")
        return self

    def evaluate(self, inputs: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Clear evaluation; each input is a uint8 array with bits on the last axis."""
        vals: dict[int, np.ndarray] = {}
        for name, ws in self.inputs.items():
            arr = np.asarray(inputs[name], dtype=np.uint8)
            for i, w in enumerate(ws):
                vals[w] = arr[..., i]
        for g in self.gates:
            a = [vals[i] for i in g.ins]
            if g.op == "XOR":
                vals[g.out] = a[0] ^ a[1]
            elif g.op == "NOT":
                vals[g.out] = a[0] ^ 1
            else:
                out = a[0]
                for x in a[1:]:
                    out = out & x
                vals[g.out] = out
        return {name: np.stack([vals[w] for w in ws], axis=-1) for name, ws in self.outputs.items()}

    def to_text(self) -> str:
        lines = [f"INPUT {n} " + " ".join(f"w{w}" for w in ws) for n, ws in self.inputs.items()]
        for g in self.gates:
            lines.append(f"{g.op} w{g.out} = " + " ".join(f"w{i}" for i in g.ins))
        lines += [f"OUTPUT {n} " + " ".join(f"w{w}" for w in ws) for n, ws in self.outputs.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BoolCircuit":
        inputs, outputs, gates = {}, {}, []
        top = -1

        def wire(tok: str) -> int:
            nonlocal top
            if not tok.startswith("w"):
                raise ValueError(f"bad wire name {tok!r}")
            w = int(tok[1:])
            top = max(top, w)
            return w

        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            head = parts[0].upper()
            try:
                if head in ("INPUT", "OUTPUT"):
                    target = inputs if head == "INPUT" else outputs
                    target[parts[1]] = [wire(t) for t in parts[2:]]
                elif head in ALL_OPS:
                    if parts[2] != "=":
                        raise ValueError("expected '='")
                    gates.append(Gate(head, wire(parts[1]), tuple(wire(t) for t in parts[3:])))
                else:
                    raise ValueError(f"unknown statement {parts[0]!r}")
            except (IndexError, ValueError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        return cls(top + 1, inputs, outputs, gates).validate()

    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.to_text().encode()).digest()

    def expand_and(self) -> "BoolCircuit":
        """Rewrite AND3/AND4 as chains of AND2 (for garbling)."""
        b = Builder()
        remap = {}
        for name, ws in self.inputs.items():
            for w, nw in zip(ws, b.input(name, len(ws))):
                remap[w] = nw
        for g in self.gates:
            ins = [remap[i] for i in g.ins]
            if g.op == "XOR":
                remap[g.out] = b.xor(*ins)
            elif g.op == "NOT":
                remap[g.out] = b.not_(ins[0])
            else:
                acc = ins[0]
                for x in ins[1:]:
                    acc = b.and_(acc, x)
                remap[g.out] = acc
        for name, ws in self.outputs.items():
            b.output(name, [remap[w] for w in ws])
        return b.build()


@dataclass
class Builder:
    n_wires: int = 0
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    gates: list = field(default_factory=list)

    def _new(self) -> int:
        self.n_wires += 1
        return self.n_wires - 1

    def input(self, name: str, width: int) -> list[int]:
        ws = [self._new() for _ in range(width)]
        self.inputs[name] = ws
        return ws

    def output(self, name: str, wires: list[int]):
        self.outputs[name] = list(wires)

    def gate(self, op: str, *ins: int) -> int:
        out = self._new()
        self.gates.append(Gate(op, out, tuple(ins)))
        return out

    def xor(self, a: int, b: int) -> int:
        return self.gate("XOR", a, b)

    def not_(self, a: int) -> int:
        return self.gate("NOT", a)

    def and_(self, *ins: int) -> int:
        if len(ins) == 1:
            return ins[0]
        return self.gate(f"AND{len(ins)}", *ins)

    def or_(self, a: int, b: int) -> int:
        return self.xor(self.xor(a, b), self.and_(a, b))

    def xor_many(self, ws: list[int]) -> int:
        acc = ws[0]
        for w in ws[1:]:
            acc = self.xor(acc, w)
        return acc

    def compose(self, circ: BoolCircuit, inputs: dict[str, list[int]]) -> dict[str, list[int]]:
        """Inline ``circ`` with its input groups bound to existing wires."""
        remap = {}
        for name, ws in circ.inputs.items():
            for w, nw in zip(ws, inputs[name]):
                remap[w] = nw
        for g in circ.gates:
            remap[g.out] = self.gate(g.op, *[remap[i] for i in g.ins])
        return {name: [remap[w] for w in ws] for name, ws in circ.outputs.items()}

    def build(self) -> BoolCircuit:
        return BoolCircuit(self.n_wires, dict(self.inputs), dict(self.outputs), list(self.gates)).validate()


# --------------------------------------------------------------------- adders
def reach(k: int, d: int) -> int:
    """Widest interval whose carry-generate fits in AND depth d with fan-in k."""
    n = k - 1
    for e in range(2, d + 1):
        n += (k - 1) * k ** (e - 1)
    return n


class _PrefixTree:
    """Carry generate/propagate over bit intervals with bounded AND fan-in.

    gen(lo, hi) is the carry out of bits lo..hi. At depth 1 it is a sum of
    monomials x_j y_j p_{j+1} ... p_hi. At depth d the interval is cut from
    the bottom into blocks that fit depth d-1, and each block's generate is
    ANDed with at most k-1 propagate pieces covering the bits above it.
    """

    def __init__(self, b: Builder, x: list[int], y: list[int], k: int):
        self.b, self.x, self.y, self.k = b, x, y, k
        self.p = [b.xor(xi, yi) for xi, yi in zip(x, y)]
        self._gen: dict[tuple, int] = {}
        self._prop: dict[tuple, int] = {}

    def depth_for(self, size: int) -> int:
        d = 1
        while reach(self.k, d) < size:
            d += 1
        return d

    def prop(self, lo: int, hi: int) -> int:
        key = (lo, hi)
        if key not in self._prop:
            size = hi - lo + 1
            if size == 1:
                w = self.p[lo]
            elif size <= self.k:
                w = self.b.and_(*self.p[lo:hi + 1])
            else:
                step = 1
                while step * self.k < size:
                    step *= self.k
                w = self.b.and_(*[self.prop(s, min(s + step - 1, hi)) for s in range(lo, hi + 1, step)])
            self._prop[key] = w
        return self._prop[key]

    def gen(self, lo: int, hi: int, d: int | None = None) -> int:
        size = hi - lo + 1
        d = self.depth_for(size) if d is None else d
        key = (lo, hi, d)
        if key in self._gen:
            return self._gen[key]
        k = self.k
        if size <= k - 1:
            terms = [self.b.and_(self.x[j], self.y[j], *self.p[j + 1:hi + 1]) for j in range(lo, hi + 1)]
        else:
            if size > reach(k, d):
                raise ValueError("interval does not fit the requested depth")
            block = reach(k, d - 1)
            piece = k ** (d - 1)
            terms = []
            for b_lo in range(lo, hi + 1, block):
                b_hi = min(b_lo + block - 1, hi)
                above = [self.prop(s, min(s + piece - 1, hi)) for s in range(b_hi + 1, hi + 1, piece)]
                if len(above) > k - 1:
                    raise AssertionError("fan-in bound violated")
                terms.append(self.b.and_(self.gen(b_lo, b_hi, d - 1), *above))
        w = self.b.xor_many(terms)
        self._gen[key] = w
        return w


def adder(ell: int, k: int = 4, msb_only: bool = False) -> BoolCircuit:
    """x + y mod 2^ell as a parallel-prefix circuit with AND fan-in k.

    k = 2 reaches AND depth log2(ell); k = 4 uses 3- and 4-input ANDs and
    reaches log4(ell). With ``msb_only`` only the top sum bit is produced.
    """
    if k not in (2, 3, 4):
        raise ValueError("fan-in must be 2, 3 or 4")
    b = Builder()
    x = b.input("x", ell)
    y = b.input("y", ell)
    tree = _PrefixTree(b, x, y, k)
    targets = [ell - 1] if msb_only else list(range(ell))
    outs = []
    for i in targets:
        outs.append(tree.p[0] if i == 0 else b.xor(tree.p[i], tree.gen(0, i - 1)))
    b.output("msb" if msb_only else "s", outs)
    return b.build()


def ripple_add(b: Builder, x: list[int], y: list[int], carry_in: int | None = None) -> list[int]:
    """Ripple-carry x + y (one AND per bit), for garbling."""
    out, c = [], carry_in
    for i, (xi, yi) in enumerate(zip(x, y)):
        if c is None:
            out.append(b.xor(xi, yi))
            c = b.and_(xi, yi) if i < len(x) - 1 else None
            continue
        out.append(b.xor(b.xor(xi, yi), c))
        if i < len(x) - 1:
            c = b.xor(b.and_(b.xor(xi, c), b.xor(yi, c)), c)
    return out


def ripple_sub(b: Builder, x: list[int], y: list[int]) -> list[int]:
    """x - y = x + not(y) + 1, with the +1 folded into bit 0."""
    ny = [b.not_(w) for w in y]
    out = [b.not_(b.xor(x[0], ny[0]))]  # x0 ^ ~y0 ^ 1
    c = b.or_(x[0], ny[0])  # carry of x0 + ~y0 + 1
    for i in range(1, len(x)):
        out.append(b.xor(b.xor(x[i], ny[i]), c))
        if i < len(x) - 1:
            c = b.xor(b.and_(b.xor(x[i], c), b.xor(ny[i], c)), c)
    return out


def identity(width: int) -> BoolCircuit:
    b = Builder()
    x = b.input("x", width)
    b.output("z", x)
    return b.build()


def relu_circuit(width: int) -> BoolCircuit:
    """max(0, x) on a two's-complement word."""
    b = Builder()
    x = b.input("x", width)
    keep = b.not_(x[-1])
    b.output("z", [b.and_(w, keep) for w in x])
    return b.build()
