"""Boolean-world operations: secure circuit evaluation and conversions.

Circuits are evaluated one AND level per online round. All ANDs of a
level, whatever their fan-in, run as a single batched multiplication per
fan-in and finish in the same round.
"""

from __future__ import annotations

from collections import defaultdict
from functools import lru_cache

import numpy as np

from . import ring
from .circuits import AND_OPS, BoolCircuit, adder
from .mult import _mult_terms, mult_sgr
from .session import HashCheck, Session
from .shares import HELD, GrShare, Shared
from .sharing import jsh

DEFAULT_FAN_IN = 4


@lru_cache(maxsize=None)
def msb_circuit(ell: int, k: int = DEFAULT_FAN_IN) -> BoolCircuit:
    return adder(ell, k, msb_only=True)


@lru_cache(maxsize=None)
def add_circuit(ell: int, k: int = DEFAULT_FAN_IN) -> BoolCircuit:
    return adder(ell, k)


def _pre_phase(sess: Session) -> str:
    return "online" if sess.pre == "ondemand" else "pre"


def _lift(bits: np.ndarray) -> np.ndarray:
    return bits.astype(np.uint64)


# ------------------------------------------------------------------ circuits
def eval_circuit(sess: Session, circ: BoolCircuit, inputs: dict[str, Shared]) -> dict[str, Shared]:
    """Evaluate ``circ`` on boolean shares; inputs carry bits on the last axis."""
    dom = sess.B
    names = list(circ.inputs)
    first = inputs[names[0]]
    batch = first.shape[:-1]
    comps = {p: {n: np.zeros((circ.n_wires, *batch), dtype=np.uint8) for n in HELD[p]} for p in HELD}
    for name, ws in circ.inputs.items():
        s = inputs[name]
        if s.shape[-1] != len(ws):
            raise ValueError(f"input {name}: expected width {len(ws)}, got {s.shape[-1]}")
        for p in HELD:
            for n in HELD[p]:
                comps[p][n][ws] = np.moveaxis(s.c[p][n], -1, 0)
    base_t = max(s.t for s in inputs.values())
    depth = circ.depth
    levels: dict[int, list] = defaultdict(list)
    for g in circ.gates:
        levels[depth[g.out]].append(g)

    for lvl in range(0, max(levels, default=0) + 1):
        gates = levels.get(lvl, [])
        by_arity: dict[int, list] = defaultdict(list)
        for g in gates:
            if g.op in AND_OPS:
                by_arity[AND_OPS[g.op]].append(g)
        for arity, group in sorted(by_arity.items()):
            ops = []
            for i in range(arity):
                cols = [g.ins[i] for g in group]
                ops.append(Shared(dom, {p: {n: comps[p][n][cols] for n in HELD[p]} for p in HELD},
                                  base_t + lvl - 1))
            with sess.op(f"and{arity}", gates=len(group) * int(np.prod(batch, dtype=np.int64))):
                res = _mult_terms(sess, ops, False, f"and{arity}", ondemand=sess.pre == "ondemand")
            outs = [g.out for g in group]
            for p in HELD:
                for n in HELD[p]:
                    comps[p][n][outs] = res.c[p][n]
        for g in gates:
            if g.op == "XOR":
                a, b = g.ins
                for p in HELD:
                    for n, arr in comps[p].items():
                        arr[g.out] = arr[a] ^ arr[b]
            elif g.op == "NOT":
                (a,) = g.ins
                for p in HELD:
                    for n, arr in comps[p].items():
                        arr[g.out] = arr[a] ^ 1 if n == "m" else arr[a]

    out_t = base_t + circ.and_depth
    result = {}
    for name, ws in circ.outputs.items():
        sh = Shared(dom, {p: {n: np.ascontiguousarray(np.moveaxis(comps[p][n][ws], 0, -1)) for n in HELD[p]}
                          for p in HELD}, out_t)
        fn = (lambda *vals, _n=name: circ.evaluate(dict(zip(names, vals)))[_n])
        result[name] = sess.record(fn, [inputs[n] for n in names], sh)
    return result


def evaluate(sess: Session, circ: BoolCircuit, inputs: dict[str, Shared]) -> dict[str, Shared]:
    and_gates = sum(circ.and_count.values())
    batch = int(np.prod(next(iter(inputs.values())).shape[:-1], dtype=np.int64))
    with sess.op("circuit", gates=and_gates * batch):
        return eval_circuit(sess, circ, inputs)


# --------------------------------------------------------- arithmetic -> bits
def _split_to_bits(sess: Session, v: Shared) -> tuple[Shared, Shared]:
    """Boolean sharings of x = m - l3 (from P1, P2) and y = -(l1 + l2) (from P0, P3)."""
    A, B = sess.A, sess.B
    ell = sess.cfg.ell
    x = {p: ring.bits_of(A.sub(v[p, "m"], v[p, "l3"]), ell) for p in (1, 2)}
    y = {p: ring.bits_of(A.neg(A.add(v[p, "l1"], v[p, "l2"])), ell) for p in (0, 3)}
    X = jsh(sess, (1, 2), x, B, "online", v.t, deferred=True, tag="a2b")
    Y = jsh(sess, (0, 3), y, B, _pre_phase(sess), v.t, tag="a2b")
    return X, Y


def bit_extract(sess: Session, v: Shared, fan_in: int = DEFAULT_FAN_IN) -> Shared:
    """Boolean sharing of the most significant bit of ``v``."""
    ell = sess.cfg.ell
    with sess.op("bit_extract", gates=int(np.prod(v.shape))):
        X, Y = _split_to_bits(sess, v)
        msb = eval_circuit(sess, msb_circuit(ell, fan_in), {"x": X, "y": Y})["msb"]
        out = msb.index((..., 0))
    return sess.record(lambda a: ring.bits_of(a, ell)[..., -1], [v], out)


def a2b(sess: Session, v: Shared, fan_in: int = DEFAULT_FAN_IN) -> Shared:
    """Boolean sharing of all bits of ``v`` (LSB first on a new last axis)."""
    ell = sess.cfg.ell
    with sess.op("a2b", gates=int(np.prod(v.shape))):
        X, Y = _split_to_bits(sess, v)
        bits = eval_circuit(sess, add_circuit(ell, fan_in), {"x": X, "y": Y})["s"]
    return sess.record(lambda a: ring.bits_of(a, ell), [v], bits)


# --------------------------------------------------------- bits -> arithmetic
def _bit2a_pre(sess: Session, b: Shared) -> GrShare:
    """Arithmetic three-part sharing u of the boolean mask of ``b``.

    P0 splits u into u1 (with P1, P3), u2 (with P0, P2, P3) and u3 (sent to
    P1 and P2). P3 then checks that u really is the mask bit: it learns
    mask xor r for a bit r hidden from it and compares against w1 + w2, which
    equals that bit only if u is a bit.
    """
    A, B = sess.A, sess.B
    phase = _pre_phase(sess)
    shape = b.shape
    u = _lift(b.lam(0))
    u1 = sess.sample((0, 1, 3), shape, A, "u1")
    u2 = sess.sample((0, 2, 3), shape, A, "u2")
    u3_0 = A.sub(A.sub(u, u1), u2)
    u3_1 = sess.send(0, 1, u3_0, "ring", "bit2a", "u3", phase)
    u3_2 = sess.jsnd(0, 1, 2, {0: u3_0, 1: u3_1}, "ring", "bit2a", "u3", phase)

    rb = sess.sample((0, 1, 2), shape, B, "rb")
    r = sess.sample((0, 1, 2), shape, A, "r")
    masked = {p: b[p, "l3"] ^ rb for p in (1, 2)}
    masked_at3 = sess.jsnd(1, 2, 3, masked, "bits", "bit2a", "lrb", phase)
    flip = A.sub(np.uint64(1), A.mul(np.uint64(2), _lift(rb)))
    u13 = {0: A.add(u1, u3_0), 1: A.add(u1, u3_1)}
    w1 = {p: A.add(A.add(_lift(rb), A.mul(u13[p], flip)), r) for p in (0, 1)}
    w1_at3 = sess.jsnd(1, 0, 3, w1, "ring", "bit2a", "w1", phase)
    w2 = {p: A.sub(A.mul(u2, flip), r) for p in (0, 2)}
    expect = A.sub(_lift(b[3, "l1"] ^ b[3, "l2"] ^ masked_at3), w1_at3)
    sess.add_check(HashCheck(phase=phase, ttp=1, pairs=[(2, 3, w2[2], expect), (0, 3, w2[0], expect)],
                             tag="bit2a", step="flag"))
    return GrShare(A, {0: {"g1": u1, "g2": u2, "g3": u3_0}, 1: {"g1": u1, "g3": u3_1},
                       2: {"g2": u2, "g3": u3_2}, 3: {"g1": u1, "g2": u2}})


def _bit2a_parts(sess: Session, b: Shared, U: GrShare) -> tuple[dict, dict, dict]:
    """Pair-held parts of the bit as a ring element: (1,3), (2,3), (1,2)."""
    A = sess.A
    mb = {p: _lift(b[p, "m"]) for p in (1, 2, 3)}
    flip = {p: A.sub(np.uint64(1), A.mul(np.uint64(2), mb[p])) for p in (1, 2, 3)}
    y1 = {p: A.add(mb[p], A.mul(U[p, "g1"], flip[p])) for p in (1, 3)}
    y2 = {p: A.mul(U[p, "g2"], flip[p]) for p in (2, 3)}
    y3 = {p: A.mul(U[p, "g3"], flip[p]) for p in (1, 2)}
    return y1, y2, y3


def _share_parts(sess: Session, parts, t: int, tag: str) -> Shared:
    A = sess.A
    y1, y2, y3 = parts
    Y1 = jsh(sess, (1, 3), y1, A, "online", t, tag=tag)
    Y2 = jsh(sess, (2, 3), y2, A, "online", t, tag=tag)
    Y3 = jsh(sess, (1, 2), y3, A, "online", t, deferred=True, tag=tag)
    out = Y1.zip(Y2, A.add).zip(Y3, A.add)
    out.t = t + 1
    return out


def bit2a(sess: Session, b: Shared) -> Shared:
    """The bit ``b`` as a ring element 0 or 1."""
    with sess.op("bit2a", gates=int(np.prod(b.shape))):
        U = _bit2a_pre(sess, b)
        out = _share_parts(sess, _bit2a_parts(sess, b, U), b.t, "bit2a")
    return sess.record(_lift, [b], out)


def b2a(sess: Session, bits: Shared) -> Shared:
    """Ring element from its boolean bits (LSB first on the last axis)."""
    A = sess.A
    ell = bits.shape[-1]
    weights = np.uint64(1) << np.arange(ell, dtype=np.uint64)
    with sess.op("b2a", gates=int(np.prod(bits.shape[:-1], dtype=np.int64))):
        U = _bit2a_pre(sess, bits)
        parts = _bit2a_parts(sess, bits, U)
        packed = tuple({p: ring.wrap((v * weights).sum(axis=-1, dtype=np.uint64), sess.cfg)
                        for p, v in part.items()} for part in parts)
        out = _share_parts(sess, packed, bits.t, "b2a")
    return sess.record(lambda x: ring.from_bits(x, sess.cfg), [bits], out)


def bit_inject_sum(sess: Session, pairs: list[tuple[Shared, Shared]]) -> Shared:
    """sum_i b_i * v_i for boolean b_i and ring v_i, with one re-sharing."""
    A = sess.A
    acc = [None, None, None]
    t = 0
    for b, v in pairs:
        if b.shape != v.shape:
            raise ValueError(f"shape mismatch: {b.shape} vs {v.shape}")
        t = max(t, b.t, v.t)
        U = _bit2a_pre(sess, b)
        mu = mult_sgr(sess, U, GrShare.of_mask(v), phase=_pre_phase(sess), tag="bitinj")
        mb = {p: _lift(b[p, "m"]) for p in (1, 2, 3)}
        sgn = {p: A.sub(A.mul(np.uint64(2), mb[p]), np.uint64(1)) for p in (1, 2, 3)}
        z1 = {p: A.add(A.sub(A.mul(mb[p], v[p, "m"]), A.mul(mb[p], v[p, "l1"])),
                       A.mul(sgn[p], A.sub(mu[p, "g1"], A.mul(v[p, "m"], U[p, "g1"])))) for p in (1, 3)}
        z2 = {p: A.add(A.neg(A.mul(mb[p], v[p, "l2"])),
                       A.mul(sgn[p], A.sub(mu[p, "g2"], A.mul(v[p, "m"], U[p, "g2"])))) for p in (2, 3)}
        z3 = {p: A.add(A.neg(A.mul(mb[p], v[p, "l3"])),
                       A.mul(sgn[p], A.sub(mu[p, "g3"], A.mul(v[p, "m"], U[p, "g3"])))) for p in (1, 2)}
        for i, z in enumerate((z1, z2, z3)):
            acc[i] = z if acc[i] is None else {p: A.add(acc[i][p], z[p]) for p in z}
    return _share_parts(sess, tuple(acc), t, "bitinj")


def bit_inject(sess: Session, b: Shared, v: Shared) -> Shared:
    """b * v for a boolean b and ring v."""
    with sess.op("bit_inject", gates=int(np.prod(v.shape))):
        out = bit_inject_sum(sess, [(b, v)])
    return sess.record(lambda x, y: sess.A.mul(_lift(x), y), [b, v], out)


def obv_select(sess: Session, x0: Shared, x1: Shared, b: Shared) -> Shared:
    """x_b without revealing b: x0 + b * (x1 - x0)."""
    A = sess.A
    with sess.op("obv_select", gates=int(np.prod(x0.shape))):
        diff = x1.zip(x0, A.sub)
        out = bit_inject_sum(sess, [(b, diff)]).zip(x0, A.add)
    return sess.record(lambda a, c, bit: np.where(bit.astype(bool), c, a), [x0, x1, b], out)
