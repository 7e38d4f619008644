"""Garbled world: garbling, garbled sharing, evaluation, output, conversions.

Garbling is free-XOR with point-and-permute and four ciphertexts per AND.
A row is ``H(tweak, Ka, Kb) xor Kc`` with H the first 16 bytes of sha256;
the row index is the pair of permute bits (lsb of each input key).

Two instances run side by side. Instance 1 has garblers P0, P2, P3 and
evaluator P1; instance 2 has garblers P0, P1, P3 and evaluator P2. The
single-instance variant keeps only instance 1.

Per wire, garblers hold the zero-key K0 and the instance offset D (lsb 1);
the key for bit v is K0 xor v*D.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from . import ring
from .circuits import BoolCircuit, Builder, ripple_add, ripple_sub
from .randomness import Prf
from .session import Complaints, Session
from .shares import Shared
from .sharing import Opened, jsh
from .transport import digest, majority

KEY_BYTES = 16
KAPPA = 8 * KEY_BYTES
INSTANCES = {1: (0, 2, 3), 2: (0, 1, 3)}
ROWS = 4


# ------------------------------------------------------------------ garbling
def lsb(keys: np.ndarray) -> np.ndarray:
    return keys[..., 0] & np.uint8(1)


def _with(keys: np.ndarray, bits: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """K0 xor bit*D, elementwise over leading axes."""
    return keys ^ (np.asarray(bits, dtype=np.uint8)[..., None] * delta)


def _row_hash(tweak: int, ka: np.ndarray, kb: np.ndarray) -> np.ndarray:
    """H over a batch of key pairs; the batch index is part of the tweak."""
    out = np.empty_like(ka)
    for e in range(ka.shape[0]):
        h = hashlib.sha256(struct.pack(">QI", e, tweak) + ka[e].tobytes() + kb[e].tobytes())
        out[e] = np.frombuffer(h.digest()[:KEY_BYTES], dtype=np.uint8)
    return out


def fresh_delta(raw: bytes) -> np.ndarray:
    d = np.frombuffer(raw[:KEY_BYTES], dtype=np.uint8).copy()
    d[0] |= 1
    return d


@dataclass
class GarbledCircuit:
    """Tables in gate order plus active keys for inputs fixed at garbling time."""

    circuit: BoolCircuit
    instance: int
    batch: int
    tables: np.ndarray  # (n_and, batch, 4, 16)
    fixed: dict[str, np.ndarray] = field(default_factory=dict)

    def header(self) -> bytes:
        return self.circuit.fingerprint() + struct.pack(">HB", KAPPA, self.instance)

    def to_array(self) -> np.ndarray:
        parts = [np.frombuffer(self.header(), dtype=np.uint8), self.tables.ravel()]
        parts += [self.fixed[name].ravel() for name in sorted(self.fixed)]
        return np.concatenate(parts)

    def from_array(self, buf: np.ndarray) -> "GarbledCircuit":
        """Rebuild a received copy with this object's shapes (header is not trusted)."""
        pos = len(self.header())
        n = self.tables.size
        tables = buf[pos:pos + n].reshape(self.tables.shape)
        pos += n
        fixed = {}
        for name in sorted(self.fixed):
            size = self.fixed[name].size
            fixed[name] = buf[pos:pos + size].reshape(self.fixed[name].shape)
            pos += size
        return GarbledCircuit(self.circuit, self.instance, self.batch, tables, fixed)

    @property
    def nbytes(self) -> int:
        return int(self.to_array().size)


def garble(circ: BoolCircuit, delta: np.ndarray, input_zero: dict[str, np.ndarray], seed: bytes,
           instance: int = 1, fixed_values: dict[str, np.ndarray] | None = None):
    """Garble ``circ`` (AND2/XOR/NOT only) for a batch of independent copies.

    ``input_zero`` maps each input group to zero-keys of shape (batch, width, 16).
    Groups listed in ``fixed_values`` are hard-coded: their active keys travel
    inside the garbled circuit. Returns the circuit and every wire's zero-key.
    """
    if any(g.op in ("AND3", "AND4") for g in circ.gates):
        circ = circ.expand_and()
    batch = next(iter(input_zero.values())).shape[0]
    zero = np.zeros((circ.n_wires, batch, KEY_BYTES), dtype=np.uint8)
    for name, ws in circ.inputs.items():
        zero[ws] = np.moveaxis(input_zero[name], 1, 0)
    ands = [g for g in circ.gates if g.op == "AND2"]
    fresh = np.frombuffer(Prf(hashlib.sha256(seed).digest()[:16]).stream("and-keys", len(ands) * batch * KEY_BYTES),
                          dtype=np.uint8).reshape(len(ands), batch, KEY_BYTES)
    tables = np.zeros((len(ands), batch, ROWS, KEY_BYTES), dtype=np.uint8)
    idx = np.arange(batch)
    k = 0
    for g in circ.gates:
        if g.op == "XOR":
            zero[g.out] = zero[g.ins[0]] ^ zero[g.ins[1]]
        elif g.op == "NOT":
            zero[g.out] = zero[g.ins[0]] ^ delta
        else:
            a0, b0 = zero[g.ins[0]], zero[g.ins[1]]
            c0 = fresh[k]
            zero[g.out] = c0
            for va in (0, 1):
                ka = a0 ^ (va * delta)
                for vb in (0, 1):
                    kb = b0 ^ (vb * delta)
                    row = 2 * lsb(ka) + lsb(kb)
                    tables[k, idx, row] = _row_hash(g.out, ka, kb) ^ (c0 ^ ((va & vb) * delta))
            k += 1
    fixed = {}
    for name, vals in (fixed_values or {}).items():
        fixed[name] = _with(input_zero[name], vals, delta)
    return GarbledCircuit(circ, instance, batch, tables, fixed), zero


def evaluate_gc(gc: GarbledCircuit, active: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Evaluator side: active input keys (batch, width, 16) to active output keys."""
    circ = gc.circuit
    keys = {**gc.fixed, **active}
    batch = gc.batch
    wire: dict[int, np.ndarray] = {}
    for name, ws in circ.inputs.items():
        for i, w in enumerate(ws):
            wire[w] = keys[name][:, i]
    idx = np.arange(batch)
    k = 0
    for g in circ.gates:
        if g.op == "XOR":
            wire[g.out] = wire[g.ins[0]] ^ wire[g.ins[1]]
        elif g.op == "NOT":
            wire[g.out] = wire[g.ins[0]]
        else:
            ka, kb = wire[g.ins[0]], wire[g.ins[1]]
            row = 2 * lsb(ka) + lsb(kb)
            wire[g.out] = _row_hash(g.out, ka, kb) ^ gc.tables[k, idx, row]
            k += 1
    return {name: np.stack([wire[w] for w in ws], axis=1) for name, ws in circ.outputs.items()}


def decode(out_keys: np.ndarray, decoding: np.ndarray) -> np.ndarray:
    return lsb(out_keys) ^ decoding


def key_matches(q: np.ndarray, h: bytes, zero: np.ndarray, delta: np.ndarray) -> bool:
    """Is there a key in {K0, K0 xor D} per wire whose lsb is q and whose hash is h?"""
    cand = np.where((lsb(zero) == q)[..., None], zero, zero ^ delta)
    return digest(cand) == h


# ----------------------------------------------------------------- instances
@dataclass
class Instance:
    evaluator: int
    garblers: tuple
    delta: np.ndarray
    subset: tuple

    def fresh_keys(self, sess: Session, shape, tag: str) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64)) * KEY_BYTES
        raw = sess.sample_bytes(self.subset, n, tag)
        return np.frombuffer(raw, dtype=np.uint8).reshape(*shape, KEY_BYTES).copy()

    def seed(self, sess: Session, tag: str) -> bytes:
        return sess.sample_bytes(self.subset, 32, tag)


def instance(sess: Session, j: int) -> Instance:
    if j not in sess.gc_instances:
        garblers = INSTANCES[j]
        delta = fresh_delta(sess.sample_bytes(garblers, KEY_BYTES, f"delta{j}"))
        sess.gc_instances[j] = Instance(j, garblers, delta, garblers)
    return sess.gc_instances[j]


@dataclass
class GarbledShare:
    """keys[p][j]: P_j holds the active key of instance j, every garbler of j the zero-key."""

    keys: dict[int, dict[int, np.ndarray]]
    width: int

    def zero(self, j: int) -> np.ndarray:
        return self.keys[INSTANCES[j][0]][j]

    def active(self, j: int) -> np.ndarray:
        return self.keys[j][j]


def gsh(sess: Session, vals: dict[int, np.ndarray], senders: dict[int, tuple], phase: str,
        rnd: int = 0, tag: str = "gsh", instances=(1, 2)) -> GarbledShare:
    """Garbled sharing of bits held by two garblers per instance.

    ``vals`` maps parties to their copy of the bits (shape (batch, width));
    ``senders[j]`` names the two garblers of instance j that jointly send the
    active key to the evaluator.
    """
    some = next(iter(vals.values()))
    keys: dict[int, dict[int, np.ndarray]] = {p: {} for p in range(4)}
    for j in instances:
        inst = instance(sess, j)
        k0 = inst.fresh_keys(sess, some.shape, tag)
        a, b = senders[j]
        active = {p: _with(k0, vals[p], inst.delta) for p in (a, b)}
        got = sess.jsnd(a, b, j, active, "bytes", tag, f"key{j}", phase, rnd)
        for g in inst.garblers:
            keys[g][j] = k0
        keys[j][j] = got
    return GarbledShare(keys, some.shape[-1])


def _ring_bits(sess: Session, a: np.ndarray) -> np.ndarray:
    return ring.bits_of(a, sess.cfg.ell)


def _compound_parts(sess: Session, x: Shared):
    """(m, alpha, l3) per holder as bit arrays of shape (batch, width)."""
    if x.dom.kind == "bits":
        flat = lambda a: a.reshape(-1, a.shape[-1])
        alpha = lambda p: x[p, "l1"] ^ x[p, "l2"]
    else:
        flat = lambda a: _ring_bits(sess, a.reshape(-1))
        alpha = lambda p: sess.A.add(x[p, "l1"], x[p, "l2"])
    m = {p: flat(x[p, "m"]) for p in (1, 2, 3)}
    al = {p: flat(alpha(p)) for p in (0, 3)}
    l3 = {p: flat(x[p, "l3"]) for p in (0, 1, 2)}
    return m, al, l3


def compound_share(sess: Session, x: Shared, tag: str = "gsh") -> dict[str, GarbledShare]:
    """Garbled sharings of m, alpha = l1 (+) l2 and l3 for both instances.

    alpha and l3 are input independent and go in preprocessing; only the
    keys for m are sent online.
    """
    m, al, l3 = _compound_parts(sess, x)
    pre = "online" if sess.pre == "ondemand" else "pre"
    return {
        "a": gsh(sess, al, {1: (0, 3), 2: (0, 3)}, pre, tag=tag),
        "l3": gsh(sess, l3, {1: (0, 2), 2: (0, 1)}, pre, tag=tag),
        "m": gsh(sess, m, {1: (2, 3), 2: (1, 3)}, "online", x.t + 1, tag=tag),
    }


# ---------------------------------------------------------------- circuits
def _recombine(b: Builder, width: int, name: str, arithmetic: bool, parts=("m", "a", "l3")) -> list[int]:
    ws = [b.input(f"{name}.{p}", width) for p in parts]
    if arithmetic:
        acc = ws[0]
        for w in ws[1:]:
            acc = ripple_sub(b, acc, w)
        return acc
    return [b.xor_many(list(col)) for col in zip(*ws)]


_WRAPPED: dict[tuple, BoolCircuit] = {}


def wrap_circuit(f: BoolCircuit, arith_in: bool, arith_out: bool | None, parts: tuple) -> BoolCircuit:
    """f' = f(recombined inputs), masked by R (xor or add) unless arith_out is None."""
    key = (f.fingerprint(), arith_in, arith_out, parts)
    if key not in _WRAPPED:
        _WRAPPED[key] = _wrap(f, arith_in, arith_out, parts)
    return _WRAPPED[key]


def _wrap(f: BoolCircuit, arith_in: bool, arith_out: bool | None, parts: tuple) -> BoolCircuit:
    b = Builder()
    bound = {}
    for name, ws in f.inputs.items():
        bound[name] = _recombine(b, len(ws), name, arith_in, parts)
    outs = b.compose(f, bound)
    (oname, z), = outs.items()
    if arith_out is not None:
        r = b.input("R", len(z))
        z = ripple_add(b, z, r) if arith_out else [b.xor(a, c) for a, c in zip(z, r)]
    b.output("z", z)
    return b.build().expand_and()


def _width(sess: Session, x: Shared) -> int:
    return x.shape[-1] if x.dom.kind == "bits" else sess.cfg.ell


def _batch(sess: Session, x: Shared) -> int:
    return int(np.prod(x.shape[:-1] if x.dom.kind == "bits" else x.shape, dtype=np.int64))


def _clear_fn(sess: Session, f: BoolCircuit, kinds: list[str], arith_out: bool, out_shape):
    names = list(f.inputs)
    ell = sess.cfg.ell

    def fn(*vals):
        bits = {}
        for name, kind, v in zip(names, kinds, vals):
            bits[name] = v.reshape(-1, v.shape[-1]) if kind == "bits" else ring.bits_of(v.reshape(-1), ell)
        (z,) = f.evaluate(bits).values()
        if arith_out:
            return ring.from_bits(z, sess.cfg).reshape(out_shape)
        return z.reshape(*out_shape, z.shape[-1])

    return fn


# -------------------------------------------------------------- conversions
CASES = {"BGB": (False, False), "BGA": (False, True), "AGB": (True, False), "AGA": (True, True)}


def convert(sess: Session, case: str, f: BoolCircuit, inputs: dict[str, Shared], variant: int = 2) -> Shared:
    """Evaluate ``f`` in the garbled world and come back shared.

    ``case`` names input and output worlds: B (boolean, bits on the last axis)
    or A (ring elements, bit-decomposed inside the circuit). The circuit also
    masks the output with R drawn by P0 and P3; the evaluators learn only
    f + R and jointly share it, and R's sharing is subtracted afterwards.
    """
    arith_in, arith_out = CASES[case]
    names = list(f.inputs)
    first = inputs[names[0]]
    for name in names:
        if (inputs[name].dom.kind == "ring") != arith_in:
            raise ValueError(f"case {case} expects {'ring' if arith_in else 'bits'} input for {name}")
    batch = _batch(sess, first)
    lead = first.shape if arith_in else first.shape[:-1]
    (out_width,) = [len(ws) for ws in f.outputs.values()]
    if arith_out and out_width != sess.cfg.ell:
        raise ValueError("arithmetic output needs an ell-bit circuit output")
    t_in = max(s.t for s in inputs.values())
    with sess.op(f"gc{variant}-{case}", gates=batch):
        if variant == 2:
            out = _convert_2gc(sess, f, inputs, arith_in, arith_out, batch, lead, out_width, t_in)
        elif variant == 1:
            out = _convert_1gc(sess, f, inputs, arith_in, arith_out, batch, lead, out_width, t_in)
        else:
            raise ValueError("variant must be 1 or 2")
    kinds = [inputs[n].dom.kind for n in names]
    return sess.record(_clear_fn(sess, f, kinds, arith_out, lead), [inputs[n] for n in names], out)


def _mask(sess: Session, batch: int, width: int, arith_out: bool, lead):
    """R sampled by P0, P3 and its sharing (joint share by P0, P3)."""
    pre = "online" if sess.pre == "ondemand" else "pre"
    if arith_out:
        r = sess.sample((0, 3), (batch,), sess.A, "R")
        R = jsh(sess, (0, 3), {0: r, 3: r}, sess.A, pre, tag="gc")
        r_bits = _ring_bits(sess, r)
    else:
        r_bits = sess.sample((0, 3), (batch, width), sess.B, "R")
        R = jsh(sess, (0, 3), {0: r_bits, 3: r_bits}, sess.B, pre, tag="gc")
    return r_bits, R


def _finish(sess: Session, z: dict[int, np.ndarray], R: Shared, arith_out: bool, t: int, lead) -> Shared:
    """Evaluators jointly share z = f + R; the result is z - R."""
    if arith_out:
        vals = {p: ring.from_bits(z[p], sess.cfg) for p in (1, 2)}
        Z = jsh(sess, (1, 2), vals, sess.A, "online", t, deferred=True, tag="gc")
        out = Z.zip(R, sess.A.sub)
        return out.reshape(*lead)
    Z = jsh(sess, (1, 2), z, sess.B, "online", t, deferred=True, tag="gc")
    out = Z.zip(R, sess.B.sub)
    return out.reshape(*lead, z[1].shape[-1])


def _convert_2gc(sess, f, inputs, arith_in, arith_out, batch, lead, out_width, t_in) -> Shared:
    pre = "online" if sess.pre == "ondemand" else "pre"
    circ = wrap_circuit(f, arith_in, arith_out, ("m", "a", "l3"))
    r_bits, R = _mask(sess, batch, out_width, arith_out, lead)
    shares = {}
    for name in f.inputs:
        for part, gs in compound_share(sess, inputs[name], tag="gsh").items():
            shares[f"{name}.{part}"] = gs
    shares["R"] = gsh(sess, {0: r_bits, 3: r_bits}, {1: (0, 3), 2: (0, 3)}, pre, tag="gsh")
    z = {}
    for j in (1, 2):
        inst = instance(sess, j)
        zero_in = {name: gs.zero(j) for name, gs in shares.items()}
        seed = inst.seed(sess, "gc")
        gc, zero = garble(circ, inst.delta, zero_in, seed, j)
        got = sess.jsnd(0, 3, j, {0: gc.to_array(), 3: gc.to_array()}, "bytes", "gc", f"gc{j}", pre)
        gc_j = gc.from_array(got)
        out_zero = zero[circ.outputs["z"]]
        dec = lsb(np.moveaxis(out_zero, 0, 1))
        dec_j = sess.jsnd(0, 3, j, {0: dec, 3: dec}, "bits", "gc", f"dec{j}", pre)
        keys = evaluate_gc(gc_j, {name: gs.active(j) for name, gs in shares.items()})["z"]
        z[j] = decode(keys, dec_j)
    return _finish(sess, z, R, arith_out, t_in + 1, lead)


def _convert_1gc(sess, f, inputs, arith_in, arith_out, batch, lead, out_width, t_in) -> Shared:
    """One instance: x = x1 (+) x2 (+) x3 with x1 = m (+) l2 at P2, P3, x2 = l3 at
    P0, P2 and x3 = l1 at P0, P3. x3 and R are hard-coded into P0/P3's garbling,
    so only x1's keys move online. P1 then hands z to P2 with a proof key hash.
    """
    pre = "online" if sess.pre == "ondemand" else "pre"
    inst = instance(sess, 1)
    circ = wrap_circuit(f, arith_in, arith_out, ("x1", "x2", "x3"))
    r_bits, R = _mask(sess, batch, out_width, arith_out, lead)
    shares: dict[str, GarbledShare] = {}
    fixed_vals: dict[str, np.ndarray] = {"R": r_bits}
    for name in f.inputs:
        x = inputs[name]
        if arith_in:
            flat = lambda a: _ring_bits(sess, a.reshape(-1))
            x1 = {p: flat(sess.A.sub(x[p, "m"], x[p, "l2"])) for p in (2, 3)}
        else:
            flat = lambda a: a.reshape(-1, a.shape[-1])
            x1 = {p: flat(x[p, "m"] ^ x[p, "l2"]) for p in (2, 3)}
        x2 = {p: flat(x[p, "l3"]) for p in (0, 2)}
        fixed_vals[f"{name}.x3"] = flat(x[0, "l1"])
        shares[f"{name}.x2"] = gsh(sess, x2, {1: (0, 2)}, pre, tag="gsh", instances=(1,))
        shares[f"{name}.x1"] = gsh(sess, x1, {1: (2, 3)}, "online", x.t + 1, tag="gsh", instances=(1,))
    zero_in = {name: gs.zero(1) for name, gs in shares.items()}
    for name, vals in fixed_vals.items():
        zero_in[name] = inst.fresh_keys(sess, vals.shape, "fixed")
    seed = inst.seed(sess, "gc")
    # P3 holds l1 and R just like P0, so both produce the same garbled circuit
    gc, zero = garble(circ, inst.delta, zero_in, seed, 1, fixed_values=fixed_vals)
    got = sess.jsnd(0, 3, 1, {0: gc.to_array(), 3: gc.to_array()}, "bytes", "gc", "gc1", pre)
    gc_1 = gc.from_array(got)
    out_zero = np.moveaxis(zero[circ.outputs["z"]], 0, 1)
    dec = lsb(out_zero)
    dec_1 = sess.jsnd(0, 3, 1, {0: dec, 3: dec}, "bits", "gc", "dec1", pre)
    keys = evaluate_gc(gc_1, {name: gs.active(1) for name, gs in shares.items()})["z"]
    z1 = decode(keys, dec_1)

    # second round: P1 -> P2 with the output key's lsb and hash
    q = lsb(keys)
    q2 = sess.send(1, 2, q, "bits", "gc", "q", "online", t_in + 2)
    h = np.frombuffer(digest(keys), dtype=np.uint8)
    h2 = sess.send(1, 2, h, "bytes", "gc", "qhash", "verify").tobytes()
    ok = key_matches(q2, h2, out_zero, inst.delta)
    z2 = q2 ^ dec if ok else np.zeros_like(dec)
    if not ok:
        sess.add_check(Complaints(phase="online", ttp=0, complaints={2: True}))
    return _finish(sess, {1: z1, 2: z2}, R, arith_out, t_in + 2, lead)


# ----------------------------------------------------------------- output
def _placeholder(sess: Session, fn, inputs: list[Shared], width: int) -> Shared:
    return sess.record(fn, inputs, Shared(sess.B, {p: {} for p in range(4)}, 0))


def gc_output(sess: Session, f: BoolCircuit, inputs: dict[str, Shared], variant: int = 2) -> Opened:
    """Evaluate ``f`` on boolean inputs in the garbled world and open the result.

    Towards an evaluator: garblers send the decoding bits (all three with a
    majority vote in fair mode, a joint send in robust mode). Towards the
    other garblers: evaluators send the lsb of their output keys plus a hash
    of the keys, which a garbler accepts only if it matches one of its two
    keys per wire.
    """
    names = list(f.inputs)
    for name in names:
        if inputs[name].dom.kind != "bits":
            raise ValueError("gc_output takes boolean inputs")
    first = inputs[names[0]]
    lead = first.shape[:-1]
    batch = _batch(sess, first)
    kinds = ["bits"] * len(names)
    fn = _clear_fn(sess, f, kinds, False, lead)
    marker = _placeholder(sess, fn, [inputs[n] for n in names], 0)
    t_in = max(s.t for s in inputs.values())
    instances = (1, 2) if variant == 2 else (1,)
    pre = "online" if sess.pre == "ondemand" else "pre"
    with sess.op(f"gc{variant}-out", gates=batch):
        if variant == 2:
            circ = wrap_circuit(f, False, None, ("m", "a", "l3"))
            shares = {}
            for name in names:
                for part, gs in compound_share(sess, inputs[name], tag="gsh").items():
                    shares[f"{name}.{part}"] = gs
            fixed_vals = {}
        else:
            circ = wrap_circuit(f, False, None, ("x1", "x2", "x3"))
            shares, fixed_vals = {}, {}
            for name in names:
                x = inputs[name]
                flat = lambda a: a.reshape(-1, a.shape[-1])
                shares[f"{name}.x2"] = gsh(sess, {p: flat(x[p, "l3"]) for p in (0, 2)}, {1: (0, 2)}, pre,
                                           tag="gsh", instances=(1,))
                shares[f"{name}.x1"] = gsh(sess, {p: flat(x[p, "m"] ^ x[p, "l2"]) for p in (2, 3)}, {1: (2, 3)},
                                           "online", x.t + 1, tag="gsh", instances=(1,))
                fixed_vals[f"{name}.x3"] = flat(x[0, "l1"])
        keys, zeros, decs = {}, {}, {}
        for j in instances:
            inst = instance(sess, j)
            zero_in = {name: gs.zero(j) for name, gs in shares.items()}
            for name, vals in fixed_vals.items():
                zero_in[name] = inst.fresh_keys(sess, vals.shape, "fixed")
            gc, zero = garble(circ, inst.delta, zero_in, inst.seed(sess, "gc"), j, fixed_values=fixed_vals)
            got = sess.jsnd(0, 3, j, {0: gc.to_array(), 3: gc.to_array()}, "bytes", "gc", f"gc{j}", pre)
            out_zero = np.moveaxis(zero[circ.outputs["z"]], 0, 1)
            zeros[j] = out_zero
            dec = lsb(out_zero)
            if sess.mode == "fair":
                sent = [sess.send(g, j, dec, "bits", "gcout", f"dec{j}", pre) for g in inst.garblers]
                decs[j] = majority(sent, 0)
            else:
                decs[j] = sess.jsnd(0, 3, j, {0: dec, 3: dec}, "bits", "gcout", f"dec{j}", pre)
            keys[j] = evaluate_gc(gc.from_array(got), {name: gs.active(j) for name, gs in shares.items()})["z"]

        values: dict[int, np.ndarray | None] = {j: decode(keys[j], decs[j]) for j in instances}
        rnd = t_in + 2
        dec_of = {j: lsb(zeros[j]) for j in instances}
        if variant == 2:
            for g in (0, 3):
                for j in (1, 2):
                    q = sess.send(j, g, lsb(keys[j]), "bits", "gcout", f"q{j}", "online", rnd)
                    h = sess.send(j, g, np.frombuffer(digest(keys[j]), dtype=np.uint8), "bytes", "gcout",
                                  f"h{j}", "verify").tobytes()
                    if values.get(g) is None and key_matches(q, h, zeros[j], instance(sess, j).delta):
                        values[g] = q ^ dec_of[j]
            complaints = {g: values.get(g) is None for g in (0, 3)}
        else:
            delta = instance(sess, 1).delta
            own = {}
            for g in (0, 2, 3):
                q = sess.send(1, g, lsb(keys[1]), "bits", "gcout", "q1", "online", rnd)
                h = sess.send(1, g, np.frombuffer(digest(keys[1]), dtype=np.uint8), "bytes", "gcout", "h1",
                              "verify").tobytes()
                own[g] = q ^ dec_of[1] if key_matches(q, h, zeros[1], delta) else None
            for g in (0, 2, 3):
                values[g] = own[g]
            for g in (0, 2, 3):
                if own[g] is None:
                    continue
                for peer in (0, 2, 3):
                    if peer != g:
                        got = sess.send(g, peer, own[g], "bits", "gcout", "fwd", "online", rnd + 1)
                        if values[peer] is None:
                            values[peer] = got
            complaints = {g: values[g] is None for g in (0, 2, 3)}
        if any(complaints.values()):
            sess.add_check(Complaints(phase="online", ttp=0, complaints=complaints))
        sess.flush()
        st = sess.status
        if st[0] == "abort":
            return Opened("abort", {p: None for p in range(4)})
        if st[0] == "ttp":
            return Opened("ttp", sess.ttp_outputs(marker), st[1])
        if st[0] == "divergent":
            return Opened("divergent", {p: None for p in range(4)})
        return Opened("ok", {p: v.reshape(*lead, v.shape[-1]) for p, v in values.items()})
