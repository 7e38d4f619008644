"""Sharing, joint sharing, reconstruction and the local linear operations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ring
from .session import Abort, Complaints, Session
from .shares import HOLDERS, MISSING, Shared
from .transport import digest, majority

JSH_PAIRS = ((1, 2), (1, 3), (2, 3), (0, 1), (0, 2), (0, 3))


def _as_value(sess: Session, value, dom) -> np.ndarray:
    if dom.kind == "bits":
        return np.atleast_1d(np.asarray(value, dtype=np.uint8) & 1)
    return ring.asring(value, sess.cfg)


def share(sess: Session, dealer: int, value, kind: str = "ring", sent: dict | None = None) -> Shared:
    """The dealer masks ``value`` and sends the masked value to P1, P2, P3.

    ``sent`` lets a test make the dealer equivocate: it maps recipients to
    the value actually sent.
    """
    dom = sess.dom(kind)
    v = _as_value(sess, value, dom)
    shape = v.shape
    with sess.op("sh", gates=v.size):
        l1 = sess.sample({dealer, 0, 1, 3}, shape, dom, "l1")
        l2 = sess.sample({dealer, 0, 2, 3}, shape, dom, "l2")
        l3 = sess.sample({dealer, 0, 1, 2}, shape, dom, "l3")
        m = dom.add(dom.add(dom.add(v, l1), l2), l3)
        recv = {}
        for r in (1, 2, 3):
            out = sent.get(r, m) if sent else m
            recv[r] = m if r == dealer else sess.send(dealer, r, out, kind, "sh", "mv", "online", 1)
        own = {r: digest(recv[r]) for r in (1, 2, 3)}
        seen = {r: {r: own[r]} for r in (1, 2, 3)}
        for r in (1, 2, 3):
            h = np.frombuffer(own[r], dtype=np.uint8)
            for q in (1, 2, 3):
                if q != r:
                    seen[q][r] = sess.send(r, q, h, "bytes", "sh", "hash", "verify").tobytes()
        zero = {p: False for p in range(4)}
        if sess.mode == "fair":
            bad = {q: any(h != own[q] for h in seen[q].values()) for q in (1, 2, 3)}
            sess.add_check(Complaints(phase="online", ttp=None, complaints=bad))
        else:
            for q in (1, 2, 3):
                hs = [seen[q][r] for r in (1, 2, 3)]
                maj = majority(hs, None)
                if maj is None:
                    zero[q] = True
                elif own[q] != maj:
                    src = next(r for r in (1, 2, 3) if r != q and seen[q][r] == maj)
                    recv[q] = sess.send(src, q, recv[src], kind, "sh", "fetch", "online", 1)
            if any(zero.values()):
                flags = [sess.send(q, 0, np.array([zero[q]], dtype=np.uint8), "bits", "sh", "default",
                                   "online", 1)[0] for q in (1, 2, 3)]
                zero[0] = bool(majority(flags, 0))
        comps = {
            0: {"l1": l1, "l2": l2, "l3": l3},
            1: {"m": recv[1], "l1": l1, "l3": l3},
            2: {"m": recv[2], "l2": l2, "l3": l3},
            3: {"m": recv[3], "l1": l1, "l2": l2},
        }
        for p, z in zero.items():
            if z:
                comps[p] = {n: dom.zeros(shape) for n in comps[p]}
        out = Shared(dom, comps, t=1)
    return sess.record_input(out)


def jsh(sess: Session, pair, vals: dict, dom, phase: str, t: int = 0, deferred: bool = False,
        tag: str = "jsh") -> Shared:
    """Joint sharing of a value held by both parties of ``pair``.

    ``vals`` maps each of the two parties to its own copy. One of them sends,
    the other vouches by hash at flush time.
    """
    pair = tuple(sorted(pair))
    kind = dom.kind
    some = vals[pair[0]]
    shape = some.shape
    z = dom.zeros(shape)
    rnd = t + 1 if phase == "online" else 0
    out_t = t if (deferred or phase != "online") else t + 1
    step = f"{pair[0]}{pair[1]}"
    # a deferred sharing is off the critical path: its message rides along later
    sess.net.deferred += deferred
    try:
        comps = _jsh_comps(sess, pair, vals, dom, kind, shape, z, phase, rnd, tag, step)
    finally:
        sess.net.deferred -= deferred
    return Shared(dom, comps, out_t)


def _jsh_comps(sess, pair, vals, dom, kind, shape, z, phase, rnd, tag, step) -> dict:
    if pair == (1, 2):
        l3 = sess.sample({0, 1, 2}, shape, dom, "jsh")
        m = {p: dom.add(vals[p], l3) for p in (1, 2)}
        m3 = sess.jsnd(1, 2, 3, m, kind, tag, step, phase, rnd)
        comps = {0: {"l1": z, "l2": z, "l3": l3}, 1: {"m": m[1], "l1": z, "l3": l3},
                 2: {"m": m[2], "l2": z, "l3": l3}, 3: {"m": m3, "l1": z, "l2": z}}
    elif pair == (1, 3):
        l1 = sess.sample({0, 1, 3}, shape, dom, "jsh")
        m = {p: dom.add(vals[p], l1) for p in (1, 3)}
        m2 = sess.jsnd(1, 3, 2, m, kind, tag, step, phase, rnd)
        comps = {0: {"l1": l1, "l2": z, "l3": z}, 1: {"m": m[1], "l1": l1, "l3": z},
                 2: {"m": m2, "l2": z, "l3": z}, 3: {"m": m[3], "l1": l1, "l2": z}}
    elif pair == (2, 3):
        l2 = sess.sample({0, 2, 3}, shape, dom, "jsh")
        m = {p: dom.add(vals[p], l2) for p in (2, 3)}
        m1 = sess.jsnd(2, 3, 1, m, kind, tag, step, phase, rnd)
        comps = {0: {"l1": z, "l2": l2, "l3": z}, 1: {"m": m1, "l1": z, "l3": z},
                 2: {"m": m[2], "l2": l2, "l3": z}, 3: {"m": m[3], "l1": z, "l2": l2}}
    elif pair == (0, 1):
        l1 = sess.sample({0, 1, 3}, shape, dom, "jsh")
        l3 = {p: dom.sub(dom.neg(vals[p]), l1) for p in (0, 1)}
        l3_at2 = sess.jsnd(0, 1, 2, l3, kind, tag, step, phase, rnd)
        comps = {0: {"l1": l1, "l2": z, "l3": l3[0]}, 1: {"m": z, "l1": l1, "l3": l3[1]},
                 2: {"m": z, "l2": z, "l3": l3_at2}, 3: {"m": z, "l1": l1, "l2": z}}
    elif pair == (0, 2):
        l3 = sess.sample({0, 1, 2}, shape, dom, "jsh")
        l2 = {p: dom.sub(dom.neg(vals[p]), l3) for p in (0, 2)}
        l2_at3 = sess.jsnd(0, 2, 3, l2, kind, tag, step, phase, rnd)
        comps = {0: {"l1": z, "l2": l2[0], "l3": l3}, 1: {"m": z, "l1": z, "l3": l3},
                 2: {"m": z, "l2": l2[2], "l3": l3}, 3: {"m": z, "l1": z, "l2": l2_at3}}
    elif pair == (0, 3):
        l2 = sess.sample({0, 2, 3}, shape, dom, "jsh")
        l1 = {p: dom.sub(dom.neg(vals[p]), l2) for p in (0, 3)}
        l1_at1 = sess.jsnd(0, 3, 1, l1, kind, tag, step, phase, rnd)
        comps = {0: {"l1": l1[0], "l2": l2, "l3": z}, 1: {"m": z, "l1": l1_at1, "l3": z},
                 2: {"m": z, "l2": l2, "l3": z}, 3: {"m": z, "l1": l1[3], "l2": l2}}
    else:
        raise ValueError(f"unsupported joint-sharing pair {pair}")
    return comps


def joint_share(sess: Session, pair, value, kind: str = "ring", phase: str = "online") -> Shared:
    """Public entry point: both parties of ``pair`` hold the clear ``value``."""
    dom = sess.dom(kind)
    v = _as_value(sess, value, dom)
    with sess.op("jsh", gates=v.size):
        out = jsh(sess, pair, {p: v for p in pair}, dom, phase, deferred=(tuple(sorted(pair)) == (1, 2)))
    out.t = max(out.t, 1)
    return sess.record_input(out)


@dataclass
class Opened:
    status: str
    values: dict
    ttp: int | None = None

    @property
    def value(self) -> np.ndarray:
        """The output agreed by at least three parties."""
        if self.status == "abort":
            raise Abort("computation aborted")
        vals = [v for v in self.values.values() if v is not None]
        for v in vals:
            if sum(np.array_equal(v, w) for w in vals) >= 3:
                return v
        raise RuntimeError("no three parties agree on the output")


def _combine(dom, comps):
    return dom.sub(dom.sub(dom.sub(comps["m"], comps["l1"]), comps["l2"]), comps["l3"])


def reconstruct(sess: Session, sh: Shared) -> Opened:
    """Open ``sh`` to all four parties after resolving every pending check."""
    kind = sh.dom.kind
    dom = sh.dom
    with sess.op("rec", gates=int(np.prod(sh.shape))):
        sess.flush()
        st = sess.status
        if st[0] == "abort":
            return Opened("abort", {p: None for p in range(4)})
        if st[0] == "ttp":
            return Opened("ttp", sess.ttp_outputs(sh), st[1])
        if st[0] == "divergent":
            return Opened("divergent", {p: None for p in range(4)})
        rnd = sh.t + 1
        if sess.mode == "fair":
            values = {}
            for p in range(4):
                name = MISSING[p]
                a, b, c = HOLDERS[name]
                va = sess.send(a, p, sh[a, name], kind, "rec", name, "online", rnd)
                vb = sess.send(b, p, sh[b, name], kind, "rec", name, "online", rnd)
                hc = sess.send(c, p, np.frombuffer(digest(sh[c, name]), dtype=np.uint8), "bytes", "rec",
                               name + "-hash", "verify").tobytes()
                if np.array_equal(va, vb):
                    got = va
                else:
                    got = va if digest(va) == hc else vb
                comps = dict(sh.c[p])
                comps[name] = got
                values[p] = _combine(dom, comps)
            return Opened("ok", values)
        start = len(sess.queue)
        got = {
            2: ("l1", sess.jsnd(1, 0, 2, {1: sh[1, "l1"], 0: sh[0, "l1"]}, kind, "rec", "l1", "online", rnd)),
            3: ("l3", sess.jsnd(2, 0, 3, {2: sh[2, "l3"], 0: sh[0, "l3"]}, kind, "rec", "l3", "online", rnd)),
            1: ("l2", sess.jsnd(3, 0, 1, {3: sh[3, "l2"], 0: sh[0, "l2"]}, kind, "rec", "l2", "online", rnd)),
            0: ("m", sess.jsnd(1, 2, 0, {1: sh[1, "m"], 2: sh[2, "m"]}, kind, "rec", "m", "online", rnd)),
        }
        sess.flush_local(sess.queue[start:])
        if sess.ttp is not None:
            return Opened("ttp", sess.ttp_outputs(sh), sess.ttp)
        values = {}
        for p, (name, v) in got.items():
            comps = dict(sh.c[p])
            comps[name] = v
            values[p] = _combine(dom, comps)
        return Opened("ok", values)


def open_value(sess: Session, sh: Shared) -> np.ndarray:
    return reconstruct(sess, sh).value


# ---------------------------------------------------------------- linear ops
def add(sess: Session, a: Shared, b: Shared) -> Shared:
    dom = a.dom
    return sess.record(dom.add, [a, b], a.zip(b, dom.add))


def sub(sess: Session, a: Shared, b: Shared) -> Shared:
    dom = a.dom
    return sess.record(dom.sub, [a, b], a.zip(b, dom.sub))


def neg(sess: Session, a: Shared) -> Shared:
    dom = a.dom
    return sess.record(dom.neg, [a], a.map(dom.neg))


def add_const(sess: Session, a: Shared, c) -> Shared:
    """v + c: only the masked value moves."""
    dom = a.dom
    c = dom.const(c)
    out = Shared(dom, {p: {n: (dom.add(x, c) if n == "m" else x) for n, x in comps.items()}
                       for p, comps in a.c.items()}, a.t)
    return sess.record(lambda v: dom.add(v, c), [a], out)


def xor_const(sess: Session, a: Shared, c) -> Shared:
    return add_const(sess, a, c)


def bit_not(sess: Session, a: Shared) -> Shared:
    return add_const(sess, a, 1)


def scale(sess: Session, a: Shared, c) -> Shared:
    """Multiply by a public ring constant with no interaction."""
    dom = a.dom
    c = dom.const(c)
    with sess.op("mult_const", gates=int(np.prod(a.shape))):
        out = a.map(lambda x: dom.mul(x, c))
    return sess.record(lambda v: dom.mul(v, c), [a], out)


def index(sess: Session, a: Shared, idx) -> Shared:
    return sess.record(lambda v: v[idx], [a], a.index(idx))


def reshape(sess: Session, a: Shared, *shape) -> Shared:
    return sess.record(lambda v: v.reshape(*shape), [a], a.reshape(*shape))


def concat(sess: Session, items: list[Shared], axis: int = -1) -> Shared:
    from .shares import concat as _cat
    return sess.record(lambda *vs: np.concatenate(vs, axis=axis), items, _cat(items, axis))


def stack(sess: Session, items: list[Shared], axis: int = -1) -> Shared:
    from .shares import stack as _st
    return sess.record(lambda *vs: np.stack(vs, axis=axis), items, _st(items, axis))


def sum_last(sess: Session, a: Shared) -> Shared:
    dom = a.dom
    if dom.kind == "bits":
        fn = lambda x: np.bitwise_xor.reduce(x, axis=-1)
    else:
        fn = lambda x: ring.wrap(x.sum(axis=-1, dtype=np.uint64), sess.cfg)
    return sess.record(fn, [a], a.map(fn))
