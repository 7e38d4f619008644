"""Multiplication: two-input, dot product, matrix product, 3/4-input gates.

Every variant runs through :func:`_mult_terms`. Write each input as
x_i = m_i - l_i and expand the product over subsets X of the inputs:

    z = sum_X sign(|X|) * m_{not X} * l_X ,  sign = (-1)^|X|

The X = {} term is public to the online parties. Every other l_X is
prepared in preprocessing as one of two kinds of sharing:

* ``G`` terms are three-part sharings (g1 at P1,P3; g2 at P2,P3; g3 at
  P1,P2). Single masks are already of this kind, and products of two
  masks are made into one by :func:`mult_sgr`.
* ``ADD`` terms are split into gamma1 (P0,P1), gamma2 (P0,P2) and
  gamma3 (P0,P3). Inner terms hand gamma3 over through u1 + u2. The top
  term folds gamma3 - u1 - u2 into the offset r, which is jointly shared
  by P0 and P3.

Online, P1 and P2 swap y1 and y2 and jointly share p = z - r. P3 checks
y1 + y2 by hash.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ring
from .session import HashCheck, Session
from .shares import GrShare, Shared
from .sharing import jsh


def _sign(dom, size: int, x):
    return dom.neg(x) if size % 2 else x


def gamma_parts(dom, prod, x: GrShare, y: GrShare) -> tuple[dict, dict, dict]:
    """Split x*y (both three-part shared, P0 knows all) into pair-held parts."""
    add = dom.add
    g1 = {p: add(add(prod(x[p, "g1"], y[p, "g3"]), prod(x[p, "g3"], y[p, "g1"])), prod(x[p, "g3"], y[p, "g3"]))
          for p in (0, 1)}
    g2 = {p: add(add(prod(x[p, "g2"], y[p, "g3"]), prod(x[p, "g3"], y[p, "g2"])), prod(x[p, "g2"], y[p, "g2"]))
          for p in (0, 2)}
    g3 = {p: add(add(prod(x[p, "g1"], y[p, "g2"]), prod(x[p, "g2"], y[p, "g1"])), prod(x[p, "g1"], y[p, "g1"]))
          for p in (0, 3)}
    return g1, g2, g3


def mult_sgr(sess: Session, x: GrShare, y: GrShare, prod=None, phase: str = "pre", tag: str = "mult_sgr") -> GrShare:
    """Product of two three-part sharings whose values P0 knows in full."""
    dom = x.dom
    prod = prod or dom.mul
    g1, g2, g3 = gamma_parts(dom, prod, x, y)
    zeros = sess.zero(g1[0].shape, dom)
    spr1 = {p: dom.add(g1[p], zeros[1]) for p in (0, 1)}
    spr2 = {p: dom.add(g2[p], zeros[2]) for p in (0, 2)}
    spr3 = {p: dom.add(g3[p], zeros[3]) for p in (0, 3)}
    kind = dom.kind
    spr1_at2 = sess.jsnd(0, 1, 2, spr1, kind, tag, "spr1", phase)
    spr2_at3 = sess.jsnd(0, 2, 3, spr2, kind, tag, "spr2", phase)
    spr3_at1 = sess.jsnd(0, 3, 1, spr3, kind, tag, "spr3", phase)
    return GrShare(dom, {
        0: {"g1": spr3[0], "g2": spr2[0], "g3": spr1[0]},
        1: {"g1": spr3_at1, "g3": spr1[1]},
        2: {"g2": spr2[2], "g3": spr1_at2},
        3: {"g1": spr3[3], "g2": spr2_at3},
    })


@dataclass
class _Term:
    subset: tuple
    kind: str
    a1: np.ndarray | None = None
    a2: np.ndarray | None = None
    a3: dict | None = None
    v3: np.ndarray | None = None
    s: np.ndarray | None = None


def _add_term(sess, dom, subset, g1, g2, g3, phase, tag, top: bool, n: int):
    """Preprocess one ADD term. Returns the term and, for the top term, q's parts."""
    kind = dom.kind
    shape = g1[0].shape
    step = "".join(map(str, subset))
    u1 = sess.sample((0, 1, 3), shape, dom, "u1")
    if top:
        u2 = sess.sample((0, 2, 3), shape, dom, "u2")
        u2_at2 = u2
        r = {p: _sign(dom, n, dom.sub(dom.sub(g3[p], u1), u2)) for p in (0, 3)}
    else:
        u2v = {p: dom.sub(g3[p], u1) for p in (0, 3)}
        u2_at2 = sess.jsnd(0, 3, 2, u2v, kind, tag, f"u2-{step}", phase)
        u2 = u2v[3]
        r = None
    if sess.mode == "fair":
        s = sess.sample((0, 1, 2), shape, dom, "s")
        w0 = dom.add(dom.add(g1[0], g2[0]), s)
        w3 = sess.send(0, 3, w0, kind, tag, f"w-{step}", phase)
    else:
        s1 = sess.sample((0, 1, 2), shape, dom, "s1")
        s2 = sess.sample((0, 1, 2), shape, dom, "s2")
        s = dom.add(s1, s2)
        w1 = {p: dom.add(g1[p], s1) for p in (0, 1)}
        w2 = {p: dom.add(g2[p], s2) for p in (0, 2)}
        w0 = dom.add(w1[0], w2[0])
        w3 = sess.send(0, 3, w0, kind, tag, f"w-{step}", phase)
        sess.vrfy_add({0: w0, 3: w3}, w1, w2)
    term = _Term(subset, "ADD", a1=dom.add(g1[1], u1), a2=dom.add(g2[2], u2_at2), s=s)
    if top:
        term.v3 = dom.add(dom.add(w3, u1), u2)
    else:
        term.v3 = dom.add(w3, g3[3])
    return term, r


def _g_term(subset, g: GrShare, dom) -> _Term:
    return _Term(subset, "G", a1=g[1, "g1"], a2=g[2, "g2"], a3={1: g[1, "g3"], 2: g[2, "g3"]},
                 v3=dom.add(g[3, "g1"], g[3, "g2"]))


def _mult_terms(sess: Session, xs: list[Shared], trunc: bool, tag: str, prod=None, ondemand: bool = False) -> Shared:
    dom = xs[0].dom
    kind = dom.kind
    n = len(xs)
    bilinear = prod is not None
    prod = prod or dom.mul
    phase = "online" if ondemand else "pre"
    t_in = max(x.t for x in xs)
    shift = sess.cfg.frac_bits * (n - 1)
    cut = (lambda v: ring.truncate_round(v, sess.cfg, shift)) if trunc else (lambda v: v)
    lam = [GrShare.of_mask(x) for x in xs]
    full = tuple(range(n))

    def place(subset, a, p):
        """sign * a multiplied by the inputs outside ``subset`` (party p's m's)."""
        rest = [i for i in full if i not in subset]
        if bilinear:
            if subset == (0,):
                val = prod(a, xs[1][p, "m"])
            elif subset == (1,):
                val = prod(xs[0][p, "m"], a)
            else:
                val = a
        else:
            val = a
            for i in rest:
                val = dom.mul(val, xs[i][p, "m"])
        return _sign(dom, len(subset), val)

    terms: list[_Term] = [_g_term((i,), lam[i], dom) for i in range(n)]
    q_parts = None
    if n == 2:
        g = gamma_parts(dom, prod, lam[0], lam[1])
        top, q_parts = _add_term(sess, dom, full, *g, phase, tag, True, n)
        terms.append(top)
    elif n == 3:
        gab = mult_sgr(sess, lam[0], lam[1], phase=phase, tag=tag)
        terms.append(_g_term((0, 1), gab, dom))
        for pair in ((0, 2), (1, 2)):
            g = gamma_parts(dom, dom.mul, lam[pair[0]], lam[pair[1]])
            terms.append(_add_term(sess, dom, pair, *g, phase, tag, False, n)[0])
        g = gamma_parts(dom, dom.mul, gab, lam[2])
        top, q_parts = _add_term(sess, dom, full, *g, phase, tag, True, n)
        terms.append(top)
    elif n == 4:
        gab = mult_sgr(sess, lam[0], lam[1], phase=phase, tag=tag)
        gcd = mult_sgr(sess, lam[2], lam[3], phase=phase, tag=tag)
        terms.append(_g_term((0, 1), gab, dom))
        terms.append(_g_term((2, 3), gcd, dom))
        for pair in ((0, 2), (0, 3), (1, 2), (1, 3)):
            g = gamma_parts(dom, dom.mul, lam[pair[0]], lam[pair[1]])
            terms.append(_add_term(sess, dom, pair, *g, phase, tag, False, n)[0])
        for subset, left, right in (((0, 1, 2), gab, lam[2]), ((0, 1, 3), gab, lam[3]),
                                    ((0, 2, 3), gcd, lam[0]), ((1, 2, 3), gcd, lam[1])):
            g = gamma_parts(dom, dom.mul, left, right)
            terms.append(_add_term(sess, dom, subset, *g, phase, tag, False, n)[0])
        g = gamma_parts(dom, dom.mul, gab, gcd)
        top, q_parts = _add_term(sess, dom, full, *g, phase, tag, True, n)
        terms.append(top)
    else:
        raise ValueError(f"unsupported fan-in {n}")

    q = {p: cut(q_parts[p]) for p in (0, 3)}
    Q = jsh(sess, (0, 3), q, dom, phase, t_in, tag=tag)

    # online
    y1 = y2 = None
    y3 = {1: None, 2: None}
    for term in terms:
        c1 = place(term.subset, term.a1, 1)
        c2 = place(term.subset, term.a2, 2)
        y1 = c1 if y1 is None else dom.add(y1, c1)
        y2 = c2 if y2 is None else dom.add(y2, c2)
        if term.a3 is not None:
            for p in (1, 2):
                c = place(term.subset, term.a3[p], p)
                y3[p] = c if y3[p] is None else dom.add(y3[p], c)
    rnd = t_in + 1
    y1_at2 = sess.send(1, 2, y1, kind, tag, "y1", "online", rnd)
    y2_at1 = sess.send(2, 1, y2, kind, tag, "y2", "online", rnd)
    mine = {1: (y1, y2_at1), 2: (y1_at2, y2)}
    p_val = {}
    for p in (1, 2):
        m_all = xs[0][p, "m"]
        if bilinear:
            m_all = prod(m_all, xs[1][p, "m"])
        else:
            for x in xs[1:]:
                m_all = dom.mul(m_all, x[p, "m"])
        zr = dom.add(dom.add(dom.add(mine[p][0], mine[p][1]), y3[p]), m_all)
        p_val[p] = cut(zr)
    P = jsh(sess, (1, 2), p_val, dom, "online", t_in + 1, deferred=True, tag=tag)
    out = P.zip(Q, dom.add)
    out.t = t_in + 1

    # P3 recomputes y1 + y2 (blinded by s on the ADD terms); P1 and P2 compare.
    v3 = None
    check = {1: dom.add(*mine[1]), 2: dom.add(*mine[2])}
    for term in terms:
        c = place(term.subset, term.v3, 3)
        v3 = c if v3 is None else dom.add(v3, c)
        if term.s is not None:
            for p in (1, 2):
                check[p] = dom.add(check[p], place(term.subset, term.s, p))
    sess.add_check(HashCheck(phase="online", ttp=0, pairs=[(3, 1, v3, check[1]), (3, 2, v3, check[2])],
                             tag=tag, step="hv"))
    return out


def _clear_trunc(sess, shift):
    return lambda v: ring.truncate(v, sess.cfg, shift)


def _gates(s: Shared) -> int:
    return int(np.prod(s.shape))


def mult(sess: Session, a: Shared, b: Shared, trunc: bool = False) -> Shared:
    """Elementwise product, optionally truncated by the fractional bits."""
    if sess.pre == "ondemand":
        return mult_nopre(sess, a, b, trunc)
    dom = a.dom
    with sess.op("mult", gates=_gates(a)):
        out = _mult_terms(sess, [a, b], trunc, "mult")
    clear = (lambda x, y: ring.truncate(dom.mul(x, y), sess.cfg)) if trunc else dom.mul
    return sess.record(clear, [a, b], out)


def mult_nopre(sess: Session, a: Shared, b: Shared, trunc: bool = False) -> Shared:
    """The same computation with everything moved into the online phase."""
    dom = a.dom
    with sess.op("mult_nopre", gates=_gates(a)):
        out = _mult_terms(sess, [a, b], trunc, "mult_nopre", ondemand=True)
    clear = (lambda x, y: ring.truncate(dom.mul(x, y), sess.cfg)) if trunc else dom.mul
    return sess.record(clear, [a, b], out)


def dotp(sess: Session, a: Shared, b: Shared, trunc: bool = False) -> Shared:
    """Inner product over the last axis; communication does not depend on its length."""
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    cfg = sess.cfg
    prod = lambda x, y: ring.wrap(np.atleast_1d((x * y).sum(axis=-1, dtype=np.uint64)), cfg)
    with sess.op("dotp", gates=max(1, int(np.prod(a.shape[:-1])))):
        out = _mult_terms(sess, [a, b], trunc, "dotp", prod=prod, ondemand=sess.pre == "ondemand")
    clear = (lambda x, y: ring.truncate(prod(x, y), cfg)) if trunc else prod
    return sess.record(clear, [a, b], out)


def matmul(sess: Session, x: Shared, y: Shared, trunc: bool = False) -> Shared:
    if x.shape[-1] != y.shape[-2]:
        raise ValueError(f"dim mismatch: {x.shape} @ {y.shape}")
    cfg = sess.cfg
    prod = lambda a, b: ring.matmul_plain(a, b, cfg)
    rows = x.shape[-2] if len(x.shape) > 1 else 1
    with sess.op("matmul", gates=rows * y.shape[-1]):
        out = _mult_terms(sess, [x, y], trunc, "matmul", prod=prod, ondemand=sess.pre == "ondemand")
    clear = (lambda a, b: ring.truncate(prod(a, b), cfg)) if trunc else prod
    return sess.record(clear, [x, y], out)


def conv2d(sess: Session, x: Shared, kernels: Shared, stride: int = 1, pad: int = 0, trunc: bool = False) -> Shared:
    """Convolution lowered to one matrix product via im2col.

    ``x`` is (c_in, h, w) and ``kernels`` is (c_out, c_in, f, f); the result
    is (c_out, h', w') with h' = (h - f + 2 pad) / stride + 1.
    """
    c_out, c_in, f, _ = kernels.shape
    if x.shape[0] != c_in:
        raise ValueError("channel mismatch")
    lower = lambda a: ring.im2col(a, f, stride, pad)[0]
    _, (oh, ow) = ring.im2col(np.zeros(x.shape, dtype=np.uint64), f, stride, pad)
    patches = sess.record(lower, [x], x.map(lower))
    kmat_fn = lambda k: k.reshape(c_out, -1).T.copy()
    kmat = sess.record(kmat_fn, [kernels], kernels.map(kmat_fn))
    prod = matmul(sess, patches, kmat, trunc)
    back = lambda a: a.T.reshape(c_out, oh, ow).copy()
    return sess.record(back, [prod], prod.map(back))


def mult_const(sess: Session, alpha, v: Shared, trunc: bool = False) -> Shared:
    """Product with a public constant; with truncation both halves are re-shared."""
    from .sharing import scale
    if not trunc:
        return scale(sess, v, alpha)
    dom = v.dom
    cfg = sess.cfg
    a = dom.const(alpha)
    with sess.op("mult_const", gates=_gates(v)):
        beta1 = {p: ring.truncate_round(dom.mul(a, dom.sub(v[p, "m"], v[p, "l3"])), cfg) for p in (1, 2)}
        beta2 = {p: ring.truncate_round(dom.mul(a, dom.neg(dom.add(v[p, "l1"], v[p, "l2"]))), cfg) for p in (0, 3)}
        B2 = jsh(sess, (0, 3), beta2, dom, "online" if sess.pre == "ondemand" else "pre", v.t, tag="mult_const")
        B1 = jsh(sess, (1, 2), beta1, dom, "online", v.t, deferred=True, tag="mult_const")
        out = B1.zip(B2, dom.add)
    return sess.record(lambda x: ring.truncate(dom.mul(a, x), cfg), [v], out)


def mult3(sess: Session, a: Shared, b: Shared, c: Shared, trunc: bool = False) -> Shared:
    """abc in one online round; truncation removes 2x fractional bits."""
    dom = a.dom
    with sess.op("mult3", gates=_gates(a)):
        out = _mult_terms(sess, [a, b, c], trunc, "mult3")
    shift = 2 * sess.cfg.frac_bits
    clear = lambda x, y, z: dom.mul(dom.mul(x, y), z)
    if trunc:
        clear = lambda x, y, z, _c=clear: ring.truncate(_c(x, y, z), sess.cfg, shift)
    return sess.record(clear, [a, b, c], out)


def mult4(sess: Session, a: Shared, b: Shared, c: Shared, d: Shared, trunc: bool = False) -> Shared:
    dom = a.dom
    with sess.op("mult4", gates=_gates(a)):
        out = _mult_terms(sess, [a, b, c, d], trunc, "mult4")
    shift = 3 * sess.cfg.frac_bits
    clear = lambda w, x, y, z: dom.mul(dom.mul(dom.mul(w, x), y), z)
    if trunc:
        clear = lambda w, x, y, z, _c=clear: ring.truncate(_c(w, x, y, z), sess.cfg, shift)
    return sess.record(clear, [a, b, c, d], out)


# --------------------------------------------------------------- verification
def binary_combine(tau: np.ndarray, w: np.ndarray, ell: int = 64, chunk: int = 1 << 16) -> np.ndarray:
    """Exact sum_j tau[r, j] * w[j] mod 2^ell for a 0/1 matrix tau.

    w is split into 16-bit limbs so a float64 matrix product stays exact.
    """
    reps, M = tau.shape
    acc = np.zeros((reps, 4), dtype=np.uint64)
    for lo in range(0, M, chunk):
        part = w[lo:lo + chunk]
        limbs = np.stack([((part >> np.uint64(16 * k)) & np.uint64(0xFFFF)) for k in range(4)], axis=1)
        sums = tau[:, lo:lo + chunk].astype(np.float64) @ limbs.astype(np.float64)
        acc += sums.astype(np.uint64)
    out = np.zeros(reps, dtype=np.uint64)
    for k in range(4):
        out += acc[:, k] << np.uint64(16 * k)
    return out if ell == 64 else out & np.uint64((1 << ell) - 1)


def vrfy_p0(sess: Session, batch) -> None:
    """Check P0's w values against w1 + w2 with kappa random 0/1 combinations.

    Ring and boolean entries are checked separately (the latter over GF(2)).
    Sets the trusted party to P1 if a combined difference is nonzero.
    """
    for dom in (sess.A, sess.B):
        dtype = np.uint8 if dom.kind == "bits" else np.uint64
        entries = [e for e in batch if e.w[0].dtype == dtype]
        if entries and sess.status[0] == "ok":
            _vrfy_domain(sess, entries, dom)


def _vrfy_domain(sess: Session, batch, dom) -> None:
    from .sharing import _combine
    kind = dom.kind
    cat = lambda key, p: np.concatenate([getattr(e, key)[p] for e in batch]).astype(np.uint64)
    w = {p: cat("w", p) for p in (0, 3)}
    w1 = {p: cat("w1", p) for p in (0, 1)}
    w2 = {p: cat("w2", p) for p in (0, 2)}
    M = w[0].size
    kappa = sess.kappa
    with sess.op("vrfy", gates=M):
        tau = sess.sample((0, 1, 2, 3), (kappa, M), sess.B, "tau-" + kind)
        ell = sess.cfg.ell
        memo: list[tuple[np.ndarray, np.ndarray]] = []

        def comb(arr):
            for src, res in memo:
                if src is arr or np.array_equal(src, arr):
                    return res
            res = binary_combine(tau, arr, ell)
            if kind == "bits":
                res = (res & np.uint64(1)).astype(np.uint8)
            memo.append((arr, res))
            return res

        e = {p: comb(w[p]) for p in (0, 3)}
        e1 = {p: comb(w1[p]) for p in (0, 1)}
        e2 = {p: comb(w2[p]) for p in (0, 2)}
        start = len(sess.queue)
        E = jsh(sess, (0, 3), e, dom, "verify", tag="vrfy")
        E1 = jsh(sess, (0, 1), e1, dom, "verify", tag="vrfy")
        E2 = jsh(sess, (0, 2), e2, dom, "verify", tag="vrfy")
        g = E.zip(E1, dom.sub).zip(E2, dom.sub)
        got = {
            2: ("l1", sess.jsnd(1, 0, 2, {1: g[1, "l1"], 0: g[0, "l1"]}, kind, "vrfy", "rec-l1", "verify")),
            3: ("l3", sess.jsnd(2, 0, 3, {2: g[2, "l3"], 0: g[0, "l3"]}, kind, "vrfy", "rec-l3", "verify")),
            1: ("l2", sess.jsnd(3, 0, 1, {3: g[3, "l2"], 0: g[0, "l2"]}, kind, "vrfy", "rec-l2", "verify")),
            0: ("m", sess.jsnd(1, 2, 0, {1: g[1, "m"], 2: g[2, "m"]}, kind, "vrfy", "rec-m", "verify")),
        }
        sess.flush_local(sess.queue[start:])
        if sess.status[0] != "ok":
            return
        for p, (name, val) in got.items():
            comps = dict(g.c[p])
            comps[name] = val
            if np.any(_combine(dom, comps) != 0) and sess.party_status[p][0] == "ok":
                sess.party_status[p] = ("ttp", 1)
