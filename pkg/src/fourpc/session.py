"""The four-party runtime: keys, network, deferred checks and fallback.

A :class:`Session` drives all four parties in one process. Protocol code
computes each party's values from that party's own share components and
moves data only through :meth:`Session.send` and :meth:`Session.jsnd`, so a
flipped message propagates exactly as it would between real machines.

Consistency checks are queued and resolved in :meth:`Session.flush`. Each
party broadcasts its complaint vector, the vectors are agreed by majority,
and every party derives its own verdict from what it agreed on. Fair mode
aborts on any complaint. Robust mode picks a trusted party from the first
failing check and hands the rest of the computation to it.
"""

from __future__ import annotations

import hashlib
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .randomness import PARTIES, KeyRing, derive_key, joint_bytes, joint_sample, keys_of, setup_keys, zero_shares
from .ring import DEFAULT, FxConfig
from .shares import HOLDERS, Bits, Ring, Shared
from .transport import FaultSpec, Network, digest, majority

OTHERS = {p: tuple(q for q in PARTIES if q != p) for p in PARTIES}


def fourth(*ps: int) -> int:
    (rest,) = set(PARTIES) - set(ps)
    return rest


def parse_seed(seed) -> bytes:
    if isinstance(seed, bytes):
        return seed
    if isinstance(seed, int):
        return seed.to_bytes(32, "big")
    text = str(seed)
    try:
        return bytes.fromhex(text)
    except ValueError:
        return hashlib.sha256(text.encode()).digest()


class Abort(Exception):
    """Raised when a fair-mode session has agreed to abort."""


@dataclass
class Check:
    phase: str
    ttp: int | None

    def run(self, sess: "Session") -> dict[int, bool]:
        raise NotImplementedError


@dataclass
class JsndGroup(Check):
    """All values P_i sent to P_k that P_j must vouch for, hashed once at flush."""

    i: int = 0
    j: int = 0
    k: int = 0
    tag: str = "jsnd"
    h_sender: "hashlib._Hash" = field(default_factory=hashlib.sha256)
    h_receiver: "hashlib._Hash" = field(default_factory=hashlib.sha256)

    def add(self, vouched: np.ndarray, delivered: np.ndarray):
        self.h_sender.update(digest(vouched))
        self.h_receiver.update(digest(delivered))

    def run(self, sess):
        hj = np.frombuffer(self.h_sender.digest(), dtype=np.uint8)
        got = sess.send(self.j, self.k, hj, "bytes", self.tag, f"hash{self.i}{self.j}{self.k}", "verify")
        return {self.k: got.tobytes() != self.h_receiver.digest()}


@dataclass
class HashCheck(Check):
    """Each (src, dst) pair: src sends H(its value), dst compares with H(its own)."""

    pairs: list = field(default_factory=list)
    tag: str = "check"
    step: str = "hash"

    def run(self, sess):
        out = {}
        for src, dst, mine, theirs in self.pairs:
            h = np.frombuffer(digest(mine), dtype=np.uint8)
            got = sess.send(src, dst, h, "bytes", self.tag, self.step, "verify")
            out[dst] = out.get(dst, False) or got.tobytes() != digest(theirs)
        return out


@dataclass
class Complaints(Check):
    """Complaints already fixed when the check was created."""

    complaints: dict = field(default_factory=dict)

    def run(self, sess):
        return dict(self.complaints)


@dataclass
class VrfyEntry:
    w: dict
    w1: dict
    w2: dict


class Session:
    def __init__(self, mode: str = "fair", cfg: FxConfig = DEFAULT, seed=b"\x00" * 32,
                 fault: FaultSpec | str | None = None, transport: str = "inproc",
                 pre: str = "offline", kappa: int = 40, key_setup: str = "dealer"):
        if mode not in ("fair", "robust"):
            raise ValueError(f"unknown mode {mode!r}")
        if pre not in ("offline", "ondemand"):
            raise ValueError(f"unknown preprocessing mode {pre!r}")
        self.mode = mode
        self.cfg = cfg
        self.pre = pre
        self.kappa = kappa
        self.seed = parse_seed(seed)
        if isinstance(fault, str):
            fault = FaultSpec.parse(fault)
        self.A = Ring(cfg)
        self.B = Bits(cfg)
        sid = int.from_bytes(hashlib.sha256(b"session|" + self.seed).digest()[:8], "big")
        self.net = Network(cfg.ell, sid, transport, fault)
        self.queue: list[Check] = []
        self._groups: dict[tuple, JsndGroup] = {}
        self.vrfy_batch: list[VrfyEntry] = []
        self.tape: dict[int, tuple] = {}
        self._wid = 0
        self.party_status: dict[int, tuple] = {p: ("ok", None) for p in PARTIES}
        self.eliminated: int | None = None
        self.divergent = False
        self._ttp_inputs: dict[int, np.ndarray] = {}
        self.online_t = 0
        self.gc_instances: dict = {}
        self.labels = self.net.labels
        if key_setup == "interactive":
            self.keys = self._interactive_keys()
        else:
            self.keys = setup_keys(self.seed)

    # ----------------------------------------------------------------- status
    @property
    def status(self) -> tuple:
        counts: dict[tuple, int] = {}
        for v in self.party_status.values():
            counts[v] = counts.get(v, 0) + 1
        best = max(counts.items(), key=lambda kv: kv[1])
        return best[0] if best[1] >= 3 else ("divergent", None)

    @property
    def ttp(self) -> int | None:
        st = self.status
        return st[1] if st[0] == "ttp" else None

    @property
    def aborted(self) -> bool:
        return self.status[0] == "abort"

    def dom(self, kind: str):
        return self.A if kind == "ring" else self.B

    def close(self):
        self.net.close()

    # ------------------------------------------------------------- randomness
    def sample(self, subset, shape, dom, tag: str = "") -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        label = (self.labels[-1] if self.labels else "") + ":" + tag
        if dom.kind == "bits":
            return joint_sample(self.keys, subset, "bits", shape, label)
        mask = self.cfg.mask if self.cfg.ell < 64 else None
        return joint_sample(self.keys, subset, "ring", shape, label, mask)

    def sample_bytes(self, subset, nbytes: int, tag: str = "") -> bytes:
        label = (self.labels[-1] if self.labels else "") + ":" + tag
        return joint_bytes(self.keys, subset, nbytes, label)

    def zero(self, shape, dom=None, tag: str = "zero") -> dict[int, np.ndarray]:
        """Z1 + Z2 + Z3 = 0 with Z_i known to P0 and P_i."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        if dom is not None and dom.kind == "bits":
            r1 = self.sample((0, 2, 3), shape, dom, tag)
            r2 = self.sample((0, 1, 3), shape, dom, tag)
            r3 = self.sample((0, 1, 2), shape, dom, tag)
            return {1: r3 ^ r2, 2: r1 ^ r3, 3: r2 ^ r1}
        mask = self.cfg.mask if self.cfg.ell < 64 else None
        return zero_shares(self.keys, shape, tag, mask)

    # ---------------------------------------------------------------- network
    def send(self, src, dst, value, kind, tag, step, phase, rnd: int = 0):
        if phase == "online":
            self.online_t = max(self.online_t, rnd)
        return self.net.send(src, dst, value, kind, tag, step, phase, rnd)

    def jsnd(self, i: int, j: int, k: int, vals: dict, kind: str, tag: str, step: str,
             phase: str, rnd: int = 0) -> np.ndarray:
        """P_i sends vals[i] to P_k; P_j's vals[j] is vouched for by hash at flush."""
        got = self.send(i, k, vals[i], kind, tag, step, phase, rnd)
        key = (i, j, k, phase)
        group = self._groups.get(key)
        if group is None:
            group = JsndGroup(phase=phase, ttp=fourth(i, j, k), i=i, j=j, k=k)
            self._groups[key] = group
            self.queue.append(group)
        group.add(vals[j], got)
        return got

    def broadcast(self, sender: int, value: np.ndarray, kind: str, tag: str, step: str,
                  phase: str = "verify") -> dict[int, np.ndarray]:
        """Send to all, relay among recipients, take the majority (default 0)."""
        recips = OTHERS[sender]
        got = {r: self.send(sender, r, value, kind, tag, step, phase) for r in recips}
        agreed = {sender: value}
        for r in recips:
            relays = [got[r]]
            for q in recips:
                if q != r:
                    relays.append(self.send(q, r, got[q], kind, tag, f"{step}-relay{sender}", phase))
            agreed[r] = majority(relays, 0)
        return agreed

    # ------------------------------------------------------------- accounting
    @contextmanager
    def op(self, label: str, gates: int = 0):
        self.net.ledger.calls[label] += 1
        self.net.ledger.gates[label] += gates
        self.labels.append(label)
        span = [1 << 30, -1]
        self.net.spans.append(span)
        try:
            yield
        finally:
            self.labels.pop()
            self.net.spans.pop()
            self.net.ledger.close_span(label, span)

    def record(self, fn, inputs: list[Shared], out: Shared) -> Shared:
        """Put ``out = fn(inputs)`` on the tape; intermediates without an id are skipped."""
        if any(s.wid is None for s in inputs):
            return out
        self._wid += 1
        out.wid = self._wid
        self.tape[out.wid] = (fn, [s.wid for s in inputs])
        return out

    def record_input(self, out: Shared) -> Shared:
        self._wid += 1
        out.wid = self._wid
        self.tape[out.wid] = ("input", out)
        return out

    def add_check(self, check: Check):
        self.queue.append(check)

    def vrfy_add(self, w: dict, w1: dict, w2: dict):
        flat = lambda d: {p: np.ravel(v) for p, v in d.items()}
        self.vrfy_batch.append(VrfyEntry(flat(w), flat(w1), flat(w2)))

    # ------------------------------------------------------------------ flush
    def flush(self) -> tuple:
        """Resolve every queued check. Idempotent once the queue is empty."""
        items, batch = self.queue, self.vrfy_batch
        self.queue, self._groups, self.vrfy_batch = [], {}, []
        if self.status[0] != "ok" or (not items and not batch):
            return self.status
        if self.mode == "fair":
            self._resolve(items)
            return self.status
        pre = [c for c in items if c.phase == "pre"]
        rest = [c for c in items if c.phase != "pre"]
        failed = self._resolve(pre)
        if failed is not None:
            self._identify_cheater(failed)
            return self.status
        if batch and self.status[0] == "ok":
            from .mult import vrfy_p0
            vrfy_p0(self, batch)
        if self.status[0] == "ok":
            self._resolve(rest)
        return self.status

    def flush_local(self, items: list[Check]):
        """Resolve a protocol's own checks right away (robust reconstruction)."""
        own = set(map(id, items))
        self.queue = [c for c in self.queue if id(c) not in own]
        self._groups = {k: g for k, g in self._groups.items() if id(g) not in own}
        return self._resolve(items)

    def _resolve(self, items: list[Check]):
        if not items:
            return None
        complaints = {p: np.zeros(len(items), dtype=np.uint8) for p in PARTIES}
        for idx, item in enumerate(items):
            for p, bad in item.run(self).items():
                complaints[p][idx] |= np.uint8(bool(bad))
        views = {p: {} for p in PARTIES}
        for s in PARTIES:
            for viewer, vec in self.broadcast(s, complaints[s], "bits", "complain", "vector").items():
                views[viewer][s] = vec
        self.net.ledger.max_round["verify"] += 2
        first_fail = None
        for p in PARTIES:
            if self.party_status[p][0] != "ok":
                continue
            flags = np.zeros(len(items), dtype=np.uint8)
            for vec in views[p].values():
                flags |= vec
            bad = np.flatnonzero(flags)
            if bad.size == 0:
                continue
            idx = int(bad[0])
            if self.mode == "fair":
                self.party_status[p] = ("abort", None)
            else:
                self.party_status[p] = ("ttp", items[idx].ttp)
            if first_fail is None:
                first_fail = (items[idx], {s: bool(views[p][s][idx]) for s in PARTIES})
        if self.status[0] == "divergent":
            self.divergent = True
        return first_fail

    def _identify_cheater(self, failed):
        """Parties disclose their keys and replay the preprocessing messages.

        The first message whose delivered content differs from what its
        sender should have sent names the cheater; if all messages were
        honest, the party that complained lied.
        """
        for (tag, step, src, dst), honest, delivered in self.net.pre_log:
            if honest != delivered:
                self.eliminated = src
                return
        _, complainers = failed
        liars = [p for p, c in complainers.items() if c]
        self.eliminated = liars[0] if liars else None

    # -------------------------------------------------------------------- TTP
    def ttp_input(self, T: int, sh: Shared) -> np.ndarray:
        """The trusted party collects each missing component from its holders."""
        if sh.wid in self._ttp_inputs:
            return self._ttp_inputs[sh.wid]
        kind = sh.dom.kind
        comps = {}
        for name, holders in HOLDERS.items():
            if name in sh.c[T]:
                comps[name] = sh.c[T][name]
            else:
                got = [self.send(h, T, sh.c[h][name], kind, "ttp", name, "verify") for h in holders]
                comps[name] = majority(got, 0)
        dom = sh.dom
        v = dom.sub(dom.sub(dom.sub(comps["m"], comps["l1"]), comps["l2"]), comps["l3"])
        self._ttp_inputs[sh.wid] = v
        return v

    def clear_value(self, wid: int, T: int, memo: dict) -> np.ndarray:
        if wid in memo:
            return memo[wid]
        fn, ins = self.tape[wid]
        if fn == "input":
            val = self.ttp_input(T, ins)
        else:
            val = fn(*[self.clear_value(w, T, memo) for w in ins])
        memo[wid] = val
        return val

    def ttp_outputs(self, sh: Shared) -> dict[int, np.ndarray]:
        T = self.ttp
        val = self.clear_value(sh.wid, T, {})
        out = {T: val}
        for p in OTHERS[T]:
            out[p] = self.send(T, p, val, sh.dom.kind, "ttp", "out", "verify")
        return out

    # -------------------------------------------------------------- key setup
    def _interactive_keys(self) -> dict[int, KeyRing]:
        """Keys chosen by one holder and distributed over the network.

        Pairwise keys go straight from P_i to P_j. A triple key goes from P_i
        to P_j and then jointly from both to P_k. The global key goes from P0
        to P3, then jointly from both to P1 and P2.
        """
        own = {p: {} for p in PARTIES}
        counter = [0]

        def fresh(p):
            counter[0] += 1
            return derive_key(self.seed, f"local{p}-{counter[0]}")

        def put(name, holders_, key):
            for h in holders_:
                own[h][name] = key

        as_arr = lambda k: np.frombuffer(k, dtype=np.uint8)
        for i in PARTIES:
            for j in PARTIES:
                if i < j:
                    key = fresh(i)
                    got = self.send(i, j, as_arr(key), "bytes", "setup", f"k{i}{j}", "pre")
                    own[i][f"k{i}{j}"] = key
                    own[j][f"k{i}{j}"] = got.tobytes()
        for trio in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
            i, j, k = trio
            name = f"k{i}{j}{k}"
            key = fresh(i)
            at_j = self.send(i, j, as_arr(key), "bytes", "setup", name, "pre")
            at_k = self.jsnd(i, j, k, {i: as_arr(key), j: at_j}, "bytes", "setup", name + "-j", "pre")
            own[i][name], own[j][name], own[k][name] = key, at_j.tobytes(), at_k.tobytes()
        key = fresh(0)
        at3 = self.send(0, 3, as_arr(key), "bytes", "setup", "kP", "pre")
        own[0]["kP"], own[3]["kP"] = key, at3.tobytes()
        for r in (1, 2):
            got = self.jsnd(0, 3, r, {0: as_arr(key), 3: at3}, "bytes", "setup", "kP-j", "pre")
            own[r]["kP"] = got.tobytes()
        self.flush()
        for p in PARTIES:
            assert sorted(own[p]) == keys_of(p)
        return {p: KeyRing(p, own[p]) for p in PARTIES}
