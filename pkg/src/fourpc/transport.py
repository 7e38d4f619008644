"""Four-party message transport with cost accounting and fault injection.

The parties run as one orchestrated, single-threaded simulation: a send is
framed, pushed through a per-ordered-pair FIFO channel and immediately
received on the other side. Two channel implementations share one framing:
an in-process deque and a socketpair with a writer thread.
"""

from __future__ import annotations

import hashlib
import queue
import socket
import struct
import threading
import zlib
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np

PHASES = ("pre", "online", "verify")
PHASE_ID = {p: i for i, p in enumerate(PHASES)}
HEADER = struct.Struct(">IBQHI")  # length, phase, session, tag id, round
HASH_BYTES = 32


def tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode()) & 0xFFFF


def digest(*arrays) -> bytes:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode() + str(a.shape).encode())
        h.update(a.tobytes())
    return h.digest()


def encode_payload(value: np.ndarray, kind: str) -> bytes:
    if kind == "ring":
        return np.ascontiguousarray(value, dtype="<u8").tobytes()
    if kind == "bits":
        return np.packbits(np.asarray(value, dtype=np.uint8).ravel(), bitorder="little").tobytes()
    return np.ascontiguousarray(value, dtype=np.uint8).tobytes()


def decode_payload(raw: bytes, kind: str, shape) -> np.ndarray:
    if kind == "ring":
        return np.frombuffer(raw, dtype="<u8").astype(np.uint64).reshape(shape)
    if kind == "bits":
        n = int(np.prod(shape))
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[:n]
        return bits.reshape(shape)
    return np.frombuffer(raw, dtype=np.uint8).copy().reshape(shape)


def logical_bits(value: np.ndarray, kind: str, ell: int) -> int:
    if kind == "ring":
        return int(value.size) * ell
    if kind == "bits":
        return int(value.size)
    return int(value.size) * 8


def frame(phase: str, session: int, tag: str, rnd: int, payload: bytes) -> bytes:
    head = HEADER.pack(len(payload), PHASE_ID[phase], session, tag_id(tag), rnd)
    return head + payload


def unframe(buf: bytes) -> tuple[dict, bytes]:
    length, phase, session, tid, rnd = HEADER.unpack_from(buf)
    payload = buf[HEADER.size:HEADER.size + length]
    if len(payload) != length:
        raise ValueError("truncated frame")
    return {"phase": PHASES[phase], "session": session, "tag_id": tid, "round": rnd}, payload


class InprocChannel:
    def __init__(self):
        self._q = deque()

    def put(self, data: bytes):
        self._q.append(data)

    def get(self) -> bytes:
        return self._q.popleft()

    def close(self):
        pass


class SocketChannel:
    """Length-prefixed frames over a socketpair, written by a background thread."""

    def __init__(self):
        self._tx, self._rx = socket.socketpair()
        self._out: queue.Queue = queue.Queue()
        self._writer = threading.Thread(target=self._drain, daemon=True)
        self._writer.start()

    def _drain(self):
        while True:
            data = self._out.get()
            if data is None:
                return
            self._tx.sendall(data)

    def put(self, data: bytes):
        self._out.put(data)

    def _read_exact(self, n: int) -> bytes:
        chunks, got = [], 0
        while got < n:
            chunk = self._rx.recv(min(1 << 20, n - got))
            if not chunk:
                raise ConnectionError("channel closed")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def get(self) -> bytes:
        head = self._read_exact(HEADER.size)
        (length,) = struct.unpack_from(">I", head)
        return head + self._read_exact(length)

    def close(self):
        self._out.put(None)
        self._writer.join(timeout=5)
        self._tx.close()
        self._rx.close()


@dataclass
class FaultSpec:
    """Flip bit 0 of payload byte 0 on the first message matching the site."""

    tag: str
    step: str
    party: int
    dst: int | None = None
    fired: bool = False

    @classmethod
    def parse(cls, text: str) -> "FaultSpec":
        parts = text.split(":")
        if len(parts) not in (3, 4):
            raise ValueError(f"fault spec must be TAG:STEP:PARTY[:DST], got {text!r}")
        dst = int(parts[3]) if len(parts) == 4 else None
        return cls(parts[0], parts[1], int(parts[2]), dst)

    def matches(self, tag: str, step: str, src: int, dst: int) -> bool:
        if self.fired:
            return False
        return (tag, step, src) == (self.tag, self.step, self.party) and self.dst in (None, dst)

    def __str__(self):
        base = f"{self.tag}:{self.step}:{self.party}"
        return base if self.dst is None else f"{base}:{self.dst}"


@dataclass
class CostLedger:
    """Logical bits and wire bytes per party and phase, plus per-label subtotals.

    ``by_label`` is inclusive: a message sent inside nested operation scopes is
    counted once under every enclosing label.
    """

    ell: int = 64
    bits: dict = field(default_factory=lambda: defaultdict(int))
    wire_bytes: dict = field(default_factory=lambda: defaultdict(int))
    messages: dict = field(default_factory=lambda: defaultdict(int))
    by_label: dict = field(default_factory=lambda: defaultdict(lambda: defaultdict(int)))
    by_tag: dict = field(default_factory=lambda: defaultdict(lambda: defaultdict(int)))
    max_round: dict = field(default_factory=lambda: defaultdict(int))
    gates: dict = field(default_factory=lambda: defaultdict(int))
    calls: dict = field(default_factory=lambda: defaultdict(int))
    rounds: dict = field(default_factory=lambda: defaultdict(int))

    def close_span(self, label: str, span: list):
        """Keep the widest online round span seen for one call of ``label``."""
        lo, hi = span
        if hi >= lo:
            self.rounds[label] = max(self.rounds[label], hi - lo + 1)

    def record(self, src, phase, tag, labels, nbits, nbytes, rnd):
        self.bits[(src, phase)] += nbits
        self.wire_bytes[(src, phase)] += nbytes
        self.messages[(src, phase)] += 1
        self.by_tag[tag][phase] += nbits
        for label in labels:
            self.by_label[label][phase] += nbits
        self.max_round[phase] = max(self.max_round[phase], rnd)

    def phase_bits(self, phase: str) -> int:
        return sum(v for (_, ph), v in self.bits.items() if ph == phase)

    def label_bits(self, label: str, phase: str) -> int:
        return self.by_label.get(label, {}).get(phase, 0)

    def snapshot(self) -> dict:
        return {
            "bits": dict(self.bits),
            "by_label": {k: dict(v) for k, v in self.by_label.items()},
        }

    def to_dict(self) -> dict:
        per_party = {
            f"P{p}": {ph: {"bits": self.bits.get((p, ph), 0), "wire_bytes": self.wire_bytes.get((p, ph), 0)}
                      for ph in PHASES}
            for p in range(4)
        }
        by_label = {}
        for label in sorted(self.by_label):
            entry = {ph: self.by_label[label].get(ph, 0) for ph in PHASES}
            entry["calls"] = self.calls.get(label, 0)
            entry["gates"] = self.gates.get(label, 0)
            entry["online_rounds"] = self.rounds.get(label, 0)
            by_label[label] = entry
        return {
            "ell": self.ell,
            "total_bits": {ph: self.phase_bits(ph) for ph in PHASES},
            "max_round": {ph: self.max_round.get(ph, 0) for ph in PHASES},
            "per_party": per_party,
            "by_label": by_label,
        }


class Network:
    """Point-to-point links between P0..P3 with accounting and one optional fault."""

    def __init__(self, ell: int = 64, session_id: int = 0, transport: str = "inproc",
                 fault: FaultSpec | None = None):
        self.ell = ell
        self.session_id = session_id
        self.transport = transport
        make = SocketChannel if transport == "socket" else InprocChannel
        self.channels = {(s, d): make() for s in range(4) for d in range(4) if s != d}
        self.ledger = CostLedger(ell=ell)
        self.fault = fault
        self.sites: dict[tuple, None] = {}
        self.pre_log: list[tuple] = []
        self.labels: list[str] = []
        self.spans: list[list] = []
        self.deferred = 0

    def close(self):
        for ch in self.channels.values():
            ch.close()

    def send(self, src: int, dst: int, value: np.ndarray, kind: str, tag: str, step: str,
             phase: str, rnd: int = 0) -> np.ndarray:
        if src == dst:
            return value
        value = np.asarray(value)
        shape = value.shape
        payload = encode_payload(value, kind)
        site = (tag, step, src, dst)
        self.sites.setdefault(site, None)
        honest = payload
        if self.fault is not None and payload and self.fault.matches(tag, step, src, dst):
            payload = bytes([payload[0] ^ 1]) + payload[1:]
            self.fault.fired = True
        nbits = logical_bits(value, kind, self.ell)
        wire = frame(phase, self.session_id, tag, rnd, payload)
        self.ledger.record(src, phase, tag, set(self.labels), nbits, len(wire), rnd)
        if phase == "online" and rnd >= 1 and not self.deferred:
            for span in self.spans:
                span[0], span[1] = min(span[0], rnd), max(span[1], rnd)
        ch = self.channels[(src, dst)]
        ch.put(wire)
        _, got = unframe(ch.get())
        if phase == "pre":
            self.pre_log.append((site, hashlib.sha256(honest).digest(), hashlib.sha256(got).digest()))
        out = decode_payload(got, kind, shape)
        if kind == "ring" and self.ell < 64:
            out = out & np.uint64((1 << self.ell) - 1)
        return out

    def fault_sites(self) -> list[str]:
        return [f"{t}:{s}:{a}:{b}" for (t, s, a, b) in self.sites]


def majority(values: list, default):
    """Value seen at least twice among three, else ``default`` (elementwise for arrays)."""
    a, b, c = values
    if isinstance(a, np.ndarray):
        out = np.where(a == b, a, np.where(a == c, a, np.where(b == c, b, default)))
        return out.astype(a.dtype)
    if a == b or a == c:
        return a
    if b == c:
        return b
    return default
