"""Share containers and the two value domains they live in.

A :class:`Shared` value stores, per party, the components that party holds:

    P0: l1 l2 l3     P1: m l1 l3     P2: m l2 l3     P3: m l1 l2

with ``m = v + l1 + l2 + l3`` (XOR for bits). A :class:`GrShare` is the
three-component additive sharing where P1 holds (g1, g3), P2 (g2, g3),
P3 (g1, g2) and P0 all three.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import ring
from .ring import FxConfig

HELD = {0: ("l1", "l2", "l3"), 1: ("m", "l1", "l3"), 2: ("m", "l2", "l3"), 3: ("m", "l1", "l2")}
HOLDERS = {"m": (1, 2, 3), "l1": (0, 1, 3), "l2": (0, 2, 3), "l3": (0, 1, 2)}
MISSING = {0: "m", 1: "l2", 2: "l1", 3: "l3"}
GR_HELD = {0: ("g1", "g2", "g3"), 1: ("g1", "g3"), 2: ("g2", "g3"), 3: ("g1", "g2")}


class Ring:
    """Z_{2^ell} with wrapping arithmetic."""

    kind = "ring"

    def __init__(self, cfg: FxConfig):
        self.cfg = cfg

    def add(self, a, b):
        return ring.add(a, b, self.cfg)

    def sub(self, a, b):
        return ring.sub(a, b, self.cfg)

    def neg(self, a):
        return ring.neg(a, self.cfg)

    def mul(self, a, b):
        return ring.mul(a, b, self.cfg)

    def zeros(self, shape):
        return np.zeros(shape, dtype=np.uint64)

    def const(self, c):
        return ring.asring(c, self.cfg)

    def total(self, parts):
        out = parts[0]
        for p in parts[1:]:
            out = out + p
        return ring.wrap(out, self.cfg)


class Bits:
    """Z_2 with XOR as addition and AND as multiplication."""

    kind = "bits"

    def __init__(self, cfg: FxConfig):
        self.cfg = cfg

    def add(self, a, b):
        return a ^ b

    sub = add

    def neg(self, a):
        return a

    def mul(self, a, b):
        return a & b

    def zeros(self, shape):
        return np.zeros(shape, dtype=np.uint8)

    def const(self, c):
        return np.atleast_1d(np.asarray(c, dtype=np.uint8) & 1)

    def total(self, parts):
        out = parts[0]
        for p in parts[1:]:
            out = out ^ p
        return out


@dataclass
class Shared:
    dom: Ring | Bits
    c: dict[int, dict[str, np.ndarray]]
    t: int = 0
    wid: int | None = None

    def __getitem__(self, key):
        p, name = key
        return self.c[p][name]

    @property
    def shape(self):
        return self.c[0]["l1"].shape

    @classmethod
    def from_parts(cls, dom, m, l1, l2, l3, t=0) -> "Shared":
        parts = {"m": m, "l1": l1, "l2": l2, "l3": l3}
        return cls(dom, {p: {n: parts[n] for n in HELD[p]} for p in HELD}, t)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Shared":
        return Shared(self.dom, {p: {n: fn(a) for n, a in comps.items()} for p, comps in self.c.items()}, self.t)

    def zip(self, other: "Shared", fn) -> "Shared":
        return Shared(self.dom, {p: {n: fn(a, other.c[p][n]) for n, a in comps.items()}
                                 for p, comps in self.c.items()}, max(self.t, other.t))

    def lam(self, p: int) -> np.ndarray:
        """Full mask, only meaningful at P0."""
        return self.dom.total([self.c[p]["l1"], self.c[p]["l2"], self.c[p]["l3"]])

    def index(self, idx) -> "Shared":
        return self.map(lambda a: a[idx])

    def reshape(self, *shape) -> "Shared":
        return self.map(lambda a: a.reshape(*shape))


def concat(items: list[Shared], axis: int = -1) -> Shared:
    first = items[0]
    comps = {p: {n: np.concatenate([s.c[p][n] for s in items], axis=axis) for n in first.c[p]}
             for p in first.c}
    return Shared(first.dom, comps, max(s.t for s in items))


def stack(items: list[Shared], axis: int = -1) -> Shared:
    first = items[0]
    comps = {p: {n: np.stack([s.c[p][n] for s in items], axis=axis) for n in first.c[p]}
             for p in first.c}
    return Shared(first.dom, comps, max(s.t for s in items))


def broadcast_to(s: Shared, shape) -> Shared:
    return s.map(lambda a: np.broadcast_to(a, shape).copy())


@dataclass
class GrShare:
    dom: Ring | Bits
    c: dict[int, dict[str, np.ndarray]] = field(default_factory=dict)

    def __getitem__(self, key):
        p, name = key
        return self.c[p][name]

    @classmethod
    def of_mask(cls, s: Shared) -> "GrShare":
        """The mask l = l1 + l2 + l3 of a shared value, read as a GrShare."""
        rename = {"l1": "g1", "l2": "g2", "l3": "g3"}
        return cls(s.dom, {p: {rename[n]: s.c[p][n] for n in ("l1", "l2", "l3") if n in s.c[p]}
                           for p in range(4)})

    @classmethod
    def from_parts(cls, dom, g1, g2, g3) -> "GrShare":
        parts = {"g1": g1, "g2": g2, "g3": g3}
        return cls(dom, {p: {n: parts[n] for n in GR_HELD[p]} for p in GR_HELD})

    def value(self, p: int = 0):
        return self.dom.total([self.c[p]["g1"], self.c[p]["g2"], self.c[p]["g3"]])
