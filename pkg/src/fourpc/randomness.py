"""Shared-key setup and counter-mode PRF sampling.

Every subset of two, three or four parties shares one key. A party can only
sample with keys it holds; the same (key, tag, counter) triple yields the same
stream at every holder.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

PARTIES = (0, 1, 2, 3)


def key_name(subset) -> str:
    s = tuple(sorted(set(subset)))
    if len(s) == 4:
        return "kP"
    if len(s) < 2:
        raise ValueError(f"no shared key for subset {s}")
    return "k" + "".join(map(str, s))


def keys_of(party: int) -> list[str]:
    """The seven key names held by ``party``."""
    others = [p for p in PARTIES if p != party]
    names = [key_name((party, o)) for o in others]
    names += [key_name((party, *pair)) for pair in combinations(others, 2)]
    names.append("kP")
    return sorted(names)


def all_key_names() -> list[str]:
    names = {key_name(s) for r in (2, 3) for s in combinations(PARTIES, r)}
    return sorted(names | {"kP"})


def holders(name: str) -> tuple[int, ...]:
    return PARTIES if name == "kP" else tuple(int(c) for c in name[1:])


class Prf:
    """AES-128 in CTR mode with a per-call nonce derived from (tag, counter)."""

    def __init__(self, key: bytes):
        if len(key) != 16:
            raise ValueError("PRF key must be 16 bytes")
        self._key = key
        self.counter = 0

    def stream(self, tag: str, nbytes: int) -> bytes:
        nonce = hashlib.sha256(tag.encode() + b"|" + self.counter.to_bytes(8, "big")).digest()[:16]
        self.counter += 1
        enc = Cipher(algorithms.AES(self._key), modes.CTR(nonce)).encryptor()
        return enc.update(bytes(nbytes)) + enc.finalize()


@dataclass
class KeyRing:
    party: int
    keys: dict[str, bytes]
    _prfs: dict[str, Prf] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._prfs = {name: Prf(k) for name, k in self.keys.items()}

    def has(self, name: str) -> bool:
        return name in self.keys

    def prf(self, name: str) -> Prf:
        try:
            return self._prfs[name]
        except KeyError:
            raise KeyError(f"P{self.party} does not hold key {name}") from None

    def sample_bytes(self, subset, tag: str, nbytes: int) -> bytes:
        return self.prf(key_name(subset)).stream(tag, nbytes)

    def sample_ring(self, subset, shape, tag: str = "", mask=None) -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape))
        out = np.frombuffer(self.sample_bytes(subset, tag, 8 * n), dtype="<u8").astype(np.uint64).reshape(shape)
        return out & mask if mask is not None else out

    def sample_bits(self, subset, shape, tag: str = "") -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape))
        raw = np.frombuffer(self.sample_bytes(subset, tag, (n + 7) // 8), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little")[:n].reshape(shape)


def derive_key(seed: bytes, name: str) -> bytes:
    return hashlib.sha256(b"fourpc-key|" + seed + b"|" + name.encode()).digest()[:16]


def setup_keys(seed: bytes) -> dict[int, KeyRing]:
    """Dealer-style setup: each party receives exactly its seven keys."""
    master = {name: derive_key(seed, name) for name in all_key_names()}
    return {p: KeyRing(p, {n: master[n] for n in keys_of(p)}) for p in PARTIES}


def joint_sample(rings: dict[int, KeyRing], subset, kind: str, shape, tag: str = "", mask=None):
    """Sample once for all holders of ``subset`` and keep their counters in step.

    Each holder would compute the identical stream; the simulation computes it
    at the first holder and advances the others.
    """
    subset = tuple(sorted(set(subset)))
    first, rest = subset[0], subset[1:]
    if kind == "bits":
        out = rings[first].sample_bits(subset, shape, tag)
    else:
        out = rings[first].sample_ring(subset, shape, tag, mask)
    name = key_name(subset)
    for p in rest:
        rings[p].prf(name).counter += 1
    return out


def joint_bytes(rings: dict[int, KeyRing], subset, nbytes: int, tag: str = "") -> bytes:
    subset = tuple(sorted(set(subset)))
    out = rings[subset[0]].sample_bytes(subset, tag, nbytes)
    name = key_name(subset)
    for p in subset[1:]:
        rings[p].prf(name).counter += 1
    return out


def zero_shares(rings: dict[int, KeyRing], shape, tag: str = "zero", mask=None):
    """Additive sharing of zero: Z1 at (P0,P1), Z2 at (P0,P2), Z3 at (P0,P3).

    r1 comes from k023, r2 from k013, r3 from k012, so P_i never sees the
    r that P0 uses to hide its neighbour's share.
    """
    r = {}
    for i, subset in ((1, (0, 2, 3)), (2, (0, 1, 3)), (3, (0, 1, 2))):
        r[i] = joint_sample(rings, subset, "ring", shape, tag, mask)
    z1 = r[3] - r[2]
    z2 = r[1] - r[3]
    z3 = r[2] - r[1]
    if mask is not None:
        z1, z2, z3 = z1 & mask, z2 & mask, z3 & mask
    return {1: z1, 2: z2, 3: z3}
