import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fourpc import ring
from fourpc.shares import HELD, HOLDERS
from fourpc.sharing import (JSH_PAIRS, add, add_const, bit_not, joint_share, neg, open_value,
                            reconstruct, scale, share, sub)
from conftest import TOY, make

vals = st.lists(st.integers(0, 2**64 - 1), min_size=1, max_size=8)


@settings(max_examples=30, deadline=None)
@given(vals, st.integers(0, 3), st.sampled_from(["fair", "robust"]))
def test_share_open_roundtrip(xs, dealer, mode):
    s = make(mode)
    v = share(s, dealer, xs)
    assert open_value(s, v).tolist() == xs


def test_share_layout(rng):
    s = make()
    v = share(s, 1, rng.integers(0, 2**64, 4, dtype=np.uint64))
    for p, names in HELD.items():
        assert set(v.c[p]) == set(names)
    # every component is held identically by its three holders
    for name, hs in HOLDERS.items():
        a, b, c = (v.c[h][name] for h in hs)
        assert np.array_equal(a, b) and np.array_equal(b, c)


def test_masked_value_hides_input():
    s = make()
    v = share(s, 1, [0, 0, 0])
    assert np.all(v[1, "m"] != 0)


@pytest.mark.parametrize("pair", JSH_PAIRS)
def test_joint_share_every_pair(pair, mode):
    s = make(mode)
    v = joint_share(s, pair, [7, 2**63, 0])
    assert open_value(s, v).tolist() == [7, 2**63, 0]
    assert s.status == ("ok", None)


def test_bits_share(rng):
    s = make()
    b = rng.integers(0, 2, 20)
    assert open_value(s, share(s, 2, b, "bits")).tolist() == b.tolist()


@settings(max_examples=25, deadline=None)
@given(vals, vals, st.integers(-1000, 1000))
def test_linear_ops(xs, ys, c):
    n = min(len(xs), len(ys))
    xs, ys = xs[:n], ys[:n]
    s = make()
    x, y = share(s, 1, xs), share(s, 2, ys)
    m = 2**64
    assert open_value(s, add(s, x, y)).tolist() == [(a + b) % m for a, b in zip(xs, ys)]
    assert open_value(s, sub(s, x, y)).tolist() == [(a - b) % m for a, b in zip(xs, ys)]
    assert open_value(s, neg(s, x)).tolist() == [(-a) % m for a in xs]
    assert open_value(s, add_const(s, x, c)).tolist() == [(a + c) % m for a in xs]
    assert open_value(s, scale(s, x, c)).tolist() == [(a * c) % m for a in xs]


def test_bit_not():
    s = make()
    b = share(s, 1, [0, 1, 1], "bits")
    assert open_value(s, bit_not(s, b)).tolist() == [1, 0, 0]


def test_toy_ring_sharing():
    s = make(cfg=TOY)
    v = share(s, 3, [-1, 5])
    assert open_value(s, v).tolist() == [2**16 - 1, 5]


def test_reconstruct_gives_every_party_the_value():
    s = make("robust")
    r = reconstruct(s, share(s, 2, [11, 12]))
    assert r.status == "ok"
    assert all(v.tolist() == [11, 12] for v in r.values.values())


def test_sharing_costs():
    s = make()
    l = s.net.ledger
    share(s, 0, np.arange(10))
    assert l.phase_bits("online") == 3 * 10 * 64
    before = l.phase_bits("online")
    share(s, 1, np.arange(10))
    assert l.phase_bits("online") - before == 2 * 10 * 64


def test_jsnd_amortized_cost():
    # joint sharing by (1,2) costs one ell-bit element per value; the hash
    # travels in the verify phase and is shared by the whole batch
    s = make()
    l = s.net.ledger
    joint_share(s, (1, 2), np.arange(1000))
    assert l.phase_bits("online") == 1000 * 64
    s.flush()
    assert l.by_tag["jsnd"]["verify"] == 256


def test_wrong_dealer_message_detected(mode):
    s = make(mode)
    v = share(s, 1, [5], sent={3: ring.asring([999])})
    r = reconstruct(s, v)
    if mode == "fair":
        assert r.status == "abort"
    else:
        # the two matching hashes outvote P3, which fetches the right value
        assert r.status == "ok"
        assert r.value.tolist() == [5]
