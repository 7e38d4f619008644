import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fourpc import mult as M
from fourpc import ring
from fourpc.session import VrfyEntry
from fourpc.sharing import open_value, reconstruct, share
from conftest import TOY, make, small_signed

u64s = st.lists(st.integers(0, 2**64 - 1), min_size=1, max_size=6)


def _mod(x):
    return x % 2**64


@settings(max_examples=20, deadline=None)
@given(u64s, st.sampled_from(["fair", "robust"]), st.sampled_from(["offline", "ondemand"]))
def test_mult_matches_bigint(xs, mode, pre):
    s = make(mode, pre)
    ys = [(x * 7 + 3) % 2**64 for x in xs]
    z = M.mult(s, share(s, 1, xs), share(s, 2, ys))
    assert open_value(s, z).tolist() == [_mod(a * b) for a, b in zip(xs, ys)]
    assert s.status == ("ok", None)


def test_mult3_mult4(rng, mode):
    s = make(mode)
    a, b, c, d = (rng.integers(0, 2**64, 50, dtype=np.uint64) for _ in range(4))
    sa, sb, sc, sd = share(s, 1, a), share(s, 2, b), share(s, 3, c), share(s, 0, d)
    assert np.array_equal(open_value(s, M.mult3(s, sa, sb, sc)), a * b * c)
    assert np.array_equal(open_value(s, M.mult4(s, sa, sb, sc, sd)), a * b * c * d)


@pytest.mark.parametrize("d", [1, 10, 1000])
def test_dotp(rng, d):
    s = make()
    a = rng.integers(0, 2**64, (4, d), dtype=np.uint64)
    b = rng.integers(0, 2**64, (4, d), dtype=np.uint64)
    got = open_value(s, M.dotp(s, share(s, 1, a), share(s, 2, b)))
    assert np.array_equal(got, ring.dot_plain(a, b))


def test_matmul_and_conv(rng):
    s = make()
    x = rng.integers(0, 2**64, (3, 8), dtype=np.uint64)
    y = rng.integers(0, 2**64, (8, 5), dtype=np.uint64)
    assert np.array_equal(open_value(s, M.matmul(s, share(s, 1, x), share(s, 0, y))), ring.matmul_plain(x, y))
    img = rng.integers(0, 50, (2, 5, 5), dtype=np.uint64)
    ker = rng.integers(0, 50, (3, 2, 3, 3), dtype=np.uint64)
    got = open_value(s, M.conv2d(s, share(s, 1, img), share(s, 0, ker), stride=2, pad=1))
    assert np.array_equal(got, ring.conv2d_plain(img, ker, 2, 1))


def test_bits_mult_is_and(rng):
    s = make("robust")
    a, b = rng.integers(0, 2, 64), rng.integers(0, 2, 64)
    z = M.mult(s, share(s, 1, a, "bits"), share(s, 2, b, "bits"))
    assert open_value(s, z).tolist() == (a & b).tolist()
    assert s.status == ("ok", None)


def test_truncated_mult_within_one_ulp(rng):
    s = make()
    x = rng.normal(0, 100, 2000)
    y = rng.normal(0, 100, 2000)
    ex, ey = ring.encode_fx(x), ring.encode_fx(y)
    got = ring.to_signed(open_value(s, M.mult(s, share(s, 1, ex), share(s, 2, ey), trunc=True)))
    exact = ring.to_signed(ex).astype(object) * ring.to_signed(ey).astype(object)
    err = np.array([abs(g * 8192 - e) for g, e in zip(got.tolist(), exact)], dtype=float) / 8192
    assert err.max() <= 1.0


def test_mult_const(rng):
    s = make()
    x = ring.encode_fx(rng.normal(0, 10, 100))
    got = ring.to_signed(open_value(s, M.mult_const(s, ring.encode_fx(1.5), share(s, 1, x), trunc=True)))
    want = ring.to_signed(x) * 1.5
    assert np.abs(got - want).max() <= 1


def test_toy_ring_mult(rng):
    s = make(cfg=TOY)
    a, b = rng.integers(0, 2**16, 30), rng.integers(0, 2**16, 30)
    got = open_value(s, M.mult(s, share(s, 1, a), share(s, 2, b)))
    assert got.tolist() == ((a * b) % 2**16).tolist()


def _costs(fn, n=100, pre="offline"):
    s = make(pre=pre)
    a, b, c, d = (share(s, i, np.arange(n)) for i in range(4))
    l = s.net.ledger
    p0, o0 = l.phase_bits("pre"), l.phase_bits("online")
    out = fn(s, a, b, c, d)
    return (l.phase_bits("pre") - p0) / n, (l.phase_bits("online") - o0) / n, out.t - max(a.t, b.t)


def test_mult_costs_and_rounds():
    assert _costs(lambda s, a, b, c, d: M.mult(s, a, b)) == (128, 192, 1)
    assert _costs(lambda s, a, b, c, d: M.mult3(s, a, b, c)) == (9 * 64, 192, 1)
    assert _costs(lambda s, a, b, c, d: M.mult4(s, a, b, c, d)) == (24 * 64, 192, 1)
    assert _costs(lambda s, a, b, c, d: M.mult(s, a, b), pre="ondemand") == (0, 320, 1)


def test_dotp_cost_independent_of_length():
    per = []
    for d in (1, 10, 1000):
        s = make()
        a, b = share(s, 1, np.ones((5, d))), share(s, 2, np.ones((5, d)))
        l = s.net.ledger
        p0, o0 = l.phase_bits("pre"), l.phase_bits("online")
        M.dotp(s, a, b)
        per.append((l.phase_bits("pre") - p0, l.phase_bits("online") - o0))
    assert per[0] == per[1] == per[2] == (5 * 128, 5 * 192)


def test_binary_combine_exact(rng):
    tau = rng.integers(0, 2, (5, 3000)).astype(np.uint8)
    w = rng.integers(0, 2**64, 3000, dtype=np.uint64)
    want = [sum(int(t) * int(x) for t, x in zip(row, w)) % 2**64 for row in tau]
    assert M.binary_combine(tau, w, chunk=1000).tolist() == want


def _vrfy_trial(seed, kappa, w, w1, w2, idx=None):
    s = make("robust", seed=seed, kappa=kappa)
    bad = w.copy()
    if idx is not None:
        bad[idx] += np.uint64(1)
    M.vrfy_p0(s, [VrfyEntry({0: bad, 3: bad}, {0: w1, 1: w1}, {0: w2, 2: w2})])
    return s.status


def test_vrfy_accepts_honest_and_flags_tamper(rng):
    w1 = rng.integers(0, 2**64, 4096, dtype=np.uint64)
    w2 = rng.integers(0, 2**64, 4096, dtype=np.uint64)
    assert _vrfy_trial(b"a", 40, w1 + w2, w1, w2) == ("ok", None)
    assert _vrfy_trial(b"a", 40, w1 + w2, w1, w2, idx=17) == ("ttp", 1)


def test_vrfy_single_repetition_is_a_coin(rng):
    w1 = rng.integers(0, 2**64, 256, dtype=np.uint64)
    w2 = rng.integers(0, 2**64, 256, dtype=np.uint64)
    hits = sum(_vrfy_trial(i, 1, w1 + w2, w1, w2, idx=3)[0] == "ttp" for i in range(1000))
    assert 400 <= hits <= 600


def test_robust_mult_with_bad_p0_preprocessing_goes_to_ttp():
    s = make("robust", fault="mult:w-01:0")
    z = M.mult(s, share(s, 1, [6]), share(s, 2, [7]))
    r = reconstruct(s, z)
    assert r.status == "ttp"
    assert r.value.tolist() == [42]
