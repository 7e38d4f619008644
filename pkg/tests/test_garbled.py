import numpy as np
import pytest

from fourpc import garbled as G
from fourpc import ring
from fourpc.circuits import Builder, adder, identity, relu_circuit
from fourpc.sharing import open_value, share
from fourpc.transport import digest
from conftest import TOY, make
from gc_helpers import all_circuits, check_truth_table, random_circuit


# ------------------------------------------------------------ garbling scheme
@pytest.mark.parametrize("n_in,n_gates", [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3), (3, 1), (3, 2)])
def test_exhaustive_small_circuits(n_in, n_gates):
    rng = np.random.default_rng(n_in * 10 + n_gates)
    bad = [c for c in all_circuits(n_in, n_gates) if not check_truth_table(c, rng)]
    assert not bad


@pytest.mark.slow
@pytest.mark.parametrize("n_in", [3, 4])
def test_exhaustive_three_gates(n_in):
    rng = np.random.default_rng(n_in)
    assert all(check_truth_table(c, rng) for c in all_circuits(n_in, 3))


def test_random_four_input_circuits_with_wide_ands():
    rng = np.random.default_rng(99)
    for _ in range(500):
        c = random_circuit(rng, 4, int(rng.integers(4, 7)))
        assert check_truth_table(c, rng), c.gates


def test_larger_circuit_random_inputs(rng):
    c = adder(16, 4)
    delta = G.fresh_delta(rng.bytes(16))
    x = rng.integers(0, 2, (100, 16), dtype=np.uint8)
    y = rng.integers(0, 2, (100, 16), dtype=np.uint8)
    zin = {k: rng.integers(0, 256, (100, 16, 16), dtype=np.uint8) for k in ("x", "y")}
    gc, zero = G.garble(c, delta, zin, rng.bytes(8))
    keys = G.evaluate_gc(gc, {"x": G._with(zin["x"], x, delta), "y": G._with(zin["y"], y, delta)})["s"]
    dec = G.lsb(np.moveaxis(zero[gc.circuit.outputs["s"]], 0, 1))
    assert np.array_equal(G.decode(keys, dec), c.evaluate({"x": x, "y": y})["s"])


def test_delta_has_lsb_one(rng):
    for _ in range(50):
        assert G.fresh_delta(rng.bytes(16))[0] & 1 == 1


def test_garbling_deterministic_in_seed(rng):
    c = relu_circuit(8)
    delta = G.fresh_delta(rng.bytes(16))
    zin = {"x": rng.integers(0, 256, (3, 8, 16), dtype=np.uint8)}
    a, _ = G.garble(c, delta, zin, b"seed")
    b, _ = G.garble(c, delta, zin, b"seed")
    assert np.array_equal(a.to_array(), b.to_array())


def test_forged_keys_rejected(rng):
    zero = rng.integers(0, 256, (1, 16), dtype=np.uint8)
    delta = G.fresh_delta(rng.bytes(16))
    for v in (0, 1):
        honest = G._with(zero, np.array([v], dtype=np.uint8), delta)
        assert G.key_matches(G.lsb(honest), digest(honest), zero, delta)
    for _ in range(10_000):
        forged = rng.integers(0, 256, (1, 16), dtype=np.uint8)
        assert not G.key_matches(G.lsb(forged), digest(forged), zero, delta)


# ---------------------------------------------------------------- protocols
@pytest.mark.parametrize("variant", [1, 2])
def test_aga_relu_toy_ring(rng, mode, variant):
    s = make(mode, cfg=TOY)
    v = rng.integers(-2000, 2000, 50)
    out = G.convert(s, "AGA", relu_circuit(16), {"x": share(s, 1, ring.from_signed(v, TOY))}, variant)
    assert np.array_equal(ring.to_signed(open_value(s, out), TOY), np.maximum(v, 0))
    assert s.status == ("ok", None)


@pytest.mark.parametrize("variant", [1, 2])
def test_bgb_identity_roundtrip(rng, mode, variant):
    s = make(mode)
    bits = rng.integers(0, 2, (20, 8)).astype(np.uint8)
    out = G.convert(s, "BGB", identity(8), {"x": share(s, 2, bits, "bits")}, variant)
    assert np.array_equal(open_value(s, out), bits)


@pytest.mark.parametrize("variant", [1, 2])
def test_agb_and_bga(rng, variant, pre):
    s = make("fair", pre)
    vals = rng.integers(0, 2**64, 30, dtype=np.uint64)
    bits = G.convert(s, "AGB", identity(64), {"x": share(s, 1, vals)}, variant)
    assert np.array_equal(open_value(s, bits), ring.bits_of(vals, 64))
    back = G.convert(s, "BGA", identity(64), {"x": bits}, variant)
    assert np.array_equal(open_value(s, back), vals)


@pytest.mark.parametrize("variant", [1, 2])
def test_two_input_adder(rng, variant):
    s = make()
    a = rng.integers(0, 2**64, 10, dtype=np.uint64)
    b = rng.integers(0, 2**64, 10, dtype=np.uint64)
    out = G.convert(s, "AGA", adder(64), {"x": share(s, 1, a), "y": share(s, 2, b)}, variant)
    assert np.array_equal(open_value(s, out), a + b)


def test_case_mismatch_rejected(rng):
    s = make()
    x = share(s, 1, np.arange(3, dtype=np.uint64))
    with pytest.raises(ValueError):
        G.convert(s, "BGB", identity(64), {"x": x})


@pytest.mark.parametrize("variant", [1, 2])
def test_gc_output_opens_everywhere(rng, mode, variant):
    s = make(mode)
    bits = rng.integers(0, 2, (7, 5)).astype(np.uint8)
    b = Builder()
    x = b.input("x", 5)
    b.output("z", [b.and_(x[0], x[1]), b.xor(x[2], x[3]), b.not_(x[4])])
    f = b.build()
    opened = G.gc_output(s, f, {"x": share(s, 3, bits, "bits")}, variant)
    want = f.evaluate({"x": bits})["z"]
    for p in range(4):
        assert np.array_equal(opened.values[p], want)


@pytest.mark.parametrize("variant", [1, 2])
@pytest.mark.parametrize("site", ["gcout:h1:1", "gcout:q1:1"])
def test_tampered_output_message(rng, mode, variant, site):
    """The evaluator lies about its output keys to one garbler.

    The garbler may still learn the output through the other instance or a
    forward, so the run can stay ok; no party may accept a wrong value.
    """
    s = make(mode, fault=site)
    bits = rng.integers(0, 2, (4, 8)).astype(np.uint8)
    opened = G.gc_output(s, identity(8), {"x": share(s, 1, bits, "bits")}, variant)
    assert s.net.fault.fired
    got = list(opened.values.values())
    for v in got:
        assert v is None or np.array_equal(v, bits)
    if mode == "robust":
        assert all(v is not None for v in got)
    else:
        assert all(v is None for v in got) or all(v is not None for v in got)


# -------------------------------------------------------------------- costs
KAPPA = 128


@pytest.mark.parametrize("variant,per_input,extra,rounds", [(2, 2 * KAPPA, 1, 1), (1, KAPPA, 2, 2)])
def test_conversion_online_cost(rng, variant, per_input, extra, rounds):
    s = make()
    a = rng.integers(0, 2**64, 6, dtype=np.uint64)
    G.convert(s, "AGA", adder(64), {"x": share(s, 1, a), "y": share(s, 2, a)}, variant)
    got = s.net.ledger.to_dict()["by_label"][f"gc{variant}-AGA"]
    assert got["online"] == 6 * (2 * per_input * 64 + extra * 64)
    assert got["online_rounds"] == rounds


def test_rounds_independent_of_circuit_depth(rng):
    s = make()
    x = share(s, 1, rng.integers(0, 2**64, 4, dtype=np.uint64))
    G.convert(s, "AGA", adder(64, 2), {"x": x, "y": x}, 2)
    assert s.net.ledger.to_dict()["by_label"]["gc2-AGA"]["online_rounds"] == 1
