import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fourpc import transport as T
from fourpc.harness import Program, RunConfig, run_program
from fourpc.sharing import open_value, share
from conftest import make


@given(hnp.arrays(np.uint64, st.integers(0, 20)))
def test_ring_payload_roundtrip(a):
    assert np.array_equal(T.decode_payload(T.encode_payload(a, "ring"), "ring", a.shape), a)


@given(hnp.arrays(np.uint8, st.integers(0, 50), elements=st.integers(0, 1)))
def test_bits_payload_packs(a):
    raw = T.encode_payload(a, "bits")
    assert len(raw) == (a.size + 7) // 8
    assert np.array_equal(T.decode_payload(raw, "bits", a.shape), a)


def test_frame_roundtrip():
    meta, payload = T.unframe(T.frame("online", 7, "mult", 3, b"abc"))
    assert meta["phase"] == "online" and meta["session"] == 7 and meta["round"] == 3
    assert meta["tag_id"] == T.tag_id("mult")
    assert payload == b"abc"


def test_fault_flips_one_bit():
    net = T.Network(fault=T.FaultSpec.parse("x:y:1"))
    v = np.array([10, 20], dtype=np.uint64)
    assert net.send(1, 2, v, "ring", "x", "y", "online").tolist() == [11, 20]
    # fires once only
    assert net.send(1, 2, v, "ring", "x", "y", "online").tolist() == [10, 20]


def test_fault_spec_parsing():
    f = T.FaultSpec.parse("mult:y1:1:2")
    assert (f.tag, f.step, f.party, f.dst) == ("mult", "y1", 1, 2)
    assert str(f) == "mult:y1:1:2"
    assert f.matches("mult", "y1", 1, 2) and not f.matches("mult", "y1", 1, 3)


def test_ledger_counts_logical_bits():
    net = T.Network(ell=64)
    net.send(0, 1, np.zeros(3, dtype=np.uint64), "ring", "t", "s", "pre")
    net.send(1, 2, np.zeros(9, dtype=np.uint8), "bits", "t", "s", "online", 1)
    assert net.ledger.phase_bits("pre") == 192
    assert net.ledger.phase_bits("online") == 9
    assert net.ledger.max_round["online"] == 1
    assert net.fault_sites() == ["t:s:0:1", "t:s:1:2"]


def test_self_send_is_free():
    net = T.Network()
    net.send(2, 2, np.zeros(3, dtype=np.uint64), "ring", "t", "s", "online")
    assert net.ledger.phase_bits("online") == 0


def test_majority():
    assert T.majority([1, 1, 2], 0) == 1
    assert T.majority([1, 2, 3], 0) == 0
    out = T.majority([np.array([1, 2]), np.array([1, 3]), np.array([4, 3])], 0)
    assert out.tolist() == [1, 3]


def test_socket_transport_matches_inproc():
    prog = Program.parse("INPUT a 1\nINPUT b 2\nMUL y = a b\nRELU r = y\nOUTPUT y r\n")
    inputs = {"a": [3, -4], "b": [5, 6]}
    reports = {}
    for tr in ("inproc", "socket"):
        rep, _ = run_program(RunConfig(transport=tr, seed="ab"), prog, inputs)
        rep["config"].pop("transport")
        reports[tr] = rep
    assert reports["inproc"] == reports["socket"]
    assert reports["socket"]["outputs"] == {"y": [15, -24], "r": [15, 0]}


def test_socket_session_direct():
    s = make(transport="socket")
    v = share(s, 1, np.arange(5))
    assert open_value(s, v).tolist() == list(range(5))
    s.close()
