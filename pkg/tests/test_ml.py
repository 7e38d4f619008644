import numpy as np
import pytest

from fourpc import ml, ring
from fourpc.ml import Layer, ModelSpec, PiecewiseSpec
from fourpc.mult import matmul
from fourpc.sharing import open_value, share
from conftest import make

CFG = ring.DEFAULT


def enc(v):
    return ring.encode_fx(np.asarray(v, dtype=np.float64), CFG)


def signed(v):
    return ring.to_signed(v, CFG)


# ------------------------------------------------------------------ piecewise
def test_relu_examples(mode):
    s = make(mode)
    out = open_value(s, ml.relu(s, share(s, 1, enc([-3.0, 3.0, 0.0]))))
    assert out.tolist() == [0, 3 << 13, 0]


def test_sigmoid_examples():
    s = make()
    out = open_value(s, ml.sigmoid(s, share(s, 1, enc([0.0, -2.0, -0.5, 0.25, 0.5, 7.0]))))
    assert out.tolist() == [4096, 0, 0, 6144, 8192, 8192]


def test_relu_deriv_examples(pre):
    s = make(pre=pre)
    x = share(s, 2, enc([-1.0, 2.0, 0.0]))
    assert open_value(s, ml.relu(s, x)).tolist() == [0, 2 << 13, 0]
    assert open_value(s, ml.relu_deriv(s, x)).tolist() == [0, 1, 1]


def test_relu_random(rng, mode):
    s = make(mode)
    v = rng.integers(-(1 << 50), 1 << 50, 2000)
    x = share(s, 1, ring.from_signed(v, CFG))
    assert np.array_equal(signed(open_value(s, ml.relu(s, x))), np.maximum(v, 0))
    assert np.array_equal(open_value(s, ml.relu_deriv(s, x)), (v >= 0).astype(np.uint64))


def _direct(bps, pieces, y_signed):
    """Look up the piece containing y; zero below the first breakpoint."""
    out = []
    for y in y_signed:
        val = 0
        for c, (slope, icpt) in zip(bps, pieces):
            if y >= c:
                val = slope * y + icpt
        out.append(val)
    return np.array(out, dtype=object)


def test_piecewise_matches_direct_lookup():
    """1000 (spec, y) pairs with integer slopes: exact against a piece lookup."""
    rng = np.random.default_rng(5)
    scale = 1 << CFG.frac_bits
    for trial in range(100):
        m = int(rng.integers(1, 5))
        bps = sorted(rng.choice(np.arange(-64, 64), m, replace=False) / 8)
        pieces = tuple((int(rng.integers(-3, 4)), float(rng.integers(-32, 33)) / 16) for _ in range(m))
        spec = PiecewiseSpec(tuple(bps), pieces)
        y = rng.integers(-10 * scale, 10 * scale, 10)
        y[:m] = [int(c * scale) for c in bps]  # exercise the boundaries
        s = make(seed=bytes([trial]))
        got = signed(open_value(s, ml.piecewise(s, spec, share(s, 1, ring.from_signed(y, CFG)))))
        want = _direct([int(c * scale) for c in bps], [(a, int(b * scale)) for a, b in pieces], y.tolist())
        assert got.tolist() == want.tolist()
        assert np.array_equal(ring.from_signed(got, CFG), ml.piecewise_clear(spec, ring.from_signed(y, CFG), CFG))


def test_piecewise_fractional_slope(rng):
    spec = PiecewiseSpec((-1.0, 1.0), ((0.25, 0.25), (0.0, 0.5)))
    y = rng.integers(-4 << 13, 4 << 13, 500)
    s = make()
    got = signed(open_value(s, ml.piecewise(s, spec, share(s, 1, ring.from_signed(y, CFG)))))
    want = signed(ml.piecewise_clear(spec, ring.from_signed(y, CFG), CFG))
    # every fractional slope difference is truncated on its own: one ulp each
    n_trunc = sum(not float(ds).is_integer() for ds, _ in spec.deltas)
    assert n_trunc == 2
    assert np.max(np.abs(got - want)) <= n_trunc
    exact = np.where(y < -8192, 0, np.where(y < 8192, y / 4 + 2048, 4096))
    assert np.max(np.abs(got - exact)) <= n_trunc


@pytest.mark.parametrize("bad", [
    dict(breakpoints=(), pieces=()),
    dict(breakpoints=(1.0, 0.0), pieces=((1, 0.0), (1, 0.0))),
    dict(breakpoints=(0.0,), pieces=((1, 0.0), (2, 0.0))),
])
def test_piecewise_spec_validation(bad):
    with pytest.raises(ValueError):
        PiecewiseSpec(**bad)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_piecewise_pre_cost(rng, m):
    spec = PiecewiseSpec(tuple(float(i) for i in range(m)), tuple((1, 0.0) for _ in range(m)))
    s = make()
    ml.piecewise(s, spec, share(s, 1, enc(rng.normal(size=20))))
    row = s.net.ledger.to_dict()["by_label"]["piecewise-inject"]
    assert row["pre"] == 20 * m * (6 * 64 + 1)
    assert row["online"] == 20 * 3 * 64
    assert row["online_rounds"] == 1


# ---------------------------------------------------------------- tournament
def brute_arg(values, largest):
    best = None
    for i, v in enumerate(values):
        if best is None or (v > values[best] if largest else v <= values[best]):
            best = i
    return best


def test_argmin_examples(mode):
    s = make(mode)
    b, y = ml.argmin(s, share(s, 1, ring.from_signed(np.array([5, 2, 9]), CFG)))
    assert open_value(s, b).tolist() == [0, 1, 0]
    assert open_value(s, y) == 2
    b, y = ml.argmin(s, share(s, 1, ring.from_signed(np.array([4, 4]), CFG)))
    assert open_value(s, b).tolist() == [0, 1]


def test_argmax_ties_go_left():
    s = make()
    b, y = ml.argmax(s, share(s, 1, ring.from_signed(np.array([[4, 4], [1, 7], [3, 3]]), CFG)))
    assert open_value(s, b).tolist() == [[1, 0], [0, 1], [1, 0]]


@pytest.mark.parametrize("m", [2, 3, 4, 5, 7, 8, 11])
@pytest.mark.parametrize("largest", [False, True])
def test_tournament_random(m, largest, mode):
    rng = np.random.default_rng(m)
    v = rng.integers(-6, 6, (300, m))  # narrow range so ties are common
    s = make(mode)
    fn = ml.argmax if largest else ml.argmin
    b, y = fn(s, share(s, 3, ring.from_signed(v, CFG)))
    bits, ext = open_value(s, b), signed(open_value(s, y))
    assert np.all(bits.sum(axis=-1) == 1)
    idx = np.array([brute_arg(row.tolist(), largest) for row in v])
    assert np.array_equal(bits.argmax(axis=-1), idx)
    assert np.array_equal(ext, v.max(axis=-1) if largest else v.min(axis=-1))


def test_argmin_needs_two():
    s = make()
    with pytest.raises(ValueError):
        ml.argmin(s, share(s, 1, enc([1.0])))


def test_maxpool_examples():
    s = make()
    x = np.array([[1, 2], [3, 4]])
    assert open_value(s, ml.maxpool(s, share(s, 1, ring.from_signed(x, CFG)))).tolist() == [[4]]
    same = np.full((2, 2), -7)
    assert signed(open_value(s, ml.maxpool(s, share(s, 1, ring.from_signed(same, CFG))))).tolist() == [[-7]]


def test_maxpool_random(rng, mode):
    x = rng.integers(-1000, 1000, (3, 6, 8))
    s = make(mode)
    got = signed(open_value(s, ml.maxpool(s, share(s, 1, ring.from_signed(x, CFG)))))
    want = x.reshape(3, 3, 2, 4, 2).max(axis=(2, 4))
    assert np.array_equal(got, want)


# -------------------------------------------------------------------- models
def test_model_text_roundtrip(tmp_path):
    model = ml.toy_model(3)
    path = tmp_path / "m.txt"
    model.save(path)
    back = ModelSpec.load(path)
    assert back.input_shape == model.input_shape
    for a, b in zip(model.layers, back.layers):
        assert a.kind == b.kind
        for name in ("weights", "bias"):
            if getattr(a, name) is not None:
                assert np.array_equal(getattr(a, name), getattr(b, name))


def test_conv_model_roundtrip():
    w = np.arange(2 * 1 * 3 * 3, dtype=float).reshape(2, 1, 3, 3) / 10
    model = ModelSpec((1, 6, 6), [Layer("conv", w, np.zeros(2), stride=1, pad=1), Layer("relu"),
                                  Layer("maxpool", window=2), Layer("argmax")])
    assert model.shapes()[-2] == (2, 3, 3)
    assert ModelSpec.loads(model.dumps()).dumps() == model.dumps()


@pytest.mark.parametrize("text", [
    "not a model\n",
    "fourpc-model v1\ninput 3\nlayer dense\n  weights 2 2 : 1 0 0 1\nlayer argmax\n",
    "fourpc-model v1\ninput 2\nlayer dense\n  weights 2 2 : 1 0 0\nlayer argmax\n",
    "fourpc-model v1\ninput 2\nlayer softmax\n",
    "fourpc-model v1\ninput 2\nlayer argmax\nlayer relu\n",
    "fourpc-model v1\nlayer relu\n",
])
def test_model_errors(text):
    with pytest.raises(ValueError):
        ModelSpec.loads(text)


def test_identity_model_is_argmax(rng):
    x = rng.normal(size=(20, 5))
    s = make()
    res = ml.infer(s, ml.identity_model(5), x)
    assert np.array_equal(res.labels, x.argmax(axis=-1))


def test_infer_shape_mismatch():
    with pytest.raises(ValueError):
        ml.infer(make(), ml.toy_model(), np.zeros((2, 5)))


def test_conv_model_matches_clear(rng):
    w = rng.normal(0, 0.5, (2, 1, 3, 3)).round(3)
    model = ModelSpec((1, 6, 6), [Layer("conv", w, np.array([0.1, -0.1]), pad=1), Layer("relu"),
                                  Layer("maxpool", window=2), Layer("dense", rng.normal(0, 0.3, (18, 3)).round(3)),
                                  Layer("argmax")])
    x = rng.normal(size=(6, 1, 6, 6))
    res = ml.infer(make(), model, x)
    assert np.array_equal(res.labels, ml.infer_clear(model, x, CFG))


def test_toy_model_agreement_and_modes():
    model = ml.toy_model()
    x = np.random.default_rng(11).normal(size=(100, 8))
    want = ml.infer_clear(model, x, CFG)
    fair = ml.infer(make("fair"), model, x)
    robust = ml.infer(make("robust"), model, x)
    assert np.mean(fair.labels == want) >= 0.99
    assert np.array_equal(fair.labels, robust.labels)


def test_layer_error_stays_within_truncation_noise(rng):
    """Secure dense layers drift from the floor-truncated reference by at most one ulp per product."""
    model = ml.toy_model()
    w1, w2 = (enc(l.weights) for l in model.layers if l.kind == "dense")
    x = enc(rng.normal(size=(200, 8)))
    s = make()
    h = matmul(s, share(s, 1, x), share(s, 0, w1), trunc=True)
    h_clear = ring.truncate(ring.matmul_plain(x, w1, CFG), CFG)
    err1 = np.abs(signed(open_value(s, h)) - signed(h_clear))
    assert err1.max() <= 1
    h = ml.relu(s, h)
    out = signed(open_value(s, matmul(s, h, share(s, 0, w2), trunc=True)))
    ref = signed(ring.truncate(ring.matmul_plain(ml.piecewise_clear(ml.RELU, h_clear, CFG), w2, CFG), CFG))
    bound = 1 + np.abs(model.layers[2].weights).sum(axis=0).max() + 1
    assert np.abs(out - ref).max() <= bound
