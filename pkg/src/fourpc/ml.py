"""Machine-learning building blocks on top of the sharing layers.

Piecewise-linear activations, argmin/argmax tournaments, max pooling and a
small inference pipeline driven by a text model file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ring
from .boolean import bit2a, bit_extract, bit_inject_sum, obv_select
from .mult import conv2d, matmul, mult, mult_const
from .ring import FxConfig
from .session import Session
from .shares import Shared, stack
from .sharing import add, index, reconstruct, reshape, share
from .sharing import stack as stack_shared


# ------------------------------------------------------------------- helpers
def _shift(v: Shared, c: np.uint64) -> Shared:
    """v + c for a public ring constant (only the masked value changes)."""
    dom = v.dom
    return Shared(dom, {p: {n: (dom.add(x, c) if n == "m" else x) for n, x in comps.items()}
                        for p, comps in v.c.items()}, v.t)


def _flip(b: Shared) -> Shared:
    return _shift(b, np.uint8(1))


def _is_nonneg(v: np.ndarray, cfg: FxConfig) -> np.ndarray:
    return (ring.bits_of(v, cfg.ell)[..., -1] ^ 1).astype(np.uint8)


# ----------------------------------------------------------------- piecewise
@dataclass(frozen=True)
class PiecewiseSpec:
    """f(y) = slope_i * y + intercept_i on [c_i, c_{i+1}), and 0 below c_1.

    Breakpoints and intercepts are real numbers encoded in fixed point. A
    slope that is an integer is applied without truncation; any other slope
    goes through a truncated public-constant product.
    """

    breakpoints: tuple[float, ...]
    pieces: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.breakpoints:
            raise ValueError("need at least one breakpoint")
        if len(self.breakpoints) != len(self.pieces):
            raise ValueError("one (slope, intercept) pair per breakpoint")
        if any(a >= b for a, b in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    @property
    def deltas(self) -> list[tuple[float, float]]:
        """Coefficients of f_i - f_{i-1} with f_0 = 0."""
        prev = (0.0, 0.0)
        out = []
        for slope, icpt in self.pieces:
            out.append((slope - prev[0], icpt - prev[1]))
            prev = (slope, icpt)
        return out


RELU = PiecewiseSpec((0.0,), ((1, 0.0),))
SIGMOID = PiecewiseSpec((-0.5, 0.5), ((1, 0.5), (0, 1.0)))


def _linear_clear(slope, icpt, y: np.ndarray, cfg: FxConfig) -> np.ndarray:
    if float(slope).is_integer():
        lin = ring.mul(y, ring.asring(int(slope), cfg), cfg)
    else:
        lin = ring.truncate(ring.mul(y, ring.encode_fx(slope, cfg), cfg), cfg)
    return ring.add(lin, ring.encode_fx(icpt, cfg), cfg)


def piecewise_clear(spec: PiecewiseSpec, y: np.ndarray, cfg: FxConfig) -> np.ndarray:
    """sum_i [y >= c_i] * (f_i - f_{i-1})(y) evaluated on ring values."""
    y = np.asarray(y, dtype=np.uint64)
    acc = np.zeros(y.shape, dtype=np.uint64)
    for c, (ds, di) in zip(spec.breakpoints, spec.deltas):
        b = _is_nonneg(ring.sub(y, ring.encode_fx(c, cfg), cfg), cfg).astype(np.uint64)
        acc = ring.add(acc, ring.mul(b, _linear_clear(ds, di, y, cfg), cfg), cfg)
    return acc


def _linear(sess: Session, slope, icpt, y: Shared) -> Shared:
    cfg = sess.cfg
    if float(slope).is_integer():
        k = ring.asring(int(slope), cfg)
        lin = y.map(lambda a: sess.A.mul(a, k))
    else:
        lin = mult_const(sess, ring.encode_fx(slope, cfg), y, trunc=True)
    return _shift(lin, ring.encode_fx(icpt, cfg)[()])


def piecewise(sess: Session, spec: PiecewiseSpec, y: Shared) -> Shared:
    """Evaluate a piecewise-linear function with one comparison per breakpoint.

    All comparisons run as one batched bit extraction and the products
    b_i * delta_i are summed locally before a single re-sharing.
    """
    cfg = sess.cfg
    m = len(spec.breakpoints)
    with sess.op("piecewise", gates=int(np.prod(y.shape)) * m):
        shifted = stack([_shift(y, ring.neg(ring.encode_fx(c, cfg), cfg)[()]) for c in spec.breakpoints], axis=0)
        signs = bit_extract(sess, shifted)
        bits = _flip(signs)
        parts = [_linear(sess, ds, di, y) for ds, di in spec.deltas]
        with sess.op("piecewise-inject", gates=int(np.prod(y.shape)) * m):
            out = bit_inject_sum(sess, [(bits.index(i), parts[i]) for i in range(m)])
    return sess.record(lambda v: piecewise_clear(spec, v, cfg), [y], out)


def relu(sess: Session, v: Shared) -> Shared:
    """max(0, v) reading v as a signed ring element."""
    with sess.op("relu", gates=int(np.prod(v.shape))):
        out = piecewise(sess, RELU, v)
    return sess.record(lambda a: piecewise_clear(RELU, a, sess.cfg), [v], out)


def relu_deriv(sess: Session, v: Shared) -> Shared:
    """1 where v >= 0, else 0, as a ring share."""
    with sess.op("relu_deriv", gates=int(np.prod(v.shape))):
        out = bit2a(sess, _flip(bit_extract(sess, v)))
    return sess.record(lambda a: _is_nonneg(a, sess.cfg).astype(np.uint64), [v], out)


def sigmoid(sess: Session, v: Shared) -> Shared:
    """Piecewise sigmoid: 0 below -1/2, v + 1/2 in between, 1 from 1/2 up."""
    with sess.op("sigmoid", gates=int(np.prod(v.shape))):
        out = piecewise(sess, SIGMOID, v)
    return sess.record(lambda a: piecewise_clear(SIGMOID, a, sess.cfg), [v], out)


# --------------------------------------------------------------- tournaments
def _less(sess: Session, a: Shared, b: Shared) -> Shared:
    """[a < b] as a boolean share: the sign bit of a - b."""
    return bit_extract(sess, a.zip(b, sess.A.sub))


def _gate(sess: Session, groups: list[tuple[list[Shared], Shared]]) -> list[list[Shared]]:
    """Multiply every bit of each group by that group's selector, in one batch."""
    flat, sel, sizes = [], [], []
    for bits, d in groups:
        flat.extend(bits)
        sel.extend([d] * len(bits))
        sizes.append(len(bits))
    prod = mult(sess, stack(flat, axis=0), stack(sel, axis=0))
    out, k = [], 0
    for n in sizes:
        out.append([prod.index(k + i) for i in range(n)])
        k += n
    return out


def _tournament(sess: Session, xs: list[Shared], largest: bool, want_bits: bool):
    """Winner value and (optionally) one-hot indicator bits over ``xs``.

    For argmin, a tie keeps the right-hand candidate; for argmax the
    left-hand one. Both follow from the sign bit of a zero difference.
    """
    m = len(xs)
    if m == 1:
        return xs[0], None
    if m == 2:
        x1, x2 = xs
        d = _less(sess, x1, x2)
        if largest:
            return obv_select(sess, x1, x2, d), [_flip(d), d]
        return obv_select(sess, x2, x1, d), [d, _flip(d)]
    if m == 3:
        x1, x2, x3 = xs
        d1 = _less(sess, x1, x2)
        if largest:
            y1 = obv_select(sess, x1, x2, d1)
            d2 = _less(sess, y1, x3)
            y = obv_select(sess, y1, x3, d2)
            if not want_bits:
                return y, None
            (b2,), = _gate(sess, [([d1], _flip(d2))])
            b1 = b2.zip(_flip(d2), sess.B.add)
            return y, [b1, b2, d2]
        y1 = obv_select(sess, x2, x1, d1)
        d2 = _less(sess, y1, x3)
        y = obv_select(sess, x3, y1, d2)
        if not want_bits:
            return y, None
        (b1,), = _gate(sess, [([d1], d2)])
        b2 = b1.zip(d2, sess.B.add)
        return y, [b1, b2, _flip(d2)]
    half = m // 2
    yl, bl = _tournament(sess, xs[:half], largest, want_bits)
    yr, br = _tournament(sess, xs[half:], largest, want_bits)
    d = _less(sess, yl, yr)
    if largest:
        y = obv_select(sess, yl, yr, d)
        keep_left, keep_right = _flip(d), d
    else:
        y = obv_select(sess, yr, yl, d)
        keep_left, keep_right = d, _flip(d)
    if not want_bits:
        return y, None
    left, right = _gate(sess, [(bl, keep_left), (br, keep_right)])
    return y, left + right


def _extreme_clear(x: np.ndarray, largest: bool, cfg: FxConfig) -> tuple[np.ndarray, np.ndarray]:
    s = ring.to_signed(x, cfg)
    m = s.shape[-1]
    if largest:
        idx = np.argmax(s, axis=-1)
    else:
        idx = m - 1 - np.argmin(s[..., ::-1], axis=-1)
    onehot = (np.arange(m) == idx[..., None]).astype(np.uint8)
    return onehot, np.take_along_axis(x, idx[..., None], axis=-1)[..., 0]


def _arg_extreme(sess: Session, x: Shared, largest: bool) -> tuple[Shared, Shared]:
    m = x.shape[-1]
    if m < 2:
        raise ValueError("need at least two candidates")
    label = "argmax" if largest else "argmin"
    with sess.op(label, gates=int(np.prod(x.shape[:-1]))):
        y, bits = _tournament(sess, [x.index((..., i)) for i in range(m)], largest, True)
        onehot = stack(bits, axis=-1)
    cfg = sess.cfg
    onehot = sess.record(lambda a: _extreme_clear(a, largest, cfg)[0], [x], onehot)
    y = sess.record(lambda a: _extreme_clear(a, largest, cfg)[1], [x], y)
    return onehot, y


def argmin(sess: Session, x: Shared) -> tuple[Shared, Shared]:
    """One-hot boolean position of the minimum over the last axis, and the minimum."""
    return _arg_extreme(sess, x, largest=False)


def argmax(sess: Session, x: Shared) -> tuple[Shared, Shared]:
    return _arg_extreme(sess, x, largest=True)


def max_last(sess: Session, x: Shared) -> Shared:
    """Maximum over the last axis without computing the position bits."""
    with sess.op("max", gates=int(np.prod(x.shape[:-1]))):
        y, _ = _tournament(sess, [x.index((..., i)) for i in range(x.shape[-1])], True, False)
    cfg = sess.cfg
    return sess.record(lambda a: _extreme_clear(a, True, cfg)[1], [x], y)


def _windows(a: np.ndarray, f: int) -> np.ndarray:
    *lead, h, w = a.shape
    oh, ow = h // f, w // f
    a = a[..., :oh * f, :ow * f].reshape(*lead, oh, f, ow, f)
    return np.moveaxis(a, -3, -2).reshape(*lead, oh, ow, f * f)


def maxpool(sess: Session, x: Shared, f: int = 2) -> Shared:
    """Non-overlapping f x f max pooling over the two trailing axes."""
    if x.shape[-1] < f or x.shape[-2] < f:
        raise ValueError("window larger than input")
    with sess.op("maxpool", gates=int(np.prod(x.shape)) // (f * f)):
        out = max_last(sess, x.map(lambda a: _windows(a, f)))
    cfg = sess.cfg
    return sess.record(lambda a: _extreme_clear(_windows(a, f), True, cfg)[1], [x], out)


# -------------------------------------------------------------------- models
MODEL_MAGIC = "fourpc-model v1"
LAYER_KINDS = ("dense", "conv", "relu", "maxpool", "argmax")


@dataclass
class Layer:
    kind: str
    weights: np.ndarray | None = None  # dense: (in, out); conv: (c_out, c_in, f, f)
    bias: np.ndarray | None = None
    stride: int = 1
    pad: int = 0
    window: int = 2


@dataclass
class ModelSpec:
    """A feed-forward network over fixed-point reals.

    ``input_shape`` is the shape of one sample: (n,) for dense inputs or
    (c, h, w) for images.
    """

    input_shape: tuple[int, ...]
    layers: list[Layer] = field(default_factory=list)
    frac_bits: int = 13

    def shapes(self) -> list[tuple[int, ...]]:
        """Per-layer output shapes; raises on non-conformable dimensions."""
        shape = tuple(self.input_shape)
        out = []
        for i, layer in enumerate(self.layers):
            if layer.kind == "dense":
                n = int(np.prod(shape))
                if layer.weights.shape[0] != n:
                    raise ValueError(f"layer {i}: dense expects {layer.weights.shape[0]} inputs, got {n}")
                shape = (layer.weights.shape[1],)
            elif layer.kind == "conv":
                c_out, c_in, f, _ = layer.weights.shape
                if len(shape) != 3 or shape[0] != c_in:
                    raise ValueError(f"layer {i}: conv expects {c_in} channels, got shape {shape}")
                oh = (shape[1] - f + 2 * layer.pad) // layer.stride + 1
                ow = (shape[2] - f + 2 * layer.pad) // layer.stride + 1
                if oh <= 0 or ow <= 0:
                    raise ValueError(f"layer {i}: kernel larger than input")
                shape = (c_out, oh, ow)
            elif layer.kind == "maxpool":
                if len(shape) < 2 or min(shape[-2:]) < layer.window:
                    raise ValueError(f"layer {i}: maxpool window larger than input")
                shape = (*shape[:-2], shape[-2] // layer.window, shape[-1] // layer.window)
            elif layer.kind == "argmax":
                if i != len(self.layers) - 1:
                    raise ValueError("argmax must be the last layer")
            elif layer.kind != "relu":
                raise ValueError(f"unknown layer kind {layer.kind!r}")
            if layer.bias is not None and layer.bias.shape[0] != shape[0]:
                raise ValueError(f"layer {i}: bias length {layer.bias.shape[0]} != {shape[0]}")
            out.append(shape)
        return out

    # text format: a header line, then one block per layer; tensors are
    # written as "<name> <dims...> : <values...>" with decimal reals
    def dumps(self) -> str:
        lines = [MODEL_MAGIC, f"frac_bits {self.frac_bits}", "input " + " ".join(map(str, self.input_shape))]
        for layer in self.layers:
            if layer.kind == "conv":
                lines.append(f"layer conv stride {layer.stride} pad {layer.pad}")
            elif layer.kind == "maxpool":
                lines.append(f"layer maxpool {layer.window}")
            else:
                lines.append(f"layer {layer.kind}")
            for name in ("weights", "bias"):
                t = getattr(layer, name)
                if t is not None:
                    dims = " ".join(map(str, t.shape))
                    vals = " ".join(repr(float(v)) for v in t.ravel())
                    lines.append(f"  {name} {dims} : {vals}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "ModelSpec":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")]
        if not lines or lines[0] != MODEL_MAGIC:
            raise ValueError(f"not a model file (expected {MODEL_MAGIC!r} header)")
        frac_bits, input_shape, layers = 13, None, []
        for ln in lines[1:]:
            head, *rest = ln.split()
            if head == "frac_bits":
                frac_bits = int(rest[0])
            elif head == "input":
                input_shape = tuple(int(r) for r in rest)
            elif head == "layer":
                kind = rest[0]
                if kind not in LAYER_KINDS:
                    raise ValueError(f"unknown layer kind {kind!r}")
                opts = dict(zip(rest[1::2], rest[2::2]))
                layer = Layer(kind)
                if kind == "conv":
                    layer.stride = int(opts.get("stride", 1))
                    layer.pad = int(opts.get("pad", 0))
                if kind == "maxpool":
                    layer.window = int(rest[1]) if len(rest) > 1 else 2
                layers.append(layer)
            elif head in ("weights", "bias"):
                if not layers:
                    raise ValueError(f"{head} before any layer")
                dims, _, vals = ln[len(head):].partition(":")
                shape = tuple(int(d) for d in dims.split())
                arr = np.array([float(v) for v in vals.split()], dtype=np.float64)
                if arr.size != int(np.prod(shape)):
                    raise ValueError(f"{head}: expected {int(np.prod(shape))} values, got {arr.size}")
                setattr(layers[-1], head, arr.reshape(shape))
            else:
                raise ValueError(f"unrecognized line: {ln[:40]!r}")
        if input_shape is None:
            raise ValueError("missing input line")
        for i, layer in enumerate(layers):
            if layer.kind in ("dense", "conv") and layer.weights is None:
                raise ValueError(f"layer {i}: {layer.kind} without weights")
        model = cls(input_shape, layers, frac_bits)
        model.shapes()
        return model

    @classmethod
    def load(cls, path) -> "ModelSpec":
        return cls.loads(Path(path).read_text())


def toy_model(seed: int = 7, dims=(8, 4, 3)) -> ModelSpec:
    """A seeded dense network dims[0] -> ... -> dims[-1] with ReLU between layers."""
    rng = np.random.default_rng(seed)
    layers = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        layers.append(Layer("dense", np.round(rng.normal(0, 1 / np.sqrt(a), (a, b)), 4),
                            np.round(rng.normal(0, 0.1, b), 4)))
        if i < len(dims) - 2:
            layers.append(Layer("relu"))
    layers.append(Layer("argmax"))
    return ModelSpec((dims[0],), layers)


def identity_model(n: int) -> ModelSpec:
    return ModelSpec((n,), [Layer("dense", np.eye(n)), Layer("argmax")])


# ----------------------------------------------------------------- inference
def _cfg_for(model: ModelSpec, cfg: FxConfig) -> FxConfig:
    if model.frac_bits != cfg.frac_bits:
        raise ValueError(f"model uses {model.frac_bits} fractional bits, session {cfg.frac_bits}")
    return cfg


def infer_clear(model: ModelSpec, x, cfg: FxConfig = ring.DEFAULT) -> np.ndarray:
    """Cleartext fixed-point reference: same ring arithmetic, floor truncation."""
    cfg = _cfg_for(model, cfg)
    model.shapes()
    a = ring.encode_fx(np.asarray(x, dtype=np.float64), cfg)
    if a.shape == tuple(model.input_shape):
        a = a[None]
    for layer in model.layers:
        if layer.kind == "dense":
            a = a.reshape(a.shape[0], -1)
            a = ring.truncate(ring.matmul_plain(a, ring.encode_fx(layer.weights, cfg), cfg), cfg)
        elif layer.kind == "conv":
            k = ring.encode_fx(layer.weights, cfg)
            a = np.stack([ring.truncate(ring.conv2d_plain(s, k, layer.stride, layer.pad, cfg), cfg) for s in a])
        elif layer.kind == "relu":
            a = piecewise_clear(RELU, a, cfg)
        elif layer.kind == "maxpool":
            a = _extreme_clear(_windows(a, layer.window), True, cfg)[1]
        elif layer.kind == "argmax":
            return _extreme_clear(a.reshape(a.shape[0], -1), True, cfg)[0].argmax(axis=-1)
        if layer.bias is not None:
            b = ring.encode_fx(layer.bias, cfg)
            a = ring.add(a, b.reshape(b.shape + (1,) * (a.ndim - 2)), cfg)
    return a


@dataclass
class InferResult:
    labels: np.ndarray | None
    status: tuple
    layer_costs: list[dict]


def infer(sess: Session, model: ModelSpec, x, model_owner: int = 0, data_owner: int = 1) -> InferResult:
    """Secure inference on a batch: the model owner shares weights, the data owner inputs.

    Dense and convolution layers are truncated products, ReLU is the
    piecewise protocol and a final argmax reveals only the class index.
    """
    cfg = _cfg_for(model, sess.cfg)
    model.shapes()
    x = np.asarray(x, dtype=np.float64)
    if x.shape == tuple(model.input_shape):
        x = x[None]
    if x.shape[1:] != tuple(model.input_shape):
        raise ValueError(f"input shape {x.shape[1:]} does not match model {tuple(model.input_shape)}")
    n = x.shape[0]
    ledger = sess.net.ledger
    costs = []
    a = share(sess, data_owner, ring.encode_fx(x, cfg))
    onehot = None
    for i, layer in enumerate(model.layers):
        before = {ph: ledger.phase_bits(ph) for ph in ("pre", "online")}
        with sess.op(f"layer{i}-{layer.kind}"):
            if layer.kind == "dense":
                w = share(sess, model_owner, ring.encode_fx(layer.weights, cfg))
                a = reshape(sess, a, n, -1)
                a = matmul(sess, a, w, trunc=True)
            elif layer.kind == "conv":
                k = share(sess, model_owner, ring.encode_fx(layer.weights, cfg))
                outs = [conv2d(sess, index(sess, a, j), k, layer.stride, layer.pad, trunc=True) for j in range(n)]
                a = stack_shared(sess, outs, axis=0)
            elif layer.kind == "relu":
                a = relu(sess, a)
            elif layer.kind == "maxpool":
                a = maxpool(sess, a, layer.window)
            elif layer.kind == "argmax":
                onehot, _ = argmax(sess, reshape(sess, a, n, -1))
            if layer.bias is not None:
                b = share(sess, model_owner, ring.encode_fx(layer.bias, cfg))
                shape, lead = a.shape, (b.shape[0],) + (1,) * (len(a.shape) - 2)
                fit = lambda v, _s=shape, _l=lead: np.broadcast_to(v.reshape(_l), _s).copy()
                b = sess.record(fit, [b], b.map(fit))
                a = add(sess, a, b)
        costs.append({"layer": i, "kind": layer.kind,
                      "pre_bits": ledger.phase_bits("pre") - before["pre"],
                      "online_bits": ledger.phase_bits("online") - before["online"]})
    if onehot is None:
        raise ValueError("model must end with an argmax layer")
    opened = reconstruct(sess, onehot)
    if opened.status == "abort":
        return InferResult(None, sess.status, costs)
    return InferResult(opened.value.argmax(axis=-1), sess.status, costs)
