"""Arithmetic over Z_{2^ell} and the fixed-point encoding built on top of it.

Ring elements are stored as ``numpy.uint64`` arrays. Every operation wraps
silently; for toy rings (``ell < 64``) results are reduced with a mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

U64 = np.uint64


@dataclass(frozen=True)
class FxConfig:
    ell: int = 64
    frac_bits: int = 13

    def __post_init__(self):
        if not 2 <= self.ell <= 64:
            raise ValueError(f"ell must be in [2, 64], got {self.ell}")
        if not 0 < self.frac_bits < self.ell - 1:
            raise ValueError(f"frac_bits must be in (0, ell-1), got {self.frac_bits}")

    @property
    def mask(self) -> np.uint64:
        return U64((1 << self.ell) - 1)

    @property
    def half(self) -> np.uint64:
        """Rounding offset 2^(x-1) used by the protocol truncation."""
        return U64(1 << (self.frac_bits - 1))


DEFAULT = FxConfig()


def asring(values, cfg: FxConfig = DEFAULT) -> np.ndarray:
    """Coerce ints (including negatives and Python bigints) into ring elements."""
    if isinstance(values, np.ndarray) and values.dtype == np.uint64:
        arr = values
    elif isinstance(values, np.ndarray) and values.dtype.kind in "iu":
        arr = values.astype(np.int64).view(np.uint64) if values.dtype.kind == "i" else values.astype(np.uint64)
    else:
        mod = 1 << 64
        flat = np.asarray(values, dtype=object)
        arr = np.array([int(v) % mod for v in flat.ravel()], dtype=np.uint64).reshape(flat.shape)
    arr = np.atleast_1d(arr)
    return wrap(arr, cfg)


def wrap(a: np.ndarray, cfg: FxConfig = DEFAULT) -> np.ndarray:
    if cfg.ell == 64:
        return a
    return a & cfg.mask


def add(a, b, cfg: FxConfig = DEFAULT):
    with np.errstate(over="ignore"):
        return wrap(a + b, cfg)


def sub(a, b, cfg: FxConfig = DEFAULT):
    with np.errstate(over="ignore"):
        return wrap(a - b, cfg)


def mul(a, b, cfg: FxConfig = DEFAULT):
    with np.errstate(over="ignore"):
        return wrap(a * b, cfg)


def neg(a, cfg: FxConfig = DEFAULT):
    with np.errstate(over="ignore"):
        return wrap(U64(0) - a, cfg)


def to_signed(a: np.ndarray, cfg: FxConfig = DEFAULT) -> np.ndarray:
    """Two's-complement interpretation as int64."""
    a = wrap(np.asarray(a, dtype=np.uint64), cfg)
    if cfg.ell == 64:
        return a.view(np.int64)
    sign = U64(1 << (cfg.ell - 1))
    s = a.astype(np.int64)
    return np.where(a & sign, s - (1 << cfg.ell), s)


def from_signed(a, cfg: FxConfig = DEFAULT) -> np.ndarray:
    return wrap(np.asarray(a, dtype=np.int64).view(np.uint64), cfg)


def encode_fx(f, cfg: FxConfig = DEFAULT) -> np.ndarray:
    """round(f * 2^x) in two's complement."""
    f = np.atleast_1d(np.asarray(f, dtype=np.float64))
    limit = 2.0 ** (cfg.ell - cfg.frac_bits - 1)
    if np.any(np.abs(f) >= limit) or not np.all(np.isfinite(f)):
        raise ValueError(f"fixed-point input out of range (|f| < {limit})")
    k = np.rint(f * (1 << cfg.frac_bits)).astype(np.int64)
    return from_signed(k, cfg)


def decode_fx(v, cfg: FxConfig = DEFAULT) -> np.ndarray:
    return to_signed(v, cfg).astype(np.float64) / (1 << cfg.frac_bits)


def truncate(v, cfg: FxConfig = DEFAULT, shift: int | None = None) -> np.ndarray:
    """Arithmetic right shift (floor division of the signed value)."""
    shift = cfg.frac_bits if shift is None else shift
    return from_signed(to_signed(v, cfg) >> shift, cfg)


def truncate_round(v, cfg: FxConfig = DEFAULT, shift: int | None = None) -> np.ndarray:
    """Round-half-up shift: floor((v + 2^(shift-1)) / 2^shift).

    Used on each additive part of a product so the recombined result stays
    within one unit of the exact rational quotient.
    """
    shift = cfg.frac_bits if shift is None else shift
    return truncate(add(v, U64(1 << (shift - 1)), cfg), cfg, shift)


def dot_plain(a, b, cfg: FxConfig = DEFAULT) -> np.ndarray:
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    if a.shape[-1:] != b.shape[-1:]:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return wrap(np.atleast_1d((a * b).sum(axis=-1, dtype=np.uint64)), cfg)


def matmul_plain(x, y, cfg: FxConfig = DEFAULT) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    y = np.asarray(y, dtype=np.uint64)
    if x.shape[-1] != y.shape[-2]:
        raise ValueError(f"dim mismatch: {x.shape} @ {y.shape}")
    return wrap(np.matmul(x, y), cfg)


def bits_of(v, ell: int) -> np.ndarray:
    """Bit decomposition, LSB first, on a new trailing axis (uint8)."""
    v = np.asarray(v, dtype=np.uint64)
    shifts = np.arange(ell, dtype=np.uint64)
    return ((v[..., None] >> shifts) & U64(1)).astype(np.uint8)


def from_bits(bits, cfg: FxConfig = DEFAULT) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint64)
    ell = bits.shape[-1]
    weights = U64(1) << np.arange(ell, dtype=np.uint64)
    return wrap((bits * weights).sum(axis=-1, dtype=np.uint64), cfg)


def im2col(x: np.ndarray, f: int, stride: int = 1, pad: int = 0) -> tuple[np.ndarray, tuple[int, int]]:
    """Lower a (c, h, w) tensor into a (h'*w', c*f*f) patch matrix."""
    c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    oh = (h - f + 2 * pad) // stride + 1
    ow = (w - f + 2 * pad) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ValueError("kernel larger than padded input")
    rows = []
    for i in range(oh):
        for j in range(ow):
            patch = x[:, i * stride:i * stride + f, j * stride:j * stride + f]
            rows.append(patch.reshape(-1))
    return np.stack(rows), (oh, ow)


def conv2d_plain(x, kernels, stride=1, pad=0, cfg: FxConfig = DEFAULT) -> np.ndarray:
    """Direct convolution reference: kernels is (c_out, c_in, f, f)."""
    x = np.asarray(x, dtype=np.uint64)
    kernels = np.asarray(kernels, dtype=np.uint64)
    c_out, c_in, f, _ = kernels.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    oh = (x.shape[1] - f + 2 * pad) // stride + 1
    ow = (x.shape[2] - f + 2 * pad) // stride + 1
    out = np.zeros((c_out, oh, ow), dtype=np.uint64)
    for o in range(c_out):
        for i in range(oh):
            for j in range(ow):
                patch = xp[:, i * stride:i * stride + f, j * stride:j * stride + f]
                out[o, i, j] = (patch * kernels[o]).sum(dtype=np.uint64)
    return wrap(out, cfg)
