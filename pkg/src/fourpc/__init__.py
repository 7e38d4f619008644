"""Four-party honest-majority secure computation over Z_2^ell, simulated in one process.

One party may be actively corrupt. Fair mode aborts on any inconsistency;
robust mode names a trusted party and still delivers the output.
"""

from .boolean import a2b, b2a, bit2a, bit_extract, bit_inject, evaluate, obv_select
from .circuits import BoolCircuit, Builder, adder
from .garbled import convert, gc_output
from .ml import ModelSpec, PiecewiseSpec, argmax, argmin, infer, maxpool, piecewise, relu, relu_deriv, sigmoid
from .mult import conv2d, dotp, matmul, mult3, mult4, mult_const, mult_nopre
from .ring import DEFAULT, FxConfig, decode_fx, encode_fx
from .session import Abort, Session
from .sharing import add, joint_share, open_value, reconstruct, share, sub

__version__ = "0.1.0"

__all__ = [
    "Abort", "BoolCircuit", "Builder", "DEFAULT", "FxConfig", "ModelSpec", "PiecewiseSpec", "Session",
    "a2b", "add", "adder", "argmax", "argmin", "b2a", "bit2a", "bit_extract", "bit_inject", "conv2d",
    "convert", "decode_fx", "dotp", "encode_fx", "evaluate", "gc_output", "infer", "joint_share",
    "matmul", "maxpool", "mult3", "mult4", "mult_const", "mult_nopre", "obv_select",
    "open_value", "piecewise", "reconstruct", "relu", "relu_deriv", "share", "sigmoid", "sub",
]
