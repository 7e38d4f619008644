"""A few gradient steps of a one-hidden-layer regression net on shared data.

Forward: h = relu(x W1), y = h W2. Backward uses relu_deriv as the gate of
the hidden gradient. Squared-error loss; learning rate folded into a
fixed-point constant. Loss is opened only for display.

    python3 demos/training_step.py
"""

import numpy as np

from fourpc import ml, ring
from fourpc.mult import matmul, mult, mult_const
from fourpc.session import Session
from fourpc.sharing import open_value, share, sub

cfg = ring.DEFAULT
rng = np.random.default_rng(3)
X = rng.normal(size=(32, 4))
Y = (X @ np.array([[1.0], [-2.0], [0.5], [0.0]])).clip(min=0)

sess = Session("fair", cfg, b"train-demo")
enc = lambda a: ring.encode_fx(np.asarray(a, dtype=np.float64), cfg)
x, y = share(sess, 1, enc(X)), share(sess, 1, enc(Y))
xT = share(sess, 1, enc(X.T))
w1 = share(sess, 0, enc(rng.normal(0, 0.5, (4, 8))))
w2 = share(sess, 0, enc(rng.normal(0, 0.5, (8, 1))))
lr = enc(0.05 / len(X))


def transpose(v):
    return v.map(lambda a: a.T.copy())


for step in range(8):
    h_pre = matmul(sess, x, w1, trunc=True)
    h = ml.relu(sess, h_pre)
    err = sub(sess, matmul(sess, h, w2, trunc=True), y)
    loss = np.mean(ring.decode_fx(open_value(sess, err), cfg) ** 2)
    print(f"step {step}: loss {loss:.4f}")
    g2 = matmul(sess, transpose(h), err, trunc=True)
    back = matmul(sess, err, transpose(w2), trunc=True)
    g_hidden = mult(sess, back, ml.relu_deriv(sess, h_pre))  # relu_deriv is 0/1, no truncation
    g1 = matmul(sess, xT, g_hidden, trunc=True)
    w2 = sub(sess, w2, mult_const(sess, lr, g2, trunc=True))
    w1 = sub(sess, w1, mult_const(sess, lr, g1, trunc=True))
print("status:", sess.status[0])
