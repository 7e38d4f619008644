"""Walk through one product: sharing, cost, and what a single bad message does.

    python3 demos/shared_arithmetic.py
"""

import numpy as np

from fourpc import ring
from fourpc.mult import mult
from fourpc.session import Session
from fourpc.sharing import reconstruct, share


def show_shares(x):
    for p in range(4):
        parts = ", ".join(f"{k}={int(v[0]):#018x}" for k, v in sorted(x.c[p].items()))
        print(f"  P{p}: {parts}")


def run(mode, fault=None):
    sess = Session(mode, ring.DEFAULT, b"demo", fault=fault)
    a = share(sess, 1, ring.encode_fx(np.array([1.5])))
    b = share(sess, 2, ring.encode_fx(np.array([-4.0])))
    z = mult(sess, a, b, trunc=True)
    opened = reconstruct(sess, z)
    value = None if opened.status == "abort" else ring.decode_fx(opened.value)[0]
    return sess, a, opened.status, value


sess, a, status, value = run("fair")
print("P1 shares 1.5; each party holds three of the four components:")
show_shares(a)
print(f"\n1.5 * -4.0 = {value}  ({status})")
row = sess.net.ledger.to_dict()["by_label"]["mult"]
print(f"product cost: {row['pre']} bits before the inputs are known, {row['online']} bits after\n")

print("Now P1 flips one bit of its online product message to P2.")
for mode in ("fair", "robust"):
    sess, _, status, value = run(mode, fault="mult:y1:1")
    extra = f", trusted party P{sess.status[1]}" if status == "ttp" else ""
    print(f"  {mode:>6}: {status}{extra}, output {value}")
