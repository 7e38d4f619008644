"""ReLU through the garbled world, with one and with two garbling instances.

    python3 demos/garbled_relu.py
"""

import numpy as np

from fourpc import garbled, ring
from fourpc.circuits import relu_circuit
from fourpc.session import Session
from fourpc.sharing import open_value, share

values = np.array([-3.25, 0.0, 2.5, -0.125, 7.0])
print("inputs:", values)
for variant in (2, 1):
    sess = Session("robust", ring.DEFAULT, b"gc-demo")
    x = share(sess, 1, ring.encode_fx(values))
    y = garbled.convert(sess, "AGA", relu_circuit(64), {"x": x}, variant)
    row = sess.net.ledger.to_dict()["by_label"][f"gc{variant}-AGA"]
    per = row["online"] / row["gates"]
    print(f"\n{variant} instance(s): relu = {ring.decode_fx(open_value(sess, y))}")
    print(f"  online: {per:.0f} bits per value ({per / 64:.0f} x ell), {row['online_rounds']} round(s)")
    print(f"  garbled circuits and keys sent ahead: {row['pre'] / row['gates'] / 8:.0f} bytes per value")
