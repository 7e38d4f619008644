"""Classify a batch with the seeded 8-4-3 toy network and compare with cleartext.

    python3 demos/secure_inference.py [n_samples]
"""

import sys

import numpy as np

from fourpc import ml, ring
from fourpc.session import Session

n = int(sys.argv[1]) if len(sys.argv) > 1 else 50
model = ml.toy_model()
print(model.dumps().splitlines()[0], "|", len(model.layers), "layers:", [l.kind for l in model.layers])

x = np.random.default_rng(0).normal(size=(n, 8))
want = ml.infer_clear(model, x, ring.DEFAULT)
for mode in ("fair", "robust"):
    sess = Session(mode, ring.DEFAULT, b"infer-demo")
    res = ml.infer(sess, model, x)
    print(f"\n{mode}: {np.mean(res.labels == want):.0%} of {n} labels match the cleartext pipeline")
    for c in res.layer_costs:
        print(f"  layer {c['layer']} {c['kind']:<7} pre {c['pre_bits'] / 8:>9.0f} B  online {c['online_bits'] / 8:>8.0f} B")
