"""Single-fault matrix: flip one message at every site of an honest run."""

from collections import Counter
from dataclasses import dataclass, field

from fourpc import harness as H

# every input pairing, both products, and a garbled output; values small enough for ell=16
LINEAR_PROG = """
INPUT a 1
INPUT b 2
INPUT c 3
INPUT d 0
INPUT k12 1,2
INPUT k13 1,3
INPUT k23 2,3
INPUT k01 0,1
INPUT k02 0,2
INPUT k03 0,3
INPUT bits 1 BITS
ADD s = a b
ADD s = s k12
ADD s = s k13
ADD s = s k23
ADD t = k01 k02
ADD t = t k03
ADD t = t d
MUL y = s c
MUL y = y t
GCOPEN g = bits
OUTPUT y g
"""
LINEAR_INPUTS = {"a": 1, "b": 2, "c": 3, "d": 4, "k12": 5, "k13": 6, "k23": 7,
                 "k01": 1, "k02": 1, "k03": 1, "bits": [1, 0, 1, 1]}
# (1+2+5+6+7) * 3 * (1+1+1+4)
LINEAR_ORACLE = {"y": [441], "g": [1, 0, 1, 1]}

MIXED_PROG = """
INPUT a 1
INPUT b 2
INPUT c 3 BITS
MSB m = a
BITINJ y = m b
SELECT z = a b c
BIT2A w = c
MUL3 q = a b a
GCRELU r = a
RELU u = b
OUTPUT y z w q r u
"""
MIXED_INPUTS = {"a": [-3, 5], "b": [2, -7], "c": [1, 0]}
MIXED_ORACLE = {"y": [2, 0], "z": [2, 5], "w": [1, 0], "q": [18, -175], "r": [0, 5], "u": [2, 0]}


@dataclass
class MatrixResult:
    sites: list = field(default_factory=list)
    outcomes: Counter = field(default_factory=Counter)
    bad: list = field(default_factory=list)

    @property
    def tags(self) -> set:
        return {s.split(":")[0] for s in self.sites}


def run_matrix(prog_text: str, inputs: dict, oracle: dict, **conf) -> MatrixResult:
    """Robust mode: every honest party must output the oracle value.
    Fair mode: honest parties all output it, or all abort."""
    prog = H.Program.parse(prog_text)
    base = H.RunConfig(ell=16, frac_bits=4, **conf)
    res = MatrixResult(sites=H.fault_sites(base, prog, inputs))
    for site in res.sites:
        corrupt = f"P{site.split(':')[2]}"
        rep, _ = H.run_program(H.RunConfig(ell=16, frac_bits=4, fault=site, **conf), prog, inputs)
        views = [(n, v) for n, pv in rep["party_outputs"].items() for p, v in pv.items() if p != corrupt]
        good = all(v == oracle[n] for n, v in views)
        aborted = all(v is None for _, v in views)
        res.outcomes["output" if good else "abort" if aborted else "mixed"] += 1
        ok = good if base.mode == "robust" else (good or aborted)
        if not ok or not rep["fault"]["fired"]:
            res.bad.append((site, rep["verdict"], rep["party_outputs"]))
    return res
