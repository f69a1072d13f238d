"""Reference AC power flow for case14 computed with PYPOWER.

The model matches what leapgrid solves: transformer taps set to nominal
and bus shunts removed. Writes voltages and from-end active flows as a
JSON fixture used by the core test suite.
"""

import json
import sys

import numpy as np
from pypower.api import case14, ppoption, runpf
from pypower.idx_brch import PF, TAP, SHIFT
from pypower.idx_bus import BS, GS, VA, VM

ppc = case14()
ppc["branch"][:, TAP] = 0.0
ppc["branch"][:, SHIFT] = 0.0
ppc["bus"][:, GS] = 0.0
ppc["bus"][:, BS] = 0.0

opt = ppoption(PF_TOL=1e-12, VERBOSE=0, OUT_ALL=0, ENFORCE_Q_LIMS=0)
res, ok = runpf(ppc, opt)
assert ok

fixture = {
    "tool": "PYPOWER runpf (Newton, PF_TOL=1e-12)",
    "base_mva": float(res["baseMVA"]),
    "vm": [float(v) for v in res["bus"][:, VM]],
    "va_rad": [float(np.deg2rad(v)) for v in res["bus"][:, VA]],
    "pf_mw": [float(v) for v in res["branch"][:, PF]],
}
out = sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures/case14_pypower.json"
with open(out, "w") as f:
    json.dump(fixture, f, indent=1)
    f.write("\n")
