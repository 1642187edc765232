"""
Photons per pi-pulse versus pulse length
========================================

For each fine-structure splitting, n_pi(tau) has a minimum: short pulses are
spectrally too broad for the polariton, long ones lose to exciton decay and
to the V -> H rotation. Takes a couple of minutes; pass --quick for a
coarse grid.
"""

import sys

import numpy as np

from qdcavity.experiments import fss_sweep
from qdcavity.model import SystemParams

taus = np.linspace(5, 150, 8 if "--quick" in sys.argv else 20)
res = fss_sweep(SystemParams(), [5.0, 15.0, 30.0], taus, workers=1)
print("tau (ps):", " ".join(f"{t:6.1f}" for t in taus))
for f, row in zip(res.axes["fss"], res.values["n_pi"]):
    print(f"FSS {f:4.0f}:", " ".join(f"{x:6.2f}" for x in row))
for s in res.metadata["summary"]:
    print(f"FSS {s['fss']:4.0f} ueV: minimum {s['min_n_pi']:.2f} photons at {s['argmin_tau']:.1f} ps")
