"""
Rabi oscillations versus photon number
======================================

Collected H photons per pulse and the exciton flip probability as the mean
photon number grows, for a long and a short pulse. The first maximum is the
pi-pulse.
"""

import warnings

import numpy as np

from qdcavity.dynamics import TruncatedEmissionWarning
from qdcavity.experiments import first_local_max, rabi_scan
from qdcavity.model import PulseShape, SystemParams
from qdcavity.pipulse import find_pi_pulse

warnings.simplefilter("ignore", TruncatedEmissionWarning)
p = SystemParams()
grid = np.geomspace(0.5, 20, 24)

for tau in (56.0, 12.0):
    res = rabi_scan(p, PulseShape(tau), grid, check_truncation=False)
    print(f"tau = {tau:g} ps")
    for n, nh, f in zip(grid[::3], res.values["N_H"][::3], res.values["flip_prob"][::3]):
        print(f"  <n> = {n:6.2f}   N_H = {nh:.4f}   flip = {f:.3f}")
    print("  first N_H maximum on the grid:", first_local_max(grid, res.values["N_H"]))
    pi = find_pi_pulse(p, tau)
    print(f"  refined pi-pulse: <n> = {pi.n_pi:.2f}, flip probability {pi.value:.3f}")
