"""
One photon versus a weak coherent pulse
=======================================

A single-photon wavepacket has no vacuum or multi-photon components, so it
flips the exciton more often than a coherent pulse carrying one photon on
average.
"""

from qdcavity.experiments import fock_compare
from qdcavity.model import PulseShape, SystemParams

res = fock_compare(SystemParams(), PulseShape(56.0))
s = res.metadata["summary"]
print(f"Fock peak       {s['fock_peak']:.3f} at {s['fock_peak_time']:.1f} ps")
print(f"coherent <n>=1  {s['coherent_peak']:.3f} at {s['coherent_peak_time']:.1f} ps")
print(f"ratio           {s['ratio']:.3f}")
res.write("fock_compare.csv")
