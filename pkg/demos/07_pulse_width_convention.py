"""
Which width does "a 56 ps pulse" mean?
======================================

The envelope exp(-4 ln2 t^2 / tau^2) has an amplitude FWHM of tau but an
intensity FWHM of tau / sqrt(2). If a quoted pulse length refers to the
intensity, the envelope parameter is sqrt(2) times larger. This script
compares the headline numbers for both readings. Takes about a minute.
"""

import math

from qdcavity.dynamics import evolve_coherent, flip_probability
from qdcavity.fock import evolve_fock, fock_peak
from qdcavity.model import PulseShape, SystemParams
from qdcavity.pipulse import find_pi_pulse

p = SystemParams()
for label, scale in (("amplitude FWHM", 1.0), ("intensity FWHM", math.sqrt(2))):
    print(label)
    for nominal in (56.0, 12.0):
        pi = find_pi_pulse(p, nominal * scale)
        print(f"  {nominal:g} ps: n_pi = {pi.n_pi:.2f}, flip = {pi.value:.3f}")
    pulse = PulseShape(56.0 * scale)
    fock = evolve_fock(p, pulse)
    coh = evolve_coherent(p, pulse, 1.0, t_eval=fock.times)
    pk = fock_peak(fock)[1]
    print(f"  Fock peak {pk:.3f}, ratio to <n>=1 {pk / flip_probability(coh):.3f}")
