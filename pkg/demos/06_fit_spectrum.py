"""
Extracting g and gamma from a noisy spectrum
============================================

Synthetic data at the device parameters with 1% noise, refitted from a
wrong starting point. The Gauss-Newton covariance gives the error bars.
"""

import numpy as np

from qdcavity.fitting import FitProblem, fit_reflectivity, synthetic_spectrum
from qdcavity.model import SystemParams

truth = SystemParams()
grid = np.linspace(-100, 100, 1001)
data = synthetic_spectrum(truth, grid, noise=0.01, seed=1)

problem = FitProblem(grid, data, initial=truth.replace(g=16.0, gamma=0.6), free=("g", "gamma", "kappa_tot"))
res = fit_reflectivity(problem)
for k in problem.free:
    print(f"{k:10s} = {res.best[k]:8.3f} +/- {res.stderr[k]:.3f}")
print(f"iterations {res.iterations}, converged {res.converged} ({res.message})")
print(f"cooperativity {res.cooperativity:.2f}")
print(res.to_json(indent=1))
