"""
Plant, delay and the performance floor
======================================

The benchmark plant has an unstable pole at 2.  For each channel delay
``h`` we compute the best achievable variance ``d_inf(h)`` and check it
against a long closed-loop simulation.
"""

# %%
import numpy as np
from scipy import signal

from ncsrate.lqg import closed_loop, d_inf
from ncsrate.lti import is_stable
from ncsrate.plant import benchmark_plant

plant = benchmark_plant()
print("open-loop poles:", np.linalg.eigvals(plant.realization.A))
print("open-loop stable:", is_stable(plant.realization))

# %%
# Floors grow quickly with the delay because the unstable mode evolves
# unobserved for ``h`` extra samples.
rng = np.random.default_rng(0)
for h in range(5):
    fl = d_inf(plant, h)
    cl = closed_loop(plant.augmented(h), fl.controller, plant.n_w, plant.n_z)[:1, :]
    num, den = signal.ss2tf(cl.A, cl.B, cl.C, cl.D)
    z = signal.lfilter(num[0], den, rng.standard_normal(300_000))[5000:]
    print(f"h={h}  d_inf={fl.value:10.5f}  simulated={np.mean(z**2):10.5f}")
