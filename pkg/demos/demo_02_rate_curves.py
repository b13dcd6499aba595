"""
Lower-bound rate curves
=======================

For each delay the minimal channel SNR compatible with ``var(z) <= D``
gives the rate bound ``0.5 log2(1 + phi)``.  The curves decrease in ``D``,
increase in ``h`` and flatten at 1 bit, the rate needed just to stabilize a
pole at 2.
"""

# %%
import numpy as np

from ncsrate.lqg import d_inf
from ncsrate.plant import benchmark_plant
from ncsrate.snr import build_youla_program, lower_bound_curve

plant = benchmark_plant()
grid = np.logspace(np.log10(2.0), np.log10(500.0), 8)

# %%
curves = {}
for h in range(5):
    prog = build_youla_program(plant, h, n_q_max=32)
    curves[h] = lower_bound_curve(prog, grid, 32)

print("D        " + "".join(f"   h={h}  " for h in curves))
for i, D in enumerate(grid):
    cells = []
    for h in curves:
        p = curves[h][i]
        cells.append(f"{p.rate_lower_bits:8.4f}" if p.ok else "    --  ")
    print(f"{D:8.2f} " + " ".join(cells))

# %%
# Points below a delay's floor are reported as infeasible rather than raised.
print({h: d_inf(plant, h).value for h in curves})
