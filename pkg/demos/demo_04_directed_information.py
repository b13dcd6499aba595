"""
Directed information of the optimal Gaussian loop
=================================================

In the optimized AWGN loop the decoder output is white at the channel, so
the information flowing from measurements to controls equals the rate
bound.  The empirical Gaussian estimator recovers it from a simulation.
"""

# %%
import numpy as np

from ncsrate.coding import simulate_awgn_loop
from ncsrate.info import directed_info_spectral, gaussian_directed_info
from ncsrate.lqg import d_inf
from ncsrate.lti import frequency_grid
from ncsrate.plant import benchmark_plant
from ncsrate.snr import build_youla_program, closed_loop_maps, phi_of_D

plant = benchmark_plant()
for h in (0, 2):
    point = phi_of_D(build_youla_program(plant, h), 2.0 * d_inf(plant, h).value)
    maps = closed_loop_maps(plant, point.design)
    w = frequency_grid(4096)
    S = point.sigma_eta_sq * np.abs(maps.block("r", "eta").freq_response(w)[:, 0, 0]) ** 2
    S += np.abs(maps.block("r", "w").freq_response(w)[:, 0, 0]) ** 2
    spectral = directed_info_spectral(S, point.sigma_eta_sq, h)
    trace = simulate_awgn_loop(plant, point.design, 400_000, seed=h)
    empirical = gaussian_directed_info(trace.y, trace.u, h)
    print(
        f"h={h}  bound={point.rate_lower_bits:.4f}  spectral={spectral.bits:.4f}  "
        f"empirical={empirical.bits:.4f} (p={empirical.diagnostics['p']})"
    )
