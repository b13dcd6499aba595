"""
From the Gaussian loop to a digital channel
===========================================

The optimal AWGN loop is turned into a coding scheme by replacing the noise
with a subtractively dithered uniform quantizer of equal variance.  The
symbol stream's conditional entropy estimates the bits per sample a
lossless coder would spend.
"""

# %%
import math

from ncsrate.coding import UniformQuantizer, operational_rate_point, simulate_quantized_loop
from ncsrate.lqg import d_inf
from ncsrate.plant import benchmark_plant
from ncsrate.snr import build_youla_program, phi_of_D

plant = benchmark_plant()
h = 0
D = 3.0 * d_inf(plant, h).value
point = phi_of_D(build_youla_program(plant, h), D)
print(f"phi={point.phi:.4f}  bound={point.rate_lower_bits:.4f} bits  sigma_eta^2={point.sigma_eta_sq:.4f}")

# %%
q = UniformQuantizer(math.sqrt(12 * point.sigma_eta_sq))
trace = simulate_quantized_loop(plant, point.design, q, 200_000, seed=0)
print(f"target D={D:.4f}  simulated var(z)={trace.sigma_z_sq:.4f}")

# %%
op = operational_rate_point(plant, h, D, point, steps=300_000, seed=1)
print(f"entropy rate {op.rate_bits:.4f} +/- {op.ci_rate:.4f} bits, gap {op.gap_bits:.3f} bits")
