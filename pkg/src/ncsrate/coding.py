"""Dithered-quantizer simulation of the coding loop and empirical rates.

The AWGN of the auxiliary loop is replaced by a subtractively dithered
uniform quantizer with step ``delta``.  Encoder and decoder share the dither
sequence (generated from a common seed), so the reconstruction error is
uniform on ``[-delta/2, delta/2)`` and independent of the quantizer input.
The integer symbol stream is what crosses the channel; its conditional
empirical entropy stands in for the average codeword length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import stats

from . import _kernels
from .plant import TwoByTwoPlant
from .snr import LoopDesign, RatePoint

__all__ = [
    "UniformQuantizer",
    "SymbolTrace",
    "OperationalRatePoint",
    "SimulationDivergedError",
    "simulate_quantized_loop",
    "simulate_awgn_loop",
    "empirical_entropy_rate",
    "batch_means_halfwidth",
    "operational_rate_point",
    "burn_in_length",
]

MIN_CONTEXT_COUNT = 30
N_BATCHES = 20


class SimulationDivergedError(RuntimeError):
    """Loop state exceeded the divergence guard."""

    def __init__(self, step: int):
        super().__init__(f"state magnitude exceeded {_kernels.DIVERGENCE:.0e} at step {step}")
        self.step = step


@dataclass(frozen=True)
class UniformQuantizer:
    """Infinite-level uniform quantizer ``q(x) = delta * round(x / delta)``.

    With ``dither=True`` the encoder adds ``d(k)`` uniform on
    ``[-delta/2, delta/2)`` before rounding and the decoder subtracts it.
    """

    delta: float
    dither: bool = True
    dither_seed: int = 0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("quantizer step must be positive")

    def dither_sequence(self, n: int, seed: int = 0) -> np.ndarray:
        if not self.dither:
            return np.zeros(n)
        rng = np.random.default_rng([int(seed), 1, int(self.dither_seed)])
        return rng.uniform(-0.5 * self.delta, 0.5 * self.delta, n)

    def quantize(self, x, seed: int = 0):
        """Symbols and reconstructions for an open-loop input sequence."""
        x = np.ascontiguousarray(x, dtype=float)
        d = self.dither_sequence(x.size, seed)
        sym = np.empty(x.size, dtype=np.int64)
        rec = np.empty(x.size)
        _kernels.dither_quantize(x, d, float(self.delta), sym, rec)
        return sym, rec


@dataclass(frozen=True, eq=False)
class SymbolTrace:
    """Post-burn-in histories of a simulated run.

    ``u`` is the plant input (the decoder output after the channel delay).
    """

    symbols: np.ndarray
    z: np.ndarray
    y: np.ndarray
    t: np.ndarray
    r: np.ndarray
    u: np.ndarray
    steps: int
    burn_in: int
    seed: int
    h: int
    delta: float = math.nan

    def __len__(self) -> int:
        return self.symbols.size

    @property
    def sigma_z_sq(self) -> float:
        return float(np.mean(np.sum(self.z**2, axis=1)))


def burn_in_length(n_states: int) -> int:
    return max(10 * int(n_states), 1000)


def _run(plant: TwoByTwoPlant, design: LoopDesign, steps: int, seed: int, mode: int, noise_fn, delta: float) -> SymbolTrace:
    G = plant.realization
    nz, nw = plant.n_z, plant.n_w
    h = int(design.h)
    enc, J = design.encoder, design.j
    n_states = G.n_states + enc.n_states + J.n_states + h
    burn = burn_in_length(n_states)
    steps = int(steps)
    if steps <= burn:
        raise ValueError(f"steps ({steps}) must exceed the burn-in ({burn})")
    rng = np.random.default_rng([int(seed), 0])
    w = rng.standard_normal((steps, nw))
    noise = noise_fn(steps)
    Ae = sp.csr_matrix(enc.A)
    Ae.eliminate_zeros()
    n = steps - burn
    z = np.empty((n, nz))
    y, t, r, u = (np.empty(n) for _ in range(4))
    sym = np.zeros(n, dtype=np.int64)
    f = lambda a: np.ascontiguousarray(a, dtype=float)  # noqa: E731
    status = _kernels.simulate_loop(
        f(G.A), f(G.B[:, :nw]), f(G.B[:, nw:]), f(G.C[:nz]), f(G.C[nz:]), f(G.D[:nz, :nw]), f(G.D[:nz, nw:]), f(G.D[nz:, :nw]),
        Ae.indptr.astype(np.int64), Ae.indices.astype(np.int64), f(Ae.data),
        f(enc.B[:, 0]), f(enc.B[:, 1]), f(enc.C[0]), float(enc.D[0, 1]),
        f(J.A), f(J.B[:, 0]), f(J.C[0]), float(J.D[0, 0]),
        h, w, f(noise), mode, float(delta), burn,
        z, y, t, r, u, sym,
    )
    if status >= 0:
        raise SimulationDivergedError(int(status))
    return SymbolTrace(sym, z, y, t, r, u, steps, burn, int(seed), h, float(delta))


def simulate_quantized_loop(plant: TwoByTwoPlant, design: LoopDesign, quantizer: UniformQuantizer, steps: int, seed: int) -> SymbolTrace:
    """Run the loop with the AWGN replaced by ``quantizer``.

    Raises
    ------
    SimulationDivergedError
        If any state magnitude exceeds 1e12.
    """
    return _run(
        plant, design, steps, seed, _kernels.MODE_DITHER,
        lambda n: quantizer.dither_sequence(n, seed), quantizer.delta,
    )


def simulate_awgn_loop(plant: TwoByTwoPlant, design: LoopDesign, steps: int, seed: int) -> SymbolTrace:
    """Run the auxiliary loop with Gaussian channel noise of variance ``design.sigma_eta_sq``."""
    sd = math.sqrt(design.sigma_eta_sq)

    def noise(n):
        return sd * np.random.default_rng([int(seed), 2]).standard_normal(n)

    return _run(plant, design, steps, seed, _kernels.MODE_AWGN, noise, math.nan)


def _entropy_bits(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum() / math.log(2.0))


def empirical_entropy_rate(symbols, m: int = 1) -> float:
    """Order-``m`` conditional empirical entropy ``H(S_k | S_{k-1..k-m})`` in bits.

    Contexts seen fewer than 30 times are pooled into one context.
    """
    s = np.asarray(symbols.symbols if isinstance(symbols, SymbolTrace) else symbols)
    if s.size == 0:
        raise ValueError("empty symbol trace")
    if m < 0:
        raise ValueError("Markov order must be nonnegative")
    if s.size <= m:
        raise ValueError("trace shorter than the context length")
    _, s = np.unique(s, return_inverse=True)
    s = s.ravel().astype(np.int64)
    cur = s[m:]
    if m == 0:
        return _entropy_bits(np.bincount(cur))
    ctx = np.stack([s[m - i - 1 : s.size - i - 1] for i in range(m)], axis=1)
    _, ctx_id, ctx_count = np.unique(ctx, axis=0, return_inverse=True, return_counts=True)
    ctx_id = ctx_id.ravel()
    rare = ctx_count < MIN_CONTEXT_COUNT
    if rare.any():
        pooled = ctx_count.size
        ctx_id = np.where(rare[ctx_id], pooled, ctx_id)
    _, joint_count = np.unique(ctx_id * (int(cur.max()) + 1) + cur, return_counts=True)
    _, marg_count = np.unique(ctx_id, return_counts=True)
    return max(_entropy_bits(joint_count) - _entropy_bits(marg_count), 0.0)


def batch_means_halfwidth(values, level: float = 0.95) -> float:
    """Confidence half-width of the mean of per-batch statistics."""
    v = np.asarray(values, dtype=float)
    k = v.size
    if k < 2:
        return math.nan
    return float(stats.t.ppf(0.5 + level / 2, k - 1) * v.std(ddof=1) / math.sqrt(k))


@dataclass(frozen=True)
class OperationalRatePoint:
    """Empirical rate and variance of the quantized loop at one design point."""

    h: int
    D: float
    delta: float
    rate_bits: float
    sigma_z_emp: float
    ci_rate: float
    ci_var: float
    seed: int
    steps: int
    rate_lower_bits: float = math.nan
    di_bits: float = math.nan
    markov_order: int = 1
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def gap_bits(self) -> float:
        return self.rate_bits - self.rate_lower_bits


def operational_rate_point(
    plant: TwoByTwoPlant,
    h: int,
    D: float,
    rate_point: RatePoint,
    steps: int = 10**6,
    seed: int = 0,
    *,
    m: int = 1,
    verify_di: bool = False,
) -> OperationalRatePoint:
    """Quantize the optimized AWGN loop with ``delta^2 = 12 sigma_eta^2`` and measure it."""
    if not rate_point.ok:
        raise ValueError(f"rate point has status {rate_point.status!r}")
    if rate_point.h != h:
        raise ValueError("rate point was computed for a different delay")
    design = rate_point.design
    if design is None:
        raise ValueError("rate point carries no realizable design")
    delta = math.sqrt(12.0 * rate_point.sigma_eta_sq)
    q = UniformQuantizer(delta, dither=True, dither_seed=int(seed))
    trace = simulate_quantized_loop(plant, design, q, steps, seed)
    rate = empirical_entropy_rate(trace.symbols, m)
    zz = np.sum(trace.z**2, axis=1)
    nb = N_BATCHES
    size = len(trace) // nb
    batch_rates = [empirical_entropy_rate(trace.symbols[i * size : (i + 1) * size], m) for i in range(nb)]
    batch_var = zz[: nb * size].reshape(nb, size).mean(axis=1)
    di = math.nan
    diag = {}
    if verify_di:
        from .info import gaussian_directed_info

        est = gaussian_directed_info(trace.y, trace.u, h)
        di = est.bits
        diag = dict(est.diagnostics)
    return OperationalRatePoint(
        h=int(h),
        D=float(D),
        delta=delta,
        rate_bits=rate,
        sigma_z_emp=float(zz.mean()),
        ci_rate=batch_means_halfwidth(batch_rates),
        ci_var=batch_means_halfwidth(batch_var),
        seed=int(seed),
        steps=int(steps),
        rate_lower_bits=rate_point.rate_lower_bits,
        di_bits=di,
        markov_order=int(m),
        diagnostics=diag,
    )
