"""SNR-constrained design of the auxiliary AWGN loop and the rate lower bound.

The auxiliary loop is

    r = t + eta,   t = B_r z^{-1} r + B_y y',   u' = J z^{-h} r,

with ``eta`` white Gaussian of variance ``sigma_eta_sq``.  The bound on the
rate needed for ``var(z) <= D`` is ``0.5 * log2(1 + phi(D))`` where
``phi(D)`` is the smallest SNR ``var(t) / sigma_eta_sq`` over all LTI
``(B, J)`` compatible with the performance constraint.

Computing ``phi(D)``
--------------------
Move the delay onto the plant.  With ``J = 1`` the encoder sees ``y`` and the
past channel outputs, hence the past noise samples, so every admissible
loop is described by two Youla parameters around the LQG observer: ``Q1``
on the innovation (disturbance path) and ``Q2`` on past noise (the map
``M`` from noise to channel output).  Writing ``a, c`` for the disturbance
contributions to the channel output and to ``var(z)``, and ``b, d`` for the
noise contributions per unit noise variance, the ``J = 1`` loop has

    SNR = a / s + b,     var(z) = c + s d,       s = sigma_eta_sq.

A dynamic decoder ``J`` adds one more freedom: it can whiten the channel
output without changing what the plant sees.  The SNR then drops to
``geomean(S) / s - 1`` where ``S = |T_uw|^2 + s |M|^2`` is the ``J = 1``
channel-output spectrum.  We minimize ``mean log(S / s)`` with ``s``
saturating the constraint, by L-BFGS on FIR coefficients of ``Q1, Q2``
started from the best ``J = 1`` point.  The latter solves a scalar problem:
its optimum is Pareto-optimal in ``(a, c)`` and ``(b, d)`` with a common
weight ``mu``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize, minimize_scalar

from . import lti
from .lqg import LQGDesign, lqg_design, solve_dare
from .lti import (
    EPS_STAB,
    RationalFilter,
    StateSpace,
    UnstableSystemError,
    append,
    delay_augment,
    h2_norm_sq,
    hstack,
    interconnect,
    is_stable,
    series,
    static_gain,
    unit_delay,
)
from .plant import TwoByTwoPlant

__all__ = [
    "LoopDesign",
    "ClosedLoopMaps",
    "YoulaProgram",
    "RatePoint",
    "InfeasibleError",
    "closed_loop_maps",
    "snr_and_variance",
    "build_youla_program",
    "phi_of_D",
    "lower_bound_curve",
    "design_from_rate_point",
    "shaped_design",
    "youla_encoder",
    "innovations_factor",
    "rate_bits",
]

log = logging.getLogger(__name__)

NQ_DEFAULT = 32
NQ_MAX = 256
NQ_STOP_BITS = 1e-3
UNDERFLOW = 1e-12
BT_RTOL = 1e-11


class InfeasibleError(ValueError):
    """``D`` is at or below the performance floor."""


def rate_bits(phi: float) -> float:
    """``0.5 log2(1 + phi)``; computed in nats and converted."""
    return 0.5 * math.log1p(phi) / math.log(2.0)


# ---------------------------------------------------------------------------
# loop description and closed-loop maps


@dataclass(frozen=True)
class LoopDesign:
    """Encoder ``[B_r z^{-1}, B_y]`` (inputs ``[r, y']``), decoder ``J``, noise and delay."""

    encoder: StateSpace
    j: StateSpace
    sigma_eta_sq: float
    h: int

    def __post_init__(self):
        if not self.sigma_eta_sq > 0:
            raise ValueError("noise variance must be positive")
        if self.encoder.shape != (1, 2):
            raise ValueError("encoder must map [r, y] to t")
        if abs(self.encoder.D[0, 0]) > 0:
            raise ValueError("encoder must see the channel output through a unit delay")
        if self.j.shape != (1, 1):
            raise ValueError("J must be SISO")
        if int(self.h) != self.h or self.h < 0:
            raise ValueError("delay must be a nonnegative integer")

    @classmethod
    def from_filters(cls, b_r, b_y, j=1.0, sigma_eta_sq: float = 1.0, h: int = 0) -> "LoopDesign":
        b_r = _ss(b_r)
        b_y = _ss(b_y)
        enc = hstack(series(unit_delay(), b_r), b_y)
        return cls(enc, _ss(j), float(sigma_eta_sq), int(h))

    @property
    def b_r(self) -> StateSpace:
        """``B_r`` itself (the encoder's channel-feedback column times ``z``)."""
        e = self.encoder[:, 0]
        return StateSpace(e.A, e.B, e.C @ e.A, e.C @ e.B)

    @property
    def b_y(self) -> StateSpace:
        return self.encoder[:, 1]

    def scaled(self, alpha: float) -> "LoopDesign":
        """``(B_y, J, sigma^2) -> (alpha B_y, J / alpha, alpha^2 sigma^2)``.

        Channel signals scale by ``alpha``, so ``B_r`` is unchanged.
        """
        e = self.encoder
        enc = StateSpace(e.A, e.B @ np.diag([1.0, alpha]), e.C, e.D @ np.diag([1.0, alpha]))
        j = StateSpace(self.j.A, self.j.B, self.j.C / alpha, self.j.D / alpha)
        return LoopDesign(enc, j, alpha**2 * self.sigma_eta_sq, self.h)


def _ss(x) -> StateSpace:
    if isinstance(x, StateSpace):
        return x
    if isinstance(x, RationalFilter):
        return lti.realize(x)
    return static_gain(x)


@dataclass(frozen=True)
class ClosedLoopMaps:
    """Transfer matrix from ``[eta, w, psi1, psi2]`` to ``[z', y', r, u']``.

    Rows: ``n_z`` rows of ``z'``, then ``y'``, ``r``, ``u'``.  Columns:
    ``eta``, ``n_w`` columns of ``w``, ``psi1`` (added to ``u'`` before the
    delay) and ``psi2`` (added to ``y'`` at the encoder).
    """

    T: StateSpace
    n_z: int
    n_w: int
    stable: bool

    def _rows(self, name):
        nz = self.n_z
        return {"z": slice(0, nz), "y": slice(nz, nz + 1), "r": slice(nz + 1, nz + 2), "u": slice(nz + 2, nz + 3)}[name]

    def _cols(self, name):
        nw = self.n_w
        return {"eta": slice(0, 1), "w": slice(1, 1 + nw), "psi1": slice(1 + nw, 2 + nw), "psi2": slice(2 + nw, 3 + nw)}[name]

    def block(self, out: str, inp: str) -> StateSpace:
        return self.T[self._rows(out), self._cols(inp)]

    @property
    def M(self) -> StateSpace:
        """``(1 - B_r z^{-1} - G22 J z^{-h} B_y)^{-1}``: the map ``eta -> r``."""
        return self.block("r", "eta")


def closed_loop_maps(plant: TwoByTwoPlant, design: LoopDesign) -> ClosedLoopMaps:
    """Assemble the 16 closed-loop blocks by state-space interconnection.

    Raises
    ------
    ValueError
        If the algebraic loop through the feedthrough terms is singular.
    """
    G = plant.realization
    nz, nw = plant.n_z, plant.n_w
    delay = delay_augment(static_gain(1.0), design.h)
    blocks = append(G, delay, design.j, design.encoder)
    # stacked inputs:  w(nw), p, delay_in, j_in, enc_r, enc_y
    # stacked outputs: z(nz), y, delay_out, j_out, t
    i_w, i_p, i_dl, i_j, i_er, i_ey = 0, nw, nw + 1, nw + 2, nw + 3, nw + 4
    o_z, o_y, o_dl, o_j, o_t = 0, nz, nz + 1, nz + 2, nz + 3
    nin, nout = nw + 5, nz + 4
    # external: eta, w(nw), psi1, psi2
    e_eta, e_w, e_p1, e_p2 = 0, 1, 1 + nw, 2 + nw
    next_ = nw + 3
    K = np.zeros((nin, nout))
    E = np.zeros((nin, next_))
    E[i_w : i_w + nw, e_w : e_w + nw] = np.eye(nw)
    K[i_p, o_dl] = 1.0
    K[i_dl, o_j] = 1.0
    E[i_dl, e_p1] = 1.0
    K[i_j, o_t] = 1.0
    E[i_j, e_eta] = 1.0
    K[i_er, o_t] = 1.0
    E[i_er, e_eta] = 1.0
    K[i_ey, o_y] = 1.0
    E[i_ey, e_p2] = 1.0
    F = np.zeros((nz + 3, nout))
    Gd = np.zeros((nz + 3, next_))
    F[:nz, o_z : o_z + nz] = np.eye(nz)
    F[nz, o_y] = 1.0
    F[nz + 1, o_t] = 1.0
    Gd[nz + 1, e_eta] = 1.0
    F[nz + 2, o_j] = 1.0
    Gd[nz + 2, e_p1] = 1.0
    T = interconnect(blocks, K, E, F, Gd)
    return ClosedLoopMaps(T=T, n_z=nz, n_w=nw, stable=is_stable(T))


def snr_and_variance(plant: TwoByTwoPlant, design: LoopDesign) -> tuple[float, float]:
    """``(var(t)/sigma_eta_sq, var(z'))`` of the auxiliary AWGN loop.

    ``SNR = ||M - 1||^2 + ||B_y M G21||^2 / sigma^2`` and
    ``var(z') = ||G11 + G12 J z^-h B_y M G21||^2 + ||G12 J z^-h M||^2 sigma^2``;
    the transfer functions are the corresponding blocks of the closed-loop map.
    """
    maps = closed_loop_maps(plant, design)
    if not maps.stable:
        raise UnstableSystemError("auxiliary loop is not internally stable")
    s2 = design.sigma_eta_sq
    M_minus_1 = lti.parallel(maps.M, static_gain(1.0), signs=[1.0, -1.0])
    snr = h2_norm_sq(M_minus_1) + h2_norm_sq(maps.block("r", "w")) / s2
    var_z = h2_norm_sq(maps.block("z", "w")) + h2_norm_sq(maps.block("z", "eta")) * s2
    return snr, var_z


# ---------------------------------------------------------------------------
# Youla program


def _toeplitz_gram(s: np.ndarray, n: int) -> np.ndarray:
    """``H[i, j] = mean_w s(w) cos(w (i - j))`` on the grid ``-pi + 2 pi k / N``."""
    r = np.real(np.fft.ifft(s))[:n] * ((-1.0) ** np.arange(n))
    return sla.toeplitz(r)


def _cross(c: np.ndarray, n: int, shift: int = 0) -> np.ndarray:
    """``g[i] = mean_w Re(c(w) e^{-j w (i + shift)})``."""
    N = c.size
    idx = np.arange(shift, shift + n)
    return np.real(np.fft.fft(c)[idx % N] / N * ((-1.0) ** idx))


def _fir_response(q: np.ndarray, N: int, shift: int = 0) -> np.ndarray:
    """``sum_i q_i e^{-j w (i + shift)}`` on the grid ``-pi + 2 pi k / N``."""
    idx = np.arange(shift, shift + q.size)
    v = np.zeros(N)
    np.add.at(v, idx % N, q * (-1.0) ** idx)
    return np.fft.fft(v)


@dataclass(frozen=True)
class _Quadratic:
    """``f(q) = f0 + 2 g.q + q' H q`` over FIR coefficients."""

    f0: float
    g: np.ndarray
    H: np.ndarray

    def __call__(self, q) -> float:
        q = np.asarray(q, dtype=float)
        n = q.size
        return float(self.f0 + 2.0 * self.g[:n] @ q + q @ self.H[:n, :n] @ q)

    def grad(self, q) -> np.ndarray:
        n = q.size
        return 2.0 * (self.g[:n] + self.H[:n, :n] @ q)


@dataclass(frozen=True, eq=False)
class YoulaProgram:
    """Affine closed-loop maps of the auxiliary loop in the Youla parameters.

    Disturbance path: ``T_w(Q1) = T1 + T2 Q1 T3`` maps ``w`` to ``[u; z]``.
    Noise path: ``M = M0 (1 + z^{-1} Q2)`` maps ``eta`` to ``u`` and
    ``G12_a M`` maps it to ``z``.  ``Q1 = Q2 = 0`` is the LQG loop.  Here
    ``u`` is the channel output of the ``J = 1`` loop.

    ``a, b, c, d`` are the quadratics ``||T_uw||^2``, ``||M - 1||^2``,
    ``||T_zw||^2`` and ``||G12_a M||^2``.
    """

    plant: TwoByTwoPlant
    h: int
    nominal: LQGDesign
    omega: np.ndarray
    T1: np.ndarray  # (N, 1 + n_z, n_w)
    T2: np.ndarray  # (N, 1 + n_z, 1)
    T3: np.ndarray  # (N, 1, n_w)
    a: _Quadratic
    c: _Quadratic
    b: _Quadratic
    d: _Quadratic
    n_q_max: int

    @property
    def N(self) -> int:
        return self.omega.size

    @property
    def floor_estimate(self) -> float:
        """Smallest ``var(z)`` reachable by the disturbance path at ``n_q_max``."""
        q = np.linalg.solve(self.c.H, -self.c.g)
        return self.c(q)

    def disturbance_maps(self, q1) -> np.ndarray:
        """Frequency response of ``w -> [u; z]`` for FIR ``Q1`` (nominal offset excluded)."""
        q1 = np.atleast_1d(np.asarray(q1, dtype=float))
        Q = _fir_response(q1, self.N)
        return self.T1 + self.T2 * Q[:, None, None] @ self.T3

    def noise_maps(self, q2) -> np.ndarray:
        """Frequency response of ``eta -> [u - eta; z]`` for FIR ``Q2``."""
        q2 = np.atleast_1d(np.asarray(q2, dtype=float))
        Q = _fir_response(q2, self.N, 1)
        out = self.T2[:, :, 0] * (1.0 + Q)[:, None]
        out[:, 0] -= 1.0
        return out

    def evaluate(self, q1, q2) -> tuple[float, float, float, float]:
        """``(a, b, c, d)`` at the given FIR coefficients."""
        return self.a(q1), self.b(q2), self.c(q1), self.d(q2)

    def pareto(self, mu: float, n_q: int):
        """Minimizers of ``a + mu c`` and ``b + mu d`` at FIR order ``n_q``."""
        q1 = _weighted_ls(self.a, self.c, mu, n_q)
        q2 = _weighted_ls(self.b, self.d, mu, n_q)
        return q1, q2

    def channel_spectrum(self, q1, q2, s: float) -> np.ndarray:
        """Spectral density of the ``J = 1`` channel output on the grid."""
        q1 = np.asarray(q1, dtype=float)
        q2 = np.asarray(q2, dtype=float)
        Tu = self.T1[:, 0, :] + (self.T2[:, 0, :] * self.T3[:, 0, :]) * _fir_response(q1, self.N)[:, None]
        M = self.T2[:, 0, 0] * (1.0 + _fir_response(q2, self.N, 1))
        return np.sum(np.abs(Tu) ** 2, axis=1) + s * np.abs(M) ** 2

    def shaped_snr(self, q1, q2, s: float) -> float:
        """SNR after optimal shaping of the channel output: ``geomean(S) / s - 1``."""
        S = self.channel_spectrum(q1, q2, s)
        return math.expm1(float(np.mean(np.log(S / s))))


def _weighted_ls(f: _Quadratic, g: _Quadratic, mu: float, n: int) -> np.ndarray:
    H = f.H[:n, :n] + mu * g.H[:n, :n]
    rhs = -(f.g[:n] + mu * g.g[:n])
    try:
        return sla.solve(H, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, sla.LinAlgError):
        return np.linalg.lstsq(H, rhs, rcond=None)[0]


def build_youla_program(plant: TwoByTwoPlant, h: int, nominal: LQGDesign | None = None, *, N: int = lti.DEFAULT_GRID, n_q_max: int = NQ_MAX) -> YoulaProgram:
    """Sample the affine maps on a frequency grid and form the Gram matrices.

    Raises
    ------
    UnstableSystemError
        If the nominal state feedback or observer is not stabilizing.
    """
    h = int(h)
    if nominal is None:
        nominal = lqg_design(plant, h)
    if nominal.h != h:
        raise ValueError("nominal design was computed for a different delay")
    G = plant.augmented(h)
    nz, nw = plant.n_z, plant.n_w
    A = G.A
    Bw, Bu = G.B[:, :nw], G.B[:, nw:]
    Cz, Cy = G.C[:nz], G.C[nz:]
    Dzw, Dzu, Dyw = G.D[:nz, :nw], G.D[:nz, nw:], G.D[nz:, :nw]
    F, Lp, q0 = nominal.F, nominal.Lp, nominal.q0
    Af = A + Bu @ F
    Ao = A - Lp @ Cy
    for name, M in (("state feedback", Af), ("observer", Ao)):
        if lti.spectral_radius(M) >= 1.0 - EPS_STAB:
            raise UnstableSystemError(f"nominal {name} is not stabilizing")

    n = A.shape[0]
    T3 = StateSpace(Ao, Bw - Lp @ Dyw, Cy, Dyw)
    T2 = StateSpace(Af, Bu, np.vstack([F, Cz + Dzu @ F]), np.vstack([[[1.0]], Dzu]))
    Fe = -F + q0 * Cy
    T1 = StateSpace(
        np.block([[Af, Bu @ Fe], [np.zeros((n, n)), Ao]]),
        np.vstack([Bw + q0 * Bu @ Dyw, Bw - Lp @ Dyw]),
        np.vstack([np.hstack([F, Fe]), np.hstack([Cz + Dzu @ F, Dzu @ Fe])]),
        np.vstack([q0 * Dyw, Dzw + q0 * Dzu @ Dyw]),
    )
    omega = lti.frequency_grid(N)
    T1f = T1.freq_response(omega)
    T2f = T2.freq_response(omega)
    T3f = T3.freq_response(omega)
    P = T2f @ T3f  # (N, 1 + nz, nw)

    def quad(offset, basis, shift):
        s = np.sum(np.abs(basis) ** 2, axis=tuple(range(1, basis.ndim)))
        cr = np.sum(np.conj(offset) * basis, axis=tuple(range(1, basis.ndim)))
        f0 = float(np.mean(np.sum(np.abs(offset) ** 2, axis=tuple(range(1, offset.ndim)))))
        return _Quadratic(f0, _cross(cr, n_q_max, shift), _toeplitz_gram(s, n_q_max))

    M0 = T2f[:, 0, 0]
    return YoulaProgram(
        plant=plant,
        h=h,
        nominal=nominal,
        omega=omega,
        T1=T1f,
        T2=T2f,
        T3=T3f,
        a=quad(T1f[:, :1, :], P[:, :1, :], 0),
        c=quad(T1f[:, 1:, :], P[:, 1:, :], 0),
        b=quad((M0 - 1.0)[:, None], M0[:, None], 1),
        d=quad(T2f[:, 1:, 0], T2f[:, 1:, 0], 1),
        n_q_max=n_q_max,
    )


# ---------------------------------------------------------------------------
# phi(D)


@dataclass(frozen=True)
class RatePoint:
    """One point of the rate lower-bound curve.

    ``phi_unshaped`` is the SNR of the same Youla parameters with ``J = 1``;
    ``phi`` is the SNR after the decoder shapes the channel output white.
    """

    h: int
    D: float
    phi: float
    rate_lower_bits: float
    q1: np.ndarray = field(repr=False)
    q2: np.ndarray = field(repr=False)
    sigma_eta_sq: float
    sigma_z_sq: float
    n_q: int
    phi_unshaped: float = float("nan")
    status: str = "ok"
    message: str = ""
    design: LoopDesign | None = field(default=None, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_row(self) -> dict:
        return {
            "h": self.h,
            "D": self.D,
            "phi": self.phi,
            "rate_lower_bits": self.rate_lower_bits,
            "sigma_z_analytic": self.sigma_z_sq,
            "sigma_eta_sq": self.sigma_eta_sq,
            "n_q": self.n_q,
        }

    @classmethod
    def failed(cls, h, D, status, message) -> "RatePoint":
        nan = float("nan")
        return cls(int(h), float(D), nan, nan, np.zeros(0), np.zeros(0), nan, nan, 0, nan, status, message)


def _unshaped_snr(program: YoulaProgram, D: float, mu: float, n_q: int):
    q1, q2 = program.pareto(mu, n_q)
    a, b, c, d = program.evaluate(q1, q2)
    slack = D - c
    if slack <= UNDERFLOW * max(1.0, D) or d <= 0.0:
        return math.inf, q1, q2
    return a * d / slack + b, q1, q2


def _unshaped_optimum(program: YoulaProgram, D: float, n_q: int):
    """Best ``J = 1`` design: a scan over ``log10(mu)`` refined by Brent's method."""
    logmu = np.linspace(-16.0, 16.0, 161)
    vals = np.array([_unshaped_snr(program, D, 10.0**lm, n_q)[0] for lm in logmu])
    if not np.any(np.isfinite(vals)):
        return None
    i = int(np.argmin(vals))
    lo = logmu[max(i - 1, 0)]
    hi = logmu[min(i + 1, logmu.size - 1)]
    res = minimize_scalar(
        lambda lm: _unshaped_snr(program, D, 10.0**lm, n_q)[0],
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-9},
    )
    best = res.x if res.fun <= vals[i] else logmu[i]
    return _unshaped_snr(program, D, 10.0**best, n_q)


def _shaped_objective(x: np.ndarray, program: YoulaProgram, D: float, n: int):
    """``mean log(S / s)`` with ``s`` saturating the constraint, and its gradient."""
    q1, q2 = x[:n], x[n:]
    c, d = program.c(q1), program.d(q2)
    slack = D - c
    if slack <= UNDERFLOW * max(1.0, D) or d <= 0.0:
        return math.inf, np.zeros_like(x)
    s = slack / d
    N = program.N
    Pt = program.T2[:, 0, :] * program.T3[:, 0, :]
    M0 = program.T2[:, 0, 0]
    Tu = program.T1[:, 0, :] + Pt * _fir_response(q1, N)[:, None]
    M = M0 * (1.0 + _fir_response(q2, N, 1))
    X = np.sum(np.abs(Tu) ** 2, axis=1)
    St = X / s + np.abs(M) ** 2
    f = float(np.mean(np.log(St)))
    k = float(np.mean(X / St)) / s**2
    ds1 = -program.c.grad(q1) / d
    ds2 = -slack * program.d.grad(q2) / d**2
    g1 = 2.0 * _cross(np.sum(np.conj(Tu) * Pt, axis=1) / St, n, 0) / s - k * ds1
    g2 = 2.0 * _cross(np.conj(M) * M0 / St, n, 1) - k * ds2
    return f, np.concatenate([g1, g2])


def _solve_order(program: YoulaProgram, D: float, n: int, x0: np.ndarray | None):
    phi_unshaped = math.nan
    if x0 is None:
        start = _unshaped_optimum(program, D, n)
        if start is None:
            return None
        phi_unshaped, q1, q2 = start
        x0 = np.concatenate([q1, q2])
    f0 = _shaped_objective(x0, program, D, n)[0]
    if not math.isfinite(f0):
        return None
    res = minimize(
        _shaped_objective,
        x0,
        args=(program, D, n),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-12},
    )
    x = res.x if res.fun <= f0 else x0
    f = min(res.fun, f0)
    return math.expm1(f), x, phi_unshaped


def phi_of_D(program: YoulaProgram, D: float, n_q: int | None = None, *, floor: float | None = None, realize: bool = True) -> RatePoint:
    """Minimal SNR for ``var(z') <= D`` and the rate bound ``0.5 log2(1 + phi)``.

    With ``n_q=None`` the FIR order starts at 32 and doubles until the bound
    moves by less than 1e-3 bits (capped at ``program.n_q_max``).  With
    ``realize=True`` the returned point carries the attaining design.

    Raises
    ------
    InfeasibleError
        If ``D`` does not exceed the performance floor.
    """
    D = float(D)
    if floor is None:
        floor = program.floor_estimate
    if not D > floor * (1.0 + 1e-12):
        raise InfeasibleError(f"D = {D:.6g} is not above the performance floor D_inf({program.h}) = {floor:.6g}")
    orders = [int(n_q)] if n_q is not None else _order_schedule(program.n_q_max)
    if max(orders) > program.n_q_max:
        raise ValueError(f"FIR order exceeds the program's maximum {program.n_q_max}")
    best = None
    x = None
    phi_unshaped = math.nan
    for n in orders:
        if x is not None:
            m = x.size // 2
            x = np.concatenate([x[:m], np.zeros(n - m), x[m:], np.zeros(n - m)])
        sol = _solve_order(program, D, n, x)
        if sol is None:
            break
        phi, x, pu = sol
        if n == orders[0]:
            phi_unshaped = pu
        done = best is not None and abs(rate_bits(best[0]) - rate_bits(phi)) < NQ_STOP_BITS
        if best is None or phi <= best[0]:
            best = (phi, x, n)
        if done:
            break
    if best is None or not math.isfinite(best[0]):
        raise InfeasibleError(f"D = {D:.6g} is infeasible at solver tolerance (floor {floor:.6g})")
    phi, x, n = best
    phi = max(phi, 0.0)
    q1, q2 = x[:n], x[n:]
    c, d = program.c(q1), program.d(q2)
    s = (D - c) / d
    design = shaped_design(program, q1, q2, s) if realize else None
    return RatePoint(
        h=program.h,
        D=D,
        phi=float(phi),
        rate_lower_bits=rate_bits(phi),
        q1=q1,
        q2=q2,
        sigma_eta_sq=float(s),
        sigma_z_sq=float(c + s * d),
        n_q=int(n),
        phi_unshaped=float(phi_unshaped),
        design=design,
    )


def _order_schedule(cap: int):
    n = min(NQ_DEFAULT, cap)
    out = [n]
    while n * 2 <= cap:
        n *= 2
        out.append(n)
    return out


def lower_bound_curve(program: YoulaProgram, D_grid, n_q: int | None = None, *, realize: bool = False) -> list[RatePoint]:
    """One :class:`RatePoint` per ``D``; failures are recorded, not raised."""
    floor = program.floor_estimate
    out = []
    for D in D_grid:
        try:
            out.append(phi_of_D(program, D, n_q, floor=floor, realize=realize))
        except InfeasibleError as exc:
            out.append(RatePoint.failed(program.h, D, "infeasible", str(exc)))
        except (ValueError, np.linalg.LinAlgError) as exc:  # pragma: no cover - defensive
            out.append(RatePoint.failed(program.h, D, "error", str(exc)))
    return out


# ---------------------------------------------------------------------------
# realizing an optimized point


def youla_encoder(program: YoulaProgram, q1, q2) -> StateSpace:
    """Encoder ``[r, y] -> t`` of the ``J = 1`` loop with Youla parameters ``(Q1, Q2)``.

    States: observer of the delayed plant, past innovations, past noise
    samples ``eta = r - t``.
    """
    nom = program.nominal
    G = program.plant.augmented(program.h)
    nz, nw = program.plant.n_z, program.plant.n_w
    A, Bu, Cy = G.A, G.B[:, nw:], G.C[nz:]
    F, Lp = nom.F, nom.Lp
    c1 = np.array(q1, dtype=float).copy()
    if c1.size == 0:
        c1 = np.zeros(1)
    c1[0] += nom.q0
    q2 = np.atleast_1d(np.asarray(q2, dtype=float))
    n, ne, nh = A.shape[0], c1.size - 1, q2.size
    ns = n + ne + nh
    Ct = np.zeros((1, ns))
    Ct[0, :n] = (F - c1[0] * Cy)[0]
    Ct[0, n : n + ne] = c1[1:]
    Ct[0, n + ne :] = q2
    Dt = np.array([[0.0, c1[0]]])
    As = np.zeros((ns, ns))
    Bs = np.zeros((ns, 2))
    As[:n, :n] = A - Lp @ Cy
    Bs[:n, 0] = Bu[:, 0]
    Bs[:n, 1] = Lp[:, 0]
    if ne:
        As[n, :n] = -Cy[0]
        Bs[n, 1] = 1.0
        for i in range(1, ne):
            As[n + i, n + i - 1] = 1.0
    if nh:
        k = n + ne
        # eta = r - t
        As[k, :] = -Ct[0]
        Bs[k, 0] = 1.0
        Bs[k, 1] = -Dt[0, 1]
        for i in range(1, nh):
            As[k + i, k + i - 1] = 1.0
    return StateSpace(As, Bs, Ct, Dt)


def innovations_factor(sys: StateSpace) -> tuple[StateSpace, float]:
    """Monic minimum-phase factor of a single-output spectrum.

    For ``v = sys n`` with ``n`` unit white noise, returns ``Gamma`` and
    ``var_e`` such that ``S_v = var_e |Gamma|^2``.
    """
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    R = D @ D.T
    if sys.n_states == 0:
        return static_gain(1.0), float(R[0, 0])
    sol = solve_dare(A.T, C.T, B @ B.T, R, B @ D.T)
    P = sol.P
    Re = C @ P @ C.T + R
    K = (A @ P @ C.T + B @ D.T) / Re[0, 0]
    return StateSpace(A, K, C, [[1.0]]), float(Re[0, 0])


def shaped_design(program: YoulaProgram, q1, q2, s: float) -> LoopDesign:
    """Design whose channel output is white and whose loop matches ``(Q1, Q2, s)``.

    The decoder is ``J = Gamma``, the innovations factor of the ``J = 1``
    channel output.  The encoder runs the ``J = 1`` encoder on the decoded
    signal ``u = J r`` and subtracts the part of ``u`` predictable from past
    channel outputs, so the plant sees exactly the ``J = 1`` loop.
    """
    base = LoopDesign(youla_encoder(program, q1, q2), static_gain(1.0), s, program.h)
    maps = closed_loop_maps(program.plant, base)
    r = maps.block("r", "eta")
    rw = maps.block("r", "w")
    src = StateSpace(r.A, np.hstack([math.sqrt(s) * r.B, rw.B]), r.C, np.hstack([math.sqrt(s) * r.D, rw.D]))
    gamma, _ = innovations_factor(lti.balanced_truncation(src, BT_RTOL))
    e1 = base.encoder
    nj, ne = gamma.n_states, e1.n_states
    Aj, bj, cj = gamma.A, gamma.B, gamma.C
    A = np.block([[Aj, np.zeros((nj, ne))], [e1.B[:, :1] @ cj, e1.A]])
    B = np.block([[bj, np.zeros((nj, 1))], [e1.B[:, :1], e1.B[:, 1:]]])
    C = np.hstack([-cj, e1.C])
    D = np.array([[0.0, e1.D[0, 1]]])
    return LoopDesign(StateSpace(A, B, C, D), gamma, s, program.h)


def design_from_rate_point(program: YoulaProgram, point: RatePoint) -> LoopDesign:
    """The auxiliary-loop design attaining ``point``."""
    if not point.ok:
        raise ValueError(f"rate point has status {point.status!r}")
    if point.design is not None:
        return point.design
    return shaped_design(program, point.q1, point.q2, point.sigma_eta_sq)
