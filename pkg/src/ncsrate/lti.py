"""Discrete-time LTI machinery.

Rational SISO filters, state-space realizations, stability tests, frequency
responses, spectral densities, H2 norms and delay augmentation.  All system
algebra (series, parallel, feedback) is done on realizations rather than on
polynomial coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

__all__ = [
    "EPS_STAB",
    "RationalFilter",
    "StateSpace",
    "SpectrumGrid",
    "UnstableSystemError",
    "realize",
    "is_stable",
    "spectral_radius",
    "h2_norm_sq",
    "impulse_response",
    "frequency_grid",
    "psd_output",
    "delay_augment",
    "series",
    "parallel",
    "hstack",
    "vstack",
    "append",
    "inverse",
    "static_gain",
    "unit_delay",
    "interconnect",
    "minreal",
    "balanced_truncation",
]

EPS_STAB = 1e-9
DEFAULT_GRID = 2**14


class UnstableSystemError(ValueError):
    """Raised when an operation needs a strictly stable system."""


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RationalFilter:
    """SISO rational transfer function in z.

    Coefficients are in descending powers of z.  The denominator is
    normalized to be monic and leading zeros are stripped.
    """

    num: np.ndarray
    den: np.ndarray

    def __init__(self, num: Sequence[float], den: Sequence[float] = (1.0,)):
        num = np.trim_zeros(np.atleast_1d(np.asarray(num, dtype=float)), "f")
        den = np.trim_zeros(np.atleast_1d(np.asarray(den, dtype=float)), "f")
        if den.size == 0:
            raise ValueError("denominator must have a nonzero coefficient")
        if num.size == 0:
            num = np.zeros(1)
        lead = den[0]
        object.__setattr__(self, "num", _frozen(num / lead))
        object.__setattr__(self, "den", _frozen(den / lead))

    @property
    def num_degree(self) -> int:
        return -1 if not np.any(self.num) else self.num.size - 1

    @property
    def den_degree(self) -> int:
        return self.den.size - 1

    @property
    def is_proper(self) -> bool:
        return self.num_degree <= self.den_degree

    @property
    def is_strictly_proper(self) -> bool:
        return self.num_degree < self.den_degree

    @property
    def is_zero(self) -> bool:
        return not np.any(self.num)

    def poles(self) -> np.ndarray:
        return np.roots(self.den)

    def freq_response(self, omega) -> np.ndarray:
        z = np.exp(1j * np.asarray(omega, dtype=float))
        return np.polyval(self.num, z) / np.polyval(self.den, z)

    def to_dict(self) -> dict:
        return {"num": self.num.tolist(), "den": self.den.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RationalFilter":
        return cls(d["num"], d.get("den", [1.0]))

    def __repr__(self) -> str:
        return f"RationalFilter(num={self.num.tolist()}, den={self.den.tolist()})"


@dataclass(frozen=True)
class StateSpace:
    """Discrete-time realization ``x+ = A x + B u``, ``y = C x + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __init__(self, A, B, C, D):
        D = np.atleast_2d(np.asarray(D, dtype=float))
        p, m = D.shape
        A = np.asarray(A, dtype=float)
        n = 0 if A.size == 0 else A.shape[0]
        A = A.reshape(n, n)
        B = np.asarray(B, dtype=float).reshape(n, m)
        C = np.asarray(C, dtype=float).reshape(p, n)
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "D", _frozen(D))

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.D.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.D.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.D.shape

    def poles(self) -> np.ndarray:
        if self.n_states == 0:
            return np.zeros(0, dtype=complex)
        return np.linalg.eigvals(self.A)

    def freq_response(self, omega) -> np.ndarray:
        """Response samples with shape ``(len(omega), p, m)``."""
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        p, m = self.shape
        out = np.empty((omega.size, p, m), dtype=complex)
        out[:] = self.D
        n = self.n_states
        if n == 0:
            return out
        # Diagonalize once when the eigenbasis is well conditioned; otherwise
        # back-substitute through the complex Schur form for all frequencies.
        z = np.exp(1j * omega)
        w, V = np.linalg.eig(self.A)
        if np.linalg.cond(V) < 1e8:
            CV = self.C @ V
            VB = np.linalg.solve(V, self.B)
            out += np.einsum("pn,fn,nm->fpm", CV, 1.0 / (z[:, None] - w[None, :]), VB)
            return out
        T, U = sla.schur(self.A, output="complex")
        Bt = U.conj().T @ self.B
        Ct = self.C @ U
        chunk = max(1, 2**22 // (n * m))
        for s in range(0, z.size, chunk):
            zc = z[s : s + chunk]
            X = np.empty((zc.size, n, m), dtype=complex)
            for i in range(n - 1, -1, -1):
                rhs = Bt[i] + np.einsum("j,fjm->fm", T[i, i + 1 :], X[:, i + 1 :, :])
                X[:, i, :] = rhs / (zc - T[i, i])[:, None]
            out[s : s + chunk] += np.einsum("pn,fnm->fpm", Ct, X)
        return out

    def __getitem__(self, idx) -> "StateSpace":
        rows, cols = idx
        rows = np.atleast_1d(np.arange(self.n_outputs)[rows])
        cols = np.atleast_1d(np.arange(self.n_inputs)[cols])
        return StateSpace(self.A, self.B[:, cols], self.C[rows, :], self.D[np.ix_(rows, cols)])

    def __repr__(self) -> str:
        return f"StateSpace(n={self.n_states}, outputs={self.n_outputs}, inputs={self.n_inputs})"


def static_gain(k) -> StateSpace:
    k = np.atleast_2d(np.asarray(k, dtype=float))
    return StateSpace(np.zeros((0, 0)), np.zeros((0, k.shape[1])), np.zeros((k.shape[0], 0)), k)


def unit_delay(m: int = 1) -> StateSpace:
    """``z^{-1} I_m``."""
    return StateSpace(np.zeros((m, m)), np.eye(m), np.eye(m), np.zeros((m, m)))


def realize(filt: RationalFilter) -> StateSpace:
    """Controllable canonical realization of a proper SISO filter.

    Raises
    ------
    ValueError
        If the numerator degree exceeds the denominator degree.
    """
    if isinstance(filt, StateSpace):
        return filt
    if not filt.is_proper:
        raise ValueError(
            f"improper filter: numerator degree {filt.num_degree} exceeds "
            f"denominator degree {filt.den_degree}; no causal realization exists"
        )
    den = filt.den
    n = den.size - 1
    num = np.concatenate([np.zeros(n + 1 - filt.num.size), filt.num])
    d = num[0]
    if n == 0:
        return static_gain(d)
    # strictly proper remainder  b(z)/a(z) = num/den - d
    b = num[1:] - d * den[1:]
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = b.reshape(1, n)
    return StateSpace(A, B, C, [[d]])


def _as_ss(sys) -> StateSpace:
    if isinstance(sys, StateSpace):
        return sys
    if isinstance(sys, RationalFilter):
        return realize(sys)
    return static_gain(sys)


def spectral_radius(sys_or_A) -> float:
    A = sys_or_A.A if isinstance(sys_or_A, StateSpace) else np.asarray(sys_or_A)
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def is_stable(sys, margin: float = EPS_STAB) -> bool:
    """True iff the spectral radius of ``A`` is below ``1 - margin``.

    Radii within rounding of the boundary count as on it.
    """
    return spectral_radius(_as_ss(sys)) < (1.0 - margin) * (1.0 - 8.0 * np.finfo(float).eps)


def _require_stable(sys: StateSpace, what: str = "system") -> None:
    rho = spectral_radius(sys)
    if not rho < 1.0 - EPS_STAB:
        raise UnstableSystemError(f"{what} is not stable (spectral radius {rho:.6g})")


def h2_norm_sq(sys) -> float:
    """Squared H2 norm via the discrete Lyapunov equation.

    Equals the summed impulse-response energy, i.e. the steady-state output
    variance under unit-variance white input on every channel.
    """
    sys = _as_ss(sys)
    _require_stable(sys, "H2 norm undefined:")
    val = float(np.sum(sys.D**2))
    if sys.n_states:
        P = sla.solve_discrete_lyapunov(sys.A, sys.B @ sys.B.T)
        P = 0.5 * (P + P.T)
        val += float(np.trace(sys.C @ P @ sys.C.T))
    return val


def impulse_response(sys, n: int) -> np.ndarray:
    """Markov parameters ``h[0..n-1]`` with shape ``(n, p, m)``."""
    sys = _as_ss(sys)
    p, m = sys.shape
    h = np.zeros((n, p, m))
    if n == 0:
        return h
    h[0] = sys.D
    X = sys.B.copy()
    for k in range(1, n):
        h[k] = sys.C @ X
        X = sys.A @ X
    return h


def frequency_grid(N: int = DEFAULT_GRID) -> np.ndarray:
    """Uniform grid ``-pi + 2 pi k / N``; ``N`` must be a power of two."""
    if N < 2 or N & (N - 1):
        raise ValueError(f"grid size must be a power of two, got {N}")
    return -np.pi + 2.0 * np.pi * np.arange(N) / N


@dataclass(frozen=True)
class SpectrumGrid:
    """Frequency responses of SISO filters sampled on a uniform grid.

    ``responses`` has shape ``(n_filters, N)``.
    """

    omega: np.ndarray
    responses: np.ndarray
    stable: tuple = field(default=())

    @classmethod
    def from_systems(cls, systems, N: int = DEFAULT_GRID) -> "SpectrumGrid":
        omega = frequency_grid(N)
        resp, flags = [], []
        for s in systems:
            s = _as_ss(s)
            if s.shape != (1, 1):
                raise ValueError("SpectrumGrid holds SISO responses only")
            resp.append(s.freq_response(omega)[:, 0, 0])
            flags.append(is_stable(s))
        return cls(_frozen_c(omega), _frozen_c(np.array(resp)), tuple(flags))

    @property
    def N(self) -> int:
        return self.omega.size

    def is_conjugate_symmetric(self, tol: float = 1e-9) -> bool:
        # omega_k and omega_{N-k} are mirror images; omega_0 = -pi pairs with itself
        r = self.responses
        mirrored = r[:, (-np.arange(self.N)) % self.N]
        scale = max(1.0, float(np.max(np.abs(r))))
        return bool(np.max(np.abs(mirrored - np.conj(r))) <= tol * scale)

    def mean(self, values) -> float:
        """``(1/2pi) * integral`` of a periodic grid function (trapezoid rule)."""
        # On a closed periodic grid the trapezoid rule is the plain average.
        return float(np.mean(values))


def _frozen_c(a) -> np.ndarray:
    arr = np.array(a)
    arr.setflags(write=False)
    return arr


def psd_output(grid: SpectrumGrid, variances) -> np.ndarray:
    """PSD of the sum of independent white inputs through the grid's filters.

    ``S(w) = sum_i var_i |F_i(e^{jw})|^2``.
    """
    var = np.broadcast_to(np.asarray(variances, dtype=float), (grid.responses.shape[0],))
    if np.any(var < 0):
        raise ValueError("input variances must be nonnegative")
    if grid.stable and not all(grid.stable):
        bad = [i for i, s in enumerate(grid.stable) if not s]
        raise UnstableSystemError(f"contributing filters {bad} are unstable")
    return np.real(var @ np.abs(grid.responses) ** 2)


def delay_augment(sys, h: int, inputs=None) -> StateSpace:
    """Realization of ``z^{-h} sys`` with ``h`` shift states per delayed input.

    ``inputs`` selects which input channels are delayed (default: all).
    """
    sys = _as_ss(sys)
    if int(h) != h or h < 0:
        raise ValueError(f"delay must be a nonnegative integer, got {h}")
    h = int(h)
    m = sys.n_inputs
    chans = list(range(m)) if inputs is None else list(np.atleast_1d(inputs))
    if h == 0 or not chans:
        return sys
    n = sys.n_states
    nd = h * len(chans)
    A = np.zeros((n + nd, n + nd))
    B = np.zeros((n + nd, m))
    A[:n, :n] = sys.A
    B[:n, :] = sys.B
    C = np.hstack([sys.C, np.zeros((sys.n_outputs, nd))])
    D = sys.D.copy()
    for c, j in enumerate(chans):
        base = n + c * h
        # chain: s_1+ = u_j, s_{i+1}+ = s_i, system sees s_h
        B[base, j] = 1.0
        B[:n, j] = 0.0
        D[:, j] = 0.0
        for i in range(1, h):
            A[base + i, base + i - 1] = 1.0
        A[:n, base + h - 1] = sys.B[:, j]
        C[:, base + h - 1] = sys.D[:, j]
    return StateSpace(A, B, C, D)


def append(*systems) -> StateSpace:
    """Block-diagonal stacking (inputs and outputs concatenated)."""
    systems = [_as_ss(s) for s in systems]
    A = sla.block_diag(*[s.A for s in systems]) if systems else np.zeros((0, 0))
    B = sla.block_diag(*[s.B for s in systems])
    C = sla.block_diag(*[s.C for s in systems])
    D = sla.block_diag(*[s.D for s in systems])
    n = sum(s.n_states for s in systems)
    p = sum(s.n_outputs for s in systems)
    m = sum(s.n_inputs for s in systems)
    return StateSpace(np.reshape(A, (n, n)), np.reshape(B, (n, m)), np.reshape(C, (p, n)), np.reshape(D, (p, m)))


def hstack(*systems) -> StateSpace:
    """``[S1 S2 ...]``: shared output, concatenated inputs."""
    big = append(*systems)
    systems = [_as_ss(s) for s in systems]
    p = systems[0].n_outputs
    if any(s.n_outputs != p for s in systems):
        raise ValueError("hstack needs equal output counts")
    S = np.hstack([np.eye(p)] * len(systems))
    return StateSpace(big.A, big.B, S @ big.C, S @ big.D)


def vstack(*systems) -> StateSpace:
    """``[S1; S2; ...]``: shared input, concatenated outputs."""
    big = append(*systems)
    systems = [_as_ss(s) for s in systems]
    m = systems[0].n_inputs
    if any(s.n_inputs != m for s in systems):
        raise ValueError("vstack needs equal input counts")
    S = np.vstack([np.eye(m)] * len(systems))
    return StateSpace(big.A, big.B @ S, big.C, big.D @ S)


def parallel(*systems, signs=None) -> StateSpace:
    """Sum of equally-shaped systems, optionally with per-term signs."""
    systems = [_as_ss(s) for s in systems]
    signs = [1.0] * len(systems) if signs is None else list(signs)
    p, m = systems[0].shape
    big = append(*systems)
    L = np.hstack([sg * np.eye(p) for sg in signs])
    R = np.vstack([np.eye(m)] * len(systems))
    return StateSpace(big.A, big.B @ R, L @ big.C, L @ big.D @ R)


def series(*systems) -> StateSpace:
    """Cascade in signal-flow order: ``series(S1, S2)`` is ``S2 * S1``."""
    systems = [_as_ss(s) for s in systems]
    out = systems[0]
    for s in systems[1:]:
        if s.n_inputs != out.n_outputs:
            raise ValueError("series: dimension mismatch")
        n1, n2 = out.n_states, s.n_states
        A = np.block([[out.A, np.zeros((n1, n2))], [s.B @ out.C, s.A]])
        B = np.vstack([out.B, s.B @ out.D])
        C = np.hstack([s.D @ out.C, s.C])
        D = s.D @ out.D
        out = StateSpace(A, B, C, D)
    return out


def inverse(sys) -> StateSpace:
    """Inverse of a square system with invertible feedthrough."""
    sys = _as_ss(sys)
    try:
        Di = np.linalg.inv(sys.D)
    except np.linalg.LinAlgError as exc:
        raise ValueError("inverse needs an invertible feedthrough (biproper system)") from exc
    return StateSpace(sys.A - sys.B @ Di @ sys.C, sys.B @ Di, -Di @ sys.C, Di)


def interconnect(blocks: StateSpace, K, E, F, G=None) -> StateSpace:
    """Close a generic interconnection around stacked blocks.

    ``blocks`` maps stacked inputs ``v`` to stacked outputs ``b``.  The wiring
    is ``v = K b + E d`` for external inputs ``d`` and the reported outputs are
    ``o = F b + G d``.

    Raises
    ------
    ValueError
        If ``I - D K`` is singular (ill-posed algebraic loop).
    """
    blocks = _as_ss(blocks)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    E = np.atleast_2d(np.asarray(E, dtype=float))
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.zeros((F.shape[0], E.shape[1])) if G is None else np.atleast_2d(np.asarray(G, dtype=float))
    A, B, C, D = blocks.A, blocks.B, blocks.C, blocks.D
    loop = np.eye(D.shape[0]) - D @ K
    if np.linalg.cond(loop) > 1e12:
        raise ValueError("ill-posed interconnection: I - D K is singular")
    Li = np.linalg.inv(loop)
    Ccl = Li @ C
    Dcl = Li @ D @ E
    return StateSpace(
        A + B @ K @ Ccl,
        B @ K @ Dcl + B @ E,
        F @ Ccl,
        F @ Dcl + G,
    )


def _orth_krylov(A: np.ndarray, B: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis of the reachable subspace of ``(A, B)``."""
    n = A.shape[0]
    scale = max(1.0, np.linalg.norm(B), np.linalg.norm(A))
    V = np.zeros((n, 0))
    block = B
    for _ in range(n + 1):
        cand = np.hstack([V, block])
        if cand.shape[1] == 0:
            break
        U, s, _ = np.linalg.svd(cand, full_matrices=False)
        r = int(np.sum(s > tol * scale))
        if r == V.shape[1]:
            break
        V = U[:, :r]
        block = A @ V
        if r == n:
            break
    return V


def minreal(sys, tol: float = 1e-10) -> StateSpace:
    """Remove uncontrollable and unobservable states by orthogonal projection."""
    sys = _as_ss(sys)
    if sys.n_states == 0:
        return sys
    V = _orth_krylov(sys.A, sys.B, tol)
    A, B, C = V.T @ sys.A @ V, V.T @ sys.B, sys.C @ V
    if A.shape[0] == 0:
        return static_gain(sys.D)
    U = _orth_krylov(A.T, C.T, tol)
    if U.shape[1] == 0:
        return static_gain(sys.D)
    return StateSpace(U.T @ A @ U, U.T @ B, C @ U, sys.D)


def balanced_truncation(sys, rtol: float = 1e-12) -> StateSpace:
    """Square-root balanced truncation of a stable system.

    Keeps the Hankel singular values above ``rtol`` times the largest; the
    H-infinity error is at most twice the sum of the discarded ones.
    """
    sys = _as_ss(sys)
    _require_stable(sys, "balanced truncation input")
    if sys.n_states == 0:
        return sys
    A, B, C = sys.A, sys.B, sys.C
    Wc = sla.solve_discrete_lyapunov(A, B @ B.T)
    Wo = sla.solve_discrete_lyapunov(A.T, C.T @ C)
    Lc = _psd_factor(Wc)
    Lo = _psd_factor(Wo)
    U, hsv, Vt = np.linalg.svd(Lo.T @ Lc)
    if hsv.size == 0 or hsv[0] == 0.0:
        return static_gain(sys.D)
    k = int(np.sum(hsv > rtol * hsv[0]))
    S = np.diag(hsv[:k] ** -0.5)
    T = Lc @ Vt[:k].T @ S
    Ti = S @ U[:, :k].T @ Lo.T
    return StateSpace(Ti @ A @ T, Ti @ B, C @ T, sys.D)


def _psd_factor(W: np.ndarray) -> np.ndarray:
    """``L`` with ``L L' = W`` for a symmetric positive semidefinite ``W``."""
    w, V = np.linalg.eigh(0.5 * (W + W.T))
    return V * np.sqrt(np.clip(w, 0.0, None))
