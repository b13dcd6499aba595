"""Delayed LQG: the performance floor ``D_inf(h)`` and a stabilizing controller.

The channel delay is moved onto the plant input (``u`` delayed by ``h``
shift states), after which the problem is ordinary LQG with access to the
current measurement.  Because the disturbance may reach ``z`` and ``y``
directly, the controller estimates both the state and the current
disturbance sample.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .lti import EPS_STAB, StateSpace, h2_norm_sq, interconnect, append, spectral_radius
from .plant import TwoByTwoPlant

__all__ = [
    "RiccatiSolution",
    "NotStabilizableError",
    "solve_dare",
    "LQGDesign",
    "PerformanceFloor",
    "lqg_design",
    "d_inf",
    "stabilizing_controller",
    "closed_loop",
    "closed_loop_variance",
    "is_stabilizing",
]

log = logging.getLogger(__name__)

EPS_MEAS = 1e-10
EPS_CTRL = 1e-10
DARE_TOL = 1e-13


class NotStabilizableError(ValueError):
    pass


@dataclass(frozen=True)
class RiccatiSolution:
    """Stabilizing DARE solution ``P``, gain ``K`` (``u = -K x``) and residual."""

    P: np.ndarray
    K: np.ndarray
    residual: float
    method: str


def _dare_residual(A, B, Q, R, S, P) -> float:
    G = R + B.T @ P @ B
    X = A.T @ P @ B + S
    res = A.T @ P @ A - X @ np.linalg.solve(G, X.T) + Q - P
    return float(np.linalg.norm(res))


def _check_stabilizable(A, B) -> None:
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1.0 - EPS_STAB:
            M = np.hstack([A - lam * np.eye(n), B])
            if np.linalg.matrix_rank(M, tol=1e-9 * max(1.0, np.linalg.norm(M))) < n:
                raise NotStabilizableError(f"(A, B) is not stabilizable: mode {lam:.6g} is unreachable")


def _sda(A, G, H, tol, max_iter):
    """Structure-preserving doubling; returns ``H_inf`` or ``None``."""
    n = A.shape[0]
    eye = np.eye(n)
    for _ in range(max_iter):
        W = eye + G @ H
        try:
            WiA = np.linalg.solve(W, A)
            WiG = np.linalg.solve(W, G)
        except np.linalg.LinAlgError:
            return None
        H_new = H + A.T @ H @ WiA
        G = G + A @ WiG @ A.T
        A = A @ WiA
        H_new = 0.5 * (H_new + H_new.T)
        if not np.all(np.isfinite(H_new)):
            return None
        if np.linalg.norm(H_new - H) <= tol * (1.0 + np.linalg.norm(H_new)):
            return H_new
        H = H_new
    return None


def _fixed_point(A, B, Q, R, S, tol, max_iter):
    P = Q.copy()
    for _ in range(max_iter):
        G = R + B.T @ P @ B
        X = A.T @ P @ B + S
        P_new = A.T @ P @ A - X @ np.linalg.solve(G, X.T) + Q
        P_new = 0.5 * (P_new + P_new.T)
        if not np.all(np.isfinite(P_new)):
            return None
        if np.linalg.norm(P_new - P) <= tol * (1.0 + np.linalg.norm(P_new)):
            return P_new
        P = P_new
    return None


def solve_dare(A, B, Q, R, S=None, *, tol: float = DARE_TOL, max_iter: int = 200, fallback_iter: int = 200_000):
    """Stabilizing solution of ``P = A'PA - (A'PB + S)(R + B'PB)^{-1}(B'PA + S') + Q``.

    Doubling is tried first; plain Riccati iteration is the fallback.

    Raises
    ------
    NotStabilizableError
        If an unstable mode of ``A`` cannot be reached from ``B``.
    RuntimeError
        If neither iteration converges; the message reports the residual.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, m = B.shape
    S = np.zeros((n, m)) if S is None else np.atleast_2d(np.asarray(S, dtype=float)).reshape(n, m)
    if np.min(np.linalg.eigvalsh(0.5 * (R + R.T))) <= 0:
        raise ValueError("R must be positive definite")
    _check_stabilizable(A, B)

    Ri = np.linalg.inv(R)
    A0 = A - B @ Ri @ S.T
    Q0 = Q - S @ Ri @ S.T
    Q0 = 0.5 * (Q0 + Q0.T)
    P = _sda(A0, B @ Ri @ B.T, Q0, tol, max_iter)
    method = "doubling"
    if P is None or not _gain_stabilizes(A, B, R, S, P):
        log.debug("doubling failed; falling back to fixed-point iteration")
        P = _fixed_point(A, B, Q, R, S, tol, fallback_iter)
        method = "fixed-point"
    if P is None:
        raise RuntimeError("DARE iteration did not converge (non-finite iterates)")
    res = _dare_residual(A, B, Q, R, S, P)
    if res > 1e-9 * (1.0 + np.linalg.norm(P)):
        raise RuntimeError(f"DARE did not converge: residual {res:.3e}")
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A + S.T)
    if spectral_radius(A - B @ K) >= 1.0:
        raise NotStabilizableError("no stabilizing DARE solution (detectability fails)")
    return RiccatiSolution(P=P, K=K, residual=res, method=method)


def _gain_stabilizes(A, B, R, S, P) -> bool:
    try:
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A + S.T)
    except np.linalg.LinAlgError:
        return False
    return spectral_radius(A - B @ K) < 1.0


@dataclass(frozen=True)
class LQGDesign:
    """Optimal controller for the delay-augmented plant and its ingredients.

    The controller is written in predictor-observer form
    ``xp+ = A xp + Bu u + Lp e``, ``u = F xp + q0 e`` with innovation
    ``e = y - Cy xp``; ``(F, Lp)`` seed the Youla parameterization.
    """

    h: int
    plant_aug: StateSpace
    control: RiccatiSolution
    filter: RiccatiSolution
    F: np.ndarray
    Lp: np.ndarray
    q0: float
    controller: StateSpace
    value_formula: float


@dataclass(frozen=True)
class PerformanceFloor:
    h: int
    value: float
    controller: StateSpace

    def to_dict(self) -> dict:
        return {"h": self.h, "d_inf": self.value}


def _partition(plant: TwoByTwoPlant, G: StateSpace):
    nz, nw = plant.n_z, plant.n_w
    return dict(
        A=G.A,
        Bw=G.B[:, :nw],
        Bu=G.B[:, nw:],
        Cz=G.C[:nz],
        Cy=G.C[nz:],
        Dzw=G.D[:nz, :nw],
        Dzu=G.D[:nz, nw:],
        Dyw=G.D[nz:, :nw],
    )


def lqg_design(plant: TwoByTwoPlant, h: int, eps_meas: float = EPS_MEAS, eps_ctrl: float = EPS_CTRL) -> LQGDesign:
    """LQG for ``u(k) = K(y^{k-h})`` on the input-delayed plant."""
    G = plant.augmented(h)
    p = _partition(plant, G)
    A, Bw, Bu, Cz, Cy, Dzw, Dzu, Dyw = (p[k] for k in ("A", "Bw", "Bu", "Cz", "Cy", "Dzw", "Dzu", "Dyw"))
    n, nw = A.shape[0], Bw.shape[1]
    if n == 0:
        raise ValueError("plant has no dynamics; nothing to control")

    R = Dzu.T @ Dzu
    if np.min(np.linalg.eigvalsh(R)) <= 0:
        R = R + eps_ctrl * np.eye(R.shape[0])
    ctrl = solve_dare(A, Bu, Cz.T @ Cz, R, Cz.T @ Dzu)

    V = Dyw @ Dyw.T
    if np.min(np.linalg.eigvalsh(V)) <= 0:
        # noise-free measurement channel
        V = V + eps_meas * np.eye(V.shape[0])
    filt = solve_dare(A.T, Cy.T, Bw @ Bw.T, V, Bw @ Dyw.T)
    Sigma = filt.P

    P = ctrl.P
    Rt = R + Bu.T @ P @ Bu
    Lx = -np.linalg.solve(Rt, Dzu.T @ Cz + Bu.T @ P @ A)
    Lw = -np.linalg.solve(Rt, Dzu.T @ Dzw + Bu.T @ P @ Bw)
    L = np.hstack([Lx, Lw])

    # measurement update for v = [x; w] given y^k
    Vp = np.block([[Sigma, np.zeros((n, nw))], [np.zeros((nw, n)), np.eye(nw)]])
    Cv = np.hstack([Cy, Dyw])
    Sy = Cv @ Vp @ Cv.T + (V - Dyw @ Dyw.T)
    Kf = Vp @ Cv.T @ np.linalg.inv(Sy)
    Sigma_v = Vp - Kf @ Cv @ Vp

    E1 = np.vstack([np.eye(n), np.zeros((nw, n))])
    AB = np.hstack([A, Bw])
    Fv = AB + Bu @ L
    Ac = Fv @ (E1 - Kf @ Cy)
    Bc = Fv @ Kf
    Cc = L @ (E1 - Kf @ Cy)
    Dc = L @ Kf
    controller = StateSpace(Ac, Bc, Cc, Dc)

    Phi_ww = Dzw.T @ Dzw + Bw.T @ P @ Bw
    X = Dzw.T @ Dzu + Bw.T @ P @ Bu
    Phi_ww = Phi_ww - X @ np.linalg.solve(Rt, X.T)
    value = float(np.trace(Phi_ww) + np.trace(L.T @ Rt @ L @ Sigma_v))

    return LQGDesign(
        h=int(h),
        plant_aug=G,
        control=ctrl,
        filter=filt,
        F=Lx,
        Lp=AB @ Kf,
        q0=float(Dc[0, 0]),
        controller=controller,
        value_formula=value,
    )


def closed_loop(plant_aug: StateSpace, controller: StateSpace, n_w: int, n_z: int) -> StateSpace:
    """Map ``w -> [z; u]`` of the (augmented) plant in feedback with ``controller``."""
    blocks = append(plant_aug, controller)
    # stacked inputs [w; u; y_c], outputs [z; y; u_c]
    nin = n_w + 2
    nout = n_z + 2
    K = np.zeros((nin, nout))
    K[n_w, n_z + 1] = 1.0  # plant u <- controller output
    K[n_w + 1, n_z] = 1.0  # controller input <- plant y
    E = np.zeros((nin, n_w))
    E[:n_w, :] = np.eye(n_w)
    F = np.zeros((n_z + 1, nout))
    F[:n_z, :n_z] = np.eye(n_z)
    F[n_z, n_z + 1] = 1.0
    return interconnect(blocks, K, E, F)


def closed_loop_variance(plant: TwoByTwoPlant, h: int, controller: StateSpace) -> float:
    """Steady-state variance of ``z`` with ``controller`` acting on ``y^{k-h}``."""
    cl = closed_loop(plant.augmented(h), controller, plant.n_w, plant.n_z)
    return h2_norm_sq(cl[: plant.n_z, :])


def d_inf(plant: TwoByTwoPlant, h: int) -> PerformanceFloor:
    """Best steady-state variance of ``z`` with ``h``-step delayed measurements.

    The reported value is the variance achieved by the returned controller,
    evaluated through the closed-loop Lyapunov equation.
    """
    if int(h) != h or h < 0:
        raise ValueError(f"delay must be a nonnegative integer, got {h}")
    design = lqg_design(plant, int(h))
    value = closed_loop_variance(plant, int(h), design.controller)
    return PerformanceFloor(h=int(h), value=value, controller=design.controller)


def is_stabilizing(plant: TwoByTwoPlant, h: int, controller: StateSpace) -> bool:
    """True iff ``controller`` internally stabilizes the ``h``-delayed loop."""
    cl = closed_loop(plant.augmented(h), controller, plant.n_w, plant.n_z)
    return spectral_radius(cl) < 1.0 - EPS_STAB


def stabilizing_controller(plant: TwoByTwoPlant, h: int) -> StateSpace:
    """Observer-based controller built from the LQG Riccati solutions."""
    ctrl = lqg_design(plant, int(h)).controller
    cl = closed_loop(plant.augmented(h), ctrl, plant.n_w, plant.n_z)
    rho = spectral_radius(cl)
    if rho >= 1.0 - EPS_STAB:
        raise NotStabilizableError(f"controller does not stabilize the loop (radius {rho:.6g})")
    return ctrl
